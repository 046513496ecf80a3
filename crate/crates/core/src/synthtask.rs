//! Synthetic speech-like transduction task, corpus files and CER.
//!
//! Each grapheme owns a fixed prototype feature vector. An utterance is a
//! random grapheme string; every grapheme emits `frames_per_symbol` copies of
//! its prototype plus i.i.d. Gaussian noise. Repeated graphemes produce runs of
//! identical-mean frames, so the recognizer must count durations.
//!
//! Corpus file layout (whitespace separated, one item per line):
//!
//! ```text
//! seqrl-corpus 1 <feature_dim> <n_utterances> <n_symbols> <symbol>...
//! utt <id> <frames> <transcript_len> <symbol>...
//! <feature_dim floats>            # repeated <frames> times
//! ```
//!
//! Floats are written with 17 significant digits, which round-trips `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::editdist::edit_distance;
use crate::numgrad::Tensor;
use crate::rng::substream;

pub const EOS_SYMBOL: &str = "<eos>";
pub const SOS_SYMBOL: &str = "<sos>";
const MAGIC: &str = "seqrl-corpus";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("contract error: {0}")]
    Contract(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Grapheme inventory with eos and sos appended; ids are dense.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    symbols: Vec<String>,
    eos_id: usize,
    sos_id: usize,
}

impl Vocabulary {
    pub fn new<S: AsRef<str>>(graphemes: &[S]) -> Result<Self> {
        let mut symbols: Vec<String> = graphemes.iter().map(|s| s.as_ref().to_string()).collect();
        if symbols.is_empty() {
            return Err(CorpusError::Config("vocabulary needs at least one grapheme".into()));
        }
        for s in &symbols {
            if s.is_empty() || s.chars().any(char::is_whitespace) || s == EOS_SYMBOL || s == SOS_SYMBOL {
                return Err(CorpusError::Config(format!("invalid grapheme symbol {s:?}")));
            }
        }
        let mut sorted = symbols.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != symbols.len() {
            return Err(CorpusError::Config("grapheme symbols must be unique".into()));
        }
        symbols.push(EOS_SYMBOL.into());
        symbols.push(SOS_SYMBOL.into());
        let n = symbols.len();
        Ok(Vocabulary {
            symbols,
            eos_id: n - 2,
            sos_id: n - 1,
        })
    }

    /// The first `n` lowercase letters.
    pub fn letters(n: usize) -> Result<Self> {
        if n == 0 || n > 26 {
            return Err(CorpusError::Config(format!("letters preset supports 1..=26 graphemes, got {n}")));
        }
        let g: Vec<String> = (b'a'..b'a' + n as u8).map(|c| (c as char).to_string()).collect();
        Self::new(&g)
    }

    /// 26 letters, apostrophe, period, dash, space and noise; with eos that
    /// makes the 32-symbol character set of the large-vocabulary setup.
    pub fn wsj32() -> Self {
        let mut g: Vec<String> = ('a'..='z').map(|c| c.to_string()).collect();
        g.extend(["'", ".", "-", "<space>", "<noise>"].map(String::from));
        Self::new(&g).expect("preset is valid")
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn eos_id(&self) -> usize {
        self.eos_id
    }

    pub fn sos_id(&self) -> usize {
        self.sos_id
    }

    pub fn grapheme_count(&self) -> usize {
        self.symbols.len() - 2
    }

    /// Size of the decoder's output layer: graphemes plus eos.
    pub fn output_size(&self) -> usize {
        self.grapheme_count() + 1
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    /// Render grapheme ids, one character per single-char symbol.
    pub fn render(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| match self.symbol(i) {
                Some("<space>") => " ",
                Some(s) => s,
                None => "?",
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// `[frames x feature_dim]`.
    pub features: Tensor,
    /// Grapheme ids, no eos.
    pub transcript: Vec<usize>,
}

impl Utterance {
    pub fn frames(&self) -> usize {
        self.features.dims2().0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub feature_dim: usize,
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if &self.vocab != vocab {
            return Err(CorpusError::Schema(format!(
                "corpus vocabulary {:?} differs from expected {:?}",
                self.vocab.symbols, vocab.symbols
            )));
        }
        Ok(())
    }

    pub fn mean_reference_length(&self) -> f64 {
        if self.utterances.is_empty() {
            return 0.0;
        }
        self.utterances.iter().map(|u| u.transcript.len()).sum::<usize>() as f64 / self.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    fn stream(self) -> u64 {
        self as u64 + 1
    }
}

/// Parameters of the synthetic task; prototypes depend only on `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub graphemes: usize,
    pub feature_dim: usize,
    pub frames_per_symbol: usize,
    pub noise_sigma: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            graphemes: 8,
            feature_dim: 16,
            frames_per_symbol: 8,
            noise_sigma: 0.3,
            min_len: 3,
            max_len: 12,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames_per_symbol == 0 {
            return Err(CorpusError::Config("frames_per_symbol must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(CorpusError::Config("noise_sigma must be finite and non-negative".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len || self.max_len > 50 {
            return Err(CorpusError::Config(format!(
                "length range {}..={} must lie within 1..=50",
                self.min_len, self.max_len
            )));
        }
        if self.feature_dim == 0 {
            return Err(CorpusError::Config("feature_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn vocab(&self) -> Result<Vocabulary> {
        Vocabulary::letters(self.graphemes)
    }

    /// Prototype of each grapheme, `N(0, 1)` per component.
    pub fn prototypes(&self) -> Vec<Vec<f64>> {
        let mut rng = substream(self.seed, &[0]);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        (0..self.graphemes)
            .map(|_| (0..self.feature_dim).map(|_| normal.sample(&mut rng)).collect())
            .collect()
    }
}

/// Generate `n_utts` utterances of one split. Utterance `i` of a split draws
/// from its own substream, so generation is a pure function of the inputs.
pub fn generate_corpus(config: &SynthConfig, split: Split, n_utts: usize) -> Result<Corpus> {
    config.validate()?;
    let vocab = config.vocab()?;
    let protos = config.prototypes();
    let noise = Normal::new(0.0, config.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let f = config.feature_dim;
    let utterances = (0..n_utts)
        .map(|i| {
            let mut rng = substream(config.seed, &[split.stream(), i as u64]);
            let len = rng.random_range(config.min_len..=config.max_len);
            let transcript: Vec<usize> = (0..len).map(|_| rng.random_range(0..config.graphemes)).collect();
            let frames = len * config.frames_per_symbol;
            let mut values = Vec::with_capacity(frames * f);
            for &g in &transcript {
                for _ in 0..config.frames_per_symbol {
                    for &p in &protos[g] {
                        let n = if config.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                        values.push(p + n);
                    }
                }
            }
            Utterance {
                id: format!("{}{:05}", split.name(), i),
                features: Tensor::matrix(frames, f, values).expect("frames x dim"),
                transcript,
            }
        })
        .collect();
    Ok(Corpus {
        vocab,
        feature_dim: f,
        utterances,
    })
}

/// Character error rate of one hypothesis.
pub fn cer(hyp: &[usize], reference: &[usize]) -> Result<f64> {
    if reference.is_empty() {
        return Err(CorpusError::Contract("CER needs a nonempty reference"));
    }
    Ok(edit_distance(hyp, reference) as f64 / reference.len() as f64)
}

pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn corpus_to_string(corpus: &Corpus) -> String {
    let mut out = String::new();
    let syms = corpus.vocab.symbols();
    let _ = writeln!(
        out,
        "{MAGIC} {FORMAT_VERSION} {} {} {} {}",
        corpus.feature_dim,
        corpus.len(),
        syms.len(),
        syms.join(" ")
    );
    for u in &corpus.utterances {
        let _ = write!(out, "utt {} {} {}", u.id, u.frames(), u.transcript.len());
        for &g in &u.transcript {
            let _ = write!(out, " {}", syms[g]);
        }
        out.push('\n');
        for row in u.features.values().chunks(corpus.feature_dim) {
            let line: Vec<String> = row.iter().map(|&x| format_f64(x)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    fs::write(path, corpus_to_string(corpus))?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    parse_corpus(&fs::read_to_string(path)?)
}

fn parse_err(line: usize, msg: impl Into<String>) -> CorpusError {
    CorpusError::Parse { line, msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what}")))
}

pub fn parse_corpus(text: &str) -> Result<Corpus> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (ln, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some(MAGIC) {
        return Err(parse_err(ln, "not a corpus file"));
    }
    let version: u32 = parse_num(toks.next(), ln, "version")?;
    if version != FORMAT_VERSION {
        return Err(parse_err(ln, format!("unsupported version {version}")));
    }
    let feature_dim: usize = parse_num(toks.next(), ln, "feature_dim")?;
    let n_utts: usize = parse_num(toks.next(), ln, "utterance count")?;
    let n_syms: usize = parse_num(toks.next(), ln, "symbol count")?;
    let syms: Vec<&str> = toks.collect();
    if syms.len() != n_syms || n_syms < 3 {
        return Err(parse_err(ln, format!("expected {n_syms} symbols, found {}", syms.len())));
    }
    if syms[n_syms - 2] != EOS_SYMBOL || syms[n_syms - 1] != SOS_SYMBOL {
        return Err(CorpusError::Schema("vocabulary must end with <eos> <sos>".into()));
    }
    let vocab = Vocabulary::new(&syms[..n_syms - 2]).map_err(|e| CorpusError::Schema(e.to_string()))?;
    if feature_dim == 0 {
        return Err(parse_err(ln, "feature_dim must be positive"));
    }

    let mut utterances = Vec::with_capacity(n_utts);
    for _ in 0..n_utts {
        let (ln, rec) = lines.next().ok_or_else(|| parse_err(ln + 1, "missing utterance record"))?;
        let mut toks = rec.split_whitespace();
        if toks.next() != Some("utt") {
            return Err(parse_err(ln, "expected an utterance record"));
        }
        let id = toks.next().ok_or_else(|| parse_err(ln, "missing utterance id"))?.to_string();
        let frames: usize = parse_num(toks.next(), ln, "frame count")?;
        let tlen: usize = parse_num(toks.next(), ln, "transcript length")?;
        let transcript = toks
            .map(|s| match vocab.id(s) {
                Some(i) if i < vocab.grapheme_count() => Ok(i),
                _ => Err(CorpusError::Schema(format!("line {ln}: symbol {s:?} is not a grapheme"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if transcript.len() != tlen {
            return Err(parse_err(ln, format!("expected {tlen} transcript symbols, found {}", transcript.len())));
        }
        if frames == 0 {
            return Err(parse_err(ln, "utterance needs at least one frame"));
        }
        let mut values = Vec::with_capacity(frames * feature_dim);
        for _ in 0..frames {
            let (fl, row) = lines.next().ok_or_else(|| parse_err(ln + 1, "missing feature row"))?;
            let before = values.len();
            for tok in row.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| parse_err(fl, format!("bad float {tok:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(fl, "non-finite feature value"));
                }
                values.push(v);
            }
            if values.len() - before != feature_dim {
                return Err(parse_err(
                    fl,
                    format!("feature row has {} values, expected {feature_dim}", values.len() - before),
                ));
            }
        }
        utterances.push(Utterance {
            id,
            features: Tensor::matrix(frames, feature_dim, values).expect("validated row widths"),
            transcript,
        });
    }
    if let Some((ln, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(parse_err(ln, format!("unexpected trailing content {extra:?}")));
    }
    Ok(Corpus {
        vocab,
        feature_dim,
        utterances,
    })
}
