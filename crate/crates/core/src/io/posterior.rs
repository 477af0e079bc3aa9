//! Per-frame CTC log-posteriors in text and binary form.
//!
//! Text: first line `T V`, then `T` lines of `V` decimal log-probabilities.
//! Binary: magic `CTCP`, `u32` T, `u32` V (little endian), then `T*V`
//! little-endian `f32` values in row-major order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::TokenId;
use crate::logmath::log_sum_exp;

pub const BINARY_MAGIC: &[u8; 4] = b"CTCP";

/// Allowed deviation of a frame's log-sum-exp from zero.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-4;

const POSITIVE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    frames: usize,
    vocab_size: usize,
    logp: Vec<f32>,
}

impl PosteriorMatrix {
    /// Validates shape, finiteness and per-frame normalization.
    pub fn new(frames: usize, vocab_size: usize, logp: Vec<f32>) -> Result<Self> {
        if frames == 0 {
            return Err(Error::InvalidPosterior("matrix has no frames".into()));
        }
        if vocab_size < 2 {
            return Err(Error::InvalidPosterior(format!("vocab size {vocab_size} < 2")));
        }
        if logp.len() != frames * vocab_size {
            return Err(Error::InvalidPosterior(format!(
                "expected {} values, got {}",
                frames * vocab_size,
                logp.len()
            )));
        }
        let m = PosteriorMatrix {
            frames,
            vocab_size,
            logp,
        };
        for t in 0..frames {
            let row = m.frame(t);
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidPosterior(format!("frame {t}: non-finite value {v}")));
            }
            if let Some(v) = row.iter().find(|&&v| f64::from(v) > POSITIVE_SLACK) {
                return Err(Error::InvalidPosterior(format!("frame {t}: positive log-probability {v}")));
            }
            let lse = log_sum_exp(row.iter().map(|&v| f64::from(v)));
            if lse.abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::Normalization { frame: t, logsumexp: lse });
            }
        }
        Ok(m)
    }

    /// Builds a matrix from linear probabilities, normalizing each row.
    pub fn from_probs(rows: &[Vec<f64>]) -> Result<Self> {
        let vocab_size = rows.first().map_or(0, Vec::len);
        let mut logp = Vec::with_capacity(rows.len() * vocab_size);
        for row in rows {
            if row.len() != vocab_size {
                return Err(Error::InvalidPosterior("ragged rows".into()));
            }
            let total: f64 = row.iter().sum();
            logp.extend(row.iter().map(|p| (p / total).ln().max(-1e9) as f32));
        }
        Self::new(rows.len(), vocab_size, logp)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.logp[t * self.vocab_size..(t + 1) * self.vocab_size]
    }

    #[inline]
    pub fn logp(&self, t: usize, token: TokenId) -> f64 {
        f64::from(self.logp[t * self.vocab_size + token as usize])
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.logp
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::parse("<posteriors>", line, msg);
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(1, format!("malformed header {header:?}")))?;
        let [frames, vocab_size] = dims[..] else {
            return Err(bad(1, format!("malformed header {header:?}")));
        };
        let mut logp = Vec::with_capacity(frames * vocab_size);
        let mut rows = 0;
        for (i, line) in lines {
            let before = logp.len();
            for field in line.split_whitespace() {
                let v: f32 = field
                    .parse()
                    .map_err(|_| bad(i + 1, format!("bad value {field:?}")))?;
                logp.push(v);
            }
            if logp.len() - before != vocab_size {
                return Err(bad(
                    i + 1,
                    format!("row has {} values, expected {vocab_size}", logp.len() - before),
                ));
            }
            rows += 1;
        }
        if rows != frames {
            return Err(bad(1, format!("header declares {frames} frames, found {rows}")));
        }
        Self::new(frames, vocab_size, logp)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.frames, self.vocab_size);
        for t in 0..self.frames {
            let row: Vec<String> = self.frame(t).iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn parse_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != BINARY_MAGIC {
            return Err(Error::InvalidPosterior("missing CTCP header".into()));
        }
        let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let vocab_size = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() != frames * vocab_size * 4 {
            return Err(Error::InvalidPosterior(format!(
                "binary body has {} bytes, expected {}",
                body.len(),
                frames * vocab_size * 4
            )));
        }
        let logp = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(frames, vocab_size, logp)
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.logp.len() * 4);
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&(self.frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.vocab_size as u32).to_le_bytes());
        for v in &self.logp {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Reads either format, sniffing the binary magic.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let parsed = if bytes.starts_with(BINARY_MAGIC) {
            Self::parse_binary(&bytes)
        } else {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::parse(path, 1, "posterior file is neither CTCP nor UTF-8"))?;
            Self::parse_text(&text)
        };
        parsed.map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::parse(path, line, msg),
            other => other,
        })
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_binary()).map_err(|e| Error::io(path, e))
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// File extension used for binary posterior files.
pub const BINARY_EXT: &str = "ctcp";

/// Loads every `*.ctcp` / `*.txt` file in `dir`, keyed by file stem.
pub fn load_posterior_dir(dir: &Path) -> Result<BTreeMap<String, PosteriorMatrix>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str());
        if !matches!(ext, Some(BINARY_EXT) | Some("txt")) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        out.insert(stem.to_owned(), PosteriorMatrix::load(&path)?);
    }
    Ok(out)
}
