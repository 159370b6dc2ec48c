//! Line-oriented chain specification files.
//!
//! ```text
//! # two-state benchmark
//! states 2
//! labels up down
//! kernel
//! 0.7 0.3
//! 0.1 0.9
//! observable 3 -1
//! m-grid 1 2 4 8
//! n-grid 128 256 512
//! replicas 4000
//! seed 42
//! ```
//!
//! `#` starts a comment anywhere on a line. `kernel` is followed by exactly
//! `states` row lines. Only `states`, `kernel` and `observable` are required.

use std::fmt::{self, Write as _};
use std::path::Path;

use log::warn;
use martapprox::{FiniteMarkovChain, Observable};
use sha2::{Digest, Sha256};

use crate::error::{CliError, ParseError};

pub const DEFAULT_M_GRID: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];
pub const DEFAULT_N_GRID: [usize; 8] = [128, 256, 512, 1024, 2048, 4096, 8192, 16384];
pub const DEFAULT_REPLICAS: usize = 4000;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub labels: Option<Vec<String>>,
    pub kernel: Vec<Vec<f64>>,
    pub observable: Vec<f64>,
    pub m_grid: Option<Vec<usize>>,
    pub n_grid: Option<Vec<usize>>,
    pub replicas: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub m_grid: Vec<usize>,
    pub n_grid: Vec<usize>,
    pub replicas: usize,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            m_grid: DEFAULT_M_GRID.to_vec(),
            n_grid: DEFAULT_N_GRID.to_vec(),
            replicas: DEFAULT_REPLICAS,
            seed: DEFAULT_SEED,
        }
    }
}

/// A validated model ready for analysis.
#[derive(Debug, Clone)]
pub struct Model {
    pub chain: FiniteMarkovChain,
    pub observable: Observable,
    pub labels: Option<Vec<String>>,
    /// Mean removed from the observable on input (zero if it was centred).
    pub removed_mean: f64,
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokens(line: &str) -> Vec<Token<'_>> {
    let content = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in content.char_indices() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push(Token {
                    text: &content[s..i],
                    column: content[..s].chars().count() + 1,
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &content[s..],
            column: content[..s].chars().count() + 1,
        });
    }
    out
}

fn parse_value<T: std::str::FromStr>(tok: &Token<'_>, line: usize, what: &str) -> Result<T, ParseError> {
    tok.text
        .parse()
        .map_err(|_| ParseError::new(line, tok.column, format!("expected {what}, found `{}`", tok.text)))
}

fn parse_finite(tok: &Token<'_>, line: usize) -> Result<f64, ParseError> {
    let v: f64 = parse_value(tok, line, "a number")?;
    if !v.is_finite() {
        return Err(ParseError::new(line, tok.column, format!("`{}` is not finite", tok.text)));
    }
    Ok(v)
}

fn end_column(line_text: &str) -> usize {
    line_text.split('#').next().unwrap_or("").trim_end().chars().count() + 1
}

/// Exactly `n` values after the directive.
fn values<T>(
    toks: &[Token<'_>],
    n: usize,
    line: usize,
    line_text: &str,
    parse: impl Fn(&Token<'_>, usize) -> Result<T, ParseError>,
) -> Result<Vec<T>, ParseError> {
    if toks.len() < n {
        return Err(ParseError::new(
            line,
            end_column(line_text),
            format!("expected {n} values, found {}", toks.len()),
        ));
    }
    if toks.len() > n {
        return Err(ParseError::new(
            line,
            toks[n].column,
            format!("expected {n} values, found {}", toks.len()),
        ));
    }
    toks.iter().map(|t| parse(t, line)).collect()
}

fn grid(toks: &[Token<'_>], line: usize, line_text: &str) -> Result<Vec<usize>, ParseError> {
    if toks.is_empty() {
        return Err(ParseError::new(line, end_column(line_text), "expected at least one grid value"));
    }
    let mut out = Vec::with_capacity(toks.len());
    for t in toks {
        let v: usize = parse_value(t, line, "a positive integer")?;
        if v == 0 || out.last().is_some_and(|&p| v <= p) {
            return Err(ParseError::new(line, t.column, "grid values must be positive and strictly increasing"));
        }
        out.push(v);
    }
    Ok(out)
}

fn single<T: std::str::FromStr>(toks: &[Token<'_>], line: usize, line_text: &str, what: &str) -> Result<T, ParseError> {
    let v = values(toks, 1, line, line_text, |t, l| parse_value::<T>(t, l, what))?;
    Ok(v.into_iter().next().expect("one value"))
}

impl ChainSpec {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let lines: Vec<&str> = text.lines().collect();
        let mut states: Option<usize> = None;
        let mut labels = None;
        let mut kernel: Option<Vec<Vec<f64>>> = None;
        let mut observable = None;
        let mut m_grid = None;
        let mut n_grid = None;
        let mut replicas = None;
        let mut seed = None;

        let mut i = 0;
        while i < lines.len() {
            let line_no = i + 1;
            let line_text = lines[i];
            i += 1;
            let toks = tokens(line_text);
            let Some(head) = toks.first() else { continue };
            let rest = &toks[1..];
            let duplicate = |present: bool| {
                if present {
                    Err(ParseError::new(line_no, head.column, format!("duplicate `{}` directive", head.text)))
                } else {
                    Ok(())
                }
            };
            let need_states = || {
                states.ok_or_else(|| ParseError::new(line_no, head.column, format!("`{}` must follow `states`", head.text)))
            };
            match head.text {
                "states" => {
                    duplicate(states.is_some())?;
                    let n: usize = single(rest, line_no, line_text, "a positive integer")?;
                    if n == 0 {
                        return Err(ParseError::new(line_no, rest[0].column, "state count must be positive"));
                    }
                    states = Some(n);
                }
                "labels" => {
                    duplicate(labels.is_some())?;
                    let n = need_states()?;
                    labels = Some(values(rest, n, line_no, line_text, |t, _| Ok(t.text.to_string()))?);
                }
                "kernel" => {
                    duplicate(kernel.is_some())?;
                    let n = need_states()?;
                    if let Some(extra) = rest.first() {
                        return Err(ParseError::new(line_no, extra.column, "kernel rows go on the following lines"));
                    }
                    let mut rows = Vec::with_capacity(n);
                    while rows.len() < n {
                        let Some(&row_text) = lines.get(i) else {
                            return Err(ParseError::new(
                                lines.len() + 1,
                                1,
                                format!("kernel needs {n} rows, found {}", rows.len()),
                            ));
                        };
                        i += 1;
                        let row_toks = tokens(row_text);
                        if row_toks.is_empty() {
                            continue;
                        }
                        rows.push(values(&row_toks, n, i, row_text, parse_finite)?);
                    }
                    kernel = Some(rows);
                }
                "observable" => {
                    duplicate(observable.is_some())?;
                    let n = need_states()?;
                    observable = Some(values(rest, n, line_no, line_text, parse_finite)?);
                }
                "m-grid" => {
                    duplicate(m_grid.is_some())?;
                    m_grid = Some(grid(rest, line_no, line_text)?);
                }
                "n-grid" => {
                    duplicate(n_grid.is_some())?;
                    n_grid = Some(grid(rest, line_no, line_text)?);
                }
                "replicas" => {
                    duplicate(replicas.is_some())?;
                    let r: usize = single(rest, line_no, line_text, "a positive integer")?;
                    if r == 0 {
                        return Err(ParseError::new(line_no, rest[0].column, "replicas must be positive"));
                    }
                    replicas = Some(r);
                }
                "seed" => {
                    duplicate(seed.is_some())?;
                    seed = Some(single(rest, line_no, line_text, "an unsigned 64-bit integer")?);
                }
                other => {
                    return Err(ParseError::new(line_no, head.column, format!("unknown directive `{other}`")));
                }
            }
        }
        let eof = lines.len() + 1;
        if states.is_none() {
            return Err(ParseError::new(eof, 1, "missing `states` directive"));
        }
        let kernel = kernel.ok_or_else(|| ParseError::new(eof, 1, "missing `kernel` block"))?;
        let observable = observable.ok_or_else(|| ParseError::new(eof, 1, "missing `observable` directive"))?;
        Ok(Self {
            labels,
            kernel,
            observable,
            m_grid,
            n_grid,
            replicas,
            seed,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(Self::parse(&text)?)
    }

    pub fn n_states(&self) -> usize {
        self.kernel.len()
    }

    /// Validates the kernel and centres the observable.
    pub fn build(&self) -> Result<Model, CliError> {
        let chain = FiniteMarkovChain::from_rows(&self.kernel)?;
        let (observable, removed_mean) = Observable::centered(&chain, self.observable.clone())?;
        if removed_mean != 0.0 {
            warn!("observable has stationary mean {removed_mean}; centred on input");
        }
        Ok(Model {
            chain,
            observable,
            labels: self.labels.clone(),
            removed_mean,
        })
    }

    /// Spec-file options over the defaults.
    pub fn options(&self) -> RunOptions {
        let d = RunOptions::default();
        RunOptions {
            m_grid: self.m_grid.clone().unwrap_or(d.m_grid),
            n_grid: self.n_grid.clone().unwrap_or(d.n_grid),
            replicas: self.replicas.unwrap_or(d.replicas),
            seed: self.seed.unwrap_or(d.seed),
        }
    }

    /// Canonical text form; `parse(to_text())` reproduces the spec exactly.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

impl fmt::Display for ChainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "states {}", self.n_states())?;
        if let Some(labels) = &self.labels {
            writeln!(f, "labels {}", labels.join(" "))?;
        }
        writeln!(f, "kernel")?;
        for row in &self.kernel {
            writeln!(f, "{}", join(row))?;
        }
        writeln!(f, "observable {}", join(&self.observable))?;
        if let Some(g) = &self.m_grid {
            writeln!(f, "m-grid {}", join(g))?;
        }
        if let Some(g) = &self.n_grid {
            writeln!(f, "n-grid {}", join(g))?;
        }
        if let Some(r) = self.replicas {
            writeln!(f, "replicas {r}")?;
        }
        if let Some(s) = self.seed {
            writeln!(f, "seed {s}")?;
        }
        Ok(())
    }
}

/// SHA-256 over the validated kernel and centred observable.
pub fn chain_digest(chain: &FiniteMarkovChain, observable: &Observable) -> String {
    let mut h = Sha256::new();
    h.update((chain.n_states() as u64).to_le_bytes());
    for v in chain.kernel().transpose().iter() {
        h.update(v.to_le_bytes());
    }
    for v in observable.as_slice() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Chain digest extended with the run options.
pub fn inputs_digest(model: &Model, options: &RunOptions) -> String {
    let mut text = chain_digest(&model.chain, &model.observable);
    let _ = write!(
        text,
        "|m={:?}|n={:?}|r={}|s={}",
        options.m_grid, options.n_grid, options.replicas, options.seed
    );
    hex::encode(Sha256::digest(text.as_bytes()))
}
