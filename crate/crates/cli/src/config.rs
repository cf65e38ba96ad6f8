//! Flat key=value experiment configuration.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mtlab_core::error::{invalid, io_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: String,
    /// square | rect:a,b | disk:R | mask:FILE
    pub domain: String,
    pub h: f64,
    pub padding: usize,
    pub n: usize,
    /// eigen | shifted (uses the potential constant as shift)
    pub source: String,
    pub alpha: f64,
    pub epsilon: f64,
    /// Low cutoff; 0 selects λ₁/2.
    pub delta: f64,
    pub ell: f64,
    /// zero | const:c | bump:c | checker:c | file:PATH; c in units of λ₁
    pub potential: String,
    pub eps_grid: Vec<f64>,
    pub q: f64,
    pub out: PathBuf,
    pub seed: u64,
    /// none | desk | quick
    pub preset: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: "suite".into(),
            domain: "square".into(),
            h: 1.0 / 128.0,
            padding: 4,
            n: 25,
            source: "eigen".into(),
            alpha: 4.0 * PI,
            epsilon: 0.25,
            delta: 0.0,
            ell: 1e3,
            potential: "zero".into(),
            eps_grid: vec![0.5, 0.25, 0.1],
            q: 2.0,
            out: PathBuf::from("out"),
            seed: 7,
            preset: "none".into(),
        }
    }
}

fn list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad value for {key}: '{v}'")))
}

impl ExperimentConfig {
    /// Floats are written in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "domain = {}", self.domain);
        let _ = writeln!(s, "h = {:?}", self.h);
        let _ = writeln!(s, "padding = {}", self.padding);
        let _ = writeln!(s, "N = {}", self.n);
        let _ = writeln!(s, "source = {}", self.source);
        let _ = writeln!(s, "alpha = {:?}", self.alpha);
        let _ = writeln!(s, "epsilon = {:?}", self.epsilon);
        let _ = writeln!(s, "delta = {:?}", self.delta);
        let _ = writeln!(s, "ell = {:?}", self.ell);
        let _ = writeln!(s, "potential = {}", self.potential);
        let _ = writeln!(s, "eps_grid = {}", list(&self.eps_grid));
        let _ = writeln!(s, "q = {:?}", self.q);
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "preset = {}", self.preset);
        s
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key.trim() {
            "command" => self.command = v.into(),
            "domain" => self.domain = v.into(),
            "h" => self.h = num(key, v)?,
            "padding" | "pad" => self.padding = num(key, v)?,
            "N" | "n" => self.n = num(key, v)?,
            "source" => self.source = v.into(),
            "alpha" => self.alpha = num(key, v)?,
            "epsilon" | "eps" => self.epsilon = num(key, v)?,
            "delta" => self.delta = num(key, v)?,
            "ell" => self.ell = num(key, v)?,
            "potential" | "V" => self.potential = v.into(),
            "eps_grid" => {
                self.eps_grid = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(|x| num(key, x)).collect::<Result<_>>()?
                }
            }
            "q" => self.q = num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "seed" => self.seed = num(key, v)?,
            "preset" => self.preset = v.into(),
            other => return invalid(format!("unknown config key '{other}'")),
        }
        Ok(())
    }

    /// Applies `key = value` lines over the defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key = value, got '{line}'"),
            })?;
            c.set(k, v).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return invalid(format!("h must be positive, got {}", self.h));
        }
        if self.n == 0 {
            return invalid("N must be at least 1");
        }
        if !["none", "desk", "quick"].contains(&self.preset.as_str()) {
            return invalid(format!("unknown preset '{}'", self.preset));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::default();
        c.h = 1.0 / 3.0;
        c.eps_grid = vec![0.1, 1e-7, 0.3];
        c.potential = "checker:0.5".into();
        let back = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn comments_and_errors() {
        let c = ExperimentConfig::parse("# run\nN = 50 # families\n\nalpha=3.5\n").unwrap();
        assert_eq!((c.n, c.alpha), (50, 3.5));
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(matches!(
            ExperimentConfig::parse("N = x"),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
