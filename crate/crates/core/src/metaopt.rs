//! Gaussian random search over bounded, transformed parameters.
//!
//! Each round draws a batch of independent proposals around the incumbent
//! best point. A proposal perturbs every unfrozen parameter with Gaussian
//! noise in its transformed space (identity, log or logit), maps back and
//! clamps to the bounds. The incumbent changes only on strict improvement.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::parallel;
use crate::rng::{self, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Linear,
    Log,
    Logit,
}

impl Transform {
    pub fn name(self) -> &'static str {
        match self {
            Transform::Linear => "linear",
            Transform::Log => "log",
            Transform::Logit => "logit",
        }
    }

    pub fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Linear => x,
            Transform::Log => x.ln(),
            Transform::Logit => {
                let p = x.clamp(1e-12, 1.0 - 1e-12);
                (p / (1.0 - p)).ln()
            }
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            Transform::Linear => y,
            Transform::Log => y.exp(),
            Transform::Logit => 1.0 / (1.0 + (-y).exp()),
        }
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Transform::Linear),
            "log" => Ok(Transform::Log),
            "logit" => Ok(Transform::Logit),
            _ => Err(Error::Config(format!("unknown transform {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDef {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub transform: Transform,
    pub init: f64,
    /// Proposal standard deviation in transformed space.
    pub sigma: f64,
    pub frozen: bool,
}

impl ParamDef {
    pub fn new(name: &str, lo: f64, hi: f64, transform: Transform, init: f64, sigma: f64) -> Self {
        Self {
            name: name.to_string(),
            lo,
            hi,
            transform,
            init,
            sigma,
            frozen: false,
        }
    }

    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("parameter {}: {m}", self.name)));
        if !(self.lo < self.hi) {
            return bad("lower bound must be below upper bound");
        }
        if !(self.lo..=self.hi).contains(&self.init) {
            return bad("initial value outside bounds");
        }
        if !self.frozen && !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be finite and non-negative");
        }
        match self.transform {
            Transform::Log if self.lo <= 0.0 => bad("log transform needs positive bounds"),
            Transform::Logit if self.lo < 0.0 || self.hi > 1.0 => bad("logit transform needs bounds within [0, 1]"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSpec {
    pub params: Vec<ParamDef>,
}

impl ParamSpec {
    pub fn new(params: Vec<ParamDef>) -> Result<Self> {
        let spec = Self { params };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.iter().try_for_each(ParamDef::validate)
    }

    pub fn initial(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.init).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Copy of the spec with initial values replaced.
    pub fn with_values(&self, values: &[f64]) -> Self {
        let mut out = self.clone();
        for (p, &v) in out.params.iter_mut().zip(values) {
            p.init = v;
        }
        out
    }

    /// One parameter per line: `name lo hi transform init sigma frozen`.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut params = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::parse(source_name, lineno + 1, m);
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 7 {
                return Err(err(format!("expected 7 fields, found {}", toks.len())));
            }
            let num = |i: usize| {
                toks[i]
                    .parse::<f64>()
                    .map_err(|_| err(format!("invalid number {:?}", toks[i])))
            };
            let frozen = match toks[6] {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(err(format!("invalid frozen flag {other:?}"))),
            };
            params.push(ParamDef {
                name: toks[0].to_string(),
                lo: num(1)?,
                hi: num(2)?,
                transform: toks[3].parse().map_err(|e: Error| err(e.to_string()))?,
                init: num(4)?,
                sigma: num(5)?,
                frozen,
            });
        }
        Self::new(params)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.params {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {}",
                p.name,
                p.lo,
                p.hi,
                p.transform.name(),
                p.init,
                p.sigma,
                u8::from(p.frozen)
            );
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Draws one proposal around `center`.
pub fn propose<R: Rng + ?Sized>(spec: &ParamSpec, center: &[f64], rng: &mut R) -> Vec<f64> {
    spec.params
        .iter()
        .zip(center)
        .map(|(p, &c)| {
            if p.frozen || p.sigma == 0.0 {
                return c;
            }
            let mean = p.transform.forward(c);
            let y = Normal::new(mean, p.sigma).expect("validated sigma").sample(rng);
            let x = p.transform.inverse(y);
            if x.is_nan() {
                c
            } else {
                x.clamp(p.lo, p.hi)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub outer_iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            outer_iterations: 40,
            batch_size: 8,
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchState {
    pub best_params: Vec<f64>,
    pub best_score: f64,
    /// Every evaluation in order, starting with the initial point.
    pub history: Vec<(Vec<f64>, f64)>,
    /// Best score after the initial evaluation and after each round.
    pub best_trace: Vec<f64>,
}

const SEARCH_TAG: u64 = 0x5253_4541;

fn score_or_floor<E>(r: std::result::Result<f64, E>) -> f64 {
    match r {
        Ok(s) if !s.is_nan() => s,
        _ => f64::NEG_INFINITY,
    }
}

/// Runs the search. A failing objective scores `-inf` for that proposal.
pub fn run_search<F, E>(objective: F, spec: &ParamSpec, cfg: &SearchConfig) -> Result<SearchState>
where
    F: Fn(&[f64]) -> std::result::Result<f64, E> + Sync,
{
    spec.validate()?;
    let init = spec.initial();
    let init_score = score_or_floor(objective(&init));
    let mut state = SearchState {
        best_params: init.clone(),
        best_score: init_score,
        history: vec![(init, init_score)],
        best_trace: vec![init_score],
    };
    let mut rng: SeededRng = rng::derived_rng(cfg.seed, &[SEARCH_TAG]);
    for _ in 0..cfg.outer_iterations {
        let proposals: Vec<Vec<f64>> = (0..cfg.batch_size)
            .map(|_| propose(spec, &state.best_params, &mut rng))
            .collect();
        let scores = parallel::map_ordered(&proposals, cfg.workers, |p| score_or_floor(objective(p)));
        let mut round_best: Option<usize> = None;
        for (i, &s) in scores.iter().enumerate() {
            if round_best.is_none_or(|b| s > scores[b]) {
                round_best = Some(i);
            }
        }
        if let Some(b) = round_best {
            if scores[b] > state.best_score {
                state.best_score = scores[b];
                state.best_params = proposals[b].clone();
            }
        }
        state.history.extend(proposals.into_iter().zip(scores));
        state.best_trace.push(state.best_score);
    }
    Ok(state)
}
