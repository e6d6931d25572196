//! Configuration names built from underscore-separated modifier tokens, such
//! as `mafs3_s1_uc1_jm3_bm18ti_pci7_pct0_psX_fb_iw2`.
//!
//! Numeric suffixes are levels that index the value tables below; `psX`
//! leaves the prior scale free for search. Tokens without defined behavior
//! are kept verbatim in [`TemplateConfig::unknown`].
//!
//! | token | field | value for level `n` |
//! |---|---|---|
//! | `jm<n>` | Jelinek-Mercer lambda | 0.9, 0.98, 0.99, 0.995, 0.998, 0.999, 0.9995 for n = 1..7 |
//! | `kdp<n>` | Dirichlet prior mass | 10, 30, 100, 300, 1000, 3000 for n = 1..6 |
//! | `uc<n>` | collection mix in the background | `min(1, 0.5 n)` |
//! | `mc<n>` | min raw feature count | `n` |
//! | `mlc<n>` | min target document count | `n` |
//! | `pct<n>` | precomputed pruning threshold | `0.1 n` |
//! | `pci<n>` | online pruning threshold | `0.1 n` |
//! | `ps<n>` | prior scale, fixed | `0.25 n` |
//! | `psX` | prior scale, searched | init 1, range [0, 2] |
//! | `cs<n>` | hierarchy mix | 0.2 for every level |
//! | `iw<n>` | instantiate weight (transposed output) | `2^n` |
//! | `thr<n>` | worker threads | `n` |
//! | `bm<NN>ti<v>` | bm18ti weighting | `k1 = NN/10`; `b` = 0.5, 0.75, 0.25, 1.0 for v = none, b, c, d |
//! | `bm25c<n>` | bm25c weighting | `k1` = 1.2, 2.0, 2.8, ... for n = 1, 2, 3, ... |
//! | `tiX<n>` | tix weighting, idf exponent searched | `b = 0.1 n` |
//! | `tXiX<n>` | tix weighting, tf and idf exponents searched | `b = 0.1 n` |

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::inference::InstantiateConfig;
use crate::metaopt::{ParamDef, ParamSpec, Transform};
use crate::metrics::Measure;
use crate::sgm::{Background, ModelConfig};
use crate::weighting::{WeightingConfig, WeightingScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorScale {
    Level(u32),
    Search,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightingToken {
    /// `bm<NN>ti` with an optional variant letter.
    BmTi {
        number: u32,
        variant: Option<char>,
    },
    Bm25c(u32),
    TiX(u32),
    TxIx(u32),
}

impl fmt::Display for WeightingToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightingToken::BmTi { number, variant } => {
                write!(f, "bm{number}ti")?;
                if let Some(v) = variant {
                    write!(f, "{v}")?;
                }
                Ok(())
            }
            WeightingToken::Bm25c(n) => write!(f, "bm25c{n}"),
            WeightingToken::TiX(n) => write!(f, "tiX{n}"),
            WeightingToken::TxIx(n) => write!(f, "tXiX{n}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemplateConfig {
    /// Leading `mnb` model token.
    pub mnb: bool,
    pub measure: Option<Measure>,
    /// Letters after the measure name, as in `ndcg5b`.
    pub measure_variant: String,
    pub fold: Option<usize>,
    pub lp: bool,
    pub kd: bool,
    pub nobo: bool,
    pub uniform: bool,
    pub uniform_collection: Option<u32>,
    pub jm: Option<u32>,
    pub kdp: Option<u32>,
    pub weighting: Option<WeightingToken>,
    /// Parsed but without behavior: `fb` is `Some(None)`, `fb2` `Some(Some(2))`.
    pub fb: Option<Option<u32>>,
    /// Parsed but without behavior.
    pub je: bool,
    pub mc: Option<u32>,
    pub mlc: Option<u32>,
    pub pci: Option<u32>,
    pub pct: Option<u32>,
    pub ps: Option<PriorScale>,
    pub cs: Option<u32>,
    pub iw: Option<u32>,
    pub thr: Option<u32>,
    /// Tokens without defined behavior, in input order.
    pub unknown: Vec<String>,
}

fn level(tok: &str, prefix: &str) -> Option<u32> {
    let rest = tok.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

fn parse_measure(tok: &str) -> Option<(Measure, String)> {
    let mut best: Option<Measure> = None;
    for m in Measure::ALL {
        if tok.starts_with(m.name()) && best.is_none_or(|b| m.name().len() > b.name().len()) {
            best = Some(m);
        }
    }
    let m = best?;
    let rest = &tok[m.name().len()..];
    if rest.bytes().all(|b| b.is_ascii_lowercase()) {
        Some((m, rest.to_string()))
    } else {
        None
    }
}

fn parse_weighting(tok: &str) -> Option<WeightingToken> {
    if let Some(n) = level(tok, "bm25c") {
        return Some(WeightingToken::Bm25c(n));
    }
    if let Some(n) = level(tok, "tiX") {
        return Some(WeightingToken::TiX(n));
    }
    if let Some(n) = level(tok, "tXiX") {
        return Some(WeightingToken::TxIx(n));
    }
    let rest = tok.strip_prefix("bm")?;
    let (digits, tail) = rest.split_at(rest.bytes().take_while(u8::is_ascii_digit).count());
    let tail = tail.strip_prefix("ti")?;
    let number = digits.parse().ok()?;
    let variant = match tail.len() {
        0 => None,
        1 if tail.as_bytes()[0].is_ascii_lowercase() => tail.chars().next(),
        _ => return None,
    };
    Some(WeightingToken::BmTi { number, variant })
}

fn set_once<T>(slot: &mut Option<T>, value: T, tok: &str) -> Result<()> {
    if slot.is_some() {
        return Err(Error::Config(format!(
            "template token {tok:?} conflicts with an earlier token"
        )));
    }
    *slot = Some(value);
    Ok(())
}

fn set_flag(slot: &mut bool, tok: &str) -> Result<()> {
    if *slot {
        return Err(Error::Config(format!("template token {tok:?} is repeated")));
    }
    *slot = true;
    Ok(())
}

/// Parses a configuration name. A trailing `.template` is ignored.
pub fn parse_template_name(name: &str) -> Result<TemplateConfig> {
    let name = name.trim();
    let name = name.strip_suffix(".template").unwrap_or(name);
    if name.is_empty() {
        return Err(Error::Config("empty template name".into()));
    }
    let mut t = TemplateConfig::default();
    for (i, tok) in name.split('_').enumerate() {
        if tok.is_empty() {
            return Err(Error::Config(format!("empty token in template name {name:?}")));
        }
        if i == 0 && tok == "mnb" {
            t.mnb = true;
            continue;
        }
        match tok {
            "lp" => set_flag(&mut t.lp, tok)?,
            "kd" => set_flag(&mut t.kd, tok)?,
            "nobo" => set_flag(&mut t.nobo, tok)?,
            "u" => set_flag(&mut t.uniform, tok)?,
            "je" => set_flag(&mut t.je, tok)?,
            "fb" => set_once(&mut t.fb, None, tok)?,
            _ => parse_valued(&mut t, tok)?,
        }
    }
    if t.uniform && t.uniform_collection.is_some() {
        return Err(Error::Config(
            "template tokens u and uc select different backgrounds".into(),
        ));
    }
    if t.nobo && !t.kd {
        return Err(Error::Config("template token nobo requires kd".into()));
    }
    if t.thr == Some(0) {
        return Err(Error::Config("thr needs at least one thread".into()));
    }
    Ok(t)
}

fn parse_valued(t: &mut TemplateConfig, tok: &str) -> Result<()> {
    if let Some(n) = level(tok, "s") {
        if n > 9 {
            return Err(Error::Config(format!("fold {n} outside 0-9")));
        }
        return set_once(&mut t.fold, n as usize, tok);
    }
    let numbered: [(&str, fn(&mut TemplateConfig) -> &mut Option<u32>); 10] = [
        ("uc", |t| &mut t.uniform_collection),
        ("jm", |t| &mut t.jm),
        ("kdp", |t| &mut t.kdp),
        ("mc", |t| &mut t.mc),
        ("mlc", |t| &mut t.mlc),
        ("pci", |t| &mut t.pci),
        ("pct", |t| &mut t.pct),
        ("cs", |t| &mut t.cs),
        ("iw", |t| &mut t.iw),
        ("thr", |t| &mut t.thr),
    ];
    for (prefix, slot) in &numbered {
        if let Some(n) = level(tok, prefix) {
            return set_once(slot(t), n, tok);
        }
    }
    if tok == "psX" {
        return set_once(&mut t.ps, PriorScale::Search, tok);
    }
    if let Some(n) = level(tok, "ps") {
        return set_once(&mut t.ps, PriorScale::Level(n), tok);
    }
    if let Some(n) = level(tok, "fb") {
        return set_once(&mut t.fb, Some(n), tok);
    }
    if let Some(w) = parse_weighting(tok) {
        return set_once(&mut t.weighting, w, tok);
    }
    if let Some((m, variant)) = parse_measure(tok) {
        set_once(&mut t.measure, m, tok)?;
        t.measure_variant = variant;
        return Ok(());
    }
    t.unknown.push(tok.to_string());
    Ok(())
}

fn jm_value(n: u32) -> Result<f64> {
    const TABLE: [f64; 7] = [0.9, 0.98, 0.99, 0.995, 0.998, 0.999, 0.9995];
    TABLE
        .get((n as usize).wrapping_sub(1))
        .copied()
        .ok_or_else(|| Error::Config(format!("jm level {n} outside 1-{}", TABLE.len())))
}

fn kdp_value(n: u32) -> Result<f64> {
    const TABLE: [f64; 6] = [10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0];
    TABLE
        .get((n as usize).wrapping_sub(1))
        .copied()
        .ok_or_else(|| Error::Config(format!("kdp level {n} outside 1-{}", TABLE.len())))
}

const HIERARCHY_MIX: f64 = 0.2;
const PS_SEARCH_RANGE: (f64, f64) = (0.0, 2.0);

impl TemplateConfig {
    pub fn measure(&self) -> Measure {
        self.measure.unwrap_or(Measure::Mafs)
    }

    pub fn transposed(&self) -> bool {
        self.iw.is_some()
    }

    pub fn workers(&self) -> Option<usize> {
        self.thr.map(|n| n as usize)
    }

    /// Tokens that parse but select no behavior.
    pub fn inactive_tokens(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(fb) = self.fb {
            out.push(fb.map_or_else(|| "fb".to_string(), |n| format!("fb{n}")));
        }
        if self.je {
            out.push("je".into());
        }
        out.extend(self.unknown.iter().cloned());
        out
    }

    pub fn weighting_config(&self) -> WeightingConfig {
        match self.weighting {
            None => WeightingConfig::default(),
            Some(WeightingToken::BmTi { number, variant }) => {
                let b = match variant {
                    Some('b') => 0.75,
                    Some('c') => 0.25,
                    Some('d') => 1.0,
                    _ => 0.5,
                };
                WeightingConfig::bm18ti(f64::from(number) / 10.0, b, 1.0, 1.0)
            }
            Some(WeightingToken::Bm25c(n)) => WeightingConfig::bm25c(1.2 + 0.8 * f64::from(n.max(1) - 1), 0.75),
            Some(WeightingToken::TiX(n)) | Some(WeightingToken::TxIx(n)) => {
                WeightingConfig::tix(1.0, 1.0, (0.1 * f64::from(n)).min(1.0))
            }
        }
    }

    /// The model configuration at the initial parameter values.
    pub fn model_config(&self, seed: u64) -> Result<ModelConfig> {
        let mut cfg = ModelConfig {
            weighting: self.weighting_config(),
            seed,
            ..ModelConfig::default()
        };
        cfg.flags.lp = self.lp;
        cfg.flags.kd = self.kd;
        cfg.flags.nobo = self.nobo;
        cfg.flags.bm25_kernel = self.kd && self.nobo && matches!(self.weighting, Some(WeightingToken::Bm25c(_)));
        if let Some(n) = self.uniform_collection {
            cfg.smoothing.background = Background::UniformCollection;
            cfg.smoothing.collection_mix = (0.5 * f64::from(n)).min(1.0);
        }
        if let Some(n) = self.jm {
            cfg.smoothing.jm_lambda = jm_value(n)?;
        }
        if let Some(n) = self.kdp {
            cfg.smoothing.dirichlet_mu = kdp_value(n)?;
        }
        if self.cs.is_some() {
            cfg.smoothing.hierarchy_mix = HIERARCHY_MIX;
        }
        cfg.pruning.min_count = f64::from(self.mc.unwrap_or(0));
        cfg.pruning.min_label_count = u64::from(self.mlc.unwrap_or(0));
        cfg.pruning.precomputed_prune = 0.1 * f64::from(self.pct.unwrap_or(0));
        cfg.pruning.online_prune = 0.1 * f64::from(self.pci.unwrap_or(0));
        cfg.prior_scale = match self.ps {
            Some(PriorScale::Level(n)) => 0.25 * f64::from(n),
            Some(PriorScale::Search) | None => 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn instantiate_config(&self) -> Option<InstantiateConfig> {
        self.iw.map(|n| InstantiateConfig {
            instantiate_weight: 2f64.powi(n as i32),
            ..InstantiateConfig::default()
        })
    }

    /// Search space around the initial configuration. Parameters that the
    /// template fixes are frozen.
    pub fn param_spec(&self, seed: u64) -> Result<ParamSpec> {
        let cfg = self.model_config(seed)?;
        let mut params = Vec::new();
        let uses_label_model = !(self.kd && self.nobo);
        let jm = ParamDef::new("jm_lambda", 0.5, 0.9999, Transform::Logit, cfg.smoothing.jm_lambda, 0.5);
        params.push(if uses_label_model { jm } else { jm.frozen() });
        if self.kd {
            params.push(ParamDef::new(
                "dirichlet_mu",
                0.1,
                1e5,
                Transform::Log,
                cfg.smoothing.dirichlet_mu,
                0.5,
            ));
        }
        let w = &cfg.weighting;
        match w.scheme {
            WeightingScheme::Bm18ti | WeightingScheme::Bm25c => {
                params.push(ParamDef::new("k1", 0.01, 100.0, Transform::Log, w.k1, 0.5));
                params.push(ParamDef::new("b", 0.0, 1.0, Transform::Linear, w.b, 0.1));
                if w.scheme == WeightingScheme::Bm18ti {
                    params.push(ParamDef::new(
                        "idf_exponent",
                        0.0,
                        3.0,
                        Transform::Linear,
                        w.idf_exponent,
                        0.2,
                    ));
                }
            }
            WeightingScheme::Tix => {
                params.push(ParamDef::new("b", 0.0, 1.0, Transform::Linear, w.b, 0.1));
                params.push(ParamDef::new(
                    "idf_exponent",
                    0.0,
                    3.0,
                    Transform::Linear,
                    w.idf_exponent,
                    0.2,
                ));
                let tf = ParamDef::new("tf_exponent", 0.05, 1.0, Transform::Linear, w.tf_exponent, 0.1);
                let txix = matches!(self.weighting, Some(WeightingToken::TxIx(_)));
                params.push(if txix { tf } else { tf.frozen() });
            }
        }
        let ps = ParamDef::new(
            "prior_scale",
            PS_SEARCH_RANGE.0,
            PS_SEARCH_RANGE.1.max(cfg.prior_scale),
            Transform::Linear,
            cfg.prior_scale,
            0.2,
        );
        params.push(if self.ps == Some(PriorScale::Search) {
            ps
        } else {
            ps.frozen()
        });
        if cfg.smoothing.background == Background::UniformCollection {
            params.push(ParamDef::new(
                "collection_mix",
                0.0,
                1.0,
                Transform::Logit,
                cfg.smoothing.collection_mix,
                0.5,
            ));
        }
        ParamSpec::new(params)
    }

    /// Canonical name; parsing it yields an equal configuration.
    pub fn to_name(&self) -> String {
        let mut toks: Vec<String> = Vec::new();
        if self.mnb {
            toks.push("mnb".into());
        }
        if let Some(m) = self.measure {
            toks.push(format!("{}{}", m.name(), self.measure_variant));
        }
        let num = |toks: &mut Vec<String>, p: &str, v: Option<u32>| {
            if let Some(n) = v {
                toks.push(format!("{p}{n}"));
            }
        };
        num(&mut toks, "s", self.fold.map(|f| f as u32));
        for (on, name) in [
            (self.lp, "lp"),
            (self.kd, "kd"),
            (self.nobo, "nobo"),
            (self.uniform, "u"),
        ] {
            if on {
                toks.push(name.into());
            }
        }
        num(&mut toks, "uc", self.uniform_collection);
        num(&mut toks, "jm", self.jm);
        num(&mut toks, "kdp", self.kdp);
        if let Some(w) = self.weighting {
            toks.push(w.to_string());
        }
        match self.fb {
            Some(None) => toks.push("fb".into()),
            Some(Some(n)) => toks.push(format!("fb{n}")),
            None => {}
        }
        if self.je {
            toks.push("je".into());
        }
        num(&mut toks, "mc", self.mc);
        num(&mut toks, "mlc", self.mlc);
        num(&mut toks, "pci", self.pci);
        num(&mut toks, "pct", self.pct);
        match self.ps {
            Some(PriorScale::Level(n)) => toks.push(format!("ps{n}")),
            Some(PriorScale::Search) => toks.push("psX".into()),
            None => {}
        }
        num(&mut toks, "cs", self.cs);
        num(&mut toks, "iw", self.iw);
        num(&mut toks, "thr", self.thr);
        toks.extend(self.unknown.iter().cloned());
        toks.join("_")
    }
}

impl FromStr for TemplateConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_template_name(s)
    }
}

impl fmt::Display for TemplateConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_name())
    }
}

/// Writes `values` into the named fields of the model and instantiation
/// configurations.
pub fn apply_params(
    spec: &ParamSpec,
    values: &[f64],
    model: &mut ModelConfig,
    inst: Option<&mut InstantiateConfig>,
) -> Result<()> {
    if values.len() != spec.params.len() {
        return Err(Error::Config(format!(
            "{} values for {} parameters",
            values.len(),
            spec.params.len()
        )));
    }
    let mut inst = inst;
    for (p, &v) in spec.params.iter().zip(values) {
        match p.name.as_str() {
            "jm_lambda" => model.smoothing.jm_lambda = v,
            "dirichlet_mu" => model.smoothing.dirichlet_mu = v,
            "collection_mix" => model.smoothing.collection_mix = v,
            "hierarchy_mix" => model.smoothing.hierarchy_mix = v,
            "k1" => model.weighting.k1 = v,
            "b" => model.weighting.b = v,
            "idf_exponent" => model.weighting.idf_exponent = v,
            "length_exponent" => model.weighting.length_exponent = v,
            "tf_exponent" => model.weighting.tf_exponent = v,
            "prior_scale" => model.prior_scale = v,
            "instantiate_weight" => match inst.as_deref_mut() {
                Some(i) => i.instantiate_weight = v,
                None => return Err(Error::Config("instantiate_weight without transposed output".into())),
            },
            "instantiate_threshold" => match inst.as_deref_mut() {
                Some(i) => i.instantiate_threshold = v,
                None => return Err(Error::Config("instantiate_threshold without transposed output".into())),
            },
            other => return Err(Error::Config(format!("unknown parameter {other:?}"))),
        }
    }
    model.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walkthrough_name() {
        let t = parse_template_name("mnb_mafs2_s8_lp_u_jm2_bm18ti_pct0_ps5_thr16.template").unwrap();
        assert!(t.mnb && t.lp && t.uniform);
        assert_eq!(t.measure, Some(Measure::Mafs2));
        assert_eq!(t.fold, Some(8));
        assert_eq!(t.workers(), Some(16));
        assert_eq!(t.ps, Some(PriorScale::Level(5)));
        let cfg = t.model_config(0).unwrap();
        assert_eq!(cfg.smoothing.jm_lambda, 0.98);
        assert_eq!(cfg.smoothing.background, Background::Uniform);
        assert_eq!(cfg.weighting.scheme, WeightingScheme::Bm18ti);
    }

    #[test]
    fn rejects_conflicts_and_empty() {
        assert!(parse_template_name("").is_err());
        assert!(parse_template_name("mafs_u_uc1").is_err());
        assert!(parse_template_name("mafs_jm2_jm3").is_err());
        assert!(parse_template_name("mafs_mifs").is_err());
        assert!(parse_template_name("mafs_s12").is_err());
        assert!(parse_template_name("mafs__s1").is_err());
        assert!(parse_template_name("mafs_nobo").is_err());
    }

    #[test]
    fn unknown_tokens_are_kept() {
        let t = parse_template_name("mafs_s1_kd_nobo_bm25c2_mc0_mlc0_ps2_lt5_mr0_tk2").unwrap();
        assert_eq!(t.unknown, vec!["lt5", "mr0", "tk2"]);
        assert_eq!(t.weighting, Some(WeightingToken::Bm25c(2)));
        assert!(t.model_config(0).unwrap().flags.bm25_kernel);
    }

    #[test]
    fn canonical_name_round_trips() {
        let t = parse_template_name("mafs_s4_kd_u_jm3_kdp5_tXiX2_mc0_pci0_pct0_mlc0_ps5_lt5_mr0_tk2").unwrap();
        let again = parse_template_name(&t.to_name()).unwrap();
        assert_eq!(again, t);
        assert_eq!(again.to_name(), t.to_name());
    }

    #[test]
    fn search_space_follows_tokens() {
        let t = parse_template_name("mafs3_s1_uc1_jm3_bm18ti_pci7_pct0_psX_fb_iw2").unwrap();
        let spec = t.param_spec(0).unwrap();
        let ps = &spec.params[spec.index_of("prior_scale").unwrap()];
        assert!(!ps.frozen);
        assert!(spec.index_of("collection_mix").is_some());
        let mut model = t.model_config(0).unwrap();
        let mut inst = t.instantiate_config().unwrap();
        assert_eq!(inst.instantiate_weight, 4.0);
        apply_params(&spec, &spec.initial(), &mut model, Some(&mut inst)).unwrap();
        assert_eq!(model, t.model_config(0).unwrap());
    }
}
