//! Run configuration: TOML text with top-level keys and optional `[x]`,
//! `[y]`, `[z]` sections overriding the per-axis bath parameters.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use aoheom_core::bath::MAX_PADE_ORDER;
use aoheom_core::{Axis, RadialMode, TerminatorMode, Truncation};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

/// Dipole component `(detected, excited)`, written `"zx"` for
/// `alpha' = z`, `alpha = x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Component {
    pub detected: Axis,
    pub excited: Axis,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.detected, self.excited)
    }
}

impl FromStr for Component {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next().and_then(Axis::from_char), chars.next().and_then(Axis::from_char), chars.next()) {
            (Some(detected), Some(excited), None) => Ok(Component { detected, excited }),
            _ => Err(format!("component must be two of x, y, z (e.g. \"zz\"), got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibrationPolicy {
    /// Fail with a numerical error if the tolerance is not reached.
    Strict,
    /// Continue from the last state and record the residual.
    Warn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_max: u32,
    pub beta: f64,
    pub eta: [f64; 3],
    pub gamma: [f64; 3],
    pub pade_k: [usize; 3],
    pub depth: u32,
    pub truncation: Truncation,
    pub dt: f64,
    pub n_steps: usize,
    pub terminator: TerminatorMode,
    pub dipole_radial_mode: RadialMode,
    pub mu0: f64,
    /// `None` selects `5 / (n_steps dt)`.
    pub apodization_rate: Option<f64>,
    pub components: Vec<Component>,
    pub output_dir: PathBuf,
    /// `None` uses the rayon default.
    pub workers: Option<usize>,
    pub equilibration_tolerance: f64,
    pub max_equilibration_steps: usize,
    pub equilibration_policy: EquilibrationPolicy,
    pub truncation_n_max: Vec<u32>,
    pub stick_width: f64,
    pub stick_scale: f64,
}

impl RunConfig {
    /// Defaults for everything except `beta` and `eta`.
    pub fn with_bath(beta: f64, eta: f64) -> Self {
        RunConfig {
            n_max: 5,
            beta,
            eta: [eta; 3],
            gamma: [1.0; 3],
            pade_k: [1; 3],
            depth: 2,
            truncation: Truncation::Global,
            dt: 0.1,
            n_steps: 3000,
            terminator: TerminatorMode::Eq8,
            dipole_radial_mode: RadialMode::Unit,
            mu0: 1.0,
            apodization_rate: None,
            components: vec![Component { detected: Axis::Z, excited: Axis::Z }],
            output_dir: PathBuf::from("out"),
            workers: None,
            equilibration_tolerance: 1e-9,
            max_equilibration_steps: 20_000,
            equilibration_policy: EquilibrationPolicy::Warn,
            truncation_n_max: vec![2, 3, 4, 5],
            stick_width: 0.005,
            stick_scale: 1.0,
        }
    }

    pub fn apodization(&self) -> f64 {
        self.apodization_rate.unwrap_or_else(|| aoheom_core::default_apodization_rate(self.n_steps, self.dt))
    }

    /// Checks ranges; the error names the offending key.
    pub fn validate(&self) -> Result<(), (Option<Axis>, &'static str, String)> {
        let top = |key, msg: String| Err((None, key, msg));
        if self.n_max < 1 {
            return top("n_max", "n_max must be at least 1".into());
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return top("beta", format!("beta must be positive, got {}", self.beta));
        }
        for a in Axis::ALL {
            let i = a.index();
            if !(self.eta[i] >= 0.0 && self.eta[i].is_finite()) {
                return Err((Some(a), "eta", format!("eta must be non-negative, got {}", self.eta[i])));
            }
            if !(self.gamma[i] > 0.0 && self.gamma[i].is_finite()) {
                return Err((Some(a), "gamma", format!("gamma must be positive, got {}", self.gamma[i])));
            }
            if self.pade_k[i] > MAX_PADE_ORDER {
                return Err((Some(a), "pade_k", format!("pade_k must be at most {MAX_PADE_ORDER}")));
            }
        }
        if self.depth < 1 {
            return top("depth", "depth must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return top("dt", format!("dt must be positive, got {}", self.dt));
        }
        if self.n_steps < 1 {
            return top("n_steps", "n_steps must be at least 1".into());
        }
        if !(self.mu0.is_finite() && self.mu0 != 0.0) {
            return top("mu0", format!("mu0 must be finite and non-zero, got {}", self.mu0));
        }
        if let Some(a) = self.apodization_rate {
            if !(a >= 0.0 && a.is_finite()) {
                return top("apodization_rate", format!("apodization_rate must be non-negative, got {a}"));
            }
        }
        if self.components.is_empty() {
            return top("components", "at least one component is required".into());
        }
        if self.workers == Some(0) {
            return top("workers", "workers must be at least 1".into());
        }
        if !(self.equilibration_tolerance > 0.0) {
            return top("equilibration_tolerance", "equilibration_tolerance must be positive".into());
        }
        if self.truncation_n_max.is_empty()
            || self.truncation_n_max.contains(&0)
            || self.truncation_n_max.windows(2).any(|w| w[0] >= w[1])
        {
            return top("truncation_n_max", "truncation_n_max must be a strictly ascending list of n_max >= 1".into());
        }
        if !(self.stick_width > 0.0) {
            return top("stick_width", "stick_width must be positive".into());
        }
        if !self.stick_scale.is_finite() {
            return top("stick_scale", "stick_scale must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pade_k: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_max: Option<u32>,
    beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pade_k: Option<usize>,
    depth: Option<u32>,
    truncation: Option<Truncation>,
    dt: Option<f64>,
    n_steps: Option<usize>,
    terminator: Option<TerminatorMode>,
    dipole_radial_mode: Option<RadialMode>,
    mu0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    apodization_rate: Option<f64>,
    components: Option<Vec<String>>,
    output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
    equilibration_tolerance: Option<f64>,
    max_equilibration_steps: Option<usize>,
    equilibration_policy: Option<EquilibrationPolicy>,
    truncation_n_max: Option<Vec<u32>>,
    stick_width: Option<f64>,
    stick_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<AxisSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y: Option<AxisSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    z: Option<AxisSection>,
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = ...`, inside `[section]` when given. Falls back to 1.
fn key_line(text: &str, section: Option<Axis>, key: &str) -> usize {
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            continue;
        }
        let in_scope = match section {
            None => current.is_none(),
            Some(a) => current.as_deref() == Some(&a.to_string()),
        };
        if in_scope && t.split('=').next().map(str::trim) == Some(key) {
            return i + 1;
        }
    }
    if section.is_some() {
        return key_line(text, None, key);
    }
    1
}

/// Parses and validates a configuration, filling defaults.
pub fn parse_config(text: &str) -> AppResult<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| AppError::Config {
        line: e.span().map_or(1, |s| line_at(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    let missing = |key: &str| AppError::Config { line: 1, message: format!("missing required key `{key}`") };

    let sections = [&raw.x, &raw.y, &raw.z];
    let per_axis_f = |top: Option<f64>, pick: fn(&AxisSection) -> Option<f64>, key: &str| -> AppResult<[f64; 3]> {
        let mut out = [0.0; 3];
        for (i, sec) in sections.iter().enumerate() {
            out[i] = sec.as_ref().and_then(pick).or(top).ok_or_else(|| missing(key))?;
        }
        Ok(out)
    };
    let beta = raw.beta.ok_or_else(|| missing("beta"))?;
    let eta = per_axis_f(raw.eta, |s| s.eta, "eta")?;
    let gamma = per_axis_f(raw.gamma.or(Some(1.0)), |s| s.gamma, "gamma")?;
    let mut pade_k = [raw.pade_k.unwrap_or(1); 3];
    for (i, sec) in sections.iter().enumerate() {
        if let Some(k) = sec.as_ref().and_then(|s| s.pade_k) {
            pade_k[i] = k;
        }
    }

    let mut components = Vec::new();
    for c in raw.components.unwrap_or_else(|| vec!["zz".into()]) {
        let parsed = c
            .parse::<Component>()
            .map_err(|message| AppError::Config { line: key_line(text, None, "components"), message })?;
        if !components.contains(&parsed) {
            components.push(parsed);
        }
    }

    let d = RunConfig::with_bath(beta, 0.0);
    let config = RunConfig {
        n_max: raw.n_max.unwrap_or(d.n_max),
        beta,
        eta,
        gamma,
        pade_k,
        depth: raw.depth.unwrap_or(d.depth),
        truncation: raw.truncation.unwrap_or(d.truncation),
        dt: raw.dt.unwrap_or(d.dt),
        n_steps: raw.n_steps.unwrap_or(d.n_steps),
        terminator: raw.terminator.unwrap_or(d.terminator),
        dipole_radial_mode: raw.dipole_radial_mode.unwrap_or(d.dipole_radial_mode),
        mu0: raw.mu0.unwrap_or(d.mu0),
        apodization_rate: raw.apodization_rate,
        components,
        output_dir: raw.output_dir.unwrap_or(d.output_dir),
        workers: raw.workers,
        equilibration_tolerance: raw.equilibration_tolerance.unwrap_or(d.equilibration_tolerance),
        max_equilibration_steps: raw.max_equilibration_steps.unwrap_or(d.max_equilibration_steps),
        equilibration_policy: raw.equilibration_policy.unwrap_or(d.equilibration_policy),
        truncation_n_max: raw.truncation_n_max.unwrap_or(d.truncation_n_max),
        stick_width: raw.stick_width.unwrap_or(d.stick_width),
        stick_scale: raw.stick_scale.unwrap_or(d.stick_scale),
    };
    config
        .validate()
        .map_err(|(axis, key, message)| AppError::Config { line: key_line(text, axis, key), message })?;
    Ok(config)
}

/// TOML text that [`parse_config`] maps back to `config`. Per-axis bath
/// parameters are always written as sections.
pub fn serialize_config(config: &RunConfig) -> String {
    let section = |i: usize| {
        Some(AxisSection { eta: Some(config.eta[i]), gamma: Some(config.gamma[i]), pade_k: Some(config.pade_k[i]) })
    };
    let raw = RawConfig {
        n_max: Some(config.n_max),
        beta: Some(config.beta),
        eta: None,
        gamma: None,
        pade_k: None,
        depth: Some(config.depth),
        truncation: Some(config.truncation),
        dt: Some(config.dt),
        n_steps: Some(config.n_steps),
        terminator: Some(config.terminator),
        dipole_radial_mode: Some(config.dipole_radial_mode),
        mu0: Some(config.mu0),
        apodization_rate: config.apodization_rate,
        components: Some(config.components.iter().map(|c| c.to_string()).collect()),
        output_dir: Some(config.output_dir.clone()),
        workers: config.workers,
        equilibration_tolerance: Some(config.equilibration_tolerance),
        max_equilibration_steps: Some(config.max_equilibration_steps),
        equilibration_policy: Some(config.equilibration_policy),
        truncation_n_max: Some(config.truncation_n_max.clone()),
        stick_width: Some(config.stick_width),
        stick_scale: Some(config.stick_scale),
        x: section(0),
        y: section(1),
        z: section(2),
    };
    toml::to_string(&raw).expect("config values are representable in TOML")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "n_max = 3\nbeta = 5.0\neta = 1e-4\ngamma = 1.0\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.n_max, 3);
        assert_eq!(c.pade_k, [1, 1, 1]);
        assert_eq!(c.depth, 2);
        assert_eq!(c.dt, 0.1);
        assert_eq!(c.n_steps, 3000);
        assert_eq!(c.eta, [1e-4; 3]);
        assert_eq!(c.mu0, 1.0);
        assert_eq!(c.terminator, TerminatorMode::Eq8);
        assert_eq!(c.dipole_radial_mode, RadialMode::Unit);
        assert_eq!(c.components, vec!["zz".parse().unwrap()]);
    }

    #[test]
    fn axis_sections_override() {
        let c = parse_config("beta = 1.0\neta = 0.01\n[y]\neta = 0.02\npade_k = 3\n[z]\ngamma = 2.0\n").unwrap();
        assert_eq!(c.eta, [0.01, 0.02, 0.01]);
        assert_eq!(c.gamma, [1.0, 1.0, 2.0]);
        assert_eq!(c.pade_k, [1, 3, 1]);
        assert_eq!(c.n_max, 5);
    }

    #[test]
    fn negative_eta_is_a_validation_error_on_its_line() {
        let e = parse_config("n_max = 2\nbeta = 1.0\neta = -1\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        match e {
            AppError::Config { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("eta"));
            }
            other => panic!("{other}"),
        }
        let e = parse_config("beta = 1.0\neta = 0.1\n[x]\neta = -2.0\n").unwrap_err();
        assert!(matches!(e, AppError::Config { line: 4, .. }), "{e}");
    }

    #[test]
    fn unknown_and_malformed_keys_report_lines() {
        let e = parse_config("beta = 1.0\neta = 0.1\nbogus = 3\n").unwrap_err();
        assert!(matches!(e, AppError::Config { line: 3, .. }), "{e}");
        let e = parse_config("beta = 1.0\neta = 0.1\ndt = \"fast\"\n").unwrap_err();
        assert!(matches!(e, AppError::Config { line: 3, .. }), "{e}");
        let e = parse_config("beta = 1.0\n[x]\nfoo = 1\n").unwrap_err();
        assert!(matches!(e, AppError::Config { line: 3, .. }), "{e}");
        let e = parse_config("beta = 1.0\ncomponents = [\"zq\"]\neta = 0.0\n").unwrap_err();
        assert!(matches!(e, AppError::Config { line: 2, .. }), "{e}");
    }

    #[test]
    fn missing_required_keys() {
        for text in ["eta = 0.1\n", "beta = 1.0\n", "beta = 1.0\n[x]\neta = 0.1\n"] {
            let e = parse_config(text).unwrap_err();
            assert!(e.to_string().contains("missing required key"), "{e}");
        }
        let c = parse_config("beta = 1.0\n[x]\neta = 0.1\n[y]\neta = 0.2\n[z]\neta = 0.3\n").unwrap();
        assert_eq!(c.eta, [0.1, 0.2, 0.3]);
    }

    #[test]
    fn paper_setup_is_accepted() {
        let c = parse_config("n_max = 5\nbeta = 1.0\neta = 0.01\ngamma = 1.0\npade_k = 1\ndepth = 2\n").unwrap();
        let basis = aoheom_core::BasisSet::enumerate(c.n_max).unwrap();
        assert_eq!(basis.dimension(), 55);
        let space = aoheom_core::HierarchyIndexSpace::enumerate(c.pade_k, c.depth, c.truncation, 1000).unwrap();
        assert_eq!(space.len(), 28);
    }

    #[test]
    fn components_parse() {
        let c: Component = "zx".parse().unwrap();
        assert_eq!((c.detected, c.excited), (Axis::Z, Axis::X));
        assert_eq!(c.to_string(), "zx");
        assert!("z".parse::<Component>().is_err());
        assert!("zzz".parse::<Component>().is_err());
    }

    fn axis() -> impl Strategy<Value = Axis> {
        prop_oneof![Just(Axis::X), Just(Axis::Y), Just(Axis::Z)]
    }

    fn config() -> impl Strategy<Value = RunConfig> {
        (
            (1u32..8, 1e-3f64..1e3, prop::array::uniform3(0.0f64..1.0), prop::array::uniform3(1e-3f64..10.0)),
            (prop::array::uniform3(0usize..6), 1u32..5, any::<bool>(), 1e-3f64..1.0, 1usize..100_000),
            (any::<bool>(), any::<bool>(), -5.0f64..5.0, prop::option::of(0.0f64..1.0)),
            (prop::collection::vec((axis(), axis()), 1..4), prop::option::of(1usize..16), any::<bool>()),
        )
            .prop_filter_map("mu0 must be non-zero", |(a, b, c, d)| {
                let (n_max, beta, eta, gamma) = a;
                let (pade_k, depth, per_bath, dt, n_steps) = b;
                let (zero, linear, mu0, apodization_rate) = c;
                let (comps, workers, strict) = d;
                if mu0 == 0.0 {
                    return None;
                }
                let mut components = Vec::new();
                for (detected, excited) in comps {
                    let comp = Component { detected, excited };
                    if !components.contains(&comp) {
                        components.push(comp);
                    }
                }
                Some(RunConfig {
                    n_max,
                    beta,
                    eta,
                    gamma,
                    pade_k,
                    depth,
                    truncation: if per_bath { Truncation::PerBath } else { Truncation::Global },
                    dt,
                    n_steps,
                    terminator: if zero { TerminatorMode::Zero } else { TerminatorMode::Eq8 },
                    dipole_radial_mode: if linear { RadialMode::Linear } else { RadialMode::Unit },
                    mu0,
                    apodization_rate,
                    components,
                    output_dir: PathBuf::from("runs/a b"),
                    workers,
                    equilibration_tolerance: 1e-9,
                    max_equilibration_steps: 12345,
                    equilibration_policy: if strict { EquilibrationPolicy::Strict } else { EquilibrationPolicy::Warn },
                    truncation_n_max: vec![2, 3, 4],
                    stick_width: 0.004,
                    stick_scale: 15.0,
                })
            })
    }

    proptest! {
        #[test]
        fn round_trip(c in config()) {
            let text = serialize_config(&c);
            let back = parse_config(&text).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
