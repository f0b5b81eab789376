//! Scenario files: JSON in, validated [`ScenarioConfig`] out.

use std::path::{Path, PathBuf};

use lamb_lab::dynamics::Scheme;
use lamb_lab::field::vmax_bound;
use lamb_lab::inequalities::{disk_patch, EnsembleSpec};
use lamb_lab::lamb::DipoleSpec;
use lamb_lab::monitors::MonitorConfig;
use lamb_lab::{NDipoleConfig, ParticleField, Point};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    TheoremA,
    TheoremB,
    SingleDipole,
    PointVortex,
    InequalitySuite,
}

/// A dipole given either by its invariants or by speed and radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum DipoleEntry {
    Invariants { kappa: f64, mu: f64, center: f64 },
    Shape { speed: f64, radius: f64, center: f64 },
}

impl DipoleEntry {
    pub fn spec(&self) -> lamb_lab::Result<DipoleSpec<f64>> {
        match *self {
            Self::Invariants { kappa, mu, center } => DipoleSpec::new(kappa, mu, center),
            Self::Shape { speed, radius, center } => DipoleSpec::from_speed_radius(speed, radius, center),
        }
    }
}

/// Additive bump a(1 − r²/ρ²)³₊ whose amplitude is fixed by its
/// ‖·‖_{L²} + ‖·‖_{L¹*} size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub center: [f64; 2],
    pub radius: f64,
    pub size: f64,
}

/// Uniform disk patch left of the slanted line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSetup {
    pub center: [f64; 2],
    pub area: f64,
    #[serde(default = "one")]
    pub omega: f64,
}

/// Normalized dipole at x₁ = `d` right of the line x₁ = x₂ cot α.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlantedSetup {
    pub alpha: f64,
    pub d: f64,
    pub patch: PatchSetup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointVortexSetup {
    pub positions: Vec<f64>,
    pub heights: Vec<f64>,
    pub speeds: Vec<f64>,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "pv_height_tol")]
    pub height_tolerance: f64,
    #[serde(default = "pv_shift_tol")]
    pub shift_tolerance: f64,
}

fn pv_height_tol() -> f64 {
    0.05
}
fn pv_shift_tol() -> f64 {
    0.02
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalitySetup {
    /// Ensembles checked against the sharp energy bound.
    pub sharp: Vec<EnsembleSpec>,
    /// Ensemble whose consecutive members are paired for the interaction bounds.
    pub pairs: Option<EnsembleSpec>,
    /// Ensemble for the far-field ladder and L∞ ratios.
    pub velocity: Option<EnsembleSpec>,
    #[serde(default = "default_ladder")]
    pub decay_distances: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSettings {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub remesh_every: usize,
    pub treecode: bool,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self { dt: 2e-3, t_end: 2.0, scheme: Scheme::Rk4, remesh_every: 0, treecode: false }
    }
}

/// Post-run audits of a multi-dipole run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    /// Window length for the finite-difference enstrophy rate.
    pub flux_window: f64,
    /// Relative slack on enstrophy monotonicity and negative flux.
    pub flux_slack: f64,
    /// Unexplained impulse drift allowed, in units of the filamentation loss.
    pub impulse_factor: f64,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self { flux_window: 0.5, flux_slack: 0.05, impulse_factor: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    pub dir: PathBuf,
    /// Write a gridded vorticity snapshot every this many samples; 0 disables.
    pub snapshot_every: usize,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), snapshot_every: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub scenario: ScenarioKind,
    /// Right to left, i.e. the leading dipole first.
    #[serde(default)]
    pub dipoles: Vec<DipoleEntry>,
    /// Enforce the ordering and separation hypotheses (off for falsification runs).
    #[serde(default = "yes")]
    pub ordered: bool,
    #[serde(default)]
    pub perturbation: Option<Perturbation>,
    #[serde(default)]
    pub theorem_b: Option<SlantedSetup>,
    #[serde(default)]
    pub point_vortex: Option<PointVortexSetup>,
    #[serde(default)]
    pub inequality: Option<InequalitySetup>,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default)]
    pub audit: AuditSettings,
    #[serde(default)]
    pub output: OutputSettings,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_h() -> f64 {
    1.0 / 128.0
}
fn default_ladder() -> Vec<f64> {
    vec![5.0, 10.0, 20.0]
}

/// Reads and validates a scenario file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    parse_str(&text)
}

pub fn parse_str(text: &str) -> Result<ScenarioConfig, CliError> {
    let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    let v = cfg.violations();
    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Validation(v))
    }
}

impl ScenarioConfig {
    pub fn specs(&self) -> lamb_lab::Result<Vec<DipoleSpec<f64>>> {
        self.dipoles.iter().map(|d| d.spec()).collect()
    }

    pub fn n_dipole(&self) -> lamb_lab::Result<NDipoleConfig> {
        Ok(NDipoleConfig { specs: self.specs()?, separation: self.monitor.d0, ordered: self.ordered })
    }

    /// The patch of a Theorem-B scenario, discretized at `h`.
    pub fn patch_field(&self) -> Option<lamb_lab::Result<ParticleField>> {
        let s = self.theorem_b?;
        let r = (s.patch.area / std::f64::consts::PI).sqrt();
        Some(disk_patch(Point::new(s.patch.center[0], s.patch.center[1]), r, s.patch.omega, self.h))
    }

    /// Every violated invariant, as readable strings.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.h > 0.0 && self.h.is_finite()) {
            out.push(format!("h = {} must be positive", self.h));
        }
        let it = &self.integrator;
        if !(it.dt > 0.0 && it.dt.is_finite()) || !(it.t_end >= 0.0) {
            out.push(format!("integrator: dt = {} must be positive and t_end = {} nonnegative", it.dt, it.t_end));
        }
        let need_dipoles = matches!(self.scenario, ScenarioKind::TheoremA | ScenarioKind::SingleDipole);
        if need_dipoles {
            match self.n_dipole() {
                Err(e) => out.push(format!("dipoles: {e}")),
                Ok(nd) => {
                    out.extend(nd.violations());
                    let p = nd.positions();
                    if !nd.ordered && p.windows(2).any(|w| !(w[0] > w[1])) {
                        out.push("positions: dipoles must be listed right to left".into());
                    }
                }
            }
            let n = self.dipoles.len();
            if self.scenario == ScenarioKind::SingleDipole && n != 1 {
                out.push(format!("single_dipole needs exactly one dipole, got {n}"));
            }
            out.extend(self.monitor.violations(n.max(1)));
        }
        if let Some(p) = self.perturbation {
            if !(p.radius > 0.0 && p.size >= 0.0 && p.center[1] >= 0.0) {
                out.push("perturbation: radius must be positive, size nonnegative, centre in x₂ ≥ 0".into());
            }
        }
        match self.scenario {
            ScenarioKind::TheoremB => match self.theorem_b {
                None => out.push("theorem_b scenario needs a theorem_b section".into()),
                Some(s) => {
                    if !(s.alpha > 0.0 && s.alpha <= std::f64::consts::FRAC_PI_2) {
                        out.push(format!("alpha = {} must lie in (0, π/2]", s.alpha));
                    }
                    if !(s.patch.area > 0.0 && s.patch.omega > 0.0) {
                        out.push("patch area and omega must be positive".into());
                    }
                    let r = (s.patch.area / std::f64::consts::PI).sqrt();
                    let [c1, c2] = s.patch.center;
                    // signed distance from the line x₁ = x₂ cot α, positive on the left
                    let left = (c2 * s.alpha.cos() - c1 * s.alpha.sin()) - r;
                    if !(left > 0.0) {
                        out.push("patch must lie left of the line x₁ = x₂ cot α".into());
                    }
                    if let Some(Ok(f)) = self.patch_field() {
                        let vb = vmax_bound(&f);
                        if !(vb < s.alpha.sin()) {
                            out.push(format!("vmax_bound = {vb} must be below sin α = {}", s.alpha.sin()));
                        }
                    }
                    out.extend(self.monitor.violations(2));
                }
            },
            ScenarioKind::PointVortex => match &self.point_vortex {
                None => out.push("point_vortex scenario needs a point_vortex section".into()),
                Some(pv) => {
                    let n = pv.positions.len();
                    if n == 0 || pv.heights.len() != n || pv.speeds.len() != n {
                        out.push("point_vortex: positions, heights and speeds must have equal nonzero length".into());
                    }
                    if pv.heights.iter().any(|&h| !(h > 0.0)) || pv.speeds.iter().any(|&v| !(v > 0.0)) {
                        out.push("point_vortex: heights and speeds must be positive".into());
                    }
                    if self.ordered && n > 0 && pv.speeds.len() == n && pv.positions.len() == n {
                        let d0 = self.monitor.d0;
                        if pv.speeds.windows(2).any(|w| !(w[0] > w[1])) {
                            out.push("point_vortex: speeds must decrease from right to left".into());
                        }
                        if pv.positions.windows(2).any(|w| !(w[0] > w[1] + d0)) {
                            out.push(format!("point_vortex: neighbouring positions must be more than D₀ = {d0} apart"));
                        }
                    }
                    if !(pv.dt > 0.0 && pv.t_end > 0.0) {
                        out.push("point_vortex: dt and t_end must be positive".into());
                    }
                }
            },
            ScenarioKind::InequalitySuite => match &self.inequality {
                None => out.push("inequality_suite scenario needs an inequality section".into()),
                Some(q) => {
                    for e in q.sharp.iter().chain(&q.pairs).chain(&q.velocity) {
                        if let Err(err) = e.validate() {
                            out.push(err.to_string());
                        }
                    }
                    if q.decay_distances.len() < 2 {
                        out.push("decay_distances needs at least two entries".into());
                    }
                }
            },
            _ => {}
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_single_dipole_fills_defaults() {
        let c = parse_str(r#"{"scenario": "single_dipole", "dipoles": [{"speed": 1, "radius": 1, "center": 0}]}"#).unwrap();
        assert_eq!(c.h, 1.0 / 128.0);
        assert_eq!(c.integrator.dt, 2e-3);
        assert_eq!(c.integrator.scheme, Scheme::Rk4);
        let s = c.specs().unwrap()[0];
        assert!((s.speed() - 1.0).abs() < 1e-12 && (s.radius() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unordered_kappa_is_rejected() {
        let text = r#"{"scenario": "theorem_a", "dipoles": [
            {"kappa": 2, "mu": 3.14, "center": 20}, {"kappa": 3, "mu": 3.14, "center": 0}]}"#;
        let Err(CliError::Validation(v)) = parse_str(text) else { panic!("expected validation error") };
        assert!(v.iter().any(|m| m.starts_with("ordering")), "{v:?}");
    }

    #[test]
    fn violations_are_all_listed() {
        let text = r#"{"scenario": "theorem_a", "h": -1, "dipoles": [
            {"kappa": 2, "mu": 3.14, "center": 0}, {"kappa": 3, "mu": 3.14, "center": 5}]}"#;
        let Err(CliError::Validation(v)) = parse_str(text) else { panic!() };
        assert!(v.len() >= 3, "{v:?}");
    }

    #[test]
    fn strong_patch_fails_the_speed_hypothesis() {
        let text = r#"{"scenario": "theorem_b", "h": 0.03125,
            "theorem_b": {"alpha": 0.7853981633974483, "d": 12, "patch": {"center": [-2, 2], "area": 0.5, "omega": 4}}}"#;
        let Err(CliError::Validation(v)) = parse_str(text) else { panic!() };
        assert!(v.iter().any(|m| m.contains("vmax_bound")), "{v:?}");
    }

    #[test]
    fn unknown_fields_and_bad_json_are_parse_errors() {
        assert!(matches!(parse_str(r#"{"scenario": "single_dipole", "bogus": 1}"#), Err(CliError::Parse(_))));
        assert!(matches!(parse_str("{"), Err(CliError::Parse(_))));
    }

    #[test]
    fn point_vortex_ladder_must_be_ordered_and_separated() {
        let text = r#"{"scenario": "point_vortex", "monitor": {"d0": 20},
            "point_vortex": {"positions": [30, 0], "heights": [1, 1], "speeds": [0.2, 0.4], "dt": 0.1, "t_end": 1}}"#;
        let Err(CliError::Validation(v)) = parse_str(text) else { panic!() };
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains("speeds"));
        let far = text.replace("[0.2, 0.4]", "[0.4, 0.2]").replace("[30, 0]", "[19, 0]");
        let Err(CliError::Validation(v)) = parse_str(&far) else { panic!() };
        assert!(v[0].contains("apart"), "{v:?}");
    }
}
