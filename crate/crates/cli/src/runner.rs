//! Builds the initial field of a scenario, runs it and assembles the report.

use std::path::Path;
use std::time::Instant;

use lamb_lab::dynamics::{run, Flow, IntegratorConfig};
use lamb_lab::field::{norms, regrid, vmax_bound, GridSpec};
use lamb_lab::inequalities::{
    verify_interaction_bounds, verify_sharp_energy, verify_velocity_bounds, InteractionReport, SharpEnergyReport, VelocityReport,
};
use lamb_lab::lamb::{lamb_vorticity, DipoleSpec};
use lamb_lab::monitors::{
    check_theorem_a, check_theorem_b, enstrophy_audit, flux_consistency, gap_closure, impulse_balance, shift_trajectory,
    BootstrapReport, Diagnostician, DiagnosticsRecord, EnstrophyAudit, FluxConsistency, GapClosure, Geometry, ImpulseBalance,
    ShiftFit,
};
use lamb_lab::point_vortex::{run_ladder, LadderReport, PointVortices};
use lamb_lab::tree::{Method, TreeParams};
use lamb_lab::{ParticleField, Point, SimulationState};
use log::info;
use serde::Serialize;

use crate::config::{ScenarioConfig, ScenarioKind};
use crate::CliError;

/// Version tag of the JSON report layout.
pub const REPORT_SCHEMA: &str = "lamb-lab-report/1";

#[derive(Clone, Debug, Serialize)]
pub struct InequalityOutcome {
    pub sharp: Vec<SharpEnergyReport>,
    pub interaction: Option<InteractionReport>,
    pub velocity: Option<VelocityReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub name: String,
    pub scenario: ScenarioKind,
    pub config: ScenarioConfig,
    pub particles: usize,
    pub samples: usize,
    /// Every monitored condition held; decides the exit code.
    pub healthy: bool,
    pub bootstrap: Option<BootstrapReport>,
    pub shift_fits: Vec<ShiftFit>,
    pub flux_consistency: Option<FluxConsistency>,
    pub enstrophy_audit: Option<EnstrophyAudit>,
    pub impulse_balance: Option<ImpulseBalance>,
    pub gap: Option<GapClosure>,
    /// V_avr of a slanted run.
    pub v_avr: Option<f64>,
    pub vmax_bound: Option<f64>,
    pub point_vortex: Option<LadderReport<f64>>,
    pub inequality: Option<InequalityOutcome>,
}

/// A finished scenario: the report, the diagnostic series and the geometry
/// the series was measured against.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: RunReport,
    pub records: Vec<DiagnosticsRecord>,
    pub geometry: Option<Geometry>,
    pub final_state: Option<SimulationState>,
}

impl Outcome {
    /// Piece and border counts for the CSV header.
    pub fn layout(&self) -> (usize, usize) {
        match &self.geometry {
            Some(Geometry::Dipoles { specs, .. }) => (specs.len(), specs.len().saturating_sub(1)),
            Some(Geometry::Slanted { .. }) => (2, 1),
            None => (0, 0),
        }
    }
}

fn method(cfg: &ScenarioConfig) -> Method<f64> {
    if cfg.integrator.treecode {
        Method::Tree(TreeParams::default())
    } else {
        Method::Direct
    }
}

fn bump(p: &crate::config::Perturbation) -> impl Fn(Point<f64>) -> f64 + Sync + Copy {
    let c = Point::new(p.center[0], p.center[1]);
    let r2 = p.radius * p.radius;
    move |x: Point<f64>| {
        let s = 1.0 - x.dist2(c) / r2;
        if s > 0.0 {
            s * s * s
        } else {
            0.0
        }
    }
}

/// Amplitude giving the bump ‖·‖_{L²} + ‖·‖_{L¹*} = size at spacing h.
fn bump_amplitude(p: &crate::config::Perturbation, h: f64) -> Result<f64, CliError> {
    if p.size == 0.0 {
        return Ok(0.0);
    }
    let lo = Point::new(p.center[0] - p.radius, (p.center[1] - p.radius).max(0.0));
    let hi = Point::new(p.center[0] + p.radius, p.center[1] + p.radius);
    let f = ParticleField::discretize(bump(p), lo, hi, h)?;
    let n = norms(&f);
    Ok(p.size / (n.l2_squared.sqrt() + n.impulse))
}

/// Dipoles, bump and patch sampled together on one lattice aligned with
/// x₁ = 0, so overlapping parts add cell by cell. Labels: dipole index, then
/// one label for the bump and one for the patch.
pub fn initial_field(cfg: &ScenarioConfig, specs: &[DipoleSpec<f64>]) -> Result<ParticleField, CliError> {
    let h = cfg.h;
    let mut lo = Point::new(f64::INFINITY, 0.0);
    let mut hi = Point::new(f64::NEG_INFINITY, 0.0);
    let mut grow = |a: Point<f64>, b: Point<f64>| {
        lo.x1 = lo.x1.min(a.x1);
        hi.x1 = hi.x1.max(b.x1);
        hi.x2 = hi.x2.max(b.x2);
    };
    for s in specs {
        let (a, b) = s.bounding_box();
        grow(a, b);
    }
    let pert = match &cfg.perturbation {
        Some(p) => {
            grow(Point::new(p.center[0] - p.radius, 0.0), Point::new(p.center[0] + p.radius, p.center[1] + p.radius));
            Some((bump(p), bump_amplitude(p, h)?))
        }
        None => None,
    };
    let patch = cfg.theorem_b.map(|s| {
        let r = (s.patch.area / std::f64::consts::PI).sqrt();
        grow(Point::new(s.patch.center[0] - r, 0.0), Point::new(s.patch.center[0] + r, s.patch.center[1] + r));
        (Point::new(s.patch.center[0], s.patch.center[1]), r * r, s.patch.omega)
    });
    lo.x1 = (lo.x1 / h).floor() * h - h;
    hi.x1 += h;
    hi.x2 += h;
    let n = specs.len() as u32;
    let f = ParticleField::discretize_labeled(
        |x| {
            let mut best = (0.0, 0);
            let mut total = 0.0;
            let mut add = |w: f64, l: u32| {
                total += w;
                if w > best.0 {
                    best = (w, l);
                }
            };
            for (k, s) in specs.iter().enumerate() {
                add(lamb_vorticity(s, x), k as u32);
            }
            if let Some((b, a)) = pert {
                add(a * b(x), n);
            }
            if let Some((c, r2, w)) = patch {
                add(if x.dist2(c) < r2 { w } else { 0.0 }, n + 1);
            }
            (total, best.1)
        },
        lo,
        hi,
        h,
    )?;
    Ok(f)
}

/// Runs one scenario. Snapshots go to `snapshot_dir` when the config asks for them.
pub fn execute(cfg: &ScenarioConfig, snapshot_dir: Option<&Path>) -> Result<Outcome, CliError> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(CliError::Validation(v));
    }
    let mut report = RunReport {
        schema: REPORT_SCHEMA,
        name: cfg.name.clone(),
        scenario: cfg.scenario,
        config: cfg.clone(),
        particles: 0,
        samples: 0,
        healthy: true,
        bootstrap: None,
        shift_fits: Vec::new(),
        flux_consistency: None,
        enstrophy_audit: None,
        impulse_balance: None,
        gap: None,
        v_avr: None,
        vmax_bound: None,
        point_vortex: None,
        inequality: None,
    };
    match cfg.scenario {
        ScenarioKind::PointVortex => {
            let pv = cfg.point_vortex.as_ref().expect("validated");
            let vortices = PointVortices::from_speeds(&pv.positions, &pv.heights, &pv.speeds);
            let l = run_ladder(vortices, pv.dt, pv.t_end)?;
            report.healthy = l.max_height_drift <= pv.height_tolerance && l.max_relative_shift <= pv.shift_tolerance;
            report.point_vortex = Some(l);
            Ok(Outcome { report, records: Vec::new(), geometry: None, final_state: None })
        }
        ScenarioKind::InequalitySuite => {
            let q = cfg.inequality.as_ref().expect("validated");
            let m = method(cfg);
            let sharp = q.sharp.iter().map(|e| verify_sharp_energy(e, m)).collect::<Result<Vec<_>, _>>()?;
            let interaction = match &q.pairs {
                Some(e) => {
                    let f = e.members()?;
                    let pairs: Vec<_> = f.chunks_exact(2).map(|c| (c[0].clone(), c[1].clone())).collect();
                    Some(verify_interaction_bounds(&pairs, m))
                }
                None => None,
            };
            let velocity = match &q.velocity {
                Some(e) => Some(verify_velocity_bounds(e, &q.decay_distances, m)?),
                None => None,
            };
            report.healthy = sharp.iter().all(|r| r.pass)
                && interaction.as_ref().is_none_or(|r| r.pass)
                && velocity.as_ref().is_none_or(|r| r.pass);
            report.inequality = Some(InequalityOutcome { sharp, interaction, velocity });
            Ok(Outcome { report, records: Vec::new(), geometry: None, final_state: None })
        }
        _ => simulate(cfg, report, snapshot_dir),
    }
}

fn simulate(cfg: &ScenarioConfig, mut report: RunReport, snapshot_dir: Option<&Path>) -> Result<Outcome, CliError> {
    let (specs, geometry) = match cfg.scenario {
        ScenarioKind::TheoremB => {
            let s = cfg.theorem_b.expect("validated");
            let spec = DipoleSpec::normalized(s.d);
            let patch = cfg.patch_field().expect("validated")?;
            let vb = vmax_bound(&patch);
            let v_avr = 0.5 * (1.0 + vb / s.alpha.sin());
            report.v_avr = Some(v_avr);
            report.vmax_bound = Some(vb);
            (vec![spec], Geometry::Slanted { spec, alpha: s.alpha, v_avr, d: s.d })
        }
        _ => {
            let specs = cfg.specs()?;
            (specs.clone(), Geometry::Dipoles { specs, d0: cfg.monitor.d0 })
        }
    };
    let field = initial_field(cfg, &specs)?;
    report.particles = field.len();
    let it = cfg.integrator;
    let mut icfg = IntegratorConfig::new(it.dt, it.t_end);
    icfg.scheme = it.scheme;
    icfg.remesh_every = it.remesh_every;
    icfg.treecode = it.treecode;
    let mut diag = Diagnostician::new(geometry.clone(), icfg.method())?;
    info!("{}: {} particles, {} steps", cfg.name, field.len(), icfg.steps());
    let clock = Instant::now();
    let mut records = Vec::new();
    let every = cfg.output.snapshot_every;
    let last = run(SimulationState::new(field), &icfg, cfg.monitor.cadence, |state| {
        let r = diag.observe(state)?;
        info!("t = {:.3}  E = {:.6}  wall {:.1}s", r.t, r.energy, clock.elapsed().as_secs_f64());
        if let (Some(dir), true) = (snapshot_dir, every > 0 && records.len() % every.max(1) == 0) {
            let g = regrid(&state.field, GridSpec::covering(&state.field, state.field.h, 0.0))?;
            let path = dir.join(format!("snapshot_{:07}.txt", state.step_index));
            let file = std::fs::File::create(&path).map_err(|e| lamb_lab::Error::Invalid(format!("{}: {e}", path.display())))?;
            g.write_snapshot(std::io::BufWriter::new(file))
                .map_err(|e| lamb_lab::Error::Invalid(format!("{}: {e}", path.display())))?;
        }
        records.push(r);
        Ok(Flow::Continue)
    })?;
    report.samples = records.len();
    let bootstrap = match cfg.scenario {
        ScenarioKind::TheoremB => check_theorem_b(&records, &geometry, &cfg.monitor)?,
        _ => check_theorem_a(&records, &geometry, &cfg.monitor)?,
    };
    report.healthy = bootstrap.healthy;
    report.bootstrap = Some(bootstrap);
    report.shift_fits = shift_trajectory(&records, &geometry);
    if cfg.scenario == ScenarioKind::TheoremA && specs.len() >= 2 {
        let a = cfg.audit;
        report.flux_consistency = Some(flux_consistency(&records, 0, a.flux_window)?);
        report.enstrophy_audit = Some(enstrophy_audit(&records, 0, a.flux_slack)?);
        report.impulse_balance = Some(impulse_balance(&records, 0, a.impulse_factor)?);
        if !cfg.ordered {
            let rate = specs[1].speed() - specs[0].speed();
            let contact = 2.0 * (specs[0].radius() + specs[1].radius());
            report.gap = Some(gap_closure(&records, rate, contact)?);
        }
    }
    Ok(Outcome { report, records, geometry: Some(geometry), final_state: Some(last) })
}
