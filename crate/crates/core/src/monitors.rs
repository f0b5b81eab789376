//! Per-sample diagnostics of a running simulation and the bootstrap checks
//! evaluated over a finished series of samples.
//!
//! Pieces are numbered from the right (piece 0 holds the leading dipole) and
//! border k separates pieces k and k + 1. Partial sums K_{≤k}, μ_{≤k} run over
//! pieces 0..=k, i.e. everything right of border k.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decomp::{
    eulerian_split, flux, flux_masses, impulse_exchange, lagrangian_gain, nearest_lamb_distance_near, pairwise_exchange,
    shift_estimate, split_pieces, BorderFamily, FluxWeight, ShiftProbe,
};
use crate::dynamics::SimulationState;
use crate::field::{energy, interaction_energy, norms, ParticleField};
use crate::kernels::{half_plane, self_velocities, velocities};
use crate::lamb::{lamb_invariants, DipoleSpec};
use crate::tree::{Method, Want};
use crate::{Error, Point, Result};

/// Thresholds of the bootstrap assumptions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub delta: f64,
    pub epsilon: f64,
    pub d0: f64,
    /// δ₀ = δ/C₀.
    pub c0: f64,
    /// Integrator steps between samples.
    pub cadence: usize,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self { delta: 0.05, epsilon: 0.05, d0: 12.0, c0: 200.0, cadence: 25 }
    }
}

impl MonitorConfig {
    pub fn delta0(&self) -> f64 {
        self.delta / self.c0
    }

    /// Violated invariants for an N-piece scenario.
    pub fn violations(&self, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("delta", self.delta), ("epsilon", self.epsilon), ("d0", self.d0)] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.c0 >= 100.0 * n as f64) {
            out.push(format!("c0 = {} must be at least 100N = {}", self.c0, 100 * n));
        }
        if self.cadence == 0 {
            out.push("cadence must be at least 1".into());
        }
        out
    }
}

/// What the pieces are measured against.
#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    /// Dipoles separated by vertical borders; `specs` ordered right to left
    /// and centred at their initial positions p̄_i. One spec is a lone dipole.
    Dipoles { specs: Vec<DipoleSpec<f64>>, d0: f64 },
    /// A dipole right of the slanted line x₁ = x₂ cot α + V_avr t, started
    /// at x₁ = `spec.center_x1`; `d` sets the L⁺ offset and the probe width.
    Slanted { spec: DipoleSpec<f64>, alpha: f64, v_avr: f64, d: f64 },
}

impl Geometry {
    pub fn borders(&self) -> Result<BorderFamily<f64>> {
        match self {
            Self::Dipoles { specs, d0 } => {
                for w in specs.windows(2) {
                    if !(w[0].center_x1 > w[1].center_x1) {
                        return Err(Error::Invalid("dipoles must be listed right to left".into()));
                    }
                }
                let p = specs.iter().map(|s| s.center_x1).collect();
                let v = specs.iter().map(|s| s.speed()).collect();
                BorderFamily::vertical(p, v, *d0)
            }
            Self::Slanted { alpha, v_avr, d, .. } => Ok(BorderFamily::Slanted { alpha: *alpha, v_avr: *v_avr, d: *d }),
        }
    }

    /// Reference dipole of each piece, if it has one.
    pub fn references(&self) -> Vec<Option<DipoleSpec<f64>>> {
        match self {
            Self::Dipoles { specs, .. } => specs.iter().copied().map(Some).collect(),
            Self::Slanted { spec, .. } => vec![Some(*spec), None],
        }
    }

    fn probes(&self) -> Vec<Option<ShiftProbe<f64>>> {
        match self {
            Self::Dipoles { specs, .. } if specs.len() == 1 => vec![Some(ShiftProbe::isolated(specs[0].radius()))],
            Self::Dipoles { specs, d0 } => specs.iter().map(|s| Some(ShiftProbe::new(s.radius(), *d0))).collect(),
            Self::Slanted { spec, d, .. } => vec![Some(ShiftProbe::new(spec.radius(), *d)), None],
        }
    }
}

/// Quantities attached to one piece.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PieceRecord {
    pub enstrophy: f64,
    pub impulse: f64,
    pub circulation: f64,
    pub energy: f64,
    /// Root of the shift moment H(t, p); NaN when it has none.
    pub shift: f64,
    pub lamb_distance: f64,
    pub lamb_tau: f64,
    /// ‖·‖_{L¹*} + ‖·‖²_{L²} of the left and right error strips.
    pub err_left: f64,
    pub err_right: f64,
    /// Σ_{j≠i} ∫ u_{j,2} ω_i.
    pub exchange: f64,
}

/// Quantities attached to one border.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BorderRecord {
    /// L_k(t) at x₂ = 0.
    pub position: f64,
    pub flux_enstrophy: f64,
    pub flux_impulse: f64,
    pub flux_energy: f64,
    /// max |u| over a sample lattice of the strip [L_k⁻, L_k⁺].
    pub strip_max_u: f64,
    /// Particles found right of the border that were left of it at the previous sample.
    pub back_crossings: usize,
    pub gain_l1: f64,
    pub gain_l2_squared: f64,
    /// K_{≤k}(0) − K_{≤k}(t).
    pub enstrophy_loss: f64,
    /// Running ∫ Σ_{gain} γ (u from the left error strip of piece k)₂ dt.
    pub gain_error_integral: f64,
}

/// One time sample of everything the monitors look at.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step: usize,
    pub pieces: Vec<PieceRecord>,
    pub borders: Vec<BorderRecord>,
    pub energy: f64,
    /// E − Σ E_i = 2 Σ_{i<j} E_inter[ω_i, ω_j].
    pub interaction_energy: f64,
    pub impulse: f64,
    pub circulation: f64,
    /// Σ γ_j u₁(x_j) = d/dt ∫ x₁ω.
    pub mean_u1: f64,
    pub max_speed: f64,
    /// sup over the slanted border of u₁ − cot α u₂; NaN for vertical borders.
    pub slanted_sup: f64,
}

impl DiagnosticsRecord {
    /// Version tag of the CSV layout produced by [`header`](Self::header) and [`row`](Self::row).
    pub const SCHEMA: &'static str = "lamb-lab-diagnostics/1";

    pub fn header(n_pieces: usize, n_borders: usize) -> Vec<String> {
        let mut h: Vec<String> =
            ["t", "step", "energy", "interaction_energy", "impulse", "circulation", "mean_u1", "max_speed", "slanted_sup"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        for i in 0..n_pieces {
            for c in PIECE_COLUMNS {
                h.push(format!("{c}_{i}"));
            }
        }
        for k in 0..n_borders {
            for c in BORDER_COLUMNS {
                h.push(format!("{c}_{k}"));
            }
        }
        h
    }

    pub fn row(&self) -> Vec<f64> {
        let mut r = vec![
            self.t,
            self.step as f64,
            self.energy,
            self.interaction_energy,
            self.impulse,
            self.circulation,
            self.mean_u1,
            self.max_speed,
            self.slanted_sup,
        ];
        for p in &self.pieces {
            r.extend([
                p.enstrophy,
                p.impulse,
                p.circulation,
                p.energy,
                p.shift,
                p.lamb_distance,
                p.lamb_tau,
                p.err_left,
                p.err_right,
                p.exchange,
            ]);
        }
        for b in &self.borders {
            r.extend([
                b.position,
                b.flux_enstrophy,
                b.flux_impulse,
                b.flux_energy,
                b.strip_max_u,
                b.back_crossings as f64,
                b.gain_l1,
                b.gain_l2_squared,
                b.enstrophy_loss,
                b.gain_error_integral,
            ]);
        }
        r
    }
}

const PIECE_COLUMNS: [&str; 10] =
    ["K", "mu", "circulation", "E", "p", "lamb_distance", "lamb_tau", "err_left", "err_right", "exchange"];
const BORDER_COLUMNS: [&str; 10] = [
    "L",
    "F_enstrophy",
    "F_impulse",
    "F_energy",
    "strip_max_u",
    "back_crossings",
    "gain_l1",
    "gain_l2_squared",
    "enstrophy_loss",
    "gain_error_integral",
];

/// Stateful sampler: remembers the initial partial enstrophies, the last
/// shifts (warm starts), the last positions (crossing detection) and the
/// running gain–error integrals.
pub struct Diagnostician {
    geometry: Geometry,
    borders: BorderFamily<f64>,
    refs: Vec<Option<DipoleSpec<f64>>>,
    probes: Vec<Option<ShiftProbe<f64>>>,
    method: Method<f64>,
    k_le0: Vec<f64>,
    last: Option<Previous>,
}

struct Previous {
    t: f64,
    pos: Vec<Point<f64>>,
    shift: Vec<f64>,
    gain_error: Vec<f64>,
    integral: Vec<f64>,
}

impl Diagnostician {
    pub fn new(geometry: Geometry, method: Method<f64>) -> Result<Self> {
        let borders = geometry.borders()?;
        Ok(Self {
            refs: geometry.references(),
            probes: geometry.probes(),
            geometry,
            borders,
            method,
            k_le0: Vec::new(),
            last: None,
        })
    }

    pub fn borders(&self) -> &BorderFamily<f64> {
        &self.borders
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn observe(&mut self, state: &SimulationState<f64>) -> Result<DiagnosticsRecord> {
        let (t, field, method) = (state.t, &state.field, self.method);
        let borders = &self.borders;
        let pieces = split_pieces(field, borders, t);
        let n = pieces.len();
        let nb = borders.n_borders();
        let vertical = matches!(borders, BorderFamily::Vertical { .. });

        let mut rec = DiagnosticsRecord { t, step: state.step_index, slanted_sup: f64::NAN, ..Default::default() };
        let all = norms(field);
        rec.impulse = all.impulse;
        rec.circulation = all.l1;

        for (i, piece) in pieces.iter().enumerate() {
            let nm = norms(piece);
            let split = eulerian_split(piece, i, borders, t);
            let size = |f: &ParticleField<f64>| {
                let m = norms(f);
                m.impulse + m.l2_squared
            };
            let mut pr = PieceRecord {
                enstrophy: nm.l2_squared,
                impulse: nm.impulse,
                circulation: nm.l1,
                energy: energy(piece, method),
                shift: f64::NAN,
                lamb_distance: f64::NAN,
                lamb_tau: f64::NAN,
                err_left: size(&split.err_left),
                err_right: size(&split.err_right),
                exchange: impulse_exchange(&pieces, i, method),
            };
            if let (Some(spec), Some(probe)) = (self.refs[i], self.probes[i]) {
                let predicted = match &self.last {
                    Some(prev) if prev.shift[i].is_finite() => prev.shift[i] + spec.speed() * (t - prev.t),
                    _ => piece.center_x1().unwrap_or(spec.center_x1),
                };
                let mut p = shift_estimate(piece, &probe, predicted);
                if p.is_err() {
                    if let Some(c) = piece.center_x1() {
                        p = shift_estimate(piece, &probe, c);
                    }
                }
                pr.shift = p.unwrap_or(f64::NAN);
                let centre = if pr.shift.is_finite() { pr.shift } else { predicted };
                let d = nearest_lamb_distance_near(piece, &spec, centre, spec.radius());
                pr.lamb_distance = d.distance;
                pr.lamb_tau = d.tau_star;
            }
            rec.pieces.push(pr);
        }

        let mut inter = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                inter += 2.0 * interaction_energy(&pieces[i], &pieces[j], method);
            }
        }
        rec.interaction_energy = inter;
        rec.energy = rec.pieces.iter().map(|p| p.energy).sum::<f64>() + inter;

        let u = self_velocities(field, method);
        rec.mean_u1 = u.iter().zip(&field.circulation).map(|(u, g)| g * u[0]).sum();
        rec.max_speed = u.iter().map(|u| u[0].hypot(u[1])).fold(0.0, f64::max);

        let top = field.pos.iter().map(|p| p.x2).fold(0.0, f64::max) + 1.0;
        if let BorderFamily::Slanted { alpha, .. } = borders {
            let cot = 1.0 / alpha.tan();
            let rows = (top / field.h).ceil() as usize + 1;
            let line: Vec<Point<f64>> = (0..rows)
                .map(|j| {
                    let x2 = j as f64 * field.h;
                    Point::new(borders.position(0, t, x2), x2)
                })
                .collect();
            rec.slanted_sup =
                velocities(field, &line, method).iter().map(|u| u[0] - cot * u[1]).fold(f64::NEG_INFINITY, f64::max);
        }

        let k_le: Vec<f64> = rec
            .pieces
            .iter()
            .scan(0.0, |s, p| {
                *s += p.enstrophy;
                Some(*s)
            })
            .collect();
        if self.k_le0.is_empty() {
            self.k_le0 = k_le.clone();
        }

        let ens = flux_masses(field, FluxWeight::Enstrophy);
        let imp = flux_masses(field, FluxWeight::Impulse);
        let mut gain_error = vec![0.0; nb];
        for k in 0..nb {
            let mut b = BorderRecord {
                position: borders.position(k, t, 0.0),
                flux_enstrophy: f64::NAN,
                flux_impulse: f64::NAN,
                flux_energy: f64::NAN,
                strip_max_u: f64::NAN,
                enstrophy_loss: self.k_le0[k] - k_le[k],
                ..Default::default()
            };
            if vertical {
                b.flux_enstrophy = flux(field, &ens, borders, k, t, method)?;
                b.flux_impulse = flux(field, &imp, borders, k, t, method)?;
                let psi = line_stream_masses(field, &pieces[k], b.position, method);
                b.flux_energy = flux(field, &psi, borders, k, t, method)?;
                b.strip_max_u = strip_max_speed(field, borders, k, t, top, method);
            }
            if let Some(prev) = &self.last {
                if prev.pos.len() == field.len() {
                    b.back_crossings = prev
                        .pos
                        .iter()
                        .zip(&field.pos)
                        .filter(|(&a, &z)| !borders.right_of(k, prev.t, a) && borders.right_of(k, t, z))
                        .count();
                }
            }
            match lagrangian_gain(field, borders, k + 1, t) {
                Ok(gain) => {
                    let g = norms(&gain);
                    b.gain_l1 = g.l1;
                    b.gain_l2_squared = g.l2_squared;
                    let strip = eulerian_split(&pieces[k], k, borders, t).err_left;
                    gain_error[k] = pairwise_exchange(&gain, &strip, method);
                }
                Err(_) => {
                    b.gain_l1 = f64::NAN;
                    b.gain_l2_squared = f64::NAN;
                    gain_error[k] = f64::NAN;
                }
            }
            b.gain_error_integral = match &self.last {
                Some(prev) => prev.integral[k] + 0.5 * (prev.gain_error[k] + gain_error[k]) * (t - prev.t),
                None => 0.0,
            };
            rec.borders.push(b);
        }

        self.last = Some(Previous {
            t,
            pos: field.pos.clone(),
            shift: rec.pieces.iter().map(|p| p.shift).collect(),
            integral: rec.borders.iter().map(|b| b.gain_error_integral).collect(),
            gain_error,
        });
        Ok(rec)
    }
}

/// −ψ_piece γ for particles within one cell of the line x₁ = `line` and
/// zero elsewhere; only those particles enter [`flux`].
fn line_stream_masses(field: &ParticleField<f64>, piece: &ParticleField<f64>, line: f64, method: Method<f64>) -> Vec<f64> {
    let near: Vec<usize> = (0..field.len()).filter(|&j| (field.pos[j].x1 - line).abs() < field.h).collect();
    let mut out = vec![0.0; field.len()];
    if near.is_empty() || piece.is_empty() {
        return out;
    }
    let targets: Vec<Point<f64>> = near.iter().map(|&j| field.pos[j]).collect();
    let s = half_plane(&piece.pos, &piece.circulation, &targets, field.smoothing(), Want::POTENTIAL, method);
    for (&j, s) in near.iter().zip(&s) {
        out[j] = -s.psi * field.circulation[j];
    }
    out
}

/// max |u| over a 9-column lattice spanning [L_k⁻, L_k⁺] with rows every 1/8.
fn strip_max_speed(
    field: &ParticleField<f64>,
    borders: &BorderFamily<f64>,
    k: usize,
    t: f64,
    top: f64,
    method: Method<f64>,
) -> f64 {
    let (a, b) = (borders.minus(k, t, 0.0), borders.plus(k, t, 0.0));
    if !(b > a) {
        return 0.0;
    }
    let rows = (top * 8.0).ceil() as usize;
    let mut pts = Vec::with_capacity(9 * (rows + 1));
    for i in 0..9 {
        for j in 0..=rows {
            pts.push(Point::new(a + (b - a) * i as f64 / 8.0, j as f64 / 8.0));
        }
    }
    velocities(field, &pts, method).iter().map(|u| u[0].hypot(u[1])).fold(0.0, f64::max)
}

/// Worst value of one margin (threshold minus value, positive when it holds).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub name: String,
    pub worst: f64,
    pub t_worst: f64,
    pub pass: bool,
    /// Whether the margin must hold strictly (> 0) rather than ≥ 0.
    pub strict: bool,
}

impl Margin {
    fn track(name: String, strict: bool, series: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut worst, mut t_worst) = (f64::INFINITY, f64::NAN);
        let mut first_bad = None;
        for (t, m) in series {
            // NaN counts as a violation
            if !(m >= worst) {
                worst = m;
                t_worst = t;
            }
            let ok = if strict { m > 0.0 } else { m >= 0.0 };
            if !ok && first_bad.is_none() {
                first_bad = Some(t);
            }
        }
        Self { name, worst, t_worst, pass: first_bad.is_none(), strict }
    }
}

/// Bootstrap margins over a run, and the measured ratios of the quantities
/// that the bootstrap assumptions control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub theorem: String,
    pub delta: f64,
    pub epsilon: f64,
    pub margins: Vec<Margin>,
    /// All margins positive at every sample.
    pub healthy: bool,
    /// First sample time at which any margin fails.
    pub first_violation: Option<f64>,
    pub ratios: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
}

fn first_violation(records: &[DiagnosticsRecord], margin: impl Fn(&DiagnosticsRecord) -> Vec<(f64, bool)>) -> Option<f64> {
    records.iter().find(|r| margin(r).iter().any(|&(m, strict)| if strict { !(m > 0.0) } else { !(m >= 0.0) })).map(|r| r.t)
}

fn max_over(records: &[DiagnosticsRecord], f: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
    records.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
}

fn min_over(records: &[DiagnosticsRecord], f: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
    records.iter().map(f).fold(f64::INFINITY, f64::min)
}

/// NaN-propagating maximum.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// (B1) K_{≤k}(t) ≤ K_{≤k}(0) + δ, (B2) μ_{≤k}(t) ≤ μ_{≤k}(0) + δ for every
/// border k, and (B3) E_i(t) ≥ E_i(0) − δ for every piece.
pub fn check_theorem_a(records: &[DiagnosticsRecord], geometry: &Geometry, cfg: &MonitorConfig) -> Result<BootstrapReport> {
    let Geometry::Dipoles { specs, .. } = geometry else {
        return Err(Error::Invalid("check_theorem_a needs vertical-border geometry".into()));
    };
    let r0 = records.first().ok_or_else(|| Error::Invalid("no diagnostic records".into()))?;
    let n = r0.pieces.len();
    let delta = cfg.delta;
    let partial = |r: &DiagnosticsRecord, k: usize, f: fn(&PieceRecord) -> f64| -> f64 { r.pieces[..=k].iter().map(f).sum() };

    let b1 = |r: &DiagnosticsRecord, k: usize| partial(r0, k, |p| p.enstrophy) + delta - partial(r, k, |p| p.enstrophy);
    let b2 = |r: &DiagnosticsRecord, k: usize| partial(r0, k, |p| p.impulse) + delta - partial(r, k, |p| p.impulse);
    let b3 = |r: &DiagnosticsRecord, i: usize| r.pieces[i].energy - (r0.pieces[i].energy - delta);

    let mut margins = Vec::new();
    for k in 0..n.saturating_sub(1) {
        margins.push(Margin::track(format!("B1_{k}"), false, records.iter().map(|r| (r.t, b1(r, k)))));
        margins.push(Margin::track(format!("B2_{k}"), false, records.iter().map(|r| (r.t, b2(r, k)))));
    }
    for i in 0..n {
        margins.push(Margin::track(format!("B3_{i}"), false, records.iter().map(|r| (r.t, b3(r, i)))));
    }
    let first = first_violation(records, |r| {
        let mut v: Vec<(f64, bool)> = (0..n.saturating_sub(1)).flat_map(|k| [(b1(r, k), false), (b2(r, k), false)]).collect();
        v.extend((0..n).map(|i| (b3(r, i), false)));
        v
    });

    let mut ratios = BTreeMap::new();
    let mut flags = BTreeMap::new();
    let closeness = max_over(records, |r| {
        specs
            .iter()
            .zip(&r.pieces)
            .map(|(s, p)| {
                let inv = lamb_invariants(s);
                (p.enstrophy - inv.enstrophy).abs() + (p.impulse - inv.impulse).abs() + (p.energy - inv.energy).abs()
            })
            .sum()
    });
    ratios.insert("closeness/delta".into(), closeness / delta);
    ratios.insert("error/delta".into(), max_over(records, |r| r.pieces.iter().map(|p| p.err_left + p.err_right).sum()) / delta);
    ratios.insert("interaction/delta^1.5".into(), max_over(records, |r| r.interaction_energy) / delta.powf(1.5));
    let inter_min = min_over(records, |r| r.interaction_energy);
    ratios.insert("interaction_min".into(), inter_min);
    flags.insert("interaction_nonnegative".into(), inter_min >= 0.0);

    let gain_excess =
        max_over(records, |r| r.borders.iter().map(|b| b.gain_l2_squared - b.enstrophy_loss).fold(f64::NEG_INFINITY, nan_max));
    ratios.insert("gain_excess".into(), gain_excess);
    let back = records.iter().flat_map(|r| r.borders.iter()).map(|b| b.back_crossings).sum::<usize>();
    ratios.insert("back_crossings".into(), back as f64);
    flags.insert("one_way_crossing".into(), back == 0);
    let strip = max_over(records, |r| {
        (0..r.borders.len())
            .map(|k| r.borders[k].strip_max_u / (cfg.epsilon.sqrt() * 0.5 * (specs[k].speed() + specs[k + 1].speed())))
            .fold(f64::NEG_INFINITY, f64::max)
    });
    ratios.insert("strip_u/(eps^0.5*Ldot)".into(), strip);
    let gain_err = max_over(records, |r| r.borders.iter().map(|b| b.gain_error_integral.abs()).fold(f64::NEG_INFINITY, f64::max));
    ratios.insert("gain_error/delta^(4/3)".into(), gain_err / delta.powf(4.0 / 3.0));
    let (u_lo, u_hi) = (min_over(records, |r| r.mean_u1), max_over(records, |r| r.mean_u1));
    ratios.insert("mean_u1_min".into(), u_lo);
    ratios.insert("mean_u1_max".into(), u_hi);
    flags.insert("mean_u1_positive".into(), u_lo > 0.0);
    let v1 = specs.iter().map(|s| s.speed()).fold(0.0, f64::max);
    ratios.insert("max_speed/(5N*V1)".into(), max_over(records, |r| r.max_speed) / (5.0 * n as f64 * v1));
    let dist = max_over(records, |r| r.pieces.iter().map(|p| p.lamb_distance).fold(f64::NEG_INFINITY, nan_max));
    ratios.insert("lamb_distance_max".into(), dist);
    ratios.insert("lamb_distance/epsilon".into(), dist / cfg.epsilon);
    let shift = max_shift_deviation(records, &specs.iter().map(|s| (s.center_x1, s.speed())).collect::<Vec<_>>());
    ratios.insert("shift_deviation".into(), shift);
    ratios.insert("shift_deviation/eps^0.5".into(), shift / cfg.epsilon.sqrt());

    Ok(BootstrapReport {
        theorem: "A".into(),
        delta,
        epsilon: cfg.epsilon,
        healthy: margins.iter().all(|m| m.pass),
        first_violation: first,
        margins,
        ratios,
        flags,
    })
}

/// (B1′) sup over the slanted border of u₁ − cot α u₂ < V_avr (strict),
/// (B2′) μ_r(t) ≤ μ_r(0) + δ, (B3′) E_r(t) ≥ E_r(0) − δ.
pub fn check_theorem_b(records: &[DiagnosticsRecord], geometry: &Geometry, cfg: &MonitorConfig) -> Result<BootstrapReport> {
    let Geometry::Slanted { spec, v_avr, .. } = geometry else {
        return Err(Error::Invalid("check_theorem_b needs slanted-border geometry".into()));
    };
    let r0 = records.first().ok_or_else(|| Error::Invalid("no diagnostic records".into()))?;
    let delta = cfg.delta;
    let b1 = |r: &DiagnosticsRecord| v_avr - r.slanted_sup;
    let b2 = |r: &DiagnosticsRecord| r0.pieces[0].impulse + delta - r.pieces[0].impulse;
    let b3 = |r: &DiagnosticsRecord| r.pieces[0].energy - (r0.pieces[0].energy - delta);
    let margins = vec![
        Margin::track("B1'".into(), true, records.iter().map(|r| (r.t, b1(r)))),
        Margin::track("B2'".into(), false, records.iter().map(|r| (r.t, b2(r)))),
        Margin::track("B3'".into(), false, records.iter().map(|r| (r.t, b3(r)))),
    ];
    let first = first_violation(records, |r| vec![(b1(r), true), (b2(r), false), (b3(r), false)]);

    let mut ratios = BTreeMap::new();
    let mut flags = BTreeMap::new();
    ratios.insert("v_avr".into(), *v_avr);
    ratios.insert("slanted_sup_max".into(), max_over(records, |r| r.slanted_sup));
    let dist = max_over(records, |r| r.pieces[0].lamb_distance);
    ratios.insert("lamb_distance_max".into(), dist);
    ratios.insert("lamb_distance/epsilon".into(), dist / cfg.epsilon);
    let shift = max_shift_deviation(records, &[(spec.center_x1, spec.speed())]);
    ratios.insert("shift_deviation".into(), shift);
    ratios.insert("shift_deviation/eps^0.5".into(), shift / cfg.epsilon.sqrt());
    let back = records.iter().flat_map(|r| r.borders.iter()).map(|b| b.back_crossings).sum::<usize>();
    ratios.insert("back_crossings".into(), back as f64);
    flags.insert("one_way_crossing".into(), back == 0);
    let k_gain = max_over(records, |r| r.pieces[0].enstrophy - r0.pieces[0].enstrophy);
    ratios.insert("K_r_increase".into(), k_gain);

    Ok(BootstrapReport {
        theorem: "B".into(),
        delta,
        epsilon: cfg.epsilon,
        healthy: margins.iter().all(|m| m.pass),
        first_violation: first,
        margins,
        ratios,
        flags,
    })
}

/// max over samples and pieces of |p_i(t) − p̄_i − V̄_i t|/(1 + t).
fn max_shift_deviation(records: &[DiagnosticsRecord], reference: &[(f64, f64)]) -> f64 {
    let t0 = records.first().map_or(0.0, |r| r.t);
    max_over(records, |r| {
        let s = r.t - t0;
        reference
            .iter()
            .zip(&r.pieces)
            .map(|(&(p0, v), p)| (p.shift - p0 - v * s).abs() / (1.0 + s))
            .fold(f64::NEG_INFINITY, nan_max)
    })
}

/// Least-squares line through one piece's shift series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftFit {
    pub piece: usize,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub intercept: f64,
    pub slope: f64,
    /// |slope − V̄|.
    pub speed_error: f64,
    /// max |p − a − bt|/(1 + t).
    pub max_residual: f64,
    /// max |p − p̄ − V̄t|/(1 + t).
    pub max_deviation: f64,
}

/// Fits p_i(t) ≈ a + bt for every piece with a reference dipole; samples
/// whose shift is undefined are skipped. Times are measured from the first record.
pub fn shift_trajectory(records: &[DiagnosticsRecord], geometry: &Geometry) -> Vec<ShiftFit> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let t0 = first.t;
    geometry
        .references()
        .iter()
        .enumerate()
        .filter_map(|(i, spec)| {
            let spec = (*spec)?;
            let (t, p): (Vec<f64>, Vec<f64>) = records
                .iter()
                .filter_map(|r| r.pieces.get(i).map(|pc| (r.t - t0, pc.shift)))
                .filter(|(_, p)| p.is_finite())
                .unzip();
            let (a, b) = linear_fit(&t, &p)?;
            let over =
                |f: &dyn Fn(f64, f64) -> f64| t.iter().zip(&p).map(|(&s, &q)| f(s, q).abs() / (1.0 + s)).fold(0.0, f64::max);
            Some(ShiftFit {
                piece: i,
                intercept: a,
                slope: b,
                speed_error: (b - spec.speed()).abs(),
                max_residual: over(&|s, q| q - a - b * s),
                max_deviation: over(&|s, q| q - spec.center_x1 - spec.speed() * s),
                t,
                p,
            })
        })
        .collect()
}

/// Finite-difference enstrophy rate of the pieces right of a border against
/// the enstrophy flux across it, averaged over consecutive windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxConsistency {
    pub border: usize,
    pub window: f64,
    /// (t_start, t_end, ΔK_{≤k}/Δt, mean F_k[ω²]).
    pub windows: Vec<(f64, f64, f64, f64)>,
    /// ‖ΔK/Δt + F̄‖ / ‖F̄‖ in ℓ² over the windows; NaN without a flux signal.
    pub relative_l2: f64,
}

fn partial_sum(r: &DiagnosticsRecord, k: usize, f: fn(&PieceRecord) -> f64) -> f64 {
    r.pieces[..=k].iter().map(f).sum()
}

/// Trapezoid integrals ∫_{t_0}^{t_j} f over the record times.
fn running_integral(records: &[DiagnosticsRecord], f: impl Fn(&DiagnosticsRecord) -> f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(records.len());
    for (j, r) in records.iter().enumerate() {
        if j > 0 {
            let q = &records[j - 1];
            acc += 0.5 * (f(q) + f(r)) * (r.t - q.t);
        }
        out.push(acc);
    }
    out
}

/// Windows start at the first record and hold as many samples as fit in
/// `window`; a trailing partial window is dropped.
pub fn flux_consistency(records: &[DiagnosticsRecord], border: usize, window: f64) -> Result<FluxConsistency> {
    let r0 = records.first().ok_or_else(|| Error::Invalid("no diagnostic records".into()))?;
    if border >= r0.borders.len() {
        return Err(Error::Invalid(format!("no border {border}")));
    }
    let flux = running_integral(records, |r| r.borders[border].flux_enstrophy);
    let mut windows = Vec::new();
    let mut a = 0;
    for b in 1..records.len() {
        if records[b].t - records[a].t >= window * (1.0 - 1e-9) {
            let dt = records[b].t - records[a].t;
            let dk = partial_sum(&records[b], border, |p| p.enstrophy) - partial_sum(&records[a], border, |p| p.enstrophy);
            windows.push((records[a].t, records[b].t, dk / dt, (flux[b] - flux[a]) / dt));
            a = b;
        }
    }
    let num: f64 = windows.iter().map(|w| (w.2 + w.3).powi(2)).sum();
    let den: f64 = windows.iter().map(|w| w.3 * w.3).sum();
    let relative_l2 = if den > 0.0 { (num / den).sqrt() } else { f64::NAN };
    Ok(FluxConsistency { border, window, windows, relative_l2 })
}

/// Monotonicity of the enstrophy right of a border.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnstrophyAudit {
    pub border: usize,
    /// max_t K_{≤k}(t) − K_{≤k}(0).
    pub max_increase: f64,
    /// −min_t F_k[ω²](t), positive when some sample flux is negative.
    pub max_negative_flux: f64,
    /// K_{≤k}(0) − min_t K_{≤k}(t).
    pub total_loss: f64,
    pub peak_flux: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Slack is `rel_slack` of the measured loss (resp. peak flux) plus round-off
/// on K_{≤k}(0).
pub fn enstrophy_audit(records: &[DiagnosticsRecord], border: usize, rel_slack: f64) -> Result<EnstrophyAudit> {
    let r0 = records.first().ok_or_else(|| Error::Invalid("no diagnostic records".into()))?;
    if border >= r0.borders.len() {
        return Err(Error::Invalid(format!("no border {border}")));
    }
    let k0 = partial_sum(r0, border, |p| p.enstrophy);
    let ks: Vec<f64> = records.iter().map(|r| partial_sum(r, border, |p| p.enstrophy)).collect();
    let max_increase = ks.iter().map(|k| k - k0).fold(f64::NEG_INFINITY, f64::max);
    let total_loss = k0 - ks.iter().copied().fold(f64::INFINITY, f64::min);
    let fl: Vec<f64> = records.iter().map(|r| r.borders[border].flux_enstrophy).collect();
    let max_negative_flux = -fl.iter().copied().fold(f64::INFINITY, f64::min);
    let peak_flux = fl.iter().copied().fold(0.0, f64::max);
    let roundoff = 1e-12 * k0.abs();
    let slack = rel_slack * total_loss + roundoff;
    let pass = max_increase <= slack && max_negative_flux <= rel_slack * peak_flux + roundoff;
    Ok(EnstrophyAudit { border, max_increase, max_negative_flux, total_loss, peak_flux, slack, pass })
}

/// Impulse right of a border: drift not explained by the exchange with the
/// pieces on the left, against the impulse carried across the border.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpulseBalance {
    pub border: usize,
    /// max_t |μ_{≤k}(t) − μ_{≤k}(0)|.
    pub raw_drift: f64,
    /// max_t |μ_{≤k}(t) − μ_{≤k}(0) − ∫ Σ_{i≤k} exchange_i|.
    pub drift: f64,
    /// max_t ∫ F_k[x₂ω], the filamentation loss.
    pub filamentation: f64,
    pub pass: bool,
}

/// Passes when `drift ≤ factor · filamentation`, up to round-off on μ_{≤k}(0).
pub fn impulse_balance(records: &[DiagnosticsRecord], border: usize, factor: f64) -> Result<ImpulseBalance> {
    let r0 = records.first().ok_or_else(|| Error::Invalid("no diagnostic records".into()))?;
    if border >= r0.borders.len() {
        return Err(Error::Invalid(format!("no border {border}")));
    }
    let m0 = partial_sum(r0, border, |p| p.impulse);
    let ex = running_integral(records, |r| partial_sum(r, border, |p| p.exchange));
    let fi = running_integral(records, |r| r.borders[border].flux_impulse);
    let mut raw_drift: f64 = 0.0;
    let mut drift: f64 = 0.0;
    for (j, r) in records.iter().enumerate() {
        let d = partial_sum(r, border, |p| p.impulse) - m0;
        raw_drift = raw_drift.max(d.abs());
        drift = drift.max((d - ex[j]).abs());
    }
    let filamentation = fi.iter().copied().fold(0.0, f64::max);
    let pass = drift <= factor * filamentation + 1e-12 * m0.abs();
    Ok(ImpulseBalance { border, raw_drift, drift, filamentation, pass })
}

/// Closing of the gap p_0 − p_1 between the two leading shift estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapClosure {
    /// (t, p_0 − p_1) up to and including the first sample below `contact`.
    pub gap: Vec<(f64, f64)>,
    pub contact: f64,
    pub t_contact: Option<f64>,
    /// −slope of a least-squares line through the gap series.
    pub rate: f64,
    pub expected_rate: f64,
    pub monotone: bool,
}

/// `contact` is the gap at which the dipoles are considered touching.
pub fn gap_closure(records: &[DiagnosticsRecord], expected_rate: f64, contact: f64) -> Result<GapClosure> {
    let mut gap = Vec::new();
    let mut t_contact = None;
    for r in records {
        if r.pieces.len() < 2 {
            return Err(Error::Invalid("gap needs two pieces".into()));
        }
        let g = r.pieces[0].shift - r.pieces[1].shift;
        if !g.is_finite() {
            continue;
        }
        gap.push((r.t, g));
        if g < contact {
            t_contact = Some(r.t);
            break;
        }
    }
    let (t, g): (Vec<f64>, Vec<f64>) = gap.iter().copied().unzip();
    let rate = linear_fit(&t, &g).map_or(f64::NAN, |(_, b)| -b);
    let monotone = g.windows(2).all(|w| w[1] < w[0]);
    Ok(GapClosure { gap, contact, t_contact, rate, expected_rate, monotone })
}

fn linear_fit(t: &[f64], p: &[f64]) -> Option<(f64, f64)> {
    let n = t.len() as f64;
    if t.len() < 2 {
        return None;
    }
    let (mt, mp) = (t.iter().sum::<f64>() / n, p.iter().sum::<f64>() / n);
    let stt: f64 = t.iter().map(|&s| (s - mt) * (s - mt)).sum();
    if stt == 0.0 {
        return None;
    }
    let stp: f64 = t.iter().zip(p).map(|(&s, &q)| (s - mt) * (q - mp)).sum();
    let b = stp / stt;
    Some((mp - b * mt, b))
}
