//! Functional inequalities of the half-plane energy, checked on particle
//! ensembles: the sharp energy bound, interaction-energy bounds and velocity
//! decay/size bounds. Reports carry the measured constants.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{energy, interaction_energy, norms, ParticleField};
use crate::kernels::{streams, velocities};
use crate::lamb::DipoleSpec;
use crate::special_fn::LambConstant;
use crate::tree::Method;
use crate::{Error, Point, Result};

/// Largest E/(C_L κ μ) tolerated above one, from discretization.
pub const SHARP_SLACK: f64 = 2e-3;
/// Lamb members must come at least this close to equality.
pub const LAMB_RATIO_FLOOR: f64 = 0.995;
/// Relative tolerance on the far-field decay ratios 4 and 8.
pub const DECAY_TOLERANCE: f64 = 0.1;
/// Relative slack on the unsymmetric bound, covering blob smoothing of ψ.
pub const UNSYMMETRIC_SLACK: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Lamb,
    RandomBumps,
    Patch,
}

/// A deterministic family of nonnegative, compactly supported fields.
///
/// Lamb members draw (κ, μ) from the ranges. Bump and patch members draw a
/// shape and then scale the amplitude so that κ hits a draw from
/// `kappa_range`; `mu_range` is not used for them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub generator: Generator,
    pub count: usize,
    pub seed: u64,
    pub kappa_range: [f64; 2],
    pub mu_range: [f64; 2],
    pub h: f64,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |r: [f64; 2]| r[0] > 0.0 && r[1] >= r[0] && r[1].is_finite();
        if !ok(self.kappa_range) || !ok(self.mu_range) {
            return Err(Error::Invalid("ensemble ranges must be positive and ordered".into()));
        }
        if !(self.h > 0.0) {
            return Err(Error::Invalid(format!("ensemble spacing h={} must be positive", self.h)));
        }
        Ok(())
    }

    fn rng(&self, index: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index as u64))
    }

    /// The `index`-th member; independent of the other members.
    pub fn member(&self, index: usize) -> Result<ParticleField<f64>> {
        let mut rng = self.rng(index);
        let mut draw = |r: [f64; 2]| if r[1] > r[0] { rng.gen_range(r[0]..=r[1]) } else { r[0] };
        let kappa = draw(self.kappa_range);
        let mu = draw(self.mu_range);
        let h = self.h;
        match self.generator {
            Generator::Lamb => ParticleField::discretize_dipoles(&[DipoleSpec::new(kappa, mu, 0.0)?], h),
            Generator::RandomBumps => {
                let mut rng = self.rng(index ^ (1 << 40));
                let k = rng.gen_range(1..=5);
                let bumps: Vec<(Point<f64>, f64, f64)> = (0..k)
                    .map(|_| {
                        let c = Point::new(rng.gen_range(0.0..=4.0), rng.gen_range(0.2..=2.0));
                        (c, rng.gen_range(0.15..=0.5), rng.gen_range(0.5..=1.5))
                    })
                    .collect();
                let profile = |x: Point<f64>| -> f64 {
                    bumps
                        .iter()
                        .map(|&(c, r, a)| {
                            let s = 1.0 - x.dist2(c) / (r * r);
                            if s > 0.0 {
                                a * s * s * s
                            } else {
                                0.0
                            }
                        })
                        .sum()
                };
                let f = ParticleField::discretize(profile, Point::new(-0.5, 0.0), Point::new(4.5, 2.5), h)?;
                Ok(with_kappa(f, kappa))
            }
            Generator::Patch => {
                let mut rng = self.rng(index ^ (1 << 41));
                let r = rng.gen_range(0.05..=0.15);
                let c = Point::new(rng.gen_range(0.0..=4.0), rng.gen_range(0.2..=0.6));
                let f = disk_patch(c, r, 1.0, h)?;
                Ok(with_kappa(f, kappa))
            }
        }
    }

    pub fn members(&self) -> Result<Vec<ParticleField<f64>>> {
        self.validate()?;
        (0..self.count).into_par_iter().map(|i| self.member(i)).collect()
    }
}

/// Uniform disk of vorticity `omega`, radius `r`, centre `c` (clipped to x₂ ≥ 0).
pub fn disk_patch(c: Point<f64>, r: f64, omega: f64, h: f64) -> Result<ParticleField<f64>> {
    let lo = Point::new(c.x1 - r - h, (c.x2 - r - h).max(0.0));
    let hi = Point::new(c.x1 + r + h, c.x2 + r + h);
    ParticleField::discretize(|x| if x.dist2(c) < r * r { omega } else { 0.0 }, lo, hi, h)
}

fn with_kappa(f: ParticleField<f64>, kappa: f64) -> ParticleField<f64> {
    let k = norms(&f).l2_squared.sqrt();
    rescale(&f, kappa / k, 1.0)
}

/// The field λω(x/a): positions and spacing dilate by `a`, vorticity scales by `lambda`.
pub fn rescale(f: &ParticleField<f64>, lambda: f64, a: f64) -> ParticleField<f64> {
    let mut g = f.clone();
    let dil = |p: &mut Point<f64>| {
        p.x1 *= a;
        p.x2 *= a;
    };
    g.pos.iter_mut().for_each(dil);
    g.origin.iter_mut().for_each(dil);
    g.h *= a;
    g.vorticity.iter_mut().for_each(|w| *w *= lambda);
    g.circulation.iter_mut().for_each(|c| *c *= lambda * a * a);
    g
}

/// L¹* and L² norms of a possibly signed field.
fn signed_norms(f: &ParticleField<f64>) -> (f64, f64) {
    let mut m = 0.0;
    let mut k = 0.0;
    for i in 0..f.len() {
        m += f.pos[i].x2 * f.circulation[i].abs();
        k += f.circulation[i] * f.vorticity[i];
    }
    (m, k.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SharpMember {
    pub index: usize,
    pub kappa: f64,
    pub mu: f64,
    pub energy: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SharpEnergyReport {
    pub generator: Generator,
    pub members: Vec<SharpMember>,
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub pass: bool,
}

/// E ≤ C_L κ μ on every member, and near-equality on Lamb members.
/// The zero field passes with ratio 0.
pub fn verify_sharp_energy(spec: &EnsembleSpec, method: Method<f64>) -> Result<SharpEnergyReport> {
    let fields = spec.members()?;
    let big_c = LambConstant::<f64>::compute().big_c_l;
    let members: Vec<SharpMember> = fields
        .iter()
        .enumerate()
        .map(|(index, f)| {
            let n = norms(f);
            let kappa = n.l2_squared.sqrt();
            let e = energy(f, method);
            let bound = big_c * kappa * n.impulse;
            let ratio = if bound > 0.0 { e / bound } else { 0.0 };
            SharpMember { index, kappa, mu: n.impulse, energy: e, ratio }
        })
        .collect();
    let max_ratio = members.iter().map(|m| m.ratio).fold(0.0, f64::max);
    let min_ratio = members.iter().map(|m| m.ratio).fold(f64::INFINITY, f64::min);
    let mut pass = max_ratio <= 1.0 + SHARP_SLACK;
    if spec.generator == Generator::Lamb {
        pass &= min_ratio >= LAMB_RATIO_FLOOR;
    }
    Ok(SharpEnergyReport { generator: spec.generator, members, max_ratio, min_ratio, pass })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InteractionCheck {
    pub index: usize,
    pub e_inter: f64,
    /// E_inter over the smaller of the two unsymmetric bounds; ≤ 1.
    pub unsymmetric_ratio: f64,
    /// |E_inter| / (μκμ̃κ̃)^{1/2}.
    pub product_constant: f64,
    /// Largest relative change of `product_constant` under λ = 3 and a = 2.
    pub scaling_drift: f64,
    /// |E − Ẽ| / (‖ω−ω̃‖ ‖ω+ω̃‖ products)^{1/2}; needs a common lattice.
    pub difference_constant: Option<f64>,
    /// Distance between supports and E_inter D²/(μμ̃).
    pub separation: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InteractionReport {
    pub checks: Vec<InteractionCheck>,
    pub max_unsymmetric_ratio: f64,
    pub max_product_constant: f64,
    pub max_difference_constant: f64,
    pub max_separation_constant: f64,
    pub max_scaling_drift: f64,
    pub pass: bool,
}

/// Sum and difference of two fields on the same lattice.
fn lattice_combine(a: &ParticleField<f64>, b: &ParticleField<f64>) -> Option<(ParticleField<f64>, ParticleField<f64>)> {
    let h = a.h;
    if (b.h - h).abs() > 1e-12 * h {
        return None;
    }
    let key = |p: Point<f64>| ((p.x1 / h - 0.5).round() as i64, (p.x2 / h - 0.5).round() as i64);
    let mut cells: HashMap<(i64, i64), (Point<f64>, f64, f64)> = HashMap::new();
    for i in 0..a.len() {
        let e = cells.entry(key(a.pos[i])).or_insert((a.pos[i], 0.0, 0.0));
        e.1 += a.vorticity[i];
    }
    for i in 0..b.len() {
        let e = cells.entry(key(b.pos[i])).or_insert((b.pos[i], 0.0, 0.0));
        e.2 += b.vorticity[i];
    }
    let mut keys: Vec<_> = cells.keys().copied().collect();
    keys.sort_unstable();
    let mut sum = ParticleField::empty(h);
    let mut diff = ParticleField::empty(h);
    for k in keys {
        let (p, wa, wb) = cells[&k];
        if wa + wb != 0.0 {
            sum.push(p, wa + wb, 1.0, 0);
        }
        if wa - wb != 0.0 {
            diff.push(p, wa - wb, 1.0, 0);
        }
    }
    Some((sum, diff))
}

fn support_distance(a: &ParticleField<f64>, b: &ParticleField<f64>) -> f64 {
    a.pos
        .par_iter()
        .map(|&p| b.pos.iter().map(|&q| p.dist2(q)).fold(f64::INFINITY, f64::min))
        .reduce(|| f64::INFINITY, f64::min)
        .sqrt()
}

fn sup_psi_over_x2(source: &ParticleField<f64>, on: &ParticleField<f64>, method: Method<f64>) -> f64 {
    streams(source, &on.pos, method).iter().zip(&on.pos).map(|(s, p)| (s / p.x2).abs()).fold(0.0, f64::max)
}

/// Interaction-energy bounds on nonnegative pairs. Constants are reported;
/// the pass flag covers the unsymmetric bound (explicit constant ½), the
/// separation constant (≤ 1) and scaling invariance of the product constant.
pub fn verify_interaction_bounds(pairs: &[(ParticleField<f64>, ParticleField<f64>)], method: Method<f64>) -> InteractionReport {
    let product = |a: &ParticleField<f64>, b: &ParticleField<f64>| -> f64 {
        let (na, nb) = (norms(a), norms(b));
        let e = interaction_energy(a, b, method);
        e.abs() / (na.impulse * na.l2_squared.sqrt() * nb.impulse * nb.l2_squared.sqrt()).sqrt()
    };
    let checks: Vec<InteractionCheck> = pairs
        .iter()
        .enumerate()
        .map(|(index, (w, v))| {
            let (nw, nv) = (norms(w), norms(v));
            let e_inter = interaction_energy(w, v, method);
            let b1 = 0.5 * sup_psi_over_x2(v, w, method) * nw.impulse;
            let b2 = 0.5 * sup_psi_over_x2(w, v, method) * nv.impulse;
            let bound = b1.min(b2);
            let unsymmetric_ratio = if bound > 0.0 { e_inter.abs() / bound } else { 0.0 };
            let c = product(w, v);
            let c_amp = product(&rescale(w, 3.0, 1.0), &rescale(v, 3.0, 1.0));
            let c_dil = product(&rescale(w, 1.0, 2.0), &rescale(v, 1.0, 2.0));
            let scaling_drift = ((c_amp - c) / c).abs().max(((c_dil - c) / c).abs());
            let difference_constant = lattice_combine(w, v).and_then(|(sum, diff)| {
                let (ms, ks) = signed_norms(&sum);
                let (md, kd) = signed_norms(&diff);
                let rhs = (md * kd * ms * ks).sqrt();
                (rhs > 0.0).then(|| (energy(w, method) - energy(v, method)).abs() / rhs)
            });
            let d = support_distance(w, v);
            let separation = (d > 2.0 * w.h.max(v.h)).then(|| (d, e_inter * d * d / (nw.impulse * nv.impulse)));
            InteractionCheck {
                index,
                e_inter,
                unsymmetric_ratio,
                product_constant: c,
                scaling_drift,
                difference_constant,
                separation,
            }
        })
        .collect();
    let max_of = |f: &dyn Fn(&InteractionCheck) -> Option<f64>| checks.iter().filter_map(f).fold(0.0, f64::max);
    let max_unsymmetric_ratio = max_of(&|c| Some(c.unsymmetric_ratio));
    let max_product_constant = max_of(&|c| Some(c.product_constant));
    let max_difference_constant = max_of(&|c| c.difference_constant);
    let max_separation_constant = max_of(&|c| c.separation.map(|s| s.1));
    let max_scaling_drift = max_of(&|c| Some(c.scaling_drift));
    let pass = max_unsymmetric_ratio <= 1.0 + UNSYMMETRIC_SLACK && max_separation_constant <= 1.0 && max_scaling_drift < 1e-6;
    InteractionReport {
        checks,
        max_unsymmetric_ratio,
        max_product_constant,
        max_difference_constant,
        max_separation_constant,
        max_scaling_drift,
        pass,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayLadder {
    pub index: usize,
    pub distances: Vec<f64>,
    pub speed: Vec<f64>,
    pub u2_over_x2: Vec<f64>,
    /// |u(D)|/|u(2D)| for consecutive rungs; ≈ 4.
    pub speed_ratios: Vec<f64>,
    /// (u₂/x₂)(D)/(u₂/x₂)(2D); ≈ 8.
    pub u2_ratios: Vec<f64>,
    /// max |u| D²/μ.
    pub speed_constant: f64,
    /// max (|u₂|/x₂) D³/min{μ, D‖ω‖₁}.
    pub u2_constant: f64,
    /// ‖u‖∞ over the right side of the α = 1/2 bound.
    pub linf_alpha_ratio: f64,
    /// ‖u‖∞ over κ(1 + log₊(‖ω‖∞² μ/κ³)).
    pub linf_log_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VelocityReport {
    pub ladders: Vec<DecayLadder>,
    pub worst_speed_ratio_error: f64,
    pub worst_u2_ratio_error: f64,
    pub max_linf_alpha_ratio: f64,
    pub max_linf_log_ratio: f64,
    pub pass: bool,
}

/// Largest blob speed over the particles and the wall points beneath them.
pub fn max_speed(f: &ParticleField<f64>, method: Method<f64>) -> f64 {
    let mut targets = f.pos.clone();
    let mut xs: Vec<i64> = f.pos.iter().map(|p| (p.x1 / f.h).round() as i64).collect();
    xs.sort_unstable();
    xs.dedup();
    targets.extend(xs.iter().map(|&i| Point::new(i as f64 * f.h, 0.0)));
    velocities(f, &targets, method).iter().map(|u| u[0].hypot(u[1])).fold(0.0, f64::max)
}

/// Far-field decay along x₂ = x̄₂ at horizontal distances `distances` from the
/// circulation centroid (each rung should double the previous one), plus the
/// L∞ bound ratios. Decay is checked against the ratios 4 and 8.
pub fn verify_velocity_bounds(spec: &EnsembleSpec, distances: &[f64], method: Method<f64>) -> Result<VelocityReport> {
    if distances.len() < 2 {
        return Err(Error::Invalid("decay ladder needs at least two distances".into()));
    }
    let fields = spec.members()?;
    let ladders: Vec<DecayLadder> = fields
        .iter()
        .enumerate()
        .map(|(index, f)| {
            let n = norms(f);
            let c1 = f.center_x1().unwrap_or(0.0);
            let c2 = n.impulse / n.l1;
            let targets: Vec<Point<f64>> = distances.iter().map(|&d| Point::new(c1 + d, c2)).collect();
            let u = velocities(f, &targets, Method::Direct);
            let speed: Vec<f64> = u.iter().map(|v| v[0].hypot(v[1])).collect();
            let u2: Vec<f64> = u.iter().map(|v| v[1].abs() / c2).collect();
            let ratios = |v: &[f64]| v.windows(2).map(|w| w[0] / w[1]).collect::<Vec<f64>>();
            let speed_constant = distances.iter().zip(&speed).map(|(d, s)| s * d * d / n.impulse).fold(0.0, f64::max);
            let u2_constant = distances.iter().zip(&u2).map(|(d, s)| s * d.powi(3) / n.impulse.min(d * n.l1)).fold(0.0, f64::max);
            let vmax = max_speed(f, method);
            let kappa = n.l2_squared.sqrt();
            let alpha_rhs = kappa.sqrt() * (kappa.sqrt() + n.l_infty.powf(1.0 / 3.0) * n.impulse.powf(1.0 / 6.0));
            let log_rhs = kappa * (1.0 + (n.l_infty.powi(2) * n.impulse / kappa.powi(3)).ln().max(0.0));
            DecayLadder {
                index,
                distances: distances.to_vec(),
                speed_ratios: ratios(&speed),
                u2_ratios: ratios(&u2),
                speed,
                u2_over_x2: u2,
                speed_constant,
                u2_constant,
                linf_alpha_ratio: vmax / alpha_rhs,
                linf_log_ratio: vmax / log_rhs,
            }
        })
        .collect();
    let worst = |sel: &dyn Fn(&DecayLadder) -> &Vec<f64>, target: f64| {
        ladders.iter().flat_map(|l| sel(l).iter().map(move |r| (r / target - 1.0).abs())).fold(0.0, f64::max)
    };
    let worst_speed_ratio_error = worst(&|l| &l.speed_ratios, 4.0);
    let worst_u2_ratio_error = worst(&|l| &l.u2_ratios, 8.0);
    let max_linf_alpha_ratio = ladders.iter().map(|l| l.linf_alpha_ratio).fold(0.0, f64::max);
    let max_linf_log_ratio = ladders.iter().map(|l| l.linf_log_ratio).fold(0.0, f64::max);
    let pass = worst_speed_ratio_error <= DECAY_TOLERANCE
        && worst_u2_ratio_error <= DECAY_TOLERANCE
        && max_linf_alpha_ratio.is_finite()
        && max_linf_log_ratio.is_finite();
    Ok(VelocityReport { ladders, worst_speed_ratio_error, worst_u2_ratio_error, max_linf_alpha_ratio, max_linf_log_ratio, pass })
}

/// Peak self-induced speed of a discretized Lamb dipole over its travel speed.
pub fn lamb_peak_speed_ratio(spec: &DipoleSpec<f64>, h: f64, method: Method<f64>) -> Result<f64> {
    let f = ParticleField::discretize_dipoles(&[*spec], h)?;
    Ok(max_speed(&f, method) / spec.speed())
}
