//! Particle discretization of vorticity, norms, energies, regridding and the
//! rearrangement velocity bound.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::lamb::{lamb_vorticity, DipoleSpec};
use crate::tree::{free_space_sums, Method, Smoothing, Want};
use crate::{Error, Point, Real, Result};

/// Cells whose vorticity does not exceed this are left empty.
pub const DISCRETIZE_THRESHOLD: f64 = 1e-14;
/// Blob radius in units of the particle spacing: δ_b = 2h.
pub const BLOB_FACTOR: f64 = 2.0;
/// Support radius of the compact blob in units of δ_b (ρ = 12h).
pub const SUPPORT_FACTOR: f64 = 6.0;

/// Lagrangian vortex particles on the half-plane, stored column-wise.
///
/// Each particle is one initially occupied cell of area h², so the support
/// area of any subset is its particle count times h².
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleField<T> {
    pub pos: Vec<Point<T>>,
    pub origin: Vec<Point<T>>,
    pub circulation: Vec<T>,
    pub vorticity: Vec<T>,
    pub label: Vec<u32>,
    pub h: T,
    /// Set once the particles have been redistributed; origins are then meaningless.
    pub remeshed: bool,
}

/// Norms of a field or sub-field.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Norms<T> {
    pub l1: T,
    pub l2_squared: T,
    pub l_infty: T,
    pub impulse: T,
    pub support_area: T,
}

impl<T: Real> ParticleField<T> {
    pub fn empty(h: T) -> Self {
        Self {
            pos: Vec::new(),
            origin: Vec::new(),
            circulation: Vec::new(),
            vorticity: Vec::new(),
            label: Vec::new(),
            h,
            remeshed: false,
        }
    }

    /// Adds a particle carrying vorticity `omega`; its circulation is ω h².
    pub fn push(&mut self, x: Point<T>, omega: T, area_scale: T, label: u32) {
        self.pos.push(x);
        self.origin.push(x);
        self.circulation.push(omega * self.h * self.h * area_scale);
        self.vorticity.push(omega);
        self.label.push(label);
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    /// δ_b = 2h.
    pub fn blob_delta(&self) -> T {
        T::c(BLOB_FACTOR) * self.h
    }

    pub fn smoothing(&self) -> Smoothing<T> {
        Smoothing::Compact(T::c(SUPPORT_FACTOR) * self.blob_delta())
    }

    pub fn support_area(&self) -> T {
        T::c(self.len() as f64) * self.h * self.h
    }

    pub fn total_circulation(&self) -> T {
        self.circulation.iter().copied().sum()
    }

    /// Particles selected by index, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            pos: idx.iter().map(|&i| self.pos[i]).collect(),
            origin: idx.iter().map(|&i| self.origin[i]).collect(),
            circulation: idx.iter().map(|&i| self.circulation[i]).collect(),
            vorticity: idx.iter().map(|&i| self.vorticity[i]).collect(),
            label: idx.iter().map(|&i| self.label[i]).collect(),
            h: self.h,
            remeshed: self.remeshed,
        }
    }

    /// Particles satisfying a predicate on (position, origin, label).
    pub fn select(&self, keep: impl Fn(Point<T>, Point<T>, u32) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.pos[i], self.origin[i], self.label[i])).collect();
        self.subset(&idx)
    }

    /// Concatenation of two fields with the same spacing.
    pub fn union(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.pos.extend_from_slice(&other.pos);
        out.origin.extend_from_slice(&other.origin);
        out.circulation.extend_from_slice(&other.circulation);
        out.vorticity.extend_from_slice(&other.vorticity);
        out.label.extend_from_slice(&other.label);
        out.remeshed |= other.remeshed;
        out
    }

    /// Σ γ x₁ / Σ γ, or `None` for an empty field.
    pub fn center_x1(&self) -> Option<T> {
        let m = self.total_circulation();
        if m <= T::zero() {
            return None;
        }
        Some(self.pos.iter().zip(&self.circulation).map(|(p, &g)| p.x1 * g).sum::<T>() / m)
    }

    /// One particle per cell of the box where `profile` exceeds the threshold.
    /// The profile returns (vorticity, label).
    pub fn discretize_labeled(profile: impl Fn(Point<T>) -> (T, u32) + Sync, lo: Point<T>, hi: Point<T>, h: T) -> Result<Self> {
        if !(h > T::zero()) || !(hi.x1 > lo.x1) || !(hi.x2 > lo.x2) || lo.x2 < T::zero() {
            return Err(Error::Invalid(format!("bad discretization box or spacing h={h}")));
        }
        let n1 = ((hi.x1 - lo.x1) / h).ceil().f() as usize;
        let n2 = ((hi.x2 - lo.x2) / h).ceil().f() as usize;
        let half = T::c(0.5);
        let thr = T::c(DISCRETIZE_THRESHOLD);
        let rows: Vec<Vec<(Point<T>, T, u32)>> = (0..n2)
            .into_par_iter()
            .map(|j| {
                let x2 = lo.x2 + (T::c(j as f64) + half) * h;
                (0..n1)
                    .filter_map(|i| {
                        let x = Point::new(lo.x1 + (T::c(i as f64) + half) * h, x2);
                        let (w, l) = profile(x);
                        (w > thr).then_some((x, w, l))
                    })
                    .collect()
            })
            .collect();
        let mut f = Self::empty(h);
        for (x, w, l) in rows.into_iter().flatten() {
            f.push(x, w, T::one(), l);
        }
        if f.is_empty() {
            return Err(Error::EmptyField);
        }
        Ok(f)
    }

    pub fn discretize(profile: impl Fn(Point<T>) -> T + Sync, lo: Point<T>, hi: Point<T>, h: T) -> Result<Self> {
        Self::discretize_labeled(|x| (profile(x), 0), lo, hi, h)
    }

    /// Superposition of Lamb dipoles; particles are labeled by dipole index.
    /// Cells are aligned with x₁ = 0 so every dipole sees the same lattice.
    pub fn discretize_dipoles(specs: &[DipoleSpec<T>], h: T) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::EmptyField);
        }
        let (mut lo, mut hi) = specs[0].bounding_box();
        for s in &specs[1..] {
            let (a, b) = s.bounding_box();
            lo.x1 = lo.x1.min(a.x1);
            hi.x1 = hi.x1.max(b.x1);
            hi.x2 = hi.x2.max(b.x2);
        }
        lo.x1 = (lo.x1 / h).floor() * h - h;
        hi.x1 += h;
        hi.x2 += h;
        Self::discretize_labeled(
            |x| {
                let mut best = (T::zero(), 0u32);
                let mut total = T::zero();
                for (k, s) in specs.iter().enumerate() {
                    let w = lamb_vorticity(s, x);
                    total += w;
                    if w > best.0 {
                        best = (w, k as u32);
                    }
                }
                (total, best.1)
            },
            lo,
            hi,
            h,
        )
    }
}

/// l1 = Σγ, l2² = Σγω, l∞ = max ω, impulse = Σ x₂γ, support = count·h².
pub fn norms<T: Real>(field: &ParticleField<T>) -> Norms<T> {
    let mut n = Norms::<T>::default();
    for i in 0..field.len() {
        let g = field.circulation[i];
        n.l1 += g;
        n.l2_squared += g * field.vorticity[i];
        n.l_infty = n.l_infty.max(field.vorticity[i]);
        n.impulse += field.pos[i].x2 * g;
    }
    n.support_area = field.support_area();
    n
}

/// Σ_k γ_k G(x, x_k) at the given targets with the point kernel, coincident
/// pairs skipped: (1/2π)[P(x̄) − P(x)] where P is the free-space log potential.
/// When `self_field` is set the targets are the field's own particles and each
/// particle's own image term is removed.
fn green_potentials<T: Real>(field: &ParticleField<T>, targets: &[Point<T>], self_field: bool, method: Method<T>) -> Vec<T> {
    let n = targets.len();
    let mut all = Vec::with_capacity(2 * n);
    all.extend_from_slice(targets);
    all.extend(targets.iter().map(|p| p.mirror()));
    let sums = free_space_sums(&field.pos, &field.circulation, &all, Smoothing::Point, Want::POTENTIAL, method);
    let inv = T::one() / (T::c(2.0) * T::PI());
    (0..n)
        .map(|i| {
            let mut img = sums[n + i].pot;
            if self_field {
                let x2 = targets[i].x2;
                if x2 > T::zero() {
                    img -= field.circulation[i] * (T::c(2.0) * x2).ln();
                }
            }
            (img - sums[i].pot) * inv
        })
        .collect()
}

/// Self-interaction of one blob: γ²·(1/4π)·log(1 + 4x₂²/δ_b²).
fn self_energy<T: Real>(field: &ParticleField<T>) -> T {
    let d2 = field.blob_delta() * field.blob_delta();
    let inv = T::one() / (T::c(4.0) * T::PI());
    field.pos.iter().zip(&field.circulation).map(|(p, &g)| g * g * inv * (T::c(4.0) * p.x2 * p.x2 / d2).ln_1p()).sum()
}

/// E = ½ ΣΣ_{j≠k} γ_j G(x_j, x_k) γ_k + Σ_j γ_j² G_self.
pub fn energy<T: Real>(field: &ParticleField<T>, method: Method<T>) -> T {
    if field.is_empty() {
        return T::zero();
    }
    let pot = green_potentials(field, &field.pos, true, method);
    let pair: T = pot.iter().zip(&field.circulation).map(|(&p, &g)| p * g).sum();
    T::c(0.5) * pair + self_energy(field)
}

/// ½ ΣΣ γ_j G(x_j, y_k) γ̃_k across two fields. Both summation orders are
/// computed and averaged, which makes the result exactly symmetric.
pub fn interaction_energy<T: Real>(f1: &ParticleField<T>, f2: &ParticleField<T>, method: Method<T>) -> T {
    if f1.is_empty() || f2.is_empty() {
        return T::zero();
    }
    let one_way = |a: &ParticleField<T>, b: &ParticleField<T>| -> T {
        let pot = green_potentials(b, &a.pos, false, method);
        pot.iter().zip(&a.circulation).map(|(&p, &g)| p * g).sum::<T>() * T::c(0.5)
    };
    let a = one_way(f1, f2);
    let b = one_way(f2, f1);
    (a + b) * T::c(0.5)
}

/// C₀ ‖ω‖∞^{1/2} ‖ω‖₁^{1/2} with C₀ = 2(2π)^{-1/2}.
///
/// For a fixed target the free-space speed over all rearrangements with given
/// ‖ω‖∞ = M and ‖ω‖₁ = m is maximal for a disk through the target, giving
/// ½(Mm/π)^{1/2}; the image part obeys the same bound. (2π)^{-1/2} exceeds
/// ½π^{-1/2}, so doubling it is a valid upper bound for the half-plane kernel.
pub fn vmax_bound<T: Real>(field: &ParticleField<T>) -> T {
    let n = norms(field);
    vmax_bound_from(n.l_infty, n.l1)
}

pub fn vmax_bound_from<T: Real>(l_infty: T, l1: T) -> T {
    let c0 = T::c(2.0) / (T::c(2.0) * T::PI()).sqrt();
    c0 * (l_infty * l1).sqrt()
}

/// Uniform cell grid; cell (i, j) is centred at origin + ((i + ½)s, (j + ½)s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec<T> {
    pub origin: Point<T>,
    pub spacing: T,
    pub n1: usize,
    pub n2: usize,
}

impl<T: Real> GridSpec<T> {
    /// Smallest grid with origin on the axis covering every particle, with a
    /// column of cell centres on x₁ = `anchor`.
    pub fn covering(field: &ParticleField<T>, spacing: T, anchor: T) -> Self {
        let (mut lo, mut hi, mut top) = (anchor, anchor, T::zero());
        for p in &field.pos {
            lo = lo.min(p.x1);
            hi = hi.max(p.x1);
            top = top.max(p.x2);
        }
        let k_lo = ((anchor - lo) / spacing).ceil() + T::c(2.0);
        let n1 = (k_lo + ((hi - anchor) / spacing).ceil() + T::c(3.0)).f() as usize;
        let n2 = (top / spacing).ceil().f() as usize + 2;
        Self { origin: Point::new(anchor - (k_lo + T::c(0.5)) * spacing, T::zero()), spacing, n1, n2 }
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point<T> {
        let half = T::c(0.5);
        Point::new(
            self.origin.x1 + (T::c(i as f64) + half) * self.spacing,
            self.origin.x2 + (T::c(j as f64) + half) * self.spacing,
        )
    }
}

/// Cell-averaged values on a uniform grid, row-major (`values[j·n1 + i]`).
#[derive(Clone, Debug, PartialEq)]
pub struct GriddedField<T> {
    pub spec: GridSpec<T>,
    pub values: Vec<T>,
}

impl<T: Real> GriddedField<T> {
    pub fn value(&self, i: usize, j: usize) -> T {
        self.values[j * self.spec.n1 + i]
    }

    /// Σ value·s².
    pub fn integral(&self) -> T {
        let s = self.spec.spacing;
        self.values.iter().copied().sum::<T>() * s * s
    }

    /// Plain-text snapshot: a header line `n1 n2 origin_x1 origin_x2 spacing`,
    /// then n2 rows of n1 values each, bottom row first.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let g = &self.spec;
        writeln!(w, "# gridded vorticity: n1 n2 origin_x1 origin_x2 spacing")?;
        writeln!(w, "{} {} {:e} {:e} {:e}", g.n1, g.n2, g.origin.x1.f(), g.origin.x2.f(), g.spacing.f())?;
        for j in 0..g.n2 {
            let row: Vec<String> = (0..g.n1).map(|i| format!("{:e}", self.value(i, j).f())).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(r: R) -> Result<Self> {
        let bad = |m: &str| Error::Invalid(format!("snapshot: {m}"));
        let mut lines = r.lines().map_while(|l| l.ok()).filter(|l| !l.starts_with('#'));
        let head = lines.next().ok_or_else(|| bad("missing header"))?;
        let h: Vec<&str> = head.split_whitespace().collect();
        if h.len() != 5 {
            return Err(bad("header needs 5 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(s));
        let n1: usize = h[0].parse().map_err(|_| bad(h[0]))?;
        let n2: usize = h[1].parse().map_err(|_| bad(h[1]))?;
        let spec = GridSpec { origin: Point::new(T::c(num(h[2])?), T::c(num(h[3])?)), spacing: T::c(num(h[4])?), n1, n2 };
        let mut values = Vec::with_capacity(n1 * n2);
        for line in lines.take(n2) {
            for tok in line.split_whitespace() {
                values.push(T::c(num(tok)?));
            }
        }
        if values.len() != n1 * n2 {
            return Err(bad("wrong number of values"));
        }
        Ok(Self { spec, values })
    }
}

/// Area-weighted (bilinear) deposition of `masses` at `positions` onto the
/// grid, stored as densities. Weight falling below a grid whose bottom edge is
/// the axis is folded into the first row.
pub fn deposit<T: Real>(positions: &[Point<T>], masses: &[T], spec: GridSpec<T>) -> Result<GriddedField<T>> {
    let s = spec.spacing;
    let inv_area = T::one() / (s * s);
    let mut values = vec![T::zero(); spec.n1 * spec.n2];
    let fold = spec.origin.x2 <= T::zero();
    let too_small = || Error::GridTooSmall(spec.n1 as f64 * s.f(), spec.n2 as f64 * s.f());
    for (p, &m) in positions.iter().zip(masses) {
        let fx = (p.x1 - spec.origin.x1) / s - T::c(0.5);
        let fy = (p.x2 - spec.origin.x2) / s - T::c(0.5);
        let (i0, j0) = (fx.floor(), fy.floor());
        let (wx, wy) = (fx - i0, fy - j0);
        let (i0, j0) = (i0.f() as i64, j0.f() as i64);
        for (di, ax) in [(0i64, T::one() - wx), (1, wx)] {
            for (dj, ay) in [(0i64, T::one() - wy), (1, wy)] {
                let w = ax * ay;
                if w == T::zero() {
                    continue;
                }
                let i = i0 + di;
                let mut j = j0 + dj;
                if j == -1 && fold {
                    j = 0;
                }
                if i < 0 || j < 0 || i >= spec.n1 as i64 || j >= spec.n2 as i64 {
                    return Err(too_small());
                }
                values[j as usize * spec.n1 + i as usize] += m * w * inv_area;
            }
        }
    }
    Ok(GriddedField { spec, values })
}

/// M′4 interpolation weight: third-order, conserves the zeroth, first and
/// second moments of the deposited masses.
#[inline]
fn m4_weight<T: Real>(x: T) -> T {
    let a = x.abs();
    if a < T::one() {
        T::one() - a * a * (T::c(2.5) - T::c(1.5) * a)
    } else if a < T::c(2.0) {
        let b = T::c(2.0) - a;
        T::c(0.5) * b * b * (T::one() - a)
    } else {
        T::zero()
    }
}

/// Deposition with the 4×4 M′4 stencil, for remeshing. Stencil rows below an
/// axis-anchored grid are reflected onto their mirror rows with the sign of
/// the odd image vorticity, which keeps the impulse moment exact.
pub fn deposit_m4<T: Real>(positions: &[Point<T>], masses: &[T], spec: GridSpec<T>) -> Result<GriddedField<T>> {
    let s = spec.spacing;
    let inv_area = T::one() / (s * s);
    let mut values = vec![T::zero(); spec.n1 * spec.n2];
    let fold = spec.origin.x2 <= T::zero();
    let too_small = || Error::GridTooSmall(spec.n1 as f64 * s.f(), spec.n2 as f64 * s.f());
    for (p, &m) in positions.iter().zip(masses) {
        let fx = (p.x1 - spec.origin.x1) / s - T::c(0.5);
        let fy = (p.x2 - spec.origin.x2) / s - T::c(0.5);
        let (i0, j0) = (fx.floor(), fy.floor());
        let wx: [T; 4] = std::array::from_fn(|d| m4_weight(fx - i0 - T::c(d as f64 - 1.0)));
        let wy: [T; 4] = std::array::from_fn(|d| m4_weight(fy - j0 - T::c(d as f64 - 1.0)));
        let (i0, j0) = (i0.f() as i64, j0.f() as i64);
        for (dj, &ay) in wy.iter().enumerate() {
            let mut j = j0 + dj as i64 - 1;
            let mut sign = T::one();
            if j < 0 && fold {
                j = -1 - j;
                sign = -sign;
            }
            for (di, &ax) in wx.iter().enumerate() {
                let w = ax * ay;
                if w == T::zero() {
                    continue;
                }
                let i = i0 + di as i64 - 1;
                if i < 0 || j < 0 || i >= spec.n1 as i64 || j >= spec.n2 as i64 {
                    return Err(too_small());
                }
                values[j as usize * spec.n1 + i as usize] += sign * m * w * inv_area;
            }
        }
    }
    Ok(GriddedField { spec, values })
}

/// Deposits the field's circulations; total circulation is preserved.
pub fn regrid<T: Real>(field: &ParticleField<T>, spec: GridSpec<T>) -> Result<GriddedField<T>> {
    deposit(&field.pos, &field.circulation, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::velocities;
    use crate::lamb::{lamb_invariants, DipoleSpec};
    use crate::tree::TreeParams;
    use std::f64::consts::PI;

    fn lamb(h: f64) -> ParticleField<f64> {
        ParticleField::discretize_dipoles(&[DipoleSpec::normalized(0.0)], h).unwrap()
    }

    #[test]
    fn zero_profile_is_an_error() {
        let r = ParticleField::discretize(|_| 0.0, Point::new(0.0, 0.0), Point::new(1.0, 1.0), 0.1);
        assert!(matches!(r, Err(Error::EmptyField)));
    }

    #[test]
    fn empty_norms_and_energy() {
        let f = ParticleField::<f64>::empty(0.1);
        assert_eq!(norms(&f), Norms::default());
        assert_eq!(energy(&f, Method::Direct), 0.0);
        assert_eq!(interaction_energy(&f, &lamb(0.1), Method::Direct), 0.0);
        assert_eq!(vmax_bound(&f), 0.0);
    }

    #[test]
    fn lamb_norms_at_fine_spacing() {
        let f = lamb(1.0 / 256.0);
        let n = norms(&f);
        let inv = lamb_invariants(&DipoleSpec::<f64>::normalized(0.0));
        assert!((n.impulse / PI - 1.0).abs() < 1e-3, "impulse {}", n.impulse);
        assert!((n.l2_squared / inv.enstrophy - 1.0).abs() < 1e-3);
        assert_eq!(n.l_infty, f.vorticity.iter().copied().fold(0.0, f64::max));
        // circulation against a finer midpoint oracle
        let fine = norms(&lamb(1.0 / 1024.0));
        assert!((n.l1 / fine.l1 - 1.0).abs() < 1e-4, "{} vs {}", n.l1, fine.l1);
    }

    #[test]
    fn norms_are_additive_over_disjoint_pieces() {
        let f = lamb(1.0 / 64.0);
        let left = f.select(|p, _, _| p.x1 < 0.1);
        let right = f.select(|p, _, _| p.x1 >= 0.1);
        let (a, b, t) = (norms(&left), norms(&right), norms(&f));
        assert!((a.l1 + b.l1 - t.l1).abs() <= 1e-13 * t.l1);
        assert!((a.impulse + b.impulse - t.impulse).abs() <= 1e-13 * t.impulse);
        assert!((a.l2_squared + b.l2_squared - t.l2_squared).abs() <= 1e-13 * t.l2_squared);
        assert_eq!(a.support_area + b.support_area, t.support_area);
    }

    #[test]
    fn lamb_energy_tree_and_direct() {
        let f = lamb(1.0 / 64.0);
        let d = energy(&f, Method::Direct);
        let t = energy(&f, Method::Tree(TreeParams::default()));
        assert!(((d - t) / d).abs() < 1e-8, "{d} vs {t}");
        assert!((d / PI - 1.0).abs() < 2e-2, "{d}");
    }

    #[test]
    fn energy_of_two_copies() {
        let h = 1.0 / 32.0;
        let a = ParticleField::<f64>::discretize_dipoles(&[DipoleSpec::normalized(0.0)], h).unwrap();
        let b = ParticleField::discretize_dipoles(&[DipoleSpec::normalized(-10.0)], h).unwrap();
        let both = a.union(&b);
        let ei = interaction_energy(&a, &b, Method::Direct);
        assert_eq!(ei, interaction_energy(&b, &a, Method::Direct));
        let diff = energy(&both, Method::Direct) - energy(&a, Method::Direct) - energy(&b, Method::Direct);
        assert!(ei > 0.0);
        assert!((diff - 2.0 * ei).abs() < 1e-10, "{diff} vs {}", 2.0 * ei);
        let (ma, mb) = (norms(&a).impulse, norms(&b).impulse);
        // G ≤ x₂y₂/(π|x−y|²) and |x − y| ≥ 8 between the supports
        assert!(ei <= 0.5 * ma * mb / (PI * 64.0));
    }

    #[test]
    fn regrid_round_trip_and_conservation() {
        let h = 1.0 / 32.0;
        let f = lamb(h);
        let lo = f.pos.iter().fold(f64::INFINITY, |m, p| m.min(p.x1)) - 0.5 * h;
        let spec = GridSpec { origin: Point::new(lo - 2.0 * h, 0.0), spacing: h, n1: 80, n2: 40 };
        let g = regrid(&f, spec).unwrap();
        assert!((g.integral() / f.total_circulation() - 1.0).abs() < 1e-12);
        for k in 0..f.len() {
            let i = ((f.pos[k].x1 - spec.origin.x1) / h - 0.5).round() as usize;
            let j = ((f.pos[k].x2 - spec.origin.x2) / h - 0.5).round() as usize;
            assert!((g.value(i, j) - f.vorticity[k]).abs() < 1e-6);
        }
        // shifted grid: impulse moves by at most one stencil width
        let shifted = GridSpec { origin: Point::new(spec.origin.x1 + 0.3 * h, 0.0), ..spec };
        let g2 = regrid(&f, shifted).unwrap();
        let mut imp = 0.0;
        for j in 0..spec.n2 {
            for i in 0..spec.n1 {
                imp += g2.value(i, j) * h * h * shifted.cell_center(i, j).x2;
            }
        }
        let n = norms(&f);
        assert!((imp - n.impulse).abs() <= 2.0 * h * n.l1);
        assert!((g2.integral() / n.l1 - 1.0).abs() < 1e-12);
        let tiny = GridSpec { n1: 5, ..spec };
        assert!(matches!(regrid(&f, tiny), Err(Error::GridTooSmall(..))));
    }

    #[test]
    fn single_particle_lands_in_its_cell() {
        let mut f = ParticleField::<f64>::empty(0.1);
        let spec = GridSpec { origin: Point::new(0.0, 0.0), spacing: 0.1, n1: 4, n2: 4 };
        f.push(spec.cell_center(2, 1), 3.0, 1.0, 0);
        let g = regrid(&f, spec).unwrap();
        assert!((g.value(2, 1) * 0.01 - f.circulation[0]).abs() < 1e-15);
        assert!(g.values.iter().filter(|&&v| v.abs() > 1e-9).count() == 1);
    }

    #[test]
    fn snapshot_round_trip() {
        let f = lamb(1.0 / 16.0);
        let g = regrid(&f, GridSpec::covering(&f, 1.0 / 16.0, 0.0)).unwrap();
        let mut buf = Vec::new();
        g.write_snapshot(&mut buf).unwrap();
        let back = GriddedField::<f64>::read_snapshot(&buf[..]).unwrap();
        assert_eq!(back.spec.n1, g.spec.n1);
        for (a, b) in back.values.iter().zip(&g.values) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn vmax_bound_dominates_patch_speed() {
        let a: f64 = 0.05;
        let r = (a / PI).sqrt();
        let h = r / 20.0;
        let f = ParticleField::discretize(
            |p| if (p.x1 - 0.0).hypot(p.x2 - 0.4) < r { 1.0 } else { 0.0 },
            Point::new(-1.0, 0.0),
            Point::new(1.0, 1.0),
            h,
        )
        .unwrap();
        let b = vmax_bound(&f);
        let c0 = 2.0 / (2.0 * PI).sqrt();
        assert!((b - c0 * norms(&f).l1.sqrt()).abs() < 1e-14);
        let targets: Vec<Point<f64>> =
            (0..400).map(|k| Point::new(-0.5 + (k % 20) as f64 * 0.05, (k / 20) as f64 * 0.05)).collect();
        let umax = velocities(&f, &targets, Method::Direct).iter().map(|u| u[0].hypot(u[1])).fold(0.0, f64::max);
        assert!(umax > 0.0 && umax <= b, "{umax} > {b}");
    }
}
