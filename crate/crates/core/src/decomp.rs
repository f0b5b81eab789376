//! Moving borders, piece decompositions, Lagrangian gain, line fluxes, the
//! impulse exchange between pieces, and dipole localization.

use crate::field::{deposit, GridSpec, ParticleField};
use crate::kernels::{half_plane, velocities};
use crate::lamb::{lamb_vorticity, DipoleSpec};
use crate::tree::{Method, Want};
use crate::{Error, Point, Real, Result};

/// Borders inducing the piece decomposition.
#[derive(Clone, Debug, PartialEq)]
pub enum BorderFamily<T> {
    /// Vertical lines between consecutive dipoles, moving at the mean of
    /// their speeds. Pieces are numbered from the right, piece i lying in
    /// [L_i(t), L_{i−1}(t)) with L_{−1} = +∞ and L_{N−1} = −∞.
    Vertical { p_bar: Vec<T>, v_bar: Vec<T>, d0: T },
    /// One slanted line x₁ = x₂ cot α + V_avr t splitting the plane into a
    /// right piece (0) and a left piece (1).
    Slanted { alpha: T, v_avr: T, d: T },
}

impl<T: Real> BorderFamily<T> {
    pub fn vertical(p_bar: Vec<T>, v_bar: Vec<T>, d0: T) -> Result<Self> {
        if p_bar.len() != v_bar.len() || p_bar.is_empty() {
            return Err(Error::Invalid("border family needs matching nonempty p̄, V̄".into()));
        }
        Ok(Self::Vertical { p_bar, v_bar, d0 })
    }

    pub fn n_pieces(&self) -> usize {
        match self {
            Self::Vertical { p_bar, .. } => p_bar.len(),
            Self::Slanted { .. } => 2,
        }
    }

    pub fn n_borders(&self) -> usize {
        self.n_pieces() - 1
    }

    /// L_k(t) for border k between pieces k and k + 1, evaluated at height x₂.
    pub fn position(&self, k: usize, t: T, x2: T) -> T {
        match self {
            Self::Vertical { p_bar, v_bar, .. } => T::c(0.5) * (p_bar[k] + p_bar[k + 1] + (v_bar[k] + v_bar[k + 1]) * t),
            Self::Slanted { alpha, v_avr, .. } => x2 / alpha.tan() + *v_avr * t,
        }
    }

    /// Half-width of the error strips: (D₀ + (V̄_k − V̄_{k+1})t)/10.
    fn strip(&self, k: usize, t: T) -> T {
        match self {
            Self::Vertical { v_bar, d0, .. } => (*d0 + (v_bar[k] - v_bar[k + 1]) * t) / T::c(10.0),
            Self::Slanted { .. } => T::zero(),
        }
    }

    /// L_k⁺(t); in slanted mode x₂ cot α + (V_avr + 1/10)t + D/2.
    pub fn plus(&self, k: usize, t: T, x2: T) -> T {
        match self {
            Self::Vertical { .. } => self.position(k, t, x2) + self.strip(k, t),
            Self::Slanted { alpha, v_avr, d } => x2 / alpha.tan() + (*v_avr + T::c(0.1)) * t + *d * T::c(0.5),
        }
    }

    /// L_k⁻(t); in slanted mode the border itself.
    pub fn minus(&self, k: usize, t: T, x2: T) -> T {
        match self {
            Self::Vertical { .. } => self.position(k, t, x2) - self.strip(k, t),
            Self::Slanted { .. } => self.position(k, t, x2),
        }
    }

    /// dL_k/dt.
    pub fn speed(&self, k: usize) -> T {
        match self {
            Self::Vertical { v_bar, .. } => T::c(0.5) * (v_bar[k] + v_bar[k + 1]),
            Self::Slanted { v_avr, .. } => *v_avr,
        }
    }

    /// Whether x lies on or to the right of border k (x₁ ≥ L_k).
    pub fn right_of(&self, k: usize, t: T, x: Point<T>) -> bool {
        x.x1 >= self.position(k, t, x.x2)
    }

    /// Piece index of a point: the number of borders it lies strictly left of.
    pub fn piece_of(&self, t: T, x: Point<T>) -> usize {
        (0..self.n_borders()).take_while(|&k| !self.right_of(k, t, x)).count()
    }
}

/// Splits the field into pieces; every particle lands in exactly one.
pub fn split_pieces<T: Real>(field: &ParticleField<T>, borders: &BorderFamily<T>, t: T) -> Vec<ParticleField<T>> {
    let mut idx = vec![Vec::new(); borders.n_pieces()];
    for (j, &p) in field.pos.iter().enumerate() {
        idx[borders.piece_of(t, p)].push(j);
    }
    idx.iter().map(|ix| field.subset(ix)).collect()
}

/// Error strips and centre of one piece.
#[derive(Clone, Debug, PartialEq)]
pub struct EulerianSplit<T> {
    pub err_left: ParticleField<T>,
    pub center: ParticleField<T>,
    pub err_right: ParticleField<T>,
}

/// Hard cutoffs at L_i⁺ (left strip) and L_{i−1}⁻ (right strip) for piece i.
pub fn eulerian_split<T: Real>(piece: &ParticleField<T>, i: usize, borders: &BorderFamily<T>, t: T) -> EulerianSplit<T> {
    let (mut l, mut c, mut r) = (Vec::new(), Vec::new(), Vec::new());
    for (j, &p) in piece.pos.iter().enumerate() {
        if i < borders.n_borders() && p.x1 < borders.plus(i, t, p.x2) {
            l.push(j);
        } else if i > 0 && p.x1 >= borders.minus(i - 1, t, p.x2) {
            r.push(j);
        } else {
            c.push(j);
        }
    }
    EulerianSplit { err_left: piece.subset(&l), center: piece.subset(&c), err_right: piece.subset(&r) }
}

/// Particles now left of L_{i−1}(t) that started right of L_{i−1}(0).
pub fn lagrangian_gain<T: Real>(field: &ParticleField<T>, borders: &BorderFamily<T>, i: usize, t: T) -> Result<ParticleField<T>> {
    if field.remeshed {
        return Err(Error::GainUndefined);
    }
    if i == 0 {
        return Ok(field.subset(&[]));
    }
    let k = i - 1;
    Ok(field.select(|p, o, _| !borders.right_of(k, t, p) && borders.right_of(k, T::zero(), o)))
}

/// Per-particle masses of the auxiliary weights integrated along a border.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FluxWeight {
    /// g = ω²
    Enstrophy,
    /// g = x₂ω
    Impulse,
}

pub fn flux_masses<T: Real>(field: &ParticleField<T>, weight: FluxWeight) -> Vec<T> {
    match weight {
        FluxWeight::Enstrophy => field.circulation.iter().zip(&field.vorticity).map(|(&g, &w)| g * w).collect(),
        FluxWeight::Impulse => field.circulation.iter().zip(&field.pos).map(|(&g, p)| g * p.x2).collect(),
    }
}

/// −ψ_i γ for every particle of `field`, ψ_i the stream function of `piece`.
pub fn energy_flux_masses<T: Real>(field: &ParticleField<T>, piece: &ParticleField<T>, method: Method<T>) -> Vec<T> {
    let psi = half_plane(&piece.pos, &piece.circulation, &field.pos, field.smoothing(), Want::POTENTIAL, method);
    psi.iter().zip(&field.circulation).map(|(s, &g)| -s.psi * g).collect()
}

/// ∫ (L̇_k − u₁) g dx₂ along the vertical border k at time t.
///
/// The masses are deposited with the bilinear stencil onto a column of cells
/// of height h centred on the border, and the line integral is the midpoint
/// sum over that column with u₁ from the full field.
pub fn flux<T: Real>(
    field: &ParticleField<T>,
    masses: &[T],
    borders: &BorderFamily<T>,
    k: usize,
    t: T,
    method: Method<T>,
) -> Result<T> {
    if matches!(borders, BorderFamily::Slanted { .. }) {
        return Err(Error::Invalid("line flux is implemented for vertical borders".into()));
    }
    let h = field.h;
    let line = borders.position(k, t, T::zero());
    let (mut pos, mut m) = (Vec::new(), Vec::new());
    let mut top = T::zero();
    for (j, p) in field.pos.iter().enumerate() {
        if (p.x1 - line).abs() < h {
            pos.push(*p);
            m.push(masses[j]);
            top = top.max(p.x2);
        }
    }
    if pos.is_empty() {
        return Ok(T::zero());
    }
    let spec = GridSpec {
        origin: Point::new(line - T::c(1.5) * h, T::zero()),
        spacing: h,
        n1: 3,
        n2: (top / h).ceil().f() as usize + 2,
    };
    let grid = deposit(&pos, &m, spec)?;
    let (mut nodes, mut dens) = (Vec::new(), Vec::new());
    for j in 0..spec.n2 {
        let g = grid.value(1, j);
        if g != T::zero() {
            nodes.push(Point::new(line, spec.cell_center(1, j).x2));
            dens.push(g);
        }
    }
    let u = velocities(field, &nodes, method);
    let speed = borders.speed(k);
    Ok(u.iter().zip(&dens).map(|(u, &g)| (speed - u[0]) * g).sum::<T>() * h)
}

/// Σ_{x ∈ piece a} γ (u_b)₂(x): impulse handed to piece a by the velocity of piece b.
pub fn pairwise_exchange<T: Real>(a: &ParticleField<T>, b: &ParticleField<T>, method: Method<T>) -> T {
    if a.is_empty() || b.is_empty() {
        return T::zero();
    }
    let u = half_plane(&b.pos, &b.circulation, &a.pos, b.smoothing(), Want::VELOCITY, method);
    u.iter().zip(&a.circulation).map(|(s, &g)| s.u[1] * g).sum()
}

/// Σ_{j≠i} Σ_{k ∈ piece i} γ_k (u_j)₂(x_k).
pub fn impulse_exchange<T: Real>(pieces: &[ParticleField<T>], i: usize, method: Method<T>) -> T {
    (0..pieces.len()).filter(|&j| j != i).map(|j| pairwise_exchange(&pieces[i], &pieces[j], method)).sum()
}

/// Odd test function g of the shift estimator: g(s) = s on |s| ≤ 3R, a C²
/// quintic join up to the plateau 4R at 4R, then a quintic smoothstep down
/// to zero between `decay_start` and `decay_end`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShiftProbe<T> {
    pub r1: T,
    pub decay_start: T,
    pub decay_end: T,
}

impl<T: Real> ShiftProbe<T> {
    /// Plateau on [4R, D₀/5] and zero beyond D₀/4. When D₀/5 < 4R the
    /// plateau collapses to the point 4R and the decay ends at 5R.
    pub fn new(r1: T, d0: T) -> Self {
        let four = T::c(4.0) * r1;
        let (a, b) = if d0 / T::c(5.0) >= four { (d0 / T::c(5.0), d0 / T::c(4.0)) } else { (four, T::c(5.0) * r1) };
        Self { r1, decay_start: a, decay_end: b }
    }

    /// No decay: for an isolated dipole.
    pub fn isolated(r1: T) -> Self {
        Self { r1, decay_start: T::infinity(), decay_end: T::infinity() }
    }

    pub fn eval(&self, s: T) -> T {
        let a = s.abs();
        let r = self.r1;
        let three = T::c(3.0) * r;
        let v = if a <= three {
            a
        } else if a <= T::c(4.0) * r {
            let x = (a - three) / r;
            three + r * x * (T::one() + x * x * (T::c(4.0) + x * (T::c(-7.0) + x * T::c(3.0))))
        } else if a <= self.decay_start {
            T::c(4.0) * r
        } else if a < self.decay_end {
            let x = (a - self.decay_start) / (self.decay_end - self.decay_start);
            let smooth = x * x * x * (T::c(10.0) + x * (T::c(-15.0) + x * T::c(6.0)));
            T::c(4.0) * r * (T::one() - smooth)
        } else {
            T::zero()
        };
        if s < T::zero() {
            -v
        } else {
            v
        }
    }
}

/// H(p) = Σ γ g(x₁ − p).
pub fn shift_moment<T: Real>(piece: &ParticleField<T>, probe: &ShiftProbe<T>, p: T) -> T {
    piece.pos.iter().zip(&piece.circulation).map(|(x, &g)| g * probe.eval(x.x1 - p)).sum()
}

/// Root of H in (τ − 2R, τ + 2R) by bisection.
pub fn shift_estimate<T: Real>(piece: &ParticleField<T>, probe: &ShiftProbe<T>, tau_guess: T) -> Result<T> {
    if piece.is_empty() {
        return Err(Error::EmptyField);
    }
    let w = T::c(2.0) * probe.r1;
    let (mut lo, mut hi) = (tau_guess - w, tau_guess + w);
    let (f_lo, f_hi) = (shift_moment(piece, probe, lo), shift_moment(piece, probe, hi));
    if f_lo == T::zero() {
        return Ok(lo);
    }
    if f_hi == T::zero() {
        return Ok(hi);
    }
    if (f_lo > T::zero()) == (f_hi > T::zero()) {
        return Err(Error::NoRoot(lo.f(), hi.f()));
    }
    let lo_positive = f_lo > T::zero();
    for _ in 0..200 {
        let mid = T::c(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = shift_moment(piece, probe, mid);
        if f == T::zero() {
            return Ok(mid);
        }
        if (f > T::zero()) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(T::c(0.5) * (lo + hi))
}

/// Distance to the closest x₁-translate of a Lamb dipole.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambDistance<T> {
    pub distance: T,
    pub tau_star: T,
}

/// ‖ω − ω_L(· − τe₁)‖_{L²} + ‖ω − ω_L(· − τe₁)‖_{L¹*} with the dipole centred at τ.
///
/// Over the region carried by particles the difference is sampled at the
/// particles (each owning area h²); the part of the dipole not covered by any
/// particle is accounted for through its exact enstrophy κ² and impulse μ.
pub fn lamb_distance_at<T: Real>(piece: &ParticleField<T>, spec: &DipoleSpec<T>, tau: T) -> T {
    let s = spec.with_center(tau);
    let area = piece.h * piece.h;
    let (mut l2, mut l1, mut cov2, mut cov1) = (T::zero(), T::zero(), T::zero(), T::zero());
    for (x, &w) in piece.pos.iter().zip(&piece.vorticity) {
        let wl = lamb_vorticity(&s, *x);
        let d = w - wl;
        l2 += area * d * d;
        l1 += area * x.x2 * d.abs();
        cov2 += area * wl * wl;
        cov1 += area * x.x2 * wl;
    }
    let miss2 = (spec.kappa * spec.kappa - cov2).max(T::zero());
    let miss1 = (spec.mu - cov1).max(T::zero());
    (l2 + miss2).sqrt() + l1 + miss1
}

/// Minimizes [`lamb_distance_at`] over τ: coarse scan with step R/10 over the
/// piece's circulation centre ± 2R, then golden-section refinement.
pub fn nearest_lamb_distance<T: Real>(piece: &ParticleField<T>, spec: &DipoleSpec<T>) -> LambDistance<T> {
    let r = spec.radius();
    let Some(c) = piece.center_x1() else {
        let lamb_only = spec.kappa + spec.mu;
        return LambDistance { distance: lamb_only, tau_star: spec.center_x1 };
    };
    nearest_lamb_distance_near(piece, spec, c, T::c(2.0) * r)
}

/// As [`nearest_lamb_distance`] with an explicit search window τ ∈ [c − w, c + w].
pub fn nearest_lamb_distance_near<T: Real>(piece: &ParticleField<T>, spec: &DipoleSpec<T>, c: T, w: T) -> LambDistance<T> {
    let step = spec.radius() / T::c(10.0);
    let n = (T::c(2.0) * w / step).ceil().f() as usize;
    let f = |tau: T| lamb_distance_at(piece, spec, tau);
    let (mut best_i, mut best) = (0, T::infinity());
    for i in 0..=n {
        let v = f(c - w + step * T::c(i as f64));
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let centre = c - w + step * T::c(best_i as f64);
    let (mut a, mut b) = (centre - step, centre + step);
    let g = T::c(0.618_033_988_749_894_8);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if (b - a).abs() <= T::c(1e-9) * (T::one() + c.abs()) {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    let tau = T::c(0.5) * (a + b);
    let d = f(tau);
    if d <= best {
        LambDistance { distance: d, tau_star: tau }
    } else {
        LambDistance { distance: best, tau_star: centre }
    }
}
