//! Lamb dipole profiles, closed-form invariants and N-dipole superposition.

use crate::special_fn::{j0, j1, LambConstant};
use crate::{Error, Point, Real, Result};

/// A rescaled Lamb dipole with enstrophy root `kappa` and impulse `mu`,
/// centred on the axis at `center_x1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DipoleSpec<T> {
    pub kappa: T,
    pub mu: T,
    pub center_x1: T,
    consts: LambConstant<T>,
    j0_cl: T,
}

/// Closed-form conserved quantities of a dipole.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambInvariants<T> {
    pub enstrophy: T,
    pub impulse: T,
    pub energy: T,
    pub speed: T,
}

impl<T: Real> DipoleSpec<T> {
    pub fn new(kappa: T, mu: T, center_x1: T) -> Result<Self> {
        if !(kappa > T::zero() && kappa.is_finite()) || !(mu > T::zero() && mu.is_finite()) {
            return Err(Error::Invalid(format!("kappa={kappa}, mu={mu} must be positive")));
        }
        if !center_x1.is_finite() {
            return Err(Error::Invalid("center must be finite".into()));
        }
        let consts = LambConstant::compute();
        Ok(Self { kappa, mu, center_x1, consts, j0_cl: j0(consts.c_l) })
    }

    /// κ = √π c_L, μ = π: amplitude, radius and speed all equal one.
    pub fn normalized(center_x1: T) -> Self {
        let c = LambConstant::<T>::compute();
        Self::new(T::PI().sqrt() * c.c_l, T::PI(), center_x1).expect("valid")
    }

    /// Dipole with prescribed speed `v` and radius `r`.
    pub fn from_speed_radius(v: T, r: T, center_x1: T) -> Result<Self> {
        let c = LambConstant::<T>::compute();
        // V = C_L κ, R² = c_L μ/(√π κ)
        let kappa = v / c.big_c_l;
        let mu = r * r * T::PI().sqrt() * kappa / c.c_l;
        Self::new(kappa, mu, center_x1)
    }

    pub fn with_center(mut self, center_x1: T) -> Self {
        self.center_x1 = center_x1;
        self
    }

    pub fn c_l(&self) -> T {
        self.consts.c_l
    }

    pub fn big_c_l(&self) -> T {
        self.consts.big_c_l
    }

    /// A = (κ³/(√π c_L³ μ))^{1/2}.
    pub fn amplitude(&self) -> T {
        let c = self.consts.c_l;
        (self.kappa.powi(3) / (T::PI().sqrt() * c.powi(3) * self.mu)).sqrt()
    }

    /// R = (c_L μ/(√π κ))^{1/2}.
    pub fn radius(&self) -> T {
        (self.consts.c_l * self.mu / (T::PI().sqrt() * self.kappa)).sqrt()
    }

    /// V = C_L κ.
    pub fn speed(&self) -> T {
        self.consts.big_c_l * self.kappa
    }

    /// Axis-aligned box [c − R, c + R] × [0, R] containing the support.
    pub fn bounding_box(&self) -> (Point<T>, Point<T>) {
        let r = self.radius();
        (Point::new(self.center_x1 - r, T::zero()), Point::new(self.center_x1 + r, r))
    }

    /// Normalized coordinates (ξ, |ξ|) of a physical point.
    fn normalize(&self, x: Point<T>) -> (T, T, T) {
        let r_scale = self.radius();
        let xi1 = (x.x1 - self.center_x1) / r_scale;
        let xi2 = x.x2 / r_scale;
        (xi1, xi2, xi1.hypot(xi2))
    }

    /// J₁(c_L r)·sinθ for normalized polar coordinates, with sinθ = 0 on the axis.
    fn j1_sin(&self, xi2: T, r: T) -> T {
        if xi2 == T::zero() || r == T::zero() {
            return T::zero();
        }
        j1(self.consts.c_l * r) * (xi2 / r)
    }
}

/// Vorticity A·ω̄(R⁻¹(x − center)) of the rescaled Lamb dipole.
pub fn lamb_vorticity<T: Real>(spec: &DipoleSpec<T>, x: Point<T>) -> T {
    let (_, xi2, r) = spec.normalize(x);
    if r >= T::one() || xi2 <= T::zero() {
        return T::zero();
    }
    let c = spec.consts.c_l;
    let w = -T::c(2.0) * c / spec.j0_cl * spec.j1_sin(xi2, r);
    spec.amplitude() * w.max(T::zero())
}

/// Stream function inside the support, A R² ψ̄(ξ) with
/// ψ̄ = −r sinθ + 2J₁(c_L r)/(c_L J₀(c_L)) sinθ.
pub fn lamb_stream<T: Real>(spec: &DipoleSpec<T>, x: Point<T>) -> Result<T> {
    let (_, xi2, r) = spec.normalize(x);
    if r > T::one() + T::c(64.0) * T::epsilon() {
        return Err(Error::Domain(format!("point at normalized radius {r} lies outside the dipole support")));
    }
    let c = spec.consts.c_l;
    let psi_bar = -xi2 + T::c(2.0) / (c * spec.j0_cl) * spec.j1_sin(xi2, r);
    let rr = spec.radius();
    Ok(spec.amplitude() * rr * rr * psi_bar)
}

/// Closed-form K = κ², μ, E = C_L κ μ, V = C_L κ.
pub fn lamb_invariants<T: Real>(spec: &DipoleSpec<T>) -> LambInvariants<T> {
    let cl = spec.consts.big_c_l;
    LambInvariants {
        enstrophy: spec.kappa * spec.kappa,
        impulse: spec.mu,
        energy: cl * spec.kappa * spec.mu,
        speed: cl * spec.kappa,
    }
}

/// An ordered list of dipoles placed along the axis.
#[derive(Clone, Debug, PartialEq)]
pub struct NDipoleConfig<T> {
    pub specs: Vec<DipoleSpec<T>>,
    pub separation: T,
    /// When set, the Theorem-A ordering and separation hypotheses are enforced.
    pub ordered: bool,
}

impl<T: Real> NDipoleConfig<T> {
    pub fn positions(&self) -> Vec<T> {
        self.specs.iter().map(|s| s.center_x1).collect()
    }

    pub fn speeds(&self) -> Vec<T> {
        self.specs.iter().map(|s| s.speed()).collect()
    }

    /// Every violated hypothesis, by name (`ordering`, `separation`, `empty`).
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.specs.is_empty() {
            out.push("empty: no dipoles".to_string());
        }
        if !self.ordered {
            return out;
        }
        for (i, w) in self.specs.windows(2).enumerate() {
            if !(w[0].kappa > w[1].kappa) {
                out.push(format!("ordering: kappa[{}]={} must exceed kappa[{}]={}", i + 1, w[0].kappa, i + 2, w[1].kappa));
            }
            if !(w[0].center_x1 > w[1].center_x1 + self.separation) {
                out.push(format!(
                    "separation: p[{}] - p[{}] = {} must exceed D0 = {}",
                    i + 1,
                    i + 2,
                    w[0].center_x1 - w[1].center_x1,
                    self.separation
                ));
            }
        }
        out
    }
}

/// Σ_i lamb_vorticity(spec_i, x).
pub fn superpose<T: Real>(config: &NDipoleConfig<T>, x: Point<T>) -> T {
    config.specs.iter().map(|s| lamb_vorticity(s, x)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn norm() -> DipoleSpec<f64> {
        DipoleSpec::normalized(0.0)
    }

    /// Independent midpoint-rule quadrature over the bounding box.
    fn quad(spec: &DipoleSpec<f64>, h: f64, f: impl Fn(Point<f64>, f64) -> f64) -> f64 {
        let (lo, hi) = spec.bounding_box();
        let n1 = ((hi.x1 - lo.x1) / h).ceil() as usize;
        let n2 = ((hi.x2 - lo.x2) / h).ceil() as usize;
        let mut s = 0.0;
        for i in 0..n1 {
            for j in 0..n2 {
                let p = Point::new(lo.x1 + (i as f64 + 0.5) * h, lo.x2 + (j as f64 + 0.5) * h);
                s += f(p, lamb_vorticity(spec, p));
            }
        }
        s * h * h
    }

    #[test]
    fn normalized_scales_are_unity() {
        let s = norm();
        assert!((s.amplitude() - 1.0).abs() < 1e-14);
        assert!((s.radius() - 1.0).abs() < 1e-14);
        assert!((s.speed() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn support_and_axis() {
        let s = norm();
        assert_eq!(lamb_vorticity(&s, Point::new(0.8, 0.8)), 0.0);
        assert_eq!(lamb_vorticity(&s, Point::new(0.3, 0.0)), 0.0);
        assert!(lamb_vorticity(&s, Point::new(0.3, 0.4)) > 0.0);
    }

    #[test]
    fn impulse_by_quadrature() {
        let mu = quad(&norm(), 1.0 / 512.0, |p, w| p.x2 * w);
        assert!(((mu - PI) / PI).abs() < 1e-4, "{mu}");
    }

    #[test]
    fn rescaled_profile_has_prescribed_norms() {
        let s = DipoleSpec::new(3.1, 0.7, 2.0).unwrap();
        let h = s.radius() / 400.0;
        let k = quad(&s, h, |_, w| w * w);
        let mu = quad(&s, h, |p, w| p.x2 * w);
        assert!(((k - 3.1 * 3.1) / 9.61).abs() < 1e-4, "{k}");
        assert!(((mu - 0.7) / 0.7).abs() < 1e-4, "{mu}");
    }

    #[test]
    fn stream_closed_forms() {
        let s = norm();
        for i in 0..=20 {
            let th = PI * i as f64 / 20.0;
            let p = Point::new(th.cos(), th.sin());
            let psi = lamb_stream(&s, p).unwrap();
            assert!((psi + th.sin()).abs() < 1e-12, "theta={th}");
        }
        assert_eq!(lamb_stream(&s, Point::new(0.4, 0.0)).unwrap(), 0.0);
        assert!(lamb_stream(&s, Point::new(1.5, 0.5)).is_err());
    }

    #[test]
    fn stream_vorticity_relation() {
        let s = norm();
        let c = s.c_l();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let r: f64 = rng.gen_range(0.0..1.0);
            let th: f64 = rng.gen_range(0.0..PI);
            let p = Point::new(r * th.cos(), r * th.sin());
            let w = lamb_vorticity(&s, p);
            let rel = c * c * (-lamb_stream(&s, p).unwrap() - p.x2).max(0.0);
            worst = worst.max((w - rel).abs());
        }
        assert!(worst <= 1e-8, "{worst}");
    }

    #[test]
    fn invariants_closed_form() {
        let s = norm();
        let inv = lamb_invariants(&s);
        let c = s.c_l();
        assert!((inv.enstrophy - PI * c * c).abs() < 1e-12);
        assert!((inv.enstrophy - 46.1245).abs() < 1e-3);
        assert!((inv.impulse - PI).abs() < 1e-15);
        assert!((inv.energy - PI).abs() < 1e-13);
        assert!((inv.speed - 1.0).abs() < 1e-14);
        let d = DipoleSpec::new(2.0 * s.kappa, s.mu, 0.0).unwrap();
        let i2 = lamb_invariants(&d);
        assert!((i2.enstrophy / inv.enstrophy - 4.0).abs() < 1e-13);
        assert!((i2.energy / inv.energy - 2.0).abs() < 1e-13);
        assert!((i2.speed / inv.speed - 2.0).abs() < 1e-13);
    }

    #[test]
    fn lipschitz_at_support_boundary() {
        let s = DipoleSpec::new(5.0, 2.0, 1.0).unwrap();
        let r = s.radius();
        // |ω| ≤ C dist(x, ∂support) with C the maximal radial slope A·2c_L²/R
        let c = s.c_l();
        let slope = s.amplitude() * 2.0 * c * c / r;
        for i in 1..200 {
            let th = PI * i as f64 / 200.0;
            for d in [1e-4, 1e-3, 1e-2] {
                let p = Point::new(1.0 + (r - d * r) * th.cos(), (r - d * r) * th.sin());
                assert!(lamb_vorticity(&s, p) <= slope * d * r * 1.01);
            }
        }
    }

    #[test]
    fn speed_radius_constructor() {
        let s = DipoleSpec::<f64>::from_speed_radius(1.25, 0.5, 0.0).unwrap();
        assert!((s.speed() - 1.25).abs() < 1e-13);
        assert!((s.radius() - 0.5).abs() < 1e-13);
    }

    #[test]
    fn superposition() {
        let a = DipoleSpec::new(5.0, 3.0, 10.0).unwrap();
        let b = DipoleSpec::new(4.0, 3.0, 0.0).unwrap();
        let cfg = NDipoleConfig { specs: vec![a, b], separation: 5.0, ordered: true };
        assert!(cfg.violations().is_empty());
        let p = Point::new(0.2, 0.3);
        assert_eq!(superpose(&cfg, p), lamb_vorticity(&b, p));
        let single = NDipoleConfig { specs: vec![a], separation: 0.0, ordered: false };
        assert_eq!(superpose(&single, Point::new(10.1, 0.3)), lamb_vorticity(&a, Point::new(10.1, 0.3)));
        let bad = NDipoleConfig { specs: vec![b, a], separation: 5.0, ordered: true };
        let v = bad.violations();
        assert!(v.iter().any(|m| m.starts_with("ordering")));
        assert!(v.iter().any(|m| m.starts_with("separation")));
    }

    #[test]
    fn superposition_impulse_additive() {
        let a = DipoleSpec::new(5.0, 3.0, 10.0).unwrap();
        let b = DipoleSpec::new(4.0, 1.5, 0.0).unwrap();
        let cfg = NDipoleConfig { specs: vec![a, b], separation: 5.0, ordered: true };
        let h = 1.0 / 256.0;
        let mut s = 0.0;
        let (n1, n2) = ((14.0 / h) as usize, (2.0 / h) as usize);
        for i in 0..n1 {
            for j in 0..n2 {
                let p = Point::new(-2.0 + (i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                s += p.x2 * superpose(&cfg, p) * h * h;
            }
        }
        assert!(((s - 4.5) / 4.5).abs() < 1e-4, "{s}");
    }
}
