//! Half-plane Green's function G, Biot–Savart kernel K, and the stream
//! function / velocity induced by a particle field.
//!
//! Field evaluations go through the free-space sums of [`crate::tree`]: the
//! image term at a target z equals the free-space term at the mirror z̄ with
//! the sign of the circulation flipped, so one source tree serves both.

use crate::field::ParticleField;
use crate::tree::{free_space_sums, FreeSum, Method, Smoothing, Want};
use crate::{Error, Point, Real, Result};

/// G(x, y) and K(x, y) at one pair of points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelPair<T> {
    pub g_value: T,
    pub k_value: [T; 2],
}

/// (1/4π)·log(1 + 4x₂y₂/|x − y|²).
pub fn green<T: Real>(x: Point<T>, y: Point<T>) -> Result<T> {
    let d2 = x.dist2(y);
    if d2 == T::zero() {
        return Err(Error::Singularity);
    }
    let t = T::c(4.0) * x.x2 * y.x2 / d2;
    Ok(t.ln_1p() / (T::c(4.0) * T::PI()))
}

/// Velocity at x induced by a unit point vortex at y and its negative image at ȳ.
pub fn biot_savart<T: Real>(x: Point<T>, y: Point<T>) -> Result<[T; 2]> {
    let d2 = x.dist2(y);
    if d2 == T::zero() {
        return Err(Error::Singularity);
    }
    let m2 = x.dist2(y.mirror());
    let two_pi = T::c(2.0) * T::PI();
    let dx = x.x1 - y.x1;
    let u1 = -((x.x2 - y.x2) / d2 - (x.x2 + y.x2) / m2) / two_pi;
    let u2 = (dx / d2 - dx / m2) / two_pi;
    Ok([u1, u2])
}

pub fn kernel_pair<T: Real>(x: Point<T>, y: Point<T>) -> Result<KernelPair<T>> {
    Ok(KernelPair { g_value: green(x, y)?, k_value: biot_savart(x, y)? })
}

/// Velocity and stream function at one target.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sample<T> {
    pub u: [T; 2],
    pub psi: T,
}

/// Half-plane velocity/stream of point sources with circulations `strengths`
/// at each target.
///
/// ψ = (1/2π) Σ γ (ℓ(|z − w|) − ℓ(|z̄ − w|)), u = ∇⊥ψ with the matching
/// smoothed kernels; u₂ vanishes exactly for targets on the axis because z and
/// z̄ then coincide bit for bit.
pub fn half_plane<T: Real>(
    sources: &[Point<T>],
    strengths: &[T],
    targets: &[Point<T>],
    smoothing: Smoothing<T>,
    want: Want,
    method: Method<T>,
) -> Vec<Sample<T>> {
    let n = targets.len();
    let mut all = Vec::with_capacity(2 * n);
    all.extend_from_slice(targets);
    all.extend(targets.iter().map(|p| p.mirror()));
    let sums = free_space_sums(sources, strengths, &all, smoothing, want, method);
    let inv = T::one() / (T::c(2.0) * T::PI());
    (0..n).map(|i| assemble(sums[i], sums[n + i], inv)).collect()
}

#[inline]
fn assemble<T: Real>(a: FreeSum<T>, b: FreeSum<T>, inv: T) -> Sample<T> {
    Sample { u: [-(a.vy + b.vy) * inv, (a.vx - b.vx) * inv], psi: (a.pot - b.pot) * inv }
}

/// Blob velocities of a field at arbitrary targets.
pub fn velocities<T: Real>(field: &ParticleField<T>, targets: &[Point<T>], method: Method<T>) -> Vec<[T; 2]> {
    half_plane(&field.pos, &field.circulation, targets, field.smoothing(), Want::VELOCITY, method)
        .into_iter()
        .map(|s| s.u)
        .collect()
}

/// Blob stream function of a field at arbitrary targets.
pub fn streams<T: Real>(field: &ParticleField<T>, targets: &[Point<T>], method: Method<T>) -> Vec<T> {
    half_plane(&field.pos, &field.circulation, targets, field.smoothing(), Want::POTENTIAL, method)
        .into_iter()
        .map(|s| s.psi)
        .collect()
}

/// Velocity and stream together.
pub fn samples<T: Real>(field: &ParticleField<T>, targets: &[Point<T>], method: Method<T>) -> Vec<Sample<T>> {
    half_plane(&field.pos, &field.circulation, targets, field.smoothing(), Want::BOTH, method)
}

/// Velocity of every particle of the field.
pub fn self_velocities<T: Real>(field: &ParticleField<T>, method: Method<T>) -> Vec<[T; 2]> {
    velocities(field, &field.pos, method)
}

/// Σ_j K_δ(x, x_j) γ_j by direct summation.
pub fn velocity_at<T: Real>(field: &ParticleField<T>, x: Point<T>) -> [T; 2] {
    velocities(field, &[x], Method::Direct)[0]
}

/// Σ_j G_δ(x, x_j) γ_j with the sign convention ψ ≤ 0, by direct summation.
pub fn stream_at<T: Real>(field: &ParticleField<T>, x: Point<T>) -> T {
    streams(field, &[x], Method::Direct)[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lamb::{lamb_stream, DipoleSpec};
    use crate::tree::TreeParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_pt(rng: &mut ChaCha8Rng) -> Point<f64> {
        Point::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.0..3.0))
    }

    #[test]
    fn green_basic() {
        let x = Point::new(0.3, 0.0);
        assert_eq!(green(x, Point::new(1.0, 2.0)).unwrap(), 0.0);
        assert!(matches!(green(x, x), Err(Error::Singularity)));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let (a, b) = (rand_pt(&mut rng), rand_pt(&mut rng));
            let g = green(a, b).unwrap();
            assert_eq!(g, green(b, a).unwrap());
            assert!(g >= 0.0);
            // log(1 + t) ≤ t
            let bound = a.x2 * b.x2 / (std::f64::consts::PI * a.dist2(b));
            assert!(g <= bound * (1.0 + 1e-14));
        }
    }

    #[test]
    fn kernel_is_minus_perp_gradient_of_green() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = 1e-6;
        for _ in 0..200 {
            let (x, y) = (rand_pt(&mut rng), rand_pt(&mut rng));
            if x.dist2(y) < 0.1 || x.x2 < 0.01 {
                continue;
            }
            let g = |p: Point<f64>| green(p, y).unwrap();
            let d1 = (g(Point::new(x.x1 + e, x.x2)) - g(Point::new(x.x1 - e, x.x2))) / (2.0 * e);
            let d2 = (g(Point::new(x.x1, x.x2 + e)) - g(Point::new(x.x1, x.x2 - e))) / (2.0 * e);
            // ψ = −G, u = ∇⊥ψ = (−∂₂ψ, ∂₁ψ) = (∂₂G, −∂₁G)
            let k = biot_savart(x, y).unwrap();
            assert!((k[0] - d2).abs() < 1e-6 && (k[1] + d1).abs() < 1e-6);
        }
    }

    #[test]
    fn kernel_bounds_and_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst: f64 = 0.0;
        for _ in 0..100_000 {
            let (mut x, y) = (rand_pt(&mut rng), rand_pt(&mut rng));
            if rng.gen_bool(0.1) {
                x.x2 = 0.0;
            }
            let k = biot_savart(x, y).unwrap();
            if x.x2 == 0.0 {
                assert_eq!(k[1], 0.0);
            }
            let r = y.x2 / (x.dist2(y).sqrt() * x.dist2(y.mirror()).sqrt());
            worst = worst.max(k[0].hypot(k[1]) / r);
        }
        assert!(worst <= 2.0 / std::f64::consts::PI, "constant {worst}");
    }

    #[test]
    fn two_particles_exchange_no_impulse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let (a, b) = (rand_pt(&mut rng), rand_pt(&mut rng));
            let (ga, gb) = (rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0));
            let s = ga * gb * biot_savart(a, b).unwrap()[1] + gb * ga * biot_savart(b, a).unwrap()[1];
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn empty_field_is_quiet() {
        let f = ParticleField::<f64>::empty(0.1);
        assert_eq!(velocity_at(&f, Point::new(0.0, 1.0)), [0.0, 0.0]);
        assert_eq!(stream_at(&f, Point::new(0.0, 1.0)), 0.0);
    }

    #[test]
    fn field_samples_match_point_kernels_far_away() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut f = ParticleField::<f64>::empty(0.01);
        for i in 0..50 {
            f.push(Point::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)), 1.0 + i as f64 * 1e-2, 1.0, 0);
        }
        let x = Point::new(2.5, 0.7);
        let u = velocity_at(&f, x);
        let psi = stream_at(&f, x);
        let (mut v, mut p) = ([0.0, 0.0], 0.0);
        for j in 0..f.len() {
            let k = biot_savart(x, f.pos[j]).unwrap();
            v[0] += f.circulation[j] * k[0];
            v[1] += f.circulation[j] * k[1];
            p -= f.circulation[j] * green(x, f.pos[j]).unwrap();
        }
        assert!((u[0] - v[0]).abs() < 1e-13 && (u[1] - v[1]).abs() < 1e-13);
        assert!((psi - p).abs() < 1e-13);
        assert_eq!(velocity_at(&f, Point::new(0.4, 0.0))[1], 0.0);
        assert_eq!(stream_at(&f, Point::new(0.4, 0.0)), 0.0);
    }

    #[test]
    fn tree_and_direct_agree_on_lamb() {
        let spec = DipoleSpec::<f64>::normalized(0.0);
        let f = ParticleField::discretize_dipoles(&[spec], 1.0 / 64.0).unwrap();
        let direct = self_velocities(&f, Method::Direct);
        let tree = self_velocities(&f, Method::Tree(TreeParams::default()));
        let umax = direct.iter().map(|u| u[0].hypot(u[1])).fold(0.0, f64::max);
        let err = direct.iter().zip(&tree).map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1])).fold(0.0, f64::max);
        assert!(err / umax < 1e-6, "rel err {}", err / umax);
    }

    #[test]
    fn lamb_center_speed_and_stream() {
        let spec = DipoleSpec::<f64>::normalized(0.0);
        let f = ParticleField::discretize_dipoles(&[spec], 1.0 / 128.0).unwrap();
        // fluid speed at the centre is 1 − 1/J₀(c_L); the dipole itself moves at 1
        let u = velocity_at(&f, Point::new(0.0, 0.0));
        let want = 1.0 - 1.0 / crate::special_fn::j0(spec.c_l());
        assert!((u[0] - want).abs() < 5e-2 && u[1] == 0.0, "{u:?}");
        let vel = self_velocities(&f, Method::Tree(TreeParams::default()));
        let mean: f64 = vel.iter().zip(&f.circulation).map(|(u, g)| u[0] * g).sum::<f64>() / f.total_circulation();
        assert!((mean - 1.0).abs() < 5e-2, "mean {mean}");
        for &(a, b) in &[(0.2, 0.5), (-0.4, 0.3), (0.0, 0.9), (0.6, 0.1)] {
            let x = Point::new(a, b);
            let want = lamb_stream(&spec, x).unwrap();
            let got = stream_at(&f, x);
            assert!((got - want).abs() < 1e-2, "{x:?}: {got} vs {want}");
        }
    }
}
