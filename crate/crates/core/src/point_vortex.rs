//! Point vortices on the half-plane (Kirchhoff–Helmholtz system with images).

use crate::kernels::biot_savart;
use crate::{Error, Point, Real, Result};

/// N point vortices with circulations Γ_i > 0.
#[derive(Clone, Debug, PartialEq)]
pub struct PointVortices<T> {
    pub pos: Vec<Point<T>>,
    pub gamma: Vec<T>,
}

impl<T: Real> PointVortices<T> {
    /// Vortices at heights `h` and positions `p` with free speeds `v`,
    /// so that Γ_i = 4π h_i V_i.
    pub fn from_speeds(p: &[T], h: &[T], v: &[T]) -> Self {
        let four_pi = T::c(4.0) * T::PI();
        Self {
            pos: p.iter().zip(h).map(|(&a, &b)| Point::new(a, b)).collect(),
            gamma: h.iter().zip(v).map(|(&b, &s)| four_pi * b * s).collect(),
        }
    }

    /// Free speed Γ/(4πh) of each vortex at its current height.
    pub fn free_speeds(&self) -> Vec<T> {
        let four_pi = T::c(4.0) * T::PI();
        self.pos.iter().zip(&self.gamma).map(|(p, &g)| g / (four_pi * p.x2)).collect()
    }

    /// Velocity of every vortex: images of all vortices plus the other vortices.
    pub fn velocities(&self, pos: &[Point<T>]) -> Result<Vec<[T; 2]>> {
        let four_pi = T::c(4.0) * T::PI();
        let mut out = Vec::with_capacity(pos.len());
        for (i, &x) in pos.iter().enumerate() {
            if !(x.x2 > T::zero()) {
                return Err(Error::Domain(format!("vortex {i} left the open half-plane")));
            }
            // own image: u₁ = Γ/(4π x₂)
            let mut u = [self.gamma[i] / (four_pi * x.x2), T::zero()];
            for (j, &y) in pos.iter().enumerate() {
                if j != i {
                    let k = biot_savart(x, y)?;
                    u[0] += self.gamma[j] * k[0];
                    u[1] += self.gamma[j] * k[1];
                }
            }
            out.push(u);
        }
        Ok(out)
    }

    /// One classical RK4 step.
    pub fn step(&mut self, dt: T) -> Result<()> {
        let x0 = self.pos.clone();
        let shift = |base: &[Point<T>], k: &[[T; 2]], s: T| -> Vec<Point<T>> {
            base.iter().zip(k).map(|(p, u)| Point::new(p.x1 + s * u[0], p.x2 + s * u[1])).collect()
        };
        let half = dt * T::c(0.5);
        let k1 = self.velocities(&x0)?;
        let k2 = self.velocities(&shift(&x0, &k1, half))?;
        let k3 = self.velocities(&shift(&x0, &k2, half))?;
        let k4 = self.velocities(&shift(&x0, &k3, dt))?;
        let sixth = dt / T::c(6.0);
        for i in 0..x0.len() {
            let two = T::c(2.0);
            self.pos[i].x1 = x0[i].x1 + sixth * (k1[i][0] + two * k2[i][0] + two * k3[i][0] + k4[i][0]);
            self.pos[i].x2 = x0[i].x2 + sixth * (k1[i][1] + two * k2[i][1] + two * k3[i][1] + k4[i][1]);
            if !self.pos[i].x1.is_finite() || !self.pos[i].x2.is_finite() {
                return Err(Error::BlowUp(i));
            }
        }
        Ok(())
    }

    /// Impulse Σ Γ_i h_i, conserved by the dynamics.
    pub fn impulse(&self) -> T {
        self.pos.iter().zip(&self.gamma).map(|(p, &g)| p.x2 * g).sum()
    }
}

/// Worst deviations over a run: max |h_i(t) − h_i(0)| and
/// max |p_i(t) − p_i(0) − V_i t|/t.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LadderReport<T> {
    pub max_height_drift: T,
    pub max_relative_shift: T,
    pub impulse_drift: T,
}

pub fn run_ladder<T: Real>(mut pv: PointVortices<T>, dt: T, t_end: T) -> Result<LadderReport<T>> {
    let p0: Vec<T> = pv.pos.iter().map(|p| p.x1).collect();
    let h0: Vec<T> = pv.pos.iter().map(|p| p.x2).collect();
    let v = pv.free_speeds();
    let m0 = pv.impulse();
    let steps = (t_end / dt).round().f() as usize;
    let mut rep: LadderReport<T> = LadderReport::default();
    for n in 1..=steps {
        pv.step(dt)?;
        let t = dt * T::c(n as f64);
        for i in 0..pv.pos.len() {
            rep.max_height_drift = rep.max_height_drift.max((pv.pos[i].x2 - h0[i]).abs());
            let r = (pv.pos[i].x1 - p0[i] - v[i] * t).abs() / t;
            rep.max_relative_shift = rep.max_relative_shift.max(r);
        }
        rep.impulse_drift = rep.impulse_drift.max(((pv.impulse() - m0) / m0).abs());
    }
    Ok(rep)
}
