//! Time integration of the particle system under its own blob velocity.

use std::io::{BufRead, Write};

use crate::field::{deposit_m4, GridSpec, ParticleField, DISCRETIZE_THRESHOLD};
use crate::kernels::half_plane;
use crate::tree::{Method, TreeParams, Want};
use crate::{Error, Point, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rk4,
    Rk2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig<T> {
    pub dt: T,
    pub t_end: T,
    pub scheme: Scheme,
    /// Remesh every this many steps; 0 disables remeshing.
    pub remesh_every: usize,
    pub treecode: bool,
    pub tree: TreeParams<T>,
}

impl<T: Real> IntegratorConfig<T> {
    pub fn new(dt: T, t_end: T) -> Self {
        Self { dt, t_end, scheme: Scheme::Rk4, remesh_every: 0, treecode: true, tree: TreeParams::default() }
    }

    pub fn method(&self) -> Method<T> {
        if self.treecode {
            Method::Tree(self.tree)
        } else {
            Method::Direct
        }
    }

    pub fn steps(&self) -> usize {
        if self.t_end <= T::zero() {
            0
        } else {
            (self.t_end / self.dt).round().f() as usize
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationState<T> {
    pub t: T,
    pub field: ParticleField<T>,
    pub step_index: usize,
}

impl<T: Real> SimulationState<T> {
    pub fn new(field: ParticleField<T>) -> Self {
        Self { t: T::zero(), field, step_index: 0 }
    }
}

/// Velocity of particles at `pos` carrying the field's circulations.
fn velocity<T: Real>(field: &ParticleField<T>, pos: &[Point<T>], method: Method<T>) -> Vec<[T; 2]> {
    half_plane(pos, &field.circulation, pos, field.smoothing(), Want::VELOCITY, method).into_iter().map(|s| s.u).collect()
}

fn offset<T: Real>(base: &[Point<T>], k: &[[T; 2]], s: T) -> Vec<Point<T>> {
    base.iter().zip(k).map(|(p, u)| Point::new(p.x1 + s * u[0], p.x2 + s * u[1])).collect()
}

/// Advances positions by a signed `dt`; returns the largest stage-one speed.
pub fn advance<T: Real>(field: &mut ParticleField<T>, dt: T, scheme: Scheme, method: Method<T>) -> T {
    let x0 = field.pos.clone();
    let half = dt * T::c(0.5);
    let k1 = velocity(field, &x0, method);
    let vmax = k1.iter().map(|u| u[0].hypot(u[1])).fold(T::zero(), T::max);
    match scheme {
        Scheme::Rk2 => {
            let k2 = velocity(field, &offset(&x0, &k1, half), method);
            field.pos = offset(&x0, &k2, dt);
        }
        Scheme::Rk4 => {
            let k2 = velocity(field, &offset(&x0, &k1, half), method);
            let k3 = velocity(field, &offset(&x0, &k2, half), method);
            let k4 = velocity(field, &offset(&x0, &k3, dt), method);
            let (sixth, two) = (dt / T::c(6.0), T::c(2.0));
            for i in 0..x0.len() {
                field.pos[i] = Point::new(
                    x0[i].x1 + sixth * (k1[i][0] + two * k2[i][0] + two * k3[i][0] + k4[i][0]),
                    x0[i].x2 + sixth * (k1[i][1] + two * k2[i][1] + two * k3[i][1] + k4[i][1]),
                );
            }
        }
    }
    vmax
}

/// One step of the configured scheme, remeshing when due.
pub fn step<T: Real>(state: &SimulationState<T>, config: &IntegratorConfig<T>) -> Result<SimulationState<T>> {
    step_with_travel(state, config).map(|(s, _)| s)
}

/// [`step`], also returning dt·max|u| over the step.
fn step_with_travel<T: Real>(state: &SimulationState<T>, config: &IntegratorConfig<T>) -> Result<(SimulationState<T>, T)> {
    let mut next = state.clone();
    let vmax = advance(&mut next.field, config.dt, config.scheme, config.method());
    if next.field.pos.iter().any(|p| !p.x1.is_finite() || !p.x2.is_finite()) {
        return Err(Error::BlowUp(state.step_index + 1));
    }
    next.step_index += 1;
    next.t = state.t + config.dt;
    if config.remesh_every > 0 && next.step_index.is_multiple_of(config.remesh_every) {
        next.field = remesh(&next.field)?;
    }
    Ok((next, vmax * config.dt))
}

/// Redistributes circulation onto the lattice of spacing h and rebuilds one
/// particle per occupied cell. Each new particle takes the label that
/// contributed most to its cell; origins are reset.
pub fn remesh<T: Real>(field: &ParticleField<T>) -> Result<ParticleField<T>> {
    if field.is_empty() {
        return Ok(field.clone());
    }
    let spec = GridSpec::covering(field, field.h, T::zero());
    let g = deposit_m4(&field.pos, &field.circulation, spec)?;
    let labels: Vec<u32> = {
        let mut best: Vec<(T, u32)> = vec![(T::zero(), 0); spec.n1 * spec.n2];
        let s = spec.spacing;
        for k in 0..field.len() {
            let p = field.pos[k];
            let i = ((p.x1 - spec.origin.x1) / s - T::c(0.5)).round().f() as usize;
            let j = (((p.x2 - spec.origin.x2) / s - T::c(0.5)).round().f().max(0.0)) as usize;
            let c = j.min(spec.n2 - 1) * spec.n1 + i.min(spec.n1 - 1);
            if field.circulation[k] > best[c].0 {
                best[c] = (field.circulation[k], field.label[k]);
            }
        }
        best.into_iter().map(|b| b.1).collect()
    };
    let peak = field.vorticity.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let cut = T::c(DISCRETIZE_THRESHOLD).max(T::c(REMESH_CUT) * peak);
    let mut out = ParticleField::empty(field.h);
    for j in 0..spec.n2 {
        for i in 0..spec.n1 {
            let v = g.value(i, j);
            if v.abs() > cut {
                out.push(spec.cell_center(i, j), v, T::one(), labels[j * spec.n1 + i]);
            }
        }
    }
    out.remeshed = true;
    Ok(out)
}

/// Remeshed cells below this fraction of the peak |ω| are dropped.
pub const REMESH_CUT: f64 = 1e-6;

/// Whether [`run`] should keep going after an observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Steps to `t_end`, calling `observe` on the initial state, every `cadence`
/// steps and on the final state. Returns the final state.
pub fn run<T: Real>(
    initial: SimulationState<T>,
    config: &IntegratorConfig<T>,
    cadence: usize,
    mut observe: impl FnMut(&SimulationState<T>) -> Result<Flow>,
) -> Result<SimulationState<T>> {
    let cadence = cadence.max(1);
    let steps = config.steps();
    let mut state = initial;
    if observe(&state)? == Flow::Stop {
        return Ok(state);
    }
    let mut warned = false;
    for n in 1..=steps {
        let (next, travel) = step_with_travel(&state, config)?;
        // particles should move less than one blob core per step
        if !warned && travel > next.field.blob_delta() {
            log::warn!("step {}: dt·max|u| = {} exceeds the blob core {}", state.step_index, travel, next.field.blob_delta());
            warned = true;
        }
        state = next;
        if (n % cadence == 0 || n == steps) && observe(&state)? == Flow::Stop {
            break;
        }
    }
    Ok(state)
}

/// Plain-text checkpoint. Layout, one record per line, whitespace separated:
///
/// ```text
/// # lamb-lab checkpoint v1
/// t h step remeshed
/// x1 x2 x1_0 x2_0 gamma omega label      (one line per particle)
/// ```
///
/// Floats are written in shortest round-trip scientific notation, so a
/// checkpoint reloads bit for bit.
pub fn write_checkpoint<T: Real, W: Write>(state: &SimulationState<T>, mut w: W) -> std::io::Result<()> {
    let f = &state.field;
    writeln!(w, "# lamb-lab checkpoint v1")?;
    writeln!(w, "{:e} {:e} {} {}", state.t.f(), f.h.f(), state.step_index, u8::from(f.remeshed))?;
    for i in 0..f.len() {
        writeln!(
            w,
            "{:e} {:e} {:e} {:e} {:e} {:e} {}",
            f.pos[i].x1.f(),
            f.pos[i].x2.f(),
            f.origin[i].x1.f(),
            f.origin[i].x2.f(),
            f.circulation[i].f(),
            f.vorticity[i].f(),
            f.label[i]
        )?;
    }
    Ok(())
}

pub fn read_checkpoint<T: Real, R: BufRead>(r: R) -> Result<SimulationState<T>> {
    let bad = |m: String| Error::Invalid(format!("checkpoint: {m}"));
    let mut lines = r.lines().map_while(|l| l.ok()).filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let head = lines.next().ok_or_else(|| bad("missing header".into()))?;
    let h: Vec<&str> = head.split_whitespace().collect();
    if h.len() != 4 {
        return Err(bad(format!("header '{head}'")));
    }
    let num = |s: &str| s.parse::<f64>().map(T::c).map_err(|_| bad(format!("number '{s}'")));
    let mut field = ParticleField::empty(num(h[1])?);
    field.remeshed = h[3] == "1";
    let step_index = h[2].parse().map_err(|_| bad(h[2].into()))?;
    for line in lines {
        let c: Vec<&str> = line.split_whitespace().collect();
        if c.len() != 7 {
            return Err(bad(format!("row '{line}'")));
        }
        field.pos.push(Point::new(num(c[0])?, num(c[1])?));
        field.origin.push(Point::new(num(c[2])?, num(c[3])?));
        field.circulation.push(num(c[4])?);
        field.vorticity.push(num(c[5])?);
        field.label.push(c[6].parse().map_err(|_| bad(c[6].into()))?);
    }
    Ok(SimulationState { t: num(h[0])?, field, step_index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{energy, norms};
    use crate::lamb::DipoleSpec;

    fn lamb(h: f64) -> ParticleField<f64> {
        ParticleField::discretize_dipoles(&[DipoleSpec::normalized(0.0)], h).unwrap()
    }

    #[test]
    fn empty_field_only_advances_time() {
        let s = SimulationState::new(ParticleField::<f64>::empty(0.1));
        let cfg = IntegratorConfig::new(0.5, 1.0);
        let n = step(&s, &cfg).unwrap();
        assert_eq!(n.t, 0.5);
        assert_eq!(n.step_index, 1);
        assert!(n.field.is_empty());
    }

    #[test]
    fn zero_end_time_gives_one_observation() {
        let s = SimulationState::new(lamb(1.0 / 16.0));
        let mut seen = 0;
        run(s, &IntegratorConfig::new(0.1, 0.0), 1, |_| {
            seen += 1;
            Ok(Flow::Continue)
        })
        .unwrap();
        assert_eq!(seen, 1);
    }

    #[test]
    fn short_lamb_run_conserves() {
        let h = 1.0 / 32.0;
        let s0 = SimulationState::new(lamb(h));
        let cfg = IntegratorConfig::new(0.02, 0.5);
        let n0 = norms(&s0.field);
        let e0 = energy(&s0.field, cfg.method());
        let c0 = s0.field.center_x1().unwrap();
        let s = run(s0.clone(), &cfg, 5, |_| Ok(Flow::Continue)).unwrap();
        let n1 = norms(&s.field);
        assert_eq!(n1.l1, n0.l1);
        assert_eq!(n1.l_infty, n0.l_infty);
        assert_eq!(n1.support_area, n0.support_area);
        assert_eq!(s.field.origin, s0.field.origin);
        assert!(((n1.impulse - n0.impulse) / n0.impulse).abs() < 2e-3);
        assert!(((energy(&s.field, cfg.method()) - e0) / e0).abs() < 2e-3);
        let moved = s.field.center_x1().unwrap() - c0;
        assert!((moved - 0.5).abs() < 0.03, "moved {moved}");
        assert!(s.field.pos.iter().all(|p| p.x2 > 0.0));
    }

    #[test]
    fn time_reversal() {
        let f = lamb(1.0 / 16.0);
        let mut g = f.clone();
        let m = Method::Direct;
        for &dt in &[0.02, 0.01] {
            g.pos = f.pos.clone();
            advance(&mut g, dt, Scheme::Rk4, m);
            advance(&mut g, -dt, Scheme::Rk4, m);
            let err = f.pos.iter().zip(&g.pos).map(|(a, b)| a.dist2(*b).sqrt()).fold(0.0, f64::max);
            assert!(err < 50.0 * dt.powi(5), "dt={dt}: {err}");
        }
    }

    #[test]
    fn remesh_conserves_circulation_and_drops_origins() {
        let f = lamb(1.0 / 16.0);
        let r = remesh(&f).unwrap();
        assert!((r.total_circulation() / f.total_circulation() - 1.0).abs() < 1e-12);
        assert!(r.remeshed);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut s = SimulationState::new(lamb(1.0 / 16.0));
        s = step(&s, &IntegratorConfig::new(0.01, 1.0)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&s, &mut buf).unwrap();
        let back: SimulationState<f64> = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, s);
    }
}
