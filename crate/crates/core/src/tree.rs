//! Free-space vortex sums Σ q·K(z − w) evaluated directly or with a multipole treecode.
//!
//! Both paths return the same three raw sums per target:
//! `vx = Σ q g(r²)(x₁−y₁)`, `vy = Σ q g(r²)(x₂−y₂)`, `pot = Σ q ℓ(r²)`,
//! where `g = f(r)/r²` is the (possibly smoothed) velocity factor and `ℓ` the
//! matching smoothed `log r`. The half-plane kernels are assembled from these
//! by evaluating at a target and at its mirror image.

// The expansion recurrences index several coefficient arrays with one counter.
#![allow(clippy::needless_range_loop)]

use num_complex::Complex;
use rayon::prelude::*;

use crate::{Point, Real};

/// Core smoothing of the free-space kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Smoothing<T> {
    /// Singular point kernel; exactly coincident pairs are skipped.
    Point,
    /// Compactly supported blob of radius ρ with vorticity ∝ (1 − r²/ρ²)³.
    /// Its velocity profile is f(r) = 1 − (1 − r²/ρ²)⁴ and equals the point
    /// kernel exactly for r ≥ ρ.
    Compact(T),
}

impl<T: Real> Smoothing<T> {
    /// Distance beyond which the smoothed kernel equals the point kernel.
    pub fn exact_radius(&self) -> T {
        match *self {
            Smoothing::Point => T::zero(),
            Smoothing::Compact(rho) => rho,
        }
    }

    /// g(r²) = f(r)/r², so that the velocity sum is Σ q g(r²)(x − y)^⊥/2π.
    #[inline]
    pub fn velocity_factor(&self, r2: T) -> T {
        match *self {
            Smoothing::Point => {
                if r2 == T::zero() {
                    T::zero()
                } else {
                    T::one() / r2
                }
            }
            Smoothing::Compact(rho) => {
                let inv = T::one() / (rho * rho);
                let x = r2 * inv;
                if x >= T::one() {
                    T::one() / r2
                } else {
                    inv * compact_profile(x)
                }
            }
        }
    }

    /// Smoothed log r, with d/dr = r·g(r²). `None` for a coincident pair under the point kernel.
    #[inline]
    pub fn log_factor(&self, r2: T) -> Option<T> {
        match *self {
            Smoothing::Point => {
                if r2 == T::zero() {
                    None
                } else {
                    Some(T::c(0.5) * r2.ln())
                }
            }
            Smoothing::Compact(rho) => {
                let x = r2 / (rho * rho);
                if x >= T::one() {
                    Some(T::c(0.5) * r2.ln())
                } else {
                    // ½(4x − 3x² + 4x³/3 − x⁴/4) + ln ρ − 25/24
                    let p = x * (T::c(4.0) + x * (T::c(-3.0) + x * (T::c(4.0 / 3.0) - x * T::c(0.25))));
                    Some(T::c(0.5) * p + rho.ln() - T::c(25.0 / 24.0))
                }
            }
        }
    }
}

/// (1 − (1 − x)⁴)/x = 4 − 6x + 4x² − x³.
#[inline]
fn compact_profile<T: Real>(x: T) -> T {
    T::c(4.0) + x * (T::c(-6.0) + x * (T::c(4.0) - x))
}

/// What to compute per target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Want {
    pub velocity: bool,
    pub potential: bool,
}

impl Want {
    pub const VELOCITY: Want = Want { velocity: true, potential: false };
    pub const POTENTIAL: Want = Want { velocity: false, potential: true };
    pub const BOTH: Want = Want { velocity: true, potential: true };
}

/// Raw free-space sums at one target.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FreeSum<T> {
    pub vx: T,
    pub vy: T,
    pub pot: T,
}

/// Treecode parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeParams<T> {
    /// Opening angle: a cell of radius r is used at distance d when r < θ·d.
    pub theta: T,
    /// Maximum number of particles per leaf.
    pub leaf_size: usize,
    /// Relative truncation tolerance per far-field interaction.
    pub tol: T,
    /// Upper bound on the expansion order.
    pub max_order: usize,
}

impl<T: Real> Default for TreeParams<T> {
    fn default() -> Self {
        Self { theta: T::c(0.5), leaf_size: 48, tol: T::c(1e-6), max_order: 28 }
    }
}

/// Summation strategy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method<T> {
    Direct,
    Tree(TreeParams<T>),
}

/// Free-space sums at every target, by the requested method.
pub fn free_space_sums<T: Real>(
    sources: &[Point<T>],
    strengths: &[T],
    targets: &[Point<T>],
    smoothing: Smoothing<T>,
    want: Want,
    method: Method<T>,
) -> Vec<FreeSum<T>> {
    assert_eq!(sources.len(), strengths.len());
    if sources.is_empty() || targets.is_empty() {
        return vec![FreeSum::default(); targets.len()];
    }
    match method {
        Method::Direct => {
            let xs: Vec<T> = sources.iter().map(|p| p.x1).collect();
            let ys: Vec<T> = sources.iter().map(|p| p.x2).collect();
            targets.par_iter().map(|&z| near_sums(z, &xs, &ys, strengths, &smoothing, want)).collect()
        }
        Method::Tree(p) => {
            let tree = SourceTree::build(sources, strengths, p);
            tree.evaluate(targets, smoothing, want)
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    start: usize,
    end: usize,
    center: Complex<T>,
    radius: T,
    children: Option<(usize, usize)>,
    /// a₀ = Σq followed by scaled coefficients ã_k = −Σ q ((w−c)/r)^k / k.
    coeffs: Vec<Complex<T>>,
    /// k·ã_k, used by the derivative series.
    dcoeffs: Vec<Complex<T>>,
}

/// Binary space-partitioning tree over the sources with multipole moments.
pub struct SourceTree<T> {
    nodes: Vec<Node<T>>,
    pos: Vec<Point<T>>,
    q: Vec<T>,
    params: TreeParams<T>,
    /// local_binom[l][k] = C(l + k − 1, k − 1), for multipole-to-local shifts.
    local_binom: Vec<Vec<T>>,
}

fn bbox<T: Real>(pts: &[Point<T>]) -> (T, T, T, T) {
    let mut lo1 = T::infinity();
    let mut lo2 = T::infinity();
    let mut hi1 = T::neg_infinity();
    let mut hi2 = T::neg_infinity();
    for p in pts {
        lo1 = lo1.min(p.x1);
        lo2 = lo2.min(p.x2);
        hi1 = hi1.max(p.x1);
        hi2 = hi2.max(p.x2);
    }
    (lo1, lo2, hi1, hi2)
}

/// Reorder `idx` so that indices with coordinate below `mid` come first; returns the split.
fn partition<T: Real>(idx: &mut [usize], pts: &[Point<T>], axis0: bool, mid: T) -> usize {
    let mut i = 0;
    for j in 0..idx.len() {
        let p = pts[idx[j]];
        let c = if axis0 { p.x1 } else { p.x2 };
        if c < mid {
            idx.swap(i, j);
            i += 1;
        }
    }
    i
}

/// (start, end, children) of one tree node.
type NodeSpan = (usize, usize, Option<(usize, usize)>);

/// Recursively split `idx[start..end]`; leaves hold at most `leaf` entries.
/// Returns nodes in creation order with root first.
fn build_topology<T: Real>(pts: &[Point<T>], idx: &mut [usize], leaf: usize) -> Vec<NodeSpan> {
    let mut nodes = vec![(0, idx.len(), None)];
    let mut stack = vec![0usize];
    while let Some(n) = stack.pop() {
        let (s, e, _) = nodes[n];
        if e - s <= leaf {
            continue;
        }
        let sub: Vec<Point<T>> = idx[s..e].iter().map(|&i| pts[i]).collect();
        let (lo1, lo2, hi1, hi2) = bbox(&sub);
        let axis0 = hi1 - lo1 >= hi2 - lo2;
        let (lo, hi) = if axis0 { (lo1, hi1) } else { (lo2, hi2) };
        if !(hi > lo) {
            continue; // all coincident
        }
        let mid = (lo + hi) * T::c(0.5);
        let k = partition(&mut idx[s..e], pts, axis0, mid);
        if k == 0 || k == e - s {
            continue;
        }
        let a = nodes.len();
        nodes.push((s, s + k, None));
        nodes.push((s + k, e, None));
        nodes[n].2 = Some((a, a + 1));
        stack.push(a);
        stack.push(a + 1);
    }
    nodes
}

impl<T: Real> SourceTree<T> {
    pub fn build(sources: &[Point<T>], strengths: &[T], params: TreeParams<T>) -> Self {
        let mut idx: Vec<usize> = (0..sources.len()).collect();
        let topo = build_topology(sources, &mut idx, params.leaf_size.max(1));
        let pos: Vec<Point<T>> = idx.iter().map(|&i| sources[i]).collect();
        let q: Vec<T> = idx.iter().map(|&i| strengths[i]).collect();
        let order = params.max_order.max(1);
        let zero = Complex::new(T::zero(), T::zero());
        let mut nodes: Vec<Node<T>> = topo
            .iter()
            .map(|&(s, e, children)| {
                let (lo1, lo2, hi1, hi2) = bbox(&pos[s..e]);
                let center = Complex::new((lo1 + hi1) * T::c(0.5), (lo2 + hi2) * T::c(0.5));
                let mut radius = T::zero();
                for p in &pos[s..e] {
                    radius = radius.max((Complex::new(p.x1, p.x2) - center).norm());
                }
                Node { start: s, end: e, center, radius, children, coeffs: Vec::new(), dcoeffs: Vec::new() }
            })
            .collect();
        // binom[l][k] = C(l − 1, k − 1)
        let mut binom = vec![vec![T::zero(); order + 1]; order + 1];
        for l in 1..=order {
            binom[l][1] = T::one();
            for k in 2..=l {
                binom[l][k] = binom[l - 1][k - 1] + binom[l - 1][k];
            }
        }
        // children are created after their parents, so a reverse sweep is bottom-up
        for n in (0..nodes.len()).rev() {
            let mut coeffs = vec![zero; order + 1];
            let (center, radius) = (nodes[n].center, nodes[n].radius);
            match nodes[n].children {
                None => {
                    let (s, e) = (nodes[n].start, nodes[n].end);
                    for (p, &qq) in pos[s..e].iter().zip(&q[s..e]) {
                        coeffs[0].re += qq;
                        if radius > T::zero() {
                            let rho = (Complex::new(p.x1, p.x2) - center) / radius;
                            let mut pw = Complex::new(qq, T::zero());
                            for (k, c) in coeffs.iter_mut().enumerate().skip(1) {
                                pw *= rho;
                                *c -= pw / T::c(k as f64);
                            }
                        }
                    }
                }
                Some((a, b)) => {
                    // shift each child's expansion to this centre, in scaled form:
                    // b̃_l = −a₀ (z₀/R)^l / l + Σ_k ã_k (r/R)^k (z₀/R)^{l−k} C(l−1, k−1)
                    for ch in [a, b] {
                        let child = &nodes[ch];
                        let a0 = child.coeffs[0].re;
                        coeffs[0].re += a0;
                        let z = (child.center - center) / radius;
                        let s = child.radius / radius;
                        let mut zp = vec![Complex::new(T::one(), T::zero()); order + 1];
                        for l in 1..=order {
                            zp[l] = zp[l - 1] * z;
                        }
                        let mut scaled = vec![zero; order + 1];
                        let mut sp = T::one();
                        for k in 1..=order {
                            sp *= s;
                            scaled[k] = child.coeffs[k] * sp;
                        }
                        for l in 1..=order {
                            let mut acc = -zp[l] * a0 / T::c(l as f64);
                            for k in 1..=l {
                                acc += scaled[k] * zp[l - k] * binom[l][k];
                            }
                            coeffs[l] += acc;
                        }
                    }
                }
            }
            nodes[n].dcoeffs = coeffs.iter().enumerate().map(|(k, c)| c * T::c(k as f64)).collect();
            nodes[n].coeffs = coeffs;
        }
        let mut local_binom = vec![vec![T::zero(); order + 1]; order + 1];
        for l in 0..=order {
            for k in 1..=order {
                // C(l + k − 1, k − 1) = Π_{i=1}^{k−1} (l + i)/i
                let mut c = T::one();
                for i in 1..k {
                    c = c * T::c((l + i) as f64) / T::c(i as f64);
                }
                local_binom[l][k] = c;
            }
        }
        Self { nodes, pos, q, params, local_binom }
    }

    /// Number of expansion terms needed for a cell seen at radius ratio ρ.
    fn terms_for(&self, rho: T) -> usize {
        let tol = self.params.tol;
        let max = self.params.max_order;
        if rho <= T::zero() {
            return 1;
        }
        let mut k = 1usize;
        let one = T::one();
        // truncation of the derivative series: (k+1) ρ^{k+1} / (1−ρ)² < tol
        let denom = (one - rho) * (one - rho);
        let mut pw = rho * rho;
        while k < max && T::c((k + 1) as f64) * pw / denom > tol {
            k += 1;
            pw *= rho;
        }
        k
    }

    pub fn evaluate(&self, targets: &[Point<T>], smoothing: Smoothing<T>, want: Want) -> Vec<FreeSum<T>> {
        let mut tidx: Vec<usize> = (0..targets.len()).collect();
        let groups = build_topology(targets, &mut tidx, self.params.leaf_size.max(1));
        let leaves: Vec<(usize, usize)> = groups.iter().filter(|g| g.2.is_none()).map(|g| (g.0, g.1)).collect();
        let cut = smoothing.exact_radius();
        let theta = self.params.theta;
        let results: Vec<Vec<(usize, FreeSum<T>)>> = leaves
            .par_iter()
            .map(|&(s, e)| {
                let members: Vec<usize> = tidx[s..e].to_vec();
                let pts: Vec<Point<T>> = members.iter().map(|&i| targets[i]).collect();
                let (lo1, lo2, hi1, hi2) = bbox(&pts);
                let gc = Complex::new((lo1 + hi1) * T::c(0.5), (lo2 + hi2) * T::c(0.5));
                let mut gr = T::zero();
                for p in &pts {
                    gr = gr.max((Complex::new(p.x1, p.x2) - gc).norm());
                }
                let mut far: Vec<(usize, usize)> = Vec::new();
                let mut near: Vec<usize> = Vec::new();
                let mut stack = vec![0usize];
                while let Some(n) = stack.pop() {
                    let node = &self.nodes[n];
                    let d = (node.center - gc).norm();
                    let gap = d - gr;
                    if gap > T::zero() && node.radius < theta * gap && gap - node.radius >= cut {
                        far.push((n, self.terms_for(node.radius / gap)));
                    } else if let Some((a, b)) = node.children {
                        stack.push(b);
                        stack.push(a);
                    } else {
                        near.push(n);
                    }
                }
                // Far cells well separated from the whole group are shifted into one
                // local expansion about the group centre when that is cheaper than
                // evaluating them target by target.
                let zero = Complex::new(T::zero(), T::zero());
                let mut loc = vec![zero; self.params.max_order.max(1) + 1];
                let mut p_loc = 0usize;
                let mut direct_far = Vec::with_capacity(far.len());
                for &(n, k) in &far {
                    let node = &self.nodes[n];
                    let z0 = node.center - gc;
                    let ratio = (node.radius + gr) / z0.norm();
                    if gr > T::zero() && ratio <= theta {
                        let p = self.terms_for(ratio);
                        if p < pts.len() {
                            self.multipole_to_local(node, k, z0, gr, p, &mut loc);
                            p_loc = p_loc.max(p);
                            continue;
                        }
                    }
                    direct_far.push((n, k));
                }
                let far = direct_far;
                let mut nx = Vec::new();
                let mut ny = Vec::new();
                let mut nq = Vec::new();
                for &n in &near {
                    let node = &self.nodes[n];
                    for j in node.start..node.end {
                        nx.push(self.pos[j].x1);
                        ny.push(self.pos[j].x2);
                        nq.push(self.q[j]);
                    }
                }
                members
                    .iter()
                    .zip(&pts)
                    .map(|(&ti, &z)| {
                        let mut acc = near_sums(z, &nx, &ny, &nq, &smoothing, want);
                        let zc = Complex::new(z.x1, z.x2);
                        for &(n, k) in &far {
                            self.far_field(&self.nodes[n], zc, k, want, &mut acc);
                        }
                        if p_loc > 0 {
                            local_eval(&loc[..=p_loc], (zc - gc) / gr, gr, want, &mut acc);
                        }
                        (ti, acc)
                    })
                    .collect()
            })
            .collect();
        let mut out = vec![FreeSum::default(); targets.len()];
        for chunk in results {
            for (i, v) in chunk {
                out[i] = v;
            }
        }
        out
    }

    /// Adds the local expansion of a cell's field about the group centre
    /// (offset −z₀ from the cell centre), scaled by the group radius:
    /// b̃_0 = a₀ log(−z₀) + Σ_k ã_k (−u)^k,
    /// b̃_l = v^l [−a₀/l + Σ_k ã_k (−u)^k C(l+k−1, k−1)], u = r/z₀, v = g_r/z₀.
    /// Only the real part of b̃_0 matters and it is stored in `loc[0].re`.
    fn multipole_to_local(&self, node: &Node<T>, k: usize, z0: Complex<T>, gr: T, p: usize, loc: &mut [Complex<T>]) {
        let one = Complex::new(T::one(), T::zero());
        let inv = one / z0;
        let mu = -(inv * node.radius);
        let v = inv * gr;
        let a0 = node.coeffs[0].re;
        let mut c = vec![Complex::new(T::zero(), T::zero()); k + 1];
        let mut pw = one;
        for j in 1..=k {
            pw *= mu;
            c[j] = node.coeffs[j] * pw;
        }
        loc[0].re += a0 * z0.norm().ln() + c[1..].iter().map(|x| x.re).sum::<T>();
        let mut vl = one;
        for l in 1..=p {
            vl *= v;
            let row = &self.local_binom[l];
            let mut acc = Complex::new(-a0 / T::c(l as f64), T::zero());
            for j in 1..=k {
                acc += c[j] * row[j];
            }
            loc[l] += acc * vl;
        }
    }

    #[inline]
    fn far_field(&self, node: &Node<T>, z: Complex<T>, k: usize, want: Want, acc: &mut FreeSum<T>) {
        let dz = z - node.center;
        let a0 = node.coeffs[0].re;
        let zero = Complex::new(T::zero(), T::zero());
        let rho = if node.radius > T::zero() { Complex::new(node.radius, T::zero()) / dz } else { zero };
        if want.velocity {
            // φ'(z) = (a₀ − Σ k ã_k ρ^k)/(z − c); Σ q/(z−w) = Σ q conj(z−w)/|z−w|²
            let mut s = zero;
            for c in node.dcoeffs[1..=k].iter().rev() {
                s = s * rho + c;
            }
            let dphi = (Complex::new(a0, T::zero()) - s * rho) / dz;
            acc.vx += dphi.re;
            acc.vy -= dphi.im;
        }
        if want.potential {
            let mut s = zero;
            for c in node.coeffs[1..=k].iter().rev() {
                s = s * rho + c;
            }
            acc.pot += a0 * dz.norm().ln() + (s * rho).re;
        }
    }
}

/// Evaluates a scaled local expansion Σ b̃_l ζ^l at ζ = (z − c)/g_r.
#[inline]
fn local_eval<T: Real>(loc: &[Complex<T>], zeta: Complex<T>, gr: T, want: Want, acc: &mut FreeSum<T>) {
    let p = loc.len() - 1;
    if want.velocity {
        let mut s = Complex::new(T::zero(), T::zero());
        for l in (1..=p).rev() {
            s = s * zeta + loc[l] * T::c(l as f64);
        }
        let dphi = s / gr;
        acc.vx += dphi.re;
        acc.vy -= dphi.im;
    }
    if want.potential {
        let mut s = Complex::new(T::zero(), T::zero());
        for l in (1..=p).rev() {
            s = (s + loc[l]) * zeta;
        }
        acc.pot += loc[0].re + s.re;
    }
}

/// Direct sums over a gathered list of near sources.
#[inline]
fn near_sums<T: Real>(z: Point<T>, xs: &[T], ys: &[T], qs: &[T], smoothing: &Smoothing<T>, want: Want) -> FreeSum<T> {
    let mut acc = FreeSum::default();
    if want.velocity {
        let (mut vx, mut vy) = (T::zero(), T::zero());
        match *smoothing {
            Smoothing::Point => {
                for ((&x, &y), &q) in xs.iter().zip(ys).zip(qs) {
                    let dx = z.x1 - x;
                    let dy = z.x2 - y;
                    let r2 = dx * dx + dy * dy;
                    if r2 > T::zero() {
                        let g = q / r2;
                        vx += g * dx;
                        vy += g * dy;
                    }
                }
            }
            Smoothing::Compact(rho) => {
                let inv = T::one() / (rho * rho);
                for ((&x, &y), &q) in xs.iter().zip(ys).zip(qs) {
                    let dx = z.x1 - x;
                    let dy = z.x2 - y;
                    let r2 = dx * dx + dy * dy;
                    let s = r2 * inv;
                    let g = if s >= T::one() { q / r2 } else { q * inv * compact_profile(s) };
                    vx += g * dx;
                    vy += g * dy;
                }
            }
        }
        acc.vx = vx;
        acc.vy = vy;
    }
    if want.potential {
        let mut pot = T::zero();
        for ((&x, &y), &q) in xs.iter().zip(ys).zip(qs) {
            let dx = z.x1 - x;
            let dy = z.x2 - y;
            if let Some(l) = smoothing.log_factor(dx * dx + dy * dy) {
                pot += q * l;
            }
        }
        acc.pot = pot;
    }
    acc
}
