//! Bessel functions J₀, J₁ of real argument and the first positive zero of J₁.

use crate::{Error, Real, Result};

/// Arguments up to this value use the ascending series.
const SERIES_LIMIT: f64 = 12.0;
/// Number of terms kept in the large-argument expansion.
const ASYMPTOTIC_TERMS: usize = 26;

/// J₀ or J₁ at a nonnegative finite argument.
pub fn bessel_j<T: Real>(order: u32, x: T) -> Result<T> {
    if order > 1 {
        return Err(Error::Domain(format!("order {order} not supported")));
    }
    if !x.is_finite() || x < T::zero() {
        return Err(Error::Domain(format!("argument {x} must be finite and >= 0")));
    }
    if x.f() <= SERIES_LIMIT {
        Ok(series(order, x))
    } else {
        Ok(asymptotic(order, x))
    }
}

/// Any integer order through the same series/asymptotic dispatch; used for
/// internal consistency checks.
#[cfg(test)]
pub(crate) fn jn<T: Real>(order: u32, x: T) -> T {
    if x.f() <= SERIES_LIMIT {
        series(order, x)
    } else {
        asymptotic(order, x)
    }
}

/// Unchecked J₀, for hot loops where the argument is known to be valid.
#[inline]
pub fn j0<T: Real>(x: T) -> T {
    if x.f() <= SERIES_LIMIT {
        series(0, x)
    } else {
        asymptotic(0, x)
    }
}

/// Unchecked J₁, for hot loops where the argument is known to be valid.
#[inline]
pub fn j1<T: Real>(x: T) -> T {
    if x.f() <= SERIES_LIMIT {
        series(1, x)
    } else {
        asymptotic(1, x)
    }
}

/// Ascending power series Σ (−1)^k (x/2)^{2k+n} / (k! (k+n)!), any integer order.
pub(crate) fn series<T: Real>(order: u32, x: T) -> T {
    let half = x * T::c(0.5);
    let q = half * half;
    let mut term = T::one();
    for k in 1..=order {
        term = term * half / T::c(k as f64);
    }
    let mut sum = term;
    let n = T::c(order as f64);
    let mut k = 1usize;
    loop {
        let kk = T::c(k as f64);
        term = -term * q / (kk * (kk + n));
        sum += term;
        if term.abs() <= T::epsilon() * T::c(1e-3) * sum.abs() && kk > half {
            break;
        }
        if k > 200 {
            break;
        }
        k += 1;
    }
    sum
}

/// Hankel large-argument expansion with a fixed number of terms.
fn asymptotic<T: Real>(order: u32, x: T) -> T {
    let mu = T::c(4.0 * (order * order) as f64);
    let eight_x = T::c(8.0) * x;
    // a_k / x^k accumulated with alternating signs into P (even k) and Q (odd k)
    let mut p = T::one();
    let mut q = T::zero();
    let mut term = T::one();
    for k in 1..=ASYMPTOTIC_TERMS {
        let odd = T::c((2 * k - 1) as f64);
        term = term * (mu - odd * odd) / (T::c(k as f64) * eight_x);
        // sign pattern: P = a0 - a2 + a4 ..., Q = a1 - a3 + ...
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
    }
    let chi = x - (T::c(order as f64) * T::c(0.5) + T::c(0.25)) * T::PI();
    (T::c(2.0) / (T::PI() * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// First positive zero of J₁, by bisection on [3.5, 4.0].
pub fn first_positive_zero_j1<T: Real>() -> T {
    let mut lo = T::c(3.5);
    let mut hi = T::c(4.0);
    let mut f_lo = j1(lo);
    for _ in 0..200 {
        let mid = (lo + hi) * T::c(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = j1(mid);
        if f_mid == T::zero() {
            return mid;
        }
        if (f_mid > T::zero()) == (f_lo > T::zero()) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * T::c(0.5)
}

/// c_L together with C_L = 1/(√π c_L).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambConstant<T> {
    pub c_l: T,
    pub big_c_l: T,
}

impl<T: Real> LambConstant<T> {
    pub fn compute() -> Self {
        let c_l = first_positive_zero_j1::<T>();
        Self { c_l, big_c_l: T::one() / (T::PI().sqrt() * c_l) }
    }
}
