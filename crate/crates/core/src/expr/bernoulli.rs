//! The Bernoulli generating function `B(x) = x / (exp(x) - 1)` and its
//! derivatives.
//!
//! Rate constants of the form `c (V - a) / (1 - exp(-(V - a)/b))` are
//! rewritten into `c b B(-(V - a)/b)` when parsed, which removes the 0/0 at
//! `V = a`. Near the origin the Taylor series is summed directly; elsewhere
//! the closed form is used. With `g(x) = 1/(exp(x) - 1)` we have
//! `g' = -g (1 + g)`, so every derivative of `g` is a polynomial in `g`,
//! and `B^(k)(x) = x g^(k)(x) + k g^(k-1)(x)`.

use std::sync::OnceLock;

const SERIES_TERMS: usize = 48;
const SERIES_RADIUS: f64 = 1.0;
const CACHED_ORDERS: usize = 8;

/// Taylor coefficients `B_n / n!` of `x / (exp(x) - 1)`.
fn taylor() -> &'static [f64; SERIES_TERMS] {
    static COEFFS: OnceLock<[f64; SERIES_TERMS]> = OnceLock::new();
    COEFFS.get_or_init(|| {
        // B(x) (exp(x) - 1)/x = 1  =>  sum_{j<=m} c_j / (m - j + 1)! = [m == 0]
        let mut inv_fact = [0.0; SERIES_TERMS + 2];
        inv_fact[0] = 1.0;
        for i in 1..inv_fact.len() {
            inv_fact[i] = inv_fact[i - 1] / i as f64;
        }
        let mut c = [0.0; SERIES_TERMS];
        c[0] = 1.0;
        for m in 1..SERIES_TERMS {
            let s: f64 = (0..m).map(|j| c[j] * inv_fact[m - j + 1]).sum();
            c[m] = -s;
        }
        c
    })
}

/// Polynomial (coefficients in ascending powers of g) for g^(k).
fn g_poly(k: usize) -> Vec<f64> {
    let mut p = vec![0.0, 1.0];
    for _ in 0..k {
        // d/dx P(g) = P'(g) * (-g - g^2)
        let dp: Vec<f64> = (1..p.len()).map(|i| p[i] * i as f64).collect();
        let mut next = vec![0.0; dp.len() + 2];
        for (i, &a) in dp.iter().enumerate() {
            next[i + 1] -= a;
            next[i + 2] -= a;
        }
        p = next;
    }
    p
}

fn cached_polys() -> &'static Vec<Vec<f64>> {
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| (0..=CACHED_ORDERS).map(g_poly).collect())
}

fn horner(p: &[f64], g: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &a| acc * g + a)
}

fn g_derivative(k: usize, g: f64) -> f64 {
    if k <= CACHED_ORDERS {
        horner(&cached_polys()[k], g)
    } else {
        horner(&g_poly(k), g)
    }
}

/// k-th derivative of `x / (exp(x) - 1)`.
pub fn bern(k: u32, x: f64) -> f64 {
    let k = k as usize;
    if k == 0 {
        if x == 0.0 {
            return 1.0;
        }
        if x.abs() >= SERIES_RADIUS {
            return x / x.exp_m1();
        }
    }
    if x.abs() < SERIES_RADIUS {
        let c = taylor();
        let mut sum = 0.0;
        let mut pow = 1.0;
        for n in k..SERIES_TERMS {
            // n! / (n-k)!
            let falling: f64 = ((n - k + 1)..=n).map(|i| i as f64).product();
            sum += c[n] * falling * pow;
            pow *= x;
        }
        return sum;
    }
    let g = 1.0 / x.exp_m1();
    x * g_derivative(k, g) + k as f64 * g_derivative(k - 1, g)
}
