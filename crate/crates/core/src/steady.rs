//! Steady-state I-V curve and equilibria.
//!
//! With every gate at its steady state the voltage equation collapses to
//! `0 = I_inf(V)`, so equilibria are the roots of a scalar function and the
//! applied current that makes `V` an equilibrium is `U(V) = I_app - I_inf(V)`.

use log::warn;
use nalgebra::Complex;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::model::{NeuronModel, State};

/// Bracketing grid step (mV) shared by every scalar root search.
pub const GRID_STEP: f64 = 0.01;
/// Roots with `|dI_inf/dV|` below this are reported as folds.
pub const FOLD_TOL: f64 = 1e-6;

/// `I_inf` with its first two derivatives in `V`.
pub fn i_infty_jet(m: &NeuronModel, v: f64) -> Jet2 {
    let leak = Jet2::new(m.leak.g * (v - m.leak.e_rev), m.leak.g, 0.0);
    let mut total = Jet2::constant(m.i_app) - leak + m.ionic_steady_jet(v);
    if let Some(mc) = m.m_current() {
        let drive = Jet2::new(v - mc.e_rev, 1.0, 0.0);
        total = total - (m.w_inf_jet(v) * drive).scale(mc.g);
    }
    total
}

pub fn i_infty(m: &NeuronModel, v: f64) -> f64 {
    i_infty_jet(m, v).v
}

/// Derivative of `I_inf` of the given order.
///
/// # Panics
/// If `order` is not 1 or 2.
pub fn di_infty(m: &NeuronModel, v: f64, order: u8) -> f64 {
    let j = i_infty_jet(m, v);
    match order {
        1 => j.d1,
        2 => j.d2,
        _ => panic!("di_infty supports orders 1 and 2, got {order}"),
    }
}

/// Applied current for which `V` is an equilibrium.
pub fn u_of_v(m: &NeuronModel, v: f64) -> f64 {
    m.i_app - i_infty(m, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    StableNode,
    StableFocus,
    Saddle,
    UnstableNode,
    UnstableFocus,
}

impl Stability {
    /// Classifies from eigenvalues sorted by decreasing real part.
    pub fn classify(eigs: &[Complex<f64>]) -> Self {
        let pos = eigs.iter().any(|l| l.re > 0.0);
        let neg = eigs.iter().any(|l| l.re < 0.0);
        let focus = eigs.first().is_some_and(|l| l.im != 0.0);
        match (pos, neg) {
            (true, true) => Stability::Saddle,
            (true, false) if focus => Stability::UnstableFocus,
            (true, false) => Stability::UnstableNode,
            (false, _) if focus => Stability::StableFocus,
            (false, _) => Stability::StableNode,
        }
    }

    pub fn is_stable(self) -> bool {
        matches!(self, Stability::StableNode | Stability::StableFocus)
    }

    pub fn label(self) -> &'static str {
        match self {
            Stability::StableNode => "stable_node",
            Stability::StableFocus => "stable_focus",
            Stability::Saddle => "saddle",
            Stability::UnstableNode => "unstable_node",
            Stability::UnstableFocus => "unstable_focus",
        }
    }
}

pub(crate) fn serialize_complex<S: Serializer>(
    eigs: &[Complex<f64>],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let pairs: Vec<[f64; 2]> = eigs.iter().map(|l| [l.re, l.im]).collect();
    pairs.serialize(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct Equilibrium {
    pub v: f64,
    #[serde(serialize_with = "serialize_state")]
    pub state: State,
    pub i_app: f64,
    #[serde(serialize_with = "serialize_complex")]
    pub eigenvalues: Vec<Complex<f64>>,
    pub stability: Stability,
    /// Degenerate root: `|dI_inf/dV| < FOLD_TOL`.
    pub fold: bool,
}

fn serialize_state<S: Serializer>(state: &State, s: S) -> std::result::Result<S::Ok, S::Error> {
    state.as_slice().serialize(s)
}

/// Eigenvalues of `jac`, sorted by decreasing real part.
pub fn sorted_eigenvalues(jac: &nalgebra::DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut eigs: Vec<Complex<f64>> = jac.clone().complex_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    eigs
}

impl Equilibrium {
    pub fn at(m: &NeuronModel, v: f64) -> Self {
        let state = m.steady_state(v);
        let eigenvalues = sorted_eigenvalues(&m.jacobian(&state));
        Equilibrium {
            v,
            stability: Stability::classify(&eigenvalues),
            fold: di_infty(m, v, 1).abs() < FOLD_TOL,
            state,
            i_app: m.i_app,
            eigenvalues,
        }
    }

    /// `max_k |rhs_k|` at the equilibrium.
    pub fn residual(&self, m: &NeuronModel) -> f64 {
        m.rhs(&self.state).amax()
    }
}

/// Roots of `f` on `[lo, hi]`: sign changes on a `GRID_STEP` grid refined by
/// bisection to `1e-8`, followed by Newton polishing with `df`. Tangential
/// zeros without a sign change are picked up where `df` changes sign and
/// `|f|` vanishes at the critical point.
pub fn scalar_roots(
    lo: f64,
    hi: f64,
    f: impl Fn(f64) -> f64 + Sync,
    df: impl Fn(f64) -> f64 + Sync,
    zero_tol: f64,
) -> Vec<f64> {
    let n = ((hi - lo) / GRID_STEP).round().max(1.0) as usize;
    let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let values: Vec<f64> = grid.par_iter().map(|&v| f(v)).collect();
    let slopes: Vec<f64> = grid.par_iter().map(|&v| df(v)).collect();

    let mut roots = Vec::new();
    for i in 0..n {
        let (a, b) = (grid[i], grid[i + 1]);
        let (fa, fb) = (values[i], values[i + 1]);
        if !fa.is_finite() || !fb.is_finite() {
            continue;
        }
        if fa == 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            roots.push(polish(bisect(&f, a, b, fa), &f, &df, a, b));
        } else if slopes[i] * slopes[i + 1] < 0.0 {
            let c = bisect(&df, a, b, slopes[i]);
            if f(c).abs() <= zero_tol {
                roots.push(c);
            }
        }
    }
    if values[n] == 0.0 {
        roots.push(grid[n]);
    }
    roots.dedup_by(|x, y| (*x - *y).abs() < 1e-7);
    roots
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    while b - a > 1e-8 {
        let c = 0.5 * (a + b);
        let fc = f(c);
        if fc == 0.0 {
            return c;
        }
        if fa * fc < 0.0 {
            b = c;
        } else {
            a = c;
            fa = fc;
        }
    }
    0.5 * (a + b)
}

/// Newton steps kept inside the bracket; returns the best iterate.
fn polish(x0: f64, f: &impl Fn(f64) -> f64, df: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mut x = x0;
    let mut fx = f(x);
    for _ in 0..8 {
        let d = df(x);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let next = x - fx / d;
        if !(a..=b).contains(&next) {
            break;
        }
        let fn_ = f(next);
        if fn_.abs() >= fx.abs() {
            break;
        }
        x = next;
        fx = fn_;
    }
    x
}

/// All equilibria on the model window, ascending in `V`.
///
/// When nothing is found the window is widened once by its own width on
/// each side.
pub fn find_equilibria(m: &NeuronModel) -> Result<Vec<Equilibrium>> {
    let (lo, hi) = m.window;
    let roots = equilibrium_voltages(m, lo, hi);
    let roots = if roots.is_empty() {
        let w = hi - lo;
        warn!("no equilibrium on [{lo}, {hi}] mV; widening to [{}, {}]", lo - w, hi + w);
        let wider = equilibrium_voltages(m, lo - w, hi + w);
        if wider.is_empty() {
            return Err(Error::WindowTooNarrow { lo: lo - w, hi: hi + w });
        }
        wider
    } else {
        roots
    };
    Ok(roots.into_iter().map(|v| Equilibrium::at(m, v)).collect())
}

fn equilibrium_voltages(m: &NeuronModel, lo: f64, hi: f64) -> Vec<f64> {
    scalar_roots(lo, hi, |v| i_infty(m, v), |v| di_infty(m, v, 1), 1e-10)
}

/// Equilibria for each applied current, in input order.
pub fn equilibria_over(m: &NeuronModel, i_apps: &[f64]) -> Vec<Result<Vec<Equilibrium>>> {
    i_apps
        .par_iter()
        .map(|&i| find_equilibria(&m.with_i_app(i)))
        .collect()
}

/// Limit points of the equilibrium branch: zeros of `dI_inf/dV` as
/// `(V, U(V))`.
pub fn fold_points(m: &NeuronModel) -> Vec<(f64, f64)> {
    let (lo, hi) = m.window;
    scalar_roots(lo, hi, |v| di_infty(m, v, 1), |v| di_infty(m, v, 2), 1e-12)
        .into_iter()
        .map(|v| (v, u_of_v(m, v)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IvPoint {
    pub v: f64,
    pub i_infty: f64,
    pub di_infty: f64,
    pub d2i_infty: f64,
}

pub fn iv_curve(m: &NeuronModel, v_grid: &[f64]) -> Vec<IvPoint> {
    v_grid
        .iter()
        .map(|&v| {
            let j = i_infty_jet(m, v);
            IvPoint {
                v,
                i_infty: j.v,
                di_infty: j.d1,
                d2i_infty: j.d2,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;

    fn wb() -> NeuronModel {
        NeuronModel::preset(Preset::WangBuzsaki)
    }

    fn pure_leak() -> NeuronModel {
        let mut cfg = Preset::WangBuzsaki.config();
        cfg.currents.clear();
        cfg.gates.clear();
        cfg.m_current = None;
        cfg.build().unwrap()
    }

    #[test]
    fn pure_leak_curve() {
        let m = pure_leak().with_i_app(1.0);
        assert_eq!(i_infty(&m, -65.0), 1.0);
        for v in [-90.0, -30.0, 10.0] {
            assert!((di_infty(&m, v, 1) + 0.1).abs() < 1e-15);
            assert_eq!(di_infty(&m, v, 2), 0.0);
            assert!((u_of_v(&m, v) - 0.1 * (v + 65.0)).abs() < 1e-12);
        }
        let eq = find_equilibria(&m).unwrap();
        assert_eq!(eq.len(), 1);
        assert!((eq[0].v + 55.0).abs() < 1e-9);
        assert_eq!(eq[0].stability, Stability::StableNode);
    }

    #[test]
    fn term_by_term_oracle() {
        let m = wb();
        let v: f64 = -70.0;
        let am = -0.1 * (v + 35.0) / ((-0.1 * (v + 35.0)).exp() - 1.0);
        let bm = 4.0 * (-(v + 60.0) / 18.0).exp();
        let ah = 0.07 * (-(v + 58.0) / 20.0).exp();
        let bh = 1.0 / ((-0.1 * (v + 28.0)).exp() + 1.0);
        let an = -0.01 * (v + 34.0) / ((-0.1 * (v + 34.0)).exp() - 1.0);
        let bn = 0.125 * (-(v + 44.0) / 80.0).exp();
        let (mi, hi, ni) = (am / (am + bm), ah / (ah + bh), an / (an + bn));
        let i_l = -0.1 * (v + 65.0);
        let i_na = 35.0 * mi.powi(3) * hi * (55.0 - v);
        let i_k = 9.0 * ni.powi(4) * (-90.0 - v);
        let expected = i_l + i_na + i_k;
        assert!((i_infty(&m, v) - expected).abs() < 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for p in Preset::ALL {
            let m = NeuronModel::preset(p).with_g_m(0.3);
            let h = 1e-4;
            let mut v = -100.0;
            while v < 40.0 {
                let d1 = (i_infty(&m, v + h) - i_infty(&m, v - h)) / (2.0 * h);
                let exact = di_infty(&m, v, 1);
                assert!((d1 - exact).abs() <= 1e-5 * exact.abs().max(1.0), "{p} V={v}");
                let d2 = (di_infty(&m, v + h, 1) - di_infty(&m, v - h, 1)) / (2.0 * h);
                let exact = di_infty(&m, v, 2);
                assert!((d2 - exact).abs() <= 1e-5 * exact.abs().max(1.0), "{p} V={v}");
                v += 0.37;
            }
        }
    }

    #[test]
    fn wang_buzsaki_bt_point_is_an_equilibrium() {
        let m = wb().with_g_m(0.1455).with_i_app(0.2);
        assert!(i_infty(&m, -59.6978).abs() <= 1e-2);
        assert!(di_infty(&m, -59.6978, 1).abs() <= 1e-3);
        assert!((u_of_v(&m, -59.6978) - 0.2).abs() <= 1e-2);
        let rtm = NeuronModel::preset(Preset::Rtm).with_g_m(14.5123);
        assert!((u_of_v(&rtm, -50.8204) - 71.9395).abs() <= 0.5);
    }

    #[test]
    fn three_equilibria_below_the_fold() {
        let m = wb().with_i_app(0.1);
        let eq = find_equilibria(&m).unwrap();
        assert_eq!(eq.len(), 3);
        assert!(eq[0].stability.is_stable());
        assert!(!eq[1].stability.is_stable());
        assert!(!eq[2].stability.is_stable());
        for e in &eq {
            assert!(e.residual(&m) <= 1e-10);
            assert_eq!(e.eigenvalues.len(), m.dim());
        }
    }

    #[test]
    fn equilibrium_count_drops_at_the_lower_fold() {
        let m = wb();
        let folds = fold_points(&m);
        // The knee that annihilates the rest state is the local maximum of U
        // with the lowest voltage.
        let (_, i_fold) = folds[0];
        assert!((i_fold - 0.16).abs() < 0.01, "fold at {i_fold}");
        let counts: Vec<usize> = equilibria_over(&m, &[i_fold - 1e-3, i_fold + 1e-3])
            .into_iter()
            .map(|r| r.unwrap().len())
            .collect();
        assert_eq!(counts, [3, 1]);
    }

    #[test]
    fn slope_of_u_is_minus_slope_of_i() {
        let m = wb().with_g_m(0.8);
        let h = 1e-5;
        for v in [-70.0, -55.0, -40.0] {
            let du = (u_of_v(&m, v + h) - u_of_v(&m, v - h)) / (2.0 * h);
            assert!((du + di_infty(&m, v, 1)).abs() < 1e-6);
        }
    }
}
