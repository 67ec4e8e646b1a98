//! Bogdanov-Takens, cusp and BTC points, BT normal forms and equilibrium
//! branches.
//!
//! Every detector reduces to a scalar equation in `V` built from six
//! auxiliary functions of the steady state (see [`AuxFunctions`]), solved on
//! the same bracketing grid as the equilibria. For each root the parameter
//! `g_M` can be recovered from two different ratios; roots where the two
//! disagree are spurious and dropped.

use log::warn;
use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{NeuronModel, State};
use crate::steady::{
    di_infty, i_infty, i_infty_jet, scalar_roots, serialize_complex, sorted_eigenvalues, u_of_v,
    Stability,
};

/// Relative agreement required between the two `g_M` formulas.
pub const GM_AGREEMENT: f64 = 1e-6;
/// Eigenvalues below this modulus count as zero.
pub const ZERO_EIG: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuxFunctions {
    pub x1: f64,
    pub x2: f64,
    pub y1: f64,
    pub y2: f64,
    pub z1: f64,
    pub z2: f64,
}

/// Auxiliary functions at `V` with every gate frozen at its steady state.
///
/// `X1 = w + w'(V-V_K)`, `Z1 = 2w' + w''(V-V_K)` and `Y1 = tau_w (V-V_K) w' / C`
/// come from the M-current; `X2`, `Z2` are the first two derivatives of the
/// stationary ionic current and `Y2 = sum_j dI_ion/da_j tau_j a_j' / C` runs
/// over the dynamic gates (effective time constants `tau/phi`).
pub fn aux_functions(m: &NeuronModel, v: f64) -> AuxFunctions {
    let ion = m.ionic_steady_jet(v);
    let c = m.capacitance;
    let (x1, y1, z1) = match m.m_current() {
        Some(mc) => {
            let w = mc.steady.jet(v);
            let drive = v - mc.e_rev;
            let tau_w = mc.tau.value(v) / mc.phi;
            (w.v + w.d1 * drive, tau_w * drive * w.d1 / c, 2.0 * w.d1 + w.d2 * drive)
        }
        None => (0.0, 0.0, 0.0),
    };
    let gates: Vec<_> = m.gates().iter().map(|g| g.steady.jet(v)).collect();
    let mut y2 = 0.0;
    for cur in m.currents() {
        for (i, f) in cur.gates.iter().enumerate() {
            let gate = &m.gates()[f.gate];
            if gate.instantaneous {
                continue;
            }
            let x = gates[f.gate];
            let others: f64 = cur
                .gates
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, o)| gates[o.gate].v.powi(o.power as i32))
                .product();
            let p = f.power as i32;
            let di_da = cur.g * (cur.e_rev - v) * p as f64 * x.v.powi(p - 1) * others;
            y2 += di_da * gate.effective_tau(v) * x.d1 / c;
        }
    }
    AuxFunctions {
        x1,
        x2: ion.d1,
        y1,
        y2,
        z1,
        z2: ion.d2,
    }
}

impl AuxFunctions {
    pub fn phi_bt(&self, g_l: f64) -> f64 {
        (g_l - self.x2) * self.y1 + self.x1 * (self.y2 + 1.0)
    }

    pub fn phi_cusp(&self, g_l: f64) -> f64 {
        (g_l - self.x2) * self.z1 + self.x1 * self.z2
    }

    pub fn phi_btc(&self) -> f64 {
        (self.y2 + 1.0) * self.z1 - self.y1 * self.z2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BifKind {
    #[serde(rename = "BT")]
    Bt,
    #[serde(rename = "CP")]
    Cusp,
    #[serde(rename = "BTC")]
    Btc,
}

impl BifKind {
    pub fn label(self) -> &'static str {
        match self {
            BifKind::Bt => "BT",
            BifKind::Cusp => "CP",
            BifKind::Btc => "BTC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// Scalar defining equation at the root.
    pub defining: f64,
    /// Relative mismatch of the two `g_M` formulas.
    pub g_m_mismatch: f64,
    pub i_infty: f64,
    pub di_infty: f64,
    /// `d2I_inf/dV2`; zero at cusp-type points.
    pub d2i_infty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BifPoint {
    pub kind: BifKind,
    pub v: f64,
    pub g_m: f64,
    pub i_app: f64,
    /// Solved leak conductance (BTC only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_l: Option<f64>,
    /// False when `g_M` or `g_L` is negative.
    pub biophysical: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    pub residuals: Residuals,
}

impl BifPoint {
    /// `base` with this point's parameters applied.
    pub fn apply(&self, base: &NeuronModel) -> NeuronModel {
        let mut m = base.with_g_m(self.g_m).with_i_app(self.i_app);
        if let Some(g) = self.g_l {
            m.leak.g = g;
        }
        m
    }
}

fn require_m_current(m: &NeuronModel) -> Result<()> {
    if m.m_current().is_none() {
        return Err(Error::config("m_current", "bifurcation detection needs an M-current"));
    }
    Ok(())
}

fn central_diff(f: &(impl Fn(f64) -> f64 + Sync), v: f64) -> f64 {
    let h = 1e-6;
    (f(v + h) - f(v - h)) / (2.0 * h)
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Solves `phi(V) = 0` on the window and maps each root through `params`,
/// which returns `(g_M first, g_M second, g_L)`.
fn solve(
    m: &NeuronModel,
    kind: BifKind,
    phi: impl Fn(&AuxFunctions) -> f64 + Sync,
    params: impl Fn(&AuxFunctions) -> (f64, f64, f64),
) -> Result<Vec<BifPoint>> {
    require_m_current(m)?;
    let (lo, hi) = m.window;
    let f = |v: f64| phi(&aux_functions(m, v));
    let roots = scalar_roots(lo, hi, f, |v| central_diff(&f, v), 1e-10);
    if roots.is_empty() {
        return Err(Error::NoRoot);
    }
    let mut points = Vec::new();
    let mut mismatch = None;
    for v in roots {
        let aux = aux_functions(m, v);
        let (first, second, g_l) = params(&aux);
        if !first.is_finite() && !second.is_finite() {
            warn!("{} root at V = {v}: g_M undefined, discarded", kind.label());
            continue;
        }
        let gap = relative_gap(first, second);
        if !(gap <= GM_AGREEMENT) {
            mismatch.get_or_insert(Error::InconsistentGm { v, first, second });
            continue;
        }
        let mut at = m.with_g_m(first);
        at.leak.g = g_l;
        let i_app = u_of_v(&at, v);
        at.i_app = i_app;
        let jet = i_infty_jet(&at, v);
        let g_m = first;
        let mut point = BifPoint {
            kind,
            v,
            g_m,
            i_app,
            g_l: (kind == BifKind::Btc).then_some(g_l),
            biophysical: g_m >= 0.0 && g_l >= 0.0,
            alpha2: None,
            beta2: None,
            residuals: Residuals {
                defining: phi(&aux),
                g_m_mismatch: gap,
                i_infty: jet.v,
                di_infty: jet.d1,
                d2i_infty: jet.d2,
            },
        };
        if kind != BifKind::Cusp {
            match normal_form(&at, v) {
                Ok(nf) => {
                    point.alpha2 = Some(nf.alpha2);
                    point.beta2 = Some(nf.beta2);
                }
                Err(e) => warn!("{} at V = {v}: no normal form ({e})", kind.label()),
            }
        }
        points.push(point);
    }
    match (points.is_empty(), mismatch) {
        (true, Some(e)) => Err(e),
        (true, None) => Err(Error::NoRoot),
        (false, _) => Ok(points),
    }
}

/// Bogdanov-Takens points for the model's `g_L`, ascending in `V`.
pub fn find_bt(m: &NeuronModel) -> Result<Vec<BifPoint>> {
    let g_l = m.leak.g;
    solve(
        m,
        BifKind::Bt,
        |a| a.phi_bt(g_l),
        |a| ((a.x2 - g_l) / a.x1, (a.y2 + 1.0) / a.y1, g_l),
    )
}

/// Cusp points for the model's `g_L`, ascending in `V`.
pub fn find_cusp(m: &NeuronModel) -> Result<Vec<BifPoint>> {
    let g_l = m.leak.g;
    solve(
        m,
        BifKind::Cusp,
        |a| a.phi_cusp(g_l),
        |a| ((a.x2 - g_l) / a.x1, a.z2 / a.z1, g_l),
    )
}

/// Bogdanov-Takens-cusp points; `g_L` is solved for.
pub fn find_btc(m: &NeuronModel) -> Result<Vec<BifPoint>> {
    solve(
        m,
        BifKind::Btc,
        AuxFunctions::phi_btc,
        |a| {
            let g_m = (a.y2 + 1.0) / a.y1;
            (g_m, a.z2 / a.z1, a.x2 - g_m * a.x1)
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtEigvectors {
    pub q0: DVector<f64>,
    pub q1: DVector<f64>,
    pub p0: DVector<f64>,
    pub p1: DVector<f64>,
}

/// Moduli of the two smallest eigenvalues.
pub fn smallest_moduli(a: &DMatrix<f64>) -> [f64; 2] {
    let mut mods: Vec<f64> = sorted_eigenvalues(a).iter().map(|l| l.norm()).collect();
    mods.sort_by(f64::total_cmp);
    [mods[0], mods.get(1).copied().unwrap_or(f64::INFINITY)]
}

/// Generalized eigenvectors at a double-zero Jacobian.
///
/// The gating rows of the Jacobian only couple to `V`, so every vector has a
/// closed form in terms of the first row, the first column and the diagonal.
/// Scaling: `q0[0] = 1`, `q1[0] = 0`, then `p1.q1 = 1` and `p0.q1 = 0`, which
/// gives `p_i.q_j = delta_ij`.
pub fn bt_eigvectors(a: &DMatrix<f64>) -> Result<BtEigvectors> {
    let n = a.nrows();
    let smallest = smallest_moduli(a);
    if n < 2 || smallest[1] > ZERO_EIG {
        return Err(Error::NotDoubleZero { smallest });
    }
    let d = |k: usize| a[(k, k)];
    if (1..n).any(|k| d(k) == 0.0) {
        return Err(Error::NotDoubleZero { smallest });
    }
    let mut q0 = DVector::zeros(n);
    let mut q1 = DVector::zeros(n);
    q0[0] = 1.0;
    for k in 1..n {
        q0[k] = -a[(k, 0)] / d(k);
        q1[k] = q0[k] / d(k);
    }
    // p1 = p1[0] * u and p0 = p0[0] * u + p1[0] * r.
    let mut u = DVector::zeros(n);
    let mut r = DVector::zeros(n);
    u[0] = 1.0;
    for k in 1..n {
        u[k] = -a[(0, k)] / d(k);
        r[k] = u[k] / d(k);
    }
    let uq1 = u.dot(&q1);
    let p1_0 = 1.0 / uq1;
    let p1 = &u * p1_0;
    let p0_0 = -p1_0 * r.dot(&q1) / uq1;
    let p0 = &u * p0_0 + &r * p1_0;
    Ok(BtEigvectors { q0, q1, p0, p1 })
}

/// `G(x, y)_i = x^T H_i y`.
pub fn bilinear(hessians: &[DMatrix<f64>], x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(hessians.len(), hessians.iter().map(|h| x.dot(&(h * y))))
}

#[derive(Debug, Clone)]
pub struct NormalForm {
    pub alpha2: f64,
    pub beta2: f64,
    pub vectors: BtEigvectors,
    pub h20: DVector<f64>,
    /// `alpha2 / (p1[0] q0[0]^2 d2I_inf/dV2)`.
    pub alpha2_ratio: f64,
    g01: DVector<f64>,
}

impl NormalForm {
    /// `beta2` recomputed from an arbitrary solution `h` of the `h20` system.
    pub fn beta2_for(&self, h: &DVector<f64>) -> f64 {
        self.vectors.p1.dot(&self.g01) - self.vectors.p1.dot(h)
    }
}

/// Normal form at the equilibrium `V` of `m` (parameters already at the BT
/// point).
///
/// `h20` solves `A h = 2 alpha2 q1 - G(q0, q0)`. Since `p1.q0 = 0` the system
/// is bordered with `p1` as extra column and `q0` as extra row, which picks
/// the solution orthogonal to `q0`.
pub fn normal_form(m: &NeuronModel, v: f64) -> Result<NormalForm> {
    let state: State = m.steady_state(v);
    let a = m.jacobian(&state);
    let vectors = bt_eigvectors(&a)?;
    let hs = m.hessians(&state);
    let BtEigvectors { q0, q1, p1, .. } = &vectors;
    let g00 = bilinear(&hs, q0, q0);
    let g01 = bilinear(&hs, q0, q1);
    let alpha2 = 0.5 * p1.dot(&g00);

    let n = a.nrows();
    let mut bordered = DMatrix::zeros(n + 1, n + 1);
    bordered.view_mut((0, 0), (n, n)).copy_from(&a);
    bordered.view_mut((0, n), (n, 1)).copy_from(p1);
    bordered.view_mut((n, 0), (1, n)).copy_from(&q0.transpose());
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(&(q1 * (2.0 * alpha2) - &g00));
    let sol = bordered
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|x| x.is_finite()))
        .ok_or(Error::SingularBorderedSystem)?;
    let h20 = sol.rows(0, n).into_owned();
    let beta2 = p1.dot(&g01) - p1.dot(&h20);
    let d2 = di_infty(m, v, 2);
    let alpha2_ratio = alpha2 / (p1[0] * q0[0] * q0[0] * d2);
    Ok(NormalForm {
        alpha2,
        beta2,
        alpha2_ratio,
        h20,
        g01,
        vectors,
    })
}

/// `(alpha2, beta2)` at a detected BT or BTC point.
pub fn normal_form_coeffs(m: &NeuronModel, bt: &BifPoint) -> Result<(f64, f64)> {
    if bt.kind == BifKind::Cusp {
        return Err(Error::config("kind", "normal form needs a BT or BTC point"));
    }
    let nf = normal_form(&bt.apply(m), bt.v)?;
    Ok((nf.alpha2, nf.beta2))
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchPoint {
    pub v: f64,
    pub i_app: f64,
    pub g_m: f64,
    #[serde(serialize_with = "serialize_complex")]
    pub eigenvalues: Vec<Complex<f64>>,
    pub stability: Stability,
    pub re_lambda_max: f64,
    pub lp: bool,
    pub hopf: bool,
    /// `|Im lambda|` of the critical pair at a Hopf point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

impl BranchPoint {
    pub fn flags(&self) -> &'static str {
        match (self.lp, self.hopf) {
            (true, true) => "LP|H",
            (true, false) => "LP",
            (false, true) => "H",
            (false, false) => "",
        }
    }
}

fn branch_point(m: &NeuronModel, v: f64) -> BranchPoint {
    let eigs = sorted_eigenvalues(&m.jacobian(&m.steady_state(v)));
    BranchPoint {
        v,
        i_app: u_of_v(m, v),
        g_m: m.g_m(),
        re_lambda_max: eigs[0].re,
        stability: Stability::classify(&eigs),
        eigenvalues: eigs,
        lp: false,
        hopf: false,
        omega: None,
    }
}

/// Real part of the leading complex pair away from the origin.
fn hopf_test(eigs: &[Complex<f64>]) -> Option<(f64, f64)> {
    eigs.iter()
        .filter(|l| l.im > 0.0 && l.norm() >= ZERO_EIG)
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .map(|l| (l.re, l.im))
}

fn refine(mut a: f64, mut b: f64, f: impl Fn(f64) -> Option<f64>) -> Option<f64> {
    let mut fa = f(a)?;
    while b - a > 1e-6 {
        let c = 0.5 * (a + b);
        let fc = f(c)?;
        if fa * fc <= 0.0 {
            b = c;
        } else {
            a = c;
            fa = fc;
        }
    }
    Some(0.5 * (a + b))
}

/// Equilibrium branch parameterised by `V` (ascending grid), with limit
/// points (sign changes of `dI_inf/dV`) and Hopf points (a complex pair
/// crossing the imaginary axis) inserted at their refined locations.
pub fn branch(m: &NeuronModel, v_grid: &[f64]) -> Vec<BranchPoint> {
    let pts: Vec<BranchPoint> = v_grid.par_iter().map(|&v| branch_point(m, v)).collect();
    let mut out = Vec::with_capacity(pts.len());
    for w in pts.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        out.push(a.clone());
        let mut special = Vec::new();
        let (da, db) = (di_infty(m, a.v, 1), di_infty(m, b.v, 1));
        if da * db < 0.0 {
            if let Some(v) = refine(a.v, b.v, |v| Some(di_infty(m, v, 1))) {
                let mut p = branch_point(m, v);
                p.lp = true;
                special.push(p);
            }
        }
        if let (Some((ra, _)), Some((rb, _))) = (hopf_test(&a.eigenvalues), hopf_test(&b.eigenvalues)) {
            if ra * rb < 0.0 {
                let test = |v: f64| hopf_test(&branch_point(m, v).eigenvalues).map(|x| x.0);
                if let Some(v) = refine(a.v, b.v, test) {
                    let mut p = branch_point(m, v);
                    if let Some((_, im)) = hopf_test(&p.eigenvalues) {
                        p.hopf = true;
                        p.omega = Some(im);
                        special.push(p);
                    }
                }
            }
        }
        special.sort_by(|x, y| x.v.total_cmp(&y.v));
        out.extend(special);
    }
    if let Some(last) = pts.last() {
        out.push(last.clone());
    }
    out
}

/// First limit point or Hopf point met when following the equilibrium
/// branch upward from the bottom of the voltage window: the current at which
/// the rest state disappears or loses stability.
pub fn rest_boundary(m: &NeuronModel) -> Option<BranchPoint> {
    let (lo, hi) = m.window;
    let n = ((hi - lo) / 0.1).round() as usize + 1;
    branch(m, &linspace(lo, hi, n))
        .into_iter()
        .find(|p| p.lp || p.hopf)
}

/// Uniform grid from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldPoint {
    pub v: f64,
    pub i_app: f64,
    pub g_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldCurve {
    pub points: Vec<FoldPoint>,
    /// Grid voltages dropped because `X1` vanishes there.
    pub skipped: Vec<f64>,
}

/// Fold curve in the `(I_app, g_M)` plane parameterised by `V`.
pub fn fold_curve(m: &NeuronModel, v_grid: &[f64]) -> FoldCurve {
    let g_l = m.leak.g;
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &v in v_grid {
        let aux = aux_functions(m, v);
        if aux.x1.abs() < 1e-12 {
            skipped.push(v);
            continue;
        }
        let g_m = (aux.x2 - g_l) / aux.x1;
        points.push(FoldPoint {
            v,
            g_m,
            i_app: u_of_v(&m.with_g_m(g_m), v),
        });
    }
    FoldCurve { points, skipped }
}

/// Distance between BT and cusp points in `g_M`, tracking the roots closest
/// to the reference voltages.
pub fn bt_cusp_gap(m: &NeuronModel, v_bt: f64, v_cp: f64) -> Result<(BifPoint, BifPoint, f64)> {
    let nearest = |pts: Vec<BifPoint>, v: f64| {
        pts.into_iter()
            .min_by(|a, b| (a.v - v).abs().total_cmp(&(b.v - v).abs()))
            .ok_or(Error::NoRoot)
    };
    let bt = nearest(find_bt(m)?, v_bt)?;
    let cp = nearest(find_cusp(m)?, v_cp)?;
    let gap = (bt.g_m - cp.g_m).abs();
    Ok((bt, cp, gap))
}

/// Residual check used by callers that want the equilibrium to be exact.
pub fn equilibrium_residual(m: &NeuronModel, v: f64) -> f64 {
    i_infty(m, v).abs().max(m.rhs(&m.steady_state(v)).amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;

    fn near(points: &[BifPoint], v: f64) -> &BifPoint {
        points
            .iter()
            .min_by(|a, b| (a.v - v).abs().total_cmp(&(b.v - v).abs()))
            .unwrap()
    }

    #[test]
    fn m_gate_only_model_has_no_ionic_terms() {
        let mut cfg = Preset::WangBuzsaki.config();
        cfg.currents.clear();
        cfg.gates.clear();
        let m = cfg.build().unwrap();
        let a = aux_functions(&m, -50.0);
        assert_eq!((a.x2, a.y2, a.z2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn z_functions_match_finite_differences() {
        for p in Preset::ALL {
            let m = NeuronModel::preset(p);
            let mc = m.m_current().unwrap();
            let h = 1e-4;
            for v in [-70.0, -55.5, -41.0] {
                let a = aux_functions(&m, v);
                let x1 = |v: f64| mc.steady.value(v) + (mc.steady.jet(v).d1) * (v - mc.e_rev);
                let z1 = (x1(v + h) - x1(v - h)) / (2.0 * h);
                assert!((z1 - a.z1).abs() < 1e-5 * a.z1.abs().max(1.0));
                let x2 = |v: f64| m.ionic_steady_jet(v).d1;
                let z2 = (x2(v + h) - x2(v - h)) / (2.0 * h);
                assert!((z2 - a.z2).abs() < 1e-5 * a.z2.abs().max(1.0), "{p} {z2} {}", a.z2);
            }
        }
    }

    #[test]
    fn wang_buzsaki_bt_ratios_agree() {
        let m = NeuronModel::preset(Preset::WangBuzsaki);
        let a = aux_functions(&m, -59.6978);
        assert!(((a.x2 - 0.1) / a.x1 - 0.1455).abs() < 2e-3);
        assert!(((a.y2 + 1.0) / a.y1 - 0.1455).abs() < 2e-3);
    }

    #[test]
    fn wang_buzsaki_bt_points() {
        let m = NeuronModel::preset(Preset::WangBuzsaki);
        let pts = find_bt(&m).unwrap();
        let a = near(&pts, -59.698);
        assert!((a.v + 59.698).abs() < 0.05 && (a.i_app - 0.2).abs() < 1e-2 && (a.g_m - 0.146).abs() < 2e-3);
        let b = near(&pts, -40.992);
        assert!((b.v + 40.992).abs() < 0.05 && (b.i_app + 6.792).abs() < 1e-2 && (b.g_m + 0.037).abs() < 2e-3);
        assert!(!b.biophysical);
        for p in &pts {
            assert!(p.residuals.defining.abs() <= 1e-8, "{:?}", p.residuals);
            assert!(p.residuals.di_infty.abs() <= 1e-8);
            assert!(p.residuals.i_infty.abs() <= 1e-8);
        }
    }

    #[test]
    fn cusp_has_vanishing_curvature() {
        let m = NeuronModel::preset(Preset::WangBuzsaki);
        let pts = find_cusp(&m).unwrap();
        let c = near(&pts, -51.5531);
        assert!((c.g_m - 2.3316).abs() < 2e-3 && (c.i_app - 1.2382).abs() < 1e-2);
        assert!(c.residuals.d2i_infty.abs() <= 1e-8);
        assert!(c.residuals.di_infty.abs() <= 1e-8);
    }

    #[test]
    fn eigenvectors_are_biorthogonal() {
        let base = NeuronModel::preset(Preset::Rtm);
        let bt = near(&find_bt(&base).unwrap(), -63.7).clone();
        let m = bt.apply(&base);
        let a = m.jacobian(&m.steady_state(bt.v));
        let e = bt_eigvectors(&a).unwrap();
        let res = |x: DVector<f64>| x.amax();
        assert!(res(&a * &e.q0) <= 1e-8);
        assert!(res(&a * &e.q1 - &e.q0) <= 1e-8);
        assert!(res(a.transpose() * &e.p1) <= 1e-8);
        assert!(res(a.transpose() * &e.p0 - &e.p1) <= 1e-8);
        let p = [&e.p0, &e.p1];
        let q = [&e.q0, &e.q1];
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((p[i].dot(q[j]) - want).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn planar_jordan_block() {
        // A = [[a, b], [c, d]] with trace and determinant zero.
        let a = DMatrix::from_row_slice(2, 2, &[2.0, -4.0, 1.0, -2.0]);
        let e = bt_eigvectors(&a).unwrap();
        assert_eq!(e.q0.as_slice(), &[1.0, 0.5]);
        assert_eq!(e.q1.as_slice(), &[0.0, -0.25]);
        assert!((&a * &e.q1 - &e.q0).amax() < 1e-15);
        assert!((e.p1.dot(&e.q1) - 1.0).abs() < 1e-15);
        assert!(e.p1.dot(&e.q0).abs() < 1e-15);
        assert!(bt_eigvectors(&DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn beta2_is_invariant_under_kernel_shift() {
        let base = NeuronModel::preset(Preset::WangBuzsaki);
        let bt = near(&find_bt(&base).unwrap(), -59.7).clone();
        let nf = normal_form(&bt.apply(&base), bt.v).unwrap();
        for c in [-1.0, 1.0] {
            let shifted = &nf.h20 + &nf.vectors.q0 * c;
            assert!((nf.beta2_for(&shifted) - nf.beta2).abs() <= 1e-8);
        }
        let a = bt.apply(&base).jacobian(&base.steady_state(bt.v));
        let lhs = &a * &nf.h20;
        let g00 = bilinear(&bt.apply(&base).hessians(&bt.apply(&base).steady_state(bt.v)), &nf.vectors.q0, &nf.vectors.q0);
        let rhs = &nf.vectors.q1 * (2.0 * nf.alpha2) - g00;
        assert!((lhs - rhs).amax() < 1e-8);
    }

    #[test]
    fn pure_leak_branch_is_featureless() {
        let mut cfg = Preset::WangBuzsaki.config();
        cfg.currents.clear();
        cfg.gates.clear();
        cfg.m_current = None;
        let m = cfg.build().unwrap();
        let b = branch(&m, &linspace(-100.0, 0.0, 101));
        assert!(b.iter().all(|p| !p.lp && !p.hopf));
        assert!(find_bt(&m).is_err());
    }

    #[test]
    fn fold_curve_is_self_consistent() {
        let m = NeuronModel::preset(Preset::WangBuzsaki);
        let curve = fold_curve(&m, &linspace(-70.0, -40.0, 301));
        for p in &curve.points {
            let at = m.with_g_m(p.g_m);
            assert!(di_infty(&at, p.v, 1).abs() <= 1e-8);
        }
        let close = |i: f64, g: f64| {
            curve
                .points
                .iter()
                .any(|p| (p.i_app - i).abs() < 1e-2 && (p.g_m - g).abs() < 1e-2)
        };
        assert!(close(0.2, 0.1455));
        assert!(close(1.2382, 2.3316));
    }

    #[test]
    fn constant_activation_folds_are_excluded() {
        let mut cfg = Preset::WangBuzsaki.config();
        cfg.currents.clear();
        cfg.gates.clear();
        cfg.m_current.as_mut().unwrap().winf = "1".into();
        let m = cfg.build().unwrap();
        let curve = fold_curve(&m, &[-80.0, -60.0]);
        // X1 = 1, X2 = 0: every fold needs g_M = -g_L.
        assert!(curve.points.iter().all(|p| (p.g_m + 0.1).abs() < 1e-15));
    }

    fn gap_sweep(p: Preset, v_bt: f64, v_cp: f64) -> Vec<(f64, f64)> {
        let m = NeuronModel::preset(p);
        let g_star = find_btc(&m)
            .unwrap()
            .iter()
            .filter_map(|b| b.g_l)
            .filter(|&g| g > m.leak.g)
            .fold(f64::INFINITY, f64::min);
        let (mut vb, mut vc) = (v_bt, v_cp);
        (0..10)
            .map(|i| {
                let g_l = m.leak.g + (g_star - m.leak.g) * i as f64 / 10.0;
                let (bt, cp, gap) = bt_cusp_gap(&m.with_g_l(g_l), vb, vc).unwrap();
                vb = bt.v;
                vc = cp.v;
                (g_l, gap)
            })
            .collect()
    }

    #[test]
    fn raising_the_leak_brings_bt_and_cusp_together() {
        for (p, vb, vc) in [(Preset::WangBuzsaki, -59.7, -51.55), (Preset::Rtm, -63.74, -50.82)] {
            let gaps = gap_sweep(p, vb, vc);
            assert!(gaps.windows(2).all(|w| w[1].1 < w[0].1), "{p}: {gaps:?}");
        }
        // Stiefel: the g_M gap widens slightly at first and only shrinks
        // beyond g_L of about 0.045.
        let gaps = gap_sweep(Preset::Stiefel, -59.94, -53.47);
        assert!(gaps[1].1 > gaps[0].1);
        let late: Vec<_> = gaps.iter().filter(|g| g.0 >= 0.05).collect();
        assert!(late.len() >= 8);
        assert!(late.windows(2).all(|w| w[1].1 < w[0].1), "{gaps:?}");
    }
}
