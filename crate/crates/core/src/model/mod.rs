//! Conductance-based neuron model with an M-current.
//!
//! The state vector is `(V, w, a_1, .., a_k)`: membrane voltage, the
//! M-current gate (present only when the model has an M-current) and every
//! non-instantaneous gate in declaration order. Instantaneous gates are
//! replaced by their steady state `x_inf(V)` inside the currents.
//!
//! [`NeuronModel::rhs`] and [`NeuronModel::jacobian`] use the time-rescaled
//! form in which the voltage equation carries no capacitance and the gating
//! equations are multiplied by `C_m`; [`NeuronModel::derivative_into`] is the
//! same field in milliseconds (everything divided by `C_m`), used for
//! simulation.

pub mod config;
pub mod presets;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{JetEvaluator, KineticExpr};
use crate::jet::Jet2;

pub use config::ModelConfig;
pub use presets::Preset;

pub type State = DVector<f64>;

/// Upper bound on gates per model; keeps the simulation path allocation free.
pub const MAX_GATES: usize = 16;

/// A kinetic function together with its first two symbolic derivatives.
#[derive(Debug, Clone)]
pub struct GatingFn {
    expr: KineticExpr,
    jets: JetEvaluator,
}

impl GatingFn {
    pub fn new(expr: KineticExpr) -> Self {
        let jets = expr.jet_evaluator();
        GatingFn { expr, jets }
    }

    pub fn expr(&self) -> &KineticExpr {
        &self.expr
    }

    #[inline]
    pub fn value(&self, v: f64) -> f64 {
        self.expr.value(v)
    }

    #[inline]
    pub fn jet(&self, v: f64) -> Jet2 {
        let [a, b, c] = self.jets.eval(v);
        Jet2::new(a, b, c)
    }
}

#[derive(Debug, Clone)]
pub struct GateSpec {
    pub name: String,
    pub steady: GatingFn,
    /// Time constant in ms, before division by `phi`.
    pub tau: GatingFn,
    pub phi: f64,
    pub instantaneous: bool,
}

impl GateSpec {
    /// `phi / tau(V)` with derivatives.
    fn rate_jet(&self, v: f64) -> Jet2 {
        self.tau.jet(v).recip().scale(self.phi)
    }

    /// `tau(V) / phi`.
    pub fn effective_tau(&self, v: f64) -> f64 {
        self.tau.value(v) / self.phi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateFactor {
    pub gate: usize,
    pub power: u32,
}

#[derive(Debug, Clone)]
pub struct CurrentSpec {
    pub name: String,
    pub g: f64,
    pub e_rev: f64,
    pub gates: Vec<GateFactor>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leak {
    pub g: f64,
    pub e_rev: f64,
}

#[derive(Debug, Clone)]
pub struct MCurrent {
    pub g: f64,
    pub e_rev: f64,
    pub steady: GatingFn,
    pub tau: GatingFn,
    pub phi: f64,
}

impl MCurrent {
    fn rate_jet(&self, v: f64) -> Jet2 {
        self.tau.jet(v).recip().scale(self.phi)
    }
}

#[derive(Debug, Clone)]
pub struct NeuronModel {
    pub capacitance: f64,
    pub leak: Leak,
    pub i_app: f64,
    pub window: (f64, f64),
    m_current: Option<MCurrent>,
    currents: Vec<CurrentSpec>,
    gates: Vec<GateSpec>,
    slots: Vec<Option<usize>>,
    dim: usize,
}

/// One factor `x^p` of a gate monomial, differentiated with respect to the
/// single state coordinate it depends on (`var`, 0 meaning `V`).
#[derive(Clone, Copy)]
struct Factor {
    var: usize,
    val: f64,
    d1: f64,
    d2: f64,
}

/// Builds a model from a preset name or a JSON config.
pub fn build_model(source: &str) -> Result<NeuronModel> {
    match source.parse::<Preset>() {
        Ok(p) => p.config().build(),
        Err(_) if source.trim_start().starts_with('{') => ModelConfig::from_json(source)?.build(),
        Err(e) => Err(e),
    }
}

impl NeuronModel {
    pub(crate) fn assemble(
        capacitance: f64,
        leak: Leak,
        m_current: Option<MCurrent>,
        currents: Vec<CurrentSpec>,
        gates: Vec<GateSpec>,
        i_app: f64,
        window: (f64, f64),
    ) -> Self {
        let mut next = if m_current.is_some() { 2 } else { 1 };
        let slots = gates
            .iter()
            .map(|g| {
                (!g.instantaneous).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        NeuronModel {
            capacitance,
            leak,
            i_app,
            window,
            m_current,
            currents,
            gates,
            slots,
            dim: next,
        }
    }

    pub fn preset(p: Preset) -> Self {
        p.config().build().expect("built-in presets are valid")
    }

    pub(crate) fn check_kinetics(&self) -> Result<()> {
        if self.gates.len() > MAX_GATES {
            return Err(Error::config("gates", format!("at most {MAX_GATES} gates")));
        }
        let (lo, hi) = self.window;
        let n = ((hi - lo).ceil() as usize).max(1);
        let mut prev_w = f64::NEG_INFINITY;
        for i in 0..=n {
            let v = lo + (hi - lo) * i as f64 / n as f64;
            for (j, g) in self.gates.iter().enumerate() {
                let x = g.steady.expr().eval(v)?;
                if !(-1e-12..=1.0 + 1e-12).contains(&x) {
                    return Err(Error::config(
                        format!("gates[{j}].xinf"),
                        format!("value {x} outside [0, 1] at V = {v}"),
                    ));
                }
                if !g.instantaneous {
                    let t = g.tau.expr().eval(v)?;
                    if !(t > 0.0) {
                        return Err(Error::config(
                            format!("gates[{j}].tau"),
                            format!("non-positive time constant at V = {v}"),
                        ));
                    }
                }
            }
            if let Some(m) = &self.m_current {
                let w = m.steady.expr().eval(v)?;
                if !(-1e-12..=1.0 + 1e-12).contains(&w) {
                    return Err(Error::config(
                        "m_current.winf",
                        format!("value {w} outside [0, 1] at V = {v}"),
                    ));
                }
                if w < prev_w - 1e-12 {
                    return Err(Error::config("m_current.winf", "must be nondecreasing"));
                }
                prev_w = w;
                if !(m.tau.expr().eval(v)? > 0.0) {
                    return Err(Error::config(
                        "m_current.tau",
                        format!("non-positive time constant at V = {v}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gates(&self) -> &[GateSpec] {
        &self.gates
    }

    pub fn currents(&self) -> &[CurrentSpec] {
        &self.currents
    }

    pub fn m_current(&self) -> Option<&MCurrent> {
        self.m_current.as_ref()
    }

    /// State index of the M-current gate.
    pub fn w_index(&self) -> Option<usize> {
        self.m_current.as_ref().map(|_| 1)
    }

    /// State index of gate `j`, `None` for instantaneous gates.
    pub fn gate_slot(&self, j: usize) -> Option<usize> {
        self.slots[j]
    }

    /// Dynamic gates as `(gate index, state index)`.
    pub fn dynamic_gates(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(j, s)| s.map(|s| (j, s)))
    }

    pub fn g_m(&self) -> f64 {
        self.m_current.as_ref().map_or(0.0, |m| m.g)
    }

    /// Sets the M-current conductance; no-op for models without one.
    pub fn set_g_m(&mut self, g: f64) {
        if let Some(m) = &mut self.m_current {
            m.g = g;
        }
    }

    pub fn with_g_m(&self, g: f64) -> Self {
        let mut m = self.clone();
        m.set_g_m(g);
        m
    }

    pub fn with_g_l(&self, g: f64) -> Self {
        let mut m = self.clone();
        m.leak.g = g;
        m
    }

    pub fn with_i_app(&self, i: f64) -> Self {
        let mut m = self.clone();
        m.i_app = i;
        m
    }

    /// Names of the state coordinates, e.g. `["V", "w", "h", "n"]`.
    pub fn state_names(&self) -> Vec<String> {
        let mut names = vec!["V".to_string()];
        if self.m_current.is_some() {
            names.push("w".into());
        }
        names.extend(self.dynamic_gates().map(|(j, _)| self.gates[j].name.clone()));
        names
    }

    /// `(V, w_inf(V), a_inf(V))`.
    pub fn steady_state(&self, v: f64) -> State {
        let mut s = State::zeros(self.dim);
        s[0] = v;
        if let Some(m) = &self.m_current {
            s[1] = m.steady.value(v);
        }
        for (j, slot) in self.dynamic_gates() {
            s[slot] = self.gates[j].steady.value(v);
        }
        s
    }

    /// Steady-state M-gate activation with derivatives (zero without an M-current).
    pub fn w_inf_jet(&self, v: f64) -> Jet2 {
        self.m_current
            .as_ref()
            .map_or(Jet2::default(), |m| m.steady.jet(v))
    }

    /// Stationary ionic current `I_ion(V, a_inf(V))` with its first two
    /// total derivatives.
    pub fn ionic_steady_jet(&self, v: f64) -> Jet2 {
        let mut total = Jet2::default();
        for c in &self.currents {
            let mut prod = Jet2::constant(c.g);
            for f in &c.gates {
                prod = prod * self.gates[f.gate].steady.jet(v).powi(f.power);
            }
            total = total + prod * Jet2::new(c.e_rev - v, -1.0, 0.0);
        }
        total
    }

    fn gate_values(&self, s: &[f64], out: &mut [f64; MAX_GATES]) {
        let v = s[0];
        for (j, g) in self.gates.iter().enumerate() {
            out[j] = match self.slots[j] {
                Some(slot) => s[slot],
                None => g.steady.value(v),
            };
        }
    }

    fn ionic_current(&self, v: f64, x: &[f64; MAX_GATES]) -> f64 {
        self.currents
            .iter()
            .map(|c| {
                let prod: f64 = c.gates.iter().map(|f| x[f.gate].powi(f.power as i32)).product();
                c.g * (c.e_rev - v) * prod
            })
            .sum()
    }

    /// Vector field in the rescaled time of the analysis.
    pub fn rhs(&self, s: &State) -> State {
        let mut out = State::zeros(self.dim);
        self.derivative_into(s.as_slice(), out.as_mut_slice());
        out * self.capacitance
    }

    /// Vector field in ms; `out` must have length `dim`.
    #[inline]
    pub fn derivative_into(&self, s: &[f64], out: &mut [f64]) {
        self.derivative_with_input(s, 0.0, out)
    }

    /// Same as [`derivative_into`](Self::derivative_into) with an extra
    /// current (µA/cm²) added to the voltage equation.
    #[inline]
    pub fn derivative_with_input(&self, s: &[f64], extra_current: f64, out: &mut [f64]) {
        let v = s[0];
        let mut x = [0.0; MAX_GATES];
        self.gate_values(s, &mut x);
        let mut dv = self.i_app + extra_current - self.leak.g * (v - self.leak.e_rev)
            + self.ionic_current(v, &x);
        if let Some(m) = &self.m_current {
            dv -= m.g * s[1] * (v - m.e_rev);
            out[1] = m.phi / m.tau.value(v) * (m.steady.value(v) - s[1]);
        }
        out[0] = dv / self.capacitance;
        for (j, g) in self.gates.iter().enumerate() {
            if let Some(slot) = self.slots[j] {
                out[slot] = g.phi / g.tau.value(v) * (g.steady.value(v) - s[slot]);
            }
        }
    }

    fn current_factors(&self, c: &CurrentSpec, s: &[f64], buf: &mut Vec<Factor>) {
        buf.clear();
        let v = s[0];
        for f in &c.gates {
            let p = f.power;
            let pf = p as f64;
            match self.slots[f.gate] {
                Some(slot) => {
                    let a = s[slot];
                    let pm2 = if p >= 2 { a.powi(p as i32 - 2) } else { 0.0 };
                    let pm1 = if p >= 1 { a.powi(p as i32 - 1) } else { 0.0 };
                    buf.push(Factor {
                        var: slot,
                        val: a.powi(p as i32),
                        d1: pf * pm1,
                        d2: pf * (pf - 1.0) * pm2,
                    });
                }
                None => {
                    let j = self.gates[f.gate].steady.jet(v).powi(p);
                    buf.push(Factor {
                        var: 0,
                        val: j.v,
                        d1: j.d1,
                        d2: j.d2,
                    });
                }
            }
        }
    }

    /// Gradient (and optionally Hessian) of one ionic current with respect to
    /// the state, accumulated into `grad` / `hess`.
    fn accumulate_current(
        &self,
        c: &CurrentSpec,
        s: &[f64],
        grad: &mut DVector<f64>,
        hess: Option<&mut DMatrix<f64>>,
        buf: &mut Vec<Factor>,
    ) {
        self.current_factors(c, s, buf);
        let n = self.dim;
        let k = buf.len();
        let prod_except = |skip: &[usize]| -> f64 {
            buf.iter()
                .enumerate()
                .filter(|(i, _)| !skip.contains(i))
                .map(|(_, f)| f.val)
                .product()
        };
        let prod: f64 = buf.iter().map(|f| f.val).product();
        let mut dprod = DVector::<f64>::zeros(n);
        for i in 0..k {
            dprod[buf[i].var] += buf[i].d1 * prod_except(&[i]);
        }
        let u = c.g * (c.e_rev - s[0]);
        let du = -c.g;
        for z in 0..n {
            grad[z] += u * dprod[z];
        }
        grad[0] += du * prod;
        if let Some(h) = hess {
            for i in 0..k {
                let (fi, vi) = (buf[i], buf[i].var);
                h[(vi, vi)] += u * fi.d2 * prod_except(&[i]);
                for l in 0..k {
                    if l != i {
                        let fl = buf[l];
                        h[(vi, fl.var)] += u * fi.d1 * fl.d1 * prod_except(&[i, l]);
                    }
                }
            }
            for z in 0..n {
                h[(0, z)] += du * dprod[z];
                h[(z, 0)] += du * dprod[z];
            }
        }
    }

    /// Exact Jacobian of [`rhs`](Self::rhs).
    pub fn jacobian(&self, s: &State) -> DMatrix<f64> {
        let n = self.dim;
        let v = s[0];
        let cm = self.capacitance;
        let mut jac = DMatrix::zeros(n, n);
        let mut row = DVector::zeros(n);
        let mut buf = Vec::new();
        for c in &self.currents {
            self.accumulate_current(c, s.as_slice(), &mut row, None, &mut buf);
        }
        row[0] -= self.leak.g;
        if let Some(m) = &self.m_current {
            row[0] -= m.g * s[1];
            row[1] -= m.g * (v - m.e_rev);
            let rate = m.rate_jet(v);
            let ss = m.steady.jet(v);
            jac[(1, 0)] = cm * (rate.d1 * (ss.v - s[1]) + rate.v * ss.d1);
            jac[(1, 1)] = -cm * rate.v;
        }
        jac.set_row(0, &row.transpose());
        for (j, slot) in self.dynamic_gates() {
            let g = &self.gates[j];
            let rate = g.rate_jet(v);
            let ss = g.steady.jet(v);
            jac[(slot, 0)] = cm * (rate.d1 * (ss.v - s[slot]) + rate.v * ss.d1);
            jac[(slot, slot)] = -cm * rate.v;
        }
        jac
    }

    /// Exact Hessians of every component of [`rhs`](Self::rhs).
    pub fn hessians(&self, s: &State) -> Vec<DMatrix<f64>> {
        let n = self.dim;
        let v = s[0];
        let cm = self.capacitance;
        let mut out = vec![DMatrix::zeros(n, n); n];
        let mut grad = DVector::zeros(n);
        let mut buf = Vec::new();
        for c in &self.currents {
            self.accumulate_current(c, s.as_slice(), &mut grad, Some(&mut out[0]), &mut buf);
        }
        let mut gate_block = |slot: usize, rate: Jet2, ss: Jet2| {
            let h = &mut out[slot];
            h[(0, 0)] = cm * (rate.d2 * (ss.v - s[slot]) + 2.0 * rate.d1 * ss.d1 + rate.v * ss.d2);
            h[(0, slot)] = -cm * rate.d1;
            h[(slot, 0)] = -cm * rate.d1;
        };
        if let Some(m) = &self.m_current {
            gate_block(1, m.rate_jet(v), m.steady.jet(v));
        }
        for (j, slot) in self.dynamic_gates() {
            let g = &self.gates[j];
            gate_block(slot, g.rate_jet(v), g.steady.jet(v));
        }
        if let Some(m) = &self.m_current {
            out[0][(0, 1)] -= m.g;
            out[0][(1, 0)] -= m.g;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pure_leak(with_m: bool) -> NeuronModel {
        let mut cfg = Preset::WangBuzsaki.config();
        cfg.currents.clear();
        cfg.gates.clear();
        if !with_m {
            cfg.m_current = None;
        }
        cfg.build().unwrap()
    }

    #[test]
    fn wang_buzsaki_preset_parameters() {
        let cfg = Preset::WangBuzsaki.config();
        assert_eq!((cfg.leak.g, cfg.leak.e), (0.1, -65.0));
        assert_eq!((cfg.currents[0].g, cfg.currents[0].e), (35.0, 55.0));
        assert_eq!((cfg.currents[1].g, cfg.currents[1].e), (9.0, -90.0));
        assert_eq!(cfg.capacitance, 1.0);
        assert!(cfg.gates[0].instantaneous);
        assert_eq!(cfg.gates[1].phi, 5.0);
        assert_eq!(cfg.gates[2].phi, 5.0);
        assert_eq!(cfg.m_current.as_ref().unwrap().phi, 1.0);
        let m = NeuronModel::preset(Preset::WangBuzsaki);
        assert_eq!(m.dim(), 4);
        assert_eq!(m.state_names(), ["V", "w", "h", "n"]);
    }

    #[test]
    fn rtm_preset_parameters() {
        let cfg = Preset::Rtm.config();
        assert_eq!((cfg.leak.g, cfg.leak.e), (0.1, -67.0));
        assert_eq!(cfg.currents[0].g, 100.0);
        assert_eq!((cfg.currents[1].g, cfg.currents[1].e), (80.0, -100.0));
        assert!(!cfg.gates[0].instantaneous);
        assert_eq!(NeuronModel::preset(Preset::Rtm).dim(), 5);
    }

    #[test]
    fn degenerate_models_shrink_the_state() {
        assert_eq!(pure_leak(true).dim(), 2);
        let leak = pure_leak(false);
        assert_eq!(leak.dim(), 1);
        let jac = leak.jacobian(&leak.steady_state(-30.0));
        assert_eq!(jac.shape(), (1, 1));
        assert!((jac[(0, 0)] + 0.1).abs() < 1e-15);
        let s = leak.steady_state(-65.0);
        assert_eq!(leak.rhs(&s)[0], 0.0);
    }

    #[test]
    fn gate_components_vanish_on_the_steady_state_manifold() {
        for p in Preset::ALL {
            let m = NeuronModel::preset(p).with_g_m(0.5);
            for i in 0..180 {
                let v = -120.0 + i as f64;
                let f = m.rhs(&m.steady_state(v));
                for k in 1..m.dim() {
                    assert!(f[k].abs() < 1e-12, "{p} V={v} component {k}: {}", f[k]);
                }
            }
        }
    }

    fn off_manifold_state(m: &NeuronModel, v: f64) -> State {
        let mut s = m.steady_state(v);
        for k in 1..m.dim() {
            s[k] = (s[k] * 0.8 + 0.05 * k as f64).min(0.95);
        }
        s
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for p in Preset::ALL {
            let m = NeuronModel::preset(p).with_g_m(0.7);
            for v in [-75.0, -54.0, -35.0, -20.0] {
                let s = off_manifold_state(&m, v);
                let jac = m.jacobian(&s);
                for k in 0..m.dim() {
                    let h = 1e-6 * s[k].abs().max(1e-2);
                    let mut sp = s.clone();
                    let mut sm = s.clone();
                    sp[k] += h;
                    sm[k] -= h;
                    let col = (m.rhs(&sp) - m.rhs(&sm)) / (2.0 * h);
                    for r in 0..m.dim() {
                        let scale = jac[(r, k)].abs().max(1.0);
                        assert!(
                            (col[r] - jac[(r, k)]).abs() < 1e-5 * scale,
                            "{p} V={v} J[{r},{k}]: fd {} exact {}",
                            col[r],
                            jac[(r, k)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn hessians_match_finite_differences_of_the_jacobian() {
        for p in Preset::ALL {
            let m = NeuronModel::preset(p).with_g_m(0.7);
            let s = off_manifold_state(&m, -48.0);
            let hs = m.hessians(&s);
            for k in 0..m.dim() {
                let h = 1e-5 * s[k].abs().max(1e-2);
                let mut sp = s.clone();
                let mut sm = s.clone();
                sp[k] += h;
                sm[k] -= h;
                let dj = (m.jacobian(&sp) - m.jacobian(&sm)) / (2.0 * h);
                for r in 0..m.dim() {
                    for c in 0..m.dim() {
                        let exact = hs[r][(c, k)];
                        assert!(
                            (dj[(r, c)] - exact).abs() < 1e-5 * exact.abs().max(1.0),
                            "{p} H{r}[{c},{k}]: fd {} exact {exact}",
                            dj[(r, c)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn ionic_jet_matches_finite_differences() {
        let m = NeuronModel::preset(Preset::WangBuzsaki);
        let v = -52.3;
        let h = 1e-4;
        let j = m.ionic_steady_jet(v);
        let f = |x: f64| m.ionic_steady_jet(x).v;
        assert!(((f(v + h) - f(v - h)) / (2.0 * h) - j.d1).abs() < 1e-6 * j.d1.abs().max(1.0));
        let d2 = (f(v + h) - 2.0 * f(v) + f(v - h)) / (h * h);
        assert!((d2 - j.d2).abs() < 1e-4 * j.d2.abs().max(1.0));
    }

    #[test]
    fn gate_block_is_diagonal() {
        let m = NeuronModel::preset(Preset::Rtm).with_g_m(1.0);
        let s = m.steady_state(-60.0);
        let j = m.jacobian(&s);
        for a in 1..m.dim() {
            for b in 1..m.dim() {
                if a != b {
                    assert_eq!(j[(a, b)], 0.0);
                }
            }
        }
        for (g, slot) in m.dynamic_gates() {
            let gate = &m.gates()[g];
            let expected = -m.capacitance * gate.phi / gate.tau.value(-60.0);
            assert!((j[(slot, slot)] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn config_errors_name_the_field() {
        let mut cfg = Preset::Stiefel.config();
        cfg.capacitance = 0.0;
        assert!(matches!(cfg.build(), Err(Error::Config { field, .. }) if field == "capacitance"));
        let mut cfg = Preset::Stiefel.config();
        cfg.currents[0].gates[0].name = "q".into();
        assert!(matches!(cfg.build(), Err(Error::Config { field, .. }) if field.starts_with("currents[0]")));
        let mut cfg = Preset::Stiefel.config();
        cfg.gates[1].xinf = Some("2+sin(V)".into());
        assert!(matches!(cfg.build(), Err(Error::Config { field, .. }) if field == "gates[1].xinf"));
        let mut cfg = Preset::Stiefel.config();
        cfg.m_current.as_mut().unwrap().winf = "1/(exp((V+39)/5)+1)".into();
        assert!(matches!(cfg.build(), Err(Error::Config { field, .. }) if field == "m_current.winf"));
        assert!(build_model("does-not-exist").is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = Preset::WangBuzsaki.config();
        let text = cfg.to_json();
        let back = ModelConfig::from_json(&text).unwrap();
        assert_eq!(cfg, back);
        let m = build_model(&text).unwrap();
        assert_eq!(m.dim(), 4);
    }
}
