//! Single-neuron simulation: traces, spikes, firing rates, F/I and F/g_M
//! curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bifurcation::{linspace, rest_boundary};
use crate::error::Result;
use crate::model::NeuronModel;
use crate::ode::{integrate, integrate_with, OdeSystem, SolverOptions, Trace};
use crate::steady::find_equilibria;

impl OdeSystem for NeuronModel {
    fn dim(&self) -> usize {
        NeuronModel::dim(self)
    }

    #[inline]
    fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        self.derivative_into(y, dy)
    }
}

/// Simulates `m` from `init` for `t_end` ms.
pub fn simulate(m: &NeuronModel, init: &[f64], t_end: f64, opts: &SolverOptions) -> Result<Trace> {
    integrate(m, init, t_end, opts)
}

/// Spike times merged within this window (ms) are counted once.
pub const MERGE_WINDOW: f64 = 1.0;

/// Online detector of upward threshold crossings.
#[derive(Debug, Clone)]
pub struct SpikeDetector {
    threshold: f64,
    prev: Option<(f64, f64)>,
    pub spikes: Vec<f64>,
}

impl SpikeDetector {
    pub fn new(threshold: f64) -> Self {
        SpikeDetector {
            threshold,
            prev: None,
            spikes: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, v: f64) {
        if let Some((t0, v0)) = self.prev {
            if v0 < self.threshold && v >= self.threshold {
                let ts = t0 + (self.threshold - v0) / (v - v0) * (t - t0);
                if self.spikes.last().is_none_or(|&last| ts - last > MERGE_WINDOW) {
                    self.spikes.push(ts);
                }
            }
        }
        self.prev = Some((t, v));
    }
}

/// Upward crossings of `threshold` by the samples `(t, v)`.
pub fn detect_spikes_in(t: &[f64], v: &[f64], threshold: f64) -> Vec<f64> {
    let mut d = SpikeDetector::new(threshold);
    for (&ti, &vi) in t.iter().zip(v) {
        d.push(ti, vi);
    }
    d.spikes
}

/// Spike times of the voltage (component 0) of a trace.
pub fn detect_spikes(tr: &Trace, threshold: f64) -> Vec<f64> {
    detect_spikes_in(&tr.t, &tr.component(0), threshold)
}

/// `1000 / mean ISI` over spikes at or after `t_from`; zero with fewer than
/// two such spikes.
pub fn frequency_from_spikes(spikes: &[f64], t_from: f64) -> f64 {
    let late: Vec<f64> = spikes.iter().copied().filter(|&s| s >= t_from).collect();
    if late.len() < 2 {
        return 0.0;
    }
    let mean_isi = (late[late.len() - 1] - late[0]) / (late.len() - 1) as f64;
    1000.0 / mean_isi
}

/// Firing rate (Hz) after discarding the first half of the trace.
pub fn firing_frequency(tr: &Trace) -> f64 {
    let Some(&t_end) = tr.t.last() else {
        return 0.0;
    };
    frequency_from_spikes(&detect_spikes(tr, 0.0), 0.5 * t_end)
}

/// Coefficient of variation of the inter-spike intervals.
pub fn isi_cv(spikes: &[f64]) -> f64 {
    let isi: Vec<f64> = spikes.windows(2).map(|w| w[1] - w[0]).collect();
    if isi.is_empty() {
        return f64::NAN;
    }
    let mean = isi.iter().sum::<f64>() / isi.len() as f64;
    let var = isi.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / isi.len() as f64;
    var.sqrt() / mean
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    /// Simulated time per current step (ms).
    pub t_end: f64,
    pub threshold: f64,
    pub solver: SolverOptions,
    /// Bisection steps used to sharpen each onset between grid points.
    pub refine_steps: u32,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            t_end: 3000.0,
            threshold: 0.0,
            solver: SolverOptions::default(),
            refine_steps: 8,
        }
    }
}

/// Runs one step of a sweep: returns the frequency and the final state.
pub fn run_step(m: &NeuronModel, init: &[f64], p: &Protocol) -> Result<(f64, Vec<f64>)> {
    let mut det = SpikeDetector::new(p.threshold);
    let mut last = init.to_vec();
    integrate_with(m, init, p.t_end, &p.solver, |t, y| {
        det.push(t, y[0]);
        last.copy_from_slice(y);
    })?;
    Ok((frequency_from_spikes(&det.spikes, 0.5 * p.t_end), last))
}

/// State at the lowest-voltage equilibrium (the rest state).
pub fn rest_state(m: &NeuronModel) -> Result<Vec<f64>> {
    let eq = find_equilibria(m)?;
    let rest = eq
        .iter()
        .find(|e| e.stability.is_stable())
        .unwrap_or(&eq[0]);
    Ok(rest.state.as_slice().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiPoint {
    pub i_app: f64,
    pub frequency: f64,
    pub fired: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Excitability {
    #[serde(rename = "I")]
    ClassI,
    #[serde(rename = "II")]
    ClassII,
    #[serde(rename = "undetermined")]
    Undetermined,
}

/// Onset frequencies below this are class I.
pub const CLASS_I_MAX_HZ: f64 = 5.0;
/// Onset frequencies at or above this are class II.
pub const CLASS_II_MIN_HZ: f64 = 20.0;

impl Excitability {
    pub fn from_onset(freq: Option<f64>) -> Self {
        match freq {
            Some(f) if f < CLASS_I_MAX_HZ => Excitability::ClassI,
            Some(f) if f >= CLASS_II_MIN_HZ => Excitability::ClassII,
            _ => Excitability::Undetermined,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiCurve {
    pub up: Vec<FiPoint>,
    /// Down-sweep, in descending current.
    pub down: Vec<FiPoint>,
    /// Lowest current that fires when increasing from rest (refined).
    pub onset_current: Option<f64>,
    pub onset_frequency: Option<f64>,
    /// Lowest current that still fires when decreasing from tonic firing.
    pub offset_current: Option<f64>,
    pub offset_frequency: Option<f64>,
    pub class: Excitability,
}

impl FiCurve {
    /// Currents between the down-sweep offset and the up-sweep onset where
    /// rest and repetitive firing coexist.
    pub fn bistable_window(&self) -> Option<(f64, f64)> {
        match (self.offset_current, self.onset_current) {
            (Some(lo), Some(hi)) if lo < hi => Some((lo, hi)),
            _ => None,
        }
    }
}

/// Bisection for the firing boundary between `quiet` and `firing`, always
/// restarting from `init`. Returns the firing end of the bracket and its
/// frequency.
fn refine_boundary(
    m: &NeuronModel,
    init: &[f64],
    mut quiet: f64,
    mut firing: (f64, f64),
    p: &Protocol,
) -> Result<(f64, f64)> {
    for _ in 0..p.refine_steps {
        let mid = 0.5 * (quiet + firing.0);
        let (f, _) = run_step(&m.with_i_app(mid), init, p)?;
        if f > 0.0 {
            firing = (mid, f);
        } else {
            quiet = mid;
        }
    }
    Ok(firing)
}

/// Current grid of `n` points bracketing the loss of the rest state: from
/// half a span below the rest boundary to one and a half spans above, with
/// the span a fifth of the boundary current (at least 0.2).
pub fn fi_grid(m: &NeuronModel, n: usize) -> Option<Vec<f64>> {
    let ic = rest_boundary(m)?.i_app;
    let span = (0.2 * ic.abs()).max(0.2);
    Some(linspace(ic - 0.5 * span, ic + 1.5 * span, n))
}

/// F/I curve with an up-sweep from rest followed by a down-sweep from the
/// top of the grid, each step continuing from the previous final state.
pub fn fi_curve(m: &NeuronModel, i_grid: &[f64], p: &Protocol) -> Result<FiCurve> {
    let mut up = Vec::with_capacity(i_grid.len());
    let Some(&i0) = i_grid.first() else {
        return Ok(FiCurve {
            up,
            down: Vec::new(),
            onset_current: None,
            onset_frequency: None,
            offset_current: None,
            offset_frequency: None,
            class: Excitability::Undetermined,
        });
    };
    let mut state = rest_state(&m.with_i_app(i0))?;
    let mut onset = None;
    let mut quiet_state: Option<(f64, Vec<f64>)> = None;
    for &i in i_grid {
        let (f, next) = run_step(&m.with_i_app(i), &state, p)?;
        up.push(FiPoint {
            i_app: i,
            frequency: f,
            fired: f > 0.0,
        });
        if f > 0.0 && onset.is_none() {
            onset = Some(match &quiet_state {
                Some((iq, sq)) => refine_boundary(m, sq, *iq, (i, f), p)?,
                None => (i, f),
            });
        }
        if f == 0.0 {
            quiet_state = Some((i, next.clone()));
        }
        state = next;
    }

    let mut down = Vec::with_capacity(i_grid.len());
    let mut offset = None;
    let mut firing_state: Option<(f64, f64, Vec<f64>)> = None;
    for &i in i_grid.iter().rev() {
        let (f, next) = run_step(&m.with_i_app(i), &state, p)?;
        down.push(FiPoint {
            i_app: i,
            frequency: f,
            fired: f > 0.0,
        });
        if f > 0.0 {
            firing_state = Some((i, f, next.clone()));
        } else if offset.is_none() {
            if let Some((i_f, f_f, s_f)) = &firing_state {
                offset = Some(refine_offset(m, s_f, i, (*i_f, *f_f), p)?);
            }
        }
        state = next;
    }
    if offset.is_none() {
        offset = firing_state.as_ref().map(|(i, f, _)| (*i, *f));
    }

    Ok(FiCurve {
        up,
        down,
        onset_current: onset.map(|o| o.0),
        onset_frequency: onset.map(|o| o.1),
        offset_current: offset.map(|o| o.0),
        offset_frequency: offset.map(|o| o.1),
        class: Excitability::from_onset(onset.map(|o| o.1)),
    })
}

/// Like [`refine_boundary`] but restarting from a firing state, so the
/// bracket closes on the lowest current that sustains firing.
fn refine_offset(
    m: &NeuronModel,
    firing_init: &[f64],
    mut quiet: f64,
    mut firing: (f64, f64),
    p: &Protocol,
) -> Result<(f64, f64)> {
    for _ in 0..p.refine_steps {
        let mid = 0.5 * (quiet + firing.0);
        let (f, _) = run_step(&m.with_i_app(mid), firing_init, p)?;
        if f > 0.0 {
            firing = (mid, f);
        } else {
            quiet = mid;
        }
    }
    Ok(firing)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FgmPoint {
    pub g_m: f64,
    pub frequency: f64,
    pub fired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FgmCurve {
    pub i_app: f64,
    pub points: Vec<FgmPoint>,
    /// Frequency strictly decreases over the firing points, and no point
    /// fails to fire.
    pub monotone_decreasing: bool,
}

/// Initial condition for the F/g_M scan: rest with the voltage kicked to
/// 0 mV so that a coexisting limit cycle is reached.
fn kicked_rest(m: &NeuronModel) -> Result<Vec<f64>> {
    let mut s = rest_state(m)?;
    s[0] = 0.0;
    Ok(s)
}

/// Firing frequency versus `g_M` at fixed applied current.
pub fn f_gm_curve(m: &NeuronModel, i_app: f64, gm_grid: &[f64], p: &Protocol) -> Result<FgmCurve> {
    let points = gm_grid
        .par_iter()
        .map(|&g| {
            let mg = m.with_g_m(g).with_i_app(i_app);
            let (f, _) = run_step(&mg, &kicked_rest(&mg)?, p)?;
            Ok(FgmPoint {
                g_m: g,
                frequency: f,
                fired: f > 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone_decreasing = points.iter().all(|q| q.fired)
        && points.windows(2).all(|w| w[1].frequency < w[0].frequency);
    Ok(FgmCurve {
        i_app,
        points,
        monotone_decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;

    fn pure_leak() -> NeuronModel {
        let mut cfg = Preset::WangBuzsaki.config();
        cfg.currents.clear();
        cfg.gates.clear();
        cfg.m_current = None;
        cfg.build().unwrap()
    }

    #[test]
    fn leak_decays_exponentially() {
        let m = pure_leak();
        let exact = |t: f64| -65.0 + 10.0 * (-0.1 * t).exp();
        let tr = simulate(&m, &[-55.0], 100.0, &SolverOptions::default()).unwrap();
        for (i, &t) in tr.t.iter().enumerate() {
            let v = tr.state(i)[0];
            assert!((v - exact(t)).abs() <= 1e-6 * v.abs());
        }
        let tight = SolverOptions {
            atol: 1e-12,
            rtol: 1e-10,
            ..Default::default()
        };
        let tr = simulate(&m, &[-55.0], 100.0, &tight).unwrap();
        for (i, &t) in tr.t.iter().enumerate() {
            assert!((tr.state(i)[0] - exact(t)).abs() < 1e-6);
        }
    }

    #[test]
    fn sinusoid_crossings() {
        let t: Vec<f64> = (0..=20000).map(|i| i as f64 * 0.01).collect();
        let v: Vec<f64> = t
            .iter()
            .map(|&t| 20.0 + 40.0 * (2.0 * std::f64::consts::PI * t / 50.0).sin())
            .collect();
        let s = detect_spikes_in(&t, &v, 0.0);
        assert!(s.len() >= 3);
        for w in s.windows(2) {
            assert!((w[1] - w[0] - 50.0).abs() < 1e-3);
        }
        assert!(detect_spikes_in(&t, &vec![-60.0; t.len()], 0.0).is_empty());
    }

    #[test]
    fn frequency_of_synthetic_trains() {
        let spikes: Vec<f64> = (0..200).map(|i| 3.0 + 25.0 * i as f64).collect();
        assert!((frequency_from_spikes(&spikes, 2500.0) - 40.0).abs() < 1e-9);
        assert_eq!(frequency_from_spikes(&[], 0.0), 0.0);
        assert_eq!(frequency_from_spikes(&[100.0, 2000.0], 1000.0), 0.0);
    }

    #[test]
    fn converges_to_the_stable_equilibrium() {
        let m = NeuronModel::preset(Preset::WangBuzsaki).with_i_app(0.1);
        let eq = find_equilibria(&m).unwrap();
        let target = eq[0].state.clone();
        let mut init = target.clone();
        init[0] += 1e-3;
        let tr = simulate(&m, init.as_slice(), 500.0, &SolverOptions::default()).unwrap();
        let end = tr.last_state();
        let d = end.iter().zip(target.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d <= 1e-6, "distance {d}");
    }

    #[test]
    fn regular_spiking_above_the_hopf() {
        // the slow M-current holds the rate near 2 Hz here
        let m = NeuronModel::preset(Preset::WangBuzsaki).with_g_m(3.0).with_i_app(1.2);
        let init = rest_state(&m).unwrap();
        let mut kick = init.clone();
        kick[0] = 0.0;
        let tr = simulate(&m, &kick, 6000.0, &SolverOptions::default()).unwrap();
        let spikes = detect_spikes(&tr, 0.0);
        assert!(spikes.len() >= 10, "{} spikes", spikes.len());
        let late: Vec<f64> = spikes.iter().copied().filter(|&s| s > 3000.0).collect();
        assert!(late.len() >= 4);
        assert!(isi_cv(&late) < 0.01);
    }

    #[test]
    fn rk4_agrees_with_adaptive_solver() {
        let m = NeuronModel::preset(Preset::WangBuzsaki).with_i_app(1.0);
        let mut init = rest_state(&m).unwrap();
        init[0] = 0.0;
        let a = simulate(&m, &init, 300.0, &SolverOptions::default()).unwrap();
        let b = simulate(&m, &init, 300.0, &SolverOptions::rk4(0.01)).unwrap();
        let (fa, fb) = (firing_frequency(&a), firing_frequency(&b));
        assert!(fa > 0.0 && (fa - fb).abs() / fa < 1e-3, "{fa} vs {fb}");
    }

    #[test]
    fn pure_leak_never_fires() {
        let p = Protocol {
            t_end: 200.0,
            ..Default::default()
        };
        let fi = fi_curve(&pure_leak(), &[0.0, 5.0, 10.0], &p).unwrap();
        assert!(fi.up.iter().chain(&fi.down).all(|q| !q.fired && q.frequency == 0.0));
        assert_eq!(fi.class, Excitability::Undetermined);
    }
}
