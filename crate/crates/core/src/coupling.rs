//! Two identical neurons coupled by first-order synapses, and the phase
//! shift of their locked firing.
//!
//! Neuron `i` receives `-g_syn s_j (V_i - V_syn)`; its own synaptic variable
//! follows `ds_i/dt = a_e0 a_e(V_i)(1 - s_i) - s_i/tau_s`, i.e. `s_i` is
//! driven by the presynaptic voltage `V_i`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::SpikeDetector;
use crate::error::{Error, Result};
use crate::expr::KineticExpr;
use crate::model::{GatingFn, NeuronModel};
use crate::ode::{integrate_with, OdeSystem, SolverOptions};

/// Width of a phase cluster and of the in-phase / anti-phase bands (rad).
pub const CLUSTER_TOL: f64 = 0.15;
/// Largest relative period mismatch accepted as locking.
pub const LOCK_TOL: f64 = 0.01;
/// Spike-time offsets are taken over at most this many final cycles.
const PHASE_CYCLES: usize = 20;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynapseSpec {
    pub g_syn: f64,
    pub v_syn: f64,
    pub a_e0: f64,
    pub tau_s: f64,
    #[serde(with = "activation")]
    pub activation: GatingFn,
}

mod activation {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::expr::KineticExpr;
    use crate::model::GatingFn;

    pub fn serialize<S: Serializer>(f: &GatingFn, s: S) -> Result<S::Ok, S::Error> {
        f.expr().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<GatingFn, D::Error> {
        KineticExpr::deserialize(d).map(GatingFn::new)
    }
}

impl SynapseSpec {
    pub fn new(g_syn: f64, v_syn: f64, a_e0: f64, tau_s: f64, activation: &str) -> Result<Self> {
        let spec = SynapseSpec {
            g_syn,
            v_syn,
            a_e0,
            tau_s,
            activation: GatingFn::new(KineticExpr::parse(activation)?),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn preset(p: SynPreset, g_syn: f64) -> Self {
        let (v_syn, a_e0, tau_s, act) = p.parameters();
        SynapseSpec::new(g_syn, v_syn, a_e0, tau_s, act).expect("builtin synapse is valid")
    }

    /// Checks the parameters, and that `a_e` stays in `[0, 2]` on
    /// `[-120, 60]` mV.
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_s > 0.0) {
            return Err(Error::config("synapse.tau_s", "must be positive"));
        }
        if !(self.g_syn >= 0.0) {
            return Err(Error::config("synapse.g_syn", "must be non-negative"));
        }
        if !self.a_e0.is_finite() || !self.v_syn.is_finite() {
            return Err(Error::config("synapse", "a_e0 and v_syn must be finite"));
        }
        for k in 0..=180 {
            let v = -120.0 + k as f64;
            let a = self.activation.value(v);
            if !(-1e-12..=2.0 + 1e-12).contains(&a) {
                return Err(Error::config(
                    "synapse.activation",
                    format!("a_e({v}) = {a} is outside [0, 2]"),
                ));
            }
        }
        Ok(())
    }
}

/// Synapses of the three example models, excitatory and inhibitory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SynPreset {
    #[serde(rename = "ex1-exc")]
    Ex1Exc,
    #[serde(rename = "ex1-inh")]
    Ex1Inh,
    #[serde(rename = "ex2-exc")]
    Ex2Exc,
    #[serde(rename = "ex2-inh")]
    Ex2Inh,
    #[serde(rename = "ex3-exc")]
    Ex3Exc,
    #[serde(rename = "ex3-inh")]
    Ex3Inh,
}

impl SynPreset {
    pub const ALL: [SynPreset; 6] = [
        SynPreset::Ex1Exc,
        SynPreset::Ex1Inh,
        SynPreset::Ex2Exc,
        SynPreset::Ex2Inh,
        SynPreset::Ex3Exc,
        SynPreset::Ex3Inh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynPreset::Ex1Exc => "ex1-exc",
            SynPreset::Ex1Inh => "ex1-inh",
            SynPreset::Ex2Exc => "ex2-exc",
            SynPreset::Ex2Inh => "ex2-inh",
            SynPreset::Ex3Exc => "ex3-exc",
            SynPreset::Ex3Inh => "ex3-inh",
        }
    }

    /// `(V_syn, a_e0, tau_s, a_e(V))`.
    fn parameters(self) -> (f64, f64, f64, &'static str) {
        const SIG2: &str = "1/(1+exp(-V/2))";
        const SIG5: &str = "1/(1+exp(-V/5))";
        const TANH4: &str = "1+tanh(V/4)";
        match self {
            SynPreset::Ex1Exc => (0.0, 6.25, 5.0, SIG2),
            SynPreset::Ex1Inh => (-75.0, 6.25, 5.0, SIG2),
            SynPreset::Ex2Exc => (0.0, 4.0, 8.0, SIG5),
            SynPreset::Ex2Inh => (-80.0, 4.0, 8.0, SIG5),
            SynPreset::Ex3Exc => (0.0, 5.0, 2.0, TANH4),
            SynPreset::Ex3Inh => (-80.0, 2.0, 10.0, TANH4),
        }
    }
}

impl fmt::Display for SynPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SynPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("syn-preset", format!("unknown synapse preset `{s}`")))
    }
}

/// Two copies of a neuron with reciprocal synapses. State layout:
/// `(neuron 1, neuron 2, s_1, s_2)`.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    pub neuron: NeuronModel,
    pub synapse: SynapseSpec,
}

pub fn build_pair(m: &NeuronModel, syn: &SynapseSpec) -> CoupledPair {
    CoupledPair {
        neuron: m.clone(),
        synapse: syn.clone(),
    }
}

impl OdeSystem for CoupledPair {
    fn dim(&self) -> usize {
        2 * self.neuron.dim() + 2
    }

    fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.neuron.dim();
        let syn = &self.synapse;
        let (s1, s2) = (y[2 * n], y[2 * n + 1]);
        let (v1, v2) = (y[0], y[n]);
        let (x1, x2) = y.split_at(n);
        let (d1, rest) = dy.split_at_mut(n);
        let (d2, ds) = rest.split_at_mut(n);
        self.neuron
            .derivative_with_input(x1, -syn.g_syn * s2 * (v1 - syn.v_syn), d1);
        self.neuron
            .derivative_with_input(&x2[..n], -syn.g_syn * s1 * (v2 - syn.v_syn), d2);
        let rate = |v: f64, s: f64| syn.a_e0 * syn.activation.value(v) * (1.0 - s) - s / syn.tau_s;
        ds[0] = rate(v1, s1);
        ds[1] = rate(v2, s2);
    }
}

impl CoupledPair {
    /// Both neurons on their gate manifolds at `v1` and `v2`, synapses closed.
    pub fn initial_state(&self, v1: f64, v2: f64) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.dim());
        y.extend(self.neuron.steady_state(v1).iter());
        y.extend(self.neuron.steady_state(v2).iter());
        y.extend([0.0, 0.0]);
        y
    }

    /// Integrates for `t_end` ms and returns the spike times of both neurons.
    pub fn spike_trains(
        &self,
        init: &[f64],
        t_end: f64,
        threshold: f64,
        opts: &SolverOptions,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.neuron.dim();
        let mut a = SpikeDetector::new(threshold);
        let mut b = SpikeDetector::new(threshold);
        integrate_with(self, init, t_end, opts, |t, y| {
            a.push(t, y[0]);
            b.push(t, y[n]);
        })?;
        Ok((a.spikes, b.spikes))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseShift {
    /// Phase of neuron 2 behind neuron 1, in `[0, 2 pi)`.
    pub phi: f64,
    pub t1: f64,
    pub t2: f64,
}

/// Phase shift from two spike trains, using spikes after `t_from`.
///
/// The periods are mean inter-spike intervals; the phase is the median,
/// over the last cycles of neuron 1, of the delay to the next spike of
/// neuron 2 as a fraction of the mean period.
pub fn phase_shift(spikes1: &[f64], spikes2: &[f64], t_from: f64) -> Result<PhaseShift> {
    let late = |s: &[f64]| -> Vec<f64> { s.iter().copied().filter(|&t| t >= t_from).collect() };
    let (a, b) = (late(spikes1), late(spikes2));
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::NotFiring);
    }
    let period = |s: &[f64]| (s[s.len() - 1] - s[0]) / (s.len() - 1) as f64;
    let (t1, t2) = (period(&a), period(&b));
    let mean = 0.5 * (t1 + t2);
    if (t1 - t2).abs() / mean > LOCK_TOL {
        return Err(Error::NotLocked { t1, t2 });
    }
    let angles: Vec<f64> = a[a.len().saturating_sub(PHASE_CYCLES)..]
        .iter()
        .filter_map(|&t| {
            let k = b.partition_point(|&u| u < t);
            b.get(k).map(|&u| {
                let r = (u - t) / mean;
                TAU * (r - r.floor())
            })
        })
        .collect();
    if angles.is_empty() {
        return Err(Error::NotFiring);
    }
    // median of the deviations from the circular mean, so that lags
    // straddling a whole period do not split the estimate
    let (sin, cos) = angles
        .iter()
        .fold((0.0, 0.0), |(s, c), x| (s + x.sin(), c + x.cos()));
    let centre = sin.atan2(cos);
    let mut dev: Vec<f64> = angles
        .iter()
        .map(|&x| (x - centre + PI).rem_euclid(TAU) - PI)
        .collect();
    dev.sort_by(f64::total_cmp);
    let k = dev.len();
    let median = if k % 2 == 1 {
        dev[k / 2]
    } else {
        0.5 * (dev[k / 2 - 1] + dev[k / 2])
    };
    let phi = (centre + median).rem_euclid(TAU);
    Ok(PhaseShift { phi, t1, t2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Locking {
    InPhase,
    AntiPhase,
    OutOfPhase,
    NonLocking,
}

impl Locking {
    pub fn of_phase(phi: f64) -> Self {
        let phi = phi.rem_euclid(TAU);
        if !(CLUSTER_TOL..=TAU - CLUSTER_TOL).contains(&phi) {
            Locking::InPhase
        } else if (phi - PI).abs() < CLUSTER_TOL {
            Locking::AntiPhase
        } else {
            Locking::OutOfPhase
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Locking::InPhase => "in-phase",
            Locking::AntiPhase => "anti-phase",
            Locking::OutOfPhase => "out-of-phase",
            Locking::NonLocking => "non-locking",
        }
    }
}

/// Circular distance between two phases.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseCluster {
    /// Circular mean of the member phases.
    pub phi: f64,
    pub count: usize,
    pub class: Locking,
}

/// Groups phases whose neighbours lie within [`CLUSTER_TOL`] on the circle.
pub fn cluster_phases(phases: &[f64]) -> Vec<PhaseCluster> {
    let mut p: Vec<f64> = phases.iter().map(|x| x.rem_euclid(TAU)).collect();
    if p.is_empty() {
        return Vec::new();
    }
    p.sort_by(f64::total_cmp);
    let mut groups: Vec<Vec<f64>> = vec![vec![p[0]]];
    for w in p.windows(2) {
        if w[1] - w[0] > CLUSTER_TOL {
            groups.push(Vec::new());
        }
        groups.last_mut().unwrap().push(w[1]);
    }
    if groups.len() > 1 && p[0] + TAU - p[p.len() - 1] <= CLUSTER_TOL {
        let last = groups.pop().unwrap();
        groups[0].extend(last);
    }
    groups
        .into_iter()
        .map(|g| {
            let (s, c) = g.iter().fold((0.0, 0.0), |(s, c), x| (s + x.sin(), c + x.cos()));
            let phi = s.atan2(c).rem_euclid(TAU);
            PhaseCluster {
                phi,
                count: g.len(),
                class: Locking::of_phase(phi),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncOptions {
    pub i_app: f64,
    /// Simulated time per trial (ms); phases use the final fifth.
    pub t_end: f64,
    pub trials: usize,
    pub seed: u64,
    pub threshold: f64,
    pub solver: SolverOptions,
}

impl Default for SyncOptions {
    fn default() -> Self {
        SyncOptions {
            i_app: 1.5,
            t_end: 5000.0,
            trials: 10,
            seed: 1,
            threshold: 0.0,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trial {
    pub trial: usize,
    pub v1: f64,
    pub v2: f64,
    pub phi: Option<f64>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub class: Locking,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncResult {
    pub g_m: f64,
    pub trials: Vec<Trial>,
    pub clusters: Vec<PhaseCluster>,
    /// Class of the cluster that attracted most trials.
    pub class: Locking,
}

impl SyncResult {
    pub fn has(&self, class: Locking) -> bool {
        self.clusters.iter().any(|c| c.class == class)
    }

    /// True if some cluster lies within `tol` of `phi`.
    pub fn has_near(&self, phi: f64, tol: f64) -> bool {
        self.clusters.iter().any(|c| phase_distance(c.phi, phi) < tol)
    }
}

/// Random generator of one trial: a ChaCha stream per `(g_M index, trial)`.
pub fn trial_rng(seed: u64, gm_index: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((gm_index as u64) << 32) | trial as u64);
    rng
}

fn run_trial(pair: &CoupledPair, trial: usize, mut rng: ChaCha8Rng, o: &SyncOptions) -> Trial {
    let v1 = rng.gen_range(-80.0..-50.0);
    let v2 = rng.gen_range(-80.0..-50.0);
    let res = pair
        .spike_trains(&pair.initial_state(v1, v2), o.t_end, o.threshold, &o.solver)
        .and_then(|(a, b)| phase_shift(&a, &b, 0.8 * o.t_end));
    match res {
        Ok(p) => Trial {
            trial,
            v1,
            v2,
            phi: Some(p.phi),
            t1: Some(p.t1),
            t2: Some(p.t2),
            class: Locking::of_phase(p.phi),
            failure: None,
        },
        Err(e) => {
            let (t1, t2) = match e {
                Error::NotLocked { t1, t2 } => (Some(t1), Some(t2)),
                _ => (None, None),
            };
            Trial {
                trial,
                v1,
                v2,
                phi: None,
                t1,
                t2,
                class: Locking::NonLocking,
                failure: Some(e.to_string()),
            }
        }
    }
}

/// Phase-locked states of the pair over a `g_M` grid, from `trials` random
/// initial voltages per grid point.
pub fn sync_sweep(
    m: &NeuronModel,
    syn: &SynapseSpec,
    gm_grid: &[f64],
    o: &SyncOptions,
) -> Vec<SyncResult> {
    let jobs: Vec<(usize, usize)> = (0..gm_grid.len())
        .flat_map(|g| (0..o.trials).map(move |t| (g, t)))
        .collect();
    let trials: Vec<Trial> = jobs
        .par_iter()
        .map(|&(g, t)| {
            let pair = build_pair(&m.with_g_m(gm_grid[g]).with_i_app(o.i_app), syn);
            run_trial(&pair, t, trial_rng(o.seed, g, t), o)
        })
        .collect();
    let mut it = trials.into_iter();
    gm_grid
        .iter()
        .map(|&g_m| {
            let trials: Vec<Trial> = it.by_ref().take(o.trials).collect();
            let phases: Vec<f64> = trials.iter().filter_map(|t| t.phi).collect();
            let clusters = cluster_phases(&phases);
            let class = clusters
                .iter()
                .fold(None::<&PhaseCluster>, |best, c| match best {
                    Some(b) if b.count >= c.count => Some(b),
                    _ => Some(c),
                })
                .map_or(Locking::NonLocking, |c| c.class);
            SyncResult {
                g_m,
                trials,
                clusters,
                class,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate;
    use crate::model::Preset;

    fn wb() -> NeuronModel {
        NeuronModel::preset(Preset::WangBuzsaki).with_g_m(0.0).with_i_app(1.0)
    }

    #[test]
    fn decoupled_pair_matches_single_neuron() {
        let m = wb();
        let pair = build_pair(&m, &SynapseSpec::preset(SynPreset::Ex1Exc, 0.0));
        let init = pair.initial_state(-70.0, -55.0);
        let n = m.dim();
        for opts in [
            SolverOptions::rk4(0.01),
            SolverOptions {
                atol: 1e-12,
                rtol: 1e-12,
                ..Default::default()
            },
        ] {
            let both = crate::ode::integrate(&pair, &init, 200.0, &opts).unwrap();
            for (k, start) in [(0, &init[..n]), (n, &init[n..2 * n])] {
                let one = simulate(&m, start, 200.0, &opts).unwrap();
                assert_eq!(one.len(), both.len());
                for i in 0..one.len() {
                    for c in 0..n {
                        let d = (one.state(i)[c] - both.state(i)[k + c]).abs();
                        assert!(d <= 1e-8, "component {c} differs by {d}");
                    }
                }
            }
        }
    }

    #[test]
    fn synapse_presets() {
        let s = SynapseSpec::preset(SynPreset::Ex1Exc, 0.1);
        assert_eq!((s.a_e0, s.tau_s, s.v_syn), (6.25, 5.0, 0.0));
        assert!((s.activation.value(0.0) - 0.5).abs() < 1e-15);
        assert!((s.activation.value(-4.0) - 1.0 / (1.0 + 2f64.exp())).abs() < 1e-15);
        let s = SynapseSpec::preset(SynPreset::Ex3Exc, 0.1);
        assert_eq!((s.a_e0, s.tau_s, s.v_syn), (5.0, 2.0, 0.0));
        assert!((s.activation.value(4.0) - (1.0 + 1f64.tanh())).abs() < 1e-15);
        assert_eq!(SynapseSpec::preset(SynPreset::Ex1Inh, 0.0).v_syn, -75.0);
        assert_eq!(SynapseSpec::preset(SynPreset::Ex3Inh, 0.0).tau_s, 10.0);
        for p in SynPreset::ALL {
            assert_eq!(p.name().parse::<SynPreset>().unwrap(), p);
        }
        assert!("ex9".parse::<SynPreset>().is_err());
        assert!(SynapseSpec::new(0.1, 0.0, 1.0, 0.0, "1").is_err());
        assert!(SynapseSpec::new(0.1, 0.0, 1.0, 1.0, "3").is_err());
    }

    #[test]
    fn synthetic_phase_shifts() {
        let a: Vec<f64> = (0..40).map(|k| 10.0 + 25.0 * k as f64).collect();
        let b: Vec<f64> = a.iter().map(|t| t + 12.5).collect();
        let p = phase_shift(&a, &b, 0.0).unwrap();
        assert!((p.phi - PI).abs() < 1e-12);
        assert!(phase_shift(&a, &a, 0.0).unwrap().phi == 0.0);
        let c: Vec<f64> = a.iter().map(|t| t + 20.0).collect();
        let p = phase_shift(&a, &c, 0.0).unwrap();
        assert!((p.phi - TAU * 0.8).abs() < 1e-12);
        let slow: Vec<f64> = (0..30).map(|k| 10.0 + 30.0 * k as f64).collect();
        assert!(matches!(phase_shift(&a, &slow, 0.0), Err(Error::NotLocked { .. })));
        assert!(matches!(phase_shift(&a, &[5.0], 0.0), Err(Error::NotFiring)));
    }

    #[test]
    fn identical_neurons_stay_in_phase() {
        let m = wb();
        let pair = build_pair(&m, &SynapseSpec::preset(SynPreset::Ex1Exc, 0.1));
        let init = pair.initial_state(-65.0, -65.0);
        let (a, b) = pair
            .spike_trains(&init, 1000.0, 0.0, &SolverOptions::default())
            .unwrap();
        assert!(a.len() > 10);
        assert_eq!(a, b);
        assert_eq!(phase_shift(&a, &b, 500.0).unwrap().phi, 0.0);
    }

    #[test]
    fn clustering_wraps_around() {
        let c = cluster_phases(&[0.05, TAU - 0.05, 3.1, 3.2, 2.0]);
        assert_eq!(c.len(), 3);
        let inphase = c.iter().find(|c| c.class == Locking::InPhase).unwrap();
        assert_eq!(inphase.count, 2);
        assert!(phase_distance(inphase.phi, 0.0) < 1e-12);
        assert_eq!(c.iter().map(|c| c.count).sum::<usize>(), 5);
        assert_eq!(Locking::of_phase(2.0), Locking::OutOfPhase);
        assert_eq!(Locking::of_phase(PI + 0.1), Locking::AntiPhase);
        assert!(cluster_phases(&[]).is_empty());
    }

    #[test]
    fn trial_streams_are_reproducible() {
        let a: f64 = trial_rng(7, 2, 3).gen();
        let b: f64 = trial_rng(7, 2, 3).gen();
        let c: f64 = trial_rng(7, 3, 2).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
