//! Simulation-level behaviour: excitability, solver convergence, F/g_M and
//! phase locking.

use std::f64::consts::{PI, TAU};

use mcurrent::coupling::{
    build_pair, cluster_phases, phase_distance, phase_shift, sync_sweep, SynPreset, SynapseSpec,
    SyncOptions,
};
use mcurrent::dynamics::{f_gm_curve, fi_curve, fi_grid, run_step, rest_state, Excitability, Protocol};
use mcurrent::ode::SolverOptions;
use mcurrent::{NeuronModel, Preset};

fn wb() -> NeuronModel {
    NeuronModel::preset(Preset::WangBuzsaki)
}

#[test]
fn slow_firing_just_above_the_saddle_node() {
    let m = wb().with_g_m(0.0).with_i_app(0.161);
    let mut init = rest_state(&wb().with_g_m(0.0).with_i_app(0.159)).unwrap();
    init[0] = 0.0;
    let p = Protocol {
        t_end: 6000.0,
        ..Default::default()
    };
    let (f, _) = run_step(&m, &init, &p).unwrap();
    assert!(f > 0.0 && f < 5.0, "{f} Hz");
}

#[test]
fn class_one_without_m_current() {
    let m = wb().with_g_m(0.0);
    let fi = fi_curve(&m, &fi_grid(&m, 11).unwrap(), &Protocol::default()).unwrap();
    assert_eq!(fi.class, Excitability::ClassI);
    let onset = fi.onset_current.unwrap();
    assert!((onset - 0.16).abs() < 0.01, "onset {onset}");
    // frequency increases with current above onset
    let firing: Vec<f64> = fi.up.iter().filter(|q| q.fired).map(|q| q.frequency).collect();
    assert!(firing.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn hysteresis_with_strong_m_current() {
    let m = wb().with_g_m(3.0);
    let fi = fi_curve(&m, &fi_grid(&m, 11).unwrap(), &Protocol::default()).unwrap();
    let (lo, hi) = fi.bistable_window().expect("up and down sweeps disagree");
    assert!(lo < hi && hi < 1.1416 + 0.01);
    assert!(fi.offset_current.unwrap() <= fi.onset_current.unwrap());
    // firing starts at a finite rate set by the slow M-current
    assert!(fi.onset_frequency.unwrap() > 1.0);
}

#[test]
fn frequencies_converge_with_solver_tolerance() {
    let m = wb().with_g_m(1.0).with_i_app(3.0);
    let mut init = rest_state(&m).unwrap();
    init[0] = 0.0;
    let base = Protocol::default();
    let (f0, _) = run_step(&m, &init, &base).unwrap();
    for (atol, rtol, tol) in [(5e-9, 5e-7, 5e-3), (1e-9, 1e-7, 1e-2)] {
        let p = Protocol {
            solver: SolverOptions {
                atol,
                rtol,
                ..Default::default()
            },
            ..base
        };
        let (f, _) = run_step(&m, &init, &p).unwrap();
        assert!((f - f0).abs() / f0 < tol, "{f} vs {f0}");
    }
}

#[test]
fn f_gm_flags_silent_points() {
    let m = NeuronModel::preset(Preset::Stiefel);
    let c = f_gm_curve(&m, 0.1, &[0.0, 1.0, 2.0], &Protocol::default()).unwrap();
    assert!(c.points[0].fired);
    assert!(!c.points[2].fired && c.points[2].frequency == 0.0);
    assert!(!c.monotone_decreasing);
}

#[test]
fn exchange_symmetry_of_the_pair() {
    let m = wb().with_g_m(0.25).with_i_app(6.0);
    let pair = build_pair(&m, &SynapseSpec::preset(SynPreset::Ex1Exc, 0.1));
    let opts = SolverOptions::default();
    let (a, b) = pair
        .spike_trains(&pair.initial_state(-70.0, -55.0), 3000.0, 0.0, &opts)
        .unwrap();
    let (b2, a2) = pair
        .spike_trains(&pair.initial_state(-55.0, -70.0), 3000.0, 0.0, &opts)
        .unwrap();
    let close = |x: &[f64], y: &[f64]| {
        x.len() == y.len() && x.iter().zip(y).all(|(p, q)| (p - q).abs() < 1e-3)
    };
    assert!(close(&a, &a2) && close(&b, &b2));
    let phi = phase_shift(&a, &b, 2400.0).unwrap().phi;
    let swapped = phase_shift(&b, &a, 2400.0).unwrap().phi;
    assert!(phase_distance(phi, TAU - swapped) < 0.05, "{phi} {swapped}");
    assert!(phase_distance(phi, PI) < 0.15, "{phi}");
}

#[test]
fn phase_is_stable_under_longer_runs() {
    let m = wb().with_g_m(0.25).with_i_app(6.0);
    let pair = build_pair(&m, &SynapseSpec::preset(SynPreset::Ex1Exc, 0.1));
    let init = pair.initial_state(-62.0, -75.0);
    let opts = SolverOptions::default();
    let phi = |t: f64| {
        let (a, b) = pair.spike_trains(&init, t, 0.0, &opts).unwrap();
        phase_shift(&a, &b, 0.8 * t).unwrap().phi
    };
    assert!(phase_distance(phi(5000.0), phi(10000.0)) < 0.05);
}

#[test]
fn sweeps_are_deterministic_and_uncoupled_cells_do_not_lock() {
    let m = wb();
    let o = SyncOptions {
        i_app: 6.0,
        t_end: 2000.0,
        trials: 3,
        seed: 11,
        ..Default::default()
    };
    let syn = SynapseSpec::preset(SynPreset::Ex1Inh, 0.1);
    let a = sync_sweep(&m, &syn, &[0.0], &o);
    let b = sync_sweep(&m, &syn, &[0.0], &o);
    assert_eq!(a, b);

    let free = SynapseSpec::preset(SynPreset::Ex1Exc, 0.0);
    let r = sync_sweep(&m, &free, &[0.0], &o);
    let phases: Vec<f64> = r[0].trials.iter().filter_map(|t| t.phi).collect();
    assert_eq!(phases.len(), 3);
    // each phase is fixed by its initial condition, so the trials scatter
    assert_eq!(cluster_phases(&phases).len(), 3);
}
