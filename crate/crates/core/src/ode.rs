//! Explicit Runge-Kutta integration: adaptive Dormand-Prince 5(4) with
//! continuous output, and fixed-step classical RK4 for cross-checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Dopri5,
    Rk4 { step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub atol: f64,
    pub rtol: f64,
    /// Output sampling step (ms).
    pub sample_dt: f64,
    pub method: Method,
    pub max_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            atol: 1e-8,
            rtol: 1e-6,
            sample_dt: 0.05,
            method: Method::Dopri5,
            max_steps: 50_000_000,
        }
    }
}

impl SolverOptions {
    pub fn rk4(step: f64) -> Self {
        SolverOptions {
            method: Method::Rk4 { step },
            ..Default::default()
        }
    }

    /// Same options with both tolerances multiplied by `factor`.
    pub fn scaled_tolerances(self, factor: f64) -> Self {
        SolverOptions {
            atol: self.atol * factor,
            rtol: self.rtol * factor,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SolverStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Sampled trajectory; `states` holds `dim` values per time point.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub dim: usize,
    pub t: Vec<f64>,
    pub states: Vec<f64>,
    pub stats: SolverStats,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Time series of component `k`.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.states.iter().skip(k).step_by(self.dim).copied().collect()
    }
}

/// Integrates from `t = 0` to `t_end`, calling `observe(t, y)` at every
/// multiple of `sample_dt` (including both ends).
pub fn integrate_with(
    sys: &impl OdeSystem,
    y0: &[f64],
    t_end: f64,
    opts: &SolverOptions,
    mut observe: impl FnMut(f64, &[f64]),
) -> Result<SolverStats> {
    if !(t_end > 0.0) {
        return Err(Error::config("t_end", "must be positive"));
    }
    if !(opts.sample_dt > 0.0) {
        return Err(Error::config("sample_dt", "must be positive"));
    }
    if y0.len() != sys.dim() {
        return Err(Error::config("init", format!("expected {} components", sys.dim())));
    }
    match opts.method {
        Method::Dopri5 => dopri5(sys, y0, t_end, opts, &mut observe),
        Method::Rk4 { step } => rk4(sys, y0, t_end, step, opts.sample_dt, &mut observe),
    }
}

/// Integrates and stores every sample.
pub fn integrate(sys: &impl OdeSystem, y0: &[f64], t_end: f64, opts: &SolverOptions) -> Result<Trace> {
    let n_samples = (t_end / opts.sample_dt).ceil() as usize + 1;
    let mut t = Vec::with_capacity(n_samples);
    let mut states = Vec::with_capacity(n_samples * y0.len());
    let stats = integrate_with(sys, y0, t_end, opts, |ti, y| {
        t.push(ti);
        states.extend_from_slice(y);
    })?;
    Ok(Trace {
        dim: y0.len(),
        t,
        states,
        stats,
    })
}

fn sample_count(t_end: f64, dt: f64) -> usize {
    // Tolerate rounding so that t_end itself is a sample when it is a multiple of dt.
    ((t_end / dt) * (1.0 + 1e-12)).floor() as usize
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn dopri5(
    sys: &impl OdeSystem,
    y0: &[f64],
    t_end: f64,
    opts: &SolverOptions,
    observe: &mut impl FnMut(f64, &[f64]),
) -> Result<SolverStats> {
    let n = y0.len();
    let mut stats = SolverStats::default();
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    let mut y_stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut cont = vec![vec![0.0; n]; 5];
    let mut sample = vec![0.0; n];

    let n_samples = sample_count(t_end, opts.sample_dt);
    let mut next_sample = 0usize;
    let mut emit_until = |t_hi: f64, cont: &[Vec<f64>], t0: f64, h: f64, sample: &mut [f64]| {
        while next_sample <= n_samples {
            let ts = next_sample as f64 * opts.sample_dt;
            if ts > t_hi + 1e-12 * t_hi.max(1.0) {
                break;
            }
            let th = if h > 0.0 { ((ts - t0) / h).clamp(0.0, 1.0) } else { 0.0 };
            let th1 = 1.0 - th;
            for i in 0..n {
                sample[i] = cont[0][i]
                    + th * (cont[1][i] + th1 * (cont[2][i] + th * (cont[3][i] + th1 * cont[4][i])));
            }
            observe(ts, sample);
            next_sample += 1;
        }
    };

    let mut t = 0.0;
    sys.eval(t, &y, &mut k[0]);
    stats.evaluations += 1;
    // Emit the initial point.
    cont[0].copy_from_slice(&y);
    for c in cont.iter_mut().skip(1) {
        c.fill(0.0);
    }
    emit_until(0.0, &cont, 0.0, 0.0, &mut sample);

    let mut h = initial_step(sys, &y, &k[0], opts, &mut stats).min(t_end);
    let mut err_prev: f64 = 1e-4;
    while t < t_end {
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(Error::StepSizeUnderflow { t });
        }
        if h < 1e-12 * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        let stage = |coef: &[(usize, f64)], out: &mut [f64], k: &[Vec<f64>]| {
            for i in 0..n {
                let mut acc = 0.0;
                for &(j, a) in coef {
                    acc += a * k[j][i];
                }
                out[i] = y[i] + h * acc;
            }
        };
        stage(&[(0, A21)], &mut y_stage, &k);
        sys.eval(t + C2 * h, &y_stage, &mut k[1]);
        stage(&[(0, A31), (1, A32)], &mut y_stage, &k);
        sys.eval(t + C3 * h, &y_stage, &mut k[2]);
        stage(&[(0, A41), (1, A42), (2, A43)], &mut y_stage, &k);
        sys.eval(t + C4 * h, &y_stage, &mut k[3]);
        stage(&[(0, A51), (1, A52), (2, A53), (3, A54)], &mut y_stage, &k);
        sys.eval(t + C5 * h, &y_stage, &mut k[4]);
        stage(&[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], &mut y_stage, &k);
        sys.eval(t + h, &y_stage, &mut k[5]);
        stage(&[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)], &mut y_new, &k);
        sys.eval(t + h, &y_new, &mut k[6]);
        stats.evaluations += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                    + E7 * k[6][i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.2;
            continue;
        }

        if err <= 1.0 {
            // Continuous extension on [t, t + h].
            for i in 0..n {
                let dy = y_new[i] - y[i];
                let bspl = h * k[0][i] - dy;
                cont[0][i] = y[i];
                cont[1][i] = dy;
                cont[2][i] = bspl;
                cont[3][i] = dy - h * k[6][i] - bspl;
                cont[4][i] = h
                    * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i]
                        + D7 * k[6][i]);
            }
            let t_new = if last { t_end } else { t + h };
            emit_until(t_new, &cont, t, h, &mut sample);
            stats.steps += 1;
            t = t_new;
            y.copy_from_slice(&y_new);
            let (k0, rest) = k.split_at_mut(1);
            k0[0].copy_from_slice(&rest[5]);
            // PI step-size control.
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            h *= fac.clamp(0.2, 10.0);
            err_prev = err.max(1e-4);
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
    Ok(stats)
}

fn initial_step(
    sys: &impl OdeSystem,
    y: &[f64],
    f0: &[f64],
    opts: &SolverOptions,
    stats: &mut SolverStats,
) -> f64 {
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let norm = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; n];
    sys.eval(h0, &y1, &mut f1);
    stats.evaluations += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

fn rk4(
    sys: &impl OdeSystem,
    y0: &[f64],
    t_end: f64,
    step: f64,
    sample_dt: f64,
    observe: &mut impl FnMut(f64, &[f64]),
) -> Result<SolverStats> {
    if !(step > 0.0) {
        return Err(Error::config("step", "must be positive"));
    }
    let n = y0.len();
    let per_sample = (sample_dt / step).round().max(1.0) as usize;
    let h = sample_dt / per_sample as f64;
    let n_samples = sample_count(t_end, sample_dt);
    let mut y = y0.to_vec();
    let mut tmp = vec![0.0; n];
    let mut k = vec![vec![0.0; n]; 4];
    let mut stats = SolverStats::default();
    observe(0.0, &y);
    for s in 0..n_samples {
        for j in 0..per_sample {
            let t = (s * per_sample + j) as f64 * h;
            sys.eval(t, &y, &mut k[0]);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k[0][i];
            }
            sys.eval(t + 0.5 * h, &tmp, &mut k[1]);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k[1][i];
            }
            sys.eval(t + 0.5 * h, &tmp, &mut k[2]);
            for i in 0..n {
                tmp[i] = y[i] + h * k[2][i];
            }
            sys.eval(t + h, &tmp, &mut k[3]);
            for i in 0..n {
                y[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
            }
            stats.steps += 1;
            stats.evaluations += 4;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepSizeUnderflow {
                t: (s + 1) as f64 * sample_dt,
            });
        }
        observe((s + 1) as f64 * sample_dt, &y);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(f64);
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = -self.0 * y[0];
        }
    }

    struct Oscillator;
    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    #[test]
    fn exponential_decay() {
        let tr = integrate(&Decay(0.1), &[10.0], 50.0, &SolverOptions::default()).unwrap();
        assert_eq!(tr.len(), 1001);
        assert!((tr.t[1000] - 50.0).abs() < 1e-12);
        for (i, &t) in tr.t.iter().enumerate() {
            let exact = 10.0 * (-0.1 * t).exp();
            assert!((tr.state(i)[0] - exact).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn dense_output_between_steps() {
        let opts = SolverOptions {
            sample_dt: 0.01,
            ..Default::default()
        };
        let tr = integrate(&Oscillator, &[1.0, 0.0], 20.0, &opts).unwrap();
        assert!(tr.stats.steps < tr.len() / 2, "steps {}", tr.stats.steps);
        for (i, &t) in tr.t.iter().enumerate() {
            assert!((tr.state(i)[0] - t.cos()).abs() < 1e-5);
        }
    }

    #[test]
    fn rk4_matches_dopri5() {
        let a = integrate(&Oscillator, &[1.0, 0.0], 10.0, &SolverOptions::default()).unwrap();
        let b = integrate(&Oscillator, &[1.0, 0.0], 10.0, &SolverOptions::rk4(0.01)).unwrap();
        assert_eq!(a.t.len(), b.t.len());
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(integrate(&Decay(1.0), &[1.0], 0.0, &SolverOptions::default()).is_err());
        assert!(integrate(&Decay(1.0), &[1.0, 2.0], 1.0, &SolverOptions::default()).is_err());
    }

    #[test]
    fn stiff_blowup_is_reported() {
        struct Blowup;
        impl OdeSystem for Blowup {
            fn dim(&self) -> usize {
                1
            }
            fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
                dy[0] = y[0] * y[0];
            }
        }
        let r = integrate(&Blowup, &[1.0], 2.0, &SolverOptions::default());
        assert!(matches!(r, Err(Error::StepSizeUnderflow { t }) if (t - 1.0).abs() < 1e-3));
    }
}
