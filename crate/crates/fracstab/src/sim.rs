//! Fixed-step time integration of a closed-loop system with on-line Caputo
//! history, divergence/convergence classification, and comparison of the
//! observed norm track against a certificate's decay envelope.
//!
//! The scheme is Heun's predictor-corrector: predict with explicit Euler,
//! evaluate the right-hand side at the predicted endpoint, average. The
//! Caputo estimates fed to d-variables are frozen over each step: both
//! stages see the L1 derivative of the *accepted* history at the step's
//! start, and the history gains the corrected state afterwards. Systems
//! whose gain never reads a d-variable skip history bookkeeping entirely.
//!
//! Recording is strided: row i sits at t = i * dt * record_stride, computed
//! from the integer index so the grid carries no accumulation drift. Two
//! rows may fall off that grid, and only these two: the final state when the
//! stride does not divide the step count, and the first state whose norm
//! exceeds the divergence cap (the trajectory truncates there). The k1/k2
//! tracks are L1 Caputo derivatives of the recorded states on the recorded
//! grid, built with the same summation as [`fracderiv::caputo_l1_track`];
//! off-grid tail rows reuse the uniform-grid weights as an approximation.

use thiserror::Error;

use crate::model::{ClosedLoopSystem, ModelError, SimBlock};
use crate::stability::{self, StabilityCertificate, Verdict};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bad simulation config: {what}")]
    Config { what: String },
    #[error("right-hand side failed at step {index}, t = {t}: {source}")]
    Step {
        index: usize,
        t: f64,
        source: ModelError,
        /// Rows recorded before the failure, so callers can keep partial
        /// output.
        partial: Box<Trajectory>,
    },
}

/// Grid and stopping parameters for one integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt: f64,
    pub divergence_cap: f64,
    pub record_stride: usize,
}

impl SimConfig {
    /// Defaults: divergence cap 1e6, every step recorded.
    pub fn new(t_end: f64, dt: f64) -> Self {
        SimConfig {
            t_end,
            dt,
            divergence_cap: 1e6,
            record_stride: 1,
        }
    }

    /// Step count after validation. The grid is i * dt for i = 0..=steps
    /// with steps = round(t_end / dt), so a t_end that is not a multiple of
    /// dt lands on the nearest grid point.
    fn validated_steps(&self) -> Result<usize, SimError> {
        let bad = |what: String| Err(SimError::Config { what });
        for (name, v) in [
            ("t_end", self.t_end),
            ("dt", self.dt),
            ("divergence_cap", self.divergence_cap),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.record_stride < 1 {
            return bad("record_stride must be at least 1".into());
        }
        if self.dt >= self.t_end {
            return bad(format!(
                "dt = {} must be smaller than t_end = {}",
                self.dt, self.t_end
            ));
        }
        let ratio = self.t_end / self.dt;
        if ratio > 1.0e7 {
            return bad(format!("t_end/dt = {ratio:.3e} exceeds the 1e7 step limit"));
        }
        Ok(ratio.round() as usize)
    }
}

impl From<&SimBlock> for SimConfig {
    fn from(b: &SimBlock) -> Self {
        SimConfig {
            t_end: b.t_end,
            dt: b.dt,
            divergence_cap: b.divergence_cap,
            record_stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Final norm at or below 1e-3 of the initial norm.
    Converged,
    /// Some norm exceeded the divergence cap or went nonfinite; the
    /// trajectory is truncated at the offending state.
    Diverged,
    /// Ran to t_end without meeting either threshold.
    Completed,
}

/// One recorded integration. All five track vectors share the same length;
/// norm_track[i] is the Euclidean norm of states[i], and the k-tracks start
/// at zero by the L1 convention at index 0.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub norm_track: Vec<f64>,
    pub k1_track: Vec<f64>,
    pub k2_track: Vec<f64>,
    pub outcome: Outcome,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// L1 weights and scale for one Caputo order on a fixed grid, extended
/// lazily. The weights are the same powf expressions
/// [`fracderiv::caputo_l1`] evaluates, cached once per index, and the sum
/// runs in the same order, so results are bit-identical to the batch track
/// at a fraction of the cost.
struct L1Kernel {
    e: f64,
    scale: f64,
    w: Vec<f64>,
}

impl L1Kernel {
    fn new(h: f64, alpha: f64) -> Self {
        L1Kernel {
            e: 1.0 - alpha,
            scale: h.powf(-alpha)
                / crate::specfun::gamma_fn(2.0 - alpha).expect("2 - alpha lies in (1, 2)"),
            w: Vec::new(),
        }
    }

    /// L1 Caputo estimate at index k >= 1 of the series v (len > k).
    fn derivative(&mut self, v: &[f64], k: usize) -> f64 {
        while self.w.len() < k {
            let j = self.w.len();
            self.w.push(((j + 1) as f64).powf(self.e) - (j as f64).powf(self.e));
        }
        let mut acc = 0.0;
        for j in 0..k {
            acc += self.w[j] * (v[k - j] - v[k - j - 1]);
        }
        self.scale * acc
    }
}

/// Appends recorded rows and keeps the per-component columns the k-track
/// L1 sums read from.
struct Recorder {
    k1: L1Kernel,
    k2: L1Kernel,
    cols: Vec<Vec<f64>>,
}

impl Recorder {
    fn new(h: f64, a1: f64, a2: f64, n: usize) -> Self {
        Recorder {
            k1: L1Kernel::new(h, a1),
            k2: L1Kernel::new(h, a2),
            cols: vec![Vec::new(); n],
        }
    }

    fn push(&mut self, traj: &mut Trajectory, t: f64, x: &[f64]) {
        for (col, xi) in self.cols.iter_mut().zip(x) {
            col.push(*xi);
        }
        let i = traj.times.len();
        let (k1, k2) = if i == 0 {
            (0.0, 0.0)
        } else {
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for col in &self.cols {
                let d1 = self.k1.derivative(col, i);
                let d2 = self.k2.derivative(col, i);
                s1 += d1 * d1;
                s2 += d2 * d2;
            }
            (s1.sqrt(), s2.sqrt())
        };
        traj.times.push(t);
        traj.states.push(x.to_vec());
        traj.norm_track.push(norm2(x));
        traj.k1_track.push(k1);
        traj.k2_track.push(k2);
    }
}

/// Integrates the closed loop from its spec's initial state over the
/// config's grid. Expression domain errors abort with the step index;
/// a nonfinite state classifies as diverged rather than erroring.
pub fn integrate(cls: &ClosedLoopSystem, cfg: &SimConfig) -> Result<Trajectory, SimError> {
    let steps = cfg.validated_steps()?;
    let spec = cls.base();
    let n = spec.n();
    let dt = cfg.dt;
    let with_history = spec.uses_derivative_feedback();
    if with_history && steps > 100_000 {
        return Err(SimError::Config {
            what: format!(
                "derivative feedback keeps O(N^2) history; t_end/dt = {steps} exceeds 1e5"
            ),
        });
    }
    let a1 = spec.alpha1().alpha();
    let a2 = spec.alpha2().alpha();

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        norm_track: Vec::new(),
        k1_track: Vec::new(),
        k2_track: Vec::new(),
        outcome: Outcome::Completed,
    };
    let mut rec = Recorder::new(dt * cfg.record_stride as f64, a1, a2, n);

    let mut x = spec.x0().to_vec();
    let mut hist: Vec<Vec<f64>> = if with_history {
        x.iter().map(|&xi| vec![xi]).collect()
    } else {
        Vec::new()
    };
    let mut hist_k1 = L1Kernel::new(dt, a1);
    let mut hist_k2 = L1Kernel::new(dt, a2);

    rec.push(&mut traj, 0.0, &x);
    let x0_norm = norm2(&x);
    if x0_norm > cfg.divergence_cap {
        traj.outcome = Outcome::Diverged;
        return Ok(traj);
    }

    let mut c1 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    for k in 0..steps {
        let t0 = k as f64 * dt;
        let t1 = (k + 1) as f64 * dt;
        if with_history && k >= 1 {
            for (comp, col) in hist.iter().enumerate() {
                c1[comp] = hist_k1.derivative(col, k);
                c2[comp] = hist_k2.derivative(col, k);
            }
        }
        let f0 = match cls.rhs(t0, &x, &c1, &c2) {
            Ok(v) => v,
            Err(source) => {
                return Err(SimError::Step {
                    index: k,
                    t: t0,
                    source,
                    partial: Box::new(traj),
                })
            }
        };
        let pred: Vec<f64> = x.iter().zip(&f0).map(|(xi, fi)| xi + dt * fi).collect();
        let f1 = match cls.rhs(t1, &pred, &c1, &c2) {
            Ok(v) => v,
            Err(source) => {
                return Err(SimError::Step {
                    index: k,
                    t: t1,
                    source,
                    partial: Box::new(traj),
                })
            }
        };
        for (xi, (f0i, f1i)) in x.iter_mut().zip(f0.iter().zip(&f1)) {
            *xi += 0.5 * dt * (f0i + f1i);
        }
        if with_history {
            for (comp, col) in hist.iter_mut().enumerate() {
                col.push(x[comp]);
            }
        }

        let nx = norm2(&x);
        let diverged = !nx.is_finite() || nx > cfg.divergence_cap;
        let last = k + 1 == steps;
        if diverged || last || (k + 1) % cfg.record_stride == 0 {
            rec.push(&mut traj, t1, &x);
        }
        if diverged {
            traj.outcome = Outcome::Diverged;
            return Ok(traj);
        }
    }
    let final_norm = norm2(&x);
    traj.outcome = if final_norm <= 1e-3 * x0_norm {
        Outcome::Converged
    } else {
        Outcome::Completed
    };
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvelopeCheck {
    Holds,
    ViolatedAt(f64),
}

/// Compares the recorded norms against slack * decay_envelope at each
/// recorded time, feeding the envelope the trajectory's own initial norm and
/// k-track suprema. Any non-failed certificate is accepted: an inconclusive
/// one yields a growing envelope, so containment still means something.
pub fn check_envelope(
    traj: &Trajectory,
    cert: &StabilityCertificate,
    slack: f64,
) -> EnvelopeCheck {
    assert!(slack >= 1.0, "envelope slack must be >= 1, got {slack}");
    assert!(
        cert.verdict != Verdict::Failed,
        "no envelope for a failed certificate"
    );
    let x0_norm = traj.states.first().map_or(0.0, |s| norm2(s));
    let k1 = traj.k1_track.iter().copied().fold(0.0, f64::max);
    let k2 = traj.k2_track.iter().copied().fold(0.0, f64::max);
    for (i, &t) in traj.times.iter().enumerate() {
        let bound = slack * stability::decay_envelope(cert, x0_norm, k1, k2, t);
        if traj.norm_track[i] > bound {
            return EnvelopeCheck::ViolatedAt(t);
        }
    }
    EnvelopeCheck::Holds
}

/// Max-norm difference at shared recorded times between a run at cfg.dt and
/// one at cfg.dt / 2 (stride doubled so the grids coincide). Diverged runs
/// compare over the shared prefix.
pub fn step_refinement_error(
    cls: &ClosedLoopSystem,
    cfg: &SimConfig,
) -> Result<f64, SimError> {
    let coarse = integrate(cls, cfg)?;
    let fine_cfg = SimConfig {
        dt: cfg.dt / 2.0,
        record_stride: cfg.record_stride * 2,
        ..*cfg
    };
    let fine = integrate(cls, &fine_cfg)?;
    let shared = coarse.len().min(fine.len());
    let mut err = 0.0_f64;
    for i in 0..shared {
        for (a, b) in coarse.states[i].iter().zip(&fine.states[i]) {
            err = err.max((a - b).abs());
        }
    }
    Ok(err)
}

/// CSV rendering: header t,x1,...,xn,norm,k1,k2, one row per recorded step,
/// 13 significant digits, rows in increasing t.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    use std::fmt::Write;
    let n = traj.states.first().map_or(0, |s| s.len());
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
    out.push_str(",norm,k1,k2\n");
    for i in 0..traj.len() {
        let _ = write!(out, "{:.12e}", traj.times[i]);
        for v in &traj.states[i] {
            let _ = write!(out, ",{v:.12e}");
        }
        let _ = writeln!(
            out,
            ",{:.12e},{:.12e},{:.12e}",
            traj.norm_track[i], traj.k1_track[i], traj.k2_track[i]
        );
    }
    out
}
