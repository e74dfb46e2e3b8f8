//! The coordinate-refresh Markov chain.
//!
//! One step at index `i` with variate `g` maps the current vector `x` to
//! `x + (g - x[i]) * column(i)`. Because the diagonal of the correlation
//! matrix is 1, the step leaves `x[i] = g` exactly; the implementation
//! assigns that coordinate directly so the refresh holds bitwise. A step is
//! O(d) time and the runner keeps O(d) state: the vector itself plus one
//! reusable column buffer per chain.

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Current chain vector and step counter.
///
/// The column scratch buffer lives inside the state so that stepping never
/// allocates.
#[derive(Debug, Clone)]
pub struct ChainState {
    x: Vec<f64>,
    n: u64,
    col: Vec<f64>,
}

impl ChainState {
    pub fn new(x0: Vec<f64>) -> Self {
        let d = x0.len();
        Self {
            x: x0,
            n: 0,
            col: vec![0.0; d],
        }
    }

    /// The chain's standard start `X_0 = 0`.
    pub fn zero(dim: usize) -> Self {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn step_count(&self) -> u64 {
        self.n
    }

    /// Applies one step of the recursion at index `i` with variate `g`.
    ///
    /// Afterwards `x[i] == g` bitwise.
    pub fn step(&mut self, model: &CovarianceModel, i: usize, g: f64) -> Result<()> {
        let d = self.x.len();
        if i >= d {
            return Err(Error::IndexOutOfRange { index: i, dim: d });
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gaussian variate g = {g}")));
        }
        if !self.x[i].is_finite() {
            return Err(Error::NonFinite(format!("chain coordinate x[{i}]")));
        }
        model.column_into(i, &mut self.col)?;
        let delta = g - self.x[i];
        for (xk, ck) in self.x.iter_mut().zip(self.col.iter()) {
            *xk += delta * ck;
        }
        // V[i][i] = 1 makes this exact in real arithmetic; enforce it bitwise.
        self.x[i] = g;
        self.n += 1;
        Ok(())
    }
}

/// The index sequence (i_n) driving the chain.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)] // the stream state dwarfs the Vec header
pub enum IndexSchedule {
    /// i.i.d. uniform indices; the setting under which the d/sqrt(n)
    /// Wasserstein and 18 k^2 d^2 / n MSE bounds hold.
    UniformRandom { dim: usize, stream: RngStream },
    /// Emits `order[n mod d]`. No accuracy claims; provided because the
    /// covariance identities also hold for deterministic sequences.
    DeterministicCycle { order: Vec<usize> },
}

impl IndexSchedule {
    pub fn uniform_random(dim: usize, stream: RngStream) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        IndexSchedule::UniformRandom { dim, stream }
    }

    /// `order` must be a permutation of `0..d`.
    pub fn deterministic_cycle(order: Vec<usize>) -> Result<Self> {
        let d = order.len();
        if d == 0 {
            return Err(Error::InvalidArgument("empty cycle order".into()));
        }
        let mut seen = vec![false; d];
        for &i in &order {
            if i >= d || seen[i] {
                return Err(Error::InvalidArgument(format!(
                    "order is not a permutation of 0..{d}"
                )));
            }
            seen[i] = true;
        }
        Ok(IndexSchedule::DeterministicCycle { order })
    }

    pub fn dim(&self) -> usize {
        match self {
            IndexSchedule::UniformRandom { dim, .. } => *dim,
            IndexSchedule::DeterministicCycle { order } => order.len(),
        }
    }

    /// Index for step `n`.
    pub fn next(&mut self, n: u64) -> usize {
        match self {
            IndexSchedule::UniformRandom { dim, stream } => stream.next_index(*dim),
            IndexSchedule::DeterministicCycle { order } => order[(n % order.len() as u64) as usize],
        }
    }
}

/// One recorded step; replaying a record sequence reproduces the chain
/// exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub n: u64,
    pub i: usize,
    pub g: f64,
}

/// Runs `steps` steps from `x0`, invoking `visitor` after each step so
/// consumers can stream without storing the trajectory.
pub fn run<F>(
    model: &CovarianceModel,
    schedule: &mut IndexSchedule,
    gaussians: &mut RngStream,
    steps: u64,
    x0: Vec<f64>,
    mut visitor: F,
) -> Result<ChainState>
where
    F: FnMut(StepRecord, &ChainState),
{
    check_dims(model, schedule, x0.len())?;
    let mut state = ChainState::new(x0);
    for n in 0..steps {
        let i = schedule.next(n);
        let g = gaussians.next_gaussian();
        state.step(model, i, g)?;
        visitor(StepRecord { n, i, g }, &state);
    }
    Ok(state)
}

/// Advances two chains with identical `(i_n, g_n)`: chain A from zero,
/// chain B from `x0_exact`, a draw from N(0, V). Chain B then has the exact
/// target distribution at every step, which is what the coupled MSE
/// estimator exploits.
pub fn run_coupled<F>(
    model: &CovarianceModel,
    schedule: &mut IndexSchedule,
    gaussians: &mut RngStream,
    steps: u64,
    x0_exact: Vec<f64>,
    mut visitor: F,
) -> Result<(ChainState, ChainState)>
where
    F: FnMut(StepRecord, &ChainState, &ChainState),
{
    check_dims(model, schedule, x0_exact.len())?;
    let mut a = ChainState::zero(x0_exact.len());
    let mut b = ChainState::new(x0_exact);
    for n in 0..steps {
        let i = schedule.next(n);
        let g = gaussians.next_gaussian();
        a.step(model, i, g)?;
        b.step(model, i, g)?;
        visitor(StepRecord { n, i, g }, &a, &b);
    }
    Ok((a, b))
}

/// Re-applies recorded steps from `x0`.
pub fn replay(model: &CovarianceModel, records: &[StepRecord], x0: Vec<f64>) -> Result<ChainState> {
    let mut state = ChainState::new(x0);
    for rec in records {
        state.step(model, rec.i, rec.g)?;
    }
    Ok(state)
}

fn check_dims(model: &CovarianceModel, schedule: &IndexSchedule, x0_len: usize) -> Result<()> {
    let d = model.dim();
    if schedule.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: schedule.dim(),
        });
    }
    if x0_len != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x0_len,
        });
    }
    Ok(())
}
