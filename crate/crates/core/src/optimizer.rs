//! Noisy GD / SGD with α-stable perturbations:
//! `θ_k = θ_{k-1} - (η/b) Σ_{i∈Ω_k} ∇f(θ_{k-1}, x_i) + σ ξ_k`.
//!
//! Each replica `r` draws batches from the `(seed, Batch, r)` stream and noise
//! from the `(seed, Noise, r)` stream, consuming them sequentially over steps.

use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::accountant::step_size_limit;
use crate::error::{domain, Error, Result};
use crate::problems::{find_stable_point, neighbor_index, Dataset, LossModel, Objective};
use crate::rng::{Purpose, StreamFactory};
use crate::stable_noise::StableSampler;
use crate::vecops::{axpy, norm, Samples};

/// Gradient tolerance used when the initial point is the dataset's stable point.
pub const INIT_STABLE_POINT_TOL: f64 = 1e-10;

/// Where a chain starts.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitPolicy {
    Zero,
    /// The universal stable point if the model has one, otherwise the dataset's stable point.
    #[default]
    StablePoint,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub eta: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// `b = n` is full-batch GD.
    pub batch_size: usize,
    pub iters: usize,
    pub seed: u64,
    pub init: InitPolicy,
    /// Record every `stride`-th state in [`run_chain`]; `None` keeps only the final state.
    pub record_stride: Option<usize>,
}

impl ChainConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return domain(format!("step size must be nonnegative, got {}", self.eta));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return domain(format!(
                "noise scale must be nonnegative, got {}",
                self.sigma
            ));
        }
        if !(self.alpha > 1.0 && self.alpha <= 2.0) {
            return domain(format!(
                "tail index alpha must lie in (1, 2], got {}",
                self.alpha
            ));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return domain(format!(
                "batch size {} must lie in [1, n = {n}]",
                self.batch_size
            ));
        }
        if self.record_stride == Some(0) {
            return domain("trajectory stride must be positive");
        }
        Ok(())
    }

    /// The step-size condition the privacy accountant relies on.
    pub fn check_accountant_step(&self, m: f64, k1: f64) -> Result<()> {
        let lim = step_size_limit(m, k1)?;
        if self.eta >= lim {
            return Err(Error::Regime {
                bound: "step size",
                detail: format!(
                    "eta = {} must be below min(m/(2 K1^2), 1/m, 1) = {lim}",
                    self.eta
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: Vec<f64>,
    pub step_index: usize,
}

/// The batch and noise streams of one replica.
#[derive(Debug, Clone)]
pub struct StepStreams {
    pub batch: ChaCha8Rng,
    pub noise: ChaCha8Rng,
}

impl StepStreams {
    pub fn new(factory: &StreamFactory, replica: u64) -> Self {
        Self {
            batch: factory.stream(Purpose::Batch, replica),
            noise: factory.stream(Purpose::Noise, replica),
        }
    }
}

/// Uniform size-`b` subset of `0..n` without replacement. `b = n` returns `0..n`
/// without consuming randomness.
pub fn sample_batch<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Result<Vec<usize>> {
    if b == 0 || b > n {
        return domain(format!("batch size {b} must lie in [1, n = {n}]"));
    }
    if b == n {
        return Ok((0..n).collect());
    }
    Ok(index::sample(rng, n, b).into_vec())
}

/// Reusable buffers for stepping one chain.
struct Stepper<'o, 'a> {
    obj: &'o Objective<'a>,
    cfg: &'o ChainConfig,
    sampler: StableSampler,
    grad: Vec<f64>,
    noise: Vec<f64>,
    batch: Vec<usize>,
}

impl<'o, 'a> Stepper<'o, 'a> {
    fn new(obj: &'o Objective<'a>, cfg: &'o ChainConfig) -> Result<Self> {
        cfg.validate(obj.n())?;
        let d = obj.dim();
        Ok(Self {
            obj,
            cfg,
            sampler: StableSampler::new(cfg.alpha, d)?,
            grad: vec![0.0; d],
            noise: vec![0.0; d],
            batch: Vec::with_capacity(cfg.batch_size),
        })
    }

    fn step(&mut self, theta: &mut [f64], streams: &mut StepStreams) {
        let (n, b) = (self.obj.n(), self.cfg.batch_size);
        if b == n {
            self.obj.full_grad_into(theta, &mut self.grad);
        } else {
            self.batch.clear();
            self.batch
                .extend(index::sample(&mut streams.batch, n, b).iter());
            self.obj.batch_grad_into(theta, &self.batch, &mut self.grad);
        }
        axpy(-self.cfg.eta, &self.grad, theta);
        if self.cfg.sigma > 0.0 {
            self.sampler
                .sample_into(&mut streams.noise, &mut self.noise);
            axpy(self.cfg.sigma, &self.noise, theta);
        }
    }

    /// Runs `from..to` steps in place, failing on the first non-finite iterate.
    fn advance(
        &mut self,
        theta: &mut [f64],
        streams: &mut StepStreams,
        from: usize,
        to: usize,
        replica: Option<usize>,
    ) -> Result<()> {
        for k in from..to {
            self.step(theta, streams);
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    step: k + 1,
                    replica,
                });
            }
        }
        Ok(())
    }
}

/// One transition of the chain.
pub fn sgd_step(
    state: &ChainState,
    obj: &Objective<'_>,
    cfg: &ChainConfig,
    streams: &mut StepStreams,
) -> Result<ChainState> {
    if state.theta.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: state.theta.len(),
        });
    }
    if state.theta.iter().any(|v| !v.is_finite()) {
        return domain("chain state must be finite");
    }
    let mut s = Stepper::new(obj, cfg)?;
    let mut theta = state.theta.clone();
    let k = state.step_index;
    s.advance(&mut theta, streams, k, k + 1, None)?;
    Ok(ChainState {
        theta,
        step_index: k + 1,
    })
}

/// Initial point for `cfg.init`.
pub fn resolve_init(obj: &Objective<'_>, init: &InitPolicy) -> Result<Vec<f64>> {
    let d = obj.dim();
    match init {
        InitPolicy::Zero => Ok(vec![0.0; d]),
        InitPolicy::StablePoint => match obj.model().universal_stable_point() {
            Some(p) => Ok(p.to_vec()),
            None => find_stable_point(obj.model(), obj.data(), INIT_STABLE_POINT_TOL),
        },
        InitPolicy::Fixed(v) => {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return domain("initial point must be finite");
            }
            Ok(v.clone())
        }
    }
}

/// Final state plus the recorded trajectory (step 0, every `stride`-th step and the last step).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    pub final_state: ChainState,
    pub trajectory: Vec<ChainState>,
}

/// Replica 0 of the chain.
pub fn run_chain(obj: &Objective<'_>, cfg: &ChainConfig) -> Result<ChainRun> {
    let theta0 = resolve_init(obj, &cfg.init)?;
    run_chain_from(obj, cfg, theta0, &StreamFactory::new(cfg.seed), 0)
}

fn run_chain_from(
    obj: &Objective<'_>,
    cfg: &ChainConfig,
    mut theta: Vec<f64>,
    factory: &StreamFactory,
    replica: u64,
) -> Result<ChainRun> {
    let mut s = Stepper::new(obj, cfg)?;
    let mut streams = StepStreams::new(factory, replica);
    let mut trajectory = Vec::new();
    match cfg.record_stride {
        None => s.advance(&mut theta, &mut streams, 0, cfg.iters, None)?,
        Some(stride) => {
            trajectory.push(ChainState {
                theta: theta.clone(),
                step_index: 0,
            });
            let mut k = 0;
            while k < cfg.iters {
                let next = (k + stride).min(cfg.iters);
                s.advance(&mut theta, &mut streams, k, next, None)?;
                k = next;
                trajectory.push(ChainState {
                    theta: theta.clone(),
                    step_index: k,
                });
            }
        }
    }
    Ok(ChainRun {
        final_state: ChainState {
            theta,
            step_index: cfg.iters,
        },
        trajectory,
    })
}

/// Final iterates of `replicas` independent chains, one row per replica.
pub fn run_replicas(obj: &Objective<'_>, cfg: &ChainConfig, replicas: usize) -> Result<Samples> {
    let mut out = run_replicas_at(obj, cfg, replicas, &[cfg.iters])?;
    Ok(out.pop().expect("one checkpoint"))
}

/// Iterates of `replicas` chains at each checkpoint step (sorted ascending, each `≤ cfg.iters`).
pub fn run_replicas_at(
    obj: &Objective<'_>,
    cfg: &ChainConfig,
    replicas: usize,
    checkpoints: &[usize],
) -> Result<Vec<Samples>> {
    let theta0 = resolve_init(obj, &cfg.init)?;
    replicas_from(
        obj,
        cfg,
        &theta0,
        &StreamFactory::new(cfg.seed),
        replicas,
        checkpoints,
    )
}

fn replicas_from(
    obj: &Objective<'_>,
    cfg: &ChainConfig,
    theta0: &[f64],
    factory: &StreamFactory,
    replicas: usize,
    checkpoints: &[usize],
) -> Result<Vec<Samples>> {
    if replicas == 0 {
        return domain("need at least one replica");
    }
    if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return domain("checkpoints must be a nonempty ascending list");
    }
    if *checkpoints.last().unwrap() > cfg.iters {
        return domain(format!("checkpoint beyond the last step {}", cfg.iters));
    }
    cfg.validate(obj.n())?;
    let d = obj.dim();
    let per_replica: Vec<Result<Vec<f64>>> = (0..replicas)
        .into_par_iter()
        .map_init(
            || Stepper::new(obj, cfg).expect("config validated"),
            |s, r| {
                let mut streams = StepStreams::new(factory, r as u64);
                let mut theta = theta0.to_vec();
                let mut snaps = Vec::with_capacity(d * checkpoints.len());
                let mut k = 0;
                for &c in checkpoints {
                    s.advance(&mut theta, &mut streams, k, c, Some(r))?;
                    k = c;
                    snaps.extend_from_slice(&theta);
                }
                Ok(snaps)
            },
        )
        .collect();
    let mut out: Vec<Samples> = checkpoints
        .iter()
        .map(|_| Samples::with_capacity(d, replicas))
        .collect();
    for snaps in per_replica {
        let snaps = snaps?;
        for (j, s) in out.iter_mut().enumerate() {
            s.push(&snaps[j * d..(j + 1) * d]);
        }
    }
    Ok(out)
}

/// How the two chains of a neighbouring pair share randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairMode {
    /// Independent streams: rows sample the two laws separately.
    #[default]
    Independent,
    /// Same batch and noise streams for both chains.
    Coupled,
}

/// Replica matrices for a dataset and its neighbour at each checkpoint.
///
/// Both chains start from the initial point resolved on `data`.
#[allow(clippy::too_many_arguments)]
pub fn run_neighbor_pair_at(
    model: &dyn LossModel,
    data: &Dataset,
    neighbor: &Dataset,
    cfg: &ChainConfig,
    replicas: usize,
    mode: PairMode,
    checkpoints: &[usize],
) -> Result<(Vec<Samples>, Vec<Samples>)> {
    neighbor_index(data, neighbor)?;
    let obj_a = Objective::new(model, data)?;
    let obj_b = Objective::new(model, neighbor)?;
    let theta0 = resolve_init(&obj_a, &cfg.init)?;
    let fa = StreamFactory::new(cfg.seed);
    let fb = match mode {
        PairMode::Independent => fa.derive(1),
        PairMode::Coupled => fa,
    };
    let a = replicas_from(&obj_a, cfg, &theta0, &fa, replicas, checkpoints)?;
    let b = replicas_from(&obj_b, cfg, &theta0, &fb, replicas, checkpoints)?;
    Ok((a, b))
}

/// Final-state replica matrices for a dataset and its neighbour.
pub fn run_neighbor_pair(
    model: &dyn LossModel,
    data: &Dataset,
    neighbor: &Dataset,
    cfg: &ChainConfig,
    replicas: usize,
    mode: PairMode,
) -> Result<(Samples, Samples)> {
    let (mut a, mut b) =
        run_neighbor_pair_at(model, data, neighbor, cfg, replicas, mode, &[cfg.iters])?;
    Ok((a.pop().unwrap(), b.pop().unwrap()))
}

/// `‖∇F(θ)‖` on the full dataset.
pub fn full_grad_norm(obj: &Objective<'_>, theta: &[f64]) -> f64 {
    norm(&obj.full_grad(theta))
}

/// CSV with columns `theta_0..theta_{d-1}`, one row per sample.
pub fn samples_csv(samples: &Samples) -> String {
    let mut s = header(None, samples.dim());
    for r in samples.iter() {
        row(&mut s, None, r);
    }
    s
}

/// CSV with columns `step,theta_0..,grad_norm`.
pub fn trajectory_csv(obj: &Objective<'_>, traj: &[ChainState]) -> String {
    let d = obj.dim();
    let mut s = header(Some("step"), d);
    s.insert_str(s.len() - 1, ",grad_norm");
    for st in traj {
        row(&mut s, Some(st.step_index), &st.theta);
        s.pop();
        let _ = writeln!(s, ",{:.17e}", full_grad_norm(obj, &st.theta));
    }
    s
}

fn header(lead: Option<&str>, d: usize) -> String {
    let mut cols: Vec<String> = lead.into_iter().map(str::to_string).collect();
    cols.extend((0..d).map(|i| format!("theta_{i}")));
    cols.join(",") + "\n"
}

fn row(s: &mut String, lead: Option<usize>, vals: &[f64]) {
    if let Some(k) = lead {
        let _ = write!(s, "{k},");
    }
    let cells: Vec<String> = vals.iter().map(|v| format!("{v:.17e}")).collect();
    s.push_str(&cells.join(","));
    s.push('\n');
}
