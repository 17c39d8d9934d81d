//! Monte-Carlo and finite-difference audits of the drift, kernel-distance and
//! Lyapunov-function bounds, plus a histogram TV estimator for stability runs.
//!
//! Every audit is deterministic given its seed: grid point `i` draws from the
//! `(seed, Audit, i)` stream and results are merged in grid order.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::accountant::{
    lyapunov, per_step_vnorm_bound, DriftParams, GammaIngredients, KlConvention,
};
use crate::error::{domain, Error, Result};
use crate::optimizer::{run_neighbor_pair_at, sample_batch, ChainConfig, PairMode};
use crate::problems::{neighbor_index, Dataset, LossModel, Objective};
use crate::report::{AuditReport, WorstPoint};
use crate::rng::{Purpose, StreamFactory};
use crate::stable_noise::{StableSampler, Subordinator};
use crate::vecops::{axpy, dist, norm, sub, Samples};

/// Number of blocks of the median-of-means estimator.
pub const MOM_BLOCKS: usize = 16;

/// `count` points on rays from `center`, radii evenly spaced in `[0, max_radius]`,
/// directions drawn from the seeded stream.
pub fn radial_grid(
    center: &[f64],
    max_radius: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if count < 2 {
        return domain("radial grid needs at least two points");
    }
    if !(max_radius > 0.0 && max_radius.is_finite()) {
        return domain(format!("grid radius must be positive, got {max_radius}"));
    }
    let mut rng = StreamFactory::new(seed).stream(Purpose::Audit, u64::MAX);
    Ok((0..count)
        .map(|i| {
            let r = max_radius * i as f64 / (count - 1) as f64;
            let mut u: Vec<f64> = (0..center.len())
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let nu = norm(&u).max(f64::MIN_POSITIVE);
            u.iter_mut().for_each(|v| *v *= r / nu);
            axpy(1.0, center, &mut u);
            u
        })
        .collect())
}

/// Mean with an allowance of three standard errors.
fn mean_3se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, 3.0 * (var / n).sqrt())
}

/// Median of `MOM_BLOCKS` block means; allowance is three robust standard
/// errors from the MAD of the block means.
fn median_of_means(v: &[f64]) -> (f64, f64) {
    let k = MOM_BLOCKS.min(v.len()).max(1);
    let size = v.len() / k;
    let mut means: Vec<f64> = (0..k)
        .map(|b| v[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let med = median_sorted(&means);
    let mut dev: Vec<f64> = means.iter().map(|m| (m - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let sd_block = 1.4826 * median_sorted(&dev);
    (med, 3.0 * sd_block / (k as f64).sqrt())
}

fn median_sorted(s: &[f64]) -> f64 {
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// `count` test frequencies with random directions and norms cycling through
/// `{0.5, 1, 2}`.
pub fn ecf_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = StreamFactory::new(seed).stream(Purpose::Audit, u64::MAX - 1);
    (0..count)
        .map(|i| {
            let mut u: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let s = [0.5, 1.0, 2.0][i % 3] / norm(&u);
            u.iter_mut().for_each(|v| *v *= s);
            u
        })
        .collect()
}

/// Per-frequency ECF comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct EcfRow {
    pub u: Vec<f64>,
    pub empirical: f64,
    pub exact: f64,
    /// Three standard errors of the empirical mean of `cos(u·ξ)`.
    pub ci: f64,
}

impl EcfRow {
    pub fn abs_error(&self) -> f64 {
        (self.empirical - self.exact).abs()
    }
}

/// Real part of the empirical characteristic function of `sigma`-scaled draws
/// against `exp(-(σ‖u‖)^α)`. The imaginary part vanishes by symmetry and is
/// not reported.
pub fn ecf_table(
    samples: &Samples,
    alpha: f64,
    sigma: f64,
    freqs: &[Vec<f64>],
) -> Result<Vec<EcfRow>> {
    if samples.rows() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: samples.rows(),
        });
    }
    if let Some(u) = freqs.iter().find(|u| u.len() != samples.dim()) {
        return Err(Error::DimensionMismatch {
            expected: samples.dim(),
            got: u.len(),
        });
    }
    let n = samples.rows() as f64;
    Ok(freqs
        .par_iter()
        .map(|u| {
            let (mut s, mut s2) = (0.0, 0.0);
            for row in samples.iter() {
                let c = crate::vecops::dot(u, row).cos();
                s += c;
                s2 += c * c;
            }
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0);
            EcfRow {
                u: u.clone(),
                empirical: mean,
                exact: (-(sigma * norm(u)).powf(alpha)).exp(),
                ci: 3.0 * (var / n).sqrt(),
            }
        })
        .collect())
}

/// Audit form of [`ecf_table`]: margin is `-|ECF - exact|`, allowance 3 SE.
pub fn ecf_audit(
    samples: &Samples,
    alpha: f64,
    sigma: f64,
    freqs: &[Vec<f64>],
) -> Result<AuditReport> {
    let mut worst = WorstPoint::new();
    for r in ecf_table(samples, alpha, sigma, freqs)? {
        worst.observe(-r.abs_error(), r.ci);
    }
    Ok(worst.report(format!("ecf[alpha={alpha}, d={}]", samples.dim())))
}

/// Norm of the mean direction `ξ/‖ξ‖` against `4/√N`.
pub fn isotropy_audit(samples: &Samples) -> Result<AuditReport> {
    if samples.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let d = samples.dim();
    let mut acc = vec![0.0; d];
    for row in samples.iter() {
        let r = norm(row);
        if r > 0.0 {
            axpy(1.0 / r, row, &mut acc);
        }
    }
    let n = samples.rows() as f64;
    let m = norm(&acc) / n;
    Ok(AuditReport::new(
        format!("isotropy[d={d}]"),
        samples.rows(),
        4.0 / n.sqrt() - m,
        0.0,
    ))
}

/// Inputs of a one-step drift audit.
#[derive(Debug, Clone)]
pub struct DriftAudit<'a> {
    pub objective: &'a Objective<'a>,
    /// Supplies `η`, `σ`, `α` and the batch size.
    pub chain: &'a ChainConfig,
    pub drift: DriftParams,
    pub center: Vec<f64>,
    pub grid: Vec<Vec<f64>>,
    pub reps: usize,
    pub seed: u64,
}

/// Checks `E[V_p(θ₁) | θ₀ = θ] ≤ β V_p(θ) + H` at each grid point.
///
/// The mean uses a 3-SE allowance when `2p < α` (finite variance) and a
/// median-of-means estimate otherwise.
pub fn verify_drift(a: &DriftAudit<'_>) -> Result<AuditReport> {
    if a.reps < 1000 {
        return domain(format!(
            "drift audit needs at least 1000 repetitions, got {}",
            a.reps
        ));
    }
    if a.grid.is_empty() {
        return domain("drift audit grid is empty");
    }
    let obj = a.objective;
    let cfg = a.chain;
    cfg.validate(obj.n())?;
    let d = obj.dim();
    let sampler = StableSampler::new(cfg.alpha, d)?;
    let p = a.drift.p;
    let heavy = 2.0 * p >= cfg.alpha;
    let factory = StreamFactory::new(a.seed);
    let full = cfg.batch_size == obj.n();
    let rows: Vec<(f64, f64)> = a
        .grid
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            let mut rng = factory.stream(Purpose::Audit, i as u64);
            let mut mean_step = theta.clone();
            if full {
                axpy(-cfg.eta, &obj.full_grad(theta), &mut mean_step);
            }
            let mut g = vec![0.0; d];
            let mut xi = vec![0.0; d];
            let mut y = vec![0.0; d];
            let vals: Vec<f64> = (0..a.reps)
                .map(|_| {
                    y.copy_from_slice(&mean_step);
                    if !full {
                        let idx = sample_batch(obj.n(), cfg.batch_size, &mut rng)
                            .expect("validated batch size");
                        obj.batch_grad_into(theta, &idx, &mut g);
                        axpy(-cfg.eta, &g, &mut y);
                    }
                    if cfg.sigma > 0.0 {
                        sampler.sample_into(&mut rng, &mut xi);
                        axpy(cfg.sigma, &xi, &mut y);
                    }
                    lyapunov(p, dist(&y, &a.center))
                })
                .collect();
            let (est, ci) = if heavy {
                median_of_means(&vals)
            } else {
                mean_3se(&vals)
            };
            let bound = a.drift.rhs(lyapunov(p, dist(theta, &a.center)));
            (bound - est, ci)
        })
        .collect();
    let mut worst = WorstPoint::new();
    for (m, ci) in rows {
        worst.observe(m, ci);
    }
    Ok(worst.report(format!("drift[{}, p={:.3}]", a.drift.regime, p)))
}

/// Inputs of a kernel-distance audit.
#[derive(Debug, Clone)]
pub struct GammaAudit<'a> {
    pub model: &'a dyn LossModel,
    pub data: &'a Dataset,
    pub neighbor: &'a Dataset,
    pub eta: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub ingredients: GammaIngredients,
    /// `ϑ⋆` for the universal chain, the neighbour's stable point otherwise.
    pub center: Vec<f64>,
    pub grid: Vec<Vec<f64>>,
    pub reps: usize,
    pub seed: u64,
    pub convention: KlConvention,
}

/// Per-grid-point output of [`gamma_profile`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPoint {
    pub radius: f64,
    /// MC mean of `sqrt(2 (μ(V²) + μ̂(V²)) KL)` over subordinator draws.
    pub integrand: f64,
    pub ci: f64,
    pub per_step_bound: f64,
    /// `C_γ V̂_p(θ) / n`.
    pub sup_bound: f64,
}

/// Evaluates the mixture integrand bounding `‖P(θ,·) - P̂(θ,·)‖_{V_p}` and both
/// analytic bounds at each grid point.
///
/// `μ(V_p²)` under `N(m, s² I)` is replaced by its Jensen bound
/// `(1 + ‖m - c‖² + d s²)^p`, valid since `p < 1`.
pub fn gamma_profile(a: &GammaAudit<'_>) -> Result<Vec<GammaPoint>> {
    if a.reps < 2 {
        return domain("gamma audit needs at least two repetitions");
    }
    neighbor_index(a.data, a.neighbor)?;
    let oa = Objective::new(a.model, a.data)?;
    let ob = Objective::new(a.model, a.neighbor)?;
    let d = a.model.param_dim();
    if a.center.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: a.center.len(),
        });
    }
    let sub_sampler = if a.alpha < 2.0 {
        Some(Subordinator::new(a.alpha)?)
    } else {
        None
    };
    let ing = &a.ingredients;
    let (p, n) = (ing.p, a.data.len() as f64);
    let factory = StreamFactory::new(a.seed);
    Ok(a.grid
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            let mut rng = factory.stream(Purpose::Audit, i as u64);
            let (ga, gb) = (oa.full_grad(theta), ob.full_grad(theta));
            let delta2 = dist(&ga, &gb).powi(2);
            let mut ma = theta.clone();
            axpy(-a.eta, &ga, &mut ma);
            let mut mb = theta.clone();
            axpy(-a.eta, &gb, &mut mb);
            let (ra, rb) = (dist(&ma, &a.center).powi(2), dist(&mb, &a.center).powi(2));
            let vals: Vec<f64> = (0..a.reps)
                .map(|_| {
                    let lambda = sub_sampler.map_or(1.0, |s| s.sample(&mut rng));
                    let var = match a.convention {
                        KlConvention::Calibrated => 2.0 * lambda * a.sigma * a.sigma,
                        KlConvention::Literal => lambda * a.sigma * a.sigma,
                    };
                    let kl = a.eta * a.eta * delta2 / var;
                    let spread = d as f64 * var;
                    let mu = (1.0 + ra + spread).powf(p) + (1.0 + rb + spread).powf(p);
                    (2.0 * mu * kl).sqrt()
                })
                .collect();
            let (integrand, ci) = mean_3se(&vals);
            let r = dist(theta, &a.center);
            GammaPoint {
                radius: r,
                integrand,
                ci,
                per_step_bound: per_step_vnorm_bound(theta, &a.center, ing),
                sup_bound: ing.c_gamma * lyapunov(1.0 + p, r) / n,
            }
        })
        .collect())
}

/// Checks the MC integrand against the per-step bound and against
/// `C_γ V̂_p(θ)/n`; also fails if the per-step bound ever exceeds `C_γ V̂_p(θ)/n`.
pub fn verify_gamma(a: &GammaAudit<'_>) -> Result<AuditReport> {
    let pts = gamma_profile(a)?;
    let mut worst = WorstPoint::new();
    let mut chain_ok = true;
    for g in &pts {
        worst.observe(g.per_step_bound - g.integrand, g.ci);
        worst.observe(g.sup_bound - g.integrand, g.ci);
        chain_ok &= g.per_step_bound <= g.sup_bound * (1.0 + 1e-12);
    }
    let r = worst.report(format!("gamma[{}]", a.ingredients.chain));
    Ok(if chain_ok { r } else { r.failed() })
}

/// Histogram TV between two sample sets and its same-law calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvEstimate {
    /// `½ Σ_cells |p̂_a - p̂_b|`.
    pub tv: f64,
    /// Split-half TV of `samples_a`, rescaled to the sample sizes of `tv`.
    pub baseline: f64,
    /// Three standard deviations of `tv - baseline`.
    pub ci: f64,
}

impl TvEstimate {
    pub fn debiased(&self) -> f64 {
        self.tv - self.baseline
    }
}

/// Binning options for [`estimate_tv_histogram`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramOptions {
    pub bins_per_axis: usize,
    /// `0` uses the pooled min/max. A positive `q` spans the pooled
    /// `[q, 1-q]` quantiles and adds one overflow cell on each side, which
    /// keeps heavy-tailed outliers from stretching every bin.
    pub tail_quantile: f64,
}

impl HistogramOptions {
    pub fn new(bins_per_axis: usize) -> Self {
        Self {
            bins_per_axis,
            tail_quantile: 0.0,
        }
    }
}

struct Binning {
    lo: Vec<f64>,
    width: Vec<f64>,
    bins: usize,
    overflow: bool,
}

impl Binning {
    fn axis_cells(&self) -> usize {
        self.bins + if self.overflow { 2 } else { 0 }
    }

    fn cell(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        let cells = self.axis_cells();
        for (j, &xj) in x.iter().enumerate() {
            let t = ((xj - self.lo[j]) / self.width[j]).floor();
            let k = if self.overflow {
                if t < 0.0 {
                    0
                } else if t >= self.bins as f64 {
                    self.bins + 1
                } else {
                    t as usize + 1
                }
            } else {
                (t.max(0.0) as usize).min(self.bins - 1)
            };
            idx = idx * cells + k;
        }
        idx
    }

    fn counts(&self, s: &Samples, range: std::ops::Range<usize>) -> Vec<f64> {
        let mut c = vec![0.0; self.axis_cells().pow(s.dim() as u32)];
        for i in range {
            c[self.cell(s.row(i))] += 1.0;
        }
        c
    }
}

fn binning(a: &Samples, b: &Samples, opts: &HistogramOptions) -> Binning {
    let d = a.dim();
    let mut lo = vec![0.0; d];
    let mut width = vec![0.0; d];
    for j in 0..d {
        let (mut l, mut h) = if opts.tail_quantile > 0.0 {
            let mut col: Vec<f64> = a.iter().chain(b.iter()).map(|r| r[j]).collect();
            col.sort_by(f64::total_cmp);
            let at = |q: f64| col[((col.len() - 1) as f64 * q).round() as usize];
            (at(opts.tail_quantile), at(1.0 - opts.tail_quantile))
        } else {
            a.iter()
                .chain(b.iter())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), r| {
                    (l.min(r[j]), h.max(r[j]))
                })
        };
        let span = h - l;
        let pad = if span > 0.0 { 0.05 * span } else { 0.5 };
        l -= pad;
        h += pad;
        lo[j] = l;
        width[j] = (h - l) / opts.bins_per_axis as f64;
    }
    Binning {
        lo,
        width,
        bins: opts.bins_per_axis,
        overflow: opts.tail_quantile > 0.0,
    }
}

/// `½ Σ |a/na - b/nb|` and a plug-in standard deviation `½ sqrt(Σ v_c)`.
fn tv_counts(ca: &[f64], na: f64, cb: &[f64], nb: f64) -> (f64, f64) {
    let mut tv = 0.0;
    let mut var = 0.0;
    for (x, y) in ca.iter().zip(cb) {
        let (pa, pb) = (x / na, y / nb);
        tv += (pa - pb).abs();
        var += pa * (1.0 - pa) / na + pb * (1.0 - pb) / nb;
    }
    (0.5 * tv, 0.5 * var.sqrt())
}

/// Half the L1 distance between normalised histograms on a shared box that
/// extends 5% beyond the pooled range.
pub fn estimate_tv_histogram(
    a: &Samples,
    b: &Samples,
    opts: &HistogramOptions,
) -> Result<TvEstimate> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if a.dim() > 3 {
        return Err(Error::UnsupportedDimension(a.dim()));
    }
    if a.rows() < 2 || b.is_empty() {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: a.rows().min(b.rows()),
        });
    }
    if opts.bins_per_axis == 0 {
        return domain("need at least one bin per axis");
    }
    if !(0.0..0.5).contains(&opts.tail_quantile) {
        return domain(format!(
            "tail quantile must lie in [0, 0.5), got {}",
            opts.tail_quantile
        ));
    }
    let bin = binning(a, b, opts);
    let (na, nb) = (a.rows(), b.rows());
    let ca = bin.counts(a, 0..na);
    let cb = bin.counts(b, 0..nb);
    let (tv, sd) = tv_counts(&ca, na as f64, &cb, nb as f64);
    let h = na / 2;
    let c1 = bin.counts(a, 0..h);
    let c2 = bin.counts(a, h..2 * h);
    let (split, sd_split) = tv_counts(&c1, h as f64, &c2, h as f64);
    // noise-driven TV scales with sqrt(1/n₁ + 1/n₂)
    let scale = ((1.0 / na as f64 + 1.0 / nb as f64) / (2.0 / h as f64)).sqrt();
    let baseline = split * scale;
    let ci = 3.0 * (sd * sd + (sd_split * scale).powi(2)).sqrt();
    Ok(TvEstimate { tv, baseline, ci })
}

/// One row of a TV stability experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvRow {
    pub n: usize,
    pub k: usize,
    pub estimate: TvEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvStabilityReport {
    pub rows: Vec<TvRow>,
    /// De-biased TV at the last checkpoint is nonincreasing in `n` within CI.
    pub decreasing_in_n: AuditReport,
    /// De-biased TV agrees across checkpoints within CI, for every `n`.
    pub time_uniform: AuditReport,
}

impl TvStabilityReport {
    pub const CSV_HEADER: &'static str = "n,k,tv,baseline,debiased,ci";

    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        self.rows.iter().map(|r| {
            let e = &r.estimate;
            format!(
                "{},{},{:.8e},{:.8e},{:.8e},{:.8e}",
                r.n,
                r.k,
                e.tv,
                e.baseline,
                e.debiased(),
                e.ci
            )
        })
    }
}

/// Runs independent replica chains on each `(dataset, neighbour)` pair (ordered
/// by increasing `n`) and checks the de-biased TV trend and its stability over
/// the `checkpoints`.
pub fn verify_tv_stability(
    model: &dyn LossModel,
    family: &[(Dataset, Dataset)],
    cfg: &ChainConfig,
    replicas: usize,
    checkpoints: &[usize],
    opts: &HistogramOptions,
) -> Result<TvStabilityReport> {
    if family.is_empty() {
        return domain("TV stability needs at least one dataset pair");
    }
    if family.windows(2).any(|w| w[0].0.len() >= w[1].0.len()) {
        return domain("dataset sizes must be strictly increasing");
    }
    let mut rows = Vec::new();
    for (data, nb) in family {
        let c = ChainConfig {
            batch_size: cfg.batch_size.min(data.len()),
            ..cfg.clone()
        };
        let (sa, sb) = run_neighbor_pair_at(
            model,
            data,
            nb,
            &c,
            replicas,
            PairMode::Independent,
            checkpoints,
        )?;
        for (j, &k) in checkpoints.iter().enumerate() {
            rows.push(TvRow {
                n: data.len(),
                k,
                estimate: estimate_tv_histogram(&sa[j], &sb[j], opts)?,
            });
        }
    }
    let last = *checkpoints.last().unwrap();
    let at_last: Vec<&TvRow> = rows.iter().filter(|r| r.k == last).collect();
    let mut trend = WorstPoint::new();
    for w in at_last.windows(2) {
        let (a, b) = (&w[0].estimate, &w[1].estimate);
        trend.observe(
            a.debiased() - b.debiased(),
            (a.ci * a.ci + b.ci * b.ci).sqrt(),
        );
    }
    let mut plateau = WorstPoint::new();
    for (data, _) in family {
        let per_n: Vec<&TvRow> = rows.iter().filter(|r| r.n == data.len()).collect();
        let fin = per_n.last().unwrap().estimate;
        for r in &per_n[..per_n.len() - 1] {
            let e = r.estimate;
            plateau.observe(
                -(e.debiased() - fin.debiased()).abs(),
                (e.ci * e.ci + fin.ci * fin.ci).sqrt(),
            );
        }
    }
    let decreasing_in_n = if at_last.len() < 2 {
        AuditReport::new("tv_decreasing_in_n", 0, 0.0, 0.0)
    } else {
        trend.report("tv_decreasing_in_n")
    };
    let time_uniform = if checkpoints.len() < 2 {
        AuditReport::new("tv_time_uniform", 0, 0.0, 0.0)
    } else {
        plateau.report("tv_time_uniform")
    };
    Ok(TvStabilityReport {
        rows,
        decreasing_in_n,
        time_uniform,
    })
}

/// `V_p` at offset `z = θ - x`.
fn vp(p: f64, z: &[f64]) -> f64 {
    lyapunov(p, norm(z))
}

/// Central-difference gradient and Hessian of `V_p` at `z = θ - x`.
fn fd_derivatives(p: f64, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = z.len();
    let scale = norm(z).max(1.0);
    let h1 = 1e-6 * scale;
    let h2 = 1e-4 * scale;
    let mut w = z.to_vec();
    let mut grad = vec![0.0; d];
    for i in 0..d {
        w[i] = z[i] + h1;
        let fp = vp(p, &w);
        w[i] = z[i] - h1;
        let fm = vp(p, &w);
        w[i] = z[i];
        grad[i] = (fp - fm) / (2.0 * h1);
    }
    let f0 = vp(p, z);
    let mut hess = vec![0.0; d * d];
    for i in 0..d {
        w[i] = z[i] + h2;
        let fp = vp(p, &w);
        w[i] = z[i] - h2;
        let fm = vp(p, &w);
        w[i] = z[i];
        hess[i * d + i] = (fp - 2.0 * f0 + fm) / (h2 * h2);
        for j in i + 1..d {
            let mut e = |si: f64, sj: f64| {
                w[i] = z[i] + si * h2;
                w[j] = z[j] + sj * h2;
                let v = vp(p, &w);
                w[i] = z[i];
                w[j] = z[j];
                v
            };
            let m = (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * h2 * h2);
            hess[i * d + j] = m;
            hess[j * d + i] = m;
        }
    }
    (grad, hess)
}

/// Finite-difference check of `‖∇V_p(θ)‖ ≤ p‖θ - x‖^{p-1}` and
/// `‖∇²V_p(θ)‖_F ≤ p(√d + 2)` with `1e-4` slack, for `1 ≤ p < 2`.
pub fn verify_vp_norm_lemmas(p: f64, dim: usize, trials: usize, seed: u64) -> Result<AuditReport> {
    if !(1.0..2.0).contains(&p) {
        return domain(format!(
            "Lyapunov gradient bounds are checked for 1 <= p < 2, got {p}"
        ));
    }
    if dim == 0 || trials == 0 {
        return domain("need a positive dimension and at least one trial");
    }
    let mut rng = StreamFactory::new(seed).stream(Purpose::Audit, 0);
    let mut worst = WorstPoint::new();
    let hess_bound = p * ((dim as f64).sqrt() + 2.0);
    for t in 0..trials {
        let theta: Vec<f64> = (0..dim)
            .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let x: Vec<f64> = if t == 0 {
            theta.clone()
        } else {
            let r = (1e-3f64.ln() + rng.random::<f64>() * (1e3f64.ln() - 1e-3f64.ln())).exp();
            let mut u: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let nu = norm(&u);
            u.iter_mut().for_each(|v| *v *= r / nu);
            sub(&theta, &u)
        };
        let z = sub(&theta, &x);
        let (g, h) = fd_derivatives(p, &z);
        let r = norm(&z);
        let gbound = if r == 0.0 {
            if p == 1.0 {
                1.0
            } else {
                0.0
            }
        } else {
            p * r.powf(p - 1.0)
        };
        worst.observe(gbound - norm(&g), 1e-4);
        worst.observe(hess_bound - norm(&h), 1e-4);
    }
    Ok(worst.report(format!("vp_norm_bounds[p={p}, d={dim}]")))
}

/// Outcome of one deliberately broken (or unbroken) rerun.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutcome {
    pub report: AuditReport,
    /// Whether the audit should pass with this constant.
    pub expected_pass: bool,
}

impl ControlOutcome {
    /// The control behaved as intended.
    pub fn ok(&self) -> bool {
        self.report.pass == self.expected_pass
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalsificationReport {
    pub outcomes: Vec<ControlOutcome>,
}

impl FalsificationReport {
    pub fn all_ok(&self) -> bool {
        self.outcomes.iter().all(ControlOutcome::ok)
    }

    /// One summary row per control: passes when the control behaved as intended.
    pub fn as_audit(&self) -> AuditReport {
        let bad = self.outcomes.iter().filter(|o| !o.ok()).count();
        AuditReport::new(
            "falsification_controls",
            self.outcomes.len(),
            -(bad as f64),
            0.0,
        )
    }
}

/// Audits to rerun with corrupted constants.
#[derive(Debug, Clone, Default)]
pub struct ControlSuite<'a> {
    pub drift: Option<DriftAudit<'a>>,
    pub gamma: Option<GammaAudit<'a>>,
}

/// Drift audit with `β` replaced by half of `(1 - ηK₁)^p`, the smallest
/// far-field contraction any `K₁`-smooth gradient step can achieve, on a grid
/// reaching far enough that `H` is under 5% of the resulting gap.
/// Returns the audit and the far-field radius.
pub fn wrong_beta_audit<'a>(a: &DriftAudit<'a>) -> (DriftAudit<'a>, f64) {
    let k1 = a.objective.model().constants().k1;
    let p = a.drift.p;
    let q = (1.0 - a.chain.eta * k1).max(0.0).powf(p);
    let beta = 0.5 * q;
    let v_far = 40.0 * a.drift.h.max(1.0) / q.max(1e-3);
    let r_far = (v_far.powf(2.0 / p) - 1.0).sqrt();
    let grid = radial_grid(&a.center, r_far, a.grid.len().max(2), a.seed)
        .expect("positive far-field radius");
    (
        DriftAudit {
            drift: DriftParams { beta, ..a.drift },
            grid,
            ..a.clone()
        },
        r_far,
    )
}

fn scale_gamma(g: &GammaIngredients, s: f64) -> GammaIngredients {
    GammaIngredients {
        c6: g.c6 * s,
        c7: g.c7 * s,
        c_gamma: g.c_gamma * s,
        ..*g
    }
}

/// Reruns each audit unbroken and with one constant corrupted: `H/100` and
/// [`wrong_beta_audit`] for the drift; `C₆, C₇, C_γ ← /100` for the kernel distance.
pub fn falsification_controls(suite: &ControlSuite<'_>) -> Result<FalsificationReport> {
    let mut outcomes = Vec::new();
    let mut tag = |mut r: AuditReport, what: &str, expected_pass: bool| {
        r.name = format!("{} {what}", r.name);
        outcomes.push(ControlOutcome {
            report: r,
            expected_pass,
        });
    };
    if let Some(a) = &suite.drift {
        tag(verify_drift(a)?, "unbroken", true);
        let h = DriftAudit {
            drift: DriftParams {
                h: a.drift.h / 100.0,
                ..a.drift
            },
            ..a.clone()
        };
        tag(verify_drift(&h)?, "H/100", false);
        let (b, _) = wrong_beta_audit(a);
        tag(verify_drift(&b)?, "wrong beta", false);
    }
    if let Some(g) = &suite.gamma {
        tag(verify_gamma(g)?, "unbroken", true);
        let c = GammaAudit {
            ingredients: scale_gamma(&g.ingredients, 0.01),
            ..g.clone()
        };
        tag(verify_gamma(&c)?, "C_gamma/100", false);
    }
    Ok(FalsificationReport { outcomes })
}
