//! Loss models (ridge, logistic, and a realizable ridge variant), their
//! regularity constants, empirical assumption checkers and dataset plumbing.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::accountant::step_size_limit;
use crate::error::{domain, Error, Result};
use crate::report::{AuditReport, WorstPoint};
use crate::vecops::{axpy, dist, dot, norm};

/// Relative slack granted to deterministic inequality checks.
pub const DETERMINISTIC_SLACK: f64 = 1e-9;

/// Iteration cap of [`find_stable_point`].
pub const STABLE_POINT_MAX_ITERS: usize = 1_000_000;

/// One record. Ridge records are a feature vector with the label appended;
/// logistic records are the signed feature `x = z·u`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub vector: Vec<f64>,
}

impl DataPoint {
    pub fn new(vector: Vec<f64>) -> Result<Self> {
        if let Some(i) = vector.iter().position(|v| !v.is_finite()) {
            return domain(format!(
                "data point has a non-finite entry at coordinate {i}"
            ));
        }
        Ok(Self { vector })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vector
    }
}

/// An ordered list of points of equal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<DataPoint>,
    dim: usize,
    diameter_bound: Option<f64>,
}

impl Dataset {
    pub fn new(points: Vec<DataPoint>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::TooFewPoints { needed: 1, got: 0 });
        };
        let dim = first.dim();
        if dim == 0 {
            return domain("data points must have at least one coordinate");
        }
        for p in &points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.dim(),
                });
            }
        }
        Ok(Self {
            points,
            dim,
            diameter_bound: None,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            rows.into_iter()
                .map(DataPoint::new)
                .collect::<Result<Vec<_>>>()?,
        )
    }

    /// Attach a data diameter `D`; it is checked against the exact (or bounded) diameter.
    pub fn with_diameter_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) {
            return domain(format!("diameter bound must be positive, got {bound}"));
        }
        if self.len() >= 2 {
            let d = data_diameter(&self)?;
            if d > bound * (1.0 + DETERMINISTIC_SLACK) {
                return domain(format!(
                    "dataset diameter {d} exceeds the declared bound {bound}"
                ));
            }
        }
        self.diameter_bound = Some(bound);
        Ok(self)
    }

    pub fn diameter_bound(&self) -> Option<f64> {
        self.diameter_bound
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.points[i].vector
    }

    /// Rejects any record outside the closed ball of radius `r`.
    pub fn check_radius(&self, r: f64) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            let nx = norm(&p.vector);
            if nx > r * (1.0 + 1e-12) {
                return domain(format!(
                    "record {i} has norm {nx}, outside the data ball of radius {r}"
                ));
            }
        }
        Ok(())
    }
}

/// Which loss a dataset file is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Ridge,
    Logistic,
    /// Ridge regularised towards a fixed point that also generates the labels.
    Realizable,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ridge => "ridge",
            ModelKind::Logistic => "logistic",
            ModelKind::Realizable => "realizable",
        }
    }

    /// Record dimension for a given parameter dimension.
    pub fn data_dim(self, param_dim: usize) -> usize {
        match self {
            ModelKind::Logistic => param_dim,
            ModelKind::Ridge | ModelKind::Realizable => param_dim + 1,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ridge" => Ok(ModelKind::Ridge),
            "logistic" => Ok(ModelKind::Logistic),
            "realizable" => Ok(ModelKind::Realizable),
            other => domain(format!(
                "unknown model kind '{other}' (expected ridge, logistic or realizable)"
            )),
        }
    }
}

/// Constants of the gradient-regularity and dissipativity assumptions plus
/// the data diameter and the stable-point norm used by the privacy constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityConstants {
    /// Lipschitz constant of the gradient in θ.
    pub k1: f64,
    /// Data-coupling constant.
    pub k2: f64,
    /// Bound on `‖∇f(0, x)‖`.
    pub b: f64,
    /// Dissipativity slope.
    pub m: f64,
    /// Dissipativity offset.
    pub k: f64,
    /// Data diameter `D`.
    pub diameter: f64,
    /// `‖ϑ⋆‖`, or a bound on the stable-point norms when no universal point exists.
    pub theta_star_norm: f64,
}

impl RegularityConstants {
    pub fn validate(&self) -> Result<()> {
        let pos = [("K1", self.k1), ("K2", self.k2), ("m", self.m)];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return domain(format!("{name} must be positive and finite, got {v}"));
            }
        }
        let nonneg = [
            ("B", self.b),
            ("K", self.k),
            ("D", self.diameter),
            ("theta_star_norm", self.theta_star_norm),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return domain(format!("{name} must be nonnegative and finite, got {v}"));
            }
        }
        Ok(())
    }

    pub fn with_diameter(mut self, d: f64) -> Self {
        self.diameter = d;
        self
    }

    pub fn with_theta_star_norm(mut self, t: f64) -> Self {
        self.theta_star_norm = t;
        self
    }

    /// `(B + sqrt(B² + 4mK)) / (2m)`.
    pub fn stable_point_bound(&self) -> f64 {
        stable_point_norm_bound(self.b, self.m, self.k)
    }
}

/// `(B + sqrt(B² + 4mK)) / (2m)`, the bound on the norm of any stable point.
pub fn stable_point_norm_bound(b: f64, m: f64, k: f64) -> f64 {
    (b + (b * b + 4.0 * m * k).sqrt()) / (2.0 * m)
}

/// A per-record loss with an exact gradient oracle.
pub trait LossModel: Send + Sync + fmt::Debug {
    fn kind(&self) -> ModelKind;
    fn name(&self) -> &'static str {
        self.kind().as_str()
    }
    fn param_dim(&self) -> usize;
    fn data_dim(&self) -> usize {
        self.kind().data_dim(self.param_dim())
    }
    fn lambda(&self) -> f64;
    fn radius(&self) -> f64;
    fn loss(&self, theta: &[f64], x: &[f64]) -> f64;
    /// Overwrites `out` with `∇_θ f(θ, x)`.
    fn grad_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]);
    fn constants(&self) -> RegularityConstants;
    /// A point where every record's gradient vanishes, if the model has one.
    fn universal_stable_point(&self) -> Option<&[f64]> {
        None
    }
    /// True when records split as `(a, b)` and the data term is `½(aᵀθ - b)²`;
    /// enables precomputed sufficient statistics for full gradients.
    fn is_least_squares(&self) -> bool {
        false
    }

    fn grad(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_dims(self, theta, x)?;
        let mut out = vec![0.0; theta.len()];
        self.grad_into(theta, x, &mut out);
        Ok(out)
    }
}

fn check_dims<M: LossModel + ?Sized>(model: &M, theta: &[f64], x: &[f64]) -> Result<()> {
    if theta.len() != model.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.param_dim(),
            got: theta.len(),
        });
    }
    if x.len() != model.data_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.data_dim(),
            got: x.len(),
        });
    }
    Ok(())
}

fn check_model_params(dim: usize, lambda: f64, radius: f64) -> Result<()> {
    if dim == 0 {
        return domain("parameter dimension must be at least 1");
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return domain(format!(
            "regularization lambda must be positive, got {lambda}"
        ));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return domain(format!("data radius must be positive, got {radius}"));
    }
    Ok(())
}

/// `∇f(θ, x) = a aᵀθ - b a + λθ` for `x = (a, b)`.
pub fn ridge_grad(theta: &[f64], x: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if x.len() != theta.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: theta.len() + 1,
            got: x.len(),
        });
    }
    if !(lambda > 0.0) {
        return domain(format!("lambda must be positive, got {lambda}"));
    }
    let mut out = vec![0.0; theta.len()];
    ridge_grad_into(theta, x, lambda, None, &mut out);
    Ok(out)
}

fn ridge_grad_into(theta: &[f64], x: &[f64], lambda: f64, anchor: Option<&[f64]>, out: &mut [f64]) {
    let d = theta.len();
    let (a, b) = (&x[..d], x[d]);
    let r = dot(a, theta) - b;
    for i in 0..d {
        out[i] = r * a[i] + lambda * theta[i];
    }
    if let Some(c) = anchor {
        axpy(-lambda, c, out);
    }
}

pub fn ridge_constants(radius: f64, lambda: f64) -> RegularityConstants {
    let b = radius * radius;
    RegularityConstants {
        k1: radius * radius + lambda,
        k2: 2.0 * radius,
        b,
        m: lambda,
        k: 0.0,
        diameter: 2.0 * radius,
        theta_star_norm: stable_point_norm_bound(b, lambda, 0.0),
    }
}

/// `σ(-t) = 1 / (1 + e^t)` without overflow.
#[inline]
fn sigmoid_neg(t: f64) -> f64 {
    if t >= 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

/// `∇f(θ, x) = -x·σ(-xᵀθ) + λθ` for `f = log(1 + exp(-xᵀθ)) + (λ/2)‖θ‖²`.
pub fn logistic_grad(theta: &[f64], x: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if x.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: x.len(),
        });
    }
    if !(lambda >= 0.0) {
        return domain(format!("lambda must be nonnegative, got {lambda}"));
    }
    let mut out = vec![0.0; theta.len()];
    logistic_grad_into(theta, x, lambda, &mut out);
    Ok(out)
}

fn logistic_grad_into(theta: &[f64], x: &[f64], lambda: f64, out: &mut [f64]) {
    let s = sigmoid_neg(dot(x, theta));
    for i in 0..theta.len() {
        out[i] = -x[i] * s + lambda * theta[i];
    }
}

pub fn logistic_constants(radius: f64, lambda: f64) -> RegularityConstants {
    let b = radius / 2.0;
    RegularityConstants {
        k1: radius * radius + lambda,
        k2: radius.max(1.0),
        b,
        m: lambda,
        k: 0.0,
        diameter: 2.0 * radius,
        theta_star_norm: stable_point_norm_bound(b, lambda, 0.0),
    }
}

/// `½(aᵀθ - b)² + (λ/2)‖θ‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ridge {
    dim: usize,
    lambda: f64,
    radius: f64,
}

impl Ridge {
    pub fn new(dim: usize, lambda: f64, radius: f64) -> Result<Self> {
        check_model_params(dim, lambda, radius)?;
        Ok(Self {
            dim,
            lambda,
            radius,
        })
    }
}

impl LossModel for Ridge {
    fn kind(&self) -> ModelKind {
        ModelKind::Ridge
    }
    fn param_dim(&self) -> usize {
        self.dim
    }
    fn lambda(&self) -> f64 {
        self.lambda
    }
    fn radius(&self) -> f64 {
        self.radius
    }
    fn loss(&self, theta: &[f64], x: &[f64]) -> f64 {
        let r = dot(&x[..self.dim], theta) - x[self.dim];
        0.5 * r * r + 0.5 * self.lambda * dot(theta, theta)
    }
    fn grad_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        ridge_grad_into(theta, x, self.lambda, None, out);
    }
    fn constants(&self) -> RegularityConstants {
        ridge_constants(self.radius, self.lambda)
    }
    fn is_least_squares(&self) -> bool {
        true
    }
}

/// `log(1 + exp(-xᵀθ)) + (λ/2)‖θ‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    dim: usize,
    lambda: f64,
    radius: f64,
}

impl Logistic {
    pub fn new(dim: usize, lambda: f64, radius: f64) -> Result<Self> {
        check_model_params(dim, lambda, radius)?;
        Ok(Self {
            dim,
            lambda,
            radius,
        })
    }
}

impl LossModel for Logistic {
    fn kind(&self) -> ModelKind {
        ModelKind::Logistic
    }
    fn param_dim(&self) -> usize {
        self.dim
    }
    fn lambda(&self) -> f64 {
        self.lambda
    }
    fn radius(&self) -> f64 {
        self.radius
    }
    fn loss(&self, theta: &[f64], x: &[f64]) -> f64 {
        let t = dot(x, theta);
        // log(1 + e^{-t}) = max(-t, 0) + log1p(e^{-|t|})
        (-t).max(0.0) + (-t.abs()).exp().ln_1p() + 0.5 * self.lambda * dot(theta, theta)
    }
    fn grad_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        logistic_grad_into(theta, x, self.lambda, out);
    }
    fn constants(&self) -> RegularityConstants {
        logistic_constants(self.radius, self.lambda)
    }
}

/// `½(aᵀθ - b)² + (λ/2)‖θ - ϑ⋆‖²` on records with `b = aᵀϑ⋆`.
///
/// Every record's gradient vanishes at `ϑ⋆`, so this model has a universal
/// stable point.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizableRidge {
    anchor: Vec<f64>,
    lambda: f64,
    radius: f64,
}

impl RealizableRidge {
    pub fn new(anchor: Vec<f64>, lambda: f64, radius: f64) -> Result<Self> {
        check_model_params(anchor.len(), lambda, radius)?;
        if anchor.iter().any(|v| !v.is_finite()) {
            return domain("anchor point must be finite");
        }
        Ok(Self {
            anchor,
            lambda,
            radius,
        })
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    /// Rejects records whose label is not generated by the anchor.
    pub fn check_realizable(&self, data: &Dataset) -> Result<()> {
        let d = self.anchor.len();
        for (i, p) in data.points().iter().enumerate() {
            let x = p.as_slice();
            if x.len() != d + 1 {
                return Err(Error::DimensionMismatch {
                    expected: d + 1,
                    got: x.len(),
                });
            }
            let resid = dot(&x[..d], &self.anchor) - x[d];
            if resid.abs() > 1e-9 * (1.0 + x[d].abs()) {
                return domain(format!(
                    "record {i} is not generated by the anchor (residual {resid})"
                ));
            }
        }
        Ok(())
    }
}

impl LossModel for RealizableRidge {
    fn kind(&self) -> ModelKind {
        ModelKind::Realizable
    }
    fn param_dim(&self) -> usize {
        self.anchor.len()
    }
    fn lambda(&self) -> f64 {
        self.lambda
    }
    fn radius(&self) -> f64 {
        self.radius
    }
    fn loss(&self, theta: &[f64], x: &[f64]) -> f64 {
        let d = self.anchor.len();
        let r = dot(&x[..d], theta) - x[d];
        0.5 * r * r + 0.5 * self.lambda * dist(theta, &self.anchor).powi(2)
    }
    fn grad_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        ridge_grad_into(theta, x, self.lambda, Some(&self.anchor), out);
    }
    fn constants(&self) -> RegularityConstants {
        let r2 = self.radius * self.radius;
        let t = norm(&self.anchor);
        RegularityConstants {
            k1: r2 + self.lambda,
            k2: 2.0 * self.radius,
            b: r2 + self.lambda * t,
            m: self.lambda,
            k: 0.0,
            diameter: 2.0 * self.radius,
            theta_star_norm: t,
        }
    }
    fn universal_stable_point(&self) -> Option<&[f64]> {
        Some(&self.anchor)
    }
    fn is_least_squares(&self) -> bool {
        true
    }
}

/// Build one of the bundled models. `anchor` is required for the realizable kind.
pub fn build_model(
    kind: ModelKind,
    param_dim: usize,
    lambda: f64,
    radius: f64,
    anchor: Option<Vec<f64>>,
) -> Result<Box<dyn LossModel>> {
    Ok(match kind {
        ModelKind::Ridge => Box::new(Ridge::new(param_dim, lambda, radius)?),
        ModelKind::Logistic => Box::new(Logistic::new(param_dim, lambda, radius)?),
        ModelKind::Realizable => {
            let a = anchor
                .ok_or_else(|| Error::Domain("realizable model needs an anchor point".into()))?;
            if a.len() != param_dim {
                return Err(Error::DimensionMismatch {
                    expected: param_dim,
                    got: a.len(),
                });
            }
            Box::new(RealizableRidge::new(a, lambda, radius)?)
        }
    })
}

/// A dataset bound to a model, ready for repeated gradient evaluation.
///
/// For least-squares models the full gradient is `Mθ - c + ∇f(θ, 0)` with
/// `M = mean(a aᵀ)` and `c = mean(b a)` precomputed, so a GD step costs `O(d²)`
/// instead of `O(n d)`.
pub struct Objective<'a> {
    model: &'a dyn LossModel,
    data: &'a Dataset,
    normal_eq: Option<(Vec<f64>, Vec<f64>)>,
    zero: Vec<f64>,
}

impl fmt::Debug for Objective<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("model", &self.model.name())
            .field("n", &self.data.len())
            .field("precomputed", &self.normal_eq.is_some())
            .finish()
    }
}

impl<'a> Objective<'a> {
    pub fn new(model: &'a dyn LossModel, data: &'a Dataset) -> Result<Self> {
        if data.dim() != model.data_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.data_dim(),
                got: data.dim(),
            });
        }
        let d = model.param_dim();
        let normal_eq = model.is_least_squares().then(|| {
            let mut mat = vec![0.0; d * d];
            let mut lin = vec![0.0; d];
            for p in data.points() {
                let (a, b) = (&p.vector[..d], p.vector[d]);
                for i in 0..d {
                    axpy(a[i], a, &mut mat[i * d..(i + 1) * d]);
                }
                axpy(b, a, &mut lin);
            }
            let n = data.len() as f64;
            mat.iter_mut().for_each(|v| *v /= n);
            lin.iter_mut().for_each(|v| *v /= n);
            (mat, lin)
        });
        Ok(Self {
            model,
            data,
            normal_eq,
            zero: vec![0.0; model.data_dim()],
        })
    }

    pub fn model(&self) -> &'a dyn LossModel {
        self.model
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    pub fn dim(&self) -> usize {
        self.model.param_dim()
    }

    /// `∇F(θ) = (1/n) Σ_i ∇f(θ, x_i)`.
    pub fn full_grad_into(&self, theta: &[f64], out: &mut [f64]) {
        match &self.normal_eq {
            Some((mat, lin)) => {
                let d = theta.len();
                self.model.grad_into(theta, &self.zero, out);
                for i in 0..d {
                    out[i] += dot(&mat[i * d..(i + 1) * d], theta) - lin[i];
                }
            }
            None => self.mean_grad_into(theta, 0..self.n(), out),
        }
    }

    pub fn full_grad(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; theta.len()];
        self.full_grad_into(theta, &mut g);
        g
    }

    /// Mean gradient over the records in `idx`.
    pub fn batch_grad_into(&self, theta: &[f64], idx: &[usize], out: &mut [f64]) {
        if idx.len() == self.n() && self.normal_eq.is_some() {
            // a full batch is a permutation of all records
            return self.full_grad_into(theta, out);
        }
        self.mean_grad_into(theta, idx.iter().copied(), out)
    }

    fn mean_grad_into(
        &self,
        theta: &[f64],
        idx: impl ExactSizeIterator<Item = usize>,
        out: &mut [f64],
    ) {
        let b = idx.len() as f64;
        let mut g = vec![0.0; theta.len()];
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in idx {
            self.model.grad_into(theta, self.data.x(i), &mut g);
            axpy(1.0, &g, out);
        }
        out.iter_mut().for_each(|v| *v /= b);
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        self.data
            .points()
            .iter()
            .map(|p| self.model.loss(theta, &p.vector))
            .sum::<f64>()
            / self.n() as f64
    }
}

/// Uniform draw from the closed ball of radius `r`; a quarter of the draws land on the sphere.
pub fn sample_in_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, r: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let nv = norm(&v).max(f64::MIN_POSITIVE);
    let rad = if rng.random::<f64>() < 0.25 {
        r
    } else {
        r * rng.random::<f64>().powf(1.0 / dim as f64)
    };
    v.iter_mut().for_each(|x| *x *= rad / nv);
    v
}

/// Random direction with log-uniform norm in `[lo, hi]`.
fn sample_log_radius<R: Rng + ?Sized>(rng: &mut R, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let nv = norm(&v).max(f64::MIN_POSITIVE);
    let rad = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
    v.iter_mut().for_each(|x| *x *= rad / nv);
    v
}

fn sample_theta_pair<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let theta = sample_log_radius(rng, dim, 1e-3, 1e3);
    let u: f64 = rng.random();
    let hat = if u < 1.0 / 3.0 {
        theta.clone()
    } else if u < 2.0 / 3.0 {
        let mut h = sample_log_radius(rng, dim, 1e-6, 1.0);
        axpy(1.0, &theta, &mut h);
        h
    } else {
        sample_log_radius(rng, dim, 1e-3, 1e3)
    };
    (theta, hat)
}

/// Absolute error of `‖g₁ - g₂‖` from cancellation when both are large.
fn rounding_allowance(g1: &[f64], g2: &[f64]) -> f64 {
    64.0 * f64::EPSILON * (norm(g1) + norm(g2))
}

/// Samples `(θ, θ̂, x, x̂)` and reports the worst ratio of the gradient
/// difference to `K₁‖θ-θ̂‖ + K₂‖x-x̂‖(‖θ‖+‖θ̂‖+1)`. Margin is `1 - ratio`.
pub fn check_pseudo_lipschitz<R: Rng + ?Sized>(
    model: &dyn LossModel,
    consts: &RegularityConstants,
    trials: usize,
    rng: &mut R,
) -> AuditReport {
    let (d, dx, r) = (model.param_dim(), model.data_dim(), model.radius());
    let mut worst = WorstPoint::new();
    let (mut g1, mut g2) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..trials {
        let (theta, hat) = sample_theta_pair(rng, d);
        let x = sample_in_ball(rng, dx, r);
        let xh = if rng.random::<f64>() < 1.0 / 3.0 {
            x.clone()
        } else {
            sample_in_ball(rng, dx, r)
        };
        model.grad_into(&theta, &x, &mut g1);
        model.grad_into(&hat, &xh, &mut g2);
        let lhs = dist(&g1, &g2);
        let rhs = consts.k1 * dist(&theta, &hat)
            + consts.k2 * dist(&x, &xh) * (norm(&theta) + norm(&hat) + 1.0);
        let (ratio, fp) = if rhs > 0.0 {
            (lhs / rhs, rounding_allowance(&g1, &g2) / rhs)
        } else if lhs == 0.0 {
            (0.0, 0.0)
        } else {
            (f64::INFINITY, 0.0)
        };
        worst.observe(1.0 - ratio, DETERMINISTIC_SLACK + fp);
    }
    worst.report(format!("pseudo_lipschitz[{}]", model.name()))
}

/// Checks `⟨∇f(θ₁,x)-∇f(θ₂,x), θ₁-θ₂⟩ ≥ m‖θ₁-θ₂‖² - K` and `‖∇f(0,x)‖ ≤ B`.
/// Margins are normalised by the size of the right-hand side.
pub fn check_dissipativity<R: Rng + ?Sized>(
    model: &dyn LossModel,
    consts: &RegularityConstants,
    trials: usize,
    rng: &mut R,
) -> AuditReport {
    let (d, dx, r) = (model.param_dim(), model.data_dim(), model.radius());
    let mut worst = WorstPoint::new();
    let (mut g1, mut g2) = (vec![0.0; d], vec![0.0; d]);
    let zero = vec![0.0; d];
    for _ in 0..trials {
        let (t1, t2) = sample_theta_pair(rng, d);
        let x = sample_in_ball(rng, dx, r);
        model.grad_into(&t1, &x, &mut g1);
        model.grad_into(&t2, &x, &mut g2);
        let delta: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| a - b).collect();
        let gd: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a - b).collect();
        let sq = dot(&delta, &delta);
        let lhs = dot(&gd, &delta);
        let rhs = consts.m * sq - consts.k;
        let scale = consts.m * sq + consts.k;
        if scale > 0.0 {
            let fp = rounding_allowance(&g1, &g2) * sq.sqrt() / scale;
            worst.observe((lhs - rhs) / scale, DETERMINISTIC_SLACK + fp);
        }
        model.grad_into(&zero, &x, &mut g1);
        let g0 = norm(&g1);
        let bmargin = if consts.b > 0.0 {
            (consts.b - g0) / consts.b
        } else {
            -g0
        };
        worst.observe(bmargin, DETERMINISTIC_SLACK);
    }
    worst.report(format!("dissipativity[{}]", model.name()))
}

/// Largest pairwise distance. Exact up to 10⁴ records; above that, the
/// guaranteed upper bound `2·max‖x - centroid‖`.
pub fn data_diameter(data: &Dataset) -> Result<f64> {
    let n = data.len();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    if n <= 10_000 {
        let mut best = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(dist(data.x(i), data.x(j)));
            }
        }
        return Ok(best);
    }
    let mut centroid = vec![0.0; data.dim()];
    for p in data.points() {
        axpy(1.0 / n as f64, &p.vector, &mut centroid);
    }
    let far = data
        .points()
        .iter()
        .map(|p| dist(&p.vector, &centroid))
        .fold(0.0, f64::max);
    log::info!("data_diameter: n = {n} > 10^4, returning the centroid bound 2·max‖x - c‖");
    Ok(2.0 * far)
}

/// Copy of `data` with record `index` replaced.
pub fn make_neighbor(data: &Dataset, index: usize, replacement: DataPoint) -> Result<Dataset> {
    if index >= data.len() {
        return Err(Error::IndexOutOfRange {
            index,
            len: data.len(),
        });
    }
    if replacement.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: replacement.dim(),
        });
    }
    let mut out = data.clone();
    out.points[index] = replacement;
    out.diameter_bound = None;
    Ok(out)
}

/// Index of the single differing record, or an error if the datasets are not neighbours.
/// Identical datasets return `None`.
pub fn neighbor_index(a: &Dataset, b: &Dataset) -> Result<Option<usize>> {
    if a.len() != b.len() {
        return Err(Error::NotNeighbors(format!(
            "sizes differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.dim() != b.dim() {
        return Err(Error::NotNeighbors(format!(
            "record dimensions differ ({} vs {})",
            a.dim(),
            b.dim()
        )));
    }
    let diff: Vec<usize> = (0..a.len()).filter(|&i| a.x(i) != b.x(i)).collect();
    match diff.len() {
        0 => Ok(None),
        1 => Ok(Some(diff[0])),
        k => Err(Error::NotNeighbors(format!("{k} records differ"))),
    }
}

/// Deterministic full-batch gradient descent from zero with step
/// `min(m/(2K₁²), 1/m, 1)` until `‖∇F‖ ≤ tol`.
pub fn find_stable_point(model: &dyn LossModel, data: &Dataset, tol: f64) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let consts = model.constants();
    let obj = Objective::new(model, data)?;
    let eta = step_size_limit(consts.m, consts.k1)?;
    let d = model.param_dim();
    let mut theta = vec![0.0; d];
    let mut g = vec![0.0; d];
    for _ in 0..STABLE_POINT_MAX_ITERS {
        obj.full_grad_into(&theta, &mut g);
        let gn = norm(&g);
        if !gn.is_finite() {
            break;
        }
        if gn <= tol {
            let bound = consts.stable_point_bound() + tol / consts.m;
            if norm(&theta) > bound {
                log::warn!(
                    "stable point norm {} exceeds the bound {bound}",
                    norm(&theta)
                );
            }
            return Ok(theta);
        }
        axpy(-eta, &g, &mut theta);
    }
    Err(Error::NoConvergence {
        tol,
        iters: STABLE_POINT_MAX_ITERS,
    })
}

/// Serialise as `# dim=<d'> kind=<kind>` followed by one comma-separated record per line.
///
/// Realizable data is written as `ridge` since the record layout is the same.
pub fn format_dataset(data: &Dataset, kind: ModelKind) -> String {
    let k = match kind {
        ModelKind::Realizable => ModelKind::Ridge,
        k => k,
    };
    let mut s = format!("# dim={} kind={}\n", data.dim(), k);
    for p in data.points() {
        let row: Vec<String> = p.vector.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Parse the text format written by [`format_dataset`]. Blank lines and later
/// `#` comment lines are skipped.
pub fn parse_dataset(text: &str) -> Result<(Dataset, ModelKind)> {
    let mut lines = text.lines().enumerate();
    let (dim, kind) = loop {
        let Some((i, line)) = lines.next() else {
            return Err(Error::Parse {
                line: 0,
                msg: "missing header '# dim=<d> kind=<ridge|logistic>'".into(),
            });
        };
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        break parse_header(t).map_err(|msg| Error::Parse { line: i + 1, msg })?;
    };
    let mut rows = Vec::new();
    for (i, line) in lines {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row = t
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        if row.len() != dim {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected {dim} fields, got {}", row.len()),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: i + 1,
                msg: "non-finite value".into(),
            });
        }
        rows.push(row);
    }
    Ok((Dataset::from_rows(rows)?, kind))
}

fn parse_header(line: &str) -> std::result::Result<(usize, ModelKind), String> {
    let body = line.strip_prefix('#').ok_or("header must start with '#'")?;
    let (mut dim, mut kind) = (None, None);
    for tok in body.split_whitespace() {
        match tok.split_once('=') {
            Some(("dim", v)) => {
                dim = Some(v.parse::<usize>().map_err(|e| format!("bad dim: {e}"))?)
            }
            Some(("kind", v)) => kind = Some(v.parse::<ModelKind>().map_err(|e| e.to_string())?),
            _ => return Err(format!("unexpected header token '{tok}'")),
        }
    }
    match (dim, kind) {
        (Some(0), _) => Err("dim must be positive".into()),
        (Some(d), Some(k)) => Ok((d, k)),
        _ => Err("header needs both dim=<d> and kind=<ridge|logistic>".into()),
    }
}

/// Synthetic records inside the ball of radius `radius`.
///
/// * ridge: `a` uniform in a ball, `b = aᵀw + noise` with `w = e₁`, then the
///   record is shrunk radially if it leaves the ball;
/// * logistic: `u` uniform in the ball, label `z = sign(u₁ + noise)`, record `z·u`;
/// * realizable: `a` uniform in a ball, `b = aᵀϑ⋆`, jointly shrunk (which keeps `b = aᵀϑ⋆`).
pub fn generate_dataset<R: Rng + ?Sized>(
    kind: ModelKind,
    n: usize,
    param_dim: usize,
    radius: f64,
    anchor: Option<&[f64]>,
    rng: &mut R,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    check_model_params(param_dim, 1.0, radius)?;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let row = match kind {
            ModelKind::Ridge => {
                let a = sample_in_ball(rng, param_dim, radius / std::f64::consts::SQRT_2);
                let noise: f64 = rng.sample(StandardNormal);
                let mut x = a.clone();
                x.push(a[0] + 0.1 * radius * noise);
                shrink_to(&mut x, radius);
                x
            }
            ModelKind::Logistic => {
                let u = sample_in_ball(rng, param_dim, radius);
                let noise: f64 = rng.sample(StandardNormal);
                let z = if u[0] + 0.1 * radius * noise >= 0.0 {
                    1.0
                } else {
                    -1.0
                };
                u.into_iter().map(|v| z * v).collect()
            }
            ModelKind::Realizable => {
                let w = anchor
                    .ok_or_else(|| Error::Domain("realizable data needs an anchor point".into()))?;
                if w.len() != param_dim {
                    return Err(Error::DimensionMismatch {
                        expected: param_dim,
                        got: w.len(),
                    });
                }
                let a = sample_in_ball(rng, param_dim, radius);
                let mut x = a.clone();
                x.push(dot(&a, w));
                shrink_to(&mut x, radius);
                x
            }
        };
        rows.push(row);
    }
    Dataset::from_rows(rows)
}

fn shrink_to(x: &mut [f64], r: f64) {
    let nx = norm(x);
    if nx > r {
        x.iter_mut().for_each(|v| *v *= r / nx);
    }
}
