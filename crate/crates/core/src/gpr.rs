//! Gaussian-process regression with a constant mean and a Matérn 5/2 ARD
//! kernel, exact or FITC-sparse.
//!
//! Targets are standardized before fitting. The constant mean is profiled out
//! by its generalized least-squares estimate, so the simplex search only sees
//! the log signal variance, the log length-scales and the log noise variance.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const MAX_JITTER: f64 = 1e-6;

/// Training inputs in the unit box and one scalar response per input.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let mut data = Self::default();
        for (x, y) in inputs.into_iter().zip(targets) {
            data.push(x, y)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if let Some(first) = self.inputs.first() {
            if first.len() != x.len() {
                return Err(Error::InvalidArgument(format!(
                    "input has dimension {}, expected {}",
                    x.len(),
                    first.len()
                )));
            }
        }
        if x.is_empty() || !x.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("inputs must lie in the unit box".into()));
        }
        if !y.is_finite() {
            return Err(Error::NonFinite("regression target"));
        }
        let dup = self
            .inputs
            .iter()
            .any(|o| o.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-12));
        if dup {
            return Err(Error::InvalidArgument("duplicate input".into()));
        }
        self.inputs.push(x);
        self.targets.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprHyperparams {
    pub mean: f64,
    pub signal_var: f64,
    pub lengthscales: Vec<f64>,
    pub noise_var: f64,
}

impl GprHyperparams {
    pub fn isotropic(dim: usize, mean: f64, signal_var: f64, lengthscale: f64, noise_var: f64) -> Self {
        Self { mean, signal_var, lengthscales: vec![lengthscale; dim], noise_var }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let ok = self.signal_var > 0.0
            && self.noise_var >= 0.0
            && self.mean.is_finite()
            && self.lengthscales.len() == dim
            && self.lengthscales.iter().all(|l| *l > 0.0 && l.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid hyperparameters {self:?} for dimension {dim}")))
        }
    }
}

/// `sf2 (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r)` with ARD-scaled distance `r`.
pub fn matern52_ard(x1: &[f64], x2: &[f64], hyp: &GprHyperparams) -> f64 {
    debug_assert_eq!(x1.len(), x2.len());
    let r2: f64 = x1
        .iter()
        .zip(x2)
        .zip(&hyp.lengthscales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum();
    matern52_r2(r2, hyp.signal_var)
}

fn matern52_r2(r2: f64, sf2: f64) -> f64 {
    let sr = (5.0 * r2).sqrt();
    sf2 * (1.0 + sr + 5.0 * r2 / 3.0) * (-sr).exp()
}

/// Rows pre-divided by the length-scales so the kernel only needs squared distances.
fn scaled(points: &[Vec<f64>], ls: &[f64]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.iter().zip(ls).map(|(a, l)| a / l).collect()).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kernel_matrix(a: &[Vec<f64>], b: &[Vec<f64>], sf2: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| matern52_r2(sq_dist(&a[i], &b[j]), sf2))
}

fn symmetric_kernel(a: &[Vec<f64>], sf2: f64) -> DMatrix<f64> {
    let n = a.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = sf2;
        for j in 0..i {
            let v = matern52_r2(sq_dist(&a[i], &a[j]), sf2);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Lower Cholesky factor with jitter escalation up to `MAX_JITTER * scale`.
fn cholesky_jittered(mut m: DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let mut jitter = 0.0;
    let mut added = 0.0;
    loop {
        if jitter > added {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter - added;
            }
            added = jitter;
        }
        if let Some(ch) = m.clone().cholesky() {
            return Ok(ch.unpack());
        }
        jitter = if jitter == 0.0 { 1e-12 * scale } else { jitter * 100.0 };
        if jitter > MAX_JITTER * scale * (1.0 + 1e-9) {
            return Err(Error::Factorization { jitter: added });
        }
    }
}

fn lower_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.solve_lower_triangular(b).expect("Cholesky factor has a positive diagonal")
}

fn lower_solve_mat(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    l.solve_lower_triangular(b).expect("Cholesky factor has a positive diagonal")
}

fn upper_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.tr_solve_lower_triangular(b).expect("Cholesky factor has a positive diagonal")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GprMode {
    Exact,
    Fitc,
}

/// Factorization of the training covariance, independent of the mean.
#[derive(Debug, Clone)]
enum Factor {
    Exact {
        /// chol(K + sn2 I)
        l: DMatrix<f64>,
    },
    Fitc {
        /// chol(Kuu)
        luu: DMatrix<f64>,
        /// Luu^-1 Kuf
        v: DMatrix<f64>,
        /// diag(Kff - Qff) + sn2
        lambda: DVector<f64>,
        /// chol(I + V Lambda^-1 V^T)
        lb: DMatrix<f64>,
    },
}

impl Factor {
    fn exact(x: &[Vec<f64>], sf2: f64, sn2: f64) -> Result<Self> {
        let mut k = symmetric_kernel(x, sf2);
        for i in 0..x.len() {
            k[(i, i)] += sn2;
        }
        Ok(Self::Exact { l: cholesky_jittered(k, sf2)? })
    }

    fn fitc(x: &[Vec<f64>], z: &[Vec<f64>], sf2: f64, sn2: f64) -> Result<Self> {
        let luu = cholesky_jittered(symmetric_kernel(z, sf2), sf2)?;
        let kuf = kernel_matrix(z, x, sf2);
        let v = lower_solve_mat(&luu, &kuf);
        let n = x.len();
        let lambda = DVector::from_fn(n, |i, _| {
            let q: f64 = v.column(i).norm_squared();
            (sf2 - q).max(0.0) + sn2.max(1e-12 * sf2)
        });
        let m = z.len();
        let mut b = DMatrix::identity(m, m);
        let mut vs = v.clone();
        for (i, mut col) in vs.column_iter_mut().enumerate() {
            col /= lambda[i].sqrt();
        }
        b.gemm(1.0, &vs, &vs.transpose(), 1.0);
        let lb = cholesky_jittered(b, 1.0)?;
        Ok(Self::Fitc { luu, v, lambda, lb })
    }

    /// `C^-1 r` for the effective training covariance `C`.
    fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Exact { l } => upper_solve(l, &lower_solve(l, r)),
            Self::Fitc { v, lambda, lb, .. } => {
                let lr = r.component_div(lambda);
                let t = upper_solve(lb, &lower_solve(lb, &(v * &lr)));
                lr - (v.transpose() * t).component_div(lambda)
            }
        }
    }

    fn logdet(&self) -> f64 {
        match self {
            Self::Exact { l } => 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>(),
            Self::Fitc { lambda, lb, .. } => {
                lambda.iter().map(|d| d.ln()).sum::<f64>()
                    + 2.0 * lb.diagonal().iter().map(|d| d.ln()).sum::<f64>()
            }
        }
    }

    /// Generalized least-squares estimate of the constant mean.
    fn gls_mean(&self, y: &DVector<f64>) -> f64 {
        let ones = DVector::from_element(y.len(), 1.0);
        let ci = self.solve(&ones);
        ci.dot(y) / ci.sum()
    }

    fn lml(&self, y: &DVector<f64>, mean: f64) -> f64 {
        let r = y.add_scalar(-mean);
        -0.5 * r.dot(&self.solve(&r)) - 0.5 * self.logdet() - 0.5 * y.len() as f64 * LN_2PI
    }
}

/// Gaussian log evidence of `data` under `hyp` with the exact covariance.
pub fn log_marginal_likelihood(data: &Dataset, hyp: &GprHyperparams) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    hyp.validate(data.dim())?;
    let x = scaled(data.inputs(), &hyp.lengthscales);
    let y = DVector::from_column_slice(data.targets());
    let factor = Factor::exact(&x, hyp.signal_var, hyp.noise_var)?;
    Ok(factor.lml(&y, hyp.mean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GprOptions {
    pub restarts: usize,
    /// objective evaluations per restart
    pub max_evals: usize,
    /// FITC is used above this many points
    pub sparse_threshold: usize,
    pub inducing_points: usize,
    pub noise_floor: f64,
    pub seed: u64,
}

impl Default for GprOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_evals: 200,
            sparse_threshold: 300,
            inducing_points: 300,
            noise_floor: 1e-8,
            seed: 0,
        }
    }
}

impl GprOptions {
    pub fn mode_for(&self, n: usize) -> GprMode {
        if n > self.sparse_threshold {
            GprMode::Fitc
        } else {
            GprMode::Exact
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Optimized,
    /// every restart failed; prior hyperparameters are in use
    PriorFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub std: f64,
}

/// Fitted surrogate. Immutable after construction and safe to share across threads.
#[derive(Debug, Clone)]
pub struct GprModel {
    /// hyperparameters in standardized target units
    hyp: GprHyperparams,
    y_mean: f64,
    y_scale: f64,
    mode: GprMode,
    /// training inputs (exact) or inducing inputs (FITC), scaled by the length-scales
    basis: Vec<Vec<f64>>,
    factor: Factor,
    /// mean weights on the basis points
    alpha: DVector<f64>,
    lml: f64,
    status: FitStatus,
}

/// Log-hyperparameter bounds in standardized units: `[ln sf2, ln l_1.., ln sn2]`.
fn bounds(dim: usize, noise_floor: f64) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![(1e-6f64).ln()];
    let mut hi = vec![(1e2f64).ln()];
    lo.extend(std::iter::repeat_n((1e-2f64).ln(), dim));
    hi.extend(std::iter::repeat_n((1e2f64).ln(), dim));
    lo.push(noise_floor.max(1e-300).ln());
    hi.push(0.0);
    (lo, hi)
}

impl GprModel {
    /// Fits hyperparameters by multi-start simplex search on the log evidence.
    pub fn fit(data: &Dataset, mode: GprMode, opts: &GprOptions) -> Result<Self> {
        Self::fit_from(data, mode, opts, None)
    }

    /// As [`GprModel::fit`]; `previous` (standardized units) seeds the first restart.
    pub fn fit_from(
        data: &Dataset,
        mode: GprMode,
        opts: &GprOptions,
        previous: Option<&GprHyperparams>,
    ) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::InvalidArgument("fitting needs at least two points".into()));
        }
        let dim = data.dim();
        let (y_mean, y_scale) = standardization(data.targets());
        let ys: Vec<f64> = data.targets().iter().map(|t| (t - y_mean) / y_scale).collect();
        let y = DVector::from_vec(ys);
        let inducing = match mode {
            GprMode::Exact => None,
            GprMode::Fitc => Some(inducing_subset(data, opts.inducing_points, opts.seed)),
        };
        let (lo, hi) = bounds(dim, opts.noise_floor);
        let unpack = |theta: &[f64]| GprHyperparams {
            mean: 0.0,
            signal_var: theta[0].exp(),
            lengthscales: theta[1..=dim].iter().map(|t| t.exp()).collect(),
            noise_var: theta[dim + 1].exp(),
        };
        let objective = |theta: &[f64]| -> f64 {
            let mut penalty = 0.0;
            let clamped: Vec<f64> = theta
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let c = t.clamp(lo[i], hi[i]);
                    penalty += (t - c).powi(2);
                    c
                })
                .collect();
            let hyp = unpack(&clamped);
            let x = scaled(data.inputs(), &hyp.lengthscales);
            let factor = match &inducing {
                None => Factor::exact(&x, hyp.signal_var, hyp.noise_var),
                Some(z) => Factor::fitc(&x, &scaled(z, &hyp.lengthscales), hyp.signal_var, hyp.noise_var),
            };
            match factor {
                Ok(f) => {
                    let nll = -f.lml(&y, f.gls_mean(&y));
                    if nll.is_finite() {
                        nll + 1e3 * penalty
                    } else {
                        f64::INFINITY
                    }
                }
                Err(_) => f64::INFINITY,
            }
        };

        let prior: Vec<f64> = std::iter::once(0.0)
            .chain(std::iter::repeat_n((0.5f64).ln(), dim))
            .chain(std::iter::once((1e-4f64).max(opts.noise_floor).ln()))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for r in 0..opts.restarts.max(1) {
            let start: Vec<f64> = match (r, previous) {
                (0, Some(p)) if p.lengthscales.len() == dim => std::iter::once(p.signal_var.ln())
                    .chain(p.lengthscales.iter().map(|l| l.ln()))
                    .chain(std::iter::once(p.noise_var.max(opts.noise_floor).ln()))
                    .collect(),
                (0, _) => prior.clone(),
                _ => {
                    let mut s = vec![rng.random_range((0.1f64).ln()..(10f64).ln())];
                    s.extend((0..dim).map(|_| rng.random_range((0.05f64).ln()..(5f64).ln())));
                    s.push(rng.random_range(opts.noise_floor.max(1e-300).ln().max((1e-8f64).ln())..(1e-2f64).ln()));
                    s
                }
            };
            let start: Vec<f64> = start.iter().enumerate().map(|(i, t)| t.clamp(lo[i], hi[i])).collect();
            let (theta, f) = nelder_mead(&objective, start, 1.0, opts.max_evals);
            if f.is_finite() && best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, theta));
            }
        }
        let (theta, status) = match best {
            Some((_, t)) => (t, FitStatus::Optimized),
            None => {
                log::warn!("all hyperparameter restarts failed; using prior hyperparameters");
                (prior, FitStatus::PriorFallback)
            }
        };
        let theta: Vec<f64> = theta.iter().enumerate().map(|(i, t)| t.clamp(lo[i], hi[i])).collect();
        let mut hyp = unpack(&theta);
        let mut model = Self::build(data.inputs(), &y, &mut hyp, inducing.as_deref(), true)?;
        model.y_mean = y_mean;
        model.y_scale = y_scale;
        model.status = status;
        Ok(model)
    }

    /// Model with fixed hyperparameters (original target units). FITC uses
    /// `inducing` as its inducing inputs.
    pub fn with_hyperparams(
        data: &Dataset,
        hyp: &GprHyperparams,
        inducing: Option<&[Vec<f64>]>,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        hyp.validate(data.dim())?;
        let y = DVector::from_column_slice(data.targets());
        let mut hyp = hyp.clone();
        Self::build(data.inputs(), &y, &mut hyp, inducing, false)
    }

    fn build(
        inputs: &[Vec<f64>],
        y: &DVector<f64>,
        hyp: &mut GprHyperparams,
        inducing: Option<&[Vec<f64>]>,
        profile_mean: bool,
    ) -> Result<Self> {
        let x = scaled(inputs, &hyp.lengthscales);
        let (factor, basis, mode) = match inducing {
            None => (Factor::exact(&x, hyp.signal_var, hyp.noise_var)?, x.clone(), GprMode::Exact),
            Some(z) => {
                let zs = scaled(z, &hyp.lengthscales);
                (Factor::fitc(&x, &zs, hyp.signal_var, hyp.noise_var)?, zs, GprMode::Fitc)
            }
        };
        if profile_mean {
            hyp.mean = factor.gls_mean(y);
        }
        let lml = factor.lml(y, hyp.mean);
        let r = y.add_scalar(-hyp.mean);
        let alpha = match &factor {
            Factor::Exact { .. } => factor.solve(&r),
            Factor::Fitc { luu, v, lambda, lb } => {
                let beta = lower_solve(lb, &(v * r.component_div(lambda)));
                upper_solve(luu, &upper_solve(lb, &beta))
            }
        };
        Ok(Self {
            hyp: hyp.clone(),
            y_mean: 0.0,
            y_scale: 1.0,
            mode,
            basis,
            factor,
            alpha,
            lml,
            status: FitStatus::Optimized,
        })
    }

    pub fn mode(&self) -> GprMode {
        self.mode
    }

    pub fn status(&self) -> FitStatus {
        self.status
    }

    /// Log evidence of the standardized targets at the fitted hyperparameters.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Hyperparameters in standardized target units.
    pub fn standardized_hyperparams(&self) -> &GprHyperparams {
        &self.hyp
    }

    /// Hyperparameters in original target units.
    pub fn hyperparams(&self) -> GprHyperparams {
        let s2 = self.y_scale * self.y_scale;
        GprHyperparams {
            mean: self.y_mean + self.y_scale * self.hyp.mean,
            signal_var: self.hyp.signal_var * s2,
            lengthscales: self.hyp.lengthscales.clone(),
            noise_var: self.hyp.noise_var * s2,
        }
    }

    /// Posterior mean and standard deviation of a noisy observation at `x`.
    pub fn predict(&self, x: &[f64]) -> Prediction {
        let xs: Vec<f64> = x.iter().zip(&self.hyp.lengthscales).map(|(a, l)| a / l).collect();
        let sf2 = self.hyp.signal_var;
        let k = DVector::from_iterator(
            self.basis.len(),
            self.basis.iter().map(|b| matern52_r2(sq_dist(&xs, b), sf2)),
        );
        let mean = self.hyp.mean + k.dot(&self.alpha);
        let explained = match &self.factor {
            Factor::Exact { l } => lower_solve(l, &k).norm_squared(),
            Factor::Fitc { luu, lb, .. } => {
                let v = lower_solve(luu, &k);
                v.norm_squared() - lower_solve(lb, &v).norm_squared()
            }
        };
        let var = (sf2 - explained).max(0.0) + self.hyp.noise_var;
        Prediction {
            mean: self.y_mean + self.y_scale * mean,
            std: self.y_scale * var.sqrt(),
        }
    }
}

fn standardization(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 1e-12 * mean.abs().max(1.0) {
        (mean, sd)
    } else {
        (mean, 1.0)
    }
}

fn inducing_subset(data: &Dataset, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = data.len();
    if m >= n {
        return data.inputs().to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1d0c_e5ed);
    let mut idx = index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| data.inputs()[i].clone()).collect()
}

/// Downhill simplex minimization; returns the best vertex and its value.
fn nelder_mead(f: &impl Fn(&[f64]) -> f64, x0: Vec<f64>, step: f64, max_evals: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = f(&x0);
    simplex.push((x0.clone(), f0));
    for i in 0..n {
        let mut x = x0.clone();
        x[i] += step;
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let mut evals = n + 1;
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    while evals < max_evals {
        order(&mut simplex);
        let (best, worst) = (simplex[0].1, simplex[n].1);
        if worst.is_finite() && (worst - best).abs() <= 1e-10 * (1.0 + best.abs()) {
            break;
        }
        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (w - c)).collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            };
            evals += 1;
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for (x, fx) in simplex.iter_mut().skip(1) {
                    for (xi, bi) in x.iter_mut().zip(&x_best) {
                        *xi = bi + 0.5 * (*xi - bi);
                    }
                    *fx = f(x);
                }
                evals += n;
            }
        }
    }
    order(&mut simplex);
    simplex.swap_remove(0)
}
