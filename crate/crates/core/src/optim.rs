//! Test-time adaptation: Adam on a logit field whose softmax is the
//! segmentation, minimising `L_topo + lambda * L_mse` against the initial
//! prediction.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::complex::Construction;
use crate::error::{Error, Result};
use crate::grid::{GridShape, ProbSegmentation};
use crate::loss::{combined_loss_channels, LossBreakdown};
use crate::prior::BettiPrior;
use crate::scalar::Real;

/// Floor applied to probabilities before taking logs when clamping is on.
pub const DEFAULT_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub construction: Construction,
    /// Recorded with the run; the optimisation itself draws no random numbers.
    pub seed: u64,
    /// Replace probabilities below this value before taking logs. `None`
    /// rejects inputs with zeros.
    pub clamp: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            // Adam moves a logit by about `lr` per step, and a defect at
            // probability 0.8 to 0.9 needs a shift of 1.5 to 2.5 to flip
            learning_rate: 5e-2,
            lambda: 1000.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            construction: Construction::V,
            seed: 0,
            clamp: None,
        }
    }
}

impl OptimizerConfig {
    /// Defaults with the similarity weight of the 2D (`1000`) or 3D (`1`)
    /// cardiac task.
    pub fn for_ndim(ndim: usize) -> Self {
        Self {
            lambda: if ndim == 3 { 1.0 } else { 1000.0 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if !positive(self.learning_rate) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        for (name, b) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !positive(self.adam_epsilon) {
            return Err(Error::invalid("adam epsilon must be > 0"));
        }
        if let Some(c) = self.clamp {
            if !(c > 0.0 && c < 0.5) {
                return Err(Error::invalid(format!("clamp must lie in (0, 0.5), got {c}")));
            }
        }
        Ok(())
    }
}

/// Adam moments for a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
            lr: T::from_f64_lossy(lr),
            beta1: T::from_f64_lossy(beta1),
            beta2: T::from_f64_lossy(beta2),
            eps: T::from_f64_lossy(eps),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One bias-corrected update of `params` along `-grad`.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] = params[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Unconstrained per-class scores; the softmax over classes is the
/// segmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitField<T> {
    shape: GridShape,
    num_classes: usize,
    /// Channel-major, `num_classes * shape.len()` values.
    values: Vec<T>,
}

impl<T: Real> LogitField<T> {
    /// `log p`, optionally after flooring at `clamp`.
    pub fn from_probabilities(seg: &ProbSegmentation<T>, clamp: Option<f64>) -> Result<Self> {
        let min = seg.min_probability();
        if min <= T::zero() && clamp.is_none() {
            return Err(Error::invalid(format!(
                "initial probabilities must be strictly positive (minimum is {min}); \
                 enable clamping (e.g. at {DEFAULT_CLAMP}) to floor them"
            )));
        }
        let floor = T::from_f64_lossy(clamp.unwrap_or(0.0));
        let values = seg.to_stacked().into_iter().map(|p| p.max(floor).ln()).collect();
        Ok(Self {
            shape: seg.shape().clone(),
            num_classes: seg.num_classes(),
            values,
        })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn softmax_channels(&self) -> Vec<Vec<T>> {
        let n = self.shape.len();
        let k = self.num_classes;
        let mut out = vec![vec![T::zero(); n]; k];
        for i in 0..n {
            let mut max = T::neg_infinity();
            for c in 0..k {
                max = max.max(self.values[c * n + i]);
            }
            let mut sum = T::zero();
            for c in 0..k {
                let e = (self.values[c * n + i] - max).exp();
                out[c][i] = e;
                sum = sum + e;
            }
            for ch in out.iter_mut() {
                ch[i] = ch[i] / sum;
            }
        }
        out
    }

    pub fn softmax(&self) -> ProbSegmentation<T> {
        ProbSegmentation::from_parts_unchecked(self.shape.clone(), self.softmax_channels())
    }

    /// Chain rule through the softmax: `dL/dz_k = p_k (g_k - sum_j p_j g_j)`.
    pub fn pullback(probs: &[Vec<T>], grad: &[Vec<T>]) -> Vec<T> {
        let k = probs.len();
        let n = probs[0].len();
        let mut out = vec![T::zero(); k * n];
        for i in 0..n {
            let mut dot = T::zero();
            for c in 0..k {
                dot = dot + probs[c][i] * grad[c][i];
            }
            for c in 0..k {
                out[c * n + i] = probs[c][i] * (grad[c][i] - dot);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub topo: f64,
    pub mse: f64,
    pub combined: f64,
    /// Wall-clock milliseconds of the iteration.
    pub ms: f64,
}

/// Losses before each update, plus the loss of the returned field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunTrace<T> {
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    pub final_loss: LossBreakdown<T>,
}

impl<T: Real> RunTrace<T> {
    /// CSV `iter,L_topo,L_mse,L_TP,ms`. Without `timing` the `ms` column is
    /// zero so runs can be compared byte for byte.
    pub fn write_csv<W: Write>(&self, mut w: W, timing: bool) -> Result<()> {
        writeln!(w, "iter,L_topo,L_mse,L_TP,ms")?;
        for r in &self.records {
            let ms = if timing { r.ms } else { 0.0 };
            writeln!(w, "{},{:?},{:?},{:?},{:.3}", r.iter, r.topo, r.mse, r.combined, ms)?;
        }
        Ok(())
    }
}

/// Runs `cfg.iterations` Adam steps from the initial field and returns the
/// adapted segmentation with its trace.
pub fn post_process<T: Real>(
    initial: &ProbSegmentation<T>,
    prior: &BettiPrior,
    cfg: &OptimizerConfig,
) -> Result<(ProbSegmentation<T>, RunTrace<T>)> {
    cfg.validate()?;
    let mut logits = LogitField::from_probabilities(initial, cfg.clamp)?;
    let lambda = T::from_f64_lossy(cfg.lambda);
    let mut adam = AdamState::new(
        logits.values.len(),
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_epsilon,
    );
    let shape = initial.shape().clone();
    let mut records = Vec::with_capacity(cfg.iterations);
    for iter in 0..cfg.iterations {
        let start = Instant::now();
        let probs = logits.softmax_channels();
        let (loss, grad) = combined_loss_channels(&shape, &probs, initial, prior, lambda, cfg.construction)?;
        let dz = LogitField::pullback(&probs, grad.channels());
        adam.step(&mut logits.values, &dz);
        records.push(IterationRecord {
            iter,
            topo: loss.total.to_f64_lossy(),
            mse: loss.mse.to_f64_lossy(),
            combined: loss.combined.to_f64_lossy(),
            ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    let out = logits.softmax();
    let (final_loss, _) = combined_loss_channels(&shape, out.channels(), initial, prior, lambda, cfg.construction)?;
    Ok((
        out,
        RunTrace {
            seed: cfg.seed,
            records,
            final_loss,
        },
    ))
}
