//! Multi-class topological loss, similarity loss and their subgradients.

use rayon::prelude::*;
use serde::Serialize;

use crate::complex::Construction;
use crate::error::{Error, Result};
use crate::grid::{GridShape, ProbSegmentation, ScalarField};
use crate::persistence::{barcode_of_field, rank_bars, Barcode};
use crate::prior::{BettiPrior, Subset};
use crate::scalar::Real;

/// Derivative of a loss with respect to every channel value.
#[derive(Clone, Debug, PartialEq)]
pub struct GradField<T> {
    shape: GridShape,
    channels: Vec<Vec<T>>,
}

impl<T: Real> GradField<T> {
    pub fn zeros(shape: GridShape, num_classes: usize) -> Self {
        let n = shape.len();
        Self {
            shape,
            channels: vec![vec![T::zero(); n]; num_classes],
        }
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.channels.len()
    }

    /// Channel of a 1-based class.
    pub fn channel(&self, class: usize) -> &[T] {
        &self.channels[class - 1]
    }

    pub fn channels(&self) -> &[Vec<T>] {
        &self.channels
    }

    /// `self += weight * other`.
    pub fn add_scaled(&mut self, other: &GradField<T>, weight: T) {
        for (a, b) in self.channels.iter_mut().zip(&other.channels) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = *x + weight * y;
            }
        }
    }

    /// Grid points with a nonzero entry in any channel.
    pub fn support(&self) -> Vec<usize> {
        (0..self.shape.len())
            .filter(|&i| self.channels.iter().any(|c| c[i] != T::zero()))
            .collect()
    }
}

/// One `(subset, dim)` term: `B - A + Z`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermBreakdown<T> {
    pub subset: Subset,
    pub dim: usize,
    /// Prior Betti number `B`.
    pub target: u32,
    /// Total persistence of the `B` highest-ranked bars.
    pub matched: T,
    /// Total persistence of every other bar.
    pub unmatched: T,
}

impl<T: Real> TermBreakdown<T> {
    pub fn value(&self) -> T {
        T::from_f64_lossy(self.target as f64) - self.matched + self.unmatched
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossBreakdown<T> {
    /// `L_topo`.
    pub total: T,
    pub terms: Vec<TermBreakdown<T>>,
    /// `L_mse`; zero for a topological loss alone.
    pub mse: T,
    pub lambda: T,
    /// `L_topo + lambda * L_mse`.
    pub combined: T,
}

fn check_prior(prior: &BettiPrior, num_classes: usize, ndim: usize) -> Result<()> {
    if prior.num_classes() != num_classes {
        return Err(Error::invalid(format!(
            "prior has {} classes, segmentation has {num_classes}",
            prior.num_classes()
        )));
    }
    if prior.ndim() != ndim {
        return Err(Error::invalid(format!(
            "prior is {}D, segmentation is {ndim}D",
            prior.ndim()
        )));
    }
    Ok(())
}

/// Adds one barcode's contribution: matched bars get `-1` at the birth point
/// and `+1` at the death point, the rest the opposite.
fn accumulate<T: Real>(
    barcode: &Barcode<T>,
    subset: &[usize],
    betti: &[u32],
    terms: &mut Vec<TermBreakdown<T>>,
    grad: &mut [T],
) {
    for (dim, &target) in betti.iter().enumerate() {
        let mut matched = T::zero();
        let mut unmatched = T::zero();
        for (rank, bar) in rank_bars(barcode, dim).into_iter().enumerate() {
            let sign = if rank < target as usize {
                matched = matched + bar.persistence();
                -T::one()
            } else {
                unmatched = unmatched + bar.persistence();
                T::one()
            };
            grad[bar.birth_point] = grad[bar.birth_point] + sign;
            if let Some(d) = bar.death_point {
                grad[d] = grad[d] - sign;
            }
        }
        terms.push(TermBreakdown {
            subset: subset.to_vec(),
            dim,
            target,
            matched,
            unmatched,
        });
    }
}

/// `L_topo` over raw channel values, which need not lie on the simplex.
/// Used by [`topo_loss`] and by finite-difference checks.
pub fn topo_loss_channels<T: Real>(
    shape: &GridShape,
    channels: &[Vec<T>],
    prior: &BettiPrior,
    construction: Construction,
) -> Result<(LossBreakdown<T>, GradField<T>)> {
    check_prior(prior, channels.len(), shape.ndim())?;
    let subsets = prior.loss_subsets();
    let n = shape.len();
    let ndim = shape.ndim();
    let per_subset: Vec<Result<(Vec<TermBreakdown<T>>, Vec<T>)>> = subsets
        .par_iter()
        .map(|(subset, betti)| {
            let mut values = channels[subset[0] - 1].clone();
            for &c in &subset[1..] {
                for (v, &p) in values.iter_mut().zip(&channels[c - 1]) {
                    *v = *v + p;
                }
            }
            let field = ScalarField::new(shape.clone(), values)?;
            let barcode = barcode_of_field(&field, construction, ndim - 1)?;
            let mut terms = Vec::with_capacity(ndim);
            let mut grad = vec![T::zero(); n];
            accumulate(&barcode, subset, betti, &mut terms, &mut grad);
            Ok((terms, grad))
        })
        .collect();

    let mut grad = GradField::zeros(shape.clone(), channels.len());
    let mut terms = Vec::new();
    for ((subset, _), result) in subsets.iter().zip(per_subset) {
        let (t, g) = result?;
        terms.extend(t);
        for &c in subset.iter() {
            for (x, &y) in grad.channels[c - 1].iter_mut().zip(&g) {
                *x = *x + y;
            }
        }
    }
    let total = terms.iter().map(TermBreakdown::value).fold(T::zero(), |a, b| a + b);
    Ok((
        LossBreakdown {
            total,
            terms,
            mse: T::zero(),
            lambda: T::zero(),
            combined: total,
        },
        grad,
    ))
}

/// Topological loss of a segmentation against a prior.
pub fn topo_loss<T: Real>(
    seg: &ProbSegmentation<T>,
    prior: &BettiPrior,
    construction: Construction,
) -> Result<(LossBreakdown<T>, GradField<T>)> {
    topo_loss_channels(seg.shape(), seg.channels(), prior, construction)
}

/// Mean over grid points of the squared channel difference, summed over
/// channels.
pub fn mse_loss<T: Real>(current: &ProbSegmentation<T>, reference: &ProbSegmentation<T>) -> Result<(T, GradField<T>)> {
    mse_loss_channels(current.shape(), current.channels(), reference)
}

pub(crate) fn mse_loss_channels<T: Real>(
    shape: &GridShape,
    channels: &[Vec<T>],
    reference: &ProbSegmentation<T>,
) -> Result<(T, GradField<T>)> {
    if !shape.same_extent(reference.shape()) || channels.len() != reference.num_classes() {
        return Err(Error::invalid(format!(
            "mse needs equal shapes: {:?}x{} vs {:?}x{}",
            shape.dims(),
            channels.len(),
            reference.shape().dims(),
            reference.num_classes()
        )));
    }
    let inv = T::one() / T::from_usize(shape.len()).expect("grid size fits");
    let two = T::one() + T::one();
    let mut sum = T::zero();
    let mut grad = GradField::zeros(shape.clone(), channels.len());
    for ((cur, refc), g) in channels.iter().zip(reference.channels()).zip(&mut grad.channels) {
        for ((&a, &b), gi) in cur.iter().zip(refc).zip(g.iter_mut()) {
            let d = a - b;
            sum = sum + d * d;
            *gi = two * inv * d;
        }
    }
    Ok((sum * inv, grad))
}

/// `L_TP = L_topo + lambda * L_mse` with the reference as similarity anchor.
pub fn combined_loss<T: Real>(
    seg: &ProbSegmentation<T>,
    reference: &ProbSegmentation<T>,
    prior: &BettiPrior,
    lambda: T,
    construction: Construction,
) -> Result<(LossBreakdown<T>, GradField<T>)> {
    combined_loss_channels(seg.shape(), seg.channels(), reference, prior, lambda, construction)
}

pub(crate) fn combined_loss_channels<T: Real>(
    shape: &GridShape,
    channels: &[Vec<T>],
    reference: &ProbSegmentation<T>,
    prior: &BettiPrior,
    lambda: T,
    construction: Construction,
) -> Result<(LossBreakdown<T>, GradField<T>)> {
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let (mse, mse_grad) = mse_loss_channels(shape, channels, reference)?;
    let (mut breakdown, mut grad) = topo_loss_channels(shape, channels, prior, construction)?;
    grad.add_scaled(&mse_grad, lambda);
    breakdown.mse = mse;
    breakdown.lambda = lambda;
    breakdown.combined = breakdown.total + lambda * mse;
    Ok((breakdown, grad))
}
