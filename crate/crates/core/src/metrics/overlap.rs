//! Overlap and surface-distance metrics, and the largest-component baseline.

use crate::error::{Error, Result};
use crate::grid::{argmax_labels, BitField, Connectivity, GridShape, LabelMap, ProbSegmentation};
use crate::metrics::oracle::{label_components, UNLABELED};
use crate::scalar::Real;

fn same_shape(a: &LabelMap, b: &LabelMap) -> Result<()> {
    if a.shape().same_extent(b.shape()) && a.num_classes() == b.num_classes() {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{:?} with {} classes vs {:?} with {}",
            a.shape().dims(),
            a.num_classes(),
            b.shape().dims(),
            b.num_classes()
        )))
    }
}

fn counts(pred: &LabelMap, gt: &LabelMap, class: usize) -> (usize, usize, usize) {
    let c = class as u16;
    let mut inter = 0;
    let mut p = 0;
    let mut g = 0;
    for (&a, &b) in pred.labels().iter().zip(gt.labels()) {
        p += usize::from(a == c);
        g += usize::from(b == c);
        inter += usize::from(a == c && b == c);
    }
    (inter, p, g)
}

/// Dice overlap of one class; `1` when both masks are empty.
pub fn dice(pred: &LabelMap, gt: &LabelMap, class: usize) -> Result<f64> {
    same_shape(pred, gt)?;
    let (inter, p, g) = counts(pred, gt, class);
    Ok(if p + g == 0 { 1.0 } else { 2.0 * inter as f64 / (p + g) as f64 })
}

/// Size-weighted Dice over the foreground classes; `1` when nothing is
/// labelled foreground in either map.
pub fn gdice(pred: &LabelMap, gt: &LabelMap) -> Result<f64> {
    same_shape(pred, gt)?;
    let mut num = 0usize;
    let mut den = 0usize;
    for c in 2..=pred.num_classes() {
        let (inter, p, g) = counts(pred, gt, c);
        num += inter;
        den += p + g;
    }
    Ok(if den == 0 { 1.0 } else { 2.0 * num as f64 / den as f64 })
}

/// Mask points with a face neighbour outside the mask or outside the grid.
pub fn boundary_points(mask: &BitField) -> Vec<usize> {
    let shape = mask.shape();
    let bits = mask.bits();
    let full = Connectivity::Face.offsets(shape.ndim()).len();
    (0..bits.len())
        .filter(|&i| {
            if !bits[i] {
                return false;
            }
            let mut inside = 0;
            shape.for_each_neighbor(i, Connectivity::Face, |q| inside += usize::from(bits[q]));
            inside < full
        })
        .collect()
}

/// Squared distance along one line to the nearest zero of `f`, sampled at
/// spacing `h` (lower envelope of parabolas).
fn edt_line(f: &[f64], h: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    let x = |q: usize| q as f64 * h;
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&r) => {
                    let s = ((f[q] + x(q) * x(q)) - (f[r] + x(r) * x(r))) / (2.0 * (x(q) - x(r)));
                    if s <= *z.last().expect("same length as v") {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < x(p) {
            k += 1;
        }
        let d = x(p) - x(v[k]);
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance (in physical units) from every point to
/// the nearest point of `features`.
pub fn squared_distance_transform(shape: &GridShape, features: &[bool]) -> Vec<f64> {
    let d = shape.dims3();
    let h = shape.spacing3();
    let strides = [d[1] * d[2], d[2], 1];
    let mut dist: Vec<f64> = features.iter().map(|&b| if b { 0.0 } else { f64::INFINITY }).collect();
    let (mut v, mut z) = (Vec::new(), Vec::new());
    for axis in 0..3 {
        if d[axis] == 1 {
            continue;
        }
        let len = d[axis];
        let mut line = vec![0.0; len];
        let mut out = vec![0.0; len];
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        for i in 0..d[others[0]] {
            for j in 0..d[others[1]] {
                let base = i * strides[others[0]] + j * strides[others[1]];
                for (t, l) in line.iter_mut().enumerate() {
                    *l = dist[base + t * strides[axis]];
                }
                edt_line(&line, h[axis], &mut out, &mut v, &mut z);
                for (t, &o) in out.iter().enumerate() {
                    dist[base + t * strides[axis]] = o;
                }
            }
        }
    }
    dist
}

/// Symmetric Hausdorff distance between the class boundaries, in the units
/// of the grid spacing. `None` when either mask is empty.
pub fn hausdorff(pred: &LabelMap, gt: &LabelMap, class: usize) -> Result<Option<f64>> {
    same_shape(pred, gt)?;
    let a = boundary_points(&pred.mask(class));
    let b = boundary_points(&gt.mask(class));
    if a.is_empty() || b.is_empty() {
        return Ok(None);
    }
    let shape = pred.shape();
    let directed = |from: &[usize], to: &[usize]| {
        let mut feat = vec![false; shape.len()];
        for &i in to {
            feat[i] = true;
        }
        let dist = squared_distance_transform(shape, &feat);
        from.iter().map(|&i| dist[i]).fold(0.0, f64::max).sqrt()
    };
    Ok(Some(directed(&a, &b).max(directed(&b, &a))))
}

/// Argmax labels with every foreground class cut down to its largest
/// face-connected component; the rest becomes background. Equal sizes keep
/// the component met first in scan order.
pub fn cca_baseline<T: Real>(seg: &ProbSegmentation<T>) -> LabelMap {
    let mut labels = argmax_labels(seg);
    let shape = labels.shape().clone();
    for class in 2..=labels.num_classes() {
        let mask = labels.mask(class);
        let (comp, sizes) = label_components(&shape, mask.bits(), Connectivity::Face);
        if sizes.len() <= 1 {
            continue;
        }
        let mut keep = 0;
        for (i, &s) in sizes.iter().enumerate() {
            if s > sizes[keep] {
                keep = i;
            }
        }
        for (l, &c) in labels.labels_mut().iter_mut().zip(&comp) {
            if c != UNLABELED && c as usize != keep {
                *l = 1;
            }
        }
    }
    labels
}
