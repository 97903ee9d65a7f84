//! Grid containers shared by the rest of the crate.
//!
//! Every dense array is stored row-major. In 3D the axis order is `(z, y, x)`,
//! in 2D `(y, x)`; internally a 2D grid is handled as a 3D grid with a leading
//! extent of one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tolerance used when validating that channels lie on the probability simplex.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Extents and physical voxel size of a 2D or 3D grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    dims: Vec<usize>,
    spacing: Vec<f64>,
}

impl GridShape {
    /// Unit-spaced grid.
    pub fn new(dims: &[usize]) -> Result<Self> {
        Self::with_spacing(dims, &vec![1.0; dims.len()])
    }

    pub fn with_spacing(dims: &[usize], spacing: &[f64]) -> Result<Self> {
        if dims.len() != 2 && dims.len() != 3 {
            return Err(Error::invalid(format!(
                "grids must be 2D or 3D, got {} axes",
                dims.len()
            )));
        }
        if spacing.len() != dims.len() {
            return Err(Error::invalid(format!(
                "{} spacings given for {} axes",
                spacing.len(),
                dims.len()
            )));
        }
        if let Some(d) = dims.iter().find(|&&d| d == 0) {
            return Err(Error::invalid(format!("degenerate extent {d}")));
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("spacing must be finite and positive"));
        }
        Ok(Self {
            dims: dims.to_vec(),
            spacing: spacing.to_vec(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Same extents, different spacing.
    pub fn respaced(&self, spacing: &[f64]) -> Result<Self> {
        Self::with_spacing(&self.dims, spacing)
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Extents padded to three axes, `(z, y, x)`.
    pub fn dims3(&self) -> [usize; 3] {
        match self.dims[..] {
            [y, x] => [1, y, x],
            [z, y, x] => [z, y, x],
            _ => unreachable!("validated on construction"),
        }
    }

    /// Spacing padded to three axes; the virtual axis of a 2D grid gets 1.
    pub fn spacing3(&self) -> [f64; 3] {
        match self.spacing[..] {
            [y, x] => [1.0, y, x],
            [z, y, x] => [z, y, x],
            _ => unreachable!("validated on construction"),
        }
    }

    pub fn same_extent(&self, other: &GridShape) -> bool {
        self.dims == other.dims
    }

    pub fn linear(&self, coords: [usize; 3]) -> usize {
        let [_, ny, nx] = self.dims3();
        (coords[0] * ny + coords[1]) * nx + coords[2]
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [_, ny, nx] = self.dims3();
        [index / (ny * nx), (index / nx) % ny, index % nx]
    }

    /// Calls `f` with the linear index of every in-bounds neighbour of `index`.
    pub fn for_each_neighbor(&self, index: usize, conn: Connectivity, mut f: impl FnMut(usize)) {
        let d = self.dims3();
        let c = self.coords(index);
        for off in conn.offsets(self.ndim()) {
            let mut n = [0usize; 3];
            let mut inside = true;
            for a in 0..3 {
                let v = c[a] as isize + off[a];
                if v < 0 || v >= d[a] as isize {
                    inside = false;
                    break;
                }
                n[a] = v as usize;
            }
            if inside {
                f(self.linear(n));
            }
        }
    }
}

/// Pixel adjacency: face-sharing (4/6) or any shared corner (8/26).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Face,
    Full,
}

impl Connectivity {
    pub fn offsets(self, ndim: usize) -> Vec<[isize; 3]> {
        let zr: &[isize] = if ndim == 3 { &[-1, 0, 1] } else { &[0] };
        let mut out = Vec::new();
        for &dz in zr {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let nonzero = (dz != 0) as u8 + (dy != 0) as u8 + (dx != 0) as u8;
                    let keep = match self {
                        Connectivity::Face => nonzero == 1,
                        Connectivity::Full => nonzero >= 1,
                    };
                    if keep {
                        out.push([dz, dy, dx]);
                    }
                }
            }
        }
        out
    }
}

/// Dense real-valued grid: one probability map or class union.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<T> {
    shape: GridShape,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn new(shape: GridShape, values: Vec<T>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for grid {:?}",
                values.len(),
                shape.dims()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at index {i}")));
        }
        Ok(Self { shape, values })
    }

    pub fn filled(shape: GridShape, value: T) -> Self {
        let values = vec![value; shape.len()];
        Self { shape, values }
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cast<U: Real>(&self) -> ScalarField<U> {
        ScalarField {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }
}

/// Dense boolean grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BitField {
    shape: GridShape,
    bits: Vec<bool>,
}

impl BitField {
    pub fn new(shape: GridShape, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} bits for grid {:?}",
                bits.len(),
                shape.dims()
            )));
        }
        Ok(Self { shape, bits })
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BitField) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }
}

/// Per-class probability maps on the pixel-wise simplex. Class 1 is background.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbSegmentation<T> {
    shape: GridShape,
    channels: Vec<Vec<T>>,
}

impl<T: Real> ProbSegmentation<T> {
    pub fn new(shape: GridShape, channels: Vec<Vec<T>>) -> Result<Self> {
        if channels.len() < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 classes, got {}",
                channels.len()
            )));
        }
        let n = shape.len();
        if let Some(c) = channels.iter().position(|c| c.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "channel {} has {} values for grid of {n}",
                c + 1,
                channels[c].len()
            )));
        }
        for i in 0..n {
            let mut sum = 0.0f64;
            for (c, ch) in channels.iter().enumerate() {
                let v = ch[i];
                if !v.is_finite() || v < T::zero() {
                    return Err(Error::invalid(format!(
                        "class {} at index {i} is {v}, outside [0, 1]",
                        c + 1
                    )));
                }
                sum += v.to_f64_lossy();
            }
            if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(Error::invalid(format!(
                    "probabilities at index {i} sum to {sum}"
                )));
            }
        }
        Ok(Self { shape, channels })
    }

    /// Skips simplex validation; callers guarantee it by construction.
    pub(crate) fn from_parts_unchecked(shape: GridShape, channels: Vec<Vec<T>>) -> Self {
        Self { shape, channels }
    }

    /// Hard one-hot encoding of a label map.
    pub fn one_hot(labels: &LabelMap) -> Self {
        let mut channels = vec![vec![T::zero(); labels.shape().len()]; labels.num_classes()];
        for (i, &l) in labels.labels().iter().enumerate() {
            channels[l as usize - 1][i] = T::one();
        }
        Self {
            shape: labels.shape().clone(),
            channels,
        }
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.channels.len()
    }

    /// Channel of a 1-based class index.
    pub fn channel(&self, class: usize) -> &[T] {
        &self.channels[class - 1]
    }

    pub fn channels(&self) -> &[Vec<T>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<T>> {
        self.channels
    }

    /// Channel-major flat copy `(K, *dims)`.
    pub fn to_stacked(&self) -> Vec<T> {
        self.channels.iter().flatten().copied().collect()
    }

    /// Inverse of [`ProbSegmentation::to_stacked`].
    pub fn from_stacked(shape: GridShape, k: usize, data: Vec<T>) -> Result<Self> {
        let n = shape.len();
        if data.len() != n * k {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {k} channels of {n}",
                data.len()
            )));
        }
        let channels = data.chunks(n).map(<[T]>::to_vec).collect();
        Self::new(shape, channels)
    }

    pub fn min_probability(&self) -> T {
        self.channels
            .iter()
            .flatten()
            .copied()
            .fold(T::infinity(), T::min)
    }
}

/// Mutually exclusive class labels in `[1, K]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMap {
    shape: GridShape,
    num_classes: usize,
    labels: Vec<u16>,
}

impl LabelMap {
    pub fn new(shape: GridShape, num_classes: usize, labels: Vec<u16>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid("need at least 2 classes"));
        }
        if labels.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for grid {:?}",
                labels.len(),
                shape.dims()
            )));
        }
        if let Some(i) = labels
            .iter()
            .position(|&l| l == 0 || l as usize > num_classes)
        {
            return Err(Error::invalid(format!(
                "label {} at index {i} outside [1, {num_classes}]",
                labels[i]
            )));
        }
        Ok(Self {
            shape,
            num_classes,
            labels,
        })
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn mask(&self, class: usize) -> BitField {
        self.union_mask(&[class])
    }

    /// Boolean union of the given classes.
    pub fn union_mask(&self, classes: &[usize]) -> BitField {
        let mut member = vec![false; self.num_classes + 1];
        for &c in classes {
            if c <= self.num_classes {
                member[c] = true;
            }
        }
        BitField {
            shape: self.shape.clone(),
            bits: self.labels.iter().map(|&l| member[l as usize]).collect(),
        }
    }

    pub(crate) fn labels_mut(&mut self) -> &mut [u16] {
        &mut self.labels
    }
}

/// Pixel-wise probability of the union of `classes` (1-based, foreground only).
///
/// Classes are mutually exclusive events, so the union is the channel sum.
pub fn union_field<T: Real>(seg: &ProbSegmentation<T>, classes: &[usize]) -> Result<ScalarField<T>> {
    let k = seg.num_classes();
    if classes.is_empty() {
        return Err(Error::invalid("class union needs at least one class"));
    }
    if let Some(c) = classes.iter().find(|&&c| c < 2 || c > k) {
        return Err(Error::invalid(format!(
            "class {c} is not a foreground class in [2, {k}]"
        )));
    }
    let mut uniq = classes.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    let mut values = seg.channel(uniq[0]).to_vec();
    for &c in &uniq[1..] {
        for (v, &p) in values.iter_mut().zip(seg.channel(c)) {
            *v = *v + p;
        }
    }
    Ok(ScalarField {
        shape: seg.shape().clone(),
        values,
    })
}

/// Per-point most probable class; exact ties go to the lowest class index.
pub fn argmax_labels<T: Real>(seg: &ProbSegmentation<T>) -> LabelMap {
    let n = seg.shape().len();
    let labels = (0..n)
        .map(|i| {
            let mut best = 0usize;
            for c in 1..seg.num_classes() {
                if seg.channels[c][i] > seg.channels[best][i] {
                    best = c;
                }
            }
            (best + 1) as u16
        })
        .collect();
    LabelMap {
        shape: seg.shape().clone(),
        num_classes: seg.num_classes(),
        labels,
    }
}

/// Superlevel set `field >= threshold`.
pub fn binarize<T: Real>(field: &ScalarField<T>, threshold: T) -> BitField {
    BitField {
        shape: field.shape().clone(),
        bits: field.values().iter().map(|&v| v >= threshold).collect(),
    }
}
