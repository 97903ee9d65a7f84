//! Filtered cubical complexes over a scalar field.
//!
//! Cells live on the doubled-coordinate grid: a cell's coordinate along an
//! axis is even when the cell is a point along that axis and odd when it
//! spans a unit interval, so the cell dimension is the number of odd
//! coordinates. Faces and cofaces are `±1` offsets along one axis.
//!
//! The filtration is a superlevel filtration: a cell is present at threshold
//! `p` when its value is `>= p`, and cells enter in order of descending value.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridShape, ScalarField};
use crate::scalar::Real;

/// How grid points become cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Construction {
    /// Grid points are 0-cells; a cell's value is the minimum over its
    /// vertices. Foreground is 4-connected in 2D, 6-connected in 3D.
    #[default]
    V,
    /// Grid points are top-dimensional cells; a cell's value is the maximum
    /// over the top cells containing it. Foreground is 8-/26-connected.
    T,
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Construction::V => f.write_str("v"),
            Construction::T => f.write_str("t"),
        }
    }
}

impl std::str::FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "v" | "0" => Ok(Construction::V),
            "t" | "2" => Ok(Construction::T),
            other => Err(Error::invalid(format!("unknown construction `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    pub dim: u8,
}

/// Position of a cell in the filtration.
///
/// Cells are ordered by descending value, then ascending dimension (faces
/// before cofaces at equal value), then ascending id.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiltrationKey<T> {
    pub value: T,
    pub dim: u8,
    pub id: usize,
}

impl<T: Real> FiltrationKey<T> {
    #[inline]
    pub fn cmp_order(&self, other: &Self) -> Ordering {
        other
            .value
            .partial_cmp(&self.value)
            .expect("filtration values are finite")
            .then(self.dim.cmp(&other.dim))
            .then(self.id.cmp(&other.id))
    }
}

impl<T: Real> Eq for FiltrationKey<T> {}

impl<T: Real> PartialOrd for FiltrationKey<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for FiltrationKey<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_order(other)
    }
}

/// A scalar field viewed as a filtered cubical complex.
#[derive(Clone, Debug)]
pub struct FilteredComplex<'a, T> {
    field: &'a ScalarField<T>,
    construction: Construction,
    ndim: usize,
    pdims: [usize; 3],
    cdims: [usize; 3],
    values: Vec<T>,
}

/// Builds the filtered complex of `field` in the given construction.
pub fn build_complex<T: Real>(
    field: &ScalarField<T>,
    construction: Construction,
) -> Result<FilteredComplex<'_, T>> {
    FilteredComplex::new(field, construction)
}

impl<'a, T: Real> FilteredComplex<'a, T> {
    pub fn new(field: &'a ScalarField<T>, construction: Construction) -> Result<Self> {
        let shape = field.shape();
        let pdims = shape.dims3();
        if pdims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("degenerate extent"));
        }
        let ndim = shape.ndim();
        let mut cdims = [1usize; 3];
        for a in (3 - ndim)..3 {
            cdims[a] = match construction {
                Construction::V => 2 * pdims[a] - 1,
                Construction::T => 2 * pdims[a] + 1,
            };
        }
        let values = cell_values(field.values(), construction, pdims, cdims);
        Ok(Self {
            field,
            construction,
            ndim,
            pdims,
            cdims,
            values,
        })
    }

    pub fn field(&self) -> &'a ScalarField<T> {
        self.field
    }

    pub fn shape(&self) -> &GridShape {
        self.field.shape()
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    /// Dimension of the top cells.
    pub fn ndim(&self) -> usize {
        self.ndim
    }

    /// Extents of the doubled-coordinate grid, `(z, y, x)`.
    pub fn cell_dims(&self) -> [usize; 3] {
        self.cdims
    }

    pub fn num_cells(&self) -> usize {
        self.cdims.iter().product()
    }

    #[inline]
    pub fn coords(&self, id: usize) -> [usize; 3] {
        let [_, cy, cx] = self.cdims;
        [id / (cy * cx), (id / cx) % cy, id % cx]
    }

    #[inline]
    pub fn id_of(&self, c: [usize; 3]) -> usize {
        let [_, cy, cx] = self.cdims;
        (c[0] * cy + c[1]) * cx + c[2]
    }

    #[inline]
    pub fn dim_of(&self, id: usize) -> u8 {
        let c = self.coords(id);
        (c[0] & 1) as u8 + (c[1] & 1) as u8 + (c[2] & 1) as u8
    }

    pub fn cell(&self, id: usize) -> Result<Cell> {
        if id >= self.num_cells() {
            return Err(Error::invalid(format!(
                "cell id {id} outside complex of {} cells",
                self.num_cells()
            )));
        }
        Ok(Cell {
            id,
            dim: self.dim_of(id),
        })
    }

    /// Inclusive per-axis range of grid points incident to the cell.
    #[inline]
    fn support(&self, c: [usize; 3]) -> [(usize, usize); 3] {
        let mut r = [(0, 0); 3];
        for a in 0..3 {
            let v = c[a];
            r[a] = match self.construction {
                Construction::V => (v / 2, v.div_ceil(2)),
                Construction::T => {
                    if v & 1 == 1 {
                        ((v - 1) / 2, (v - 1) / 2)
                    } else {
                        ((v / 2).saturating_sub(1), (v / 2).min(self.pdims[a] - 1))
                    }
                }
            };
        }
        r
    }

    /// Filtration value and the grid point that realises it.
    ///
    /// V: minimum over vertices, ties to the highest grid index (the vertex
    /// entering last). T: maximum over incident top cells, ties to the lowest
    /// grid index (the top cell entering first).
    #[inline]
    pub fn value_and_point(&self, id: usize) -> (T, usize) {
        let c = self.coords(id);
        let r = self.support(c);
        let [_, ny, nx] = self.pdims;
        let vals = self.field.values();
        let mut best_idx = usize::MAX;
        let mut best = T::zero();
        for z in r[0].0..=r[0].1 {
            for y in r[1].0..=r[1].1 {
                let row = (z * ny + y) * nx;
                for x in r[2].0..=r[2].1 {
                    let i = row + x;
                    let v = vals[i];
                    let better = best_idx == usize::MAX
                        || match self.construction {
                            Construction::V => v <= best,
                            Construction::T => v > best,
                        };
                    if better {
                        best = v;
                        best_idx = i;
                    }
                }
            }
        }
        (best, best_idx)
    }

    #[inline]
    pub fn value(&self, id: usize) -> T {
        self.values[id]
    }

    /// Filtration value of every cell, indexed by id.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Grid point whose value the cell takes (gradient target).
    #[inline]
    pub fn critical_point(&self, id: usize) -> usize {
        self.value_and_point(id).1
    }

    #[inline]
    pub fn key(&self, id: usize) -> FiltrationKey<T> {
        FiltrationKey {
            value: self.value(id),
            dim: self.dim_of(id),
            id,
        }
    }

    /// Codimension-1 faces; empty for a 0-cell.
    pub fn boundary(&self, cell: Cell) -> Result<Vec<Cell>> {
        let cell = self.cell(cell.id)?;
        let mut out = Vec::with_capacity(2 * cell.dim as usize);
        self.for_each_face(cell.id, |f| {
            out.push(Cell {
                id: f,
                dim: cell.dim - 1,
            })
        });
        Ok(out)
    }

    /// Codimension-1 cofaces.
    pub fn coboundary(&self, cell: Cell) -> Result<Vec<Cell>> {
        let cell = self.cell(cell.id)?;
        let mut out = Vec::with_capacity(2 * (self.ndim - cell.dim as usize));
        self.for_each_coface(cell.id, |f| {
            out.push(Cell {
                id: f,
                dim: cell.dim + 1,
            })
        });
        Ok(out)
    }

    #[inline]
    pub(crate) fn for_each_face(&self, id: usize, mut f: impl FnMut(usize)) {
        let c = self.coords(id);
        let strides = self.strides();
        for a in 0..3 {
            if c[a] & 1 == 1 {
                f(id - strides[a]);
                f(id + strides[a]);
            }
        }
    }

    #[inline]
    pub(crate) fn for_each_coface(&self, id: usize, mut f: impl FnMut(usize)) {
        let c = self.coords(id);
        let strides = self.strides();
        for a in (3 - self.ndim)..3 {
            if c[a] & 1 == 0 {
                if c[a] > 0 {
                    f(id - strides[a]);
                }
                if c[a] + 1 < self.cdims[a] {
                    f(id + strides[a]);
                }
            }
        }
    }

    #[inline]
    pub(crate) fn strides(&self) -> [usize; 3] {
        [self.cdims[1] * self.cdims[2], self.cdims[2], 1]
    }

    /// Ids of all cells of dimension `dim`, in ascending id order.
    pub fn cells_of_dim(&self, dim: usize) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_cell_of_dim(dim, |id| out.push(id));
        out.sort_unstable();
        out
    }

    pub(crate) fn for_each_cell_of_dim(&self, dim: usize, mut f: impl FnMut(usize)) {
        if dim > self.ndim {
            return;
        }
        let real: Vec<usize> = ((3 - self.ndim)..3).collect();
        // every choice of `dim` odd axes among the real ones
        for mask in 0u8..(1 << real.len()) {
            if mask.count_ones() as usize != dim {
                continue;
            }
            let mut start = [0usize; 3];
            for (bit, &a) in real.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    start[a] = 1;
                }
            }
            let mut z = start[0];
            while z < self.cdims[0] {
                let mut y = start[1];
                while y < self.cdims[1] {
                    let mut x = start[2];
                    while x < self.cdims[2] {
                        f(self.id_of([z, y, x]));
                        x += 2;
                    }
                    y += 2;
                }
                z += 2;
            }
        }
    }

    /// Number of cells of each dimension present at threshold `p`.
    pub fn cell_counts_at(&self, p: T) -> Vec<usize> {
        let mut counts = vec![0usize; self.ndim + 1];
        for (d, count) in counts.iter_mut().enumerate() {
            self.for_each_cell_of_dim(d, |id| {
                if self.value(id) >= p {
                    *count += 1;
                }
            });
        }
        counts
    }

    /// Doubled coordinates of a cell with the virtual axis of a 2D grid dropped.
    pub fn display_coords(&self, id: usize) -> Vec<usize> {
        let c = self.coords(id);
        c[(3 - self.ndim)..].to_vec()
    }
}

/// Cell values by separable min (V) or max (T) passes along each axis.
fn cell_values<T: Real>(pixels: &[T], construction: Construction, pdims: [usize; 3], cdims: [usize; 3]) -> Vec<T> {
    let total: usize = cdims.iter().product();
    let strides = [cdims[1] * cdims[2], cdims[2], 1];
    let mut out = vec![T::zero(); total];
    // seed the cells that coincide with grid points
    let offset = match construction {
        Construction::V => [0, 0, 0],
        Construction::T => [cdims[0].min(2) - 1, 1, 1],
    };
    for z in 0..pdims[0] {
        for y in 0..pdims[1] {
            let src = (z * pdims[1] + y) * pdims[2];
            let dst = (2 * z + offset[0]) * strides[0] + (2 * y + offset[1]) * strides[1] + offset[2];
            for x in 0..pdims[2] {
                out[dst + 2 * x] = pixels[src + x];
            }
        }
    }
    for a in 0..3 {
        if cdims[a] == 1 {
            continue;
        }
        // V fills odd positions from even neighbours, T fills even from odd
        let start = match construction {
            Construction::V => 1,
            Construction::T => 0,
        };
        let n = cdims[a];
        let (outer, inner) = match a {
            0 => (1, strides[0]),
            1 => (cdims[0], strides[1]),
            _ => (cdims[0] * cdims[1], 1),
        };
        let block = n * strides[a];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * block + i;
                let mut k = start;
                while k < n {
                    let here = base + k * strides[a];
                    out[here] = match construction {
                        Construction::V => {
                            let (l, r) = (out[here - strides[a]], out[here + strides[a]]);
                            if l < r { l } else { r }
                        }
                        Construction::T => {
                            let l = (k > 0).then(|| out[here - strides[a]]);
                            let r = (k + 1 < n).then(|| out[here + strides[a]]);
                            match (l, r) {
                                (Some(l), Some(r)) => if l > r { l } else { r },
                                (Some(v), None) | (None, Some(v)) => v,
                                (None, None) => unreachable!("extent >= 3"),
                            }
                        }
                    };
                    k += 2;
                }
            }
        }
    }
    out
}
