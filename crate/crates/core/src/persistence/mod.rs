//! Persistence barcodes of superlevel filtrations.

mod engine;
pub(crate) mod union_find;

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::complex::{Cell, Construction, FilteredComplex};
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::scalar::Real;

/// One persistence interval. Features are born at the higher threshold, so
/// `birth >= death`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bar<T> {
    pub dim: u8,
    pub birth: T,
    pub death: T,
    pub birth_cell: Cell,
    /// `None` for the essential component.
    pub death_cell: Option<Cell>,
    /// Grid point carrying the birth value.
    pub birth_point: usize,
    /// Grid point carrying the death value; `None` when the death is the
    /// fixed essential value.
    pub death_point: Option<usize>,
}

impl<T: Real> Bar<T> {
    pub fn persistence(&self) -> T {
        self.birth - self.death
    }

    pub fn is_essential(&self) -> bool {
        self.death_cell.is_none()
    }

    /// Alive at threshold `p`: born at or above `p`, not yet dead.
    pub fn alive_at(&self, p: T) -> bool {
        self.birth >= p && p > self.death
    }
}

/// All bars of positive persistence of one field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Barcode<T> {
    pub field_id: String,
    pub ndim: usize,
    pub construction: Construction,
    /// Doubled-coordinate extents, used to print cells.
    pub cell_dims: [usize; 3],
    pub bars: Vec<Bar<T>>,
}

impl<T: Real> Barcode<T> {
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.field_id = id.into();
        self
    }

    pub fn bars_of_dim(&self, dim: usize) -> impl Iterator<Item = &Bar<T>> {
        self.bars.iter().filter(move |b| b.dim as usize == dim)
    }

    /// Betti numbers of the superlevel set at `p`, read off the bars.
    pub fn betti_at(&self, p: T) -> Vec<usize> {
        let mut betti = vec![0; self.ndim];
        for b in &self.bars {
            if b.alive_at(p) {
                betti[b.dim as usize] += 1;
            }
        }
        betti
    }

    pub fn cell_coords(&self, cell: Cell) -> Vec<usize> {
        let [_, cy, cx] = self.cell_dims;
        let c = [cell.id / (cy * cx), (cell.id / cx) % cy, cell.id % cx];
        c[(3 - self.ndim)..].to_vec()
    }

    /// CSV with header `dim,birth,death,persistence,birth_cell,death_cell`,
    /// bars grouped by dimension in rank order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dim,birth,death,persistence,birth_cell,death_cell")?;
        let fmt_cell = |c: Cell| {
            let parts: Vec<String> = self.cell_coords(c).iter().map(usize::to_string).collect();
            format!("\"({})\"", parts.join(","))
        };
        for dim in 0..self.ndim {
            for b in rank_bars(self, dim) {
                if b.persistence() <= T::zero() {
                    continue;
                }
                writeln!(
                    w,
                    "{},{:?},{:?},{:?},{},{}",
                    b.dim,
                    b.birth,
                    b.death,
                    b.persistence(),
                    fmt_cell(b.birth_cell),
                    b.death_cell.map(fmt_cell).unwrap_or_default()
                )?;
            }
        }
        Ok(())
    }
}

/// Death value assigned to the essential component: `0`, or the field
/// minimum when the field dips below zero.
pub fn essential_death<T: Real>(field: &ScalarField<T>) -> T {
    field.values().iter().copied().fold(T::zero(), T::min)
}

/// Barcode of dimensions `0..=max_dim` of a filtered complex.
pub fn compute_barcode<T: Real>(complex: &FilteredComplex<'_, T>, max_dim: usize) -> Result<Barcode<T>> {
    let n = complex.ndim();
    if max_dim >= n {
        return Err(Error::invalid(format!(
            "max_dim {max_dim} must be below the grid dimension {n}"
        )));
    }
    let floor = essential_death(complex.field());
    let mut bars = Vec::new();
    let edges = engine::sorted_cells(complex, 1);
    let negative = engine::pairs_dim0(complex, &edges, floor, &mut bars);
    if n == 2 {
        if max_dim >= 1 {
            engine::pairs_top(complex, &edges, floor, &mut bars);
        }
    } else if max_dim >= 1 {
        let squares = engine::sorted_cells(complex, 2);
        engine::pairs_dim1_cohomology(complex, &edges, &negative, &squares, floor, &mut bars);
        drop(negative);
        drop(edges);
        if max_dim >= 2 {
            engine::pairs_top(complex, &squares, floor, &mut bars);
        }
    }
    bars.sort_by(|a, b| {
        a.dim
            .cmp(&b.dim)
            .then(b.birth.partial_cmp(&a.birth).expect("finite"))
            .then(a.birth_cell.id.cmp(&b.birth_cell.id))
    });
    Ok(Barcode {
        field_id: String::new(),
        ndim: n,
        construction: complex.construction(),
        cell_dims: complex.cell_dims(),
        bars,
    })
}

/// Convenience wrapper building the complex first.
pub fn barcode_of_field<T: Real>(
    field: &ScalarField<T>,
    construction: Construction,
    max_dim: usize,
) -> Result<Barcode<T>> {
    let cx = FilteredComplex::new(field, construction)?;
    compute_barcode(&cx, max_dim)
}

/// Bars of one dimension by descending persistence, then higher birth, then
/// lower birth-cell id.
pub fn rank_bars<T: Real>(barcode: &Barcode<T>, dim: usize) -> Vec<&Bar<T>> {
    let mut bars: Vec<&Bar<T>> = barcode.bars_of_dim(dim).collect();
    bars.sort_by(|a, b| {
        b.persistence()
            .partial_cmp(&a.persistence())
            .expect("finite")
            .then(b.birth.partial_cmp(&a.birth).expect("finite"))
            .then(a.birth_cell.id.cmp(&b.birth_cell.id))
    });
    bars
}

/// Barcodes of many fields on the current rayon pool, in input order.
pub fn barcodes_parallel<T: Real>(
    fields: &[ScalarField<T>],
    construction: Construction,
    max_dim: usize,
) -> Result<Vec<Barcode<T>>> {
    if fields.is_empty() {
        return Err(Error::invalid("no fields given"));
    }
    fields
        .par_iter()
        .enumerate()
        .map(|(index, f)| {
            barcode_of_field(f, construction, max_dim).map_err(|e| Error::Field {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}
