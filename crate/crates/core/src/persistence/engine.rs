//! Persistence pairing on a filtered cubical complex.
//!
//! * dimension 0: union-find over vertices, edges in filtration order, elder
//!   rule;
//! * dimension N-1: union-find over top cells (plus one cell for the outside)
//!   with the (N-1)-cells in reverse filtration order;
//! * dimension 1 of a 3D complex: coboundary-matrix reduction over Z/2, edges
//!   that died in dimension 0 are cleared and an unclaimed pivot ends a column
//!   before any column additions.
//!
//! All three passes use the same total order on cells, so together they give
//! the unique persistence pairing of that order.

use std::collections::HashMap;

use rayon::slice::ParallelSliceMut;

use super::union_find::DisjointSet;
use super::Bar;
use crate::complex::{Cell, FilteredComplex};
use crate::scalar::Real;

/// Ids of every cell of one dimension in filtration order (value descending,
/// then id ascending).
pub(crate) fn sorted_cells<T: Real>(cx: &FilteredComplex<'_, T>, dim: usize) -> Vec<u32> {
    let mut keyed: Vec<(u64, u32)> = Vec::new();
    cx.for_each_cell_of_dim(dim, |id| keyed.push((!cx.value(id).order_bits(), id as u32)));
    if keyed.len() > 1 << 16 && rayon::current_num_threads() > 1 {
        keyed.par_sort_unstable();
    } else {
        keyed.sort_unstable();
    }
    keyed.into_iter().map(|(_, id)| id).collect()
}

#[inline]
fn earlier<T: Real>(a: (T, usize), b: (T, usize)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn make_bar<T: Real>(
    cx: &FilteredComplex<'_, T>,
    dim: u8,
    birth: (T, usize),
    death: Option<(T, usize)>,
    essential_death: T,
) -> Bar<T> {
    Bar {
        dim,
        birth: birth.0,
        death: death.map_or(essential_death, |d| d.0),
        birth_cell: Cell { id: birth.1, dim },
        death_cell: death.map(|d| Cell {
            id: d.1,
            dim: dim + 1,
        }),
        birth_point: cx.critical_point(birth.1),
        death_point: death.map(|d| cx.critical_point(d.1)),
    }
}

fn bit_set(bits: &mut [u64], i: usize) {
    bits[i >> 6] |= 1 << (i & 63);
}

fn bit_get(bits: &[u64], i: usize) -> bool {
    bits[i >> 6] & (1 << (i & 63)) != 0
}

/// Dimension-0 pairs. Returns a bitset of the edges that merged two
/// components.
pub(crate) fn pairs_dim0<T: Real>(
    cx: &FilteredComplex<'_, T>,
    edges: &[u32],
    essential_death: T,
    out: &mut Vec<Bar<T>>,
) -> Vec<u64> {
    let cd = cx.cell_dims();
    let vd = [cd[0].div_ceil(2), cd[1].div_ceil(2), cd[2].div_ceil(2)];
    let vindex = |c: [usize; 3]| ((c[0] / 2) * vd[1] + c[1] / 2) * vd[2] + c[2] / 2;
    let nverts = vd[0] * vd[1] * vd[2];
    let mut ds = DisjointSet::new(nverts);
    // eldest vertex (value, id) of each component, stored at its root
    let mut eldest: Vec<(T, usize)> = vec![(T::zero(), usize::MAX); nverts];
    cx.for_each_cell_of_dim(0, |id| eldest[vindex(cx.coords(id))] = (cx.value(id), id));

    let mut negative = vec![0u64; cx.num_cells().div_ceil(64)];
    for &e in edges {
        let id = e as usize;
        let c = cx.coords(id);
        let axis = (0..3).find(|&a| c[a] & 1 == 1).expect("edge has one odd axis");
        let (mut lo, mut hi) = (c, c);
        lo[axis] -= 1;
        hi[axis] += 1;
        let ra = ds.find(vindex(lo));
        let rb = ds.find(vindex(hi));
        if ra == rb {
            continue;
        }
        bit_set(&mut negative, id);
        let val = cx.value(id);
        let (ea, eb) = (eldest[ra], eldest[rb]);
        let (elder, younger) = if earlier(ea, eb) { (ea, eb) } else { (eb, ea) };
        if younger.0 > val {
            out.push(make_bar(cx, 0, younger, Some((val, id)), essential_death));
        }
        let root = ds.link(ra, rb);
        eldest[root] = elder;
    }
    let root = ds.find(0);
    out.push(make_bar(cx, 0, eldest[root], None, essential_death));
    negative
}

/// Pairs of dimension N-1 via union-find on the top cells, walking the
/// sorted (N-1)-cells backwards.
pub(crate) fn pairs_top<T: Real>(
    cx: &FilteredComplex<'_, T>,
    faces: &[u32],
    essential_death: T,
    out: &mut Vec<Bar<T>>,
) {
    let n = cx.ndim();
    let cd = cx.cell_dims();
    let real = 3 - n;
    let td = [cd[0] / 2, cd[1] / 2, cd[2] / 2].map(|d| d.max(1));
    let tindex = |c: [usize; 3]| ((c[0] / 2) * td[1] + c[1] / 2) * td[2] + c[2] / 2;
    let ntop = td[0] * td[1] * td[2];
    let outside = ntop;
    let mut ds = DisjointSet::new(ntop + 1);
    // latest top cell (value, id) of each component; the outside is latest of all
    let mut latest: Vec<Option<(T, usize)>> = vec![None; ntop + 1];
    cx.for_each_cell_of_dim(n, |id| latest[tindex(cx.coords(id))] = Some((cx.value(id), id)));

    for &f in faces.iter().rev() {
        let id = f as usize;
        let c = cx.coords(id);
        let axis = (real..3)
            .find(|&a| c[a] & 1 == 0)
            .expect("codimension-1 cell has one even axis");
        let lo = if c[axis] > 0 {
            let mut l = c;
            l[axis] -= 1;
            tindex(l)
        } else {
            outside
        };
        let hi = if c[axis] + 1 < cd[axis] {
            let mut h = c;
            h[axis] += 1;
            tindex(h)
        } else {
            outside
        };
        let ra = ds.find(lo);
        let rb = ds.find(hi);
        if ra == rb {
            continue;
        }
        let (keep, dies) = match (latest[ra], latest[rb]) {
            (None, Some(b)) => (None, b),
            (Some(a), None) => (None, a),
            (Some(a), Some(b)) => {
                if earlier(a, b) {
                    (Some(b), a)
                } else {
                    (Some(a), b)
                }
            }
            (None, None) => unreachable!("only one outside cell"),
        };
        let val = cx.value(id);
        if val > dies.0 {
            out.push(make_bar(cx, (n - 1) as u8, (val, id), Some(dies), essential_death));
        }
        let root = ds.link(ra, rb);
        latest[root] = keep;
    }
}

/// `dst` = `a` xor `b` for sorted, duplicate-free columns.
fn add_columns(a: &[u32], b: &[u32], dst: &mut Vec<u32>) {
    dst.clear();
    let (mut i, mut k) = (0, 0);
    while i < a.len() && k < b.len() {
        match a[i].cmp(&b[k]) {
            std::cmp::Ordering::Less => {
                dst.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                dst.push(b[k]);
                k += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                k += 1;
            }
        }
    }
    dst.extend_from_slice(&a[i..]);
    dst.extend_from_slice(&b[k..]);
}

/// Dimension-1 pairs of a 3D complex by coboundary reduction. Squares are
/// handled by their position in `squares`, so columns are sorted integer lists.
pub(crate) fn pairs_dim1_cohomology<T: Real>(
    cx: &FilteredComplex<'_, T>,
    edges: &[u32],
    negative: &[u64],
    squares: &[u32],
    essential_death: T,
    out: &mut Vec<Bar<T>>,
) {
    const FREE: u32 = u32::MAX;
    assert!(edges.len() < FREE as usize && squares.len() < FREE as usize);
    let mut rank = vec![0u32; cx.num_cells()];
    for (r, &s) in squares.iter().enumerate() {
        rank[s as usize] = r as u32;
    }
    let mut owner = vec![FREE; squares.len()];
    let mut reduced: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut cof: Vec<u32> = Vec::with_capacity(4);
    let mut other: Vec<u32> = Vec::with_capacity(4);
    let mut col: Vec<u32> = Vec::new();
    let mut scratch: Vec<u32> = Vec::new();

    let coboundary = |id: usize, buf: &mut Vec<u32>| {
        buf.clear();
        cx.for_each_coface(id, |f| buf.push(rank[f]));
    };
    let death_of = |r: u32| {
        let id = squares[r as usize] as usize;
        (cx.value(id), id)
    };

    for j in (0..edges.len()).rev() {
        let e = edges[j] as usize;
        if bit_get(negative, e) {
            continue;
        }
        coboundary(e, &mut cof);
        let Some(first) = cof.iter().copied().min() else {
            continue;
        };
        let birth = (cx.value(e), e);
        if owner[first as usize] == FREE {
            owner[first as usize] = j as u32;
            let death = death_of(first);
            if birth.0 > death.0 {
                out.push(make_bar(cx, 1, birth, Some(death), essential_death));
            }
            continue;
        }

        cof.sort_unstable();
        col.clear();
        col.extend_from_slice(&cof);
        loop {
            let Some(&p) = col.first() else {
                // essential class; a box has none
                break;
            };
            let o = owner[p as usize];
            if o == FREE {
                owner[p as usize] = j as u32;
                let death = death_of(p);
                if birth.0 > death.0 {
                    out.push(make_bar(cx, 1, birth, Some(death), essential_death));
                }
                reduced.insert(j as u32, col[1..].to_vec());
                break;
            }
            match reduced.get(&o) {
                // stored columns omit their pivot, which cancels p here
                Some(tail) => add_columns(&col[1..], tail, &mut scratch),
                None => {
                    coboundary(edges[o as usize] as usize, &mut other);
                    other.sort_unstable();
                    add_columns(&col, &other, &mut scratch);
                }
            }
            std::mem::swap(&mut col, &mut scratch);
        }
    }
}
