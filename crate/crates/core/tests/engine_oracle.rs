//! The fast persistence engine against a textbook boundary-matrix reduction
//! written from scratch on the doubled-coordinate grid.

use std::collections::HashMap;

use cubitopo::complex::Construction;
use cubitopo::grid::{GridShape, ScalarField};
use cubitopo::persistence::barcode_of_field;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct NaiveCell {
    id: usize,
    dim: u8,
    value: f64,
}

/// (dim, birth, death, birth id, death id) of every positive-persistence pair,
/// plus essential classes with death id `usize::MAX`.
fn naive_pairs(dims: &[usize], values: &[f64], construction: Construction) -> Vec<(u8, f64, f64, usize, usize)> {
    let p3: [usize; 3] = if dims.len() == 2 { [1, dims[0], dims[1]] } else { [dims[0], dims[1], dims[2]] };
    let n = dims.len();
    let mut c3 = [1usize; 3];
    for a in (3 - n)..3 {
        c3[a] = match construction {
            Construction::V => 2 * p3[a] - 1,
            Construction::T => 2 * p3[a] + 1,
        };
    }
    let pix = |z: usize, y: usize, x: usize| values[(z * p3[1] + y) * p3[2] + x];
    let mut cells = Vec::new();
    for z in 0..c3[0] {
        for y in 0..c3[1] {
            for x in 0..c3[2] {
                let c = [z, y, x];
                let dim = c.iter().filter(|v| *v % 2 == 1).count() as u8;
                let mut ranges = Vec::new();
                for a in 0..3 {
                    let v = c[a] as isize;
                    let r: Vec<isize> = match construction {
                        Construction::V => {
                            if v % 2 == 1 { vec![(v - 1) / 2, (v + 1) / 2] } else { vec![v / 2] }
                        }
                        Construction::T => {
                            if v % 2 == 1 { vec![(v - 1) / 2] } else { vec![v / 2 - 1, v / 2] }
                        }
                    };
                    ranges.push(r.into_iter().filter(|&i| i >= 0 && (i as usize) < p3[a]).collect::<Vec<_>>());
                }
                let mut vals = Vec::new();
                for &zz in &ranges[0] {
                    for &yy in &ranges[1] {
                        for &xx in &ranges[2] {
                            vals.push(pix(zz as usize, yy as usize, xx as usize));
                        }
                    }
                }
                let value = match construction {
                    Construction::V => vals.iter().cloned().fold(f64::INFINITY, f64::min),
                    Construction::T => vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                };
                cells.push(NaiveCell { id: (z * c3[1] + y) * c3[2] + x, dim, value });
            }
        }
    }
    cells.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .unwrap()
            .then(a.dim.cmp(&b.dim))
            .then(a.id.cmp(&b.id))
    });
    let pos: HashMap<usize, usize> = cells.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
    let strides = [c3[1] * c3[2], c3[2], 1];
    let mut columns: Vec<Vec<usize>> = cells
        .iter()
        .map(|cell| {
            let c = [cell.id / strides[0], (cell.id / strides[1]) % c3[1], cell.id % c3[2]];
            let mut col = Vec::new();
            for a in 0..3 {
                if c[a] % 2 == 1 {
                    col.push(pos[&(cell.id - strides[a])]);
                    col.push(pos[&(cell.id + strides[a])]);
                }
            }
            col.sort_unstable();
            col
        })
        .collect();
    let mut low_owner: HashMap<usize, usize> = HashMap::new();
    let mut paired = vec![false; cells.len()];
    let mut out = Vec::new();
    for j in 0..columns.len() {
        while let Some(&low) = columns[j].last() {
            match low_owner.get(&low) {
                Some(&k) => {
                    let other = columns[k].clone();
                    let mut merged = Vec::new();
                    let (mut a, mut b) = (0, 0);
                    let cur = &columns[j];
                    while a < cur.len() || b < other.len() {
                        if b == other.len() || (a < cur.len() && cur[a] < other[b]) {
                            merged.push(cur[a]);
                            a += 1;
                        } else if a == cur.len() || other[b] < cur[a] {
                            merged.push(other[b]);
                            b += 1;
                        } else {
                            a += 1;
                            b += 1;
                        }
                    }
                    columns[j] = merged;
                }
                None => {
                    low_owner.insert(low, j);
                    paired[low] = true;
                    paired[j] = true;
                    let (bc, dc) = (&cells[low], &cells[j]);
                    if bc.value > dc.value {
                        out.push((bc.dim, bc.value, dc.value, bc.id, dc.id));
                    }
                    break;
                }
            }
        }
    }
    let floor = values.iter().cloned().fold(0.0f64, f64::min);
    for (i, c) in cells.iter().enumerate() {
        if !paired[i] {
            out.push((c.dim, c.value, floor, c.id, usize::MAX));
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

fn engine_pairs(dims: &[usize], values: &[f64], construction: Construction) -> Vec<(u8, f64, f64, usize, usize)> {
    let f = ScalarField::new(GridShape::new(dims).unwrap(), values.to_vec()).unwrap();
    let bc = barcode_of_field(&f, construction, dims.len() - 1).unwrap();
    let mut out: Vec<_> = bc
        .bars
        .iter()
        .map(|b| (b.dim, b.birth, b.death, b.birth_cell.id, b.death_cell.map_or(usize::MAX, |c| c.id)))
        .collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

fn random_values(rng: &mut ChaCha8Rng, n: usize, levels: Option<u32>) -> Vec<f64> {
    (0..n)
        .map(|_| match levels {
            Some(l) => rng.gen_range(0..l) as f64 / (l - 1) as f64,
            None => rng.gen::<f64>(),
        })
        .collect()
}

#[test]
fn matches_naive_reduction_2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..120 {
        let dims = [rng.gen_range(1..9), rng.gen_range(1..9)];
        let levels = if case % 3 == 0 { Some(3) } else { None };
        let v = random_values(&mut rng, dims[0] * dims[1], levels);
        for c in [Construction::V, Construction::T] {
            assert_eq!(engine_pairs(&dims, &v, c), naive_pairs(&dims, &v, c), "case {case} {dims:?} {c}");
        }
    }
}

#[test]
fn matches_naive_reduction_3d() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..60 {
        let dims = [rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..6)];
        let levels = if case % 3 == 0 { Some(3) } else { None };
        let v = random_values(&mut rng, dims.iter().product(), levels);
        for c in [Construction::V, Construction::T] {
            assert_eq!(engine_pairs(&dims, &v, c), naive_pairs(&dims, &v, c), "case {case} {dims:?} {c}");
        }
    }
}
