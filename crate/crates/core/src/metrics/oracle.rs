//! Betti numbers of binary masks by counting: union-find style labeling for
//! components, cell counts for the Euler characteristic, and enclosed
//! background for voids. Shares nothing with the persistence engine.

use std::collections::VecDeque;

use crate::complex::Construction;
use crate::grid::{BitField, Connectivity, GridShape};

pub const UNLABELED: u32 = u32::MAX;

/// Connected components of the set bits. Returns per-point component ids
/// (`UNLABELED` outside the mask, ids in scan order of first point) and the
/// size of each component.
pub fn label_components(shape: &GridShape, bits: &[bool], conn: Connectivity) -> (Vec<u32>, Vec<usize>) {
    let mut labels = vec![UNLABELED; bits.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..bits.len() {
        if !bits[start] || labels[start] != UNLABELED {
            continue;
        }
        let id = sizes.len() as u32;
        labels[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            shape.for_each_neighbor(p, conn, |q| {
                if bits[q] && labels[q] == UNLABELED {
                    labels[q] = id;
                    queue.push_back(q);
                }
            });
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Foreground adjacency of a construction: faces for V, corners for T.
pub fn foreground_connectivity(construction: Construction) -> Connectivity {
    match construction {
        Construction::V => Connectivity::Face,
        Construction::T => Connectivity::Full,
    }
}

fn background_connectivity(construction: Construction) -> Connectivity {
    match construction {
        Construction::V => Connectivity::Full,
        Construction::T => Connectivity::Face,
    }
}

/// Euler characteristic of the cubical complex spanned by the mask.
pub fn euler_characteristic(mask: &BitField, construction: Construction) -> i64 {
    let shape = mask.shape();
    let p = shape.dims3();
    let real = 3 - shape.ndim();
    let mut c = [1usize; 3];
    for a in real..3 {
        c[a] = match construction {
            Construction::V => 2 * p[a] - 1,
            Construction::T => 2 * p[a] + 1,
        };
    }
    let bits = mask.bits();
    // grid points whose values a cell depends on, per axis
    let support = |a: usize, v: usize| -> (usize, usize) {
        if a < real {
            return (0, 0);
        }
        match (construction, v % 2) {
            (Construction::V, 0) => (v / 2, v / 2),
            (Construction::V, _) => ((v - 1) / 2, (v + 1) / 2),
            (Construction::T, 1) => ((v - 1) / 2, (v - 1) / 2),
            (Construction::T, _) => (v / 2 - usize::from(v > 0), (v / 2).min(p[a] - 1)),
        }
    };
    let mut chi = 0i64;
    for z in 0..c[0] {
        let (z0, z1) = support(0, z);
        for y in 0..c[1] {
            let (y0, y1) = support(1, y);
            for x in 0..c[2] {
                let (x0, x1) = support(2, x);
                let mut all = true;
                let mut any = false;
                for zz in z0..=z1 {
                    for yy in y0..=y1 {
                        for xx in x0..=x1 {
                            let b = bits[(zz * p[1] + yy) * p[2] + xx];
                            all &= b;
                            any |= b;
                        }
                    }
                }
                let present = match construction {
                    Construction::V => all,
                    Construction::T => any,
                };
                if present {
                    let odd = [z, y, x].iter().enumerate().filter(|(a, v)| *a >= real && *v % 2 == 1).count();
                    chi += if odd % 2 == 0 { 1 } else { -1 };
                }
            }
        }
    }
    chi
}

/// Background components that do not reach the grid border.
fn enclosed_voids(mask: &BitField, construction: Construction) -> usize {
    let shape = mask.shape();
    let background: Vec<bool> = mask.bits().iter().map(|b| !b).collect();
    let (labels, sizes) = label_components(shape, &background, background_connectivity(construction));
    let mut open = vec![false; sizes.len()];
    let d = shape.dims3();
    for (i, &l) in labels.iter().enumerate() {
        if l == UNLABELED {
            continue;
        }
        let c = shape.coords(i);
        if (0..3).any(|a| c[a] == 0 || c[a] == d[a] - 1) {
            open[l as usize] = true;
        }
    }
    open.iter().filter(|o| !**o).count()
}

/// Betti vector of a binary mask, length equal to the grid dimension.
pub fn betti_oracle(mask: &BitField, construction: Construction) -> Vec<usize> {
    let shape = mask.shape();
    let (_, sizes) = label_components(shape, mask.bits(), foreground_connectivity(construction));
    let b0 = sizes.len() as i64;
    let chi = euler_characteristic(mask, construction);
    if shape.ndim() == 2 {
        let b1 = b0 - chi;
        vec![b0 as usize, b1 as usize]
    } else {
        let b2 = enclosed_voids(mask, construction) as i64;
        let b1 = b0 + b2 - chi;
        vec![b0 as usize, b1 as usize, b2 as usize]
    }
}
