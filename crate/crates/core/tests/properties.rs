use std::collections::HashMap;

use cubitopo::grid::{argmax_labels, binarize, union_field};
use cubitopo::metrics::{betti_oracle, cca_baseline, dice, gdice, hausdorff, label_components};
use cubitopo::optim::LogitField;
use cubitopo::persistence::rank_bars;
use cubitopo::scalar::Real;
use cubitopo::{
    barcode_of_field, betti_error, evaluate, post_process, topo_loss, BettiPrior, Connectivity, Construction,
    FilteredComplex, GridShape, LabelMap, OptimizerConfig, ProbSegmentation, ScalarField,
};
use proptest::prelude::*;

const CONSTRUCTIONS: [Construction; 2] = [Construction::V, Construction::T];

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop_oneof![
        (1usize..=9, 1usize..=9).prop_map(|(a, b)| vec![a, b]),
        (1usize..=4, 1usize..=5, 1usize..=5).prop_map(|(a, b, c)| vec![a, b, c]),
    ]
}

/// Values on a coarse grid so ties are common.
fn field_strategy() -> impl Strategy<Value = ScalarField<f64>> {
    dims_strategy().prop_flat_map(|dims| {
        let n: usize = dims.iter().product();
        prop::collection::vec(0u8..=8, n).prop_map(move |v| {
            let shape = GridShape::new(&dims).unwrap();
            ScalarField::new(shape, v.into_iter().map(|x| f64::from(x) / 8.0).collect()).unwrap()
        })
    })
}

fn labels_strategy(k: usize) -> impl Strategy<Value = LabelMap> {
    dims_strategy().prop_flat_map(move |dims| {
        let n: usize = dims.iter().product();
        prop::collection::vec(1u16..=k as u16, n)
            .prop_map(move |l| LabelMap::new(GridShape::new(&dims).unwrap(), k, l).unwrap())
    })
}

fn probs_strategy(k: usize) -> impl Strategy<Value = ProbSegmentation<f64>> {
    dims_strategy().prop_flat_map(move |dims| {
        let n: usize = dims.iter().product();
        prop::collection::vec(prop::collection::vec(0.01f64..1.0, k), n).prop_map(move |rows| {
            let mut channels = vec![Vec::with_capacity(n); k];
            for row in rows {
                let s: f64 = row.iter().sum();
                for (c, v) in row.into_iter().enumerate() {
                    channels[c].push(v / s);
                }
            }
            ProbSegmentation::new(GridShape::new(&dims).unwrap(), channels).unwrap()
        })
    })
}

/// Two foreground classes with every singleton and the pair in the prior.
fn pair_prior(ndim: usize, pair_key: &str) -> BettiPrior {
    let b = if ndim == 2 { "[1, 0]" } else { "[1, 0, 0]" };
    let text = format!(r#"{{"dims": {ndim}, "classes": ["bg", "a", "b"], "betti": {{"a": {b}, "b": {b}, "{pair_key}": {b}}}}}"#);
    BettiPrior::from_json(&text).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn superlevel_sets_are_nested(field in field_strategy(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (hi, lo) = if a > b { (a, b) } else { (b, a) };
        prop_assert!(binarize(&field, hi).is_subset_of(&binarize(&field, lo)));
    }

    #[test]
    fn foreground_union_plus_background_is_one(seg in probs_strategy(4)) {
        let fg = union_field(&seg, &[2, 3, 4]).unwrap();
        for (u, b) in fg.values().iter().zip(seg.channel(1)) {
            prop_assert!((u + b - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn argmax_inverts_one_hot(labels in labels_strategy(4)) {
        prop_assert_eq!(argmax_labels(&ProbSegmentation::<f64>::one_hot(&labels)), labels);
    }

    #[test]
    fn faces_enter_no_later_than_cofaces(field in field_strategy()) {
        for c in CONSTRUCTIONS {
            let cx = FilteredComplex::new(&field, c).unwrap();
            for id in 0..cx.num_cells() {
                let cell = cx.cell(id).unwrap();
                for f in cx.boundary(cell).unwrap() {
                    prop_assert!(cx.value(f.id) >= cx.value(id), "{c}: face {} below coface {id}", f.id);
                }
            }
        }
    }

    #[test]
    fn boundary_of_boundary_vanishes(field in field_strategy()) {
        let cx = FilteredComplex::new(&field, Construction::V).unwrap();
        for id in 0..cx.num_cells() {
            let mut parity: HashMap<usize, bool> = HashMap::new();
            for f in cx.boundary(cx.cell(id).unwrap()).unwrap() {
                for g in cx.boundary(f).unwrap() {
                    *parity.entry(g.id).or_default() ^= true;
                }
            }
            prop_assert!(parity.values().all(|odd| !odd), "cell {id}");
        }
    }

    #[test]
    fn cell_dimension_counts_odd_coordinates(field in field_strategy()) {
        let cx = FilteredComplex::new(&field, Construction::V).unwrap();
        let expected: usize = field.shape().dims().iter().map(|&n| 2 * n - 1).product();
        prop_assert_eq!(cx.num_cells(), expected);
        for d in 0..=field.shape().ndim() {
            for id in cx.cells_of_dim(d) {
                prop_assert_eq!(cx.dim_of(id) as usize, d);
            }
        }
    }

    #[test]
    fn bars_agree_with_oracle_at_every_threshold(field in field_strategy(), t in 1u8..=8) {
        let p = f64::from(t) / 8.0;
        let ndim = field.shape().ndim();
        for c in CONSTRUCTIONS {
            let bc = barcode_of_field(&field, c, ndim - 1).unwrap();
            let mut expected = betti_oracle(&binarize(&field, p), c);
            expected.truncate(ndim);
            prop_assert_eq!(bc.betti_at(p), expected, "{} at {}", c, p);
        }
    }

    #[test]
    fn bars_are_well_formed_and_realized(field in field_strategy()) {
        let ndim = field.shape().ndim();
        for c in CONSTRUCTIONS {
            let bc = barcode_of_field(&field, c, ndim - 1).unwrap();
            for bar in &bc.bars {
                prop_assert!(bar.birth > bar.death);
                prop_assert!((bar.dim as usize) < ndim);
                prop_assert_eq!(field.values()[bar.birth_point], bar.birth);
                match bar.death_point {
                    Some(d) => prop_assert_eq!(field.values()[d], bar.death),
                    None => prop_assert!(bar.is_essential()),
                }
            }
        }
    }

    #[test]
    fn barcodes_are_deterministic(field in field_strategy()) {
        let ndim = field.shape().ndim();
        let a = barcode_of_field(&field, Construction::T, ndim - 1).unwrap();
        let b = barcode_of_field(&field, Construction::T, ndim - 1).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ranking_is_by_descending_persistence(field in field_strategy()) {
        let ndim = field.shape().ndim();
        let bc = barcode_of_field(&field, Construction::V, ndim - 1).unwrap();
        for d in 0..ndim {
            let ranked = rank_bars(&bc, d);
            for w in ranked.windows(2) {
                prop_assert!(w[0].persistence() >= w[1].persistence());
            }
        }
    }

    #[test]
    fn order_bits_preserve_order(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        prop_assert_eq!(a.order_bits().cmp(&b.order_bits()), a.total_cmp(&b));
        let (x, y) = (a as f32, b as f32);
        prop_assert_eq!(x.order_bits().cmp(&y.order_bits()), x.total_cmp(&y));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pair_key_order_does_not_matter(seg in probs_strategy(3)) {
        let ndim = seg.shape().ndim();
        let (ab, _) = topo_loss(&seg, &pair_prior(ndim, "a|b"), Construction::V).unwrap();
        let (ba, _) = topo_loss(&seg, &pair_prior(ndim, "b|a"), Construction::V).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn loss_bounded_below_and_additive(seg in probs_strategy(3)) {
        let prior = pair_prior(seg.shape().ndim(), "a|b");
        let (loss, _) = topo_loss(&seg, &prior, Construction::V).unwrap();
        let b_total: u32 = prior.loss_subsets().iter().flat_map(|(_, b)| b.iter()).sum();
        prop_assert!(loss.total >= -f64::from(b_total) - 1e-12);
        let sum: f64 = loss.terms.iter().map(|t| t.value()).sum();
        prop_assert!((sum - loss.total).abs() <= 1e-12);
        for t in &loss.terms {
            prop_assert!(t.matched >= 0.0 && t.unmatched >= 0.0);
        }
    }

    #[test]
    fn gradient_lives_on_critical_points(seg in probs_strategy(3)) {
        let prior = pair_prior(seg.shape().ndim(), "a|b");
        let (_, grad) = topo_loss(&seg, &prior, Construction::T).unwrap();
        let ndim = seg.shape().ndim();
        let mut critical = vec![false; seg.shape().len()];
        for (subset, _) in prior.loss_subsets() {
            let field = union_field(&seg, subset).unwrap();
            for bar in barcode_of_field(&field, Construction::T, ndim - 1).unwrap().bars {
                critical[bar.birth_point] = true;
                if let Some(d) = bar.death_point {
                    critical[d] = true;
                }
            }
        }
        for i in grad.support() {
            prop_assert!(critical[i], "gradient at non-critical point {i}");
        }
    }

    #[test]
    fn singleton_prior_is_the_per_class_part(seg in probs_strategy(3)) {
        let prior = pair_prior(seg.shape().ndim(), "a|b");
        let (full, _) = topo_loss(&seg, &prior, Construction::V).unwrap();
        let (single, _) = topo_loss(&seg, &prior.singletons_only(), Construction::V).unwrap();
        let singleton_terms: Vec<_> = full.terms.iter().filter(|t| t.subset.len() == 1).cloned().collect();
        prop_assert_eq!(single.terms, singleton_terms);
    }

    #[test]
    fn softmax_stays_on_simplex(seg in probs_strategy(3)) {
        let logits = LogitField::from_probabilities(&seg, None).unwrap();
        let back = logits.softmax();
        for i in 0..seg.shape().len() {
            let s: f64 = back.channels().iter().map(|c| c[i]).sum();
            prop_assert!((s - 1.0).abs() <= 1e-9);
            for c in 0..3 {
                prop_assert!((back.channels()[c][i] - seg.channels()[c][i]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn overlap_metrics_are_symmetric(a in labels_strategy(3), seed in any::<u64>()) {
        // Same-shaped partner: a deterministic relabelling of `a`.
        let b_labels: Vec<u16> = a
            .labels()
            .iter()
            .enumerate()
            .map(|(i, &l)| if (seed >> (i % 64)) & 1 == 1 { (l % 3) + 1 } else { l })
            .collect();
        let b = LabelMap::new(a.shape().clone(), 3, b_labels).unwrap();
        for c in 2..=3 {
            prop_assert_eq!(dice(&a, &b, c).unwrap(), dice(&b, &a, c).unwrap());
            prop_assert_eq!(hausdorff(&a, &b, c).unwrap(), hausdorff(&b, &a, c).unwrap());
        }
        let g = gdice(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&g));
    }

    #[test]
    fn success_iff_zero_betti_error(labels in labels_strategy(3)) {
        let prior = pair_prior(labels.shape().ndim(), "a|b");
        let r = evaluate("p", &labels, &labels, &prior, Construction::V).unwrap();
        prop_assert_eq!(r.ts == 1, r.be == 0);
        prop_assert_eq!(r.be, betti_error(&labels, &prior, Construction::V).unwrap().0);
    }

    #[test]
    fn cca_leaves_one_component_per_class(seg in probs_strategy(4)) {
        let out = cca_baseline(&seg);
        for c in 2..=4 {
            let (_, sizes) = label_components(out.shape(), out.mask(c).bits(), Connectivity::Face);
            prop_assert!(sizes.len() <= 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn runs_are_seed_deterministic(seg in probs_strategy(3), seed in any::<u64>()) {
        let prior = pair_prior(seg.shape().ndim(), "a|b");
        let cfg = OptimizerConfig { iterations: 5, seed, ..OptimizerConfig::for_ndim(seg.shape().ndim()) };
        let (p1, t1) = post_process(&seg, &prior, &cfg).unwrap();
        let (p2, t2) = post_process(&seg, &prior, &cfg).unwrap();
        prop_assert_eq!(p1, p2);
        let strip = |t: &cubitopo::RunTrace<f64>| t.records.iter().map(|r| (r.topo, r.mse, r.combined)).collect::<Vec<_>>();
        prop_assert_eq!(strip(&t1), strip(&t2));
        prop_assert_eq!(t1.final_loss, t2.final_loss);
    }
}
