//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Performance lines are soft targets and print `FAIL (soft)` without failing
//! the run; every other line is hard. Run with
//! `cargo test -p cubitopo --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use cubitopo::grid::{argmax_labels, binarize};
use cubitopo::loss::topo_loss_channels;
use cubitopo::metrics::{betti_oracle, cca_baseline, gdice, percentile};
use cubitopo::npy::write_values;
use cubitopo::persistence::barcodes_parallel;
use cubitopo::phantom::{self, DefectSpec, Phantom, PhantomSpec, Task};
use cubitopo::{
    barcode_of_field, betti_error, post_process, topo_loss, BettiPrior, Construction, GridShape, LabelMap,
    OptimizerConfig, ProbSegmentation, ScalarField,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const CORPUS_SEED: u64 = 7;
const CORPUS_SIZE: usize = 50;

struct Report {
    hard_failures: usize,
}

impl Report {
    fn line(&mut self, pass: bool, soft: bool, name: &str, detail: String) {
        let tag = match (pass, soft) {
            (true, _) => "PASS",
            (false, true) => "FAIL (soft)",
            (false, false) => "FAIL",
        };
        if !pass && !soft {
            self.hard_failures += 1;
        }
        println!("{tag:<11} {name}: {detail}");
    }
}

fn field(dims: &[usize], values: Vec<f64>) -> ScalarField<f64> {
    ScalarField::new(GridShape::new(dims).unwrap(), values).unwrap()
}

fn oracle_corpus() -> Vec<(ScalarField<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..200)
        .map(|i| {
            let dims: Vec<usize> = if i % 2 == 0 {
                vec![rng.gen_range(1..=32), rng.gen_range(1..=32)]
            } else {
                vec![rng.gen_range(1..=16), rng.gen_range(1..=16), rng.gen_range(1..=16)]
            };
            let n: usize = dims.iter().product();
            // Every third field is quantized so equal values are common.
            let values: Vec<f64> = if i % 3 == 0 {
                (0..n).map(|_| f64::from(rng.gen_range(0..6u8)) / 5.0).collect()
            } else {
                (0..n).map(|_| rng.gen::<f64>()).collect()
            };
            let mut thresholds: Vec<f64> = (0..4).map(|_| rng.gen_range(0.01..1.0)).collect();
            thresholds.push(values[rng.gen_range(0..n)].max(0.2));
            (field(&dims, values), thresholds)
        })
        .collect()
}

fn oracle_equivalence(r: &mut Report) {
    let start = Instant::now();
    let corpus = oracle_corpus();
    let mut checks = 0;
    let mut mismatches = 0;
    for (f, thresholds) in &corpus {
        let ndim = f.shape().ndim();
        for c in [Construction::V, Construction::T] {
            let bc = barcode_of_field(f, c, ndim - 1).unwrap();
            for &t in thresholds {
                let mut expected = betti_oracle(&binarize(f, t), c);
                expected.truncate(ndim);
                checks += 1;
                if bc.betti_at(t) != expected {
                    mismatches += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    r.line(
        mismatches == 0 && secs < 60.0,
        false,
        "oracle equivalence",
        format!("{} fields, {checks} checks, {mismatches} mismatches, {secs:.1} s", corpus.len()),
    );
}

fn binary_law(r: &mut Report) {
    let corpus = oracle_corpus();
    let mut bad = 0;
    let mut bars = 0;
    for (f, _) in &corpus {
        let ndim = f.shape().ndim();
        let mask = binarize(f, 0.5);
        let bin = field(f.shape().dims(), mask.bits().iter().map(|&b| f64::from(u8::from(b))).collect());
        for c in [Construction::V, Construction::T] {
            let bc = barcode_of_field(&bin, c, ndim - 1).unwrap();
            bars += bc.bars.len();
            let mut expected = betti_oracle(&mask, c);
            expected.truncate(ndim);
            let counts: Vec<usize> = (0..ndim).map(|d| bc.bars_of_dim(d).count()).collect();
            if bc.bars.iter().any(|b| b.persistence() != 1.0) || counts != expected {
                bad += 1;
            }
        }
    }
    r.line(
        bad == 0,
        false,
        "binary-barcode law",
        format!("{} binary fields x 2 constructions, {bars} bars, {bad} violations", corpus.len()),
    );
}

/// Smallest gap between sorted values; `f64::INFINITY` for fewer than two.
fn min_gap(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn gradient_prior(ndim: usize) -> BettiPrior {
    let b = if ndim == 2 { "[1, 1]" } else { "[1, 1, 0]" };
    let text = format!(r#"{{"dims": {ndim}, "classes": ["bg", "a", "b"], "betti": {{"a": {b}, "b": {b}, "a|b": {b}}}}}"#);
    BettiPrior::from_json(&text).unwrap()
}

/// Channels whose union fields have well-separated values and bar
/// persistences, so an `eps` shift cannot reorder anything. A shift moves a
/// union value by at most `eps` and a persistence by at most `2 eps`.
fn non_degenerate(shape: &GridShape, channels: &[Vec<f64>], prior: &BettiPrior, c: Construction, eps: f64) -> bool {
    prior.loss_subsets().iter().all(|(subset, _)| {
        let mut u = channels[subset[0] - 1].clone();
        for &k in &subset[1..] {
            for (x, y) in u.iter_mut().zip(&channels[k - 1]) {
                *x += y;
            }
        }
        if min_gap(u.clone()) <= 4.0 * eps {
            return false;
        }
        let f = ScalarField::new(shape.clone(), u).unwrap();
        let bc = barcode_of_field(&f, c, shape.ndim() - 1).unwrap();
        (0..shape.ndim()).all(|d| min_gap(bc.bars_of_dim(d).map(|b| b.persistence()).collect()) > 8.0 * eps)
    })
}

fn gradient_check(r: &mut Report) {
    const EPS: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut fields, mut rejected, mut checked, mut worst) = (0, 0, 0usize, 0.0f64);
    let mut failures = 0;
    while fields < 50 {
        let dims: Vec<usize> = if fields % 2 == 0 { vec![4, 5] } else { vec![3, 3, 3] };
        let c = if fields % 4 < 2 { Construction::V } else { Construction::T };
        let shape = GridShape::new(&dims).unwrap();
        let prior = gradient_prior(dims.len());
        let channels: Vec<Vec<f64>> = (0..3).map(|_| (0..shape.len()).map(|_| rng.gen_range(0.05..0.95)).collect()).collect();
        if !non_degenerate(&shape, &channels, &prior, c, EPS) {
            rejected += 1;
            continue;
        }
        fields += 1;
        let (_, grad) = topo_loss_channels(&shape, &channels, &prior, c).unwrap();
        for k in 0..3 {
            for i in 0..shape.len() {
                let mut probe = channels.clone();
                probe[k][i] += EPS;
                let up = topo_loss_channels(&shape, &probe, &prior, c).unwrap().0.total;
                probe[k][i] -= 2.0 * EPS;
                let down = topo_loss_channels(&shape, &probe, &prior, c).unwrap().0.total;
                let fd = (up - down) / (2.0 * EPS);
                let analytic = grad.channel(k + 1)[i];
                let err = (analytic - fd).abs() / analytic.abs().max(1.0);
                if analytic != 0.0 {
                    checked += 1;
                }
                worst = worst.max(err);
                if err > 1e-4 {
                    failures += 1;
                }
            }
        }
    }
    r.line(
        failures == 0,
        false,
        "gradient check",
        format!(
            "{fields} fields ({rejected} degenerate draws skipped), {checked} nonzero entries, \
             {failures} over tolerance, worst rel err {worst:.2e}"
        ),
    );
}

struct Outcome {
    be_before: usize,
    be_after: usize,
    dg: f64,
}

fn repair(ph: &Phantom, prior: &BettiPrior, construction: Construction) -> Outcome {
    let cfg = OptimizerConfig {
        construction,
        ..OptimizerConfig::for_ndim(2)
    };
    let before = argmax_labels(&ph.probs);
    let (adapted, _) = post_process(&ph.probs, prior, &cfg).unwrap();
    let after = argmax_labels(&adapted);
    Outcome {
        be_before: betti_error(&before, &ph.prior, construction).unwrap().0,
        be_after: betti_error(&after, &ph.prior, construction).unwrap().0,
        dg: gdice(&after, &ph.truth).unwrap() - gdice(&before, &ph.truth).unwrap(),
    }
}

fn corpus(defects: impl Fn(usize, u64) -> Vec<DefectSpec>) -> Vec<Phantom> {
    phantom::batch_seeds(CORPUS_SEED, CORPUS_SIZE)
        .into_iter()
        .enumerate()
        .map(|(i, s)| phantom::generate(&PhantomSpec::new(Task::ShortAxis2d, s).with_defects(defects(i, s))).unwrap())
        .collect()
}

fn success_rate(outcomes: &[Outcome]) -> f64 {
    outcomes.iter().filter(|o| o.be_after == 0).count() as f64 / outcomes.len() as f64
}

/// Returns the TS of each construction for the equivalence check.
fn repair_corpus(r: &mut Report) -> Vec<(Construction, f64)> {
    let phantoms = corpus(|_, s| phantom::random_defects(Task::ShortAxis2d, s));
    let mut rates = Vec::new();
    for c in [Construction::V, Construction::T] {
        let start = Instant::now();
        let out: Vec<Outcome> = phantoms.par_iter().map(|ph| repair(ph, &ph.prior, c)).collect();
        let secs = start.elapsed().as_secs_f64();
        let ts = success_rate(&out);
        let worse = out.iter().filter(|o| o.be_after > o.be_before).count();
        let defective = out.iter().filter(|o| o.be_before > 0).count();
        let dgs: Vec<f64> = out.iter().map(|o| o.dg).collect();
        let median_dg = percentile(&dgs, 50.0).unwrap();
        r.line(
            ts >= 0.9 && median_dg >= -0.01 && worse == 0 && secs < 600.0,
            false,
            &format!("2D topology repair ({c})"),
            format!(
                "{} phantoms ({defective} with BE > 0 before), TS {:.0}%, median dgDSC {:+.3} pp, \
                 BE increased in {worse}, {secs:.0} s",
                out.len(),
                ts * 100.0,
                median_dg * 100.0
            ),
        );
        rates.push((c, ts));
    }
    rates
}

fn superiority(r: &mut Report) {
    const COUPLING: [&str; 4] = ["bridge:rv", "bridge:lv", "detach:rv", "detach:lv"];
    let phantoms = corpus(|i, _| vec![DefectSpec::parse(COUPLING[i % COUPLING.len()]).unwrap()]);
    let pairs: Vec<(usize, usize)> = phantoms
        .par_iter()
        .map(|ph| {
            let full = repair(ph, &ph.prior, Construction::V).be_after;
            let single = repair(ph, &ph.prior.singletons_only(), Construction::V).be_after;
            (full, single)
        })
        .collect();
    let no_worse = pairs.iter().filter(|(f, s)| f <= s).count();
    let (total_full, total_single): (usize, usize) = pairs.iter().fold((0, 0), |(a, b), (f, s)| (a + f, b + s));
    let frac = no_worse as f64 / pairs.len() as f64;
    r.line(
        frac >= 0.8 && total_full < total_single,
        false,
        "multi-class superiority",
        format!(
            "{} pair-coupling phantoms, full prior BE <= singleton BE in {:.0}%, total BE {total_full} vs {total_single}",
            pairs.len(),
            frac * 100.0
        ),
    );
}

fn cca_contrast(r: &mut Report) {
    let phantoms = corpus(|_, _| vec![DefectSpec::parse("hole-puncture:my").unwrap()]);
    let rows: Vec<(usize, usize, Outcome)> = phantoms
        .par_iter()
        .map(|ph| {
            let be = |l: &LabelMap| betti_error(l, &ph.prior, Construction::V).unwrap().0;
            let argmax = be(&argmax_labels(&ph.probs));
            let cca = be(&cca_baseline(&ph.probs));
            (argmax, cca, repair(ph, &ph.prior, Construction::V))
        })
        .collect();
    let unchanged = rows.iter().filter(|(a, c, _)| a == c).count();
    let defective = rows.iter().filter(|(a, _, _)| *a > 0).count();
    let repaired = rows.iter().filter(|(_, _, o)| o.be_after == 0).count() as f64 / rows.len() as f64;
    r.line(
        unchanged == rows.len() && defective == rows.len() && repaired >= 0.8,
        false,
        "CCA contrast",
        format!(
            "{} my-hole phantoms, CCA left BE unchanged in {unchanged}, topological repair TS {:.0}%",
            rows.len(),
            repaired * 100.0
        ),
    );
}

fn construction_equivalence(r: &mut Report, rates: &[(Construction, f64)]) {
    let diff = (rates[0].1 - rates[1].1).abs() * 100.0;
    r.line(
        diff <= 5.0,
        false,
        "construction equivalence",
        format!(
            "TS {} {:.0}% vs {} {:.0}%, difference {diff:.0} pp",
            rates[0].0,
            rates[0].1 * 100.0,
            rates[1].0,
            rates[1].1 * 100.0
        ),
    );
}

fn noise(dims: &[usize], seed: u64) -> ScalarField<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    field(dims, (0..n).map(|_| rng.gen()).collect())
}

fn median_ms(runs: usize, mut f: impl FnMut()) -> f64 {
    let mut t: Vec<f64> = (0..runs)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[t.len() / 2]
}

fn performance(r: &mut Report) {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let profile = if cfg!(debug_assertions) { "debug assertions on" } else { "release" };

    let f2 = noise(&[352, 352], 1);
    for c in [Construction::V, Construction::T] {
        let ms = median_ms(5, || {
            barcode_of_field(&f2, c, 1).unwrap();
        });
        r.line(ms < 100.0, true, &format!("performance 352x352 barcode ({c})"), format!("median {ms:.0} ms, {profile}"));
    }

    let mut spec = PhantomSpec::new(Task::ShortAxis2d, 3);
    spec.dims = vec![352, 352];
    spec.defects = vec![DefectSpec::parse("bridge:rv").unwrap(), DefectSpec::parse("extra-component:lv").unwrap()];
    let ph = phantom::generate(&spec).unwrap();
    let cfg = OptimizerConfig::for_ndim(2);
    for (workers, limit) in [(1usize, 30.0), (4, 10.0)] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
        let start = Instant::now();
        pool.install(|| post_process(&ph.probs, &ph.prior, &cfg).unwrap());
        let secs = start.elapsed().as_secs_f64();
        r.line(
            secs < limit,
            true,
            &format!("performance 352x352 post-process, {workers} worker(s)"),
            format!("100 iterations in {secs:.1} s, {cores} core(s) available, {profile}"),
        );
    }

    let f3 = noise(&[192, 160, 160], 2);
    let start = Instant::now();
    barcode_of_field(&f3, Construction::V, 2).unwrap();
    let secs = start.elapsed().as_secs_f64();
    r.line(secs < 20.0, true, "performance 192x160x160 barcode (v)", format!("{secs:.1} s, {profile}"));
}

/// Bytes of every pipeline stage for one fixed seed.
fn pipeline_bytes() -> Vec<u8> {
    let mut out = Vec::new();
    let template = PhantomSpec::new(Task::ShortAxis2d, 0).with_defects(vec![DefectSpec::parse("bridge:lv").unwrap()]);
    let phantoms = phantom::batch(&template, 3, 11).unwrap();
    for ph in &phantoms {
        let mut shape = vec![ph.probs.num_classes()];
        shape.extend_from_slice(ph.probs.shape().dims());
        write_values(&mut out, &shape, &ph.probs.to_stacked()).unwrap();
    }
    let fields: Vec<ScalarField<f64>> = (0..4).map(|s| noise(&[40, 30], s)).collect();
    for bc in barcodes_parallel(&fields, Construction::T, 1).unwrap() {
        bc.write_csv(&mut out).unwrap();
    }
    let ph = &phantoms[0];
    let (loss, grad) = topo_loss(&ph.probs, &ph.prior, Construction::V).unwrap();
    out.extend(serde_json::to_vec(&loss).unwrap());
    for ch in grad.channels() {
        out.extend(ch.iter().flat_map(|v| v.to_bits().to_le_bytes()));
    }
    let cfg = OptimizerConfig {
        iterations: 15,
        seed: 5,
        ..OptimizerConfig::for_ndim(2)
    };
    let (adapted, trace): (ProbSegmentation<f64>, _) = post_process(&ph.probs, &ph.prior, &cfg).unwrap();
    let mut shape = vec![adapted.num_classes()];
    shape.extend_from_slice(adapted.shape().dims());
    write_values(&mut out, &shape, &adapted.to_stacked()).unwrap();
    trace.write_csv(&mut out, false).unwrap();
    let report = cubitopo::evaluate("c", &argmax_labels(&adapted), &ph.truth, &ph.prior, Construction::V).unwrap();
    out.extend(serde_json::to_vec(&report).unwrap());
    out
}

fn determinism(r: &mut Report) {
    let runs: Vec<Vec<u8>> = [1usize, 1, 4]
        .iter()
        .map(|&n| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
            pool.install(pipeline_bytes)
        })
        .collect();
    let same = runs.windows(2).all(|w| w[0] == w[1]);
    r.line(
        same,
        false,
        "determinism",
        format!("{} bytes over phantoms, barcodes, loss, repair and report; 1, 1 and 4 threads", runs[0].len()),
    );
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut r = Report { hard_failures: 0 };
    oracle_equivalence(&mut r);
    binary_law(&mut r);
    gradient_check(&mut r);
    let rates = repair_corpus(&mut r);
    superiority(&mut r);
    cca_contrast(&mut r);
    construction_equivalence(&mut r, &rates);
    performance(&mut r);
    determinism(&mut r);
    println!("acceptance finished in {:.0} s", start.elapsed().as_secs_f64());
    if r.hard_failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
