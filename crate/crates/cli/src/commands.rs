use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use cubitopo::grid::{argmax_labels, binarize};
use cubitopo::metrics::{self, betti_oracle, cca_baseline};
use cubitopo::npy::{self, NpyArray};
use cubitopo::phantom::{self, DefectSpec, PhantomSpec, Task};
use cubitopo::{
    barcode_of_field, betti_error, post_process, BettiPrior, Error, GridShape, LabelMap, OptimizerConfig,
    ProbSegmentation, ScalarField,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::{BarcodeArgs, BenchArgs, BettiArgs, EvaluateArgs, OptimizeArgs, PhantomArgs};

/// Message plus process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::ShapeMismatch(_) | Error::PriorParse { .. } | Error::Npy { .. } => 2,
        Error::Field { source, .. } => exit_code(source),
        Error::Io(_) | Error::Json(_) => 1,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    }
}

pub fn init_threads(threads: Option<usize>) -> CmdResult {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Failure::usage("--threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure {
            code: 1,
            message: format!("cannot start thread pool: {e}"),
        })
}

/// Output files are checked before any computation so a long run cannot end
/// on a typo.
fn check_output(path: &Path) -> CmdResult {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        return Err(Failure::usage(format!(
            "{}: directory {} does not exist",
            path.display(),
            parent.display()
        )));
    }
    if path.is_dir() {
        return Err(Failure::usage(format!("{}: is a directory", path.display())));
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

/// Runs `f` against the file at `path`, or stdout when absent.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> cubitopo::Result<()>) -> CmdResult {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w)?;
            w.flush().map_err(|e| io_failure(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush().map_err(|e| io_failure(Path::new("<stdout>"), e))
        }
    }
}

fn write_json(path: Option<&Path>, value: &Value) -> CmdResult {
    with_output(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn read_prior(path: &Path) -> Result<BettiPrior, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    BettiPrior::from_json(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn default_max_dim(ndim: usize, requested: Option<usize>) -> Result<usize, Failure> {
    match requested {
        None => Ok(ndim - 1),
        Some(d) if d < ndim => Ok(d),
        Some(d) => Err(Failure::usage(format!("--max-dim {d} must be below the field dimension {ndim}"))),
    }
}

pub fn barcode(a: &BarcodeArgs) -> CmdResult {
    if let Some(out) = &a.out {
        check_output(out)?;
    }
    let field: ScalarField<f64> = npy::read_field(&a.field, None)?;
    let max_dim = default_max_dim(field.shape().ndim(), a.max_dim)?;
    let bc = barcode_of_field(&field, a.construction, max_dim)?.with_id(a.field.display().to_string());
    with_output(a.out.as_deref(), |w| bc.write_csv(w))
}

pub fn betti(a: &BettiArgs) -> CmdResult {
    let field: ScalarField<f64> = npy::read_field(&a.field, None)?;
    if let Some(t) = a.thresholds.iter().find(|t| !t.is_finite()) {
        return Err(Failure::usage(format!("threshold {t} is not finite")));
    }
    let levels: Vec<Value> = a
        .thresholds
        .iter()
        .map(|&t| json!({ "threshold": t, "betti": betti_oracle(&binarize(&field, t), a.construction) }))
        .collect();
    write_json(
        None,
        &json!({
            "field": a.field.display().to_string(),
            "construction": a.construction.to_string(),
            "levels": levels,
        }),
    )
}

fn be_of(probs: &ProbSegmentation<f64>, prior: &BettiPrior, cfg: &OptimizerConfig) -> Result<usize, Failure> {
    Ok(betti_error(&argmax_labels(probs), prior, cfg.construction)?.0)
}

pub fn optimize(a: &OptimizeArgs) -> CmdResult {
    check_output(&a.out)?;
    if let Some(t) = &a.trace {
        check_output(t)?;
    }
    let prior = read_prior(&a.prior)?;
    let probs: ProbSegmentation<f64> = npy::read_probabilities(&a.probs, None)?;

    let mut cfg = OptimizerConfig::for_ndim(probs.shape().ndim());
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(lr) = a.lr {
        cfg.learning_rate = lr;
    }
    if let Some(n) = a.iters {
        cfg.iterations = n;
    }
    cfg.seed = a.seed;
    cfg.construction = a.construction;
    cfg.clamp = a.clamp;
    cfg.validate()?;

    let be_before = be_of(&probs, &prior, &cfg)?;
    let start = Instant::now();
    let (adapted, trace) = post_process(&probs, &prior, &cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    let be_after = be_of(&adapted, &prior, &cfg)?;

    npy::write_probabilities(&a.out, &adapted)?;
    if let Some(t) = &a.trace {
        let mut w = create(t)?;
        trace.write_csv(&mut w, a.timing)?;
        w.flush().map_err(|e| io_failure(t, e))?;
    }
    let mut summary = json!({
        "iterations": cfg.iterations,
        "learning_rate": cfg.learning_rate,
        "lambda": cfg.lambda,
        "construction": cfg.construction.to_string(),
        "seed": cfg.seed,
        "be_before": be_before,
        "be_after": be_after,
        "final_topo_loss": trace.final_loss.total,
    });
    if a.timing {
        summary["seconds"] = json!(seconds);
    }
    write_json(None, &summary)
}

fn read_prediction(a: &EvaluateArgs, prior: &BettiPrior) -> Result<LabelMap, Failure> {
    let spacing = a.spacing.as_deref();
    match npy::read_array_file(&a.pred)? {
        NpyArray::Int { .. } => {
            if a.cca {
                return Err(Failure::usage("--cca needs a probability stack, not labels"));
            }
            Ok(npy::read_labels(&a.pred, Some(prior.num_classes()), spacing)?)
        }
        NpyArray::Float { .. } => {
            let probs: ProbSegmentation<f64> = npy::read_probabilities(&a.pred, spacing)?;
            Ok(if a.cca { cca_baseline(&probs) } else { argmax_labels(&probs) })
        }
    }
}

pub fn evaluate(a: &EvaluateArgs) -> CmdResult {
    for out in a.report.iter().chain(&a.csv) {
        check_output(out)?;
    }
    let prior = read_prior(&a.prior)?;
    let pred = read_prediction(a, &prior)?;
    let gt = npy::read_labels(&a.gt, Some(prior.num_classes()), a.spacing.as_deref())?;
    if !pred.shape().same_extent(gt.shape()) {
        return Err(Failure::usage(format!(
            "prediction {:?} and ground truth {:?} differ in shape",
            pred.shape().dims(),
            gt.shape().dims()
        )));
    }
    let case = a
        .case
        .clone()
        .unwrap_or_else(|| a.pred.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    let report = metrics::evaluate(case, &pred, &gt, &prior, a.construction)?;
    let reports = [report];
    with_output(a.report.as_deref(), |w| {
        metrics::write_json_report(&mut *w, &reports)?;
        writeln!(w)?;
        Ok(())
    })?;
    if let Some(path) = &a.csv {
        with_output(Some(path), |w| metrics::write_csv_report(w, &reports, &prior))?;
    }
    Ok(())
}

fn case_specs(a: &PhantomArgs) -> Result<Vec<PhantomSpec>, Failure> {
    if a.n == 0 {
        return Err(Failure::usage("--n must be at least 1"));
    }
    let fixed: Vec<DefectSpec> = a.defects.iter().map(|d| DefectSpec::parse(d)).collect::<Result<_, _>>()?;
    Ok(phantom::batch_seeds(a.seed, a.n)
        .into_iter()
        .map(|s| {
            let mut spec = PhantomSpec::new(a.task, s);
            if let Some(d) = &a.dims {
                spec.dims = d.clone();
            }
            spec.softness = a.softness;
            spec.defects = if a.random_defects {
                phantom::random_defects(a.task, s)
            } else {
                fixed.clone()
            };
            spec
        })
        .collect())
}

pub fn phantom(a: &PhantomArgs) -> CmdResult {
    let specs = case_specs(a)?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::usage(format!("{}: {e}", a.out.display())))?;
    let cases: Vec<Value> = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| -> Result<Value, Failure> {
            let ph = phantom::generate(spec)?;
            let name = format!("case_{i:03}");
            let dir = a.out.join(&name);
            fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
            npy::write_probabilities(&dir.join("probs.npy"), &ph.probs)?;
            npy::write_labels(&dir.join("truth.npy"), &ph.truth)?;
            let prior_path = dir.join("prior.json");
            let mut w = create(&prior_path)?;
            serde_json::to_writer_pretty(&mut w, &ph.prior.to_json()).map_err(|e| io_failure(&prior_path, e))?;
            w.flush().map_err(|e| io_failure(&prior_path, e))?;
            let meta = json!({ "case": name, "spec": ph.spec, "defects": ph.defects });
            let spec_path = dir.join("spec.json");
            let mut w = create(&spec_path)?;
            serde_json::to_writer_pretty(&mut w, &meta).map_err(|e| io_failure(&spec_path, e))?;
            w.flush().map_err(|e| io_failure(&spec_path, e))?;
            Ok(json!({ "case": name, "seed": spec.seed, "defects": ph.defects.len() }))
        })
        .collect::<Result<_, _>>()?;
    write_json(
        None,
        &json!({ "task": a.task.to_string(), "out": a.out.display().to_string(), "cases": cases }),
    )
}

fn parse_shape(text: &str) -> Result<Vec<usize>, Failure> {
    let dims: Vec<usize> = text
        .split(['x', 'X', ','])
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::usage(format!("bad shape `{text}`, expected e.g. 352x352")))?;
    GridShape::new(&dims)?;
    Ok(dims)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    metrics::percentile(&v, 50.0).unwrap_or(f64::NAN)
}

pub fn bench(a: &BenchArgs) -> CmdResult {
    if let Some(r) = &a.report {
        check_output(r)?;
    }
    if a.repeats == 0 {
        return Err(Failure::usage("--repeats must be at least 1"));
    }
    let field: ScalarField<f64> = match &a.input {
        Some(p) => npy::read_field(p, None)?,
        None => {
            let dims = parse_shape(&a.shape)?;
            let shape = GridShape::new(&dims)?;
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let values = (0..shape.len()).map(|_| rng.gen::<f64>()).collect();
            ScalarField::new(shape, values)?
        }
    };
    let dims = field.shape().dims().to_vec();
    let ndim = dims.len();

    let mut times = Vec::with_capacity(a.repeats);
    let mut bars = 0;
    for _ in 0..a.repeats {
        let start = Instant::now();
        let bc = barcode_of_field(&field, a.construction, ndim - 1)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        bars = bc.bars.len();
    }
    let mut report = json!({
        "shape": dims,
        "construction": a.construction.to_string(),
        "threads": rayon::current_num_threads(),
        "bars": bars,
        "barcode_ms": { "median": median(times.clone()), "min": times.iter().copied().fold(f64::INFINITY, f64::min), "runs": times },
    });

    if a.optimize {
        let task = if ndim == 2 { Task::ShortAxis2d } else { Task::WholeHeart3d };
        let mut spec = PhantomSpec::new(task, a.seed);
        spec.dims = dims.clone();
        spec.defects = phantom::random_defects(task, a.seed);
        let ph = phantom::generate(&spec)?;
        let mut cfg = OptimizerConfig::for_ndim(ndim);
        cfg.construction = a.construction;
        let start = Instant::now();
        let (adapted, _) = post_process(&ph.probs, &ph.prior, &cfg)?;
        let seconds = start.elapsed().as_secs_f64();
        report["optimize"] = json!({
            "task": task.to_string(),
            "iterations": cfg.iterations,
            "seconds": seconds,
            "be_before": be_of(&ph.probs, &ph.prior, &cfg)?,
            "be_after": be_of(&adapted, &ph.prior, &cfg)?,
        });
    }
    write_json(None, &report)?;
    if let Some(r) = &a.report {
        write_json(Some(r.as_path()), &report)?;
    }
    Ok(())
}
