//! Evaluation: Betti error and topological success, overlap, surface
//! distance, and corpus summaries.

pub mod oracle;
pub mod overlap;

use std::io::Write;

use serde::Serialize;

use crate::complex::Construction;
use crate::error::{Error, Result};
use crate::grid::LabelMap;
use crate::prior::{BettiPrior, Subset};

pub use oracle::{betti_oracle, euler_characteristic, label_components};
pub use overlap::{cca_baseline, dice, gdice, hausdorff, squared_distance_transform};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SubsetBetti {
    pub subset: Subset,
    pub name: String,
    pub predicted: Vec<usize>,
    pub target: Vec<u32>,
}

impl SubsetBetti {
    pub fn error(&self) -> usize {
        self.predicted
            .iter()
            .zip(&self.target)
            .map(|(&p, &t)| p.abs_diff(t as usize))
            .sum()
    }
}

/// Betti error over every evaluation subset, with the per-subset vectors.
pub fn betti_error(pred: &LabelMap, prior: &BettiPrior, construction: Construction) -> Result<(usize, Vec<SubsetBetti>)> {
    if prior.num_classes() != pred.num_classes() || prior.ndim() != pred.shape().ndim() {
        return Err(Error::invalid(format!(
            "prior ({}D, {} classes) does not fit labels ({}D, {} classes)",
            prior.ndim(),
            prior.num_classes(),
            pred.shape().ndim(),
            pred.num_classes()
        )));
    }
    let mut detail = Vec::new();
    for subset in prior.evaluation_subsets() {
        let target = prior.get(&subset).ok_or_else(|| {
            Error::invalid(format!("prior has no entry for `{}`", prior.subset_name(&subset)))
        })?;
        detail.push(SubsetBetti {
            name: prior.subset_name(&subset),
            predicted: betti_oracle(&pred.union_mask(&subset), construction),
            target: target.to_vec(),
            subset,
        });
    }
    Ok((detail.iter().map(SubsetBetti::error).sum(), detail))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopoReport {
    pub case: String,
    pub be: usize,
    /// `1` iff `be == 0`.
    pub ts: u8,
    /// Per foreground class, in class order.
    pub dice: Vec<f64>,
    pub gdice: f64,
    /// Per foreground class; `None` when a mask is empty.
    pub hausdorff: Vec<Option<f64>>,
    pub betti: Vec<SubsetBetti>,
}

/// Full metric set of one prediction against its ground truth.
pub fn evaluate(
    case: impl Into<String>,
    pred: &LabelMap,
    gt: &LabelMap,
    prior: &BettiPrior,
    construction: Construction,
) -> Result<TopoReport> {
    let (be, betti) = betti_error(pred, prior, construction)?;
    let classes = 2..=pred.num_classes();
    Ok(TopoReport {
        case: case.into(),
        be,
        ts: u8::from(be == 0),
        dice: classes.clone().map(|c| dice(pred, gt, c)).collect::<Result<_>>()?,
        gdice: gdice(pred, gt)?,
        hausdorff: classes.map(|c| hausdorff(pred, gt, c)).collect::<Result<_>>()?,
        betti,
    })
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Quartiles {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

impl Quartiles {
    fn of(values: &[f64]) -> Option<Self> {
        Some(Self {
            p25: percentile(values, 25.0)?,
            p50: percentile(values, 50.0)?,
            p75: percentile(values, 75.0)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BeSummary {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p98: f64,
    pub p99: f64,
    pub p100: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub be: BeSummary,
    pub gdice: Quartiles,
    /// Per foreground class.
    pub dice: Vec<Quartiles>,
    /// Per foreground class over cases where the distance is defined.
    pub hausdorff: Vec<Option<Quartiles>>,
    /// Percentage of cases with `ts == 1`.
    pub rho: f64,
    /// Binomial standard deviation of the success indicator, in percent.
    pub sigma_rho: f64,
}

pub fn aggregate(reports: &[TopoReport]) -> Result<Summary> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports to aggregate"));
    }
    let n = reports.len();
    let be: Vec<f64> = reports.iter().map(|r| r.be as f64).collect();
    let pct = |q| percentile(&be, q).expect("nonempty");
    let gd: Vec<f64> = reports.iter().map(|r| r.gdice).collect();
    let classes = reports[0].dice.len();
    let dice = (0..classes)
        .map(|c| {
            let v: Vec<f64> = reports.iter().map(|r| r.dice[c]).collect();
            Quartiles::of(&v).expect("nonempty")
        })
        .collect();
    let hausdorff = (0..classes)
        .map(|c| {
            let v: Vec<f64> = reports.iter().filter_map(|r| r.hausdorff[c]).collect();
            Quartiles::of(&v)
        })
        .collect();
    let success = reports.iter().filter(|r| r.ts == 1).count() as f64 / n as f64;
    Ok(Summary {
        n,
        be: BeSummary {
            p25: pct(25.0),
            p50: pct(50.0),
            p75: pct(75.0),
            p98: pct(98.0),
            p99: pct(99.0),
            p100: pct(100.0),
        },
        gdice: Quartiles::of(&gd).expect("nonempty"),
        dice,
        hausdorff,
        rho: 100.0 * success,
        sigma_rho: 100.0 * (success * (1.0 - success)).sqrt(),
    })
}

#[derive(Serialize)]
struct JsonReport<'a> {
    cases: &'a [TopoReport],
    summary: Summary,
}

pub fn write_json_report<W: Write>(w: W, reports: &[TopoReport]) -> Result<()> {
    let doc = JsonReport {
        cases: reports,
        summary: aggregate(reports)?,
    };
    serde_json::to_writer_pretty(w, &doc)?;
    Ok(())
}

/// One row per case: `case,BE,TS,gDSC`, then `DSC_<class>` and `HDD_<class>`
/// per foreground class (empty when undefined).
pub fn write_csv_report<W: Write>(mut w: W, reports: &[TopoReport], prior: &BettiPrior) -> Result<()> {
    let names = &prior.class_names()[1..];
    let mut header = vec!["case".to_string(), "BE".into(), "TS".into(), "gDSC".into()];
    header.extend(names.iter().map(|n| format!("DSC_{n}")));
    header.extend(names.iter().map(|n| format!("HDD_{n}")));
    writeln!(w, "{}", header.join(","))?;
    for r in reports {
        let mut row = vec![r.case.clone(), r.be.to_string(), r.ts.to_string(), format!("{:?}", r.gdice)];
        row.extend(r.dice.iter().map(|d| format!("{d:?}")));
        row.extend(r.hausdorff.iter().map(|h| h.map(|v| format!("{v:?}")).unwrap_or_default()));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
