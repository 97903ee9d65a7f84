//! Synthetic cardiac phantoms with known topology and injectable defects.
//!
//! A phantom is a clean label map that satisfies its prior exactly, turned
//! into probabilities by a softmax of signed distances, with each defect
//! blended in at a peak probability above 0.8.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridShape, LabelMap, ProbSegmentation};
use crate::metrics::squared_distance_transform;
use crate::prior::BettiPrior;

/// Added to every probability before renormalising, so logs stay finite.
pub const PROBABILITY_FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    ShortAxis2d,
    WholeHeart3d,
}

impl Task {
    pub fn default_dims(self) -> &'static [usize] {
        match self {
            Task::ShortAxis2d => &[80, 80],
            Task::WholeHeart3d => &[40, 36, 52],
        }
    }

    pub fn prior(self) -> BettiPrior {
        match self {
            Task::ShortAxis2d => BettiPrior::short_axis_2d(),
            Task::WholeHeart3d => BettiPrior::whole_heart_3d(),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::ShortAxis2d => "shortaxis2d",
            Task::WholeHeart3d => "wholeheart3d",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shortaxis2d" => Ok(Task::ShortAxis2d),
            "wholeheart3d" => Ok(Task::WholeHeart3d),
            _ => Err(Error::invalid(format!("unknown task `{s}` (shortaxis2d, wholeheart3d)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefectKind {
    /// A remote blob of the target class.
    ExtraComponent,
    /// A background hole inside the target class.
    HolePuncture,
    /// A strip of the target class into a class it must not touch.
    Bridge,
    /// A background cut through the myocardial ring.
    LoopBreak,
    /// A background gap between the target and the myocardium.
    Detach,
}

impl DefectKind {
    pub const ALL: [DefectKind; 5] = [
        DefectKind::ExtraComponent,
        DefectKind::HolePuncture,
        DefectKind::Bridge,
        DefectKind::LoopBreak,
        DefectKind::Detach,
    ];

    fn default_magnitude(self) -> f64 {
        match self {
            DefectKind::ExtraComponent => 2.5,
            DefectKind::HolePuncture => 1.0,
            DefectKind::Bridge | DefectKind::LoopBreak => 2.5,
            DefectKind::Detach => 2.0,
        }
    }
}

impl fmt::Display for DefectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DefectKind::ExtraComponent => "extra-component",
            DefectKind::HolePuncture => "hole-puncture",
            DefectKind::Bridge => "bridge",
            DefectKind::LoopBreak => "loop-break",
            DefectKind::Detach => "detach",
        })
    }
}

impl FromStr for DefectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DefectKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown defect `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectSpec {
    pub kind: DefectKind,
    /// Class name from the task prior, e.g. `rv`.
    pub target: String,
    /// Blob or hole radius, or strip width, in voxels. `None` picks a
    /// per-kind default.
    pub magnitude: Option<f64>,
}

impl DefectSpec {
    pub fn new(kind: DefectKind, target: &str) -> Self {
        Self {
            kind,
            target: target.to_string(),
            magnitude: None,
        }
    }

    /// Parses `kind:target` or `kind:target:magnitude`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(Error::invalid(format!("defect `{text}` is not kind:target[:magnitude]")));
        }
        let magnitude = match parts.get(2) {
            Some(m) => Some(
                m.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad magnitude in `{text}`")))?,
            ),
            None => None,
        };
        Ok(Self {
            kind: parts[0].parse()?,
            target: parts[1].to_string(),
            magnitude,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub task: Task,
    pub dims: Vec<usize>,
    pub seed: u64,
    pub defects: Vec<DefectSpec>,
    /// Boundary blur in `(0, 0.5]`; the softmax temperature is `4 * softness`
    /// voxels.
    pub softness: f64,
}

impl PhantomSpec {
    pub fn new(task: Task, seed: u64) -> Self {
        Self {
            task,
            dims: task.default_dims().to_vec(),
            seed,
            defects: Vec::new(),
            softness: 0.25,
        }
    }

    pub fn with_defects(mut self, defects: Vec<DefectSpec>) -> Self {
        self.defects = defects;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AppliedDefect {
    pub kind: DefectKind,
    pub target: String,
    /// Grid point the defect is centred on.
    pub center: Vec<usize>,
    /// Peak probability of the painted class.
    pub peak: f64,
}

#[derive(Clone, Debug)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub probs: ProbSegmentation<f64>,
    pub truth: LabelMap,
    pub prior: BettiPrior,
    pub defects: Vec<AppliedDefect>,
}

// class indices of the two tasks (1 is background)
const BG: u16 = 1;
mod sa {
    pub const RV: u16 = 2;
    pub const MY: u16 = 3;
    pub const LV: u16 = 4;
}
mod wh {
    pub const MY: u16 = 2;
    pub const LA: u16 = 3;
    pub const LV: u16 = 4;
    pub const RA: u16 = 5;
    pub const RV: u16 = 6;
}

/// Polar layout of the short-axis phantom around the LV centre.
struct ShortAxis {
    center: [f64; 2],
    r_lv: f64,
    r_my: f64,
    rv_angle: f64,
    rv_half_width: f64,
    rv_thick_min: f64,
    rv_thick_max: f64,
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    if d > PI {
        2.0 * PI - d
    } else {
        d
    }
}

impl ShortAxis {
    fn sample(rng: &mut ChaCha8Rng, dims: [usize; 2]) -> Self {
        let m = dims[0].min(dims[1]) as f64;
        let center = [
            dims[0] as f64 / 2.0 + rng.gen_range(-0.03..0.03) * m,
            dims[1] as f64 / 2.0 + (0.07 + rng.gen_range(-0.03..0.03)) * m,
        ];
        let r_lv = m * rng.gen_range(0.12..0.15);
        let r_my = r_lv + (m * rng.gen_range(0.07..0.09)).max(5.0);
        Self {
            center,
            r_lv,
            r_my,
            rv_angle: PI + rng.gen_range(-0.35..0.35),
            rv_half_width: rng.gen_range(0.9..1.2),
            rv_thick_min: 4.0,
            rv_thick_max: (m * rng.gen_range(0.12..0.16)).max(6.0),
        }
    }

    fn polar(&self, y: usize, x: usize) -> (f64, f64) {
        let dy = y as f64 - self.center[0];
        let dx = x as f64 - self.center[1];
        (dy.hypot(dx), dy.atan2(dx))
    }

    fn label(&self, y: usize, x: usize) -> u16 {
        let (r, theta) = self.polar(y, x);
        if r <= self.r_lv {
            return sa::LV;
        }
        if r <= self.r_my {
            return sa::MY;
        }
        let off = angle_diff(theta, self.rv_angle);
        if off <= self.rv_half_width {
            let s = (PI / 2.0 * off / self.rv_half_width).cos();
            let t = self.rv_thick_min + (self.rv_thick_max - self.rv_thick_min) * s;
            if r <= self.r_my + t {
                return sa::RV;
            }
        }
        BG
    }

    /// Grid point at polar `(r, angle)`, as `(z, y, x)` with `z = 0`.
    fn point(&self, r: f64, angle: f64) -> [f64; 3] {
        let (sy, sx) = angle.sin_cos();
        [0.0, self.center[0] + r * sy, self.center[1] + r * sx]
    }

    /// Annular sector `r0 <= r <= r1` of arc half-width `half` around
    /// `angle`, fading sideways over one voxel and scaled by `taper(t)` with
    /// `t` running from `r0` to `r1`.
    fn sector(&self, shape: &GridShape, angle: f64, (r0, r1): (f64, f64), half: f64, taper: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..shape.len())
            .map(|i| {
                let c = shape.coords(i);
                let (r, theta) = self.polar(c[1], c[2]);
                if r < r0 || r > r1 {
                    return 0.0;
                }
                let across = r * angle_diff(theta, angle);
                (1.0 - (across - half).max(0.0)).max(0.0) * taper((r - r0) / (r1 - r0))
            })
            .collect()
    }

    fn nearest(&self, shape: &GridShape, r: f64, angle: f64) -> usize {
        let p = self.point(r, angle);
        let d = shape.dims3();
        shape.linear([0, 1, 2].map(|a| (p[a].round().max(0.0) as usize).min(d[a] - 1)))
    }
}

/// Ellipsoid layout of the whole-heart phantom on the reference grid
/// `40 x 36 x 52`, scaled to the requested grid.
struct WholeHeart {
    scale: [f64; 3],
    shift: [f64; 3],
    grow: f64,
}

struct Ellipsoid {
    c: [f64; 3],
    r: [f64; 3],
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).map(|a| ((p[a] - self.c[a]) / self.r[a]).powi(2)).sum::<f64>() <= 1.0
    }
}

impl WholeHeart {
    const REFERENCE: [usize; 3] = [40, 36, 52];
    const CUP_TOP: f64 = 19.0;

    fn sample(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Self {
        let scale = [0, 1, 2].map(|a| dims[a] as f64 / Self::REFERENCE[a] as f64);
        Self {
            scale,
            shift: [0, 1, 2].map(|_| rng.gen_range(-1.5..1.5)),
            grow: rng.gen_range(-0.4..0.4),
        }
    }

    fn to_reference(&self, p: [usize; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| p[a] as f64 / self.scale[a] - self.shift[a])
    }

    fn to_grid(&self, q: [f64; 3], dz: f64) -> [f64; 3] {
        [0, 1, 2].map(|a| (q[a] + self.shift[a] + if a == 0 { dz } else { 0.0 }) * self.scale[a])
    }

    fn ell(&self, c: [f64; 3], r: [f64; 3]) -> Ellipsoid {
        Ellipsoid {
            c,
            r: r.map(|v| v + self.grow),
        }
    }

    fn chambers(&self) -> [(u16, Ellipsoid); 4] {
        [
            (wh::LV, self.ell([13.0, 18.0, 33.0], [8.0, 7.0, 7.0])),
            (wh::RV, self.ell([13.0, 18.0, 15.0], [8.0, 7.0, 7.5])),
            (wh::LA, self.ell([24.0, 18.0, 38.0], [6.0, 7.0, 7.5])),
            (wh::RA, self.ell([24.0, 18.0, 10.0], [6.0, 7.0, 7.5])),
        ]
    }

    fn center_of(&self, class: u16) -> [f64; 3] {
        self.chambers()
            .into_iter()
            .find(|(c, _)| *c == class)
            .map(|(_, e)| e.c)
            .expect("chamber class")
    }

    fn label(&self, p: [usize; 3]) -> u16 {
        let q = self.to_reference(p);
        let [lv, rv, la, ra] = self.chambers();
        let mut label = BG;
        // myocardium: cups around both ventricles, open towards the atria
        let lv_wall = self.ell(lv.1.c, [11.0, 10.0, 10.0]);
        let rv_wall = self.ell(rv.1.c, [10.0, 9.0, 9.5]);
        if q[0] <= Self::CUP_TOP && (lv_wall.contains(q) || rv_wall.contains(q)) {
            label = wh::MY;
        }
        for (class, e) in [lv, rv, la, ra] {
            if e.contains(q) {
                label = class;
            }
        }
        label
    }
}

fn classes_of(task: Task) -> BettiPrior {
    task.prior()
}

/// Softmax of negative signed distances with the floor applied.
fn soft_probabilities(truth: &LabelMap, softness: f64) -> Vec<Vec<f64>> {
    let shape = GridShape::new(truth.shape().dims()).expect("valid dims");
    let n = shape.len();
    let k = truth.num_classes();
    let tau = 4.0 * softness;
    let scores: Vec<Vec<f64>> = (1..=k)
        .into_par_iter()
        .map(|c| {
            let inside: Vec<bool> = truth.labels().iter().map(|&l| l as usize == c).collect();
            if !inside.iter().any(|&b| b) {
                return vec![-1e3; n];
            }
            let outside: Vec<bool> = inside.iter().map(|b| !b).collect();
            let d_out = squared_distance_transform(&shape, &inside);
            let d_in = squared_distance_transform(&shape, &outside);
            (0..n)
                .map(|i| {
                    let signed = if inside[i] { -d_in[i].sqrt() } else { d_out[i].sqrt() };
                    (-signed / tau).max(-1e3)
                })
                .collect()
        })
        .collect();
    let mut probs = vec![vec![0.0; n]; k];
    for i in 0..n {
        let max = (0..k).map(|c| scores[c][i]).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..k).map(|c| (scores[c][i] - max).exp()).sum();
        for c in 0..k {
            let p = (scores[c][i] - max).exp() / sum;
            probs[c][i] = (p + PROBABILITY_FLOOR) / (1.0 + k as f64 * PROBABILITY_FLOOR);
        }
    }
    probs
}

/// Blend weights in `[0, 1]` of one defect and the class it paints.
struct Paint {
    weight: Vec<f64>,
    class: u16,
}

/// Relative drop of the weight across the support. Flat plateaus would tie
/// many pixels and scatter the loss gradient over all of them.
const TILT: f64 = 0.1;

impl Paint {
    /// Cone peaking at `center`, zero beyond `radius + 1`.
    fn cone(shape: &GridShape, center: usize, radius: f64, class: u16) -> Self {
        let c = shape.coords(center);
        let weight = (0..shape.len())
            .map(|i| {
                let p = shape.coords(i);
                let d = (0..3).map(|a| (p[a] as f64 - c[a] as f64).powi(2)).sum::<f64>().sqrt();
                (1.0 - d / (radius + 1.0)).max(0.0)
            })
            .collect();
        Self { weight, class }
    }

    /// Scales the weight down linearly by up to `TILT` along a random
    /// direction, then restores the maximum.
    fn tilt(mut self, shape: &GridShape, rng: &mut ChaCha8Rng) -> Self {
        let active = shape.dims3().map(|d| if d > 1 { 1.0 } else { 0.0 });
        let dir: [f64; 3] = [0, 1, 2].map(|a| active[a] * rng.gen_range(-1.0..1.0));
        let proj = |i: usize| {
            let c = shape.coords(i);
            (0..3).map(|a| c[a] as f64 * dir[a]).sum::<f64>()
        };
        let support: Vec<usize> = (0..shape.len()).filter(|&i| self.weight[i] > 0.0).collect();
        let (lo, hi) = support
            .iter()
            .map(|&i| proj(i))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if hi > lo {
            for &i in &support {
                self.weight[i] *= 1.0 - TILT * (proj(i) - lo) / (hi - lo);
            }
        }
        // keep the peak at full strength
        let max = support.iter().map(|&i| self.weight[i]).fold(0.0, f64::max);
        if max > 0.0 {
            for &i in &support {
                self.weight[i] /= max;
            }
        }
        self
    }
}

/// Points whose distance to `avoid` is at least `clearance` and which stay
/// `margin` away from the grid border.
fn candidates(shape: &GridShape, avoid: &[bool], clearance: f64, margin: f64) -> Vec<usize> {
    let dist = squared_distance_transform(shape, avoid);
    let d = shape.dims3();
    (0..shape.len())
        .filter(|&i| {
            let c = shape.coords(i);
            let inside = (0..3).all(|a| d[a] == 1 || (c[a] as f64 >= margin && ((d[a] - 1 - c[a]) as f64) >= margin));
            inside && dist[i] >= clearance * clearance
        })
        .collect()
}

fn pick(rng: &mut ChaCha8Rng, from: &[usize], what: &str) -> Result<usize> {
    if from.is_empty() {
        return Err(Error::invalid(format!("no room for {what} on this grid")));
    }
    Ok(from[rng.gen_range(0..from.len())])
}

enum Layout {
    ShortAxis(ShortAxis),
    WholeHeart(WholeHeart),
}

fn plan_defect(
    rng: &mut ChaCha8Rng,
    layout: &Layout,
    truth: &LabelMap,
    prior: &BettiPrior,
    spec: &DefectSpec,
) -> Result<(Paint, usize)> {
    let shape = truth.shape();
    let target = prior
        .class_index(&spec.target)
        .filter(|&c| c >= 2)
        .ok_or_else(|| Error::invalid(format!("defect target `{}` is not a foreground class", spec.target)))?
        as u16;
    let magnitude = spec.magnitude.unwrap_or(spec.kind.default_magnitude());
    if !(magnitude.is_finite() && magnitude > 0.0) {
        return Err(Error::invalid(format!("defect magnitude must be > 0, got {magnitude}")));
    }
    let labels = truth.labels();
    let unsupported = || {
        Error::invalid(format!(
            "{} on `{}` is not possible for this task",
            spec.kind, spec.target
        ))
    };
    match spec.kind {
        DefectKind::ExtraComponent => {
            let fg: Vec<bool> = labels.iter().map(|&l| l != BG).collect();
            let spots = candidates(shape, &fg, magnitude + 4.0, magnitude + 2.0);
            let at = pick(rng, &spots, "an extra component")?;
            Ok((Paint::cone(shape, at, magnitude, target), at))
        }
        DefectKind::HolePuncture => {
            let other: Vec<bool> = labels.iter().map(|&l| l != target).collect();
            let spots = candidates(shape, &other, magnitude + 1.5, 1.0);
            let at = pick(rng, &spots, "a hole")?;
            Ok((Paint::cone(shape, at, magnitude, BG), at))
        }
        DefectKind::LoopBreak => match layout {
            Layout::ShortAxis(g) if target == sa::MY => {
                let angle = g.rv_angle + PI + rng.gen_range(-0.4..0.4);
                // weakest against the lv, so a partial repair closes the ring
                // there first instead of enclosing a pocket
                let (r0, r1) = (g.r_lv, g.r_my + 1.5);
                let weight = g.sector(shape, angle, (r0, r1), magnitude / 2.0, weak_start);
                let at = g.nearest(shape, (r0 + r1) / 2.0, angle);
                Ok((Paint { weight, class: BG }, at))
            }
            _ => Err(unsupported()),
        },
        DefectKind::Detach => match layout {
            Layout::ShortAxis(g) if target == sa::RV || target == sa::LV => {
                let at = if target == sa::RV {
                    let angle = g.rv_angle + rng.gen_range(-0.5..0.5) * g.rv_half_width;
                    g.nearest(shape, g.r_my + 0.5, angle)
                } else {
                    g.nearest(shape, g.r_lv, rng.gen_range(0.0..2.0 * PI))
                };
                Ok((Paint::cone(shape, at, magnitude, BG), at))
            }
            _ => Err(unsupported()),
        },
        DefectKind::Bridge => match layout {
            Layout::ShortAxis(g) if target == sa::RV || target == sa::LV => {
                let angle = g.rv_angle + rng.gen_range(-0.3..0.3) * g.rv_half_width;
                // cut most easily at the far chamber, leaving a spur of the
                // target rather than an island
                let half = magnitude / 2.0;
                let weight = if target == sa::RV {
                    g.sector(shape, angle, (g.r_lv, g.r_my + 1.5), half, weak_start)
                } else {
                    g.sector(shape, angle, (g.r_lv - 1.5, g.r_my), half, |t| weak_start(1.0 - t))
                };
                let (r0, r1) = (g.r_lv, g.r_my);
                let at = g.nearest(shape, (r0 + r1) / 2.0, angle);
                Ok((Paint { weight, class: target }, at))
            }
            Layout::WholeHeart(g) => {
                let partner = match target {
                    wh::LA => wh::RA,
                    wh::RA => wh::LA,
                    wh::LV => wh::RV,
                    wh::RV => wh::LV,
                    _ => return Err(unsupported()),
                };
                let jitter = rng.gen_range(-1.0..1.0);
                let a = g.to_grid(g.center_of(target), jitter);
                let b = g.to_grid(g.center_of(partner), jitter);
                let weight = strip(shape, a, b, magnitude / 2.0, weak_middle);
                let mid = [0, 1, 2].map(|k| ((a[k] + b[k]) / 2.0).round() as usize);
                Ok((Paint { weight, class: target }, shape.linear(mid)))
            }
            _ => Err(unsupported()),
        },
    }
}

/// Band of half-width `half` along the segment `a..b` with flat ends, fading
/// out sideways over one voxel and scaled by `taper(t)`, `t` running from `a`
/// to `b`.
fn strip(shape: &GridShape, a: [f64; 3], b: [f64; 3], half: f64, taper: impl Fn(f64) -> f64) -> Vec<f64> {
    let ab = [0, 1, 2].map(|i| b[i] - a[i]);
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    (0..shape.len())
        .map(|i| {
            let c = shape.coords(i);
            let ap = [0, 1, 2].map(|k| c[k] as f64 - a[k]);
            let t = ap.iter().zip(&ab).map(|(x, y)| x * y).sum::<f64>() / len2;
            if !(0.0..=1.0).contains(&t) {
                return 0.0;
            }
            let d = (0..3).map(|k| (ap[k] - t * ab[k]).powi(2)).sum::<f64>().sqrt();
            (1.0 - (d - half).max(0.0)).max(0.0) * taper(t)
        })
        .collect()
}

/// Strip profile 30% weaker at its start.
fn weak_start(t: f64) -> f64 {
    1.0 - 0.3 * (1.0 - t)
}

/// Strip profile that dips by 30% at the middle.
fn weak_middle(t: f64) -> f64 {
    1.0 - 0.3 * (1.0 - (2.0 * t - 1.0).abs())
}

/// `P <- (1 - a w) P + a w e_class`.
fn blend(probs: &mut [Vec<f64>], paint: &Paint, alpha: f64) {
    for (i, &w) in paint.weight.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let a = alpha * w;
        for (c, ch) in probs.iter_mut().enumerate() {
            let hot = if c + 1 == paint.class as usize { 1.0 } else { 0.0 };
            ch[i] = (1.0 - a) * ch[i] + a * hot;
        }
    }
}

pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    if !(spec.softness > 0.0 && spec.softness <= 0.5) {
        return Err(Error::invalid(format!("softness must lie in (0, 0.5], got {}", spec.softness)));
    }
    let min = spec.task.default_dims();
    if spec.dims.len() != min.len() || spec.dims.iter().zip(min).any(|(d, m)| d < m) {
        return Err(Error::invalid(format!(
            "{} needs {} axes of at least {:?}, got {:?}",
            spec.task,
            min.len(),
            min,
            spec.dims
        )));
    }
    let shape = GridShape::new(&spec.dims)?;
    let prior = classes_of(spec.task);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (layout, labels): (Layout, Vec<u16>) = match spec.task {
        Task::ShortAxis2d => {
            let g = ShortAxis::sample(&mut rng, [spec.dims[0], spec.dims[1]]);
            let labels = (0..shape.len())
                .map(|i| {
                    let c = shape.coords(i);
                    g.label(c[1], c[2])
                })
                .collect();
            (Layout::ShortAxis(g), labels)
        }
        Task::WholeHeart3d => {
            let g = WholeHeart::sample(&mut rng, [spec.dims[0], spec.dims[1], spec.dims[2]]);
            let labels = (0..shape.len()).map(|i| g.label(shape.coords(i))).collect();
            (Layout::WholeHeart(g), labels)
        }
    };
    let truth = LabelMap::new(shape.clone(), prior.num_classes(), labels)?;
    let mut probs = soft_probabilities(&truth, spec.softness);
    let mut applied = Vec::with_capacity(spec.defects.len());
    for d in &spec.defects {
        let (paint, at) = plan_defect(&mut rng, &layout, &truth, &prior, d)?;
        let paint = paint.tilt(&shape, &mut rng);
        let alpha = rng.gen_range(0.82..0.92);
        blend(&mut probs, &paint, alpha);
        let peak = (0..shape.len())
            .filter(|&i| paint.weight[i] > 0.0)
            .map(|i| probs[paint.class as usize - 1][i])
            .fold(0.0, f64::max);
        applied.push(AppliedDefect {
            kind: d.kind,
            target: d.target.clone(),
            center: shape.coords(at)[(3 - shape.ndim())..].to_vec(),
            peak,
        });
    }
    Ok(Phantom {
        spec: spec.clone(),
        probs: ProbSegmentation::new(shape, probs)?,
        truth,
        prior,
        defects: applied,
    })
}

/// Defects that every phantom of `task` can host, as `(kind, target)`.
pub fn defect_catalogue(task: Task) -> Vec<(DefectKind, &'static str)> {
    use DefectKind::*;
    match task {
        Task::ShortAxis2d => vec![
            (ExtraComponent, "rv"),
            (ExtraComponent, "my"),
            (ExtraComponent, "lv"),
            (HolePuncture, "rv"),
            (HolePuncture, "my"),
            (HolePuncture, "lv"),
            (LoopBreak, "my"),
            (Bridge, "rv"),
            (Bridge, "lv"),
            (Detach, "rv"),
            (Detach, "lv"),
        ],
        Task::WholeHeart3d => vec![
            (ExtraComponent, "my"),
            (ExtraComponent, "la"),
            (ExtraComponent, "lv"),
            (ExtraComponent, "ra"),
            (ExtraComponent, "rv"),
            (HolePuncture, "la"),
            (HolePuncture, "lv"),
            (HolePuncture, "ra"),
            (HolePuncture, "rv"),
            (Bridge, "la"),
            (Bridge, "lv"),
        ],
    }
}

/// One or two distinct catalogue defects drawn from `seed`.
pub fn random_defects(task: Task, seed: u64) -> Vec<DefectSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = defect_catalogue(task);
    let n = rng.gen_range(1..=2);
    (0..n)
        .map(|_| {
            let (kind, target) = pool.swap_remove(rng.gen_range(0..pool.len()));
            DefectSpec::new(kind, target)
        })
        .collect()
}

/// Seeds of a batch: the first is `seed` itself, the rest are drawn from it.
pub fn batch_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut seeds = vec![seed];
    while seeds.len() < n {
        let s: u64 = rng.gen();
        if !seeds.contains(&s) {
            seeds.push(s);
        }
    }
    seeds.truncate(n);
    seeds
}

/// `n` phantoms from one template with distinct derived seeds.
pub fn batch(template: &PhantomSpec, n: usize, seed: u64) -> Result<Vec<Phantom>> {
    if n == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    batch_seeds(seed, n)
        .into_par_iter()
        .map(|s| {
            generate(&PhantomSpec {
                seed: s,
                ..template.clone()
            })
        })
        .collect()
}
