//! Constructive bracket covers with Lipschitz bracket functions, bracketing
//! counts over dyadic levels, the discrete entropy sum and the level-`q`
//! projections used in chaining arguments.
//!
//! Counts are sizes of explicit covers, so they are upper bounds on the
//! minimal bracketing numbers.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::empirical::{FunctionClass, Member};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::stats;

/// Relative slack kept below the gap target so that rounding never pushes a
/// constructed gap over it.
const SLACK: f64 = 1e-9;

/// Probability measure on a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measure {
    Uniform { bounds: Vec<[f64; 2]> },
    /// Supported on `bounds` with density at most `max_density`.
    BoundedDensity { bounds: Vec<[f64; 2]>, max_density: f64 },
}

impl Measure {
    pub fn uniform_unit(dim: usize) -> Self {
        Measure::Uniform { bounds: vec![[0.0, 1.0]; dim] }
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        match self {
            Measure::Uniform { bounds } | Measure::BoundedDensity { bounds, .. } => bounds,
        }
    }

    /// Upper bound on the density with respect to Lebesgue measure.
    pub fn density_bound(&self) -> f64 {
        match self {
            Measure::Uniform { bounds } => 1.0 / volume(bounds),
            Measure::BoundedDensity { max_density, .. } => *max_density,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let b = self.bounds();
        if b.len() != dim {
            return Err(Error::validation("mu", format!("expected {dim}-dimensional support")));
        }
        if b.iter().any(|[lo, hi]| !(hi > lo) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::validation("mu", "bounds must be finite with lo < hi"));
        }
        if let Measure::BoundedDensity { max_density, .. } = self {
            if !(*max_density > 0.0) || *max_density * volume(b) < 1.0 - 1e-12 {
                return Err(Error::validation("mu", "density bound cannot carry unit mass on the box"));
            }
        }
        Ok(())
    }
}

fn volume(bounds: &[[f64; 2]]) -> f64 {
    bounds.iter().map(|[lo, hi]| hi - lo).product()
}

/// The full (infinite) family a bracket cover has to cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BracketClass {
    /// `1{y <= x}`, `x` real.
    Intervals,
    /// `1{y <= c}` componentwise, `c` in `R^dim`.
    Rectangles { dim: usize },
    /// Ramps `clamp((x + width - y) / width, 0, 1)`, `x` real.
    Ramps { width: f64 },
    /// Axis-aligned ellipses in the plane with centers in `center_box` and
    /// both radii in `radius_range`.
    Ellipsoids { center_box: [[f64; 2]; 2], radius_range: [f64; 2] },
}

impl BracketClass {
    pub fn dim(&self) -> usize {
        match self {
            BracketClass::Intervals | BracketClass::Ramps { .. } => 1,
            BracketClass::Rectangles { dim } => *dim,
            BracketClass::Ellipsoids { .. } => 2,
        }
    }

    /// The family spanned by the members of a finite grid.
    pub fn from_function_class(fc: &FunctionClass) -> Result<Self> {
        let first = fc.members.first().ok_or_else(|| Error::validation("class", "empty"))?;
        match first {
            Member::Interval { .. } => Ok(BracketClass::Intervals),
            Member::Rectangle { corner } => Ok(BracketClass::Rectangles { dim: corner.len() }),
            Member::Ramp { width, .. } => Ok(BracketClass::Ramps { width: *width }),
            Member::Ellipsoid { .. } => {
                let mut center_box = [[f64::INFINITY, f64::NEG_INFINITY]; 2];
                let mut radius_range = [f64::INFINITY, f64::NEG_INFINITY];
                for m in &fc.members {
                    let Member::Ellipsoid { center, radii } = m else {
                        return Err(Error::validation("class", "mixed member kinds"));
                    };
                    if center.len() != 2 || radii.len() != 2 {
                        return Err(Error::validation("class", "ellipsoid brackets are planar"));
                    }
                    for k in 0..2 {
                        center_box[k][0] = center_box[k][0].min(center[k]);
                        center_box[k][1] = center_box[k][1].max(center[k]);
                        radius_range[0] = radius_range[0].min(radii[k]);
                        radius_range[1] = radius_range[1].max(radii[k]);
                    }
                }
                Ok(BracketClass::Ellipsoids { center_box, radius_range })
            }
            Member::State { .. } => Err(Error::validation("class", "no bracket construction for state functions")),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            BracketClass::Rectangles { dim } if *dim == 0 => Err(Error::validation("class", "dimension 0")),
            BracketClass::Ramps { width } if !(*width > 0.0) => Err(Error::validation("class", "ramp width must be positive")),
            BracketClass::Ellipsoids { center_box, radius_range } => {
                if !(radius_range[0] > 0.0 && radius_range[1] >= radius_range[0]) {
                    return Err(Error::validation("class", "radius range must be positive and ordered"));
                }
                if center_box.iter().any(|[lo, hi]| hi < lo) {
                    return Err(Error::validation("class", "center box must be ordered"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Evaluable bracket function with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BracketFn {
    Constant { value: f64 },
    /// `clamp((end - y_0) / width, 0, 1)`
    DownRamp { end: f64, width: f64 },
    /// `prod_k clamp((end_k - y_k) / width_k, 0, 1)`
    Orthant { ends: Vec<f64>, widths: Vec<f64> },
    /// `clamp((top - rho(y)) / eta, 0, 1)` with
    /// `rho(y) = || max(|y - center| + shift, 0) / radii ||_2`.
    Ellipse { center: [f64; 2], radii: [f64; 2], shift: f64, top: f64, eta: f64 },
}

fn down_ramp(end: f64, width: f64, y: f64) -> f64 {
    ((end - y) / width).clamp(0.0, 1.0)
}

impl BracketFn {
    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            BracketFn::Constant { value } => *value,
            BracketFn::DownRamp { end, width } => down_ramp(*end, *width, y[0]),
            BracketFn::Orthant { ends, widths } => {
                ends.iter().zip(widths).zip(y).map(|((e, w), v)| down_ramp(*e, *w, *v)).product()
            }
            BracketFn::Ellipse { center, radii, shift, top, eta } => {
                let rho = (0..2)
                    .map(|k| (((y[k] - center[k]).abs() + shift).max(0.0) / radii[k]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                ((top - rho) / eta).clamp(0.0, 1.0)
            }
        }
    }

    /// `sup |g| + Lip(g)` with the Lipschitz constant taken for the
    /// Euclidean metric (an upper bound for products).
    pub fn c_norm(&self) -> f64 {
        match self {
            BracketFn::Constant { value } => value.abs(),
            BracketFn::DownRamp { width, .. } => 1.0 + 1.0 / width,
            BracketFn::Orthant { widths, .. } => 1.0 + widths.iter().map(|w| 1.0 / w).sum::<f64>(),
            BracketFn::Ellipse { radii, eta, .. } => 1.0 + 1.0 / (eta * radii[0].min(radii[1])),
        }
    }

    /// Mean under the uniform law on `[lo, hi]` for one-dimensional
    /// functions.
    pub fn mean_uniform_1d(&self, lo: f64, hi: f64) -> Option<f64> {
        match self {
            BracketFn::Constant { value } => Some(*value),
            BracketFn::DownRamp { end, width } => {
                // Antiderivative of the ramp in y.
                let prim = |y: f64| {
                    let start = end - width;
                    if y <= start {
                        y
                    } else if y <= *end {
                        start + (y - start) - (y - start).powi(2) / (2.0 * width)
                    } else {
                        start + width / 2.0
                    }
                };
                Some((prim(hi) - prim(lo)) / (hi - lo))
            }
            _ => None,
        }
    }
}

/// `[lower, upper]` with the bound on `||upper - lower||_s` under the measure
/// and the larger of the two smoothness norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: BracketFn,
    pub upper: BracketFn,
    pub ls_gap: f64,
    pub c_norm: f64,
    pub s: f64,
}

/// Cells along one axis: index 0 is `x < lo`, `1..=m` split `[lo, hi)` with
/// pitch `h`, and `m + 1` is `x >= hi`.
#[derive(Debug, Clone, PartialEq)]
struct Axis {
    lo: f64,
    hi: f64,
    pitch: f64,
    middle: u64,
}

impl Axis {
    fn new(lo: f64, hi: f64, pitch: f64) -> Self {
        let middle = ((hi - lo) / pitch).ceil().max(1.0) as u64;
        Self { lo, hi, pitch, middle }
    }

    fn cells(&self) -> u64 {
        self.middle + 2
    }

    fn cell_of(&self, x: f64) -> u64 {
        if x < self.lo {
            0
        } else if x >= self.hi {
            self.middle + 1
        } else {
            (((x - self.lo) / self.pitch).floor() as u64 + 1).min(self.middle)
        }
    }

    /// Parameter range `[a, b]` of a middle cell.
    fn range(&self, j: u64) -> (f64, f64) {
        let a = self.lo + (j - 1) as f64 * self.pitch;
        (a, (a + self.pitch).min(self.hi))
    }
}

/// Half-line indicator brackets along one coordinate: lower ramp ends at the
/// left end of the cell, upper ramp starts at its right end.
#[derive(Debug, Clone, PartialEq)]
struct IndicatorAxis {
    axis: Axis,
    width: f64,
}

impl IndicatorAxis {
    /// Plans an axis so that `integral (u - l)^s dy <= target` per cell with
    /// ramp width at least `w_min`. Ramps take half the target by default.
    fn plan(lo: f64, hi: f64, target: f64, s: f64, w_min: f64) -> Option<Self> {
        let width = ((s + 1.0) * target / 4.0).max(w_min);
        let pitch = (target - 2.0 * width / (s + 1.0)) * (1.0 - SLACK);
        (pitch > 0.0).then(|| Self { axis: Axis::new(lo, hi, pitch), width })
    }

    /// `(lower, upper, integral of (u - l)^s)` along this coordinate.
    fn bracket(&self, j: u64, s: f64) -> ((f64, f64), (f64, f64), f64) {
        let w = self.width;
        let ramp = w / (s + 1.0);
        let Axis { lo, hi, middle, .. } = self.axis;
        if j == 0 {
            // The lower end is -infinity: a ramp ending far left of the support.
            ((lo - 1.0, w), (lo + w, w), ramp)
        } else if j == middle + 1 {
            ((hi, w), (f64::INFINITY, w), ramp)
        } else {
            let (a, b) = self.axis.range(j);
            ((a, w), (b + w, w), (b - a) + 2.0 * ramp)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Plan {
    Trivial,
    Indicators { axes: Vec<IndicatorAxis>, bounds: Vec<[f64; 2]> },
    Ramps { axis: Axis, width: f64 },
    Ellipses(EllipsePlan),
}

#[derive(Debug, Clone, PartialEq)]
struct EllipsePlan {
    centers: [Axis; 2],
    radius_lo: f64,
    radius_cells: u64,
    delta: f64,
    eta: f64,
}

/// Area of `{y : rho(y) <= 1 - eta}` for the inner set.
fn inner_area(r_lo: [f64; 2], delta: f64, eta: f64) -> f64 {
    let scale = 1.0 - eta;
    if scale <= 0.0 {
        return 0.0;
    }
    let (a, b) = (scale * r_lo[0], scale * r_lo[1]);
    let c = delta / 2.0;
    if c >= a || c >= b {
        return 0.0;
    }
    let u_max = a * (1.0 - (c / b).powi(2)).sqrt();
    if u_max <= c {
        return 0.0;
    }
    let g = |u: f64| {
        let x = (u / a).min(1.0);
        a * b / 2.0 * (x.asin() + x * (1.0 - x * x).sqrt())
    };
    4.0 * (g(u_max) - g(c) - c * (u_max - c))
}

/// Area of `{y : rho(y) < 1 + eta}` for the outer set: an ellipse dilated by
/// a square of side `delta`.
fn outer_area(r_hi: [f64; 2], delta: f64, eta: f64) -> f64 {
    let r = 1.0 + eta;
    PI * r * r * r_hi[0] * r_hi[1] + 2.0 * delta * r * (r_hi[0] + r_hi[1]) + delta * delta
}

impl EllipsePlan {
    fn gap_integral(r_lo: [f64; 2], delta: f64, eta: f64) -> f64 {
        outer_area([r_lo[0] + delta, r_lo[1] + delta], delta, eta) - inner_area(r_lo, delta, eta)
    }

    fn cells(&self) -> u64 {
        self.centers[0].middle * self.centers[1].middle * self.radius_cells * self.radius_cells
    }

    fn split(&self, i: u64) -> [u64; 4] {
        let nr = self.radius_cells;
        let c1 = self.centers[1].middle;
        [i / (c1 * nr * nr), (i / (nr * nr)) % c1, (i / nr) % nr, i % nr]
    }
}

/// Lazily enumerated bracket cover of a class at one gap level.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketCover {
    pub class: BracketClass,
    pub eps: f64,
    pub s: f64,
    pub budget: f64,
    density: f64,
    plan: Plan,
}

/// Builds a cover of `class` by brackets with `||u - l||_s <= eps` under
/// `mu` and bracket-function norms `<= budget`.
pub fn build_brackets(class: &BracketClass, mu: &Measure, eps: f64, s: f64, budget: f64) -> Result<BracketCover> {
    class.validate()?;
    mu.validate(class.dim())?;
    if !(eps > 0.0) {
        return Err(Error::validation("eps", "must be positive"));
    }
    if !(s >= 1.0) {
        return Err(Error::validation("s", "must be at least 1"));
    }
    if !(budget >= 1.0) {
        return Err(Error::validation("budget", "must be at least 1"));
    }
    let density = mu.density_bound();
    let cover = |plan| BracketCover { class: class.clone(), eps, s, budget, density, plan };
    if eps >= 1.0 {
        return Ok(cover(Plan::Trivial));
    }
    let target = eps.powf(s) / density;
    let bounds = mu.bounds();
    match class {
        BracketClass::Intervals => {
            let [lo, hi] = bounds[0];
            let w_min = (1.0 + SLACK) / (budget - 1.0);
            match IndicatorAxis::plan(lo, hi, target, s, w_min) {
                Some(axis) => Ok(cover(Plan::Indicators { axes: vec![axis], bounds: bounds.to_vec() })),
                None => Err(Error::InfeasibleBudget { budget, minimal_budget: 1.0 + 2.0 / ((s + 1.0) * target) }),
            }
        }
        BracketClass::Rectangles { dim } => {
            // u - l <= sum_k (u_k - l_k), each integrated against the other
            // coordinates' full lengths.
            let d = *dim as f64;
            let w_min = d * (1.0 + SLACK) / (budget - 1.0);
            let vol = volume(bounds);
            let mut axes = Vec::with_capacity(*dim);
            let mut minimal = 1.0f64;
            for [lo, hi] in bounds {
                let t = target / d / (vol / (hi - lo));
                minimal = minimal.max(1.0 + d / t);
                match IndicatorAxis::plan(*lo, *hi, t, 1.0, w_min) {
                    Some(a) => axes.push(a),
                    None => return Err(Error::InfeasibleBudget { budget, minimal_budget: minimal }),
                }
            }
            Ok(cover(Plan::Indicators { axes, bounds: bounds.to_vec() }))
        }
        BracketClass::Ramps { width } => {
            let needed = 1.0 + 1.0 / width;
            if budget < needed {
                return Err(Error::InfeasibleBudget { budget, minimal_budget: needed });
            }
            let [lo, hi] = bounds[0];
            let pitch = target * (1.0 - SLACK);
            Ok(cover(Plan::Ramps { axis: Axis::new(lo - width, hi, pitch), width: *width }))
        }
        BracketClass::Ellipsoids { center_box, radius_range } => {
            plan_ellipses(center_box, *radius_range, eps.powf(s), density, budget).map(|p| cover(Plan::Ellipses(p)))
        }
    }
}

fn plan_ellipses(center_box: &[[f64; 2]; 2], radii: [f64; 2], gap_target: f64, density: f64, budget: f64) -> Result<EllipsePlan> {
    let [r_min, r_max] = radii;
    let target = gap_target / density * (1.0 - SLACK);
    // At delta -> 0 the gap is the ramp annulus 4 eta pi r^2.
    let eta_budget = (1.0 + SLACK) / ((budget - 1.0) * r_min);
    let eta_default = target / (8.0 * PI * r_max * r_max);
    let eta = eta_budget.max(eta_default);
    let minimal_budget = 1.0 + 4.0 * PI * r_max * r_max / (target * r_min);
    if eta >= 1.0 || EllipsePlan::gap_integral([r_max, r_max], 0.0, eta) >= target {
        return Err(Error::InfeasibleBudget { budget, minimal_budget });
    }
    let worst = |delta: f64| {
        let cells = ((r_max - r_min) / delta).ceil().max(1.0);
        let top = r_min + (cells - 1.0) * delta;
        EllipsePlan::gap_integral([top, top], delta, eta)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while worst(hi) <= target && hi < 1e6 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if worst(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let delta = lo;
    if !(delta > 0.0) {
        return Err(Error::InfeasibleBudget { budget, minimal_budget });
    }
    // Center cells cover the closed box; a degenerate side gets one cell.
    let axis = |[a, b]: [f64; 2]| {
        let mut ax = Axis::new(a, b.max(a + delta * 0.5), delta);
        ax.hi = ax.lo + ax.middle as f64 * delta;
        ax
    };
    Ok(EllipsePlan {
        centers: [axis(center_box[0]), axis(center_box[1])],
        radius_lo: r_min,
        radius_cells: ((r_max - r_min) / delta).ceil().max(1.0) as u64,
        delta,
        eta,
    })
}

impl BracketCover {
    pub fn len(&self) -> u64 {
        match &self.plan {
            Plan::Trivial => 1,
            Plan::Indicators { axes, .. } => axes.iter().map(|a| a.axis.cells()).product(),
            Plan::Ramps { axis, .. } => axis.cells(),
            Plan::Ellipses(p) => p.cells(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn finish(&self, lower: BracketFn, upper: BracketFn, integral: f64) -> Bracket {
        let ls_gap = (self.density * integral).max(0.0).powf(1.0 / self.s);
        let c_norm = lower.c_norm().max(upper.c_norm());
        Bracket { lower, upper, ls_gap, c_norm, s: self.s }
    }

    /// The `i`-th bracket, `i < len()`.
    pub fn bracket(&self, i: u64) -> Result<Bracket> {
        if i >= self.len() {
            return Err(Error::validation("index", format!("{i} >= {}", self.len())));
        }
        Ok(match &self.plan {
            Plan::Trivial => {
                self.finish(BracketFn::Constant { value: 0.0 }, BracketFn::Constant { value: 1.0 }, 1.0 / self.density)
            }
            Plan::Indicators { axes, bounds } => {
                let mut rest = i;
                let mut idx = vec![0u64; axes.len()];
                for (k, a) in axes.iter().enumerate().rev() {
                    idx[k] = rest % a.axis.cells();
                    rest /= a.axis.cells();
                }
                if axes.len() == 1 {
                    let ((le, lw), (ue, uw), integral) = axes[0].bracket(idx[0], self.s);
                    let lower = BracketFn::DownRamp { end: le, width: lw };
                    let upper = if ue.is_infinite() {
                        BracketFn::Constant { value: 1.0 }
                    } else {
                        BracketFn::DownRamp { end: ue, width: uw }
                    };
                    self.finish(lower, upper, integral)
                } else {
                    let vol = volume(bounds);
                    let mut lo = (Vec::new(), Vec::new());
                    let mut up = (Vec::new(), Vec::new());
                    let mut integral = 0.0;
                    for (k, a) in axes.iter().enumerate() {
                        let ((le, lw), (ue, uw), g) = a.bracket(idx[k], 1.0);
                        lo.0.push(le);
                        lo.1.push(lw);
                        up.0.push(ue);
                        up.1.push(uw);
                        integral += g * vol / (bounds[k][1] - bounds[k][0]);
                    }
                    self.finish(
                        BracketFn::Orthant { ends: lo.0, widths: lo.1 },
                        BracketFn::Orthant { ends: up.0, widths: up.1 },
                        integral,
                    )
                }
            }
            Plan::Ramps { axis, width } => {
                let ramp = |x: f64| BracketFn::DownRamp { end: x + width, width: *width };
                if i == 0 {
                    self.finish(BracketFn::Constant { value: 0.0 }, ramp(axis.lo), 0.0)
                } else if i == axis.middle + 1 {
                    self.finish(ramp(axis.hi), BracketFn::Constant { value: 1.0 }, 0.0)
                } else {
                    let (a, b) = axis.range(i);
                    self.finish(ramp(a), ramp(b), b - a)
                }
            }
            Plan::Ellipses(p) => {
                let [i1, i2, j1, j2] = p.split(i);
                let center = [p.centers[0].range(i1 + 1), p.centers[1].range(i2 + 1)].map(|(a, b)| 0.5 * (a + b));
                let r_lo = [j1, j2].map(|j| p.radius_lo + j as f64 * p.delta);
                let r_hi = r_lo.map(|r| r + p.delta);
                let half = p.delta / 2.0;
                let lower = BracketFn::Ellipse { center, radii: r_lo, shift: half, top: 1.0, eta: p.eta };
                let upper = BracketFn::Ellipse { center, radii: r_hi, shift: -half, top: 1.0 + p.eta, eta: p.eta };
                self.finish(lower, upper, EllipsePlan::gap_integral(r_lo, p.delta, p.eta))
            }
        })
    }

    /// Index of a bracket containing `member`.
    pub fn cell_of(&self, member: &Member) -> Result<u64> {
        let uncovered = || Error::Numeric(format!("member {} not covered", member.descriptor()));
        match (&self.plan, member) {
            (Plan::Trivial, _) => Ok(0),
            (Plan::Indicators { axes, .. }, Member::Interval { x }) if axes.len() == 1 => Ok(axes[0].axis.cell_of(*x)),
            (Plan::Indicators { axes, .. }, Member::Rectangle { corner }) if corner.len() == axes.len() => {
                Ok(axes.iter().zip(corner).fold(0, |acc, (a, c)| acc * a.axis.cells() + a.axis.cell_of(*c)))
            }
            (Plan::Ramps { axis, width }, Member::Ramp { x, width: w }) if w == width => Ok(axis.cell_of(*x)),
            (Plan::Ellipses(p), Member::Ellipsoid { center, radii }) if center.len() == 2 && radii.len() == 2 => {
                let mut idx = [0u64; 4];
                for k in 0..2 {
                    let ax = &p.centers[k];
                    if center[k] < ax.lo || center[k] > ax.hi {
                        return Err(uncovered());
                    }
                    idx[k] = (((center[k] - ax.lo) / ax.pitch).floor() as u64).min(ax.middle - 1);
                    let jr = (radii[k] - p.radius_lo) / p.delta;
                    if jr < 0.0 || jr.floor() as u64 > p.radius_cells {
                        return Err(uncovered());
                    }
                    idx[2 + k] = (jr.floor() as u64).min(p.radius_cells - 1);
                }
                let nr = p.radius_cells;
                Ok(((idx[0] * p.centers[1].middle + idx[1]) * nr + idx[2]) * nr + idx[3])
            }
            _ => Err(uncovered()),
        }
    }

    /// All brackets; refuses covers with more than `limit` elements.
    pub fn to_vec(&self, limit: u64) -> Result<Vec<Bracket>> {
        if self.len() > limit {
            return Err(Error::validation("cover", format!("{} brackets exceed the limit {limit}", self.len())));
        }
        (0..self.len()).map(|i| self.bracket(i)).collect()
    }
}

/// Growth budget `Psi(x)` for bracket-function norms at gap `1/x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Psi {
    /// `exp(c x^{1/gamma})`
    Exponential { c: f64, gamma: f64 },
    /// `scale x^kappa`
    Polynomial { scale: f64, kappa: f64 },
}

impl Psi {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Psi::Exponential { c, gamma } => (c * x.powf(1.0 / gamma)).exp(),
            Psi::Polynomial { scale, kappa } => scale * x.powf(*kappa),
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            Psi::Exponential { gamma, .. } => Some(*gamma),
            Psi::Polynomial { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    /// `2^{-q}` for `q = 1..=levels`.
    pub eps_grid: Vec<f64>,
    /// Running maximum of the raw counts.
    pub counts: Vec<u64>,
    pub raw_counts: Vec<u64>,
    pub budgets: Vec<f64>,
    pub psi: Psi,
    pub r: f64,
    pub s: f64,
    /// Counts are sizes of explicit covers.
    pub constructive_upper_bound: bool,
}

impl EntropyProfile {
    /// From given counts (levels `q = 1..`), applying the running maximum.
    pub fn from_counts(raw_counts: Vec<u64>, psi: Psi, r: f64, s: f64) -> Self {
        let levels = raw_counts.len();
        let mut counts = raw_counts.clone();
        for q in 1..levels {
            counts[q] = counts[q].max(counts[q - 1]);
        }
        Self {
            eps_grid: (1..=levels).map(|q| 0.5f64.powi(q as i32)).collect(),
            budgets: (1..=levels).map(|q| psi.eval(2f64.powi(q as i32))).collect(),
            counts,
            raw_counts,
            psi,
            r,
            s,
            constructive_upper_bound: true,
        }
    }

    /// `ln(2^{-(r+1)q} N_q^2)`
    pub fn log_terms(&self) -> Vec<f64> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &n)| -(self.r + 1.0) * (i + 1) as f64 * std::f64::consts::LN_2 + 2.0 * (n as f64).ln())
            .collect()
    }

    /// CSV with columns `q, eps, N_q, budget, term`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["q", "eps", "N_q", "budget", "term"])?;
        for (i, lt) in self.log_terms().iter().enumerate() {
            wr.write_record([
                (i + 1).to_string(),
                format!("{:?}", self.eps_grid[i]),
                self.counts[i].to_string(),
                format!("{:?}", self.budgets[i]),
                format!("{:?}", lt.exp()),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Counts of the constructive covers at `eps = 2^{-q}`, `q = 1..=levels`,
/// with budget `Psi(2^q)` at level `q`.
pub fn bracketing_number(
    class: &BracketClass,
    mu: &Measure,
    levels: usize,
    s: f64,
    psi: Psi,
    r: f64,
    exec: Execution,
) -> Result<EntropyProfile> {
    let raw = exec.try_map_indexed(levels, |i| {
        let q = (i + 1) as i32;
        build_brackets(class, mu, 0.5f64.powi(q), s, psi.eval(2f64.powi(q))).map(|c| c.len())
    })?;
    Ok(EntropyProfile::from_counts(raw, psi, r, s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyVerdict {
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// Geometric ratio fitted to the tail half of the terms.
    pub tail_ratio: f64,
    /// Two-standard-error band of the ratio.
    pub band: [f64; 2],
    pub summable: bool,
}

/// Fits the tail ratio of `sum_q 2^{-(r+1)q} N_q^2` by least squares on the
/// log terms of the last half of the levels; "summable" if the ratio is
/// below 1.
pub fn entropy_condition_check(profile: &EntropyProfile) -> Result<EntropyVerdict> {
    let levels = profile.counts.len();
    if levels < 8 {
        return Err(Error::validation("profile", format!("{levels} levels; at least 8 required")));
    }
    let logs = profile.log_terms();
    let terms: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
    let partial_sums = terms
        .iter()
        .scan(0.0, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect();
    let start = levels / 2;
    let q: Vec<f64> = (start + 1..=levels).map(|q| q as f64).collect();
    let (_, slope, se) = stats::linear_fit(&q, &logs[start..]);
    let tail_ratio = slope.exp();
    Ok(EntropyVerdict {
        terms,
        partial_sums,
        tail_ratio,
        band: [(slope - 2.0 * se).exp(), (slope + 2.0 * se).exp()],
        summable: tail_ratio < 1.0,
    })
}

/// `tau_q(t) = max{(j-1) 2^{-q} <= t}`, so the last cell `[1 - 2^{-q}, 1]`
/// maps to `1 - 2^{-q}`.
pub fn tau(q: u32, t: f64) -> f64 {
    let m = 2f64.powi(q as i32);
    (t * m).floor().clamp(0.0, m - 1.0) / m
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub lower: BracketFn,
    pub upper: BracketFn,
    pub tau: f64,
    pub tau_prime: f64,
}

/// Level-`q` projections of `(f, t)`; `levels[q - 1]` is the level-`q` cover.
pub fn chain_projection(levels: &[BracketCover], f: &Member, t: f64, q: usize) -> Result<Projection> {
    if q == 0 || q > levels.len() {
        return Err(Error::validation("q", format!("levels 1..={} constructed", levels.len())));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::validation("t", "outside [0,1]"));
    }
    let cover = &levels[q - 1];
    let b = cover.bracket(cover.cell_of(f)?)?;
    let tq = tau(q as u32, t);
    Ok(Projection { lower: b.lower, upper: b.upper, tau: tq, tau_prime: tq + 0.5f64.powi(q as i32) })
}

/// Level covers `q = 1..=levels` at `eps = 2^{-q}` and budget `Psi(2^q)`.
pub fn build_levels(class: &BracketClass, mu: &Measure, levels: usize, s: f64, psi: Psi) -> Result<Vec<BracketCover>> {
    (1..=levels as i32)
        .map(|q| build_brackets(class, mu, 0.5f64.powi(q), s, psi.eval(2f64.powi(q))))
        .collect()
}
