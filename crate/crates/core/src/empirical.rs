//! Sequential empirical process `U_n(f, t)`, the two-sided field `R_n(f, t)`
//! and the change-point statistic `T_n` over finite function grids.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::processes::SamplePath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    IntervalIndicators,
    RectangleIndicators,
    EllipsoidIndicators,
    HolderSmoothed,
    /// Arbitrary real function of a finite-state label.
    StateFunction,
}

/// One indexing function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Member {
    /// `1{y_0 <= x}`
    Interval { x: f64 },
    /// `1{y <= corner}` componentwise
    Rectangle { corner: Vec<f64> },
    /// `1{sum_i (y_i - c_i)^2 / r_i^2 <= 1}`
    Ellipsoid { center: Vec<f64>, radii: Vec<f64> },
    /// Lipschitz ramp: 1 up to `x`, linear down to 0 at `x + width`.
    Ramp { x: f64, width: f64 },
    /// `values[label]`
    State { values: Vec<f64> },
}

impl Member {
    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            Member::Interval { x } => f64::from(u8::from(y[0] <= *x)),
            Member::Rectangle { corner } => f64::from(u8::from(y.iter().zip(corner).all(|(a, c)| a <= c))),
            Member::Ellipsoid { center, radii } => {
                let q: f64 = y
                    .iter()
                    .zip(center)
                    .zip(radii)
                    .map(|((a, c), r)| ((a - c) / r).powi(2))
                    .sum();
                f64::from(u8::from(q <= 1.0))
            }
            Member::Ramp { x, width } => ((x + width - y[0]) / width).clamp(0.0, 1.0),
            Member::State { values } => values[y[0] as usize],
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            Member::Interval { x } => format!("x={x}"),
            Member::Rectangle { corner } => format!("corner={corner:?}"),
            Member::Ellipsoid { center, radii } => format!("center={center:?};radii={radii:?}"),
            Member::Ramp { x, width } => format!("x={x};w={width}"),
            Member::State { values } => format!("state={values:?}"),
        }
    }
}

/// A finite grid of indexing functions, all multiplied by `scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionClass {
    pub kind: ClassKind,
    pub members: Vec<Member>,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

fn midpoints(m: usize, lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (0..m).map(move |j| lo + (j as f64 + 0.5) * (hi - lo) / m as f64)
}

impl FunctionClass {
    /// `m` half-line indicators `1{y <= x}` at the cell midpoints of `[lo, hi]`.
    pub fn interval_grid(m: usize, lo: f64, hi: f64) -> Self {
        Self::intervals(midpoints(m, lo, hi).collect())
    }

    pub fn intervals(points: Vec<f64>) -> Self {
        Self {
            kind: ClassKind::IntervalIndicators,
            members: points.into_iter().map(|x| Member::Interval { x }).collect(),
            scale: 1.0,
        }
    }

    /// Lower-left orthant indicators on an `m^d` midpoint grid of `[lo, hi]^d`.
    pub fn rectangle_grid(m: usize, d: usize, lo: f64, hi: f64) -> Self {
        let axis: Vec<f64> = midpoints(m, lo, hi).collect();
        let mut corners = vec![Vec::new()];
        for _ in 0..d {
            corners = corners
                .into_iter()
                .flat_map(|c| {
                    axis.iter().map(move |&v| {
                        let mut c = c.clone();
                        c.push(v);
                        c
                    })
                })
                .collect();
        }
        Self {
            kind: ClassKind::RectangleIndicators,
            members: corners.into_iter().map(|corner| Member::Rectangle { corner }).collect(),
            scale: 1.0,
        }
    }

    pub fn ellipsoids(members: Vec<(Vec<f64>, Vec<f64>)>) -> Self {
        Self {
            kind: ClassKind::EllipsoidIndicators,
            members: members
                .into_iter()
                .map(|(center, radii)| Member::Ellipsoid { center, radii })
                .collect(),
            scale: 1.0,
        }
    }

    pub fn ramp_grid(m: usize, lo: f64, hi: f64, width: f64) -> Self {
        Self {
            kind: ClassKind::HolderSmoothed,
            members: midpoints(m, lo, hi).map(|x| Member::Ramp { x, width }).collect(),
            scale: 1.0,
        }
    }

    pub fn state_functions(fs: Vec<Vec<f64>>) -> Self {
        Self {
            kind: ClassKind::StateFunction,
            members: fs.into_iter().map(|values| Member::State { values }).collect(),
            scale: 1.0,
        }
    }

    pub fn scaled(mut self, a: f64) -> Self {
        self.scale *= a;
        self
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn eval(&self, j: usize, y: &[f64]) -> f64 {
        self.scale * self.members[j].eval(y)
    }

    /// Upper bound on `|f|` over the class.
    pub fn sup_bound(&self) -> f64 {
        let base = self
            .members
            .iter()
            .map(|m| match m {
                Member::State { values } => values.iter().fold(0.0f64, |a, v| a.max(v.abs())),
                _ => 1.0,
            })
            .fold(0.0f64, f64::max);
        base * self.scale.abs()
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ClassKind::IntervalIndicators => "interval_indicators",
            ClassKind::RectangleIndicators => "rectangle_indicators",
            ClassKind::EllipsoidIndicators => "ellipsoid_indicators",
            ClassKind::HolderSmoothed => "holder_smoothed",
            ClassKind::StateFunction => "state_function",
        }
    }

    /// Values `f_j(X_1), ..., f_j(X_n)`.
    pub fn column(&self, j: usize, path: &SamplePath) -> Vec<f64> {
        path.points().map(|y| self.eval(j, y)).collect()
    }
}

/// `[n t]` with a snap to the nearest integer when `n t` is within rounding
/// error of it, so that grids `k / n` map back to `k`.
pub fn floor_nt(n: usize, t: f64) -> usize {
    let x = n as f64 * t;
    let r = x.round();
    let k = if (x - r).abs() <= 8.0 * f64::EPSILON * x.max(1.0) { r } else { x.floor() };
    (k.max(0.0) as usize).min(n)
}

/// The exact time grid `{k / n : k = 0..n}`.
pub fn exact_time_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|k| k as f64 / n as f64).collect()
}

/// `m + 1` equally spaced points `0, 1/m, ..., 1`.
pub fn uniform_time_grid(m: usize) -> Vec<f64> {
    (0..=m).map(|k| k as f64 / m as f64).collect()
}

fn validate_time_grid(t_grid: &[f64]) -> Result<()> {
    if let Some(t) = t_grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::validation("t_grid", format!("{t} outside [0,1]")));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::validation("t_grid", "must be nondecreasing"));
    }
    Ok(())
}

/// A process evaluated on (function grid) x (time grid).
#[derive(Debug, Clone, PartialEq)]
pub struct SeqField {
    /// `values[f][t]`
    pub values: Vec<Vec<f64>>,
    pub f_grid: Vec<String>,
    pub t_grid: Vec<f64>,
    pub n: usize,
    /// Centering constant used per function.
    pub centering: Vec<f64>,
}

impl SeqField {
    pub fn get(&self, f: usize, t: usize) -> f64 {
        self.values[f][t]
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// CSV with header `f_param,t,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["f_param", "t", "value"])?;
        for (f, row) in self.f_grid.iter().zip(&self.values) {
            for (t, v) in self.t_grid.iter().zip(row) {
                wr.write_record([f.as_str(), &format!("{t:?}"), &format!("{v:?}")])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Prefix sums of `col` read off at the sorted indices `ks`.
fn partial_sums_at(col: &[f64], ks: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(ks.len());
    let (mut i, mut acc) = (0usize, 0.0f64);
    for &k in ks {
        while i < k {
            acc += col[i];
            i += 1;
        }
        out.push(acc);
    }
    out
}

/// `U_n(f, t) = n^{-1/2} sum_{i <= [nt]} (f(X_i) - mu_f)`.
///
/// `mu_f` must be supplied per function: analytic if known, otherwise the
/// full-sample mean.
pub fn sequential_empirical(
    path: &SamplePath,
    fc: &FunctionClass,
    t_grid: &[f64],
    mu_f: &[f64],
    exec: Execution,
) -> Result<SeqField> {
    validate_time_grid(t_grid)?;
    if mu_f.len() != fc.len() {
        return Err(Error::validation("mu_f", format!("expected {} values, got {}", fc.len(), mu_f.len())));
    }
    let n = path.len();
    let ks: Vec<usize> = t_grid.iter().map(|&t| floor_nt(n, t)).collect();
    let root_n = (n as f64).sqrt();
    let values = exec.map_indexed(fc.len(), |j| {
        let col: Vec<f64> = path.points().map(|y| fc.eval(j, y) - mu_f[j]).collect();
        partial_sums_at(&col, &ks).into_iter().map(|s| s / root_n).collect()
    });
    Ok(SeqField {
        values,
        f_grid: fc.members.iter().map(Member::descriptor).collect(),
        t_grid: t_grid.to_vec(),
        n,
        centering: mu_f.to_vec(),
    })
}

/// Full-sample means `F_n(f)` per function.
pub fn sample_means(path: &SamplePath, fc: &FunctionClass) -> Vec<f64> {
    (0..fc.len())
        .map(|j| fc.column(j, path).iter().sum::<f64>() / path.len() as f64)
        .collect()
}

/// `f(X_i) - f(X_1)`. The two-sided contrasts are invariant under adding a
/// constant to `f`; shifting by the first value makes constant functions
/// produce exact zeros.
fn shifted_column(fc: &FunctionClass, j: usize, path: &SamplePath) -> Vec<f64> {
    let mut col = fc.column(j, path);
    let first = col[0];
    col.iter_mut().for_each(|v| *v -= first);
    col
}

/// `R_n(f, t) = sqrt(n) [nt]/n (n - [nt])/n (F_[nt](f) - F_{[nt]+1,n}(f))`
/// with `F_0 = F_{n+1,n} = 0`, evaluated from the defining formula.
pub fn r_field(path: &SamplePath, fc: &FunctionClass, t_grid: &[f64], exec: Execution) -> Result<SeqField> {
    validate_time_grid(t_grid)?;
    let n = path.len();
    let nf = n as f64;
    let ks: Vec<usize> = t_grid.iter().map(|&t| floor_nt(n, t)).collect();
    let values = exec.map_indexed(fc.len(), |j| {
        let col = shifted_column(fc, j, path);
        let total: f64 = col.iter().sum();
        partial_sums_at(&col, &ks)
            .into_iter()
            .zip(&ks)
            .map(|(s, &k)| {
                let head = if k == 0 { 0.0 } else { s / k as f64 };
                let tail = if k == n { 0.0 } else { (total - s) / (n - k) as f64 };
                nf.sqrt() * (k as f64 / nf) * ((n - k) as f64 / nf) * (head - tail)
            })
            .collect()
    });
    Ok(SeqField {
        values,
        f_grid: fc.members.iter().map(Member::descriptor).collect(),
        t_grid: t_grid.to_vec(),
        n,
        centering: sample_means(path, fc),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CusumResult {
    pub n: usize,
    pub class: String,
    #[serde(rename = "T_n")]
    pub t_n: f64,
    pub argmax_k: usize,
    /// Descriptor of the maximizing function.
    pub argmax_f: String,
}

/// `T_n = max_{0<=k<=n} max_f (k/n)(1 - k/n) sqrt(n) |F_k(f) - F_{k+1,n}(f)|`.
///
/// One streaming pass per function; the supremum over the class is the
/// maximum over its finite grid.
pub fn cusum_statistic(path: &SamplePath, fc: &FunctionClass, exec: Execution) -> CusumResult {
    let n = path.len();
    let nf = n as f64;
    let per_f = exec.map_indexed(fc.len(), |j| {
        let col = shifted_column(fc, j, path);
        let total: f64 = col.iter().sum();
        let (mut best, mut best_k, mut s) = (0.0f64, 0usize, 0.0f64);
        for (i, v) in col.iter().enumerate() {
            s += v;
            let k = i + 1;
            if k == n {
                break;
            }
            let stat = nf.sqrt() * (k as f64 / nf) * ((n - k) as f64 / nf) * (s / k as f64 - (total - s) / (n - k) as f64);
            if stat.abs() > best {
                best = stat.abs();
                best_k = k;
            }
        }
        (best, best_k)
    });
    let (jbest, &(t_n, argmax_k)) = per_f
        .iter()
        .enumerate()
        .fold((0, &(0.0, 0)), |acc, cur| if cur.1 .0 > acc.1 .0 { cur } else { acc });
    CusumResult {
        n,
        class: fc.name().to_string(),
        t_n,
        argmax_k,
        argmax_f: fc.members.get(jbest).map(Member::descriptor).unwrap_or_default(),
    }
}

/// `T_n` for the full class `{1{y <= x} : x in R}` on one-dimensional data.
///
/// The supremum over `x` is attained at sample points, so this is exact.
/// Quadratic in `n`.
pub fn cusum_exact_intervals(path: &SamplePath) -> CusumResult {
    let n = path.len();
    let nf = n as f64;
    let xs: Vec<f64> = path.points().map(|p| p[0]).collect();
    let mut levels = xs.clone();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let rank: Vec<usize> = xs
        .iter()
        .map(|x| levels.partition_point(|l| l < x))
        .collect();
    // total[r] = #{i : X_i <= levels[r]}
    let mut total = vec![0usize; levels.len()];
    for &r in &rank {
        total[r] += 1;
    }
    for r in 1..total.len() {
        total[r] += total[r - 1];
    }
    let mut counts = vec![0usize; levels.len()];
    let (mut best, mut best_k, mut best_r) = (0.0f64, 0usize, 0usize);
    for (i, &ri) in rank.iter().enumerate().take(n.saturating_sub(1)) {
        for c in &mut counts[ri..] {
            *c += 1;
        }
        let k = i + 1;
        for (r, (&c, &tot)) in counts.iter().zip(&total).enumerate() {
            let d = (c as f64 - k as f64 / nf * tot as f64).abs() / nf.sqrt();
            if d > best {
                best = d;
                best_k = k;
                best_r = r;
            }
        }
    }
    CusumResult {
        n,
        class: "interval_indicators(exact)".into(),
        t_n: best,
        argmax_k: best_k,
        argmax_f: format!("x={}", levels[best_r]),
    }
}
