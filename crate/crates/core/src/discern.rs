//! Statistical discrimination of samples in the response space.
//!
//! Each sample is summarized over repeated runs by its mean and per-axis
//! Student-t 95% confidence half-widths; these become the semi-axes of an
//! axis-aligned ellipsoid. Two samples are distinguishable when their
//! ellipsoids are separated along the line joining the centers.

use statrs::distribution::{ContinuousCDF, StudentsT};
use std::fmt;
use std::io::{self, Write};

use crate::countsim::{correct_counts, simulate_runs, CorrectedRuns, CountModel, RunSet};
use crate::ghost::{sweep_family, ResponseCurve, SweepSpec};
use crate::qstate::TwoQubitDensity;
use crate::{Error, Result};

/// Relative floor on semi-axes so that zero-spread samples keep a nonzero
/// (if tiny) region.
pub const SEMI_AXIS_FLOOR: f64 = 1e-12;

/// Two-sided 95% Student-t coefficient, `t(0.975, dof)`.
pub fn student_t95(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("dof >= 1")
        .inverse_cdf(0.975)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub ci95: Vec<f64>,
    pub n_runs: usize,
}

impl SampleStats {
    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn region(&self) -> EllipsoidRegion {
        EllipsoidRegion::new(self.mean.clone(), self.ci95.clone())
    }

    /// Divide every statistic by a shared coordinate scale.
    pub fn scaled(&self, factor: f64) -> SampleStats {
        let f = |v: &Vec<f64>| v.iter().map(|x| x / factor).collect();
        SampleStats {
            mean: f(&self.mean),
            std: f(&self.std),
            ci95: f(&self.ci95),
            n_runs: self.n_runs,
        }
    }
}

/// Per-sample statistics from `points[run][axis]`.
pub fn summarize(points: &[Vec<f64>]) -> Result<SampleStats> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewRuns(n));
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch(dim, bad.len()));
    }
    let nf = n as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / nf)
        .collect();
    let std: Vec<f64> = (0..dim)
        .map(|j| {
            let ss: f64 = points.iter().map(|p| (p[j] - mean[j]).powi(2)).sum();
            (ss / (nf - 1.0)).sqrt()
        })
        .collect();
    let t = student_t95(n - 1);
    let ci95 = std.iter().map(|s| t * s / nf.sqrt()).collect();
    Ok(SampleStats {
        mean,
        std,
        ci95,
        n_runs: n,
    })
}

/// Axis-aligned confidence ellipsoid.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidRegion {
    pub center: Vec<f64>,
    pub semi_axes: Vec<f64>,
}

impl EllipsoidRegion {
    /// Semi-axes are floored at `SEMI_AXIS_FLOOR` times the coordinate scale
    /// (the largest absolute center coordinate, or 1 when smaller).
    pub fn new(center: Vec<f64>, semi_axes: Vec<f64>) -> Self {
        let scale = center.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        let floor = SEMI_AXIS_FLOOR * scale;
        let semi_axes = semi_axes.into_iter().map(|s| s.max(floor)).collect();
        Self { center, semi_axes }
    }

    /// Support function `h(u) = √(Σ a_j² u_j²)`.
    pub fn support(&self, u: &[f64]) -> f64 {
        self.semi_axes
            .iter()
            .zip(u)
            .map(|(a, x)| (a * x).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// `‖Δc‖ − h_a(u) − h_b(u)`; positive means separable.
pub fn separation_slack(a: &EllipsoidRegion, b: &EllipsoidRegion) -> Result<f64> {
    if a.center.len() != b.center.len() {
        return Err(Error::DimensionMismatch(a.center.len(), b.center.len()));
    }
    let diff: Vec<f64> = b.center.iter().zip(&a.center).map(|(x, y)| x - y).collect();
    let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    if dist == 0.0 {
        return Ok(-(a.support(&unit_any(a)) + b.support(&unit_any(b))));
    }
    let u: Vec<f64> = diff.iter().map(|d| d / dist).collect();
    Ok(dist - a.support(&u) - b.support(&u))
}

fn unit_any(r: &EllipsoidRegion) -> Vec<f64> {
    let mut u = vec![0.0; r.center.len()];
    if let Some(first) = u.first_mut() {
        *first = 1.0;
    }
    u
}

/// Conservative disjointness test: a separating plane orthogonal to the
/// center line exists.
pub fn separable(a: &EllipsoidRegion, b: &EllipsoidRegion) -> Result<bool> {
    Ok(separation_slack(a, b)? > 0.0)
}

/// Greedy sweep in list order: keep a sample iff it is separable from every
/// sample kept so far. Returns kept indices.
pub fn max_distinguishable_subset(stats: &[SampleStats]) -> Result<Vec<usize>> {
    if stats.is_empty() {
        return Err(Error::EmptyInput);
    }
    let regions: Vec<EllipsoidRegion> = stats.iter().map(SampleStats::region).collect();
    let mut kept: Vec<usize> = Vec::new();
    for (i, r) in regions.iter().enumerate() {
        let mut ok = true;
        for &k in &kept {
            if !separable(r, &regions[k])? {
                ok = false;
                break;
            }
        }
        if ok {
            kept.push(i);
        }
    }
    // closing the loop: last against first
    while kept.len() > 1 {
        let (first, last) = (kept[0], kept[kept.len() - 1]);
        if separable(&regions[last], &regions[first])? {
            break;
        }
        kept.pop();
    }
    Ok(kept)
}

/// Consecutive angular gaps (with wrap-around over 180°) of a kept set.
#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub gaps: Vec<f64>,
    pub median: f64,
    pub max: f64,
    pub min: f64,
}

pub fn step_stats(thetas: &[f64]) -> Result<StepStats> {
    if thetas.len() < 2 {
        return Err(Error::TooFewKept(thetas.len()));
    }
    let mut t = thetas.to_vec();
    t.sort_by(f64::total_cmp);
    let mut gaps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.push(t[0] + 180.0 - t[t.len() - 1]);
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    Ok(StepStats {
        median,
        max: sorted[m - 1],
        min: sorted[0],
        gaps,
    })
}

/// One family's samples with their kept subset.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyKept {
    pub label: String,
    pub thetas: Vec<f64>,
    pub stats: Vec<SampleStats>,
    pub kept: Vec<usize>,
}

impl FamilyKept {
    pub fn kept_thetas(&self) -> Vec<f64> {
        self.kept.iter().map(|&i| self.thetas[i]).collect()
    }

    /// Smallest separation slack of a kept sample to the other kept samples
    /// of its own family (`+∞` when alone).
    fn margin(&self, idx: usize, regions: &[EllipsoidRegion]) -> Result<f64> {
        let mut m = f64::INFINITY;
        for &k in &self.kept {
            if k != idx {
                m = m.min(separation_slack(&regions[idx], &regions[k])?);
            }
        }
        Ok(m)
    }
}

/// A sample removed because it overlaps a kept sample of another family.
#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub family: String,
    pub theta_deg: f64,
    pub conflicts_with_family: String,
    pub conflicts_with_theta: f64,
}

/// Remove kept samples that are not separable from a kept sample of the
/// other family. Each conflict drops the sample with the smaller
/// within-family margin; ties drop from `b`. Conflicts are resolved in
/// order of `(a index, b index)`.
pub fn cross_family_exclusions(a: &mut FamilyKept, b: &mut FamilyKept) -> Result<Vec<Exclusion>> {
    let ra: Vec<EllipsoidRegion> = a.stats.iter().map(SampleStats::region).collect();
    let rb: Vec<EllipsoidRegion> = b.stats.iter().map(SampleStats::region).collect();
    let margins_a: Vec<(usize, f64)> = a
        .kept
        .iter()
        .map(|&i| Ok((i, a.margin(i, &ra)?)))
        .collect::<Result<_>>()?;
    let margins_b: Vec<(usize, f64)> = b
        .kept
        .iter()
        .map(|&j| Ok((j, b.margin(j, &rb)?)))
        .collect::<Result<_>>()?;
    let lookup = |m: &[(usize, f64)], i: usize| m.iter().find(|e| e.0 == i).map_or(0.0, |e| e.1);

    let mut out = Vec::new();
    let a_kept = a.kept.clone();
    for &i in &a_kept {
        let b_kept = b.kept.clone();
        for &j in &b_kept {
            if !a.kept.contains(&i) {
                break;
            }
            if !b.kept.contains(&j) || separable(&ra[i], &rb[j])? {
                continue;
            }
            let drop_a = lookup(&margins_a, i) < lookup(&margins_b, j);
            if drop_a {
                a.kept.retain(|&k| k != i);
                out.push(Exclusion {
                    family: a.label.clone(),
                    theta_deg: a.thetas[i],
                    conflicts_with_family: b.label.clone(),
                    conflicts_with_theta: b.thetas[j],
                });
            } else {
                b.kept.retain(|&k| k != j);
                out.push(Exclusion {
                    family: b.label.clone(),
                    theta_deg: b.thetas[j],
                    conflicts_with_family: a.label.clone(),
                    conflicts_with_theta: a.thetas[i],
                });
            }
        }
    }
    Ok(out)
}

/// Sample statistics of one swept family from corrected counts, as
/// `points[run][projector]` per theta.
pub fn family_stats(corrected: &CorrectedRuns) -> Result<Vec<SampleStats>> {
    let n_theta = corrected.values.first().map_or(0, Vec::len);
    (0..n_theta)
        .map(|t| {
            let pts: Vec<Vec<f64>> = corrected.values.iter().map(|run| run[t].clone()).collect();
            summarize(&pts)
        })
        .collect()
}

/// Rescale all families by the largest mean coordinate in the dataset, so
/// that response points live in the unit box. Returns the scale.
pub fn normalize_families(families: &mut [Vec<SampleStats>]) -> Result<f64> {
    let max = families
        .iter()
        .flatten()
        .flat_map(|s| s.mean.iter().copied())
        .fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::AllZeroDataset);
    }
    for s in families.iter_mut().flatten() {
        *s = s.scaled(max);
    }
    Ok(max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyReport {
    pub family: FamilyKept,
    /// `None` when fewer than two samples are kept.
    pub steps: Option<StepStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistinguishabilityReport {
    pub families: Vec<FamilyReport>,
    pub exclusions: Vec<Exclusion>,
}

impl DistinguishabilityReport {
    pub fn total_kept(&self) -> usize {
        self.families.iter().map(|f| f.family.kept.len()).sum()
    }

    /// CSV: `family,theta_deg,kept,mean1..n,std1..n,ci1..n`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self
            .families
            .iter()
            .flat_map(|f| f.family.stats.first())
            .map(SampleStats::dimension)
            .next()
            .unwrap_or(0);
        let mut header = vec!["family".to_string(), "theta_deg".into(), "kept".into()];
        for prefix in ["mean", "std", "ci"] {
            header.extend((1..=n).map(|k| format!("{prefix}{k}")));
        }
        writeln!(w, "{}", header.join(","))?;
        for f in &self.families {
            let fam = &f.family;
            for (i, (theta, s)) in fam.thetas.iter().zip(&fam.stats).enumerate() {
                let mut row = vec![
                    fam.label.clone(),
                    theta.to_string(),
                    u8::from(fam.kept.contains(&i)).to_string(),
                ];
                for v in [&s.mean, &s.std, &s.ci95] {
                    row.extend(v.iter().map(|x| x.to_string()));
                }
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for DistinguishabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fr in &self.families {
            let fam = &fr.family;
            write!(
                f,
                "{}: {} of {} distinguishable",
                fam.label,
                fam.kept.len(),
                fam.thetas.len()
            )?;
            if let Some(s) = &fr.steps {
                write!(
                    f,
                    "; step median {:.3} deg, max {:.3} deg, min {:.3} deg",
                    s.median, s.max, s.min
                )?;
            }
            writeln!(f)?;
        }
        if self.families.len() > 1 {
            writeln!(f, "total: {} distinguishable", self.total_kept())?;
        }
        writeln!(f, "cross-family exclusions: {}", self.exclusions.len())?;
        for e in &self.exclusions {
            writeln!(
                f,
                "  {} {:.3} deg (overlaps {} {:.3} deg)",
                e.family, e.theta_deg, e.conflicts_with_family, e.conflicts_with_theta
            )?;
        }
        Ok(())
    }
}

/// Greedy subsets per family, then pairwise cross-family exclusions in
/// family order, then step statistics.
pub fn discriminate(
    families: Vec<(String, Vec<f64>, Vec<SampleStats>)>,
) -> Result<DistinguishabilityReport> {
    let mut kept: Vec<FamilyKept> = families
        .into_iter()
        .map(|(label, thetas, stats)| {
            if thetas.len() != stats.len() {
                return Err(Error::DimensionMismatch(thetas.len(), stats.len()));
            }
            let kept = max_distinguishable_subset(&stats)?;
            Ok(FamilyKept {
                label,
                thetas,
                stats,
                kept,
            })
        })
        .collect::<Result<_>>()?;
    let mut exclusions = Vec::new();
    for i in 0..kept.len() {
        for j in i + 1..kept.len() {
            let (lo, hi) = kept.split_at_mut(j);
            exclusions.extend(cross_family_exclusions(&mut lo[i], &mut hi[0])?);
        }
    }
    let families = kept
        .into_iter()
        .map(|family| {
            let steps = step_stats(&family.kept_thetas()).ok();
            FamilyReport { family, steps }
        })
        .collect();
    Ok(DistinguishabilityReport {
        families,
        exclusions,
    })
}

/// Everything produced by one simulated discrimination experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Noiseless raw curves, one per family.
    pub curves: Vec<ResponseCurve>,
    pub runs: Vec<RunSet>,
    pub corrected: Vec<CorrectedRuns>,
    /// Shared scale that maps corrected counts to response coordinates.
    pub scale: f64,
    pub report: DistinguishabilityReport,
}

/// Per-family seed: families get decorrelated noise from one user seed.
pub fn family_seed(seed: u64, family_index: usize) -> u64 {
    seed.wrapping_add((family_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Sweep every family, simulate `n_runs` noisy repetitions, correct the
/// counts, normalize by the dataset maximum and run the discrimination.
pub fn run_experiment(
    rho0: &TwoQubitDensity,
    specs: &[SweepSpec],
    model: &CountModel,
    n_runs: usize,
    seed: u64,
) -> Result<ExperimentOutput> {
    if specs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let curves = specs
        .iter()
        .map(|s| sweep_family(rho0, s))
        .collect::<Result<Vec<_>>>()?;
    let runs = curves
        .iter()
        .enumerate()
        .map(|(i, c)| simulate_runs(c, model, n_runs, family_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let corrected = runs
        .iter()
        .map(|r| correct_counts(r, model))
        .collect::<Result<Vec<_>>>()?;
    let mut stats = corrected
        .iter()
        .map(family_stats)
        .collect::<Result<Vec<_>>>()?;
    let scale = normalize_families(&mut stats)?;
    let report = discriminate(
        curves
            .iter()
            .zip(stats)
            .map(|(c, s)| (c.label.clone(), c.thetas(), s))
            .collect(),
    )?;
    Ok(ExperimentOutput {
        curves,
        runs,
        corrected,
        scale,
        report,
    })
}
