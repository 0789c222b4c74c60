//! Search for probe and analyzer settings that spread the samples apart in
//! the response space, and fitting of arbitrary Mueller targets with the
//! realizable QWP + (partial) polarizer hardware.
//!
//! The figure of merit is the smallest pairwise Euclidean distance between
//! normalized noiseless response points (larger is better). It is maximized
//! with a multi-start Nelder–Mead simplex search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ghost::{normalize_dataset, sweep_family, Family, ResponseMode, SweepSpec};
use crate::polcalc::{compose, jones_to_mueller, reduce_angle, MuellerMatrix, PolElement};
use crate::qstate::TwoQubitDensity;
use crate::{Error, Result};

/// Which element light meets first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementOrder {
    /// Analyzer order: QWP, then polarizer, then the detector.
    #[default]
    QwpThenLp,
    LpThenQwp,
}

/// A QWP and a (possibly partial) polarizer. `extinction = None` means an
/// ideal polarizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectorParam {
    pub qwp_angle: f64,
    pub lp_angle: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extinction: Option<f64>,
    #[serde(default)]
    pub order: ElementOrder,
}

impl ProjectorParam {
    pub fn new(qwp_angle: f64, lp_angle: f64) -> Self {
        Self {
            qwp_angle: reduce_angle(qwp_angle),
            lp_angle: reduce_angle(lp_angle),
            extinction: None,
            order: ElementOrder::QwpThenLp,
        }
    }

    pub fn with_order(mut self, order: ElementOrder) -> Self {
        self.order = order;
        self
    }

    pub fn with_extinction(mut self, extinction: Option<f64>) -> Self {
        self.extinction = extinction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for a in [self.qwp_angle, self.lp_angle] {
            if !(0.0..180.0).contains(&a) {
                return Err(Error::InvalidConfig(format!("angle {a} outside [0, 180)")));
            }
        }
        match self.extinction {
            Some(k) if !(k >= 1.0) => Err(Error::InvalidExtinction(k)),
            _ => Ok(()),
        }
    }

    /// Elements in traversal order.
    pub fn elements(&self) -> Result<Vec<PolElement>> {
        let lp = match self.extinction {
            None => PolElement::polarizer(self.lp_angle),
            Some(k) => PolElement::partial_polarizer(k, self.lp_angle)?,
        };
        let qwp = PolElement::qwp(self.qwp_angle);
        Ok(match self.order {
            ElementOrder::QwpThenLp => vec![qwp, lp],
            ElementOrder::LpThenQwp => vec![lp, qwp],
        })
    }

    pub fn mueller(&self) -> Result<MuellerMatrix> {
        Ok(jones_to_mueller(&compose(&self.elements()?)?))
    }
}

/// Smallest pairwise distance between points; `+∞` for fewer than two.
pub fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            best = best.min(d);
        }
    }
    best.sqrt()
}

/// Which quantity of which projector a search coordinate controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamField {
    QwpAngle,
    LpAngle,
    Extinction,
}

/// `target = None` is the probe, `Some(i)` idler projector `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeVar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    pub field: ParamField,
}

/// Joint: all free variables at once. Sequential: probe first, then each
/// projector in turn, the rest held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    #[default]
    Joint,
    Sequential,
}

#[derive(Debug, Clone)]
pub struct OptimizationConfig {
    pub rho0: TwoQubitDensity,
    pub families: Vec<Family>,
    pub grid: Vec<f64>,
    pub mode: ResponseMode,
    /// Start point for the probe transformation.
    pub probe: ProjectorParam,
    /// Start points for the idler projectors (2 or 3).
    pub projectors: Vec<ProjectorParam>,
    /// Explicit free variables; `None` frees every angle (and extinction
    /// when `optimize_extinction`).
    pub free: Option<Vec<FreeVar>>,
    pub search: SearchMode,
    pub optimize_extinction: bool,
    /// Upper end of the extinction search range.
    pub extinction_max: f64,
    pub restarts: usize,
    pub max_evaluations: usize,
    pub seed: u64,
}

impl OptimizationConfig {
    pub fn new(
        rho0: TwoQubitDensity,
        families: Vec<Family>,
        grid: Vec<f64>,
        probe: ProjectorParam,
        projectors: Vec<ProjectorParam>,
    ) -> Self {
        Self {
            rho0,
            families,
            grid,
            mode: ResponseMode::Joint,
            probe,
            projectors,
            free: None,
            search: SearchMode::Joint,
            optimize_extinction: false,
            extinction_max: 100.0,
            restarts: 16,
            max_evaluations: 4000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts < 1 {
            return Err(Error::InvalidConfig("restarts must be >= 1".into()));
        }
        if !(2..=3).contains(&self.projectors.len()) {
            return Err(Error::InvalidConfig(format!(
                "dimension must be 2 or 3, got {}",
                self.projectors.len()
            )));
        }
        if self.max_evaluations < 1 {
            return Err(Error::InvalidConfig("max_evaluations must be >= 1".into()));
        }
        if !(self.extinction_max >= 1.0) {
            return Err(Error::InvalidExtinction(self.extinction_max));
        }
        self.probe.validate()?;
        self.projectors
            .iter()
            .try_for_each(ProjectorParam::validate)?;
        for v in self.free_vars() {
            if let Some(i) = v.target {
                if i >= self.projectors.len() {
                    return Err(Error::InvalidConfig(format!(
                        "free variable targets projector {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn free_vars(&self) -> Vec<FreeVar> {
        if let Some(f) = &self.free {
            return f.clone();
        }
        let mut fields = vec![ParamField::QwpAngle, ParamField::LpAngle];
        if self.optimize_extinction {
            fields.push(ParamField::Extinction);
        }
        std::iter::once(None)
            .chain((0..self.projectors.len()).map(Some))
            .flat_map(|target| fields.iter().map(move |&field| FreeVar { target, field }))
            .collect()
    }

    fn n_samples(&self) -> usize {
        self.families.len() * self.grid.len()
    }
}

/// Objective for explicit element lists (probe may be any element stack).
pub fn objective_for_elements(
    probe: &[PolElement],
    projectors: &[Vec<PolElement>],
    config: &OptimizationConfig,
) -> Result<f64> {
    if config.n_samples() < 2 {
        return Err(Error::TooFewSamples(config.n_samples()));
    }
    let curves = config
        .families
        .iter()
        .map(|family| {
            sweep_family(
                &config.rho0,
                &SweepSpec {
                    family: family.clone(),
                    grid: config.grid.clone(),
                    probe: probe.to_vec(),
                    projectors: projectors.to_vec(),
                    mode: config.mode,
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let curves = match normalize_dataset(curves) {
        Ok(c) => c,
        Err(Error::AllZeroDataset) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let points: Vec<Vec<f64>> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.coords.clone()))
        .collect();
    Ok(min_pairwise_distance(&points))
}

/// Minimum pairwise distance of the normalized noiseless responses over all
/// configured families and grid angles.
pub fn objective_min_separation(
    probe: &ProjectorParam,
    projectors: &[ProjectorParam],
    config: &OptimizationConfig,
) -> Result<f64> {
    let elems = projectors
        .iter()
        .map(ProjectorParam::elements)
        .collect::<Result<Vec<_>>>()?;
    objective_for_elements(&probe.elements()?, &elems, config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub restart: usize,
    pub evaluations: usize,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub probe: ProjectorParam,
    pub projectors: Vec<ProjectorParam>,
    pub value: f64,
    /// Best objective among the restart start points.
    pub start_value: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

/// Maximize `f` from `x0` with a Nelder–Mead simplex. Vertex 0 is the start
/// point; ties never displace the incumbent, so a constant objective returns
/// `x0`.
#[derive(Debug, Clone)]
pub struct NmOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Best value after each iteration as `(evaluations, best)`.
    pub trace: Vec<(usize, f64)>,
}

pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    max_evals: usize,
    xtol: f64,
    ftol: f64,
) -> NmOutcome {
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let f0 = eval(x0, &mut evals);
    if n == 0 {
        return NmOutcome {
            x: vec![],
            value: f0,
            evaluations: evals,
            converged: true,
            trace: vec![(evals, f0)],
        };
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for i in 0..n {
        if evals >= max_evals {
            break;
        }
        let mut x = x0.to_vec();
        x[i] += steps[i];
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let mut trace = vec![(
        evals,
        simplex
            .iter()
            .map(|v| v.1)
            .fold(f64::NEG_INFINITY, f64::max),
    )];
    if simplex.len() < n + 1 {
        let best = simplex
            .iter()
            .fold(&simplex[0], |b, v| if v.1 > b.1 { v } else { b })
            .clone();
        return NmOutcome {
            x: best.0,
            value: best.1,
            evaluations: evals,
            converged: false,
            trace,
        };
    }

    let mut converged = false;
    while evals < max_evals {
        // best first; stable so the incumbent wins ties
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let spread = simplex[0].1 - simplex[n].1;
        let size = simplex[1..]
            .iter()
            .map(|v| {
                v.0.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if size <= xtol && spread.abs() <= ftol * (1.0 + simplex[0].1.abs()) {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v.0[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr > simplex[0].1 {
            let xe = along(2.0);
            let fe = if evals < max_evals {
                eval(&xe, &mut evals)
            } else {
                f64::NEG_INFINITY
            };
            simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
        } else if fr > simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            // outside contraction when the reflection beat the worst vertex
            let outside = fr > worst.1;
            let xc = along(if outside { 0.5 } else { -0.5 });
            let fc = eval(&xc, &mut evals);
            if (outside && fc >= fr) || (!outside && fc > worst.1) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex[1..].iter_mut() {
                    if evals >= max_evals {
                        break;
                    }
                    let x: Vec<f64> = best
                        .iter()
                        .zip(&v.0)
                        .map(|(b, x)| b + 0.5 * (x - b))
                        .collect();
                    let fx = eval(&x, &mut evals);
                    *v = (x, fx);
                }
            }
        }
        let best = simplex
            .iter()
            .map(|v| v.1)
            .fold(f64::NEG_INFINITY, f64::max);
        trace.push((evals, best));
    }
    // keep the incumbent on ties (first in stable order)
    let mut best = &simplex[0];
    for v in &simplex[1..] {
        if v.1 > best.1 {
            best = v;
        }
    }
    NmOutcome {
        x: best.0.clone(),
        value: best.1,
        evaluations: evals,
        converged,
        trace,
    }
}

const ANGLE_STEP: f64 = 20.0;
const LOG_EXT_STEP: f64 = 0.5;

struct Assignment<'a> {
    config: &'a OptimizationConfig,
    vars: Vec<FreeVar>,
}

impl Assignment<'_> {
    fn apply(
        &self,
        base: &(ProjectorParam, Vec<ProjectorParam>),
        x: &[f64],
    ) -> (ProjectorParam, Vec<ProjectorParam>) {
        let (mut probe, mut projs) = base.clone();
        let kmax = self.config.extinction_max;
        for (v, &val) in self.vars.iter().zip(x) {
            let p = match v.target {
                None => &mut probe,
                Some(i) => &mut projs[i],
            };
            match v.field {
                ParamField::QwpAngle => p.qwp_angle = reduce_angle(val),
                ParamField::LpAngle => p.lp_angle = reduce_angle(val),
                ParamField::Extinction => p.extinction = Some(val.clamp(0.0, kmax.ln()).exp()),
            }
        }
        (probe, projs)
    }

    fn read(&self, base: &(ProjectorParam, Vec<ProjectorParam>)) -> Vec<f64> {
        let kmax = self.config.extinction_max;
        self.vars
            .iter()
            .map(|v| {
                let p = match v.target {
                    None => &base.0,
                    Some(i) => &base.1[i],
                };
                match v.field {
                    ParamField::QwpAngle => p.qwp_angle,
                    ParamField::LpAngle => p.lp_angle,
                    ParamField::Extinction => p.extinction.unwrap_or(kmax).clamp(1.0, kmax).ln(),
                }
            })
            .collect()
    }

    fn steps(&self) -> Vec<f64> {
        self.vars
            .iter()
            .map(|v| {
                if v.field == ParamField::Extinction {
                    LOG_EXT_STEP
                } else {
                    ANGLE_STEP
                }
            })
            .collect()
    }

    fn value(&self, point: &(ProjectorParam, Vec<ProjectorParam>)) -> f64 {
        objective_min_separation(&point.0, &point.1, self.config).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Latin-hypercube start points over the free variables (restart 0 is the
/// configured start).
fn start_points(config: &OptimizationConfig, vars: &[FreeVar], base: &[f64]) -> Vec<Vec<f64>> {
    let r = config.restarts;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let strata: Vec<Vec<usize>> = vars
        .iter()
        .map(|_| {
            let mut perm: Vec<usize> = (0..r.saturating_sub(1)).collect();
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            perm
        })
        .collect();
    let kmax_ln = config.extinction_max.ln();
    let mut out = vec![base.to_vec()];
    for k in 0..r.saturating_sub(1) {
        let x = vars
            .iter()
            .zip(&strata)
            .map(|(v, perm)| {
                let u = (perm[k] as f64 + rng.random::<f64>()) / (r - 1) as f64;
                match v.field {
                    ParamField::Extinction => u * kmax_ln,
                    _ => u * 180.0,
                }
            })
            .collect();
        out.push(x);
    }
    out
}

/// Multi-start simplex search; restarts run in parallel and are combined in
/// restart order, so the result depends only on the config and seed.
pub fn optimize(config: &OptimizationConfig) -> Result<OptimizationResult> {
    config.validate()?;
    if config.n_samples() < 2 {
        return Err(Error::TooFewSamples(config.n_samples()));
    }
    let all_vars = config.free_vars();
    let groups: Vec<Vec<FreeVar>> = match config.search {
        SearchMode::Joint => vec![all_vars.clone()],
        SearchMode::Sequential => {
            let mut g: Vec<Vec<FreeVar>> = Vec::new();
            for target in std::iter::once(None).chain((0..config.projectors.len()).map(Some)) {
                let vs: Vec<FreeVar> = all_vars
                    .iter()
                    .copied()
                    .filter(|v| v.target == target)
                    .collect();
                if !vs.is_empty() {
                    g.push(vs);
                }
            }
            g
        }
    };
    let base = (config.probe, config.projectors.clone());
    let full = Assignment {
        config,
        vars: all_vars.clone(),
    };
    let starts = start_points(config, &all_vars, &full.read(&base));
    let budget = (config.max_evaluations / config.restarts).max(1);

    struct RestartOutcome {
        point: (ProjectorParam, Vec<ProjectorParam>),
        start_value: f64,
        value: f64,
        evaluations: usize,
        converged: bool,
        trace: Vec<TracePoint>,
    }

    let outcomes: Vec<RestartOutcome> = starts
        .par_iter()
        .enumerate()
        .map(|(restart, x0)| {
            let mut point = full.apply(&base, x0);
            let start_value = full.value(&point);
            let mut value = start_value;
            let mut evaluations = 1;
            let mut converged = true;
            let mut trace = vec![TracePoint {
                restart,
                evaluations,
                best: value,
            }];
            let share = (budget / groups.len()).max(1);
            for vars in &groups {
                let asg = Assignment {
                    config,
                    vars: vars.clone(),
                };
                let x0 = asg.read(&point);
                let anchor = point.clone();
                let nm = nelder_mead(
                    |x| asg.value(&asg.apply(&anchor, x)),
                    &x0,
                    &asg.steps(),
                    share,
                    1e-6,
                    1e-12,
                );
                for &(e, b) in &nm.trace {
                    trace.push(TracePoint {
                        restart,
                        evaluations: evaluations + e,
                        best: b.max(value),
                    });
                }
                evaluations += nm.evaluations;
                converged &= nm.converged;
                if nm.value > value {
                    value = nm.value;
                    point = asg.apply(&anchor, &nm.x);
                }
            }
            RestartOutcome {
                point,
                start_value,
                value,
                evaluations,
                converged,
                trace,
            }
        })
        .collect();

    let start_value = outcomes
        .iter()
        .map(|o| o.start_value)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut best = &outcomes[0];
    for o in &outcomes[1..] {
        if o.value > best.value {
            best = o;
        }
    }
    log::info!(
        "optimize: best {:.6} (start {:.6}) over {} restarts",
        best.value,
        start_value,
        outcomes.len()
    );
    Ok(OptimizationResult {
        probe: best.point.0,
        projectors: best.point.1.clone(),
        value: best.value,
        start_value,
        evaluations: outcomes.iter().map(|o| o.evaluations).sum(),
        converged: outcomes.iter().any(|o| o.converged),
        trace: outcomes.into_iter().flat_map(|o| o.trace).collect(),
    })
}

/// Amplitude ratio `u = 1/√k` below which a fitted polarizer is reported as ideal.
const IDEAL_U: f64 = 1e-9;

fn feasible_param(a: f64, b: f64, u: f64, order: ElementOrder) -> ProjectorParam {
    let u = u.abs().min(1.0);
    let extinction = if u <= IDEAL_U {
        None
    } else {
        Some(1.0 / (u * u))
    };
    ProjectorParam::new(a, b)
        .with_extinction(extinction)
        .with_order(order)
}

fn feasible_distance(p: &ProjectorParam, target: &MuellerMatrix) -> f64 {
    p.mueller()
        .map(|m| m.frobenius_distance(target))
        .unwrap_or(f64::INFINITY)
}

/// Closest realizable QWP + polarizer setting (either order, any
/// extinction ≥ 1) to a target Mueller matrix in Frobenius norm.
pub fn nearest_feasible(target: &MuellerMatrix) -> (ProjectorParam, f64) {
    let orders = [ElementOrder::QwpThenLp, ElementOrder::LpThenQwp];
    let us = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut seeds: Vec<(f64, f64, f64, f64, ElementOrder)> = Vec::new();
    for &order in &orders {
        for ia in 0..36 {
            for ib in 0..36 {
                for &u in &us {
                    let (a, b) = (5.0 * ia as f64, 5.0 * ib as f64);
                    let d = feasible_distance(&feasible_param(a, b, u, order), target);
                    seeds.push((d, a, b, u, order));
                }
            }
        }
    }
    seeds.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut best: Option<(ProjectorParam, f64)> = None;
    for &(_, a, b, u, order) in seeds.iter().take(6) {
        // u = sin²(w) keeps u in [0, 1] and makes u → 0 smooth
        let w0 = u.sqrt().asin();
        let fit = |x: &[f64]| feasible_param(x[0], x[1], x[2].sin().powi(2), order);
        let mut x = vec![a, b, w0];
        let mut steps = vec![2.0, 2.0, 0.1];
        for _ in 0..3 {
            let nm = nelder_mead(
                |x| -feasible_distance(&fit(x), target),
                &x,
                &steps,
                3000,
                1e-12,
                1e-15,
            );
            x = nm.x;
            steps = vec![0.2, 0.2, 0.01];
        }
        let p = fit(&x);
        let d = feasible_distance(&p, target);
        if best.as_ref().is_none_or(|(_, bd)| d < *bd) {
            best = Some((p, d));
        }
    }
    best.expect("grid is non-empty")
}
