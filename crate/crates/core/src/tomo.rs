//! Two-qubit polarization tomography from 16 projective coincidence
//! measurements and maximum-likelihood reconstruction.
//!
//! The estimate is parametrized as `ρ = T†T / tr(T†T)` with `T` lower
//! triangular (4 real diagonal + 6 complex off-diagonal entries = 16 real
//! parameters), so every iterate is a valid density matrix. The Poisson
//! log-likelihood with the overall count scale profiled out,
//! `Σ n_i ln p_i − N ln Σ p_i`, is maximized with L-BFGS and an Armijo
//! backtracking line search.

use nalgebra::{Cholesky, DMatrix, DVector, Matrix2, Matrix4, SymmetricEigen, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use crate::countsim::CountModel;
use crate::polcalc::JonesMatrix;
use crate::qstate::{kron2, metrics, psi_plus_vector, StateMetrics, TwoQubitDensity};
use crate::{Error, Result, C64};

/// Gradient-norm threshold for convergence (per-count normalized likelihood).
pub const GRAD_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;
const LBFGS_MEMORY: usize = 10;
const ARMIJO_C: f64 = 1e-4;
/// Relative decrease below which a step counts as no progress. Near the
/// optimum the gradient bottoms out at rounding noise (~1e-8 for 10^6
/// counts) while accepted steps no longer change the objective.
const STALL_FTOL: f64 = 1e-15;
const STALL_STEPS: usize = 10;
const PROB_FLOOR: f64 = 1e-300;

/// Single-photon projection state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    H,
    V,
    D,
    A,
    L,
    R,
}

impl Basis {
    pub const ALL: [Basis; 6] = [Basis::H, Basis::V, Basis::D, Basis::A, Basis::L, Basis::R];

    /// Ket in the (H, V) basis. `D = (H+V)/√2`, `A = (H−V)/√2`,
    /// `R = (H−iV)/√2`, `L = (H+iV)/√2`.
    pub fn ket(&self) -> Vector2<C64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (a, b) = match self {
            Basis::H => (C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
            Basis::V => (C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
            Basis::D => (C64::new(s, 0.0), C64::new(s, 0.0)),
            Basis::A => (C64::new(s, 0.0), C64::new(-s, 0.0)),
            Basis::R => (C64::new(s, 0.0), C64::new(0.0, -s)),
            Basis::L => (C64::new(s, 0.0), C64::new(0.0, s)),
        };
        Vector2::new(a, b)
    }

    /// Rank-1 projector `|k⟩⟨k|` as a Jones matrix.
    pub fn projector(&self) -> JonesMatrix {
        let k = self.ket();
        JonesMatrix(k * k.adjoint())
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Basis::H => "H",
            Basis::V => "V",
            Basis::D => "D",
            Basis::A => "A",
            Basis::L => "L",
            Basis::R => "R",
        };
        f.write_str(s)
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "H" | "h" => Ok(Basis::H),
            "V" | "v" => Ok(Basis::V),
            "D" | "d" => Ok(Basis::D),
            "A" | "a" => Ok(Basis::A),
            "L" | "l" => Ok(Basis::L),
            "R" | "r" => Ok(Basis::R),
            other => Err(Error::IncompleteRecords(format!(
                "unknown basis label `{other}`"
            ))),
        }
    }
}

/// Projector pair `(signal, idler)`.
pub type ProjectorPair = (Basis, Basis);

/// The 16 settings of James, Kwiat, Munro and White (2001).
pub fn canonical_projections() -> [ProjectorPair; 16] {
    use Basis::*;
    [
        (H, H),
        (H, V),
        (V, V),
        (V, H),
        (R, H),
        (R, V),
        (D, V),
        (D, H),
        (D, R),
        (D, D),
        (R, D),
        (H, D),
        (V, D),
        (V, L),
        (H, L),
        (R, L),
    ]
}

fn pair_operator(pair: ProjectorPair) -> Matrix4<C64> {
    kron2(&pair.0.projector().0, &pair.1.projector().0)
}

/// Probability `tr[(Π_a ⊗ Π_b) ρ]`.
pub fn pair_probability(rho: &TwoQubitDensity, pair: ProjectorPair) -> f64 {
    (pair_operator(pair) * rho.matrix()).trace().re.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TomographyRecord {
    pub basis_a: Basis,
    pub basis_b: Basis,
    /// Corrected coincidence counts.
    pub counts: f64,
}

/// Noise-free records with `total_pairs · p` counts per setting.
pub fn exact_records(rho: &TwoQubitDensity, total_pairs: f64) -> Vec<TomographyRecord> {
    canonical_projections()
        .iter()
        .map(|&(a, b)| TomographyRecord {
            basis_a: a,
            basis_b: b,
            counts: total_pairs * pair_probability(rho, (a, b)),
        })
        .collect()
}

/// Poisson-sampled records for the 16 canonical settings, corrected for
/// accidentals and detector efficiency. Drift is a between-run effect and is
/// not applied within one tomography run.
pub fn simulate_tomography(
    rho: &TwoQubitDensity,
    model: &CountModel,
    seed: u64,
) -> Result<Vec<TomographyRecord>> {
    model.validate()?;
    let eff = model.eff_signal * model.eff_idler;
    if !(eff > 0.0) {
        return Err(Error::ZeroEfficiency);
    }
    let acc = model.accidental_mean();
    Ok(canonical_projections()
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let mean = model.expected_counts(pair_probability(rho, (a, b)), 1.0);
            let raw = if mean > 0.0 {
                Poisson::new(mean)
                    .expect("positive Poisson mean")
                    .sample(&mut rng)
            } else {
                0.0
            };
            TomographyRecord {
                basis_a: a,
                basis_b: b,
                counts: ((raw - acc) / eff).max(0.0),
            }
        })
        .collect())
}

/// Records as CSV with header `basis_a,basis_b,counts`.
pub fn write_records_csv<W: Write>(records: &[TomographyRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "basis_a,basis_b,counts")?;
    for r in records {
        writeln!(w, "{},{},{}", r.basis_a, r.basis_b, r.counts)?;
    }
    Ok(())
}

pub fn read_records_csv<R: BufRead>(r: R) -> Result<Vec<TomographyRecord>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::IncompleteRecords("empty file".into()))?
        .map_err(|e| Error::IncompleteRecords(e.to_string()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["basis_a", "basis_b", "counts"] {
        return Err(Error::IncompleteRecords(format!(
            "expected header `basis_a,basis_b,counts`, got `{header}`"
        )));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::IncompleteRecords(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::IncompleteRecords(format!(
                "line {}: expected 3 fields",
                lineno + 2
            )));
        }
        let counts: f64 = fields[2].trim().parse().map_err(|_| {
            Error::IncompleteRecords(format!("line {}: bad count `{}`", lineno + 2, fields[2]))
        })?;
        out.push(TomographyRecord {
            basis_a: fields[0].parse()?,
            basis_b: fields[1].parse()?,
            counts,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub rho: TwoQubitDensity,
    /// Poisson log-likelihood (without the `ln n!` constant) at the estimate.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Profiled log-likelihood per count after each accepted step.
    pub trace: Vec<f64>,
}

/// Two-qubit Pauli product `σ_a ⊗ σ_b` with `σ_0 = I` and standard `σ_x, σ_y, σ_z`.
fn pauli_product(k: usize) -> Matrix4<C64> {
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let i = C64::i();
    let p = [
        Matrix2::new(o, z, z, o),
        Matrix2::new(z, o, o, z),
        Matrix2::new(z, -i, i, z),
        Matrix2::new(o, z, z, -o),
    ];
    kron2(&p[k / 4], &p[k % 4])
}

fn validate_records(records: &[TomographyRecord]) -> Result<()> {
    if records.len() != 16 {
        return Err(Error::IncompleteRecords(format!(
            "expected 16 records, got {}",
            records.len()
        )));
    }
    let distinct: HashSet<ProjectorPair> = records.iter().map(|r| (r.basis_a, r.basis_b)).collect();
    if distinct.len() != 16 {
        return Err(Error::IncompleteRecords(
            "projector pairs are not distinct".into(),
        ));
    }
    if records
        .iter()
        .any(|r| !(r.counts >= 0.0) || !r.counts.is_finite())
    {
        return Err(Error::IncompleteRecords(
            "counts must be finite and >= 0".into(),
        ));
    }
    let sv = measurement_matrix(records).singular_values();
    if sv.min() <= 1e-9 * sv.max() {
        return Err(Error::IncompleteRecords(
            "projector set is not tomographically complete".into(),
        ));
    }
    if records.iter().all(|r| r.counts == 0.0) {
        return Err(Error::ZeroCounts);
    }
    Ok(())
}

/// `A[i][k] = tr(Π_i σ_k)`.
fn measurement_matrix(records: &[TomographyRecord]) -> DMatrix<f64> {
    DMatrix::from_fn(records.len(), 16, |i, k| {
        let pi = pair_operator((records[i].basis_a, records[i].basis_b));
        (pi * pauli_product(k)).trace().re
    })
}

/// Linear-inversion estimate projected to the PSD cone, or `I/4` when the
/// inversion is unusable.
fn linear_estimate(records: &[TomographyRecord]) -> Matrix4<C64> {
    let fallback = Matrix4::<C64>::identity() * C64::new(0.25, 0.0);
    let a = measurement_matrix(records) * 0.25;
    let n = DVector::from_iterator(16, records.iter().map(|r| r.counts));
    let Some(x) = a.lu().solve(&n) else {
        return fallback;
    };
    let raw = (0..16).fold(Matrix4::<C64>::zeros(), |acc, k| {
        acc + pauli_product(k) * C64::new(0.25 * x[k], 0.0)
    });
    let herm = (raw + raw.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let clipped = eig.eigenvalues.map(|l| C64::new(l.max(0.0), 0.0));
    let psd = &eig.eigenvectors * Matrix4::from_diagonal(&clipped) * eig.eigenvectors.adjoint();
    let tr = psd.trace().re;
    if !(tr > 0.0) || !tr.is_finite() {
        return fallback;
    }
    psd / C64::new(tr, 0.0)
}

const OFF_DIAG: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

fn t_from_params(t: &[f64]) -> Matrix4<C64> {
    let mut m = Matrix4::<C64>::zeros();
    for i in 0..4 {
        m[(i, i)] = C64::new(t[i], 0.0);
    }
    for (k, &(r, c)) in OFF_DIAG.iter().enumerate() {
        m[(r, c)] = C64::new(t[4 + 2 * k], t[5 + 2 * k]);
    }
    m
}

/// Lower-triangular `T` with `T†T = ρ` for a positive definite `ρ`.
fn params_from_rho(rho: &Matrix4<C64>) -> Option<Vec<f64>> {
    // Cholesky of the index-reversed matrix gives the reversed ordering.
    let rev = Matrix4::from_fn(|i, j| rho[(3 - i, 3 - j)]);
    let l = Cholesky::new(rev)?.unpack();
    let u = Matrix4::from_fn(|i, j| l[(3 - i, 3 - j)]);
    let t = u.adjoint();
    let mut p = vec![0.0; 16];
    for i in 0..4 {
        p[i] = t[(i, i)].re;
    }
    for (k, &(r, c)) in OFF_DIAG.iter().enumerate() {
        p[4 + 2 * k] = t[(r, c)].re;
        p[5 + 2 * k] = t[(r, c)].im;
    }
    Some(p)
}

struct Objective {
    ops: Vec<Matrix4<C64>>,
    counts: Vec<f64>,
    total: f64,
}

impl Objective {
    /// Negative profiled log-likelihood per count and its gradient.
    fn eval(&self, t: &[f64]) -> (f64, Vec<f64>) {
        let tm = t_from_params(t);
        let tdag = tm.adjoint();
        let rho = tdag * tm;
        let probs: Vec<f64> = self
            .ops
            .iter()
            .map(|op| (op * rho).trace().re.max(PROB_FLOOR))
            .collect();
        let psum: f64 = probs.iter().sum();
        let mut f = self.total * psum.ln();
        for (n, p) in self.counts.iter().zip(&probs) {
            if *n > 0.0 {
                f -= n * p.ln();
            }
        }
        f /= self.total;

        // d f / d p_i
        let weights: Vec<f64> = self
            .counts
            .iter()
            .zip(&probs)
            .map(|(n, p)| 1.0 / psum - n / (self.total * p))
            .collect();
        // Σ_i w_i Π_i, then ∂p_i/∂T_rs = 2 (Π_i T†)_sr
        let weighted = self
            .ops
            .iter()
            .zip(&weights)
            .fold(Matrix4::<C64>::zeros(), |acc, (op, w)| {
                acc + op * C64::new(*w, 0.0)
            });
        let g = weighted * tdag * C64::new(2.0, 0.0);
        let mut grad = vec![0.0; 16];
        for i in 0..4 {
            grad[i] = g[(i, i)].re;
        }
        for (k, &(r, c)) in OFF_DIAG.iter().enumerate() {
            let v = g[(c, r)];
            grad[4 + 2 * k] = v.re;
            grad[5 + 2 * k] = -v.im;
        }
        (f, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Maximum-likelihood density matrix from a complete record set.
pub fn reconstruct_mle(records: &[TomographyRecord]) -> Result<ReconstructionResult> {
    validate_records(records)?;
    let objective = Objective {
        ops: records
            .iter()
            .map(|r| pair_operator((r.basis_a, r.basis_b)))
            .collect(),
        counts: records.iter().map(|r| r.counts).collect(),
        total: records.iter().map(|r| r.counts).sum(),
    };

    let start = linear_estimate(records);
    let eps = 1e-3;
    let start =
        start * C64::new(1.0 - eps, 0.0) + Matrix4::<C64>::identity() * C64::new(eps / 4.0, 0.0);
    let mut t = params_from_rho(&start)
        .or_else(|| params_from_rho(&(Matrix4::identity() * C64::new(0.25, 0.0))))
        .expect("identity is positive definite");

    let (mut f, mut g) = objective.eval(&t);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
    let mut trace = vec![-f];
    let mut converged = norm(&g) < GRAD_TOL;
    let mut iterations = 0;
    let mut stalled = 0;

    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut dir = lbfgs_direction(&g, &history);
        if dot(&dir, &g) >= 0.0 {
            history.clear();
            dir = g.iter().map(|x| -x).collect();
        }
        let slope = dot(&dir, &g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = t.iter().zip(&dir).map(|(x, d)| x + step * d).collect();
            let (fc, gc) = objective.eval(&cand);
            if fc.is_finite() && fc <= f + ARMIJO_C * step * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            if history.is_empty() {
                // no descent possible even along the gradient: stationary to
                // numerical precision
                converged = norm(&g) < GRAD_TOL;
                break;
            }
            history.clear();
            continue;
        };
        let s: Vec<f64> = cand.iter().zip(&t).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-16 * norm(&s) * norm(&y) {
            history.push_back((s, y));
            if history.len() > LBFGS_MEMORY {
                history.pop_front();
            }
        }
        stalled = if f - fc <= STALL_FTOL * f.abs().max(1.0) {
            stalled + 1
        } else {
            0
        };
        t = cand;
        f = fc;
        g = gc;
        // The objective is scale invariant; keep ||t|| away from 0 and ∞.
        let nt = norm(&t);
        if !(0.5..=2.0).contains(&nt) {
            t.iter_mut().for_each(|x| *x /= nt);
            let (f2, g2) = objective.eval(&t);
            f = f2;
            g = g2;
            history.clear();
        }
        trace.push(-f);
        converged = norm(&g) < GRAD_TOL || stalled >= STALL_STEPS;
    }

    let tm = t_from_params(&t);
    let rho = TwoQubitDensity::new(tm.adjoint() * tm, true)?;
    Ok(ReconstructionResult {
        log_likelihood: poisson_log_likelihood(&objective, &rho),
        rho,
        iterations,
        converged,
        trace,
    })
}

fn poisson_log_likelihood(obj: &Objective, rho: &TwoQubitDensity) -> f64 {
    let probs: Vec<f64> = obj
        .ops
        .iter()
        .map(|op| (op * rho.matrix()).trace().re.max(PROB_FLOOR))
        .collect();
    let scale = obj.total / probs.iter().sum::<f64>();
    obj.counts
        .iter()
        .zip(&probs)
        .map(|(n, p)| {
            let mu = scale * p;
            if *n > 0.0 {
                n * mu.ln() - mu
            } else {
                -mu
            }
        })
        .sum()
}

fn lbfgs_direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y) in history.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push((a, rho));
    }
    if let Some((s, y)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|x| *x *= gamma);
    }
    for ((s, y), (a, rho)) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter().map(|x| -x).collect()
}

/// Metrics of the reconstruction against `|Ψ+⟩`.
pub fn report_metrics(result: &ReconstructionResult) -> Result<StateMetrics> {
    metrics(&result.rho, &psi_plus_vector())
}

/// `½ Σ |λ(ρ − σ)|`.
pub fn trace_distance(a: &TwoQubitDensity, b: &TwoQubitDensity) -> f64 {
    let diff = a.matrix() - b.matrix();
    0.5 * SymmetricEigen::new((diff + diff.adjoint()) * C64::new(0.5, 0.0))
        .eigenvalues
        .iter()
        .map(|l| l.abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{bell_psi_plus, concurrence, fidelity_pure, maximally_mixed, werner_mix};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn canonical_set_properties() {
        let set = canonical_projections();
        assert!(set.contains(&(Basis::H, Basis::V)));
        assert!(set.contains(&(Basis::V, Basis::H)));
        let distinct: HashSet<_> = set.iter().collect();
        assert_eq!(distinct.len(), 16);
        for b in Basis::ALL {
            let p = b.projector().0;
            assert!((p * p - p).norm() < 1e-15);
            assert_abs_diff_eq!(p.trace().re, 1.0, epsilon = 1e-15);
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = Vector2::new(C64::new(s, 0.0), C64::new(s, 0.0));
        assert!((Basis::D.projector().0 - d * d.adjoint()).norm() < 1e-15);
    }

    #[test]
    fn simulated_bell_counts() {
        let model = CountModel::ideal(1e6, 1.0);
        let recs = simulate_tomography(&bell_psi_plus(), &model, 4).unwrap();
        let get = |a, b| {
            recs.iter()
                .find(|r| r.basis_a == a && r.basis_b == b)
                .unwrap()
                .counts
        };
        assert_eq!(get(Basis::H, Basis::H), 0.0);
        let hv = get(Basis::H, Basis::V);
        assert!((hv - 5e5).abs() < 5.0 * (5e5f64).sqrt());

        let recs = simulate_tomography(&maximally_mixed(), &model, 4).unwrap();
        for r in &recs {
            assert!((r.counts - 2.5e5).abs() < 5.0 * 500.0);
        }
    }

    #[test]
    fn exact_bell_reconstruction() {
        let res = reconstruct_mle(&exact_records(&bell_psi_plus(), 1e6)).unwrap();
        let fid = fidelity_pure(&res.rho, &psi_plus_vector());
        assert!(fid >= 0.9999, "fidelity {fid}");
        let m = report_metrics(&res).unwrap();
        assert!(m.concurrence > 0.999);
    }

    #[test]
    fn exact_mixed_reconstruction() {
        let res = reconstruct_mle(&exact_records(&maximally_mixed(), 1e5)).unwrap();
        assert!(res.converged);
        let dev = (res.rho.matrix() - maximally_mixed().matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-4, "max deviation {dev}");
    }

    #[test]
    fn werner_from_simulated_counts() {
        let rho = werner_mix(0.92).unwrap();
        let recs = simulate_tomography(&rho, &CountModel::ideal(1e6, 1.0), 77).unwrap();
        let res = reconstruct_mle(&recs).unwrap();
        assert!((concurrence(&res.rho) - 0.88).abs() < 0.02);
    }

    #[test]
    fn likelihood_is_monotone() {
        let rho = werner_mix(0.7).unwrap();
        let recs = simulate_tomography(&rho, &CountModel::ideal(1e4, 1.0), 3).unwrap();
        let res = reconstruct_mle(&recs).unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn error_shrinks_with_more_counts() {
        let rho = werner_mix(0.8).unwrap();
        let mut errs = Vec::new();
        for pairs in [1e4, 1e5, 1e6] {
            let mean: f64 = (0..5)
                .map(|seed| {
                    let recs =
                        simulate_tomography(&rho, &CountModel::ideal(pairs, 1.0), seed).unwrap();
                    trace_distance(&reconstruct_mle(&recs).unwrap().rho, &rho)
                })
                .sum::<f64>()
                / 5.0;
            errs.push(mean);
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn stops_at_the_rounding_floor() {
        // this record set leaves the gradient just above GRAD_TOL at the optimum
        let rho = werner_mix(0.8).unwrap();
        let recs = simulate_tomography(&rho, &CountModel::ideal(1e6, 1.0), 4).unwrap();
        let res = reconstruct_mle(&recs).unwrap();
        assert!(res.converged);
        assert!(res.iterations < 500, "{} iterations", res.iterations);
        assert!(trace_distance(&res.rho, &rho) < 0.01);
    }

    #[test]
    fn incomplete_records_rejected() {
        let mut recs = exact_records(&bell_psi_plus(), 100.0);
        recs.pop();
        assert!(matches!(
            reconstruct_mle(&recs),
            Err(Error::IncompleteRecords(_))
        ));

        let mut dup = exact_records(&bell_psi_plus(), 100.0);
        dup[1].basis_b = Basis::H;
        assert!(matches!(
            reconstruct_mle(&dup),
            Err(Error::IncompleteRecords(_))
        ));

        // 16 distinct pairs but only from the H/V/D/A bases: σ_y terms unseen
        let hvda = [Basis::H, Basis::V, Basis::D, Basis::A];
        let recs: Vec<_> = hvda
            .iter()
            .flat_map(|&a| hvda.iter().map(move |&b| (a, b)))
            .map(|(a, b)| TomographyRecord {
                basis_a: a,
                basis_b: b,
                counts: 10.0,
            })
            .collect();
        assert!(matches!(
            reconstruct_mle(&recs),
            Err(Error::IncompleteRecords(_))
        ));

        let zeros: Vec<_> = exact_records(&bell_psi_plus(), 0.0);
        assert!(matches!(reconstruct_mle(&zeros), Err(Error::ZeroCounts)));
    }

    #[test]
    fn records_csv_round_trip() {
        let recs = exact_records(&werner_mix(0.5).unwrap(), 1000.0);
        let mut buf = Vec::new();
        write_records_csv(&recs, &mut buf).unwrap();
        let back = read_records_csv(&buf[..]).unwrap();
        assert_eq!(back, recs);
        assert!(read_records_csv(&b"a,b,c\nH,H,1\n"[..]).is_err());
        assert!(read_records_csv(&b"basis_a,basis_b,counts\nH,X,1\n"[..]).is_err());
    }

    #[test]
    fn cholesky_parametrization_round_trip() {
        let rho = werner_mix(0.6).unwrap();
        let t = params_from_rho(rho.matrix()).unwrap();
        let tm = t_from_params(&t);
        assert!((tm.adjoint() * tm - rho.matrix()).norm() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let recs = simulate_tomography(&werner_mix(0.6).unwrap(), &CountModel::ideal(1e4, 1.0), 1)
            .unwrap();
        let obj = Objective {
            ops: recs
                .iter()
                .map(|r| pair_operator((r.basis_a, r.basis_b)))
                .collect(),
            counts: recs.iter().map(|r| r.counts).collect(),
            total: recs.iter().map(|r| r.counts).sum(),
        };
        let t: Vec<f64> = (0..16).map(|i| 0.3 + 0.05 * i as f64).collect();
        let (_, g) = obj.eval(&t);
        for k in 0..16 {
            let h = 1e-6;
            let mut tp = t.clone();
            tp[k] += h;
            let mut tm = t.clone();
            tm[k] -= h;
            let fd = (obj.eval(&tp).0 - obj.eval(&tm).0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6, "param {k}: {fd} vs {}", g[k]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn reconstruction_always_physical(counts in proptest::collection::vec(0.0f64..500.0, 16)) {
            prop_assume!(counts.iter().any(|&c| c > 0.0));
            let recs: Vec<_> = canonical_projections()
                .iter()
                .zip(&counts)
                .map(|(&(a, b), &c)| TomographyRecord { basis_a: a, basis_b: b, counts: c })
                .collect();
            let res = reconstruct_mle(&recs).unwrap();
            prop_assert!((res.rho.trace() - 1.0).abs() < 1e-12);
            prop_assert!(res.rho.eigenvalues().min() >= -1e-12);
        }
    }
}
