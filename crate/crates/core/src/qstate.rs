//! Two-qubit polarization states in the (HH, HV, VH, VV) basis. The first
//! factor is the signal photon, the second the idler.

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector4};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::{Error, Result, C64};

/// Hermiticity tolerance for validation.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues down to `-EIGEN_TOL` are clipped to zero; below that the
/// matrix is rejected.
pub const EIGEN_TOL: f64 = 1e-9;

/// Which photon to trace out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    Signal,
    Idler,
}

/// Validated 4×4 density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitDensity {
    matrix: Matrix4<C64>,
    normalized: bool,
}

impl TwoQubitDensity {
    /// Validate and, when `normalize` is set, rescale to unit trace.
    ///
    /// Small negative eigenvalues (≥ `-EIGEN_TOL`) are clipped and the
    /// matrix is rebuilt from its spectrum.
    pub fn new(matrix: Matrix4<C64>, normalize: bool) -> Result<Self> {
        if matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidDensity("non-finite entry".into()));
        }
        let herm_err = (matrix - matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm_err > HERMITIAN_TOL {
            return Err(Error::InvalidDensity(format!(
                "not Hermitian (deviation {herm_err:.3e})"
            )));
        }
        let herm = (matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(herm);
        let min_eig = eig.eigenvalues.min();
        if min_eig < -EIGEN_TOL {
            return Err(Error::InvalidDensity(format!(
                "negative eigenvalue {min_eig:.3e}"
            )));
        }
        let mut m = herm;
        if min_eig < 0.0 {
            log::warn!("clipping negative eigenvalue {min_eig:.3e} of density matrix");
            let clipped = eig.eigenvalues.map(|l| C64::new(l.max(0.0), 0.0));
            m = &eig.eigenvectors * Matrix4::from_diagonal(&clipped) * eig.eigenvectors.adjoint();
        }
        let tr = m.trace().re;
        if normalize {
            if tr <= 0.0 {
                return Err(Error::InvalidDensity("zero trace".into()));
            }
            m /= C64::new(tr, 0.0);
        }
        Ok(TwoQubitDensity {
            matrix: m,
            normalized: normalize,
        })
    }

    /// Pure state `|ψ⟩⟨ψ|` of a (not necessarily normalized) vector.
    pub fn from_pure(psi: &Vector4<C64>) -> Result<Self> {
        Self::new(psi * psi.adjoint(), true)
    }

    pub fn from_re_im(re: [[f64; 4]; 4], im: [[f64; 4]; 4], normalize: bool) -> Result<Self> {
        Self::new(
            Matrix4::from_fn(|i, j| C64::new(re[i][j], im[i][j])),
            normalize,
        )
    }

    pub fn to_re_im(&self) -> ([[f64; 4]; 4], [[f64; 4]; 4]) {
        let mut re = [[0.0; 4]; 4];
        let mut im = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                re[i][j] = self.matrix[(i, j)].re;
                im[i][j] = self.matrix[(i, j)].im;
            }
        }
        (re, im)
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.matrix
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        (self.matrix * self.matrix).trace().re
    }

    pub fn eigenvalues(&self) -> Vector4<f64> {
        SymmetricEigen::new(self.matrix).eigenvalues
    }
}

/// `|Ψ+⟩ = (|HV⟩ + |VH⟩)/√2` as a state vector.
pub fn psi_plus_vector() -> Vector4<C64> {
    let a = C64::new(FRAC_1_SQRT_2, 0.0);
    Vector4::new(C64::new(0.0, 0.0), a, a, C64::new(0.0, 0.0))
}

pub fn bell_psi_plus() -> TwoQubitDensity {
    let v = psi_plus_vector();
    TwoQubitDensity {
        matrix: v * v.adjoint(),
        normalized: true,
    }
}

/// `p |Ψ+⟩⟨Ψ+| + (1 − p) I/4`.
pub fn werner_mix(p: f64) -> Result<TwoQubitDensity> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidMixing(p));
    }
    let bell = bell_psi_plus().matrix;
    let m = bell * C64::new(p, 0.0) + Matrix4::identity() * C64::new((1.0 - p) / 4.0, 0.0);
    Ok(TwoQubitDensity {
        matrix: m,
        normalized: true,
    })
}

pub fn maximally_mixed() -> TwoQubitDensity {
    TwoQubitDensity {
        matrix: Matrix4::identity() * C64::new(0.25, 0.0),
        normalized: true,
    }
}

/// `a ⊗ b` with `a` on the signal photon.
pub fn kron2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|r, col| a[(r / 2, col / 2)] * b[(r % 2, col % 2)])
}

pub fn product_state(signal: &Matrix2<C64>, idler: &Matrix2<C64>) -> Result<TwoQubitDensity> {
    TwoQubitDensity::new(kron2(signal, idler), true)
}

/// Reduced matrix of the remaining photon. Works on any 4×4 matrix.
pub fn partial_trace(m: &Matrix4<C64>, over: Subsystem) -> Matrix2<C64> {
    match over {
        Subsystem::Signal => Matrix2::from_fn(|a, b| m[(a, b)] + m[(2 + a, 2 + b)]),
        Subsystem::Idler => Matrix2::from_fn(|a, b| m[(2 * a, 2 * b)] + m[(2 * a + 1, 2 * b + 1)]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateMetrics {
    pub concurrence: f64,
    pub linear_entropy: f64,
    pub fidelity: f64,
    pub purity: f64,
}

fn sigma_y_sigma_y() -> Matrix4<C64> {
    let i = C64::i();
    let zero = C64::new(0.0, 0.0);
    let sy = Matrix2::new(zero, -i, i, zero);
    kron2(&sy, &sy)
}

fn hermitian_sqrt(m: &Matrix4<C64>) -> Matrix4<C64> {
    let eig = SymmetricEigen::new(*m);
    let sq = eig.eigenvalues.map(|l| C64::new(l.max(0.0).sqrt(), 0.0));
    &eig.eigenvectors * Matrix4::from_diagonal(&sq) * eig.eigenvectors.adjoint()
}

/// Wootters concurrence, `max(0, λ1 − λ2 − λ3 − λ4)` with `λ_k` the
/// decreasing eigenvalues of `√(√ρ ρ̃ √ρ)`, `ρ̃ = (σy⊗σy) ρ* (σy⊗σy)`.
///
/// The Hermitian form is used so that only a Hermitian eigensolver is
/// needed. The state is trace-normalized first.
pub fn concurrence(rho: &TwoQubitDensity) -> f64 {
    let tr = rho.trace();
    let m = rho.matrix / C64::new(tr, 0.0);
    let yy = sigma_y_sigma_y();
    let tilde = yy * m.conjugate() * yy;
    let sq = hermitian_sqrt(&m);
    let inner = sq * tilde * sq;
    let inner = (inner + inner.adjoint()) * C64::new(0.5, 0.0);
    let mut lambdas: Vec<f64> = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    (lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0)
}

/// `(4/3)(1 − tr ρ²)`: 0 for pure states, 1 for `I/4`.
pub fn linear_entropy(rho: &TwoQubitDensity) -> f64 {
    let tr = rho.trace();
    4.0 / 3.0 * (1.0 - rho.purity() / (tr * tr))
}

/// `⟨ψ|ρ|ψ⟩` for a pure reference (normalized internally).
pub fn fidelity_pure(rho: &TwoQubitDensity, reference: &Vector4<C64>) -> f64 {
    let psi = reference / C64::new(reference.norm(), 0.0);
    (psi.adjoint() * rho.matrix * psi)[(0, 0)].re / rho.trace()
}

/// All state metrics against a pure reference state.
pub fn metrics(rho: &TwoQubitDensity, reference: &Vector4<C64>) -> Result<StateMetrics> {
    let tr = rho.trace();
    if !(tr > 0.0) {
        return Err(Error::InvalidDensity("zero trace".into()));
    }
    if reference.norm() == 0.0 {
        return Err(Error::InvalidDensity("zero reference vector".into()));
    }
    Ok(StateMetrics {
        concurrence: concurrence(rho),
        linear_entropy: linear_entropy(rho),
        fidelity: fidelity_pure(rho, reference),
        purity: rho.purity() / (tr * tr),
    })
}
