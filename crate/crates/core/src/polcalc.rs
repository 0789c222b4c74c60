//! Jones and Mueller calculus for the elements used as samples and
//! projectors: ideal linear polarizers, partial polarizers (pure
//! diattenuators) and linear retarders.
//!
//! Conventions:
//!
//! - Jones basis order is (H, V).
//! - Element angles are measured from the global vertical; at `theta = 0`
//!   the transmission (polarizer) or fast (retarder) axis is vertical.
//! - `R(theta) = [[cos, -sin], [sin, cos]]`, and an element rotated by
//!   `theta` is `R(theta) J0 R(-theta)`.
//! - Stokes parameters are referenced to the vertical axis as well:
//!   `S1 = I_V - I_H`, `S2` is the +45°/−45° difference measured from
//!   vertical, `S3` the circular difference. In terms of the coherency matrix
//!   `C = E E†` in the (H, V) basis this is `S1 = C_VV - C_HH`,
//!   `S2 = -2 Re C_HV`, `S3 = -2 Im C_HV`. See [`STOKES_SIGNS`].

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::{Error, Result, C64};

/// Signs applied to the standard Pauli matrices `(σz, σx, σy)` to obtain the
/// Stokes basis `(S1, S2, S3)`.
///
/// `(-1, -1, +1)` is a 90° rotation of the textbook H-referenced frame. It is
/// the unique choice (with the rotation sense above) that reproduces the
/// published Mueller matrices of a QWP + polarizer projector.
pub const STOKES_SIGNS: [f64; 3] = [-1.0, -1.0, 1.0];

/// Tolerance for Choi positivity.
pub const CHOI_PSD_TOL: f64 = 1e-9;

const PASSIVE_TOL: f64 = 1e-9;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// The four Stokes basis matrices `σ_0..σ_3` in the crate convention.
pub fn stokes_basis() -> [Matrix2<C64>; 4] {
    let [s1, s2, s3] = STOKES_SIGNS;
    let i = C64::i();
    [
        Matrix2::identity(),
        Matrix2::new(c(s1), c(0.0), c(0.0), c(-s1)),
        Matrix2::new(c(0.0), c(s2), c(s2), c(0.0)),
        Matrix2::new(c(0.0), -i * s3, i * s3, c(0.0)),
    ]
}

/// Stokes vector of a 2×2 coherency (polarization density) matrix.
pub fn stokes_from_coherency(coh: &Matrix2<C64>) -> Vector4<f64> {
    let basis = stokes_basis();
    Vector4::from_fn(|k, _| (coh * basis[k]).trace().re)
}

/// Coherency matrix of a Stokes vector; inverse of [`stokes_from_coherency`].
pub fn coherency_from_stokes(s: &Vector4<f64>) -> Matrix2<C64> {
    let basis = stokes_basis();
    (0..4).fold(Matrix2::zeros(), |acc, k| acc + basis[k] * c(0.5 * s[k]))
}

/// 2×2 complex amplitude transmission matrix in the (H, V) basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix(pub Matrix2<C64>);

impl JonesMatrix {
    pub fn identity() -> Self {
        JonesMatrix(Matrix2::identity())
    }

    pub fn zeros() -> Self {
        JonesMatrix(Matrix2::zeros())
    }

    pub fn matrix(&self) -> &Matrix2<C64> {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        JonesMatrix(self.0.adjoint())
    }

    /// `self · other`: `other` acts first.
    pub fn then_after(&self, other: &JonesMatrix) -> Self {
        JonesMatrix(self.0 * other.0)
    }

    pub fn singular_values(&self) -> [f64; 2] {
        let sv = self.0.singular_values();
        [sv[0], sv[1]]
    }

    /// True when no input state is amplified (all singular values ≤ 1).
    pub fn is_passive(&self) -> bool {
        self.singular_values()
            .iter()
            .all(|&s| s <= 1.0 + PASSIVE_TOL)
    }

    /// Elementwise maximum absolute difference.
    pub fn max_abs_diff(&self, other: &JonesMatrix) -> f64 {
        (self.0 - other.0)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// 4×4 real Stokes-space transfer matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuellerMatrix(pub Matrix4<f64>);

impl MuellerMatrix {
    pub fn identity() -> Self {
        MuellerMatrix(Matrix4::identity())
    }

    pub fn from_rows(rows: [[f64; 4]; 4]) -> Self {
        MuellerMatrix(Matrix4::from_fn(|i, j| rows[i][j]))
    }

    pub fn rows(&self) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.0[(i, j)];
            }
        }
        out
    }

    pub fn apply(&self, stokes: &Vector4<f64>) -> Vector4<f64> {
        self.0 * stokes
    }

    /// Basic Mueller shape constraints: `M00 ≥ 0` and `|Mij| ≤ M00`.
    pub fn is_well_formed(&self) -> bool {
        let m00 = self.0[(0, 0)];
        m00 >= 0.0 && self.0.iter().all(|v| v.abs() <= m00 + PASSIVE_TOL)
    }

    /// The element physically rotated by `theta_deg` about the beam axis.
    pub fn rotated(&self, theta_deg: f64) -> Self {
        let fwd = jones_to_mueller(&rotation_jones(theta_deg)).0;
        let back = jones_to_mueller(&rotation_jones(-theta_deg)).0;
        MuellerMatrix(fwd * self.0 * back)
    }

    /// Intensity extinction ratio `T_max / T_min` read off the first row.
    /// Infinite for an ideal polarizer.
    pub fn extinction_ratio(&self) -> f64 {
        let m00 = self.0[(0, 0)];
        let d = (self.0[(0, 1)].powi(2) + self.0[(0, 2)].powi(2) + self.0[(0, 3)].powi(2)).sqrt();
        let t_min = m00 - d;
        if t_min <= 1e-12 * m00 {
            f64::INFINITY
        } else {
            (m00 + d) / t_min
        }
    }

    pub fn max_abs_diff(&self, other: &MuellerMatrix) -> f64 {
        (self.0 - other.0)
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_distance(&self, other: &MuellerMatrix) -> f64 {
        (self.0 - other.0).norm()
    }
}

/// Optical element type, before orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementKind {
    IdealPolarizer,
    /// Pure diattenuator with intensity extinction ratio `extinction ≥ 1`.
    PartialPolarizer {
        extinction: f64,
    },
    /// Linear retarder; `retardance` in radians is the extra phase of the slow axis.
    Retarder {
        retardance: f64,
    },
}

/// An oriented optical element. `theta_deg` is kept reduced to `[0, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolElementSpec", into = "PolElementSpec")]
pub struct PolElement {
    kind: ElementKind,
    theta_deg: f64,
}

impl PolElement {
    pub fn new(kind: ElementKind, theta_deg: f64) -> Result<Self> {
        match kind {
            ElementKind::PartialPolarizer { extinction }
                if !(extinction >= 1.0) || !extinction.is_finite() =>
            {
                return Err(Error::InvalidExtinction(extinction));
            }
            _ => {}
        }
        Ok(PolElement {
            kind,
            theta_deg: reduce_angle(theta_deg),
        })
    }

    pub fn polarizer(theta_deg: f64) -> Self {
        PolElement {
            kind: ElementKind::IdealPolarizer,
            theta_deg: reduce_angle(theta_deg),
        }
    }

    pub fn partial_polarizer(extinction: f64, theta_deg: f64) -> Result<Self> {
        Self::new(ElementKind::PartialPolarizer { extinction }, theta_deg)
    }

    pub fn retarder(retardance: f64, theta_deg: f64) -> Self {
        PolElement {
            kind: ElementKind::Retarder { retardance },
            theta_deg: reduce_angle(theta_deg),
        }
    }

    /// Quarter-wave plate with its fast axis at `theta_deg`.
    pub fn qwp(theta_deg: f64) -> Self {
        Self::retarder(FRAC_PI_2, theta_deg)
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta_deg
    }

    /// Same element at a different orientation.
    pub fn with_theta(&self, theta_deg: f64) -> Self {
        PolElement {
            kind: self.kind,
            theta_deg: reduce_angle(theta_deg),
        }
    }
}

/// Reduce an angle in degrees to `[0, 180)`.
pub fn reduce_angle(theta_deg: f64) -> f64 {
    let r = theta_deg.rem_euclid(180.0);
    // rem_euclid can round up to exactly 180 for tiny negative inputs
    if r >= 180.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindTag {
    IdealPolarizer,
    PartialPolarizer,
    Retarder,
    Qwp,
}

/// Flat textual form of a [`PolElement`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolElementSpec {
    kind: KindTag,
    angle_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extinction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    retardance_rad: Option<f64>,
}

impl TryFrom<PolElementSpec> for PolElement {
    type Error = Error;

    fn try_from(spec: PolElementSpec) -> Result<Self> {
        let kind = match spec.kind {
            KindTag::IdealPolarizer => ElementKind::IdealPolarizer,
            KindTag::PartialPolarizer => ElementKind::PartialPolarizer {
                extinction: spec.extinction.ok_or_else(|| {
                    Error::InvalidConfig("partial_polarizer requires `extinction`".into())
                })?,
            },
            KindTag::Retarder => ElementKind::Retarder {
                retardance: spec.retardance_rad.ok_or_else(|| {
                    Error::InvalidConfig("retarder requires `retardance_rad`".into())
                })?,
            },
            KindTag::Qwp => ElementKind::Retarder {
                retardance: spec.retardance_rad.unwrap_or(FRAC_PI_2),
            },
        };
        if !spec.angle_deg.is_finite() {
            return Err(Error::InvalidConfig("angle_deg must be finite".into()));
        }
        PolElement::new(kind, spec.angle_deg)
    }
}

impl From<PolElement> for PolElementSpec {
    fn from(e: PolElement) -> Self {
        let (kind, extinction, retardance_rad) = match e.kind {
            ElementKind::IdealPolarizer => (KindTag::IdealPolarizer, None, None),
            ElementKind::PartialPolarizer { extinction } => {
                (KindTag::PartialPolarizer, Some(extinction), None)
            }
            ElementKind::Retarder { retardance } => (KindTag::Retarder, None, Some(retardance)),
        };
        PolElementSpec {
            kind,
            angle_deg: e.theta_deg,
            extinction,
            retardance_rad,
        }
    }
}

/// Rotation of the transverse frame by `theta_deg`.
pub fn rotation_jones(theta_deg: f64) -> JonesMatrix {
    let (s, co) = theta_deg.to_radians().sin_cos();
    JonesMatrix(Matrix2::new(c(co), c(-s), c(s), c(co)))
}

fn element_jones_unrotated(kind: ElementKind) -> Matrix2<C64> {
    match kind {
        ElementKind::IdealPolarizer => Matrix2::new(c(0.0), c(0.0), c(0.0), c(1.0)),
        ElementKind::PartialPolarizer { extinction } => {
            Matrix2::new(c(1.0 / extinction.sqrt()), c(0.0), c(0.0), c(1.0))
        }
        ElementKind::Retarder { retardance } => {
            Matrix2::new(C64::from_polar(1.0, retardance), c(0.0), c(0.0), c(1.0))
        }
    }
}

/// Jones matrix of an oriented element, `R(θ) J0 R(−θ)`.
pub fn element_jones(e: &PolElement) -> JonesMatrix {
    let r = rotation_jones(e.theta_deg).0;
    let r_inv = rotation_jones(-e.theta_deg).0;
    JonesMatrix(r * element_jones_unrotated(e.kind) * r_inv)
}

/// Jones matrix of elements listed in traversal order (first element is
/// met first, so it ends up rightmost in the product).
pub fn compose(elements: &[PolElement]) -> Result<JonesMatrix> {
    if elements.is_empty() {
        return Err(Error::EmptyElements);
    }
    Ok(compose_or_identity(elements))
}

/// Like [`compose`], but an empty list is the identity (no element in the path).
pub fn compose_or_identity(elements: &[PolElement]) -> JonesMatrix {
    elements.iter().fold(JonesMatrix::identity(), |acc, e| {
        element_jones(e).then_after(&acc)
    })
}

/// Mueller matrix of a non-depolarizing element,
/// `M_ij = ½ tr(σ_i J σ_j J†)`.
pub fn jones_to_mueller(j: &JonesMatrix) -> MuellerMatrix {
    let basis = stokes_basis();
    let jm = j.0;
    let jd = jm.adjoint();
    MuellerMatrix(Matrix4::from_fn(|i, k| {
        0.5 * (basis[i] * jm * basis[k] * jd).trace().re
    }))
}

/// Choi representation of a Mueller matrix.
#[derive(Debug, Clone)]
pub struct ChoiMatrix {
    /// `Σ_ij |i⟩⟨j| ⊗ Λ(|i⟩⟨j|)`, row index `2·input + output`.
    pub matrix: Matrix4<C64>,
    /// Whether the map is completely positive (Choi PSD within [`CHOI_PSD_TOL`]).
    pub physical: bool,
    pub eigenvalues: [f64; 4],
}

impl ChoiMatrix {
    /// Kraus operators from the eigendecomposition; eigenvalues below
    /// [`CHOI_PSD_TOL`] (including negative ones) are dropped.
    pub fn kraus(&self) -> Vec<JonesMatrix> {
        let eig = SymmetricEigen::new(hermitize4(&self.matrix));
        let mut out = Vec::new();
        for k in 0..4 {
            let lambda = eig.eigenvalues[k];
            if lambda <= CHOI_PSD_TOL {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            let scale = lambda.sqrt();
            let op = Matrix2::from_fn(|out_idx, in_idx| v[2 * in_idx + out_idx] * scale);
            out.push(JonesMatrix(op));
        }
        out
    }

    /// Number of eigenvalues above tolerance.
    pub fn rank(&self) -> usize {
        self.eigenvalues
            .iter()
            .filter(|&&l| l > CHOI_PSD_TOL)
            .count()
    }
}

fn hermitize4(m: &Matrix4<C64>) -> Matrix4<C64> {
    (m + m.adjoint()) * c(0.5)
}

/// Choi matrix of the single-photon map described by a Mueller matrix.
///
/// Non-physical inputs are flagged through [`ChoiMatrix::physical`], not rejected.
pub fn mueller_to_choi(m: &MuellerMatrix) -> ChoiMatrix {
    let basis = stokes_basis();
    let mut choi = Matrix4::<C64>::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let mut unit = Matrix2::<C64>::zeros();
            unit[(i, j)] = c(1.0);
            // complex "Stokes" coefficients of |i><j|
            let s: [C64; 4] = std::array::from_fn(|k| (unit * basis[k]).trace());
            let mut image = Matrix2::<C64>::zeros();
            for a in 0..4 {
                let coeff: C64 = (0..4).map(|b| s[b] * m.0[(a, b)]).sum();
                image += basis[a] * (coeff * 0.5);
            }
            for a in 0..2 {
                for b in 0..2 {
                    choi[(2 * i + a, 2 * j + b)] = image[(a, b)];
                }
            }
        }
    }
    let eig = SymmetricEigen::new(hermitize4(&choi));
    let eigenvalues = [
        eig.eigenvalues[0],
        eig.eigenvalues[1],
        eig.eigenvalues[2],
        eig.eigenvalues[3],
    ];
    let physical = eigenvalues.iter().all(|&l| l >= -CHOI_PSD_TOL);
    ChoiMatrix {
        matrix: choi,
        physical,
        eigenvalues,
    }
}
