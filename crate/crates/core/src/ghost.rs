//! The nonlocal measurement engine.
//!
//! The signal photon passes a sample and then the fixed probe transformation
//! before a polarization-blind detector; together these form a trace
//! non-increasing map with Kraus operators `K_k`. The idler photon is
//! analyzed by a projector with Jones matrix `J`. The engine works with the
//! joint (unconditioned) coincidence probability
//! `Σ_k tr[(K_k ⊗ J) ρ0 (K_k ⊗ J)†]` and also exposes the value conditioned
//! on a signal detection.

use nalgebra::{Matrix2, Matrix4, SymmetricEigen};
use rayon::prelude::*;
use std::io::{self, Write};

use crate::polcalc::{
    compose_or_identity, element_jones, mueller_to_choi, JonesMatrix, MuellerMatrix, PolElement,
};
use crate::qstate::{kron2, partial_trace, Subsystem, TwoQubitDensity};
use crate::{Error, Result, C64};

const TRACE_NON_INCREASING_TOL: f64 = 1e-9;

/// Signal-arm map: sample followed by the probe transformation.
#[derive(Debug, Clone)]
pub struct ProbeTransform {
    kraus: Vec<JonesMatrix>,
}

impl ProbeTransform {
    /// Checks `Σ K†K ≤ I`.
    pub fn new(kraus: Vec<JonesMatrix>) -> Result<Self> {
        let sum = kraus
            .iter()
            .fold(Matrix2::<C64>::zeros(), |acc, k| acc + k.0.adjoint() * k.0);
        let largest = SymmetricEigen::new(sum).eigenvalues.max();
        if largest > 1.0 + TRACE_NON_INCREASING_TOL {
            return Err(Error::InvalidConfig(format!(
                "signal map amplifies (largest eigenvalue of sum K†K is {largest})"
            )));
        }
        Ok(ProbeTransform { kraus })
    }

    pub fn identity() -> Self {
        ProbeTransform {
            kraus: vec![JonesMatrix::identity()],
        }
    }

    pub fn from_jones(j: JonesMatrix) -> Result<Self> {
        Self::new(vec![j])
    }

    /// Sample followed by the probe projector `pp`.
    pub fn for_sample(sample: &Sample, pp: &JonesMatrix) -> Result<Self> {
        let kraus = sample
            .kraus()?
            .into_iter()
            .map(|k| pp.then_after(&k))
            .collect();
        Self::new(kraus)
    }

    pub fn kraus(&self) -> &[JonesMatrix] {
        &self.kraus
    }
}

/// An object placed in the signal arm.
#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    /// Nothing in the path.
    Empty,
    Element(PolElement),
    /// Arbitrary Mueller matrix; must be completely positive to be simulated.
    Mueller(MuellerMatrix),
}

impl Sample {
    pub fn kraus(&self) -> Result<Vec<JonesMatrix>> {
        match self {
            Sample::Empty => Ok(vec![JonesMatrix::identity()]),
            Sample::Element(e) => Ok(vec![element_jones(e)]),
            Sample::Mueller(m) => {
                let choi = mueller_to_choi(m);
                if !choi.physical {
                    return Err(Error::NonPhysicalMueller);
                }
                Ok(choi.kraus())
            }
        }
    }

    /// The sample physically rotated so that its reference axis sits at `theta_deg`.
    pub fn at_angle(&self, theta_deg: f64) -> Sample {
        match self {
            Sample::Empty => Sample::Empty,
            Sample::Element(e) => Sample::Element(e.with_theta(theta_deg)),
            Sample::Mueller(m) => Sample::Mueller(m.rotated(theta_deg)),
        }
    }
}

/// A family of samples generated by rotating one object.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Ideal linear polarizer.
    Lp,
    /// Quarter-wave plate.
    Qwp,
    Custom {
        label: String,
        sample: Sample,
    },
}

impl Family {
    pub fn label(&self) -> &str {
        match self {
            Family::Lp => "LP",
            Family::Qwp => "QWP",
            Family::Custom { label, .. } => label,
        }
    }

    pub fn sample_at(&self, theta_deg: f64) -> Sample {
        match self {
            Family::Lp => Sample::Element(PolElement::polarizer(theta_deg)),
            Family::Qwp => Sample::Element(PolElement::qwp(theta_deg)),
            Family::Custom { sample, .. } => sample.at_angle(theta_deg),
        }
    }
}

/// `ρ_r = Σ_k tr_signal[(K_k ⊗ I) ρ0 (K_k ⊗ I)†]` and its trace, the
/// probability that the signal photon is transmitted.
pub fn heralded_idler(rho0: &TwoQubitDensity, probe: &ProbeTransform) -> (Matrix2<C64>, f64) {
    let id = Matrix2::<C64>::identity();
    let mut out = Matrix2::<C64>::zeros();
    for k in &probe.kraus {
        let op = kron2(&k.0, &id);
        out += partial_trace(&(op * rho0.matrix() * op.adjoint()), Subsystem::Signal);
    }
    let out = (out + out.adjoint()) * C64::new(0.5, 0.0);
    let herald = out.trace().re.clamp(0.0, 1.0);
    (out, herald)
}

/// Joint and heralding probabilities for one idler projector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coincidence {
    pub joint: f64,
    pub herald: f64,
}

impl Coincidence {
    /// Coincidence probability conditioned on a signal detection.
    pub fn conditional(&self) -> Result<f64> {
        if self.herald <= 0.0 {
            return Err(Error::Unheraldable);
        }
        Ok((self.joint / self.herald).clamp(0.0, 1.0))
    }
}

fn joint_operator_probability(rho0: &Matrix4<C64>, op: &Matrix4<C64>) -> f64 {
    (op * rho0 * op.adjoint()).trace().re
}

pub fn coincidence_probability(
    rho0: &TwoQubitDensity,
    probe: &ProbeTransform,
    idler_projector: &JonesMatrix,
) -> Coincidence {
    let joint: f64 = probe
        .kraus
        .iter()
        .map(|k| joint_operator_probability(rho0.matrix(), &kron2(&k.0, &idler_projector.0)))
        .sum();
    let (_, herald) = heralded_idler(rho0, probe);
    Coincidence {
        joint: joint.clamp(0.0, 1.0),
        herald,
    }
}

/// Which probability forms the response coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResponseMode {
    /// Unconditioned coincidence probability (what raw counts measure).
    #[default]
    Joint,
    /// Conditioned on the signal detection.
    Heralded,
}

/// One sample of a response curve. `coords` equal `raw` until the dataset
/// is normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub theta_deg: f64,
    pub raw: Vec<f64>,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseCurve {
    pub label: String,
    pub points: Vec<CurvePoint>,
}

impl ResponseCurve {
    pub fn dimension(&self) -> usize {
        self.points.first().map_or(0, |p| p.raw.len())
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.theta_deg).collect()
    }

    /// CSV with columns `theta_deg, P1..Pn, raw1..rawn`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.dimension();
        let mut header = vec!["theta_deg".to_string()];
        header.extend((1..=n).map(|k| format!("P{k}")));
        header.extend((1..=n).map(|k| format!("raw{k}")));
        writeln!(w, "{}", header.join(","))?;
        for p in &self.points {
            let mut row = vec![p.theta_deg.to_string()];
            row.extend(p.coords.iter().map(|v| v.to_string()));
            row.extend(p.raw.iter().map(|v| v.to_string()));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `n` evenly spaced angles `0, 180/n, …` covering one period.
pub fn default_grid(step_deg: f64) -> Vec<f64> {
    let n = (180.0 / step_deg).round() as usize;
    (0..n).map(|i| i as f64 * step_deg).collect()
}

/// Everything needed to map a sample family into the response space.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub family: Family,
    pub grid: Vec<f64>,
    /// Probe transformation elements in traversal order; empty means none.
    pub probe: Vec<PolElement>,
    /// Idler projectors, each a list of elements in traversal order.
    pub projectors: Vec<Vec<PolElement>>,
    pub mode: ResponseMode,
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let in_range = grid
        .iter()
        .all(|t| t.is_finite() && (0.0..180.0).contains(t));
    let increasing = grid.windows(2).all(|w| w[0] < w[1]);
    if !in_range || !increasing {
        return Err(Error::InvalidGrid);
    }
    Ok(())
}

/// Raw probability vector of one sample, one entry per idler projector.
pub fn response_at(
    rho0: &TwoQubitDensity,
    sample: &Sample,
    probe: &JonesMatrix,
    projectors: &[JonesMatrix],
    mode: ResponseMode,
) -> Result<Vec<f64>> {
    let transform = ProbeTransform::for_sample(sample, probe)?;
    projectors
        .iter()
        .map(|j| {
            let c = coincidence_probability(rho0, &transform, j);
            match mode {
                ResponseMode::Joint => Ok(c.joint),
                ResponseMode::Heralded => c.conditional(),
            }
        })
        .collect()
}

/// Raw (unnormalized) response curve of a family over a theta grid.
pub fn sweep_family(rho0: &TwoQubitDensity, spec: &SweepSpec) -> Result<ResponseCurve> {
    validate_grid(&spec.grid)?;
    if spec.projectors.is_empty() {
        return Err(Error::InvalidConfig("no idler projectors".into()));
    }
    let probe = compose_or_identity(&spec.probe);
    let projectors: Vec<JonesMatrix> = spec
        .projectors
        .iter()
        .map(|p| compose_or_identity(p))
        .collect();
    let points = spec
        .grid
        .par_iter()
        .map(|&theta| {
            let raw = response_at(
                rho0,
                &spec.family.sample_at(theta),
                &probe,
                &projectors,
                spec.mode,
            )?;
            Ok(CurvePoint {
                theta_deg: theta,
                coords: raw.clone(),
                raw,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResponseCurve {
        label: spec.family.label().to_string(),
        points,
    })
}

/// Raw probabilities at or below this are rounding residue (e.g. crossed
/// polarizers), not signal.
pub const NUMERICAL_ZERO: f64 = 1e-14;

/// Divide every coordinate of every curve by the single largest raw value
/// in the whole dataset.
pub fn normalize_dataset(mut curves: Vec<ResponseCurve>) -> Result<Vec<ResponseCurve>> {
    let max = curves
        .iter()
        .flat_map(|c| c.points.iter())
        .flat_map(|p| p.raw.iter().copied())
        .fold(0.0, f64::max);
    if !(max > NUMERICAL_ZERO) {
        return Err(Error::AllZeroDataset);
    }
    for p in curves.iter_mut().flat_map(|c| c.points.iter_mut()) {
        p.coords = p.raw.iter().map(|v| v / max).collect();
    }
    Ok(curves)
}
