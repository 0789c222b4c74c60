//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Each criterion also has a wall-clock budget.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{Matrix2, Matrix4, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use ghostpol::countsim::{write_runs_csv, CountModel};
use ghostpol::discern::{run_experiment, separable, summarize, ExperimentOutput, SampleStats};
use ghostpol::ghost::{
    coincidence_probability, default_grid, response_at, Family, ProbeTransform, ResponseMode,
    Sample, SweepSpec,
};
use ghostpol::optproj::{
    nearest_feasible, objective_min_separation, optimize, ElementOrder, FreeVar,
    OptimizationConfig, ParamField, ProjectorParam,
};
use ghostpol::polcalc::{
    compose, compose_or_identity, jones_to_mueller, reduce_angle, JonesMatrix, MuellerMatrix,
    PolElement,
};
use ghostpol::qstate::{
    bell_psi_plus, concurrence, metrics, psi_plus_vector, werner_mix, TwoQubitDensity,
};
use ghostpol::tomo::{exact_records, reconstruct_mle, simulate_tomography, write_records_csv};
use ghostpol::C64;

type Check = std::result::Result<String, String>;

const REFERENCE_PROBE_3D: [[f64; 4]; 4] = [
    [0.5000, -0.5000, 0.0, 0.0],
    [-0.1563, 0.1563, 0.0, 0.0],
    [0.2318, -0.2318, 0.0, 0.0],
    [0.4145, -0.4145, 0.0, 0.0],
];

const REFERENCE_PROBE_2D: [[f64; 4]; 4] = [
    [0.6351, -0.3649, 0.0, 0.0],
    [-0.1141, 0.1986, -0.2410, 0.4310],
    [0.1691, -0.2944, 0.3573, 0.2907],
    [0.3025, -0.5266, -0.2907, 0.0],
];

fn ensure(cond: bool, msg: String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn c1_reference_probe_3d() -> Check {
    let j = compose(&[PolElement::polarizer(90.0), PolElement::qwp(62.0)])
        .map_err(|e| e.to_string())?;
    let dev = jones_to_mueller(&j).max_abs_diff(&MuellerMatrix::from_rows(REFERENCE_PROBE_3D));
    ensure(dev < 1e-3, format!("max deviation {dev:.2e} >= 1e-3"))?;
    Ok(format!("max elementwise deviation {dev:.2e} (tol 1e-3)"))
}

fn c2_reference_probe_2d() -> Check {
    let pp = PolElement::partial_polarizer(3.7, 90.0).map_err(|e| e.to_string())?;
    let m = jones_to_mueller(&compose(&[pp, PolElement::qwp(62.0)]).map_err(|e| e.to_string())?);
    let reference = MuellerMatrix::from_rows(REFERENCE_PROBE_2D);
    let row = m.rows()[0];
    let row_dev = row
        .iter()
        .zip(REFERENCE_PROBE_2D[0])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let full_dev = m.max_abs_diff(&reference);
    let k = reference.extinction_ratio();
    ensure(
        row_dev < 5e-3,
        format!("first-row deviation {row_dev:.2e} >= 5e-3"),
    )?;
    ensure(
        (k - 3.70).abs() <= 0.02,
        format!("back-solved extinction {k:.4} not 3.70 +- 0.02"),
    )?;
    Ok(format!(
        "first row dev {row_dev:.2e} (tol 5e-3); full-matrix max dev {full_dev:.2e}; \
         back-solved extinction {k:.4}"
    ))
}

/// Wootters concurrence from the eigenvalues of ρ ρ̃ (complex Schur form).
fn wootters_oracle(rho: &Matrix4<C64>) -> f64 {
    let z = C64::new(0.0, 0.0);
    let sy = Matrix2::new(z, -C64::i(), C64::i(), z);
    let mut yy = Matrix4::<C64>::zeros();
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    yy[(2 * a + b, 2 * c + d)] = sy[(a, c)] * sy[(b, d)];
                }
            }
        }
    }
    let tilde = yy * rho.map(|x| x.conj()) * yy;
    let eig = Schur::new(rho * tilde)
        .eigenvalues()
        .expect("complex Schur");
    let mut l: Vec<f64> = eig.iter().map(|e| e.re.max(0.0).sqrt()).collect();
    l.sort_by(|a, b| b.total_cmp(a));
    (l[0] - l[1] - l[2] - l[3]).max(0.0)
}

fn c3_metrics() -> Check {
    let w = werner_mix(0.92).map_err(|e| e.to_string())?;
    let c = concurrence(&w);
    let oracle = wootters_oracle(w.matrix());
    ensure(
        (c - 0.88).abs() <= 1e-6 && (oracle - 0.88).abs() <= 1e-6,
        format!("Werner concurrence {c} / oracle {oracle}"),
    )?;

    let m = metrics(&bell_psi_plus(), &psi_plus_vector()).map_err(|e| e.to_string())?;
    ensure(
        (m.concurrence - 1.0).abs() < 1e-9
            && m.linear_entropy.abs() < 1e-9
            && (m.fidelity - 1.0).abs() < 1e-9,
        format!("Psi+ metrics {m:?}"),
    )?;

    // explicit matrix loaded from real/imaginary parts: dephased Bell state
    // with a relative phase, p|ψφ⟩⟨ψφ| + (1−p)/2 (|HV⟩⟨HV| + |VH⟩⟨VH|)
    let (p, phi) = (0.897f64, 0.4696f64);
    let mut re = [[0.0; 4]; 4];
    let mut im = [[0.0; 4]; 4];
    re[1][1] = 0.5;
    re[2][2] = 0.5;
    re[1][2] = 0.5 * p * phi.cos();
    re[2][1] = re[1][2];
    im[1][2] = -0.5 * p * phi.sin();
    im[2][1] = -im[1][2];
    let rho = TwoQubitDensity::from_re_im(re, im, false).map_err(|e| e.to_string())?;
    let m = metrics(&rho, &psi_plus_vector()).map_err(|e| e.to_string())?;
    let (c_ref, le_ref, f_ref) = (p, 2.0 / 3.0 * (1.0 - p * p), 0.5 * (1.0 + p * phi.cos()));
    let loaded_oracle = wootters_oracle(rho.matrix());
    ensure(
        (m.concurrence - c_ref).abs() < 1e-9
            && (loaded_oracle - c_ref).abs() < 1e-9
            && (m.linear_entropy - le_ref).abs() < 1e-9
            && (m.fidelity - f_ref).abs() < 1e-9,
        format!("loaded matrix metrics {m:?} vs ({c_ref}, {le_ref}, {f_ref})"),
    )?;
    Ok(format!(
        "Werner(0.92) C = {c:.9} (oracle {oracle:.9}); Psi+ = (1, 0, 1); loaded matrix \
         (C, S_L, F) = ({:.3}, {:.3}, {:.3})",
        m.concurrence, m.linear_entropy, m.fidelity
    ))
}

fn random_element(rng: &mut ChaCha8Rng) -> PolElement {
    let theta = rng.random_range(0.0..180.0);
    match rng.random_range(0..3) {
        0 => PolElement::polarizer(theta),
        1 => PolElement::partial_polarizer(rng.random_range(1.0..20.0), theta).unwrap(),
        _ => PolElement::retarder(rng.random_range(0.0..std::f64::consts::TAU), theta),
    }
}

fn random_elements(rng: &mut ChaCha8Rng, max: usize) -> Vec<PolElement> {
    let n = rng.random_range(1..=max);
    (0..n).map(|_| random_element(rng)).collect()
}

fn random_state(rng: &mut ChaCha8Rng) -> TwoQubitDensity {
    let g = Matrix4::<C64>::from_fn(|_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    TwoQubitDensity::new(g * g.adjoint(), true).unwrap()
}

/// `Σ_m w_m tr[(A_m ⊗ P) ρ (A_m ⊗ P)†]` with explicit index sums.
fn brute_joint(rho: &Matrix4<C64>, terms: &[(f64, Matrix2<C64>)], proj: &Matrix2<C64>) -> f64 {
    let mut total = 0.0;
    for (w, a) in terms {
        let op = |r: usize, c: usize| a[(r / 2, c / 2)] * proj[(r % 2, c % 2)];
        let mut s = C64::new(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    s += op(i, j) * rho[(j, k)] * op(i, k).conj();
                }
            }
        }
        total += w * s.re;
    }
    total
}

fn c4_ghost_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut mixtures = 0;
    for trial in 0..1000 {
        let rho = random_state(&mut rng);
        let probe = compose(&random_elements(&mut rng, 3)).unwrap();
        let proj = compose(&random_elements(&mut rng, 2)).unwrap();
        // half the samples are single elements, half depolarizing mixtures
        let (sample, terms): (Sample, Vec<(f64, JonesMatrix)>) = if trial % 2 == 0 {
            let e = random_element(&mut rng);
            (Sample::Element(e), vec![(1.0, compose(&[e]).unwrap())])
        } else {
            mixtures += 1;
            let parts: Vec<JonesMatrix> = (0..3)
                .map(|_| compose(&random_elements(&mut rng, 2)).unwrap())
                .collect();
            let mut w: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            let m = parts
                .iter()
                .zip(&w)
                .fold(Matrix4::<f64>::zeros(), |acc, (j, wi)| {
                    acc + jones_to_mueller(j).0 * *wi
                });
            (
                Sample::Mueller(MuellerMatrix(m)),
                w.into_iter().zip(parts).collect(),
            )
        };
        let transform = ProbeTransform::for_sample(&sample, &probe).map_err(|e| e.to_string())?;
        let got = coincidence_probability(&rho, &transform, &proj).joint;
        let terms: Vec<(f64, Matrix2<C64>)> =
            terms.iter().map(|(w, j)| (*w, probe.0 * j.0)).collect();
        let want = brute_joint(rho.matrix(), &terms, &proj.0);
        worst = worst.max((got - want).abs());
    }
    ensure(
        worst <= 1e-12,
        format!("max |difference| {worst:.2e} > 1e-12"),
    )?;
    Ok(format!(
        "1000 tuples ({mixtures} depolarizing), max |difference| {worst:.2e} (tol 1e-12)"
    ))
}

fn measured_probe_3d() -> Vec<PolElement> {
    vec![PolElement::polarizer(90.0), PolElement::qwp(62.0)]
}

fn measured_probe_2d() -> Vec<PolElement> {
    vec![
        PolElement::partial_polarizer(3.7, 90.0).unwrap(),
        PolElement::qwp(62.0),
    ]
}

fn measured_projectors(n: usize) -> Vec<Vec<PolElement>> {
    [(170.0, 7.5), (18.0, 110.0), (45.0, 34.0)]
        .iter()
        .take(n)
        .map(|&(q, l)| ProjectorParam::new(q, l).elements().unwrap())
        .collect()
}

fn c5_periodicity() -> Check {
    let rho = werner_mix(0.92).unwrap();
    let probe = compose_or_identity(&measured_probe_3d());
    let projs: Vec<JonesMatrix> = measured_projectors(3)
        .iter()
        .map(|p| compose_or_identity(p))
        .collect();
    let mut worst: f64 = 0.0;
    let mut summary = Vec::new();
    for family in [Family::Lp, Family::Qwp] {
        let pts: Vec<Vec<f64>> = (0..180)
            .map(|t| {
                let a = response_at(
                    &rho,
                    &family.sample_at(t as f64),
                    &probe,
                    &projs,
                    ResponseMode::Joint,
                )
                .unwrap();
                let b = response_at(
                    &rho,
                    &family.sample_at(t as f64 + 180.0),
                    &probe,
                    &projs,
                    ResponseMode::Joint,
                )
                .unwrap();
                worst = a
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| (x - y).abs())
                    .fold(worst, f64::max);
                a
            })
            .collect();
        let dist = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let max_step = pts
            .windows(2)
            .map(|w| dist(&w[0], &w[1]))
            .fold(0.0, f64::max);
        let closing = dist(&pts[179], &pts[0]);
        let spread = pts.iter().map(|p| dist(p, &pts[0])).fold(0.0, f64::max);
        ensure(
            closing <= max_step && spread > 10.0 * max_step,
            format!("{} curve not a closed loop: closing {closing:.3e}, max step {max_step:.3e}, extent {spread:.3e}", family.label()),
        )?;
        summary.push(format!(
            "{} closing step {closing:.2e} <= max step {max_step:.2e}",
            family.label()
        ));
    }
    ensure(
        worst <= 1e-12,
        format!("periodicity deviation {worst:.2e} > 1e-12"),
    )?;
    Ok(format!(
        "max |P(t) - P(t+180)| {worst:.2e}; {}",
        summary.join("; ")
    ))
}

fn c6_tomography() -> Check {
    let res = reconstruct_mle(&exact_records(&bell_psi_plus(), 1e6)).map_err(|e| e.to_string())?;
    let f = metrics(&res.rho, &psi_plus_vector()).unwrap().fidelity;
    ensure(f >= 0.9999, format!("exact Psi+ fidelity {f}"))?;
    let w = werner_mix(0.92).unwrap();
    let model = CountModel::ideal(1e6, 1.0);
    let mut cs = Vec::new();
    for seed in 0..10 {
        let recs = simulate_tomography(&w, &model, seed).map_err(|e| e.to_string())?;
        cs.push(concurrence(
            &reconstruct_mle(&recs).map_err(|e| e.to_string())?.rho,
        ));
    }
    let worst = cs.iter().map(|c| (c - 0.88).abs()).fold(0.0, f64::max);
    ensure(worst <= 0.02, format!("concurrences {cs:?}"))?;
    let (lo, hi) = cs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &c| {
            (l.min(c), h.max(c))
        });
    Ok(format!(
        "exact Psi+ fidelity {f:.6}; Werner(0.92) concurrence over 10 seeds in [{lo:.4}, {hi:.4}]"
    ))
}

fn c7_ci_coverage() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let truth = [0.3, 0.55, 0.8];
    let sigma = [0.01, 0.05, 0.2];
    let trials = 10_000;
    let mut hits = [0usize; 3];
    for _ in 0..trials {
        let pts: Vec<Vec<f64>> = (0..8)
            .map(|_| {
                (0..3)
                    .map(|j| Normal::new(truth[j], sigma[j]).unwrap().sample(&mut rng))
                    .collect()
            })
            .collect();
        let s: SampleStats = summarize(&pts).map_err(|e| e.to_string())?;
        for j in 0..3 {
            if (s.mean[j] - truth[j]).abs() <= s.ci95[j] {
                hits[j] += 1;
            }
        }
    }
    let cov: Vec<f64> = hits.iter().map(|&h| h as f64 / trials as f64).collect();
    ensure(
        cov.iter().all(|c| (c - 0.95).abs() <= 0.02),
        format!("coverage {cov:?}"),
    )?;
    Ok(format!(
        "per-axis coverage {:.4}, {:.4}, {:.4} over 10^4 trials",
        cov[0], cov[1], cov[2]
    ))
}

fn experiment(dim: usize, integration_time: f64, seed: u64) -> ExperimentOutput {
    let probe = if dim == 3 {
        measured_probe_3d()
    } else {
        measured_probe_2d()
    };
    let specs: Vec<SweepSpec> = [Family::Lp, Family::Qwp]
        .into_iter()
        .map(|family| SweepSpec {
            family,
            grid: default_grid(1.0),
            probe: probe.clone(),
            projectors: measured_projectors(dim),
            mode: ResponseMode::Joint,
        })
        .collect();
    let model = CountModel {
        integration_time,
        ..CountModel::default()
    };
    run_experiment(&werner_mix(0.92).unwrap(), &specs, &model, 8, seed).unwrap()
}

/// Every pair of kept samples (within and across families) is separable.
fn kept_pairwise_separable(out: &ExperimentOutput) -> bool {
    let kept: Vec<_> = out
        .report
        .families
        .iter()
        .flat_map(|f| f.family.kept.iter().map(|&i| f.family.stats[i].region()))
        .collect();
    kept.iter()
        .enumerate()
        .all(|(i, a)| kept[i + 1..].iter().all(|b| separable(a, b).unwrap()))
}

fn c8_discrimination() -> Check {
    let times = [0.1, 1.0, 10.0];
    let mut lines = Vec::new();
    let mut post_hoc = (0, 0);
    for dim in [3, 2] {
        for seed in [1u64, 2, 3] {
            let outs: Vec<ExperimentOutput> =
                times.iter().map(|&t| experiment(dim, t, seed)).collect();
            let kept: Vec<usize> = outs.iter().map(|o| o.report.total_kept()).collect();
            ensure(
                kept.windows(2).all(|w| w[0] <= w[1]),
                format!("{dim}D seed {seed}: kept counts {kept:?} not monotone in T"),
            )?;
            for o in &outs {
                post_hoc.1 += 1;
                if kept_pairwise_separable(o) {
                    post_hoc.0 += 1;
                }
            }
            if seed == 1 {
                lines.push(format!("{dim}D kept(T=0.1,1,10) = {kept:?}"));
            }
        }
    }
    ensure(
        post_hoc.0 == post_hoc.1,
        format!("post-hoc separability {}/{}", post_hoc.0, post_hoc.1),
    )?;

    let hi = experiment(3, 100.0, 1);
    let min_step = hi
        .report
        .families
        .iter()
        .filter_map(|f| f.steps.as_ref().map(|s| s.min))
        .fold(f64::INFINITY, f64::min);
    ensure(
        min_step <= 2.0 + 1e-9,
        format!("minimal kept step {min_step} deg at T = 100 s"),
    )?;
    Ok(format!(
        "{}; minimal kept step at T = 100 s: {min_step} deg; post-hoc separable {}/{} runs",
        lines.join("; "),
        post_hoc.0,
        post_hoc.1
    ))
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

fn toy_config() -> OptimizationConfig {
    let mut cfg = OptimizationConfig::new(
        bell_psi_plus(),
        vec![Family::Lp],
        vec![0.0, 60.0],
        ProjectorParam::new(0.0, 0.0),
        vec![
            ProjectorParam::new(0.0, 60.0),
            ProjectorParam::new(0.0, 0.0),
        ],
    );
    cfg.free = Some(vec![FreeVar {
        target: Some(0),
        field: ParamField::LpAngle,
    }]);
    cfg.restarts = 4;
    cfg.max_evaluations = 400;
    cfg.seed = 9;
    cfg
}

fn c9_optimizer() -> Check {
    let target = ProjectorParam::new(62.0, 90.0)
        .with_order(ElementOrder::LpThenQwp)
        .mueller()
        .unwrap();
    let (fit, d) = nearest_feasible(&target);
    let err = angle_diff(fit.qwp_angle, 62.0).max(angle_diff(fit.lp_angle, 90.0));
    ensure(
        err < 0.5 && d < 1e-6,
        format!("fit {fit:?}, distance {d:.2e}"),
    )?;

    let cfg = toy_config();
    let value = |a: f64| {
        let mut projs = cfg.projectors.clone();
        projs[0].lp_angle = reduce_angle(a);
        objective_min_separation(&cfg.probe, &projs, &cfg).unwrap()
    };
    let (oracle, _) =
        (0..1800)
            .map(|i| i as f64 * 0.1)
            .fold((0.0, f64::NEG_INFINITY), |(ba, bv), a| {
                let v = value(a);
                if v > bv {
                    (a, v)
                } else {
                    (ba, bv)
                }
            });
    let res = optimize(&cfg).map_err(|e| e.to_string())?;
    let toy_err = angle_diff(res.projectors[0].lp_angle, oracle);
    ensure(
        toy_err < 0.5,
        format!(
            "toy optimum {} vs oracle {oracle}",
            res.projectors[0].lp_angle
        ),
    )?;
    Ok(format!(
        "nearest_feasible angle error {err:.2e} deg, distance {d:.2e}; toy optimum {:.3} deg vs \
         0.1-deg grid oracle {oracle:.1} deg",
        res.projectors[0].lp_angle
    ))
}

fn experiment_bytes(out: &ExperimentOutput) -> Vec<u8> {
    let mut buf = Vec::new();
    out.report.write_csv(&mut buf).unwrap();
    for (r, c) in out.runs.iter().zip(&out.corrected) {
        write_runs_csv(r, c, &mut buf).unwrap();
    }
    buf.extend(out.report.to_string().into_bytes());
    buf
}

fn c10_determinism() -> Check {
    let pool = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
    };
    let a = pool(1).install(|| experiment_bytes(&experiment(3, 1.0, 42)));
    let b = pool(4).install(|| experiment_bytes(&experiment(3, 1.0, 42)));
    ensure(
        a == b,
        "discrimination outputs differ between reruns".into(),
    )?;
    let c = experiment_bytes(&experiment(3, 1.0, 43));
    ensure(a != c, "different seeds gave identical outputs".into())?;

    let tomo = |seed| {
        let mut buf = Vec::new();
        let recs =
            simulate_tomography(&werner_mix(0.92).unwrap(), &CountModel::default(), seed).unwrap();
        write_records_csv(&recs, &mut buf).unwrap();
        let rho = reconstruct_mle(&recs).unwrap().rho;
        buf.extend(format!("{:?}", rho.to_re_im()).into_bytes());
        buf
    };
    ensure(
        tomo(5) == tomo(5),
        "tomography outputs differ between reruns".into(),
    )?;

    let cfg = toy_config();
    let o1 = pool(1).install(|| optimize(&cfg).unwrap());
    let o2 = pool(4).install(|| optimize(&cfg).unwrap());
    ensure(
        format!("{o1:?}") == format!("{o2:?}"),
        "optimizer traces differ between reruns".into(),
    )?;
    Ok(format!(
        "discrimination ({} bytes), tomography and optimizer outputs byte-identical across reruns and thread counts",
        a.len()
    ))
}

fn main() {
    let criteria: [(&str, u64, fn() -> Check); 10] = [
        ("reference probe matrix, 3D case", 1, c1_reference_probe_3d),
        ("reference probe matrix, 2D case", 1, c2_reference_probe_2d),
        ("entanglement metrics", 1, c3_metrics),
        ("ghost-engine oracle equivalence", 5, c4_ghost_oracle),
        ("periodicity and loop closure", 1, c5_periodicity),
        ("tomography", 60, c6_tomography),
        ("CI coverage", 30, c7_ci_coverage),
        ("discrimination trends", 120, c8_discrimination),
        ("optimizer sanity", 60, c9_optimizer),
        ("determinism", 60, c10_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(*budget);
        let (tag, detail) = match (&outcome, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; runtime over {budget} s budget")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!(
            "[{tag}] criterion {:>2}: {name} ({:.2} s / {budget} s): {detail}",
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
