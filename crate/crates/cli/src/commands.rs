//! The four pipeline commands. Each reads a validated config and writes its
//! artifacts into the output directory.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ghostpol::countsim::{correct_counts, simulate_runs, write_runs_csv};
use ghostpol::discern::{family_seed, run_experiment, DistinguishabilityReport};
use ghostpol::ghost::{
    heralded_idler, normalize_dataset, sweep_family, ProbeTransform, ResponseCurve, SweepSpec,
    NUMERICAL_ZERO,
};
use ghostpol::optproj::optimize;
use ghostpol::polcalc::compose_or_identity;
use ghostpol::qstate::TwoQubitDensity;
use ghostpol::tomo::{
    exact_records, read_records_csv, reconstruct_mle, report_metrics, simulate_tomography,
    write_records_csv, TomographyRecord,
};

use crate::config::{ExperimentConfig, SettingsFragment};
use crate::svg::{self, Glyph, ScatterGroup, Series};
use crate::CliError;

/// Files written by a command plus a short human-readable summary.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

struct OutDir {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write_with<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }

    fn write_str(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.write_with(name, |w| w.write_all(text.as_bytes()))
    }

    fn finish(self, summary: String) -> Outcome {
        Outcome {
            files: self.files,
            summary,
        }
    }
}

/// Family labels may contain anything; file names may not.
fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn herald_column(rho0: &TwoQubitDensity, spec: &SweepSpec) -> Result<Vec<f64>, CliError> {
    let probe = compose_or_identity(&spec.probe);
    spec.grid
        .iter()
        .map(|&t| {
            let transform = ProbeTransform::for_sample(&spec.family.sample_at(t), &probe)?;
            Ok(heralded_idler(rho0, &transform).1)
        })
        .collect()
}

/// Response curves over the configured grid. Noiseless mode writes the
/// normalized model output; noisy mode writes run-averaged corrected counts
/// normalized by their own dataset maximum. `scale` maps `P` back to raw
/// probability (noiseless) or corrected counts (noisy).
pub fn sweep(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let rho0 = cfg.state.build()?;
    let specs = cfg.sweep_specs()?;
    let curves = specs
        .iter()
        .map(|s| sweep_family(&rho0, s))
        .collect::<Result<Vec<_>, _>>()?;
    let heralds = specs
        .iter()
        .map(|s| herald_column(&rho0, s))
        .collect::<Result<Vec<_>, _>>()?;

    let (coords, scale): (Vec<Vec<Vec<f64>>>, f64) = if cfg.sweep.noisy {
        noisy_means(cfg, &curves)?
    } else {
        let scale = dataset_max(
            curves
                .iter()
                .map(|c| c.points.iter().map(|p| p.raw.clone()).collect()),
        );
        let normalized = normalize_dataset(curves.clone())?;
        let coords = normalized
            .iter()
            .map(|c| c.points.iter().map(|p| p.coords.clone()).collect())
            .collect();
        (coords, scale)
    };

    let n = curves.first().map_or(0, ResponseCurve::dimension);
    let mut out = OutDir::create(&cfg.output.dir)?;
    out.write_with("sweep.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["family".to_string(), "theta_deg".into()];
        header.extend((1..=n).map(|k| format!("P{k}")));
        header.extend(["herald".into(), "scale".into()]);
        csv.write_record(&header)?;
        for ((curve, fam_coords), fam_heralds) in curves.iter().zip(&coords).zip(&heralds) {
            for ((p, c), h) in curve.points.iter().zip(fam_coords).zip(fam_heralds) {
                let mut row = vec![curve.label.clone(), p.theta_deg.to_string()];
                row.extend(c.iter().map(f64::to_string));
                row.extend([h.to_string(), scale.to_string()]);
                csv.write_record(&row)?;
            }
        }
        csv.flush()
    })?;

    let series: Vec<Series> = curves
        .iter()
        .zip(&coords)
        .flat_map(|(curve, fam_coords)| {
            (0..n).map(move |k| Series {
                name: format!("{} P{}", curve.label, k + 1),
                points: curve
                    .thetas()
                    .into_iter()
                    .zip(fam_coords.iter().map(|c| c[k]))
                    .collect(),
            })
        })
        .collect();
    let mode = if cfg.sweep.noisy {
        "noisy"
    } else {
        "noiseless"
    };
    out.write_str(
        "sweep.svg",
        &svg::line_plot(
            &format!("Response curves ({mode})"),
            "theta (deg)",
            "normalized P",
            &series,
        ),
    )?;

    let rows: usize = curves.iter().map(|c| c.points.len()).sum();
    Ok(out.finish(format!(
        "sweep ({mode}): {} families, {rows} rows, {n} projectors, scale {scale}\n",
        curves.len()
    )))
}

fn dataset_max(values: impl Iterator<Item = Vec<Vec<f64>>>) -> f64 {
    values.flatten().flatten().fold(0.0, f64::max)
}

fn noisy_means(
    cfg: &ExperimentConfig,
    curves: &[ResponseCurve],
) -> Result<(Vec<Vec<Vec<f64>>>, f64), CliError> {
    let means: Vec<Vec<Vec<f64>>> = curves
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let runs = simulate_runs(c, &cfg.counts, cfg.n_runs, family_seed(cfg.seed, i))?;
            let corrected = correct_counts(&runs, &cfg.counts)?;
            let n_runs = corrected.values.len() as f64;
            Ok((0..c.points.len())
                .map(|t| {
                    (0..c.dimension())
                        .map(|k| corrected.values.iter().map(|run| run[t][k]).sum::<f64>() / n_runs)
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_, ghostpol::Error>>()?;
    let scale = dataset_max(means.iter().cloned());
    if !(scale > NUMERICAL_ZERO) {
        return Err(ghostpol::Error::AllZeroDataset.into());
    }
    let coords = means
        .into_iter()
        .map(|fam| {
            fam.into_iter()
                .map(|c| c.into_iter().map(|v| v / scale).collect())
                .collect()
        })
        .collect();
    Ok((coords, scale))
}

/// Full pipeline: sweep, simulate runs, correct, summarize and discriminate.
pub fn discriminate(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let rho0 = cfg.state.build()?;
    let specs = cfg.sweep_specs()?;
    let exp = run_experiment(&rho0, &specs, &cfg.counts, cfg.n_runs, cfg.seed)?;

    let mut out = OutDir::create(&cfg.output.dir)?;
    out.write_with("report.csv", |w| exp.report.write_csv(w))?;
    let summary = format!(
        "seed {}, {} runs, scale {}\n{}",
        cfg.seed, cfg.n_runs, exp.scale, exp.report
    );
    out.write_str("summary.txt", &summary)?;
    for ((runs, corrected), curve) in exp.runs.iter().zip(&exp.corrected).zip(&exp.curves) {
        out.write_with(&format!("runs_{}.csv", file_stem(&curve.label)), |w| {
            write_runs_csv(runs, corrected, w)
        })?;
    }
    out.write_str("scatter.svg", &scatter_svg(&exp.report))?;
    Ok(out.finish(summary))
}

/// Confidence ellipses in the response space. Two coordinates give one
/// panel; more give one panel per coordinate plane; a single coordinate is
/// plotted against the angle.
fn scatter_svg(report: &DistinguishabilityReport) -> String {
    let n = report
        .families
        .iter()
        .flat_map(|f| f.family.stats.first())
        .map(|s| s.dimension())
        .next()
        .unwrap_or(0);
    let planes: Vec<(Option<usize>, usize)> = if n <= 1 {
        vec![(None, 0)]
    } else {
        (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (Some(a), b)))
            .collect()
    };
    let axes: Vec<(String, String)> = planes
        .iter()
        .map(|&(a, b)| {
            let x = a.map_or("theta (deg)".to_string(), |a| format!("P{}", a + 1));
            (x, format!("P{}", b + 1))
        })
        .collect();
    let groups = planes
        .iter()
        .map(|&(a, b)| {
            report
                .families
                .iter()
                .map(|fr| {
                    let fam = &fr.family;
                    let glyphs = fam
                        .stats
                        .iter()
                        .zip(&fam.thetas)
                        .enumerate()
                        .map(|(i, (s, &theta))| {
                            let (x, sx) = a.map_or((theta, 0.0), |a| (s.mean[a], s.ci95[a]));
                            Glyph {
                                center: (x, s.mean.get(b).copied().unwrap_or(0.0)),
                                semi: (sx, s.ci95.get(b).copied().unwrap_or(0.0)),
                                filled: fam.kept.contains(&i),
                            }
                        })
                        .collect();
                    ScatterGroup {
                        name: fam.label.clone(),
                        glyphs,
                    }
                })
                .collect()
        })
        .collect::<Vec<_>>();
    svg::scatter_panels("95% confidence regions (filled: kept)", &axes, &groups)
}

/// Tomography from measured records, or from simulated (noisy or exact)
/// records of the configured state.
pub fn tomo(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let records: Vec<TomographyRecord> = match &cfg.tomography.records {
        Some(path) => {
            let file = File::open(path).map_err(|e| CliError::io(path, e))?;
            read_records_csv(BufReader::new(file))?
        }
        None => {
            let rho = cfg.state.build()?;
            if cfg.tomography.noiseless {
                exact_records(&rho, cfg.counts.pair_scale())
            } else {
                cfg.counts
                    .validate()
                    .map_err(|e| CliError::Config(format!("counts: {e}")))?;
                simulate_tomography(&rho, &cfg.counts, cfg.seed)?
            }
        }
    };
    let result = reconstruct_mle(&records)?;
    let m = report_metrics(&result)?;

    let mut out = OutDir::create(&cfg.output.dir)?;
    out.write_with("records.csv", |w| write_records_csv(&records, w))?;
    let (re, im) = result.rho.to_re_im();
    for (name, part) in [("rho_real.csv", re), ("rho_imag.csv", im)] {
        out.write_with(name, |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["row", "HH", "HV", "VH", "VV"])?;
            for (label, row) in ["HH", "HV", "VH", "VV"].iter().zip(part) {
                let mut rec = vec![label.to_string()];
                rec.extend(row.iter().map(f64::to_string));
                csv.write_record(&rec)?;
            }
            csv.flush()
        })?;
    }
    let block = format!(
        "concurrence: {:.4}\nlinear_entropy: {:.4}\nfidelity: {:.6}\npurity: {:.4}\n\
         log_likelihood: {}\niterations: {}\nconverged: {}\n",
        m.concurrence,
        m.linear_entropy,
        m.fidelity,
        m.purity,
        result.log_likelihood,
        result.iterations,
        result.converged
    );
    out.write_str("metrics.txt", &block)?;
    Ok(out.finish(block))
}

/// Search projector settings; writes a pasteable settings fragment and the
/// objective trace.
pub fn optimize_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let opt = cfg.optimization()?;
    let result = optimize(&opt)?;
    let fragment = SettingsFragment::new(&result.probe, &result.projectors);
    let text = format!(
        "# minimum pairwise separation {} (start {}), {} evaluations\n{}",
        result.value,
        result.start_value,
        result.evaluations,
        fragment.to_toml()
    );

    let mut out = OutDir::create(&cfg.output.dir)?;
    out.write_str("optimized.toml", &text)?;
    out.write_with("objective_trace.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["restart", "evaluations", "best"])?;
        for t in &result.trace {
            csv.write_record([
                t.restart.to_string(),
                t.evaluations.to_string(),
                t.best.to_string(),
            ])?;
        }
        csv.flush()
    })?;
    Ok(out.finish(format!(
        "objective {} (start {}), {} evaluations, converged: {}\n",
        result.value, result.start_value, result.evaluations, result.converged
    )))
}
