//! One function per subcommand. Inputs come from the resolved configuration, results
//! go under `spec.out` with fixed file names.

use rayon::prelude::*;

use jofc::inference::{
    aggregate_sweep, alpha_grid, empirical_auc, power_at_alpha, roc_curve, run_sweep_cells, TestStatisticSample,
};
use jofc::io::{read_matrix_csv, read_vectors_csv};
use jofc::omnibus::{commensurability_error, fidelity_error};
use jofc::pipeline::{jofc_sample, prm_sample, JointEmbedding};
use jofc::simgauss::{sample_trial, TestPair};
use jofc::solver::{classical_mds_eigenvalues, select_dimension_elbow};
use jofc::{DissimilarityMatrix, Error};

use crate::config::{ExperimentSpec, Mode};
use crate::error::CliError;
use crate::holdout;
use crate::output::{num, Output};

type CmdResult = Result<(), CliError>;

/// Runs `spec.mode` on a pool of `spec.workers` threads.
pub fn run(spec: &ExperimentSpec) -> CmdResult {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", spec.workers)))?;
    let out = Output::create(&spec.out, spec.hash())?;
    log::info!("{} with config hash {}", spec.mode.name(), spec.hash());
    pool.install(|| match spec.mode {
        Mode::Simulate => simulate(spec, &out),
        Mode::Sweep => sweep(spec, &out),
        Mode::Embed => embed(spec, &out),
        Mode::Oos => oos(spec, &out),
        Mode::Holdout => holdout(spec, &out),
        Mode::Baseline => baseline(spec, &out),
        Mode::Dimselect => dimselect(spec, &out),
    })
}

fn required<'a>(path: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a std::path::Path, CliError> {
    path.as_deref().ok_or_else(|| CliError::Usage(format!("{key} is required")))
}

fn read_pair(spec: &ExperimentSpec) -> Result<(DissimilarityMatrix, DissimilarityMatrix), CliError> {
    let d1 = read_matrix_csv(required(&spec.delta1, "delta1")?)?;
    let d2 = read_matrix_csv(required(&spec.delta2, "delta2")?)?;
    if d1.len() != d2.len() {
        return Err(Error::SizeMismatch { expected: d1.len(), found: d2.len() }.into());
    }
    Ok((d1, d2))
}

fn columns(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|k| format!("{prefix}{k}")).collect()
}

fn write_table(out: &Output, name: &str, prefix: &str, rows: &[Vec<f64>], width: usize) -> CmdResult {
    let header = columns(prefix, width);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(name, &header, rows.iter().map(|r| r.iter().map(|&v| num(v)).collect()))?;
    Ok(())
}

fn matrix_rows(delta: &DissimilarityMatrix) -> Vec<Vec<f64>> {
    (0..delta.len()).map(|i| (0..delta.len()).map(|j| delta.get(i, j).unwrap_or(f64::NAN)).collect()).collect()
}

fn simulate(spec: &ExperimentSpec, out: &Output) -> CmdResult {
    let params = spec.gaussian();
    let trials = (0..spec.replicates)
        .into_par_iter()
        .map(|k| sample_trial(&params.for_replicate(k)))
        .collect::<jofc::Result<Vec<_>>>()?;
    let side = |pairs: &[TestPair], first: bool| -> Vec<Vec<f64>> {
        pairs.iter().map(|p| if first { p.d1.clone() } else { p.d2.clone() }).collect()
    };
    for (k, trial) in trials.iter().enumerate() {
        let dir = out.subdir(&format!("trial_{k:04}"))?;
        let n = trial.objects();
        write_table(&dir, "delta1.csv", "o", &matrix_rows(&trial.delta1), n)?;
        write_table(&dir, "delta2.csv", "o", &matrix_rows(&trial.delta2), n)?;
        write_table(&dir, "matched_1.csv", "o", &side(&trial.matched, true), n)?;
        write_table(&dir, "matched_2.csv", "o", &side(&trial.matched, false), n)?;
        write_table(&dir, "unmatched_1.csv", "o", &side(&trial.unmatched, true), n)?;
        write_table(&dir, "unmatched_2.csv", "o", &side(&trial.unmatched, false), n)?;
    }
    Ok(())
}

fn roc_rows(series: &str, alphas: &[f64], power: &[f64]) -> Vec<Vec<String>> {
    alphas.iter().zip(power).map(|(&a, &b)| vec![series.to_string(), num(a), num(b)]).collect()
}

fn sweep(spec: &ExperimentSpec, out: &Output) -> CmdResult {
    let params = spec.gaussian();
    let settings = spec.jofc();
    let roc_alphas = alpha_grid(spec.roc_points);
    let mut alphas = roc_alphas.clone();
    alphas.extend(&spec.alpha);

    let cells = run_sweep_cells(&spec.w_grid, spec.replicates, &alphas, |w, replicate| {
        let trial = sample_trial(&params.for_replicate(replicate))?;
        let sample = jofc_sample(&trial, w, &settings)?;
        log::info!("replicate {replicate} w={w} done");
        Ok(sample)
    });
    // flush whatever finished before reporting a failure
    out.csv(
        "auc_by_replicate.csv",
        &["w", "replicate", "auc"],
        cells.iter().flatten().map(|c| vec![num(c.w), c.replicate.to_string(), num(c.auc)]),
    )?;
    let cells = cells.into_iter().collect::<jofc::Result<Vec<_>>>()?;
    let result = aggregate_sweep(&spec.w_grid, &alphas, &cells)?;

    out.csv(
        "auc_summary.csv",
        &["w", "mean", "se", "sd"],
        (0..result.grid.len())
            .map(|k| vec![num(result.grid[k]), num(result.auc_mean[k]), num(result.auc_se[k]), num(result.auc_sd[k])]),
    )?;
    let r = roc_alphas.len();
    out.csv(
        "roc.csv",
        &["series", "alpha", "beta"],
        (0..result.grid.len()).flat_map(|k| roc_rows(&num(result.grid[k]), &roc_alphas, &result.power_mean[k][..r])),
    )?;
    out.csv(
        "power_by_alpha.csv",
        &["alpha", "w", "beta"],
        spec.alpha.iter().enumerate().flat_map(|(a, &alpha)| {
            let result = &result;
            (0..result.grid.len()).map(move |k| vec![num(alpha), num(result.grid[k]), num(result.power_mean[k][r + a])])
        }),
    )?;
    out.csv(
        "wstar_histogram.csv",
        &["w", "count"],
        result.grid.iter().zip(&result.argmax_counts).map(|(&w, &c)| vec![num(w), c.to_string()]),
    )?;
    out.text("sweep.gp", &gnuplot(&result.grid))?;
    log::info!("w* estimate {}", result.w_star_estimate);
    Ok(())
}

fn gnuplot(grid: &[f64]) -> String {
    let series: Vec<String> = grid.iter().map(|&w| num(w)).collect();
    format!(
        "set datafile separator ','\n\
         set terminal pngcairo size 1200,500\n\
         set output 'sweep.png'\n\
         set multiplot layout 1,2\n\
         set xlabel 'w'\n\
         set ylabel 'mean AUC'\n\
         plot 'auc_summary.csv' every ::1 using 1:2:3 with yerrorlines title 'AUC(w)'\n\
         set xlabel 'alpha'\n\
         set ylabel 'power'\n\
         set key bottom right\n\
         plot for [w in \"{}\"] 'roc.csv' every ::1 using 2:(strcol(1) eq w ? $3 : NaN) with lines title 'w='.w\n\
         unset multiplot\n",
        series.join(" ")
    )
}

fn embed(spec: &ExperimentSpec, out: &Output) -> CmdResult {
    let (delta1, delta2) = read_pair(spec)?;
    let model = JointEmbedding::fit(&delta1, &delta2, spec.w, &spec.jofc())?;
    let x = model.configuration();
    let index = model.problem().index();
    let mut header = vec!["object".to_string(), "condition".to_string()];
    header.extend(columns("x", x.dim()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        "configuration.csv",
        &header,
        (0..x.len()).map(|row| {
            let (object, condition) = index.locate(row);
            let mut cells = vec![(object + 1).to_string(), (condition + 1).to_string()];
            cells.extend(x.point(row).into_iter().map(num));
            cells
        }),
    )?;
    let solve = model.solve_result();
    out.csv(
        "stress_trace.csv",
        &["iteration", "stress"],
        solve.stress_trace.iter().enumerate().map(|(k, &s)| vec![k.to_string(), num(s)]),
    )?;
    let scales = model.problem().scales();
    let fidelity = |delta: &DissimilarityMatrix, k: usize| -> Result<f64, CliError> {
        Ok(fidelity_error(x, &delta.scaled(1.0 / scales[k])?, k)?)
    };
    let summary = [
        ("w", num(spec.w)),
        ("stress", num(solve.stress())),
        ("iterations", solve.iterations.to_string()),
        ("converged", solve.converged.to_string()),
        ("fidelity_1", num(fidelity(&delta1, 0)?)),
        ("fidelity_2", num(fidelity(&delta2, 1)?)),
        ("commensurability", num(commensurability_error(x, delta1.len())?)),
    ];
    out.csv("embed_summary.csv", &["key", "value"], summary.iter().map(|(k, v)| vec![k.to_string(), v.clone()]))?;
    log::info!("final stress {} after {} iterations", solve.stress(), solve.iterations);
    Ok(())
}

fn oos(spec: &ExperimentSpec, out: &Output) -> CmdResult {
    let (delta1, delta2) = read_pair(spec)?;
    let tests1 = read_vectors_csv(required(&spec.tests1, "tests1")?)?;
    let tests2 = read_vectors_csv(required(&spec.tests2, "tests2")?)?;
    if tests1.len() != tests2.len() {
        return Err(Error::LengthMismatch { expected: tests1.len(), found: tests2.len() }.into());
    }
    let model = JointEmbedding::fit(&delta1, &delta2, spec.w, &spec.jofc())?;
    let results =
        tests1.par_iter().zip(tests2.par_iter()).map(|(d1, d2)| model.tau(d1, d2)).collect::<jofc::Result<Vec<_>>>()?;
    let d = spec.d;
    let mut header = vec!["pair".to_string(), "tau".to_string()];
    header.extend(columns("y1_", d));
    header.extend(columns("y2_", d));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        "tau.csv",
        &header,
        results.iter().enumerate().map(|(k, r)| {
            let mut cells = vec![(k + 1).to_string(), num(r.tau)];
            cells.extend(r.y1.iter().chain(&r.y2).map(|&v| num(v)));
            cells
        }),
    )?;
    Ok(())
}

/// Mean power over replicates at each alpha of the grid.
fn mean_roc(samples: &[TestStatisticSample], alphas: &[f64]) -> Result<Vec<f64>, CliError> {
    let mut total = vec![0.0; alphas.len()];
    for s in samples {
        for (t, &a) in total.iter_mut().zip(alphas) {
            *t += power_at_alpha(s, a)?;
        }
    }
    Ok(total.into_iter().map(|t| t / samples.len() as f64).collect())
}

fn mean_se_sd(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd / n.sqrt(), sd)
}

fn holdout(spec: &ExperimentSpec, out: &Output) -> CmdResult {
    let (delta1, delta2) = read_pair(spec)?;
    let draws = holdout::holdout_draws(&delta1, &delta2, spec.w, &spec.jofc(), spec.replicates, spec.seed)?;
    out.csv(
        "holdout_taus.csv",
        &["replicate", "object_a", "object_b", "matched_tau", "unmatched_tau"],
        draws.iter().map(|d| {
            vec![
                d.replicate.to_string(),
                (d.held_out[0] + 1).to_string(),
                (d.held_out[1] + 1).to_string(),
                num(d.matched),
                num(d.unmatched),
            ]
        }),
    )?;
    let sample = holdout::sample(&draws)?;
    let auc = empirical_auc(&sample)?;
    out.csv(
        "holdout_summary.csv",
        &["alpha", "critical_value", "size", "power", "auc"],
        holdout::levels(&draws, &spec.alpha)?
            .into_iter()
            .map(|l| vec![num(l.alpha), num(l.critical_value), num(l.size), num(l.power), num(auc)]),
    )?;
    let alphas = alpha_grid(spec.roc_points);
    out.csv(
        "roc.csv",
        &["series", "alpha", "beta"],
        roc_rows("jofc", &alphas, &mean_roc(std::slice::from_ref(&sample), &alphas)?),
    )?;
    out.csv(
        "roc_steps.csv",
        &["alpha", "beta"],
        roc_curve(&sample)?.into_iter().map(|p| vec![num(p.alpha), num(p.beta)]),
    )?;
    Ok(())
}

fn baseline(spec: &ExperimentSpec, out: &Output) -> CmdResult {
    let params = spec.gaussian();
    let settings = spec.prm();
    let samples = (0..spec.replicates)
        .into_par_iter()
        .map(|k| {
            let wrap = |e: Error| Error::Replicate { w: f64::NAN, replicate: k, source: Box::new(e) };
            let trial = sample_trial(&params.for_replicate(k)).map_err(wrap)?;
            let sample = prm_sample(&trial, &settings).map_err(wrap)?;
            log::info!("baseline replicate {k} done");
            Ok(sample)
        })
        .collect::<jofc::Result<Vec<_>>>()?;
    let aucs = samples.iter().map(empirical_auc).collect::<jofc::Result<Vec<_>>>()?;
    out.csv(
        "auc_by_replicate.csv",
        &["method", "replicate", "auc"],
        aucs.iter().enumerate().map(|(k, &a)| vec!["prm".to_string(), k.to_string(), num(a)]),
    )?;
    let (mean, se, sd) = mean_se_sd(&aucs);
    out.csv("auc_summary.csv", &["method", "mean", "se", "sd"], [vec!["prm".into(), num(mean), num(se), num(sd)]])?;
    let alphas = alpha_grid(spec.roc_points);
    out.csv("roc.csv", &["series", "alpha", "beta"], roc_rows("prm", &alphas, &mean_roc(&samples, &alphas)?))?;
    Ok(())
}

fn dimselect(spec: &ExperimentSpec, out: &Output) -> CmdResult {
    let mut inputs = vec![read_matrix_csv(required(&spec.delta1, "delta1")?)?];
    if let Some(path) = &spec.delta2 {
        inputs.push(read_matrix_csv(path)?);
    }
    let mut rows = Vec::new();
    let mut chosen = 0;
    for (k, delta) in inputs.iter().enumerate() {
        let scree: Vec<f64> = classical_mds_eigenvalues(delta).into_iter().map(|v| v.max(0.0)).collect();
        chosen = chosen.max(select_dimension_elbow(&scree)?);
        rows.extend(scree.iter().enumerate().map(|(i, &v)| vec![(k + 1).to_string(), (i + 1).to_string(), num(v)]));
    }
    out.csv("scree.csv", &["condition", "index", "eigenvalue"], rows)?;
    out.text("chosen_dimension.txt", &format!("{chosen}\n"))?;
    log::info!("chosen dimension {chosen}");
    Ok(())
}
