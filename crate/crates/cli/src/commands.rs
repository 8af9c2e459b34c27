use std::fmt::Write;
use std::path::Path;

use serde::Serialize;

use dirac_tomo::dirac::{
    density_from_dirac, dirac_from_density_ordered, invert_dirac, DiracDistribution, Ordering,
};
use dirac_tomo::experiment::{
    baseline_tomography, estimate_dirac, snr_study, Experiment, ExperimentConfig, Protocol, StateSpec,
};
use dirac_tomo::formats::{
    parse_dirac_relaxed, parse_state, read_state, read_text, to_json, DiracFile, StateData, StateFile,
    FORMAT_VERSION,
};
use dirac_tomo::hilbert::{random_density, random_pure_state, trace_distance_matrices, CMatrix};

use crate::error::CliError;
use crate::manifest::Run;
use crate::table::{num, Table};
use crate::{Global, Kind, OrderingArg, ProtocolArg};

type Result<T> = std::result::Result<T, CliError>;

fn resolved(lines: &[(&str, String)]) -> String {
    let mut s = format!("format_version = {FORMAT_VERSION}\n");
    for (k, v) in lines {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

fn ordering(arg: OrderingArg) -> Ordering {
    match arg {
        OrderingArg::AThenB => Ordering::AThenB,
        OrderingArg::BThenA => Ordering::BThenA,
    }
}

pub fn gen_state(global: &Global, dim: usize, rank: usize, kind: Kind, output: &str) -> Result<()> {
    let seed = global.seed.unwrap_or(0);
    let (file, rho) = match kind {
        Kind::Density => {
            let rho = random_density(dim, rank, seed)?;
            (StateFile::from_density(&rho), rho)
        }
        Kind::Pure => {
            if rank != 1 {
                return Err(CliError::Usage(format!("a pure state has rank 1, got --rank {rank}")));
            }
            let psi = random_pure_state(dim, seed)?;
            (StateFile::from_pure(&psi), psi.to_density())
        }
    };
    let kind_name = match kind {
        Kind::Density => "density",
        Kind::Pure => "pure",
    };
    let config = resolved(&[
        ("dim", dim.to_string()),
        ("rank", rank.to_string()),
        ("kind", kind_name.to_string()),
        ("seed", seed.to_string()),
        ("output", output.to_string()),
    ]);
    let mut run = Run::start("gen-state", seed, &global.out_dir, &config)?;
    let path = run.write(output, &to_json(&file))?;
    let (values, _) = rho.eigen();
    println!("wrote {}", path.display());
    println!("purity = {}", num(rho.purity()));
    println!(
        "eigenvalues = [{}]",
        values.iter().map(|v| num(*v)).collect::<Vec<_>>().join(", ")
    );
    run.finish()?;
    Ok(())
}

pub fn dirac(global: &Global, input: &Path, invert: bool, order: OrderingArg, output: Option<&str>) -> Result<()> {
    let text = read_text(input)?;
    let config = resolved(&[
        ("input", input.display().to_string()),
        ("input_sha256", crate::manifest::sha256_hex(&text)),
        ("invert", invert.to_string()),
        ("ordering", ordering(order).as_str().to_string()),
        ("tolerance", format!("{:?}", global.tolerance)),
    ]);
    let mut run = Run::start("dirac", global.seed.unwrap_or(0), &global.out_dir, &config)?;
    if invert {
        let s = parse_dirac_relaxed(&text)?;
        if let Err(e) = s.check_invariants(global.tolerance) {
            run.warn(format!("input distribution: {e}"));
        }
        let raw = invert_dirac(&s);
        let file = match density_from_dirac(&s) {
            Ok(rho) => StateFile::from_density(&rho),
            Err(e) => {
                run.warn(format!("{e}; writing the raw inversion"));
                StateFile::from_matrix(&raw)
            }
        };
        let path = run.write(output.unwrap_or("state.json"), &to_json(&file))?;
        println!("wrote {}", path.display());
    } else {
        let rho = parse_state(&text)?.to_density();
        let s = dirac_from_density_ordered(&rho, ordering(order));
        let path = run.write(output.unwrap_or("dirac.json"), &to_json(&DiracFile::from_distribution(&s)))?;
        println!("wrote {}", path.display());
    }
    run.finish()?;
    Ok(())
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = read_text(path)?;
    let mut config = ExperimentConfig::from_text(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(dir) = path.parent() {
        config.resolve_paths(dir);
    }
    Ok(config)
}

#[derive(Serialize)]
struct Summary {
    format_version: u32,
    protocol: &'static str,
    trials_used: usize,
    max_abs_error: f64,
    mean_abs_error: f64,
    trace_distance_to_truth: Option<f64>,
    flagged_cells: Vec<(usize, usize)>,
}

pub fn simulate(global: &Global, path: &Path, protocol: Option<ProtocolArg>, records: bool) -> Result<()> {
    let mut config = load_config(path)?;
    if let Some(p) = protocol {
        config.protocol = match p {
            ProtocolArg::Scan => Protocol::ScanPostselect,
            ProtocolArg::JointWeak => Protocol::JointWeak,
        };
    }
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    let experiment = Experiment::new(config.clone())?;
    let mut run = Run::start("simulate", config.seed, &global.out_dir, &config.to_text())?;
    let trials = experiment.sample_trials();
    let report = estimate_dirac(&trials, &experiment)?;
    let truth = experiment.truth();

    run.write("estimate.dirac.json", &to_json(&DiracFile::from_distribution(&report.estimate)))?;
    if let Some(rec) = &report.reconstruction {
        run.write("reconstruction.state.json", &to_json(&StateFile::from_matrix(rec)))?;
    }
    let n = experiment.dim();
    let mut cells = Table::new(&[
        "a", "b", "estimate_re", "estimate_im", "se_re", "se_im", "trials_re", "trials_im", "truth_re",
        "truth_im", "abs_error", "flagged",
    ]);
    for a in 0..n {
        for b in 0..n {
            let (e, t) = (report.estimate.get(a, b), truth.get(a, b));
            cells.row(&[
                a.to_string(),
                b.to_string(),
                num(e.re),
                num(e.im),
                num(report.se_re[(a, b)]),
                num(report.se_im[(a, b)]),
                report.counts_re[(a, b)].to_string(),
                report.counts_im[(a, b)].to_string(),
                num(t.re),
                num(t.im),
                num((e - t).norm()),
                report.flagged.contains(&(a, b)).to_string(),
            ]);
        }
    }
    run.write("cells.csv", &cells.finish())?;

    let mean_abs_error = report.mean_abs_error(truth);
    let mean_se = report.standard_errors().mean();
    let mut errors = Table::new(&[
        "protocol", "trials", "g", "g2", "max_abs_error", "mean_abs_error", "mean_se", "trace_distance",
    ]);
    errors.row(&[
        config.protocol.as_str().to_string(),
        report.trials_used.to_string(),
        num(config.g),
        num(config.g2()),
        num(report.max_abs_error),
        num(mean_abs_error),
        num(mean_se),
        report.trace_distance_to_truth.map_or("NaN".into(), num),
    ]);
    run.write("errors.csv", &errors.finish())?;
    if records {
        let mut t = Table::new(&[
            "trial_id", "scan_a", "scan_b", "quadrature", "pointer_value", "system_outcome_b",
            "second_pointer_value",
        ]);
        for r in &trials {
            t.row(&[
                r.trial_id.to_string(),
                r.scan_a.to_string(),
                r.scan_b.map_or(String::new(), |b| b.to_string()),
                r.quadrature.as_str().to_string(),
                num(r.pointer_value),
                r.system_outcome_b.map_or(String::new(), |b| b.to_string()),
                r.second_pointer_value.map_or(String::new(), num),
            ]);
        }
        run.write("trials.csv", &t.finish())?;
    }
    if !report.flagged.is_empty() {
        run.warn(format!("{} cells lack the trials for an estimate or error", report.flagged.len()));
    }
    let summary = Summary {
        format_version: FORMAT_VERSION,
        protocol: config.protocol.as_str(),
        trials_used: report.trials_used,
        max_abs_error: report.max_abs_error,
        mean_abs_error,
        trace_distance_to_truth: report.trace_distance_to_truth,
        flagged_cells: report.flagged.clone(),
    };
    run.write("summary.json", &to_json(&summary))?;
    println!(
        "{}: {} trials, max |error| {}, trace distance {}",
        config.protocol.as_str(),
        report.trials_used,
        num(report.max_abs_error),
        report.trace_distance_to_truth.map_or("NaN".into(), num)
    );
    run.finish()?;
    Ok(())
}

pub fn snr(global: &Global, path: Option<&Path>, trials: &[usize], gs: &[f64]) -> Result<()> {
    let mut config = match path {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let list = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(",");
    let mut text = config.to_text();
    let _ = writeln!(text, "trial_ladder = {}", list(&mut trials.iter().map(|t| t.to_string())));
    let _ = writeln!(text, "g_ladder = {}", list(&mut gs.iter().map(|g| format!("{g:?}"))));
    let mut run = Run::start("snr", config.seed, &global.out_dir, &text)?;
    let study = snr_study(&config, trials, gs)?;

    let mut rows = Table::new(&[
        "protocol", "n_weak_ops", "g", "trials", "mean_abs_error", "mean_se", "snr", "underpowered",
    ]);
    for r in &study.rows {
        rows.row(&[
            r.protocol.as_str().to_string(),
            r.n_weak_ops.to_string(),
            num(r.g),
            r.trials.to_string(),
            num(r.mean_abs_error),
            num(r.mean_se),
            num(r.snr),
            r.underpowered.to_string(),
        ]);
    }
    run.write("snr.csv", &rows.finish())?;

    let mut fits = Table::new(&["protocol", "g", "slope"]);
    for f in &study.fits {
        fits.row(&[f.protocol.as_str().to_string(), num(f.g), f.slope.map_or("NA".into(), num)]);
        match f.slope {
            Some(s) => println!("{} g={}: SE slope {s:.4}", f.protocol.as_str(), f.g),
            None => println!("{} g={}: slope fit refused", f.protocol.as_str(), f.g),
        }
    }
    run.write("snr_fits.csv", &fits.finish())?;
    if trials.len() < 3 {
        run.warn("slope fit refused: the trial ladder has fewer than 3 points");
    }

    let mut exps = Table::new(&["g", "trials", "snr1", "snr2", "exponent"]);
    for e in &study.exponents {
        exps.row(&[
            num(e.g),
            e.trials.to_string(),
            num(e.snr1),
            num(e.snr2),
            e.exponent.map_or("NA".into(), num),
        ]);
    }
    run.write("snr_exponents.csv", &exps.finish())?;
    if study.rows.iter().any(|r| r.underpowered) {
        run.warn("some rows are underpowered");
    }
    match study.mean_exponent() {
        Some(m) => println!("mean SNR exponent ln SNR2 / ln SNR1 = {m:.4}"),
        None => println!("SNR exponent undefined"),
    }
    run.finish()?;
    Ok(())
}

enum Loaded {
    State(CMatrix),
    Dirac(DiracDistribution),
}

fn load_any(path: &Path) -> Result<Loaded> {
    let text = read_text(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: parse error at line {}: {e}", path.display(), e.line())))?;
    if value.get("kind").is_some() {
        Ok(Loaded::State(match parse_state(&text)? {
            StateData::Density(rho) => rho.into_matrix(),
            StateData::Pure(psi) => psi.projector(),
        }))
    } else {
        Ok(Loaded::Dirac(parse_dirac_relaxed(&text)?))
    }
}

#[derive(Serialize)]
struct Comparison {
    format_version: u32,
    trace_distance: f64,
    max_entrywise: f64,
    tolerance: f64,
    within_tolerance: bool,
}

pub fn compare(global: &Global, left: &Path, right: &Path) -> Result<()> {
    let (l, r) = (load_any(left)?, load_any(right)?);
    let to_dirac = |m: &CMatrix| {
        DiracDistribution::unchecked(dirac_tomo::dirac::dirac_of_operator(m, Ordering::AThenB), Ordering::AThenB)
    };
    let (trace_distance, max_entrywise) = match (&l, &r) {
        (Loaded::State(a), Loaded::State(b)) => {
            check_dims(a.nrows(), b.nrows())?;
            let diff = a - b;
            (trace_distance_matrices(a, b), diff.iter().map(|z| z.norm()).fold(0.0, f64::max))
        }
        _ => {
            let as_dirac = |x: &Loaded| match x {
                Loaded::State(m) => to_dirac(m),
                Loaded::Dirac(s) => Ok(s.clone()),
            };
            let (a, b) = (as_dirac(&l)?, as_dirac(&r)?);
            check_dims(a.dim(), b.dim())?;
            (trace_distance_matrices(&invert_dirac(&a), &invert_dirac(&b)), a.max_abs_diff(&b))
        }
    };
    let within = trace_distance <= global.tolerance && max_entrywise <= global.tolerance;
    let config = resolved(&[
        ("left", left.display().to_string()),
        ("right", right.display().to_string()),
        ("tolerance", format!("{:?}", global.tolerance)),
    ]);
    let mut run = Run::start("compare", global.seed.unwrap_or(0), &global.out_dir, &config)?;
    run.write(
        "compare.json",
        &to_json(&Comparison {
            format_version: FORMAT_VERSION,
            trace_distance,
            max_entrywise,
            tolerance: global.tolerance,
            within_tolerance: within,
        }),
    )?;
    run.finish()?;
    println!("trace_distance = {}", num(trace_distance));
    println!("max_entrywise = {}", num(max_entrywise));
    if within {
        Ok(())
    } else {
        Err(CliError::Tolerance(format!("difference exceeds tolerance {:e}", global.tolerance)))
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(CliError::Usage(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

#[derive(Serialize)]
struct TomographyFile {
    format_version: u32,
    bases_used: usize,
    trials: Option<u64>,
    trace_distance: f64,
    dim: usize,
    estimate: Vec<[f64; 2]>,
}

pub fn tomography_baseline(
    global: &Global,
    state: &Path,
    trials: Option<u64>,
    bases: Option<usize>,
    direct_g: Option<f64>,
) -> Result<()> {
    let rho = read_state(state)?.to_density();
    let seed = global.seed.unwrap_or(0);
    let config = resolved(&[
        ("state", state.display().to_string()),
        ("trials", trials.map_or("exact".into(), |t| t.to_string())),
        ("bases", bases.map_or("default".into(), |b| b.to_string())),
        ("direct_g", direct_g.map_or("none".into(), |g| format!("{g:?}"))),
        ("seed", seed.to_string()),
    ]);
    let mut run = Run::start("tomography-baseline", seed, &global.out_dir, &config)?;
    let report = baseline_tomography(&rho, trials, seed, bases)?;
    let n = rho.dim();
    let estimate = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| [report.estimate[(i, j)].re, report.estimate[(i, j)].im])
        .collect();
    run.write(
        "tomography.json",
        &to_json(&TomographyFile {
            format_version: FORMAT_VERSION,
            bases_used: report.bases_used,
            trials,
            trace_distance: report.trace_distance,
            dim: n,
            estimate,
        }),
    )?;
    let mut table = Table::new(&["method", "bases_used", "trials", "trace_distance"]);
    let shots = trials.map_or("exact".into(), |t| t.to_string());
    table.row(&["baseline".into(), report.bases_used.to_string(), shots.clone(), num(report.trace_distance)]);
    println!("baseline: {} bases, trace distance {}", report.bases_used, num(report.trace_distance));
    if let (Some(g), Some(t)) = (direct_g, trials) {
        let config = ExperimentConfig {
            dim: n,
            state: StateSpec::File(state.to_path_buf()),
            g,
            trials: t as usize,
            seed,
            ..ExperimentConfig::default()
        };
        let exp = Experiment::with_state(config, rho)?;
        let direct = estimate_dirac(&exp.sample_trials(), &exp)?;
        let d = direct.trace_distance_to_truth.unwrap_or(f64::NAN);
        table.row(&["direct-scan".into(), "2".into(), shots, num(d)]);
        println!("direct scan: 2 bases, trace distance {}", num(d));
    } else if direct_g.is_some() {
        run.warn("--direct-g needs --trials; direct comparison skipped");
    }
    run.write("tomography.csv", &table.finish())?;
    run.finish()?;
    Ok(())
}
