use std::collections::BTreeMap;
use std::fmt::Write as _;

use apgw::inference::{coefficient_table, cure_report, evaluate_curve, model_table, CurveKind, CurveRequest};
use apgw::io::{build_spec, load_dataset, parse_fix_flag, write_dataset, DatasetSchema, LoadedDataset, RunConfig, ScenarioFile};
use apgw::simulate::{calibrate_censoring, replicate_rng, run_study, simulate_dataset, ReplicationSummary, ScenarioConfig};
use apgw::{fit, FitResult, ModelSpec, OptimizerConfig};
use serde_json::json;

use crate::bundle;
use crate::run::{CliResult, Failure, Run};
use crate::{Cli, Command, DataArgs, ModelArgs};

const DEFAULT_COMPARE: [&str; 6] = ["M(beta)", "M(tau)", "M(beta,alpha)", "M(tau,alpha)", "M(beta,nu)", "M(tau,nu)"];

pub fn dispatch(cli: Cli) -> CliResult<()> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut optimizer = config.optimizer;
    if let Some(s) = cli.seed {
        optimizer.seed = s;
    }
    let out_dir = config
        .output
        .dir
        .clone()
        .filter(|_| std::env::var_os("APGW_OUT_DIR").is_none() && !flag_given("--out-dir"))
        .unwrap_or_else(|| cli.out_dir.clone());
    let mut run = Run::new(&out_dir, optimizer.seed);
    if let Some(p) = &cli.config {
        run.input(p)?;
    }

    match cli.command {
        Command::Fit { data, model, level } => {
            let loaded = load(&data, &config, &mut run)?;
            let spec = resolve_spec(&model, &config, &loaded)?;
            run.set_config(json!({
                "command": "fit", "model": spec.to_string(), "optimizer": optimizer, "level": level,
                "schema": schema(&data, &config)?,
            }));
            let f = fit(&loaded.data, &spec, &optimizer)?;
            write_fit(&mut run, &f, &loaded, level)?;
            let converged = f.converged;
            run.finish()?;
            if !converged {
                return Err(Failure::Convergence(format!("{spec}: max |score| = {:.3e}", f.gradient_max)));
            }
            Ok(())
        }
        Command::Compare {
            data,
            models,
            fix,
            allow_two_scales,
        } => {
            let loaded = load(&data, &config, &mut run)?;
            let texts: Vec<String> = if !models.is_empty() {
                models
            } else if !config.compare.is_empty() {
                config.compare.clone()
            } else {
                DEFAULT_COMPARE.iter().map(|s| s.to_string()).collect()
            };
            let fixes = fix_map(&fix, &config)?;
            let allow = allow_two_scales || config.model.allow_two_scales;
            let specs = texts
                .iter()
                .map(|t| build_spec(t, &fixes, loaded.data.names().to_vec(), allow))
                .collect::<apgw::Result<Vec<ModelSpec>>>()?;
            run.set_config(json!({
                "command": "compare", "models": texts, "fix": fixes, "optimizer": optimizer,
                "schema": schema(&data, &config)?,
            }));
            let fits = specs
                .iter()
                .map(|s| fit(&loaded.data, s, &optimizer))
                .collect::<apgw::Result<Vec<FitResult>>>()?;
            let table = model_table(&fits)?;
            run.write("comparison.csv", table.to_csv().as_bytes())?;
            run.write("comparison.txt", format!("{table}\n").as_bytes())?;
            run.write_json(
                "comparison.json",
                &json!({ "table": table, "fits": fits.iter().map(|f| f.to_json()).collect::<Vec<_>>() }),
            )?;
            print!("{table}\n");
            let failed: Vec<String> = fits.iter().filter(|f| !f.converged).map(|f| f.spec.to_string()).collect();
            run.finish()?;
            if !failed.is_empty() {
                return Err(Failure::Convergence(format!("not converged: {}", failed.join(", "))));
            }
            Ok(())
        }
        Command::Curves {
            data,
            model,
            kind,
            profile,
            covariate,
            grid,
            points,
        } => {
            let loaded = load(&data, &config, &mut run)?;
            let spec = resolve_spec(&model, &config, &loaded)?;
            let kind: CurveKind = kind.parse()?;
            let names = loaded.data.names().to_vec();
            let profile = profile.unwrap_or_else(|| vec![0.0; names.len()]);
            let covariate_index = match &covariate {
                Some(c) => Some(names.iter().position(|n| n == c).ok_or_else(|| {
                    Failure::Validation(format!("--covariate: `{c}` is not a model column ({})", names.join(", ")))
                })?),
                None => None,
            };
            let f = fit(&loaded.data, &spec, &optimizer)?;
            let grid = match grid {
                Some(g) => g,
                None => default_grid(kind, &f, &profile, &loaded, points)?,
            };
            let req = CurveRequest {
                kind,
                profile: profile.clone(),
                covariate: covariate_index,
                grid: grid.clone(),
            };
            run.set_config(json!({
                "command": "curves", "model": spec.to_string(), "request": req, "optimizer": optimizer,
                "schema": schema(&data, &config)?,
            }));
            let values = evaluate_curve(&f, &req)?;
            let mut out = String::new();
            let _ = writeln!(out, "# model: {spec}");
            let _ = writeln!(out, "# kind: {}", kind_name(kind));
            let _ = writeln!(out, "# covariates: {}", names.join(","));
            let _ = writeln!(
                out,
                "# profile: {}",
                profile.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
            );
            if let Some(c) = &covariate {
                let _ = writeln!(out, "# switched covariate: {c} (0 -> 1)");
            }
            let _ = writeln!(out, "# loglik: {}", f.loglik);
            let _ = writeln!(out, "{},value", if kind == CurveKind::QuantileRatio { "u" } else { "t" });
            for (g, v) in grid.iter().zip(&values) {
                let _ = writeln!(out, "{g:?},{v:?}");
            }
            run.write(&format!("curve_{}.csv", kind_name(kind)), out.as_bytes())?;
            run.finish()?;
            if !f.converged {
                return Err(Failure::Convergence(format!("{spec}: max |score| = {:.3e}", f.gradient_max)));
            }
            Ok(())
        }
        Command::Simulate { scenario, emit_dataset } => {
            run.input(&scenario)?;
            let mut file = ScenarioFile::load(&scenario)?;
            if let Some(s) = cli.seed {
                file.seed = s;
                file.optimizer.seed = s;
            }
            run.set_config(serde_json::to_value(&file).map_err(|e| Failure::Io(e.to_string()))?);
            let sc = file.into_scenario()?;
            if emit_dataset {
                for (a, &nu) in sc.nu_grid.iter().enumerate() {
                    let coefs = sc.coefs_at(nu);
                    let rate = calibrate_censoring(&coefs, &sc.covariate_law, sc.target_censoring, sc.seed ^ a as u64)?;
                    let mut rng = replicate_rng(sc.seed, a as u64, 0);
                    let d = simulate_dataset(&coefs, &sc.covariate_law, sc.n, rate, &mut rng)?;
                    let mut buf = Vec::new();
                    write_dataset(&d, &mut buf)?;
                    run.write(&format!("dataset_nu{a}.csv"), &buf)?;
                }
                return run.finish();
            }
            study(run, &sc)
        }
        Command::ReplicatePaper {
            table,
            replicates,
            n,
            nu,
        } => {
            let mut sc = bundle::design(&table, n, replicates, optimizer.seed)?;
            sc.optimizer = OptimizerConfig {
                seed: optimizer.seed,
                ..optimizer
            };
            if let Some(nu) = nu {
                sc.nu_grid = nu;
            }
            run.set_config(json!({
                "command": "replicate-paper", "table": table, "n": sc.n, "replicates": replicates,
                "nu": sc.nu_grid.iter().map(|v| if v.is_infinite() { "inf".to_string() } else { v.to_string() }).collect::<Vec<_>>(),
                "optimizer": sc.optimizer,
            }));
            study(run, &sc)
        }
    }
}

fn flag_given(flag: &str) -> bool {
    std::env::args().any(|a| a == flag || a.starts_with(&format!("{flag}=")))
}

fn study(mut run: Run, sc: &ScenarioConfig) -> CliResult<()> {
    let summary: ReplicationSummary = run_study(sc)?;
    run.write("summary.csv", summary.to_csv().as_bytes())?;
    let text = summary.to_table_string();
    run.write("summary.txt", text.as_bytes())?;
    let mut censoring = String::from("nu,rate,realized_mean\n");
    for c in &summary.censoring {
        let _ = writeln!(censoring, "{},{},{}", c.nu, c.rate, c.realized_mean);
    }
    run.write("censoring.csv", censoring.as_bytes())?;
    run.write_json(
        "replicates.json",
        &serde_json::to_value(&summary.replicates).map_err(|e| Failure::Io(e.to_string()))?,
    )?;
    print!("{text}");
    run.finish()
}

fn schema(args: &DataArgs, config: &RunConfig) -> CliResult<DatasetSchema> {
    let missing = |key: &str, flag: &str| Failure::Validation(format!("config key `data.{key}` (or {flag}) is required"));
    Ok(DatasetSchema {
        time: args
            .time
            .clone()
            .or_else(|| config.data.time.clone())
            .ok_or_else(|| missing("time", "--time"))?,
        status: args
            .status
            .clone()
            .or_else(|| config.data.status.clone())
            .ok_or_else(|| missing("status", "--status"))?,
        covariates: args
            .covariates
            .clone()
            .or_else(|| config.data.covariates.clone())
            .unwrap_or_default(),
    })
}

fn load(args: &DataArgs, config: &RunConfig, run: &mut Run) -> CliResult<LoadedDataset> {
    let path = args
        .data
        .clone()
        .or_else(|| config.data.path.clone())
        .ok_or_else(|| Failure::Validation("config key `data.path` (or --data) is required".into()))?;
    let schema = schema(args, config)?;
    let loaded = load_dataset(&path, &schema)?;
    run.input(&path)?;
    Ok(loaded)
}

fn fix_map(flags: &[String], config: &RunConfig) -> CliResult<BTreeMap<String, f64>> {
    let mut fixes = config.model.fix.clone();
    for f in flags {
        let (k, v) = parse_fix_flag(f)?;
        fixes.insert(k, v);
    }
    Ok(fixes)
}

fn resolve_spec(args: &ModelArgs, config: &RunConfig, loaded: &LoadedDataset) -> CliResult<ModelSpec> {
    let text = args
        .model
        .clone()
        .or_else(|| config.model.spec.clone())
        .ok_or_else(|| Failure::Validation("config key `model.spec` (or --model) is required".into()))?;
    let fixes = fix_map(&args.fix, config)?;
    Ok(build_spec(
        &text,
        &fixes,
        loaded.data.names().to_vec(),
        args.allow_two_scales || config.model.allow_two_scales,
    )?)
}

fn kind_name(kind: CurveKind) -> &'static str {
    match kind {
        CurveKind::Survivor => "survivor",
        CurveKind::Hazard => "hazard",
        CurveKind::HazardRatio => "hazard_ratio",
        CurveKind::QuantileRatio => "quantile_ratio",
    }
}

/// Log-spaced times up to the largest observation, or probabilities in
/// (0, 1) stopping short of any cure plateau.
fn default_grid(
    kind: CurveKind,
    f: &FitResult,
    profile: &[f64],
    loaded: &LoadedDataset,
    points: usize,
) -> CliResult<Vec<f64>> {
    if points < 2 {
        return Err(Failure::Validation("--points must be at least 2".into()));
    }
    if kind == CurveKind::QuantileRatio {
        let mut top: f64 = 0.99;
        let mut base = profile.to_vec();
        for x in [0.0, 1.0] {
            for j in 0..base.len() {
                let saved = base[j];
                base[j] = x;
                if let Ok(p) = f.coefs.subject_params(&base) {
                    if let Ok(c) = p.cure_probability() {
                        top = top.min(0.99 * (1.0 - c));
                    }
                }
                base[j] = saved;
            }
        }
        if let Ok(p) = f.coefs.subject_params(profile) {
            if let Ok(c) = p.cure_probability() {
                top = top.min(0.99 * (1.0 - c));
            }
        }
        let lo = 0.01f64.min(top / 2.0);
        return Ok((0..points).map(|i| lo + (top - lo) * i as f64 / (points - 1) as f64).collect());
    }
    let times = loaded.data.times();
    let t_max = times.iter().cloned().fold(f64::MIN, f64::max);
    let t_min = times.iter().cloned().fold(f64::MAX, f64::min);
    let (a, b) = ((t_min / 10.0).ln(), t_max.ln());
    Ok((0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

fn write_fit(run: &mut Run, f: &FitResult, loaded: &LoadedDataset, level: f64) -> CliResult<()> {
    let mut report = String::new();
    let _ = writeln!(report, "model        {}", f.spec);
    let _ = writeln!(report, "covariates   {}", f.spec.covariate_names().join(", "));
    for c in &loaded.factors {
        let _ = writeln!(report, "factor       {} (reference `{}`)", c.column, c.reference);
    }
    let _ = writeln!(report, "n            {} ({} events)", f.n_obs, f.n_events);
    let _ = writeln!(report, "loglik       {:.6}", f.loglik);
    let _ = writeln!(report, "AIC          {:.4}", f.aic);
    let _ = writeln!(report, "BIC          {:.4}", f.bic);
    let _ = writeln!(
        report,
        "converged    {} ({} iterations, max |score| {:.2e})",
        f.converged, f.n_iter, f.gradient_max
    );
    let baseline = vec![0.0; f.spec.n_covariates()];
    let mut cure = None;
    if let Ok(p) = f.coefs.subject_params(&baseline) {
        let shape = p.classify_shape();
        match shape.turning_point() {
            Some(t) => {
                let _ = writeln!(report, "baseline     {} hazard, turning point {t:.4}", shape.name());
            }
            None => {
                let _ = writeln!(report, "baseline     {} hazard", shape.name());
            }
        }
        if p.is_cure() {
            if let Ok(c) = cure_report(f, &[baseline.clone()], level) {
                let e = &c.estimates[0];
                let _ = writeln!(
                    report,
                    "cure         {:.4} ({:.0}% CI {:.4} to {:.4})",
                    e.proportion,
                    level * 100.0,
                    e.lower,
                    e.upper
                );
                cure = Some(c);
            }
        }
    }
    let _ = writeln!(report, "\n{}", coefficient_table(f, level));
    if let Some(w) = &f.condition_warning {
        let _ = writeln!(report, "warning: {w}");
    }
    for w in &f.warnings {
        let _ = writeln!(report, "warning: {w}");
    }
    run.write("fit_report.txt", report.as_bytes())?;
    let mut j = f.to_json();
    j["level"] = json!(level);
    j["factors"] = serde_json::to_value(&loaded.factors).map_err(|e| Failure::Io(e.to_string()))?;
    j["cure"] = serde_json::to_value(&cure).map_err(|e| Failure::Io(e.to_string()))?;
    run.write_json("fit.json", &j)?;
    print!("{report}");
    Ok(())
}
