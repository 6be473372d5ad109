mod args;
mod manifest;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::Parser;
use rating_debias::eval::EvalSettings;
use rating_debias::graph::bin_bounds;
use rating_debias::oracle::{build_dense, solve_linear};
use rating_debias::output::{write_bias_csv, write_labeled, write_ratings_csv, write_trace_json};
use rating_debias::scalar::linf_distance;
use rating_debias::{
    degree_histogram, evaluate, generate, ingest_ground_truth, ingest_ratings, iterations_needed,
    solve, GroundTruth, InitialBias, PlantedInstance, RatingGraph, SolverConfig, SolverResult,
    SynthParams,
};

use args::{BinsArgs, Cli, Command, EvalArgs, OracleArgs, RatingsArgs, SolveArgs, SolverArgs, SynthArgs};
use manifest::RunManifest;

/// 0 ok, 2 no convergence, 3 oracle not applicable; errors exit 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Ok,
    NotConverged,
    OracleInapplicable,
}

impl From<Outcome> for ExitCode {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Ok => ExitCode::SUCCESS,
            Outcome::NotConverged => ExitCode::from(2),
            Outcome::OracleInapplicable => ExitCode::from(3),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::OracleCheck(a) => cmd_oracle_check(&a),
        Command::Bins(a) => cmd_bins(&a),
    };
    match outcome {
        Ok(o) => o.into(),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    ensure!(alpha > 0.0 && alpha < 1.0, "--alpha must lie in (0, 1), got {alpha}");
    Ok(())
}

fn load_graph(input: &RatingsArgs) -> Result<RatingGraph> {
    ingest_ratings(&input.ratings, &input.ingest_options())
        .with_context(|| format!("reading ratings from {}", input.ratings.display()))
}

/// `user_id,value` lines; a first line whose value is not numeric is a header.
fn read_user_values(path: &Path, graph: &RatingGraph) -> Result<Vec<(usize, f64)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (id, value) = line
            .split_once(',')
            .with_context(|| format!("{}:{}: expected user_id,value", path.display(), k + 1))?;
        let value = match value.trim().parse::<f64>() {
            Ok(v) => v,
            Err(_) if k == 0 => continue,
            Err(e) => bail!("{}:{}: {e}", path.display(), k + 1),
        };
        let user = graph
            .user_index(id.trim())
            .with_context(|| format!("{}:{}: unknown user {:?}", path.display(), k + 1, id.trim()))?;
        out.push((user, value));
    }
    Ok(out)
}

fn solver_config(args: &SolverArgs, graph: &RatingGraph) -> Result<SolverConfig> {
    let mut config = SolverConfig::new(args.alpha).with_epsilon(args.epsilon).with_threads(args.threads);
    config.max_iterations = match args.max_iters {
        Some(n) => n,
        None => iterations_needed(args.alpha, args.epsilon)?,
    };
    if let Some(path) = &args.alpha_overrides {
        for (user, a) in read_user_values(path, graph)? {
            config.alpha_overrides.insert(user, a);
        }
    }
    config.initial_bias = match args.seed_bias.as_str() {
        "zeros" => InitialBias::Zeros,
        s if s.starts_with("const:") => InitialBias::Constant(
            s["const:".len()..]
                .parse()
                .with_context(|| format!("bad --seed-bias {s:?}"))?,
        ),
        file => {
            let mut seed = vec![0.0; graph.num_users()];
            for (user, b) in read_user_values(Path::new(file), graph)? {
                seed[user] = b;
            }
            InitialBias::Explicit(seed)
        }
    };
    config.validate()?;
    Ok(config)
}

fn create_file(outdir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = outdir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_solution(outdir: &Path, graph: &RatingGraph, result: &SolverResult, suffix: &str) -> Result<Vec<String>> {
    let names = [
        format!("bias{suffix}.csv"),
        format!("ratings{suffix}.csv"),
        format!("trace{suffix}.json"),
    ];
    write_bias_csv(graph, &result.bias, create_file(outdir, &names[0])?)?;
    write_ratings_csv(graph, &result.true_rating, create_file(outdir, &names[1])?)?;
    let mut trace = create_file(outdir, &names[2])?;
    write_trace_json(&result.trace, &mut trace)?;
    trace.flush()?;
    Ok(names.to_vec())
}

fn cmd_solve(args: &SolveArgs) -> Result<Outcome> {
    check_alpha(args.solver.alpha)?;
    let mut manifest = RunManifest::new("solve", args)?;
    let graph = manifest.time("ingest", || load_graph(&args.input))?;
    let config = solver_config(&args.solver, &graph)?;
    let result = manifest.time("solve", || solve(&graph, &config))?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    manifest.outputs = write_solution(&args.out, &graph, &result, "")?;
    manifest.note("users", graph.num_users());
    manifest.note("items", graph.num_items());
    manifest.note("edges", graph.num_edges());
    manifest.note("max_iterations", config.max_iterations);
    manifest.note("iterations_run", result.iterations_run);
    manifest.note("converged", result.converged);
    manifest.note("clamp_fired", result.clamp_fired);

    if args.oracle {
        let system = build_dense(&graph, args.solver.alpha)?;
        let direct = manifest.time("oracle", || solve_linear(&system))?;
        let gap = linf_distance(&result.bias, &direct.bias).max(linf_distance(&result.true_rating, &direct.rating));
        manifest.note("oracle_linf_gap", gap);
        manifest.note("oracle_applicable", !result.clamp_fired);
        println!(
            "oracle: L-inf gap {gap:.3e}{}",
            if result.clamp_fired { " (clamping fired; not comparable)" } else { "" }
        );
    }
    manifest.write(&args.out)?;

    println!(
        "{} users, {} items, {} edges: {} after {} iterations",
        graph.num_users(),
        graph.num_items(),
        graph.num_edges(),
        if result.converged { "converged" } else { "not converged" },
        result.iterations_run
    );
    Ok(if result.converged { Outcome::Ok } else { Outcome::NotConverged })
}

fn cmd_eval(args: &EvalArgs) -> Result<Outcome> {
    ensure!(!args.alphas.is_empty(), "--alphas needs at least one value");
    for &a in &args.alphas {
        check_alpha(a)?;
    }
    ensure!(args.threads >= 1, "--threads must be at least 1");
    let mut manifest = RunManifest::new("eval", args)?;
    let graph = manifest.time("ingest", || load_graph(&args.input))?;
    let mut truth: GroundTruth = ingest_ground_truth(&args.truth, &args.truth_scale, &args.truth_format())
        .with_context(|| format!("reading ground truth from {}", args.truth.display()))?;
    truth.flag_unmatched(&graph);
    let matched = truth.len() - truth.unmatched.len();
    ensure!(matched > 0, "no ground-truth item appears in the rating graph");

    let settings = EvalSettings::default();
    let means = graph.mean_ratings();
    let mut reports = vec![evaluate("mean", &graph, &means, None, &truth.scores, &settings)?];
    let mut outputs = Vec::new();
    let mut runs = BTreeMap::new();

    for &alpha in &args.alphas {
        let mut config = SolverConfig::new(alpha).with_epsilon(args.epsilon).with_threads(args.threads);
        config.max_iterations = match args.max_iters {
            Some(n) => n,
            None => iterations_needed(alpha, args.epsilon)?,
        };
        let result = manifest.time(&format!("solve_alpha_{alpha}"), || solve(&graph, &config))?;
        runs.insert(
            format!("alpha={alpha}"),
            serde_json::json!({"converged": result.converged, "iterations_run": result.iterations_run}),
        );
        reports.push(evaluate(
            format!("debias(alpha={alpha})"),
            &graph,
            &result.true_rating,
            Some(&result.bias),
            &truth.scores,
            &settings,
        )?);
        outputs.push((format!("-alpha-{alpha}"), result));
    }

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for (suffix, result) in &outputs {
        manifest.outputs.extend(write_solution(&args.out, &graph, result, suffix)?);
    }
    for (report, suffix) in reports
        .iter()
        .zip(std::iter::once("-mean".to_owned()).chain(outputs.iter().map(|(s, _)| s.clone())))
    {
        let name = format!("bins{suffix}.csv");
        let mut w = create_file(&args.out, &name)?;
        report.write_bins_csv(&mut w)?;
        w.flush()?;
        manifest.outputs.push(name);
    }
    let mut w = create_file(&args.out, "report.json")?;
    serde_json::to_writer_pretty(&mut w, &reports)?;
    w.flush()?;
    manifest.outputs.push("report.json".into());

    manifest.note("truth_items", truth.len());
    manifest.note("truth_unmatched", truth.unmatched.len());
    manifest.note("runs", runs);
    manifest.write(&args.out)?;

    for r in &reports {
        println!(
            "{:<24} mse {:.6}  rank error {:.3}  ({} items)",
            r.method_label, r.mse_overall, r.rank_error_overall, r.evaluated_items
        );
    }
    Ok(Outcome::Ok)
}

fn cmd_synth(args: &SynthArgs) -> Result<Outcome> {
    let params = SynthParams {
        num_users: args.users,
        num_items: args.items,
        density: args.density,
        bias_range: args.bias_range,
        quality_range: args.quality_range,
        noise_sigma: args.noise,
        seed: args.seed,
        max_retries: args.max_retries,
    };
    let mut manifest = RunManifest::new("synth", args)?;
    let inst: PlantedInstance = manifest.time("generate", || generate(&params))?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = create_file(&args.out, "edges.csv")?;
    inst.graph.write_edges_csv(&mut w)?;
    w.flush()?;
    write_truth_csv(&args.out, &inst)?;
    write_labeled(
        inst.graph.user_ids(),
        &inst.planted_bias,
        "user_id,bias",
        create_file(&args.out, "planted_bias.csv")?,
    )?;
    manifest.outputs = vec!["edges.csv".into(), "truth.csv".into(), "planted_bias.csv".into()];
    manifest.note("edges", inst.graph.num_edges());
    manifest.note("attempts", inst.attempts);
    manifest.note("weights_unclamped", params.weights_unclamped());
    manifest.write(&args.out)?;
    println!(
        "{} users, {} items, {} edges written to {}",
        inst.graph.num_users(),
        inst.graph.num_items(),
        inst.graph.num_edges(),
        args.out.display()
    );
    Ok(Outcome::Ok)
}

/// Header-less `item_id,score` so the file reads back as ground truth.
fn write_truth_csv(outdir: &Path, inst: &PlantedInstance) -> Result<()> {
    let mut w = create_file(outdir, "truth.csv")?;
    for (id, q) in inst.graph.item_ids().iter().zip(&inst.planted_quality) {
        writeln!(w, "{id},{q:.9}")?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_oracle_check(args: &OracleArgs) -> Result<Outcome> {
    check_alpha(args.alpha)?;
    let mut manifest = RunManifest::new("oracle-check", args)?;
    let graph = manifest.time("ingest", || load_graph(&args.input))?;
    let system = build_dense(&graph, args.alpha)?;
    let config = SolverConfig::new(args.alpha).with_epsilon(1e-13).with_max_iterations(100_000);
    let result = manifest.time("solve", || solve(&graph, &config))?;
    manifest.note("clamp_fired", result.clamp_fired);
    manifest.note("iterations_run", result.iterations_run);

    let outcome = if result.clamp_fired {
        println!("clamping fired during iteration; the linear oracle does not apply");
        Outcome::OracleInapplicable
    } else {
        let direct = manifest.time("oracle", || solve_linear(&system))?;
        let gap = linf_distance(&result.bias, &direct.bias).max(linf_distance(&result.true_rating, &direct.rating));
        let residual = system.residual(&direct.bias, &direct.rating);
        manifest.note("linf_gap", gap);
        manifest.note("residual", residual);
        println!("L-inf gap {gap:.3e} (tolerance {:.1e}), residual {residual:.3e}", args.tolerance);
        if let Some(out) = &args.out {
            fs::create_dir_all(out)?;
            manifest.write(out)?;
        }
        ensure!(gap <= args.tolerance, "iterative and direct solutions differ by {gap:.3e}");
        return Ok(Outcome::Ok);
    };
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        manifest.write(out)?;
    }
    Ok(outcome)
}

fn cmd_bins(args: &BinsArgs) -> Result<Outcome> {
    let mut manifest = RunManifest::new("bins", args)?;
    let graph = manifest.time("ingest", || load_graph(&args.input))?;
    let counts = degree_histogram(&graph);
    let mut table = String::from("bin,min_ratings,max_ratings,items\n");
    for (k, &n) in counts.iter().enumerate() {
        let (lo, hi) = bin_bounds(k + 1).expect("valid bin");
        let hi = hi.map(|h| h.to_string()).unwrap_or_default();
        table.push_str(&format!("{},{lo},{hi},{n}\n", k + 1));
    }
    print!("{table}");
    println!("total items: {}", counts.iter().sum::<usize>());
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("bins.csv"), &table)?;
        manifest.outputs = vec!["bins.csv".into()];
        manifest.write(out)?;
    }
    Ok(Outcome::Ok)
}
