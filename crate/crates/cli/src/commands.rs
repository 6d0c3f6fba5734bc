use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hygieia_core::config::{AppConfig, ConfigError};
use hygieia_core::domain::{GeneFinding, ReasoningTrace};
use hygieia_core::evaluation::{load_dataset, run_benchmark, BenchmarkOptions, LoadMode};
use hygieia_core::gateway::Script;
use hygieia_core::router::{embed_case, evaluate_router, fit_router, Embedder, EmbeddingVector, Metric, RouteLabel, RouterModel};
use hygieia_core::{DiagnosisOutcome, PatientCase, PipelineConfig, TaskKind, TaskOutput, TaskRequest};
use serde::Deserialize;

use crate::args::{BenchArgs, CaseArgs, Cli, Command, MetricArg, RouterCommand, ServeArgs, TaskArg};
use crate::exit::{CliError, CliResult};

struct Context {
    config: AppConfig,
    script: Option<Script>,
}

fn config_err(e: ConfigError) -> CliError {
    CliError::config(e)
}

fn load_context(cli: &Cli) -> CliResult<Context> {
    let config = match &cli.config {
        Some(path) => AppConfig::load(path).map_err(config_err)?,
        None => AppConfig::default(),
    };
    let script = match &cli.script {
        Some(path) => Some(
            Script::load(path).map_err(|e| CliError::config(format!("cannot load script {}: {e}", path.display())))?,
        ),
        None => None,
    };
    Ok(Context { config, script })
}

pub async fn run(cli: Cli) -> CliResult {
    let ctx = load_context(&cli)?;
    match cli.command {
        Command::Diagnose(args) => case_command(ctx, args, TaskKind::Diagnose).await,
        Command::Genes(args) => case_command(ctx, args, TaskKind::PrioritizeGenes).await,
        Command::Router(cmd) => router_command(ctx, cmd).await,
        Command::Bench(args) => bench_command(ctx, args).await,
        Command::Serve(args) => serve_command(ctx, args).await,
    }
}

fn split_list(text: &str) -> Vec<String> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn pipeline_config(base: &PipelineConfig, samples: Option<u32>, iters: Option<u32>, seed: Option<u64>) -> PipelineConfig {
    let mut c = base.clone();
    if let Some(s) = samples {
        c.confidence_samples = s;
    }
    if let Some(n) = iters {
        c.max_verify_iters = n;
    }
    if seed.is_some() {
        c.sampling_seed = seed;
    }
    c
}

async fn case_command(ctx: Context, args: CaseArgs, task: TaskKind) -> CliResult {
    let phenotypes = split_list(&args.phenotypes);
    if phenotypes.is_empty() {
        return Err(CliError::usage("--phenotypes needs at least one non-blank entry"));
    }
    let mut case = PatientCase::new(args.id.clone(), phenotypes);
    if let Some(g) = &args.genes {
        let genes: Vec<GeneFinding> = split_list(g).into_iter().map(GeneFinding::new).collect();
        if !genes.is_empty() {
            case = case.with_genes(genes);
        }
    }
    if let Some(n) = &args.notes {
        case = case.with_record_text(n.clone());
    }
    let mut config = pipeline_config(&ctx.config.pipeline, args.samples, args.max_iters, args.seed);
    if let Some(k) = args.top {
        config.answer_top_k = k;
    }
    config.validate().map_err(CliError::usage)?;

    let engine = ctx.config.build_engine(ctx.script).await.map_err(config_err)?;
    let request = match task {
        TaskKind::PrioritizeGenes => TaskRequest::prioritize_genes(case, config),
        _ => TaskRequest::diagnose(case, config),
    };
    let outcome = match engine.orchestrator.run(&request).await {
        Ok(TaskOutput::Outcome(o)) => o,
        Ok(TaskOutput::Verification(_)) => unreachable!("only outcome tasks are requested"),
        Err(failure) => {
            if args.trace {
                print!("{}", render_trace(&failure.trace));
            }
            return Err(CliError::pipeline(match failure.error.raw_response() {
                Some(raw) => format!("{}\nraw response:\n{raw}", failure.error),
                None => failure.error.to_string(),
            }));
        }
    };
    if args.json {
        let mut value = serde_json::to_value(&outcome).expect("outcome serializes");
        if !args.trace {
            if let Some(map) = value.as_object_mut() {
                map.remove("trace");
            }
        }
        println!("{}", serde_json::to_string_pretty(&value).expect("json"));
    } else {
        print!("{}", render_outcome(&outcome));
        if args.trace {
            print!("{}", render_trace(&outcome.trace));
        }
    }
    Ok(())
}

fn render_outcome(o: &DiagnosisOutcome) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "route: {:?}", o.route);
    let _ = writeln!(out, "converged: {} (verify iterations: {})", o.converged, o.verify_iterations_used);
    let _ = writeln!(out, "c_f: {:.2}", o.final_confidence);
    for (i, a) in o.answers.iter().enumerate() {
        let _ = writeln!(out, "{}. {} (confidence {:.2})", i + 1, a.label, a.confidence);
    }
    out
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("    {l}\n")).collect()
}

fn render_trace(trace: &ReasoningTrace) -> String {
    let mut out = String::from("trace:\n");
    for e in &trace.events {
        let _ = writeln!(
            out,
            "[{}] {:?} {} ({:?}, {} prompt + {} completion tokens)",
            e.seq, e.stage, e.agent_role, e.kind, e.token_usage.prompt_tokens, e.token_usage.completion_tokens
        );
        if !e.rendered_prompt.is_empty() {
            let _ = writeln!(out, "  prompt:");
            out.push_str(&indent(&e.rendered_prompt));
        }
        if !e.raw_response.is_empty() {
            let _ = writeln!(out, "  response:");
            out.push_str(&indent(&e.raw_response));
        }
        for n in &e.notes {
            let _ = writeln!(out, "  note: {n}");
        }
    }
    out
}

/// One labeled router example: either a precomputed embedding or a case
/// to embed with the configured embedder.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabeledLine {
    label: String,
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    embedding: Option<Vec<f64>>,
    #[serde(default)]
    phenotypes: Option<Vec<String>>,
}

async fn load_labeled(path: &Path, embedder: &dyn Embedder) -> CliResult<Vec<(EmbeddingVector, RouteLabel)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::pipeline(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |m: String| CliError::pipeline(format!("{} line {}: {m}", path.display(), i + 1));
        let l: LabeledLine = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
        let v = match (l.embedding, l.phenotypes) {
            (Some(values), None) => EmbeddingVector::new(values).map_err(|e| at(e.to_string()))?,
            (None, Some(phenotypes)) => {
                let case = PatientCase::new(l.id.unwrap_or_else(|| format!("line-{}", i + 1)), phenotypes);
                embed_case(embedder, &case).await.map_err(|e| at(e.to_string()))?
            }
            _ => return Err(at("needs exactly one of embedding or phenotypes".into())),
        };
        out.push((v, RouteLabel::new(l.label)));
    }
    Ok(out)
}

async fn router_command(ctx: Context, cmd: RouterCommand) -> CliResult {
    let embedder = ctx.config.build_embedder().map_err(config_err)?;
    match cmd {
        RouterCommand::Fit { train, out, k, metric } => {
            let examples = load_labeled(&train, embedder.as_ref()).await?;
            let metric = match metric {
                MetricArg::Cosine => Metric::Cosine,
                MetricArg::Euclidean => Metric::Euclidean,
            };
            let n = examples.len();
            let model = fit_router(examples, k.unwrap_or(ctx.config.pipeline.knn_k), metric).map_err(CliError::pipeline)?;
            model.save(&out).map_err(CliError::pipeline)?;
            println!(
                "fitted {n} reference points (dim {}, k {}, labels {}) -> {}",
                model.dim(),
                model.knn_k(),
                model.label_set().iter().map(|l| l.as_str()).collect::<Vec<_>>().join(", "),
                out.display()
            );
        }
        RouterCommand::Eval { model, test } => {
            let model = RouterModel::load(&model).map_err(CliError::pipeline)?;
            let examples = load_labeled(&test, embedder.as_ref()).await?;
            let eval = evaluate_router(&model, &examples).map_err(CliError::pipeline)?;
            println!("accuracy: {:.4} ({}/{})", eval.accuracy, eval.correct, eval.n);
            print!("{}", eval.table());
        }
    }
    Ok(())
}

async fn bench_command(ctx: Context, args: BenchArgs) -> CliResult {
    let task = match args.task {
        TaskArg::Diagnose => TaskKind::Diagnose,
        TaskArg::Genes => TaskKind::PrioritizeGenes,
    };
    let mode = if args.lenient { LoadMode::Lenient } else { LoadMode::Strict };
    let loaded = load_dataset(&args.dataset, mode, Some(task)).map_err(CliError::pipeline)?;
    for skipped in &loaded.skipped {
        eprintln!("warning: skipped line {}: {}", skipped.line, skipped.message);
    }
    let engine = ctx.config.build_engine(ctx.script).await.map_err(config_err)?;
    let options = BenchmarkOptions {
        dataset_name: args.name.clone().unwrap_or_else(|| stem(&args.dataset)),
        ks: args.k.clone(),
        parallel: args.parallel.max(1),
        seed: args.seed,
        normalizer: engine.normalizer.clone(),
    };
    let config = pipeline_config(&ctx.config.pipeline, args.samples, args.max_iters, None);
    let report = run_benchmark(&loaded.records, task, &config, &engine.orchestrator, &options)
        .await
        .map_err(|e| match e {
            hygieia_core::evaluation::EvalError::InvalidK(_) => CliError::usage(e),
            other => CliError::pipeline(other),
        })?;
    if let Some(path) = &args.report {
        write_file(path, &report.to_json())?;
    }
    print!("{}", report.table());
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn write_file(path: &PathBuf, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::pipeline(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::pipeline(format!("cannot write {}: {e}", path.display())))
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutdown requested");
}

async fn serve_command(ctx: Context, args: ServeArgs) -> CliResult {
    use hygieia_service::ServiceError;
    let mut config = ctx.config;
    if let Some(listen) = args.listen {
        config.listen = listen;
        config.validate().map_err(config_err)?;
    }
    let state = hygieia_service::state_from_config(&config, ctx.script)
        .await
        .map_err(|e| match e {
            ServiceError::Store(_) | ServiceError::Serve(_) => CliError::pipeline(e),
            other => CliError::config(other),
        })?;
    let listener = tokio::net::TcpListener::bind(&config.listen)
        .await
        .map_err(|e| CliError::config(format!("cannot listen on {}: {e}", config.listen)))?;
    let addr = listener
        .local_addr()
        .map_err(|e| CliError::pipeline(format!("cannot read listen address: {e}")))?;
    announce(&format!("listening on http://{addr}"));
    hygieia_service::serve(listener, state, config.cors_origin.as_deref(), shutdown_signal())
        .await
        .map_err(CliError::pipeline)?;
    announce("journals flushed, bye");
    Ok(())
}

/// Status line for a supervisor; a closed stdout must not stop the server.
fn announce(line: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}").and_then(|_| out.flush());
}
