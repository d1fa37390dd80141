// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use rtlevolve_core::eval::{EvaluatorPool, EvaluatorSuite};
use rtlevolve_core::evolver::{DecisionKind, Evolver, EvolverError, EvolverStore, GateThresholds, RouteMode};
use rtlevolve_core::gemm::GemmProfile;
use rtlevolve_core::history::TaskRunDir;
use rtlevolve_core::llm::LlmProvider;
use rtlevolve_core::manifest::{LoadedManifest, RunManifest};
use rtlevolve_core::report::build_report;
use rtlevolve_core::search::{SearchEngine, TaskOutcome};
use rtlevolve_core::skills::{install_shipped, SkillLibrary};
use rtlevolve_core::validation::{publish, worker_process, Queue, Replayer};

use crate::{Cli, Command, Format, Mode};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_LOCKED: u8 = 3;
pub const EXIT_TOOL_MISSING: u8 = 4;

/// Error carrying a process exit status.
#[derive(Debug)]
pub struct Coded {
    pub code: u8,
    pub message: String,
}

impl std::fmt::Display for Coded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Coded {}

fn coded(code: u8, message: impl std::fmt::Display) -> anyhow::Error {
    anyhow::Error::new(Coded {
        code,
        message: message.to_string(),
    })
}

fn config_err(message: impl std::fmt::Display) -> anyhow::Error {
    coded(EXIT_CONFIG, message)
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run { run_id } => cmd_run(cli, run_id.as_deref()),
        Command::Evolve {
            store,
            runs,
            skills_dir,
            mode,
            queue_dir,
        } => cmd_evolve(cli, store, runs, skills_dir.as_deref(), *mode, queue_dir.as_deref()),
        Command::Worker {
            queue_dir,
            worker_id,
            max_jobs,
        } => cmd_worker(cli, queue_dir, worker_id, *max_jobs),
        Command::Publish { queue_dir, skills_dir } => cmd_publish(cli, queue_dir, skills_dir),
        Command::Report { paths, format, out } => cmd_report(cli, paths, *format, out.as_deref()),
        Command::InitSkills { skills_dir } => cmd_init_skills(cli, skills_dir),
        Command::EmitGemmTasks { out } => cmd_emit_gemm_tasks(cli, out),
    }
}

fn load_manifest(cli: &Cli, need_tasks: bool) -> Result<LoadedManifest> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| config_err("this command needs --config <manifest>"))?;
    let mut loaded = RunManifest::load(path, need_tasks).map_err(config_err)?;
    if let Some(seed) = cli.seed {
        loaded.manifest.search.rng_seed = seed;
    }
    Ok(loaded)
}

fn build_provider(loaded: &LoadedManifest) -> Result<Box<dyn LlmProvider>> {
    loaded.manifest.provider.build(&loaded.base).map_err(config_err)
}

fn load_library(dir: &Path) -> Result<SkillLibrary> {
    SkillLibrary::load(dir).map_err(config_err)
}

fn default_run_id(runs_dir: &Path) -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let base = format!("run-{secs}");
    let mut id = base.clone();
    let mut n = 1;
    while runs_dir.join(&id).exists() {
        n += 1;
        id = format!("{base}-{n}");
    }
    id
}

fn cmd_run(cli: &Cli, run_id: Option<&str>) -> Result<()> {
    let loaded = load_manifest(cli, true)?;
    let m = &loaded.manifest;
    let gate = m.search.promotion_gate.as_deref();
    let pool = EvaluatorPool::new(m.evaluators.clone(), gate).map_err(config_err)?;

    let needed: BTreeSet<&str> = loaded
        .score
        .required
        .iter()
        .chain(&loaded.score.hard_gates)
        .map(String::as_str)
        .chain(gate)
        .collect();
    let missing: Vec<String> = pool
        .missing_tools_by_evaluator()
        .into_iter()
        .filter(|(ev, _)| needed.contains(ev.as_str()))
        .map(|(ev, tools)| format!("{ev} needs {}", tools.join(", ")))
        .collect();
    if !missing.is_empty() {
        return Err(coded(EXIT_TOOL_MISSING, format!("missing tools: {}", missing.join("; "))));
    }

    let runs_dir = loaded.runs_dir();
    let run_id = run_id
        .map(String::from)
        .or_else(|| m.run_id.clone())
        .unwrap_or_else(|| default_run_id(&runs_dir));
    if cli.dry_run {
        println!("run {run_id} -> {}", runs_dir.join(&run_id).display());
        println!(
            "mode {}  rounds {}  minors {}  seed {}  jobs {}",
            loaded.score.mode.as_str(),
            m.search.rounds,
            m.search.minors,
            m.search.rng_seed,
            cli.jobs.max(1)
        );
        println!("evaluators {}", pool.enabled().join(", "));
        if let Some(g) = gate {
            println!("promotion gate {g}");
        }
        for t in &loaded.tasks {
            println!("task {}", t.task_id);
        }
        return Ok(());
    }
    if runs_dir.join(&run_id).exists() {
        return Err(config_err(format!("run id `{run_id}` already exists under {}", runs_dir.display())));
    }

    let provider = build_provider(&loaded)?;
    let library = loaded.skills_dir().map(|d| load_library(&d)).transpose()?;
    let engine = SearchEngine {
        config: &m.search,
        score: &loaded.score,
        evaluators: &pool,
        provider: provider.as_ref(),
        skills: library.as_ref(),
    };
    for t in &loaded.tasks {
        engine.preflight(t).map_err(config_err)?;
    }

    let next = AtomicUsize::new(0);
    let outcomes: Mutex<Vec<Option<Result<TaskOutcome, String>>>> =
        Mutex::new((0..loaded.tasks.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..cli.jobs.clamp(1, loaded.tasks.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = loaded.tasks.get(i) else { break };
                let dir = TaskRunDir::new(&runs_dir, &run_id, &task.task_id);
                let out = engine.run_task(task, dir).map_err(|e| e.to_string());
                outcomes.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(out);
            });
        }
    });

    println!(
        "{:<28} {:>7} {:>7} {:>7} {:>8} {:>10}",
        "task", "success", "func", "compile", "promoted", "final"
    );
    let mut failed = 0;
    for (task, out) in loaded.tasks.iter().zip(outcomes.into_inner().unwrap_or_else(|e| e.into_inner())) {
        match out.expect("every task ran") {
            Ok(o) => {
                let s = &o.summary;
                println!(
                    "{:<28} {:>7} {:>7.3} {:>7.3} {:>8} {:>10}",
                    task.task_id,
                    if s.final_success { "yes" } else { "no" },
                    s.best_functional_score,
                    s.compile_pass,
                    s.promoted_major_count,
                    s.final_score.map_or("-".into(), |v| format!("{v:.4}")),
                );
            }
            Err(e) => {
                failed += 1;
                println!("{:<28} error: {e}", task.task_id);
            }
        }
    }
    println!("run {run_id}: {} of {} tasks completed", loaded.tasks.len() - failed, loaded.tasks.len());
    if failed > 0 {
        anyhow::bail!("{failed} task(s) did not complete");
    }
    Ok(())
}

fn cmd_evolve(
    cli: &Cli,
    store_dir: &Path,
    runs: &[PathBuf],
    skills_dir: Option<&Path>,
    mode: Mode,
    queue_dir: Option<&Path>,
) -> Result<()> {
    let loaded = load_manifest(cli, false)?;
    let skills_dir = skills_dir
        .map(Path::to_path_buf)
        .or_else(|| loaded.skills_dir())
        .ok_or_else(|| config_err("evolve needs --skills-dir or skills_dir in the manifest"))?;
    for r in runs {
        if !r.exists() {
            return Err(config_err(format!("run directory {} does not exist", r.display())));
        }
    }
    let (route, queue) = match (mode, queue_dir) {
        (Mode::Immediate, _) => (RouteMode::Immediate, None),
        (Mode::Validated, Some(q)) => (RouteMode::Validated, Some(Queue::new(q))),
        (Mode::Validated, None) => return Err(config_err("validated mode needs --queue-dir")),
    };
    if cli.dry_run {
        println!("evolve {} run path(s) into {} ({mode:?})", runs.len(), skills_dir.display());
        return Ok(());
    }
    let store = match EvolverStore::open(store_dir) {
        Ok(s) => s,
        Err(e @ EvolverError::Locked(_)) => return Err(coded(EXIT_LOCKED, e)),
        Err(e) => return Err(e.into()),
    };
    std::fs::create_dir_all(&skills_dir).with_context(|| format!("creating {}", skills_dir.display()))?;
    let mut library = load_library(&skills_dir)?;
    let provider = build_provider(&loaded)?;
    let evolver = Evolver {
        provider: provider.as_ref(),
        thresholds: GateThresholds::default(),
        mode: route,
        queue,
    };
    let report = evolver.evolve(&store, runs, &mut library)?;
    for d in &report.diagnostics {
        eprintln!("warning: {d}");
    }
    println!("ingested {} new session(s)", report.new_sessions);
    if report.entries.is_empty() {
        println!("no groups");
        return Ok(());
    }
    println!("{:<32} {:<13} {:<8} {:<24} reason", "skill", "decision", "verdict", "route");
    for e in &report.entries {
        println!(
            "{:<32} {:<13} {:<8} {:<24} {}",
            e.skill_id,
            match e.kind {
                DecisionKind::CreateSkill => "create",
                DecisionKind::ImproveSkill => "improve",
                DecisionKind::Skip => "skip",
            },
            if e.accepted { "accept" } else { "reject" },
            if e.route.is_empty() { "-" } else { e.route.as_str() },
            e.reason
        );
    }
    println!("published {}  enqueued {}", report.published, report.enqueued);
    Ok(())
}

fn cmd_worker(cli: &Cli, queue_dir: &Path, worker_id: &str, max_jobs: usize) -> Result<()> {
    let loaded = load_manifest(cli, false)?;
    let queue = Queue::new(queue_dir);
    if cli.dry_run {
        let ids = queue.job_ids()?;
        println!("worker {worker_id} would consider {} job(s)", ids.len());
        return Ok(());
    }
    let provider = build_provider(&loaded)?;
    let replayer = Replayer {
        provider: provider.as_ref(),
        default_evaluator: loaded.manifest.evaluators.clone(),
    };
    let report = worker_process(&queue, worker_id, max_jobs, &replayer)?;
    for d in &report.diagnostics {
        eprintln!("warning: {d}");
    }
    if report.processed.is_empty() {
        println!("no jobs");
        return Ok(());
    }
    for (job, r) in &report.processed {
        println!(
            "{job}: {} candidate {:.3} baseline {:.3} over {} case(s)",
            if r.approved { "approved" } else { "not approved" },
            r.candidate_quality,
            r.baseline_quality,
            r.cases_replayed
        );
    }
    println!("processed {}", report.processed.len());
    Ok(())
}

fn cmd_publish(cli: &Cli, queue_dir: &Path, skills_dir: &Path) -> Result<()> {
    let queue = Queue::new(queue_dir);
    if cli.dry_run {
        println!("publish would scan {} job(s)", queue.job_ids()?.len());
        return Ok(());
    }
    std::fs::create_dir_all(skills_dir).with_context(|| format!("creating {}", skills_dir.display()))?;
    let mut library = load_library(skills_dir)?;
    let (entries, diags) = publish(&queue, &mut library)?;
    for d in &diags {
        eprintln!("warning: {d}");
    }
    if entries.is_empty() {
        println!("no jobs");
        return Ok(());
    }
    println!("{:<40} {:<28} {:<10} {:>7} reason", "job", "skill", "status", "results");
    for e in &entries {
        println!(
            "{:<40} {:<28} {:<10} {:>7} {}",
            e.job_id,
            e.skill_id,
            format!("{:?}", e.status).to_lowercase(),
            e.results,
            e.reason
        );
    }
    Ok(())
}

fn cmd_report(_cli: &Cli, paths: &[PathBuf], format: Format, out: Option<&Path>) -> Result<()> {
    let report = build_report(paths);
    for e in &report.excluded {
        eprintln!("warning: excluded {e}");
    }
    match format {
        Format::Table => print!("{}", report.render_table()),
        Format::Json => print!("{}", report.to_json()),
    }
    if let Some(out) = out {
        std::fs::write(out, report.to_json()).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn cmd_init_skills(cli: &Cli, skills_dir: &Path) -> Result<()> {
    if cli.dry_run {
        println!("would install shipped skills into {}", skills_dir.display());
        return Ok(());
    }
    let n = install_shipped(skills_dir)?;
    let lib = load_library(skills_dir)?;
    println!("installed {n} skill file(s); library has {} skill(s)", lib.len());
    Ok(())
}

fn cmd_emit_gemm_tasks(cli: &Cli, out: &Path) -> Result<()> {
    for p in GemmProfile::ALL {
        if cli.dry_run {
            println!("would write {}", out.join(p.id()).join("task.toml").display());
            continue;
        }
        p.emit_task_spec(out).with_context(|| format!("writing {}", p.id()))?;
        println!("{}", out.join(p.id()).join("task.toml").display());
    }
    Ok(())
}
