use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};

use dmpinn::config::{Experiment, ExperimentFile};
use dmpinn::eval::{evaluate_model, evaluate_prediction};
use dmpinn::hessian::FlatParams;
use dmpinn::reference::{reference, GridResolution, ReferenceGrid};
use dmpinn::sampling::{sample, write_points_csv};
use dmpinn::train::{mean, train as train_run, RunOutcome, StopRule};
use dmpinn::{ArchitectureKind, Compact, ProblemKind};

use crate::output::{
    aligned_table, create, write_json, CompareSummary, GroupSummary, ParamsFile, SeedSummary,
    TimingEntry, TrainSummary,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad config, flags or input files; exit code 2.
    Config(String),
    /// A run produced a non-finite loss; outputs so far are kept.
    Diverged(String),
    Run(anyhow::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid config: {m}"),
            CliError::Diverged(m) => write!(f, "diverged: {m}"),
            CliError::Run(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Run(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub struct RunRequest {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub iters: Option<usize>,
    pub lr: Option<f64>,
    pub out: Option<PathBuf>,
    pub out_root: PathBuf,
}

pub struct EvaluateRequest {
    pub params: PathBuf,
    pub problem: Option<String>,
    pub grid: Option<String>,
    pub out: Option<PathBuf>,
    pub reference_as_prediction: bool,
}

fn load_experiment(req: &RunRequest) -> Result<(Experiment, PathBuf)> {
    let text = fs::read_to_string(&req.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", req.config.display())))?;
    let mut file = ExperimentFile::parse(&text).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = req.seed {
        file.seed = Some(seed);
        file.seeds = None;
    }
    if let Some(n) = req.iters {
        file.iterations = Some(n);
        file.time_budget_secs = None;
    }
    if let Some(lr) = req.lr {
        file.learning_rate = Some(lr);
        file.learning_rates = None;
    }
    let mut exp = file.resolve().map_err(|e| CliError::Config(e.to_string()))?;
    let dir = match (&req.out, &exp.out_dir) {
        (Some(out), _) => out.clone(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => {
            let stem = req
                .config
                .file_stem()
                .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
            req.out_root.join(stem)
        }
    };
    exp.out_dir = Some(dir.to_string_lossy().into_owned());
    Ok((exp, dir))
}

fn parse_problem(name: &str) -> Result<ProblemKind> {
    name.parse().map_err(CliError::Config)
}

fn parse_grid(spec: Option<&str>, default: GridResolution) -> Result<GridResolution> {
    let Some(spec) = spec else {
        return Ok(default);
    };
    let bad = || CliError::Config(format!("grid: expected SPACExTIME such as 256x101, got `{spec}`"));
    let (s, t) = spec.split_once('x').ok_or_else(bad)?;
    let space: usize = s.trim().parse().map_err(|_| bad())?;
    let time: usize = t.trim().parse().map_err(|_| bad())?;
    if space < 2 || time < 2 {
        return Err(bad());
    }
    Ok(GridResolution::new(space, time))
}

fn reference_for(exp: &Experiment) -> Result<ReferenceGrid> {
    eprintln!("computing {} reference on {}x{}", exp.problem, exp.eval_grid.space, exp.eval_grid.time);
    let spec = exp.run_config(exp.architectures[0], exp.learning_rates[0], 0).problem;
    Ok(reference(&spec, exp.eval_grid).map_err(|e| anyhow!(e))?)
}

struct GroupResult {
    summary: GroupSummary,
    timing: Vec<TimingEntry>,
}

impl GroupResult {
    fn ms_per_iter(&self) -> f64 {
        let v: Vec<f64> = self.timing.iter().map(|t| t.ms_per_iter).collect();
        mean(&v)
    }
}

fn save_run(dir: &Path, exp: &Experiment, outcome: &RunOutcome) -> anyhow::Result<()> {
    let mut w = create(&dir.join("history.csv"))?;
    outcome.history.write_csv(&mut w)?;
    w.flush()?;
    write_json(
        &dir.join("params.json"),
        &ParamsFile {
            problem: exp.problem,
            normalize: exp.normalize,
            eval_grid: exp.eval_grid,
            network: FlatParams::from_params(&outcome.params),
        },
    )
}

fn run_group(
    exp: &Experiment,
    arch: ArchitectureKind,
    lr: f64,
    dir: &Path,
    grid: &ReferenceGrid,
) -> Result<GroupResult> {
    let mut runs = Vec::new();
    let mut timing = Vec::new();
    for &seed in &exp.seeds {
        let cfg = exp.run_config(arch, lr, seed);
        let outcome = train_run(&cfg, Some(grid)).map_err(|e| anyhow!(e))?;
        let seed_dir = dir.join(format!("seed_{seed}"));
        save_run(&seed_dir, exp, &outcome)?;
        let rel_l2 = outcome.final_eval.as_ref().map(|e| e.rel_l2);
        eprintln!(
            "{arch} lr={lr} seed={seed}: {} iterations, rel_l2 {}",
            outcome.iterations,
            rel_l2.map_or_else(|| "n/a (diverged)".to_string(), |v| format!("{v:.4e}"))
        );
        runs.push(SeedSummary {
            seed,
            rel_l2,
            iterations: outcome.iterations,
            final_loss: outcome.history.last().map_or(f64::NAN, |r| r.loss_total),
            diverged_at: outcome.diverged,
        });
        timing.push(TimingEntry {
            architecture: arch,
            learning_rate: lr,
            seed,
            wall_ms: outcome.wall_ms,
            ms_per_iter: outcome.ms_per_iter(),
        });
    }
    let finals: Option<Vec<f64>> = runs.iter().map(|r| r.rel_l2).collect();
    Ok(GroupResult {
        summary: GroupSummary {
            architecture: arch,
            learning_rate: lr,
            mean_rel_l2: finals.map(|v| mean(&v)),
            runs,
        },
        timing,
    })
}

fn divergence_report(groups: &[GroupResult]) -> Option<String> {
    let parts: Vec<String> = groups
        .iter()
        .flat_map(|g| {
            g.summary.runs.iter().filter_map(move |r| {
                r.diverged_at.map(|i| {
                    format!(
                        "{} lr={} seed={} at iteration {i}",
                        g.summary.architecture, g.summary.learning_rate, r.seed
                    )
                })
            })
        })
        .collect();
    (!parts.is_empty()).then(|| parts.join("; "))
}

fn print_stop(exp: &Experiment) {
    match exp.stop {
        StopRule::Iterations(n) => eprintln!("{} runs of {n} iterations", exp.run_count()),
        StopRule::TimeBudget(s) => eprintln!("{} runs of {s} s each", exp.run_count()),
    }
}

pub fn train(req: &RunRequest) -> Result<()> {
    let (exp, dir) = load_experiment(req)?;
    if exp.architectures.len() != 1 {
        return Err(CliError::Config(
            "architectures: train takes a single architecture; use compare for several".into(),
        ));
    }
    if exp.learning_rates.len() != 1 {
        return Err(CliError::Config(
            "learning_rates: train takes a single learning rate; use compare for a sweep".into(),
        ));
    }
    print_stop(&exp);
    let grid = reference_for(&exp)?;
    let group = run_group(&exp, exp.architectures[0], exp.learning_rates[0], &dir, &grid)?;
    write_json(
        &dir.join("summary.json"),
        &TrainSummary {
            problem: exp.problem,
            group: &group.summary,
            config: &exp,
        },
    )?;
    write_json(&dir.join("timing.json"), &group.timing)?;
    if let Some(m) = group.summary.mean_rel_l2 {
        println!("mean rel_l2 over {} seeds: {m}", exp.seeds.len());
    }
    match divergence_report(std::slice::from_ref(&group)) {
        Some(msg) => Err(CliError::Diverged(msg)),
        None => Ok(()),
    }
}

pub fn compare(req: &RunRequest) -> Result<()> {
    let (exp, dir) = load_experiment(req)?;
    print_stop(&exp);
    let grid = reference_for(&exp)?;
    let sweep = exp.learning_rates.len() > 1;
    let mut groups = Vec::new();
    for &lr in &exp.learning_rates {
        for &arch in &exp.architectures {
            let sub = if sweep {
                dir.join(format!("{arch}_lr{lr}"))
            } else {
                dir.join(arch.label())
            };
            groups.push(run_group(&exp, arch, lr, &sub, &grid)?);
        }
    }

    let fmt_err = |g: &GroupResult| {
        g.summary
            .mean_rel_l2
            .map_or_else(|| "diverged".to_string(), |v| format!("{v:.3e}"))
    };
    let mut csv = create(&dir.join("comparison.csv"))?;
    writeln!(csv, "architecture,learning_rate,mean_rel_l2,ms_per_iter")
        .context("writing comparison.csv")?;
    for g in &groups {
        writeln!(
            csv,
            "{},{},{},{}",
            g.summary.architecture,
            g.summary.learning_rate,
            g.summary.mean_rel_l2.map(|v| Compact(v).to_string()).unwrap_or_default(),
            Compact(g.ms_per_iter())
        )
        .context("writing comparison.csv")?;
    }
    csv.flush().context("writing comparison.csv")?;

    let rows: Vec<Vec<String>> = groups
        .iter()
        .map(|g| {
            vec![
                g.summary.architecture.to_string(),
                g.summary.learning_rate.to_string(),
                fmt_err(g),
                format!("{:.1}", g.ms_per_iter()),
            ]
        })
        .collect();
    let table = aligned_table(&["architecture", "lr", "mean rel-L2", "ms/iter"], &rows);
    fs::write(dir.join("comparison.txt"), &table).context("writing comparison.txt")?;
    print!("{table}");

    let summaries: Vec<GroupSummary> = groups.iter().map(|g| g.summary.clone()).collect();
    write_json(
        &dir.join("summary.json"),
        &CompareSummary {
            problem: exp.problem,
            groups: &summaries,
            config: &exp,
        },
    )?;
    let timing: Vec<&TimingEntry> = groups.iter().flat_map(|g| &g.timing).collect();
    write_json(&dir.join("timing.json"), &timing)?;
    match divergence_report(&groups) {
        Some(msg) => Err(CliError::Diverged(msg)),
        None => Ok(()),
    }
}

pub fn evaluate(req: &EvaluateRequest) -> Result<()> {
    let text = fs::read_to_string(&req.params)
        .map_err(|e| CliError::Config(format!("{}: {e}", req.params.display())))?;
    let file: ParamsFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", req.params.display())))?;
    let kind = match &req.problem {
        Some(name) => parse_problem(name)?,
        None => file.problem,
    };
    let problem = kind.preset();
    if file.network.config.input_dim != problem.input_dim() {
        return Err(CliError::Config(format!(
            "parameter manifest mismatch: {kind} expects input_dim {}, file has {}",
            problem.input_dim(),
            file.network.config.input_dim
        )));
    }
    let params = file
        .network
        .to_params()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let res = parse_grid(req.grid.as_deref(), file.eval_grid)?;
    let grid = reference(&problem, res).map_err(|e| anyhow!(e))?;
    let eval = if req.reference_as_prediction {
        evaluate_prediction(grid.values.clone(), &grid)
    } else {
        evaluate_model(&params, &problem, file.normalize, &grid)
    }
    .map_err(|e| anyhow!(e))?;
    if let Some(out) = &req.out {
        let mut w = create(out)?;
        grid.write_csv(&mut w, Some(&eval.prediction))
            .map_err(|e| anyhow!(e))?;
        w.flush().context("writing error field")?;
    }
    println!("rel_l2 = {}", eval.rel_l2);
    println!("abs_l2 = {}", eval.abs_l2);
    Ok(())
}

pub fn write_reference(problem: &str, grid: Option<&str>, out: &Path) -> Result<()> {
    let problem = parse_problem(problem)?.preset();
    let res = parse_grid(grid, GridResolution::default())?;
    let grid = reference(&problem, res).map_err(|e| anyhow!(e))?;
    let mut w = create(out)?;
    grid.write_csv(&mut w, None).map_err(|e| anyhow!(e))?;
    w.flush().context("writing reference")?;
    Ok(())
}

pub fn write_samples(problem: &str, seed: u64, out: &Path) -> Result<()> {
    let problem = parse_problem(problem)?.preset();
    let set = sample(&problem.sample_plan(), seed);
    let labels = problem.bounds.labels();
    let mut parts = vec![("interior.csv", set.interior.clone())];
    if let Some(initial) = &set.initial {
        parts.push(("initial.csv", initial.clone()));
    }
    parts.push(("boundary.csv", set.boundary.stacked()));
    for (name, points) in parts {
        let mut w = create(&out.join(name))?;
        write_points_csv(&points, &labels, &mut w).context("writing samples")?;
        w.flush().context("writing samples")?;
    }
    Ok(())
}
