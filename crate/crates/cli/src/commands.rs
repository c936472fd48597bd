use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use okaem::archive::{read_archive, read_params, write_archive, write_params, KnowledgeArchive};
use okaem::evolution::{run, RunLog, RunOutcome};
use okaem::model::{export_matrices, forward, KeyedMasks, ModelParams, Variant};
use okaem::problems::{make_stop_instance, Family, Problem, StopInstance, StopSpec};
use okaem::rng::{derive_seed, keyed};
use okaem::sourceopt::{generate_archive, SourceOptimizer};
use okaem::training::pretrain;
use rand::Rng;

use crate::config::{describe_evo, describe_model, describe_train, Settings};
use crate::fail::Failure;
use crate::stats::{quantile_summary, Summary};

/// Where the optimization target comes from.
#[derive(Clone, Debug, Default)]
pub struct TargetArgs {
    pub suite: Option<String>,
    pub instance: Option<PathBuf>,
    pub family: Option<String>,
    pub dim: Option<usize>,
}

pub struct Target {
    pub problem: Problem,
    pub label: String,
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, bytes)
        .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))
}

/// Output parents must already exist.
fn check_parent(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(Failure::usage(format!(
            "output directory {} does not exist",
            p.display()
        ))),
        _ => Ok(()),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_archive(path: &Path) -> Result<KnowledgeArchive, Failure> {
    read_archive(path).map_err(|e| Failure::from(e).context(path.display()))
}

fn load_params(path: &Path) -> Result<ModelParams, Failure> {
    read_params(path).map_err(|e| Failure::from(e).context(path.display()))
}

fn stop_instance(args: &TargetArgs, settings: &Settings) -> Result<Option<StopInstance>, Failure> {
    match (&args.suite, &args.instance) {
        (Some(_), Some(_)) => Err(Failure::usage(
            "give either --suite or --instance, not both",
        )),
        (Some(id), None) => {
            let spec = StopSpec::parse_suite(id)?;
            let inst = make_stop_instance(spec, settings.instance_seed()?)?
                .with_suite(id.to_ascii_uppercase());
            Ok(Some(inst))
        }
        (None, Some(path)) => Ok(Some(StopInstance::parse_descriptor(&read_text(path)?)?)),
        (None, None) => Ok(None),
    }
}

/// Target task of a suite entry, an instance file, or a single shifted
/// benchmark whose optimum is drawn from the instance seed.
pub fn resolve_target(args: &TargetArgs, settings: &Settings) -> Result<Target, Failure> {
    if let Some(inst) = stop_instance(args, settings)? {
        if args.family.is_some() {
            return Err(Failure::usage(
                "--family cannot be combined with a suite or instance",
            ));
        }
        let label = inst.suite.clone().unwrap_or_else(|| inst.spec.label());
        return Ok(Target {
            problem: inst.target,
            label,
        });
    }
    let family = args
        .family
        .as_deref()
        .ok_or_else(|| Failure::usage("no target: give --suite, --instance or --family"))?;
    let family = Family::parse(family)?;
    let dim = args
        .dim
        .or(settings.get("dim")?)
        .ok_or_else(|| Failure::usage("--family needs --dim"))?;
    let mut r = keyed(settings.instance_seed()?, &[0x7a9]);
    let optimum: Vec<f64> = (0..dim).map(|_| r.gen::<f64>()).collect();
    Ok(Target {
        problem: Problem::from_common(family, &optimum)?,
        label: format!("{}-d{dim}", family.name()),
    })
}

pub fn generate(target: &TargetArgs, settings: &Settings, out: &Path) -> Result<String, Failure> {
    check_parent(out)?;
    let inst = stop_instance(target, settings)?
        .ok_or_else(|| Failure::usage("generate needs --suite or --instance"))?;
    let seed = settings.seed()?;
    let name: String = settings.get_or("optimizer", "ga".to_string())?;
    let pop = settings.get_or("pop_size", 20)?;
    let gens = settings.get_or("source_generations", 250)?;
    let optimizer = SourceOptimizer::by_name(&name, pop, gens)?;
    let archive = generate_archive(&inst, &optimizer, seed)?;
    write_archive(&archive, out).map_err(|e| Failure::from(e).context(out.display()))?;
    let desc_path = out.with_extension("instance");
    write_file(&desc_path, inst.descriptor())?;
    Ok(format!(
        "{}\ninstance descriptor: {}",
        archive.describe(),
        desc_path.display()
    ))
}

pub fn pretrain_cmd(archive: &Path, settings: &Settings, out: &Path) -> Result<String, Failure> {
    check_parent(out)?;
    let archive = load_archive(archive)?;
    settings.check_dim(archive.dim(), "the archive")?;
    let model = settings.model_config(archive.dim(), true)?;
    let train = settings.train_config(true)?;
    let seed = settings.seed()?;
    let outcome = pretrain(&archive, &train, &model, seed)?;
    write_params(&outcome.params, out).map_err(|e| Failure::from(e).context(out.display()))?;
    let mut csv = String::new();
    writeln!(
        csv,
        "# config: seed={seed} {} {} archive_optimizer={} archive_shape={}x{}x{}x{}",
        describe_model(&model),
        describe_train(&train),
        archive.provenance().optimizer,
        archive.tasks(),
        archive.generations(),
        archive.pop_size(),
        archive.dim()
    )
    .expect("write to String");
    csv.push_str("epoch,loss\n");
    for (e, l) in outcome.epoch_losses.iter().enumerate() {
        writeln!(csv, "{},{l:e}", e + 1).expect("write to String");
    }
    let loss_path = with_suffix(out, ".loss.csv");
    write_file(&loss_path, csv)?;
    Ok(format!(
        "pre-trained {} epochs; params {}; losses {}",
        train.epochs,
        out.display(),
        loss_path.display()
    ))
}

/// One run per derived seed; the model comes from `params` when given.
fn run_many(
    target: &Target,
    settings: &Settings,
    params: Option<&ModelParams>,
    overrides: &RunOverrides,
) -> Result<(Vec<RunOutcome>, String), Failure> {
    let transfer = params.is_some();
    let dim = target.problem.dim();
    settings.check_dim(dim, "the target")?;
    let mut model = match params {
        Some(p) => {
            if p.config().dim != dim {
                return Err(Failure::from(okaem::Error::Parameter(format!(
                    "parameters are for dimension {} but the target has {dim}",
                    p.config().dim
                ))));
            }
            p.config().clone()
        }
        None => settings.model_config(dim, false)?,
    };
    if let Some(v) = overrides.variant {
        model.variant = v;
    }
    let mut train = settings.train_config(transfer)?;
    if overrides.no_selftune {
        train.selftune_steps_per_gen = 0;
    }
    let seed = settings.seed()?;
    let runs = settings.runs()?;
    let mut outcomes = Vec::with_capacity(runs);
    let mut evo_desc = String::new();
    for i in 0..runs {
        let evo = settings.evo_config(derive_seed(seed, &[0x2a7, i as u64]))?;
        evo_desc = describe_evo(&evo);
        outcomes.push(run(&target.problem, &model, &train, &evo, params)?);
    }
    let config = format!(
        "target={} seed={seed} runs={runs} pretrained={transfer} {} {} {evo_desc}",
        target.label,
        describe_model(&model),
        describe_train(&train)
    );
    Ok((outcomes, config))
}

#[derive(Clone, Copy, Debug, Default)]
struct RunOverrides {
    variant: Option<Variant>,
    no_selftune: bool,
}

fn best_record(target: &Target, outcome: &RunOutcome) -> String {
    let native = target.problem.to_native(&outcome.best);
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:e}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    format!(
        "fitness={:e}\ncommon={}\nnative={}\n",
        outcome.best_fitness,
        join(&outcome.best),
        join(&native)
    )
}

pub fn optimize(
    target: &TargetArgs,
    params: Option<&Path>,
    settings: &Settings,
    out: &Path,
) -> Result<String, Failure> {
    let target = resolve_target(target, settings)?;
    let params = params.map(load_params).transpose()?;
    ensure_dir(out)?;
    let (outcomes, config) =
        run_many(&target, settings, params.as_ref(), &RunOverrides::default())?;
    let mut logs = Vec::with_capacity(outcomes.len());
    for (i, o) in outcomes.iter().enumerate() {
        write_file(
            &out.join(format!("run_{i}.csv")),
            o.log.to_csv(Some(&format!("{config} run={i}"))),
        )?;
        write_file(&out.join(format!("best_{i}.txt")), best_record(&target, o))?;
        logs.push(o.log.clone());
    }
    let finals: Vec<f64> = outcomes.iter().map(|o| o.best_fitness).collect();
    if outcomes.len() > 1 {
        write_file(&out.join("aggregate.csv"), aggregate_csv(&logs, &config)?)?;
    }
    let s = quantile_summary(&finals);
    Ok(format!(
        "{} run(s) on {}: median final best {:e} (q1 {:e}, q3 {:e}); outputs in {}",
        outcomes.len(),
        target.label,
        s.median,
        s.q1,
        s.q3,
        out.display()
    ))
}

pub const ABLATION_VARIANTS: [&str; 4] = ["full", "crossover_only", "mutation_only", "no_selftune"];

pub fn ablate(
    target: &TargetArgs,
    archive: Option<&Path>,
    variants: &[String],
    settings: &Settings,
    out: &Path,
) -> Result<String, Failure> {
    check_parent(out)?;
    let target = resolve_target(target, settings)?;
    let archive = archive.map(load_archive).transpose()?;
    if let Some(a) = &archive {
        if a.dim() != target.problem.dim() {
            return Err(Failure::from(okaem::Error::Parameter(format!(
                "archive dimension {} but target dimension {}",
                a.dim(),
                target.problem.dim()
            ))));
        }
    }
    let mut per_run = String::from("variant,run,final_best\n");
    let mut summary = String::from("variant,runs,median,q1,q3,min,max\n");
    let mut config_line = String::new();
    for name in variants {
        let (variant, no_selftune) = match name.as_str() {
            "no_selftune" => (Variant::Full, true),
            other => (Variant::parse(other)?, false),
        };
        let overrides = RunOverrides {
            variant: Some(variant),
            no_selftune,
        };
        let params = match &archive {
            Some(a) => {
                let mut model = settings.model_config(a.dim(), true)?;
                model.variant = variant;
                let train = settings.train_config(true)?;
                Some(pretrain(a, &train, &model, settings.seed()?)?.params)
            }
            None => None,
        };
        let (outcomes, config) = run_many(&target, settings, params.as_ref(), &overrides)?;
        if config_line.is_empty() {
            config_line = config;
        }
        let finals: Vec<f64> = outcomes.iter().map(|o| o.best_fitness).collect();
        for (i, f) in finals.iter().enumerate() {
            writeln!(per_run, "{name},{i},{f:e}").expect("write to String");
        }
        let Summary {
            median,
            q1,
            q3,
            min,
            max,
        } = quantile_summary(&finals);
        writeln!(
            summary,
            "{name},{},{median:e},{q1:e},{q3:e},{min:e},{max:e}",
            finals.len()
        )
        .expect("write to String");
    }
    let header = format!(
        "# config: {config_line} variants={} archive={}\n",
        variants.join("+"),
        archive.is_some()
    );
    write_file(out, format!("{header}{summary}"))?;
    let runs_path = with_suffix(out, ".runs.csv");
    write_file(&runs_path, format!("{header}{per_run}"))?;
    Ok(format!(
        "{}{}per-run values in {}",
        header.trim_start_matches("# "),
        summary,
        runs_path.display()
    ))
}

pub fn inspect(
    params: &Path,
    archive: &Path,
    task: usize,
    settings: &Settings,
    out: &Path,
) -> Result<String, Failure> {
    let params = load_params(params)?;
    let archive = load_archive(archive)?;
    if archive.dim() != params.config().dim {
        return Err(Failure::from(okaem::Error::Parameter(format!(
            "archive dimension {} but parameters are for {}",
            archive.dim(),
            params.config().dim
        ))));
    }
    if task >= archive.tasks() {
        return Err(Failure::usage(format!(
            "task {task} out of range; the archive has {}",
            archive.tasks()
        )));
    }
    ensure_dir(out)?;
    let seed = settings.seed()?;
    let last = archive.generations();
    let mut written = Vec::new();
    for generation in [1, last] {
        let entry = archive.get(task, generation - 1);
        let pass = forward(
            &entry.population,
            &entry.fitness,
            &params,
            &mut KeyedMasks::new(seed, generation as u64),
        )?;
        for rec in export_matrices(&pass.trace, generation) {
            let kind = match rec.kind {
                okaem::model::MatrixKind::Selection => "selection",
                okaem::model::MatrixKind::Mutation => "mutation",
            };
            let path = out.join(format!("{kind}_gen{generation}_layer{}.txt", rec.layer));
            write_file(&path, rec.to_text())?;
            written.push(path.display().to_string());
        }
        if last == 1 {
            break;
        }
    }
    Ok(format!(
        "wrote {} matrices:\n{}",
        written.len(),
        written.join("\n")
    ))
}

/// Per-generation median and quartiles of the best-so-far curves.
fn aggregate_csv(logs: &[RunLog], config: &str) -> Result<String, Failure> {
    let len = logs.iter().map(|l| l.records().len()).min().unwrap_or(0);
    if logs.iter().any(|l| l.records().len() != len) {
        return Err(Failure::usage("run logs differ in length"));
    }
    let mut s = format!("# config: {config}\ngen,runs,median,q1,q3,min,max\n");
    for g in 0..len {
        let vals: Vec<f64> = logs.iter().map(|l| l.records()[g].best).collect();
        let q = quantile_summary(&vals);
        writeln!(
            s,
            "{},{},{:e},{:e},{:e},{:e},{:e}",
            logs[0].records()[g].generation,
            vals.len(),
            q.median,
            q.q1,
            q.q3,
            q.min,
            q.max
        )
        .expect("write to String");
    }
    Ok(s)
}

pub fn report(inputs: &[PathBuf], out: &Path) -> Result<String, Failure> {
    check_parent(out)?;
    if inputs.is_empty() {
        return Err(Failure::usage("report needs at least one run log"));
    }
    let logs = inputs
        .iter()
        .map(|p| {
            RunLog::parse_csv(&read_text(p)?).map_err(|e| Failure::from(e).context(p.display()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
    let csv = aggregate_csv(&logs, &format!("report inputs={}", names.join("+")))?;
    write_file(out, &csv)?;
    let finals: Vec<f64> = logs.iter().filter_map(RunLog::final_best).collect();
    let q = quantile_summary(&finals);
    Ok(format!(
        "{} logs; final best median {:e} IQR [{:e}, {:e}]; table in {}",
        logs.len(),
        q.median,
        q.q1,
        q.q3,
        out.display()
    ))
}
