//! `netdisco discover`: edge posteriors for one or more task files in
//! single-task, multitask, or pooled mode, with either engine.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use netdisco::datagen::load_task_data;
use netdisco::exact::{EngineError, ExactConfig};
use netdisco::mcmc::McmcConfig;
use netdisco::model::{TaskData, TaskSet, VariableTable};
use netdisco::scoring::{FamilyScoreTable, ScoreConfig};
use netdisco::taskset::{
    run_mtl_on_scores, run_pool, run_stl_on_scores, DiscoverConfig, EngineChoice, TasksetError,
};
use netdisco::transfer::{Normalization, PriorMode};

use crate::cache::{check_key, read_cache, CacheKey};
use crate::manifest::{file_sha256, ManifestBuilder};
use crate::{CliError, CliResult};

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Stl,
    Mtl,
    Pool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Exact,
    Mcmc,
}

#[derive(Args)]
pub struct DiscoverArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Task data files; multitask mode needs at least two
    #[arg(long, num_args = 1.., required = true)]
    pub data: Vec<PathBuf>,
    /// In-degree cap
    #[arg(long, default_value_t = 3)]
    pub r: usize,
    /// Equivalent sample size
    #[arg(long, default_value_t = 1.0)]
    pub ess: f64,
    /// Transfer prior: `bma` or `fixed:LAMBDA`
    #[arg(long, default_value = "bma")]
    pub prior: String,
    /// Cross-task sums keep only the h best donor sets (default: full sums
    /// up to 12 variables, 1000 beyond)
    #[arg(long)]
    pub h: Option<usize>,
    #[arg(long, value_enum, default_value_t = EngineArg::Exact)]
    pub engine: EngineArg,
    #[arg(long, default_value_t = 1000)]
    pub mcmc_burnin: usize,
    #[arg(long, default_value_t = 100)]
    pub mcmc_samples: usize,
    #[arg(long, default_value_t = 10)]
    pub mcmc_thin: usize,
    /// Accepted for replication-script compatibility; has no effect here
    #[arg(long)]
    pub bucket_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Raise the exact engine's node ceiling (default 25)
    #[arg(long)]
    pub exact_limit: Option<usize>,
    /// Normalize the transfer prior over capped parent-set pairs instead of
    /// the closed form
    #[arg(long)]
    pub strict_normalization: bool,
    /// Score caches, one per data file in order (stl/mtl only)
    #[arg(long, num_args = 0..)]
    pub cache: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_prior(spec: &str) -> CliResult<PriorMode> {
    if spec == "bma" {
        return Ok(PriorMode::Bma);
    }
    if let Some(rest) = spec.strip_prefix("fixed:") {
        let lambda: f64 = rest
            .parse()
            .map_err(|_| CliError::usage(format!("bad lambda in --prior {spec}")))?;
        return Ok(PriorMode::FixedLambda(lambda));
    }
    Err(CliError::usage(format!("--prior must be `bma` or `fixed:LAMBDA`, got `{spec}`")))
}

fn classify(e: TasksetError) -> CliError {
    match e {
        TasksetError::Engine(EngineError::ExceedsCeiling { .. }) => CliError::ceiling(e),
        TasksetError::NotEnoughTasks(_) => CliError::usage(e.to_string()),
        other => CliError::data(other),
    }
}

fn load_tasks(paths: &[PathBuf]) -> CliResult<(VariableTable, Vec<TaskData>)> {
    let mut shared: Option<VariableTable> = None;
    let mut tasks = Vec::with_capacity(paths.len());
    for (k, path) in paths.iter().enumerate() {
        let (vars, data) = load_task_data(path, k)?;
        match &shared {
            None => shared = Some(vars),
            Some(existing) if *existing == vars => {}
            Some(_) => {
                return Err(CliError::data(anyhow::anyhow!(
                    "task file {} declares different variables or arities than the first file",
                    path.display()
                )))
            }
        }
        tasks.push(data);
    }
    Ok((shared.expect("at least one data file"), tasks))
}

fn load_cached_scores(
    args: &DiscoverArgs,
    vars: &VariableTable,
) -> CliResult<Vec<Vec<FamilyScoreTable>>> {
    let mut base = Vec::with_capacity(args.cache.len());
    for (data_path, cache_path) in args.data.iter().zip(&args.cache) {
        let expect = CacheKey {
            data_hash: file_sha256(data_path)?,
            r: args.r as u16,
            ess: args.ess,
        };
        let (key, tables) = read_cache(cache_path)?;
        check_key(cache_path, &key, &expect)?;
        if tables.len() != vars.n() {
            return Err(CliError::data(anyhow::anyhow!(
                "cache {} holds {} tables for {} variables",
                cache_path.display(),
                tables.len(),
                vars.n()
            )));
        }
        log::info!("reusing cache {}", cache_path.display());
        base.push(tables);
    }
    Ok(base)
}

pub fn run(args: DiscoverArgs, argv: &[String]) -> CliResult<()> {
    if args.bucket_size.is_some() {
        log::warn!("--bucket-size belongs to a different sampler and is ignored here");
    }
    if args.mode == ModeArg::Mtl && args.data.len() < 2 {
        return Err(CliError::usage("multitask mode needs at least two --data files"));
    }
    if !args.cache.is_empty() {
        if args.mode == ModeArg::Pool {
            return Err(CliError::usage(
                "score caches cannot feed pooled mode; pooling rescores the concatenated rows",
            ));
        }
        if args.cache.len() != args.data.len() {
            return Err(CliError::usage("--cache paths must match --data files one to one"));
        }
    }
    let prior = parse_prior(&args.prior)?;
    let (vars, tasks) = load_tasks(&args.data)?;
    let n = vars.n();
    let score = ScoreConfig { max_parents: args.r, ess: args.ess, max_parent_configs: 1 << 20 };
    score.validate_for(n)?;
    let engine = match args.engine {
        EngineArg::Exact => EngineChoice::Exact(ExactConfig {
            max_nodes: args.exact_limit.unwrap_or_else(|| ExactConfig::default().max_nodes),
        }),
        EngineArg::Mcmc => EngineChoice::Mcmc(McmcConfig {
            burn_in: args.mcmc_burnin,
            total_samples: args.mcmc_samples,
            thin_interval: args.mcmc_thin,
            seed: args.seed,
            adjacent_prob: 0.75,
        }),
    };
    let cfg = DiscoverConfig {
        score,
        engine,
        prior,
        h: args.h,
        normalization: if args.strict_normalization {
            Normalization::Truncated
        } else {
            Normalization::ClosedForm
        },
    };
    let task_set = TaskSet::new(vars.clone(), tasks)?;

    let matrices = match args.mode {
        ModeArg::Pool => {
            vec![run_pool(&task_set, &cfg).map_err(classify)?; task_set.k()]
        }
        ModeArg::Stl | ModeArg::Mtl => {
            let base = if args.cache.is_empty() {
                netdisco::taskset::base_scores(&task_set, &cfg.score).map_err(classify)?
            } else {
                load_cached_scores(&args, &vars)?
            };
            if args.mode == ModeArg::Stl {
                run_stl_on_scores(n, &base, &cfg).map_err(classify)?
            } else {
                run_mtl_on_scores(n, &base, &cfg).map_err(classify)?
            }
        }
    };

    std::fs::create_dir_all(&args.out)
        .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", args.out.display()))?;
    let mut manifest = ManifestBuilder::new("discover", argv);
    manifest.seed(args.seed);
    for path in args.data.iter().chain(&args.cache) {
        manifest.input(path)?;
    }
    for (k, matrix) in matrices.iter().enumerate() {
        let path = args.out.join(format!("posterior_task{k}.txt"));
        std::fs::write(&path, matrix.to_text())
            .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?;
        manifest.output(&path);
    }
    manifest.write(&args.out.join("manifest.json"))?;
    log::info!("wrote {} posterior matrices to {}", matrices.len(), args.out.display());
    Ok(())
}
