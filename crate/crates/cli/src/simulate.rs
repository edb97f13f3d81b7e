//! `netdisco simulate`: derive K related networks per repeat by edge
//! deletion, sample each, and write data, true structures, and a manifest.

use std::path::PathBuf;

use clap::Args;
use netdisco::datagen::{load_network, make_task_families, save_dag, save_task_data, PerturbSpec};

use crate::manifest::ManifestBuilder;
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct SimulateArgs {
    /// Source network file (JSON)
    #[arg(long)]
    pub network: PathBuf,
    /// Tasks per family
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Probability of deleting each edge
    #[arg(long, default_value_t = 0.1)]
    pub pdel: f64,
    /// Rows sampled per task
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    /// Number of independent families
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: SimulateArgs, argv: &[String]) -> CliResult<()> {
    if args.k == 0 || args.samples == 0 || args.repeats == 0 {
        return Err(CliError::usage("--k, --samples, and --repeats must be positive"));
    }
    let net = load_network(&args.network)?;
    let spec = PerturbSpec::new(args.pdel, args.seed)?.with_repeats(args.repeats);
    let families = make_task_families(&net, &spec, args.k, args.samples)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", args.out.display()))?;
    let mut manifest = ManifestBuilder::new("simulate", argv);
    manifest.seed(args.seed).input(&args.network)?;
    for (rep, (set, truths)) in families.iter().enumerate() {
        let dir = args.out.join(format!("rep{rep:02}"));
        std::fs::create_dir_all(&dir)
            .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", dir.display()))?;
        for k in 0..set.k() {
            let data_path = dir.join(format!("task{k}.csv"));
            save_task_data(set.vars(), set.task(k), &data_path)?;
            manifest.output(&data_path);
            let truth_path = dir.join(format!("truth_task{k}.json"));
            save_dag(set.vars(), &truths[k], &truth_path)?;
            manifest.output(&truth_path);
        }
    }
    manifest.write(&args.out.join("manifest.json"))?;
    log::info!(
        "wrote {} repeats x {} tasks of {} rows to {}",
        args.repeats,
        args.k,
        args.samples,
        args.out.display()
    );
    Ok(())
}
