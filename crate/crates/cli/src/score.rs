//! `netdisco score`: family scores for one data file, persisted to a cache
//! keyed by (data hash, r, ess).

use std::path::PathBuf;

use clap::Args;
use netdisco::datagen::load_task_data;
use netdisco::scoring::{build_all_score_tables, ScoreConfig};

use crate::cache::{check_key, read_cache, write_cache, CacheKey};
use crate::manifest::{file_sha256, ManifestBuilder};
use crate::CliResult;

#[derive(Args)]
pub struct ScoreArgs {
    /// Task data file (CSV with name:arity header)
    #[arg(long)]
    pub data: PathBuf,
    /// In-degree cap
    #[arg(long, default_value_t = 3)]
    pub r: usize,
    /// Equivalent sample size
    #[arg(long, default_value_t = 1.0)]
    pub ess: f64,
    /// Cache file to create or reuse
    #[arg(long)]
    pub cache: PathBuf,
}

pub fn run(args: ScoreArgs, argv: &[String]) -> CliResult<()> {
    let expect = CacheKey { data_hash: file_sha256(&args.data)?, r: args.r as u16, ess: args.ess };
    if args.cache.exists() {
        let (key, tables) = read_cache(&args.cache)?;
        check_key(&args.cache, &key, &expect)?;
        log::info!(
            "reusing cache {} ({} tables, r={}, ess={})",
            args.cache.display(),
            tables.len(),
            key.r,
            key.ess
        );
        return Ok(());
    }
    let (vars, data) = load_task_data(&args.data, 0)?;
    let cfg = ScoreConfig { max_parents: args.r, ess: args.ess, max_parent_configs: 1 << 20 };
    cfg.validate_for(vars.n())?;
    let tables = build_all_score_tables(&data, &vars, &cfg)?;
    write_cache(&args.cache, &expect, &tables)?;
    let entries: usize = tables.iter().map(|t| t.len()).sum();
    log::info!(
        "scored {} families ({entries} entries) into {}",
        tables.len(),
        args.cache.display()
    );
    let mut manifest = ManifestBuilder::new("score", argv);
    manifest.input(&args.data)?.output(&args.cache);
    let manifest_path = args.cache.with_extension("manifest.json");
    manifest.write(&manifest_path)?;
    Ok(())
}
