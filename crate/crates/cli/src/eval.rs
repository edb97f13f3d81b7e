//! `netdisco eval`: ROC/AUC of estimated posteriors against a ground truth.
//!
//! Two shapes of input. Pointed at matrix files (or a directory of them),
//! it emits one ROC point list and one AUC per matrix. Pointed at an
//! experiment grid laid out as
//!
//! ```text
//! ESTIMATES/m{SIZE}/{stl|mtl|pool}/rep{R}/posterior_task{K}.txt
//! TRUTHS/rep{R}/pstar_task{K}.txt        (or truth_task{K}.json)
//! ```
//!
//! it additionally produces the per-sample-size comparison table with
//! paired-t verdicts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use netdisco::datagen::load_dag;
use netdisco::evalrep::{
    experiment_report, roc_auc, Convention, GroundTruth, Mode, ResultGrid, RocCurve,
};
use netdisco::model::EdgePosteriorMatrix;

use crate::manifest::ManifestBuilder;
use crate::{CliError, CliResult};

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Standard,
    Paper,
}

#[derive(Args)]
pub struct EvalArgs {
    /// A matrix file, a directory of matrix files, or an experiment grid
    #[arg(long)]
    pub estimates: PathBuf,
    /// Ground-truth posterior matrix applied to every estimate
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Ground-truth structure files (one per estimate, or one for all)
    #[arg(long, num_args = 1..)]
    pub truth_dags: Vec<PathBuf>,
    /// Per-repeat truth directory for grid evaluation
    #[arg(long)]
    pub truth_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ConventionArg::Standard)]
    pub convention: ConventionArg,
    /// Significance level for paired-t verdicts
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn convention(arg: ConventionArg) -> Convention {
    match arg {
        ConventionArg::Standard => Convention::Standard,
        ConventionArg::Paper => Convention::Paper,
    }
}

fn read_matrix(path: &Path) -> CliResult<EdgePosteriorMatrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    EdgePosteriorMatrix::from_text(&text)
        .map_err(|e| CliError::data(anyhow::anyhow!("{}: {e}", path.display())))
}

fn truth_from_matrix(path: &Path) -> CliResult<GroundTruth> {
    Ok(GroundTruth::from_matrix(read_matrix(path)?))
}

fn truth_from_dag(path: &Path) -> CliResult<GroundTruth> {
    let (_, dag) = load_dag(path)?;
    Ok(GroundTruth::from_dag(&dag))
}

fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("tau,fp_rate,tp_rate\n");
    for p in &curve.points {
        s.push_str(&format!("{},{},{}\n", p.tau, p.fp_rate, p.tp_rate));
    }
    s
}

fn write(path: &Path, text: &str, manifest: &mut ManifestBuilder) -> CliResult<()> {
    std::fs::write(path, text)
        .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?;
    manifest.output(path);
    Ok(())
}

pub fn run(args: EvalArgs, argv: &[String]) -> CliResult<()> {
    std::fs::create_dir_all(&args.out)
        .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", args.out.display()))?;
    let grid_mode = args.estimates.is_dir()
        && sorted_dir(&args.estimates)?
            .iter()
            .any(|p| p.is_dir() && p.file_name().is_some_and(|s| s.to_string_lossy().starts_with('m')));
    if grid_mode {
        eval_grid(&args, argv)
    } else {
        eval_simple(&args, argv)
    }
}

fn sorted_dir(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| anyhow::anyhow!("cannot list {}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    Ok(entries)
}

fn eval_simple(args: &EvalArgs, argv: &[String]) -> CliResult<()> {
    let files: Vec<PathBuf> = if args.estimates.is_dir() {
        sorted_dir(&args.estimates)?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e == "txt"))
            .collect()
    } else {
        vec![args.estimates.clone()]
    };
    if files.is_empty() {
        return Err(CliError::data(anyhow::anyhow!(
            "no matrix files found under {}",
            args.estimates.display()
        )));
    }
    let truths: Vec<GroundTruth> = match (&args.truth, args.truth_dags.as_slice()) {
        (Some(matrix), []) => vec![truth_from_matrix(matrix)?; files.len()],
        (None, [single]) => vec![truth_from_dag(single)?; files.len()],
        (None, many) if many.len() == files.len() => {
            many.iter().map(|p| truth_from_dag(p)).collect::<CliResult<_>>()?
        }
        (None, []) => {
            return Err(CliError::usage("provide --truth or --truth-dags"));
        }
        _ => {
            return Err(CliError::usage(
                "--truth-dags must name one file, or exactly one per estimate, and cannot be mixed with --truth",
            ))
        }
    };

    let mut manifest = ManifestBuilder::new("eval", argv);
    for f in &files {
        manifest.input(f)?;
    }
    let conv = convention(args.convention);
    let mut auc_lines = String::from("file,auc\n");
    for (file, truth) in files.iter().zip(&truths) {
        let matrix = read_matrix(file)?;
        if matrix.n() != truth.n() {
            return Err(CliError::data(anyhow::anyhow!(
                "{}: matrix is {}x{} but the truth covers {} variables",
                file.display(),
                matrix.n(),
                matrix.n(),
                truth.n()
            )));
        }
        let curve = roc_auc(&matrix, truth, conv)?;
        let stem = file.file_stem().unwrap_or_default().to_string_lossy().to_string();
        write(&args.out.join(format!("roc_{stem}.csv")), &roc_csv(&curve), &mut manifest)?;
        auc_lines.push_str(&format!("{},{}\n", file.display(), curve.auc));
        println!("{}  auc {:.4}", file.display(), curve.auc);
    }
    write(&args.out.join("auc.csv"), &auc_lines, &mut manifest)?;
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(())
}

struct GridCell {
    mode: Mode,
    samples: usize,
    rep: usize,
    task_matrices: Vec<PathBuf>,
}

fn scan_grid(root: &Path) -> CliResult<Vec<GridCell>> {
    let mut cells = Vec::new();
    for m_dir in sorted_dir(root)? {
        let Some(name) = m_dir.file_name().map(|s| s.to_string_lossy().to_string()) else {
            continue;
        };
        let Some(samples) = name.strip_prefix('m').and_then(|s| s.parse::<usize>().ok()) else {
            continue;
        };
        for mode_dir in sorted_dir(&m_dir)? {
            let mode = match mode_dir.file_name().map(|s| s.to_string_lossy().to_string()).as_deref()
            {
                Some("stl") => Mode::Stl,
                Some("mtl") => Mode::Mtl,
                Some("pool") => Mode::Pool,
                _ => continue,
            };
            for rep_dir in sorted_dir(&mode_dir)? {
                let Some(rep) = rep_dir
                    .file_name()
                    .and_then(|s| s.to_string_lossy().strip_prefix("rep").map(String::from))
                    .and_then(|s| s.parse::<usize>().ok())
                else {
                    continue;
                };
                let task_matrices: Vec<PathBuf> = sorted_dir(&rep_dir)?
                    .into_iter()
                    .filter(|p| {
                        p.file_name()
                            .is_some_and(|s| s.to_string_lossy().starts_with("posterior_task"))
                    })
                    .collect();
                if !task_matrices.is_empty() {
                    cells.push(GridCell { mode, samples, rep, task_matrices });
                }
            }
        }
    }
    Ok(cells)
}

fn grid_truth(truth_dir: &Path, rep: usize, task: usize) -> CliResult<GroundTruth> {
    let matrix = truth_dir.join(format!("rep{rep:02}")).join(format!("pstar_task{task}.txt"));
    if matrix.exists() {
        return truth_from_matrix(&matrix);
    }
    let dag = truth_dir.join(format!("rep{rep:02}")).join(format!("truth_task{task}.json"));
    if dag.exists() {
        return truth_from_dag(&dag);
    }
    Err(CliError::data(anyhow::anyhow!(
        "no truth for rep {rep} task {task} under {} (looked for {} and {})",
        truth_dir.display(),
        matrix.display(),
        dag.display()
    )))
}

fn eval_grid(args: &EvalArgs, argv: &[String]) -> CliResult<()> {
    let truth_dir = args
        .truth_dir
        .as_ref()
        .ok_or_else(|| CliError::usage("grid evaluation needs --truth-dir"))?;
    let cells = scan_grid(&args.estimates)?;
    if cells.is_empty() {
        return Err(CliError::data(anyhow::anyhow!(
            "no m*/mode/rep*/posterior_task*.txt cells under {}",
            args.estimates.display()
        )));
    }
    let conv = convention(args.convention);
    let mut manifest = ManifestBuilder::new("eval", argv);
    let mut grid = ResultGrid::new();
    let mut auc_lines = String::from("mode,samples,rep,auc\n");
    // aggregated ROC points per (mode, samples): mean rates across reps and
    // tasks at each threshold
    let mut roc_acc: BTreeMap<(Mode, usize), (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for cell in &cells {
        let mut mean_auc = 0.0;
        for (task, path) in cell.task_matrices.iter().enumerate() {
            let matrix = read_matrix(path)?;
            let truth = grid_truth(truth_dir, cell.rep, task)?;
            let curve = roc_auc(&matrix, &truth, conv)?;
            mean_auc += curve.auc / cell.task_matrices.len() as f64;
            let entry = roc_acc
                .entry((cell.mode, cell.samples))
                .or_insert_with(|| (vec![0.0; curve.points.len()], vec![0.0; curve.points.len()], 0));
            for (i, p) in curve.points.iter().enumerate() {
                entry.0[i] += p.fp_rate;
                entry.1[i] += p.tp_rate;
            }
            entry.2 += 1;
        }
        grid.insert(cell.mode, cell.samples, cell.rep, mean_auc);
        auc_lines.push_str(&format!("{},{},{},{}\n", cell.mode, cell.samples, cell.rep, mean_auc));
    }
    write(&args.out.join("auc_grid.csv"), &auc_lines, &mut manifest)?;
    for ((mode, samples), (fp, tp, count)) in &roc_acc {
        let mut s = String::from("tau,fp_rate,tp_rate\n");
        for i in 0..fp.len() {
            let tau = i as f64 / (fp.len() - 1) as f64;
            s.push_str(&format!("{},{},{}\n", tau, fp[i] / *count as f64, tp[i] / *count as f64));
        }
        let name = format!("roc_m{samples}_{}.csv", mode.to_string().to_lowercase());
        write(&args.out.join(name), &s, &mut manifest)?;
    }
    let report = experiment_report(&grid, args.alpha);
    write(&args.out.join("report.csv"), &report.to_csv(), &mut manifest)?;
    write(
        &args.out.join("report.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
        &mut manifest,
    )?;
    let rendered = report.render();
    write(&args.out.join("report.txt"), &rendered, &mut manifest)?;
    println!("{rendered}");
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(())
}
