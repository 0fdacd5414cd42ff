//! `prism`: batch front end over prism-core.
//!
//! Exit codes: 0 success, 1 property or certification failure, 2 usage or
//! I/O error. Reports go to stdout in manifest or seed order; diagnostics go
//! to stderr.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use prism_core::matio::VariantRecord;
use prism_core::oracle::{
    rank_experiment, run_sweep, write_sweep_csv, Perturbation, RankConfig, Sizes, SweepConfig,
    SweepSummary, DEFAULT_GRID, DEFAULT_MAGNITUDES, MONOTONE_MIN_RS,
};
use prism_core::regularizer::{self, DEFAULT_LAMBDAS, DEFAULT_LR, DEFAULT_SEEDS, DEFAULT_STEPS};
use prism_core::report::{self, fmt_exact, fmt_table, Format, VariantRow};
use prism_core::{
    decompose, prism_bound_with, read_manifest, read_matrix, AlignmentMode, BoundReport,
    Execution, FeatureMatrix, GammaPath, HeadMatrix, KFeatMode, LipschitzConstants, PrismError,
    ScaleShapeDecomposition,
};

const GRADCHECK_TOL: f64 = 1e-5;

#[derive(Parser)]
#[command(name = "prism", version, about = "Risk-gap bounds between a target model and its proxies")]
struct Cli {
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlignmentArg {
    Identity,
    Procrustes,
}

impl From<AlignmentArg> for AlignmentMode {
    fn from(a: AlignmentArg) -> Self {
        match a {
            AlignmentArg::Identity => AlignmentMode::Identity,
            AlignmentArg::Procrustes => AlignmentMode::Procrustes,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepAlignmentArg {
    Identity,
    Procrustes,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum KFeatArg {
    Exact,
    Spectral,
}

impl From<KFeatArg> for KFeatMode {
    fn from(k: KFeatArg) -> Self {
        match k {
            KFeatArg::Exact => KFeatMode::Exact,
            KFeatArg::Spectral => KFeatMode::Spectral,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Table => Format::Table,
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(clap::Args)]
struct SizeArgs {
    /// Rows per feature matrix.
    #[arg(long, default_value_t = Sizes::DEFAULT.n)]
    n: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = Sizes::DEFAULT.d)]
    d: usize,
    /// Vocabulary size.
    #[arg(long, default_value_t = Sizes::DEFAULT.v)]
    v: usize,
}

impl SizeArgs {
    fn sizes(&self) -> Sizes {
        Sizes {
            n: self.n,
            d: self.d,
            v: self.v,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Scale/shape split of the feature mismatch.
    Decompose {
        /// Target feature matrix (with PROXY; alternative to --manifest).
        #[arg(requires = "proxy", conflicts_with = "manifest")]
        target: Option<PathBuf>,
        proxy: Option<PathBuf>,
        #[arg(long, required_unless_present = "target")]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "identity")]
        alignment: AlignmentArg,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
        /// Mark unreadable variants as failed rows instead of aborting.
        #[arg(long)]
        skip_bad: bool,
    },
    /// Full bound for every variant in a manifest.
    Bound {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "identity")]
        alignment: AlignmentArg,
        #[arg(long, value_enum, default_value = "exact")]
        k_feat_mode: KFeatArg,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
        /// Mark unreadable variants as failed rows instead of aborting.
        #[arg(long)]
        skip_bad: bool,
    },
    /// Synthetic validity sweep; exits 1 on any bound violation.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        trials: usize,
        #[command(flatten)]
        sizes: SizeArgs,
        /// Treat --n/--d/--v as upper bounds and draw sizes per trial.
        #[arg(long)]
        random_sizes: bool,
        #[arg(long, value_delimiter = ',', default_values_t = Perturbation::ALL.to_vec())]
        kinds: Vec<Perturbation>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_MAGNITUDES.to_vec())]
        magnitudes: Vec<f64>,
        #[arg(long, value_enum, default_value = "both")]
        alignment: SweepAlignmentArg,
        #[arg(long, value_enum, default_value = "exact")]
        k_feat_mode: KFeatArg,
        /// Write every record to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Rank correlation of bound and gap along each perturbation family.
    Rank {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        sizes: SizeArgs,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GRID.to_vec())]
        grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = Perturbation::ALL.to_vec())]
        kinds: Vec<Perturbation>,
        #[arg(long, value_enum, default_value = "identity")]
        alignment: AlignmentArg,
        #[arg(long, value_enum, default_value = "exact")]
        k_feat_mode: KFeatArg,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },
    /// Compare the shape-penalty gradient with central differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 20)]
        coordinates: usize,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        d: usize,
    },
    /// Fine-tuning drift demo; one CSV per (seed, λ).
    Demo {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS.to_vec())]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LAMBDAS.to_vec())]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = DEFAULT_LR)]
        lr: f64,
    },
}

enum Failure {
    /// Usage or I/O; exit 2.
    Usage(String),
    /// A checked property did not hold; exit 1.
    Property(String),
}

impl From<PrismError> for Failure {
    fn from(e: PrismError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(format!("write error: {e}"))
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let execution = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = run(cli.command, execution, &mut out);
    let flushed = out.flush();
    match (result, flushed) {
        (Ok(()), Ok(())) => ExitCode::SUCCESS,
        (Ok(()), Err(e)) => {
            eprintln!("prism: write error: {e}");
            ExitCode::from(2)
        }
        (Err(Failure::Property(msg)), _) => {
            eprintln!("prism: {msg}");
            ExitCode::from(1)
        }
        (Err(Failure::Usage(msg)), _) => {
            eprintln!("prism: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command, execution: Execution, out: &mut impl Write) -> CmdResult {
    match command {
        Command::Decompose {
            target,
            proxy,
            manifest,
            alignment,
            format,
            skip_bad,
        } => cmd_decompose(target, proxy, manifest, alignment.into(), format.into(), skip_bad, execution, out),
        Command::Bound {
            manifest,
            alignment,
            k_feat_mode,
            format,
            skip_bad,
        } => cmd_bound(&manifest, alignment.into(), k_feat_mode.into(), format.into(), skip_bad, execution, out),
        Command::Verify {
            seed,
            trials,
            sizes,
            random_sizes,
            kinds,
            magnitudes,
            alignment,
            k_feat_mode,
            csv,
        } => {
            let alignments = match alignment {
                SweepAlignmentArg::Identity => vec![AlignmentMode::Identity],
                SweepAlignmentArg::Procrustes => vec![AlignmentMode::Procrustes],
                SweepAlignmentArg::Both => AlignmentMode::ALL.to_vec(),
            };
            let cfg = SweepConfig {
                seed,
                trials,
                kinds,
                magnitudes,
                sizes: sizes.sizes(),
                random_sizes,
                alignments,
                k_feat_mode: k_feat_mode.into(),
                execution,
            };
            cmd_verify(&cfg, csv.as_deref(), out)
        }
        Command::Rank {
            seed,
            sizes,
            grid,
            kinds,
            alignment,
            k_feat_mode,
            format,
        } => {
            let cfg = RankConfig {
                seed,
                grid,
                sizes: sizes.sizes(),
                kinds,
                alignment: alignment.into(),
                k_feat_mode: k_feat_mode.into(),
                execution,
            };
            cmd_rank(&cfg, format.into(), out)
        }
        Command::Gradcheck {
            seed,
            instances,
            coordinates,
            n,
            d,
        } => {
            let r = regularizer::gradcheck(seed, instances, coordinates, n, d)?;
            writeln!(out, "instances: {}", r.instances)?;
            writeln!(out, "coordinates: {}", r.coordinates)?;
            writeln!(out, "max_rel_error: {}", fmt_exact(r.max_rel_error))?;
            if r.max_rel_error > GRADCHECK_TOL {
                return Err(Failure::Property(format!(
                    "gradient check failed: max relative error {:e} > {GRADCHECK_TOL:e}",
                    r.max_rel_error
                )));
            }
            Ok(())
        }
        Command::Demo {
            out_dir,
            seeds,
            lambdas,
            steps,
            lr,
        } => cmd_demo(&out_dir, &seeds, &lambdas, steps, lr, execution, out),
    }
}

fn load_features(path: &Path) -> Result<FeatureMatrix, PrismError> {
    FeatureMatrix::new(read_matrix(path)?)
}

fn load_head(path: &Path) -> Result<HeadMatrix, PrismError> {
    HeadMatrix::new(read_matrix(path)?)
}

fn with_path<T>(r: Result<T, PrismError>, path: &Path) -> Result<T, String> {
    r.map_err(|e| format!("{}: {e}", path.display()))
}

/// Run `f` on every variant, keeping manifest order. Without `skip_bad` the
/// first failure aborts with exit 2; with it, failed rows are emitted and
/// the command exits 1.
fn per_variant<T: Send, F>(
    variants: &[VariantRecord],
    skip_bad: bool,
    execution: Execution,
    f: F,
) -> std::result::Result<(Vec<VariantRow<T>>, usize), Failure>
where
    F: Fn(&VariantRecord) -> Result<T, String> + Sync,
{
    let results = execution.map(variants, |v| f(v));
    let mut rows = Vec::with_capacity(variants.len());
    let mut failed = 0;
    for (v, r) in variants.iter().zip(results) {
        match r {
            Ok(t) => rows.push(VariantRow::ok(&v.variant_id, &v.family, &v.method, t)),
            Err(msg) if skip_bad => {
                eprintln!("prism: variant {:?}: {msg}", v.variant_id);
                failed += 1;
                rows.push(VariantRow::failed(&v.variant_id, &v.family, &v.method, msg));
            }
            Err(msg) => return Err(Failure::Usage(format!("variant {:?}: {msg}", v.variant_id))),
        }
    }
    Ok((rows, failed))
}

fn skipped_failure(failed: usize) -> CmdResult {
    if failed > 0 {
        Err(Failure::Property(format!("{failed} variant(s) failed")))
    } else {
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_decompose(
    target: Option<PathBuf>,
    proxy: Option<PathBuf>,
    manifest: Option<PathBuf>,
    mode: AlignmentMode,
    format: Format,
    skip_bad: bool,
    execution: Execution,
    out: &mut impl Write,
) -> CmdResult {
    let decompose_pair = |z_t: &FeatureMatrix, path: &Path| -> Result<ScaleShapeDecomposition, String> {
        let z_p = with_path(load_features(path), path)?;
        let w = with_path(mode.resolve(z_t, &z_p), path)?;
        with_path(decompose(z_t, &z_p, &w), path)
    };

    let (rows, failed) = match (target, proxy, manifest) {
        (Some(t), Some(p), _) => {
            let z_t = with_path(load_features(&t), &t).map_err(Failure::Usage)?;
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let d = decompose_pair(&z_t, &p).map_err(Failure::Usage)?;
            (vec![VariantRow::ok(&id, "", "", d)], 0)
        }
        (_, _, Some(m)) => {
            let manifest = read_manifest(&m)?;
            let t = &manifest.target_feature_path;
            let z_t = with_path(load_features(t), t).map_err(Failure::Usage)?;
            per_variant(&manifest.variants, skip_bad, execution, |v| decompose_pair(&z_t, &v.feature_path))?
        }
        _ => return Err(Failure::Usage("give TARGET PROXY or --manifest".into())),
    };
    report::write_decomposition_rows(&rows, format, &mut *out)?;
    skipped_failure(failed)
}

fn cmd_bound(
    manifest_path: &Path,
    mode: AlignmentMode,
    k_feat_mode: KFeatMode,
    format: Format,
    skip_bad: bool,
    execution: Execution,
    out: &mut impl Write,
) -> CmdResult {
    let manifest = read_manifest(manifest_path)?;
    let (tf, th) = (&manifest.target_feature_path, &manifest.target_head_path);
    let z_t = with_path(load_features(tf), tf).map_err(Failure::Usage)?;
    let h_t = with_path(load_head(th), th).map_err(Failure::Usage)?;
    let constants = with_path(LipschitzConstants::for_target(&h_t, k_feat_mode), th).map_err(Failure::Usage)?;

    let (rows, failed) = per_variant(&manifest.variants, skip_bad, execution, |v| -> Result<BoundReport, String> {
        let path = &v.feature_path;
        let z_p = with_path(load_features(path), path)?;
        let (h_p, frozen) = match &v.head_path {
            Some(hp) => (with_path(load_head(hp), hp)?, false),
            None => (h_t.clone(), true),
        };
        let w = with_path(mode.resolve(&z_t, &z_p), path)?;
        let report = with_path(
            prism_bound_with(&z_t, &z_p, &h_t, &h_p, &w, &constants, GammaPath::default()),
            path,
        )?;
        Ok(report
            .with_variant(v.variant_id.clone(), v.empirical_gap)
            .with_frozen_head(frozen))
    })?;
    report::write_bound_rows(&rows, format, &mut *out)?;
    skipped_failure(failed)
}

fn cmd_verify(cfg: &SweepConfig, csv: Option<&Path>, out: &mut impl Write) -> CmdResult {
    let records = run_sweep(cfg)?;
    let instances = cfg.trials * cfg.kinds.len() * cfg.magnitudes.len();
    let summary = SweepSummary::from_records(&records, instances);
    if let Some(path) = csv {
        let file = File::create(path).map_err(|e| PrismError::io(path, e))?;
        write_sweep_csv(&records, BufWriter::new(file))?;
    }
    writeln!(out, "instances: {}", summary.instances)?;
    writeln!(out, "records: {}", summary.records)?;
    writeln!(out, "violations: {}", summary.violations)?;
    writeln!(out, "max_slack_ratio: {}", fmt_exact(summary.max_slack_ratio))?;
    if summary.violations > 0 {
        return Err(Failure::Property(format!("{} bound violation(s)", summary.violations)));
    }
    Ok(())
}

fn cmd_rank(cfg: &RankConfig, format: Format, out: &mut impl Write) -> CmdResult {
    let summary = rank_experiment(cfg)?;
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, &summary).map_err(|e| Failure::Usage(e.to_string()))?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(out, "kind,r_s")?;
            for k in &summary.per_kind {
                writeln!(out, "{},{}", k.kind, fmt_exact(k.r_s))?;
            }
        }
        Format::Table => {
            for k in &summary.per_kind {
                writeln!(out, "{:>16}  r_s = {}", k.kind.as_str(), fmt_table(k.r_s))?;
            }
            writeln!(
                out,
                "{:>16}  r_s = {} ± {}",
                "mean",
                fmt_table(summary.mean_r_s),
                fmt_table(summary.sem_r_s)
            )?;
        }
    }
    let weak: Vec<_> = summary
        .per_kind
        .iter()
        .filter(|k| k.r_s.is_nan() || k.r_s < MONOTONE_MIN_RS)
        .map(|k| format!("{} ({:.4})", k.kind, k.r_s))
        .collect();
    if weak.is_empty() {
        Ok(())
    } else {
        Err(Failure::Property(format!(
            "r_s below {MONOTONE_MIN_RS} for: {}",
            weak.join(", ")
        )))
    }
}

fn lambda_tag(lambda: f64) -> String {
    format!("{lambda}").replace('.', "p")
}

fn cmd_demo(
    out_dir: &Path,
    seeds: &[u64],
    lambdas: &[f64],
    steps: usize,
    lr: f64,
    execution: Execution,
    out: &mut impl Write,
) -> CmdResult {
    if seeds.is_empty() || lambdas.is_empty() {
        return Err(Failure::Usage("--seeds and --lambdas must be non-empty".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| PrismError::io(out_dir, e))?;
    let jobs: Vec<(u64, f64)> = seeds
        .iter()
        .flat_map(|&s| lambdas.iter().map(move |&l| (s, l)))
        .collect();
    let results = execution.map(&jobs, |&(seed, lambda)| regularizer::drift_demo(seed, lambda, steps, lr));

    writeln!(out, "seed,lambda,final_omega,final_task_loss,final_downstream_gap,file")?;
    let mut diverged = Vec::new();
    for (&(seed, lambda), r) in jobs.iter().zip(results) {
        let r = r?;
        let name = format!("demo_seed{seed}_lambda{}.csv", lambda_tag(lambda));
        let path = out_dir.join(&name);
        let file = File::create(&path).map_err(|e| PrismError::io(&path, e))?;
        r.write_csv(BufWriter::new(file))?;
        if let Some(step) = r.diverged_at {
            diverged.push(format!("seed {seed} λ {lambda} at step {step}"));
        }
        let last = |v: &[f64]| v.last().copied().map(fmt_exact).unwrap_or_default();
        writeln!(
            out,
            "{seed},{lambda},{},{},{},{name}",
            last(&r.omega_trajectory),
            last(&r.task_loss_trajectory),
            last(&r.downstream_gap_trajectory)
        )?;
    }
    if diverged.is_empty() {
        Ok(())
    } else {
        Err(Failure::Property(format!("diverged: {}", diverged.join("; "))))
    }
}
