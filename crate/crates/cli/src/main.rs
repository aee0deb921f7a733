use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rbfimpute::data::{
    load_csv, load_csv_with_mask, load_pair, lorenz96, read_mask, read_table, save_pair, write_csv,
    CorruptionMode, CorruptionSpec, Lorenz96Config,
};
use rbfimpute::eval::{
    emit_plot_data, evaluate, fingerprint, run_ablation_with, AblationConfig, Variant,
};
use rbfimpute::grbf::{load_bank, save_bank};
use rbfimpute::mim::{fit, TrainConfig};
use rbfimpute::mirnn::{fit_mirnn, impute_mirnn, load_model, save_model, MirnnConfig};
use rbfimpute::MultivariateSeries;

#[derive(Parser)]
#[command(
    name = "rbfimpute",
    version,
    about = "Time-series imputation with Gaussian RBF banks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic, fully observed series.
    #[command(subcommand)]
    Synth(Synth),
    /// Hide known values and write a corrupted/truth/eval-mask triple.
    Corrupt(CorruptArgs),
    /// Fit a shared RBF bank (the continuous function) to a series.
    FitRbf(FitRbfArgs),
    /// Train the recurrent imputer on a series and its fitted bank.
    FitMirnn(FitMirnnArgs),
    /// Fill the missing cells of a series.
    Impute(ImputeArgs),
    /// Score an imputation against ground truth.
    Eval(EvalArgs),
    /// Compare model variants on a corrupted/truth pair over several seeds.
    Ablate(AblateArgs),
}

#[derive(Subcommand)]
enum Synth {
    /// Lorenz-96 ring integrated with RK4.
    Lorenz96 {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        d: usize,
        /// Forcing constant.
        #[arg(long, default_value_t = 8.0)]
        f: f64,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Random,
    LongTerm,
}

#[derive(Args)]
struct CorruptArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Fraction of observed cells to hide.
    #[arg(long)]
    rate: f64,
    /// Inclusive run-length range for long-term mode, as `min,max`.
    #[arg(long, value_parser = parse_terms, default_value = "50,80")]
    terms: (usize, usize),
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "in")]
    input: PathBuf,
    /// Sidecar mask for the input.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitRbfArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    /// JSON training configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the bank.
    #[arg(long)]
    out: PathBuf,
    /// Per-stage training report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct FitMirnnArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch training loss (JSON).
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct ImputeArgs {
    /// Recurrent model; without it the bank alone fills the gaps.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write plot data (CF samples, observed and imputed points).
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    eval_mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    /// Directory holding corrupted.csv, truth.csv and eval_mask.csv.
    #[arg(long)]
    data: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "mim,mim-rand,mis,mirnn,mean,knn"
    )]
    variants: Vec<Variant>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    /// JSON with optional `rbf`, `mirnn` and `knn_k` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_terms(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `min,max`, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_series(path: &Path, mask: Option<&Path>) -> Result<MultivariateSeries> {
    let series = match mask {
        Some(m) => load_csv_with_mask(path, m)?,
        None => load_csv(path)?,
    };
    Ok(series)
}

fn synth(cmd: Synth) -> Result<()> {
    let Synth::Lorenz96 {
        n,
        d,
        f,
        dt,
        seed,
        out,
    } = cmd;
    let series = lorenz96(&Lorenz96Config {
        n,
        d,
        forcing: f,
        dt,
        seed,
        ..Default::default()
    })?;
    write_csv(&out, &series)?;
    eprintln!("wrote {n}x{d} Lorenz-96 series to {}", out.display());
    Ok(())
}

fn corrupt(a: CorruptArgs) -> Result<()> {
    let series = load_series(&a.input, a.mask.as_deref())?;
    let spec = CorruptionSpec {
        mode: match a.mode {
            Mode::Random => CorruptionMode::Random,
            Mode::LongTerm => CorruptionMode::LongTerm,
        },
        rate: a.rate,
        term_range: a.terms,
        seed: a.seed,
    };
    let pair = spec.apply(&series)?;
    save_pair(&pair, &a.out)?;
    eprintln!(
        "hid {} cells; pair written to {}",
        pair.eval_count(),
        a.out.display()
    );
    Ok(())
}

fn fit_rbf(a: FitRbfArgs) -> Result<()> {
    let series = load_series(&a.input, a.mask.as_deref())?;
    let config: TrainConfig = read_config(a.config.as_deref())?;
    let start = Instant::now();
    let out = fit(&series, &config)?;
    let seconds = start.elapsed().as_secs_f64();
    save_bank(&out.function, &a.out)?;
    if let Some(last) = out.reports.last() {
        eprintln!(
            "{} stage(s), {} bases, observed MAPE {:.4}, {seconds:.1}s",
            out.reports.len(),
            out.function.bank.n_bases(),
            last.mape
        );
    }
    if let Some(path) = a.report {
        let report = json!({
            "config": config,
            "config_fingerprint": fingerprint(&config)?,
            "seconds": seconds,
            "stages": out.reports,
        });
        write_json(&path, &report)?;
    }
    Ok(())
}

fn fit_mirnn_cmd(a: FitMirnnArgs) -> Result<()> {
    let series = load_series(&a.input, a.mask.as_deref())?;
    let cf = load_bank(&a.bank)?;
    let config: MirnnConfig = read_config(a.config.as_deref())?;
    let start = Instant::now();
    let (model, curve) = fit_mirnn(&series, &cf, &config)?;
    save_model(&model, &a.out)?;
    if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
        eprintln!(
            "{} epochs, loss {first:.4} -> {last:.4}, {:.1}s",
            curve.len(),
            start.elapsed().as_secs_f64()
        );
    }
    if let Some(path) = a.curve {
        write_json(&path, &curve)?;
    }
    Ok(())
}

fn impute(a: ImputeArgs) -> Result<()> {
    let series = load_series(&a.input, a.mask.as_deref())?;
    let cf = load_bank(&a.bank)?;
    let imputed = match &a.model {
        Some(path) => impute_mirnn(&load_model(path)?, &series, &cf)?,
        None => cf.impute(&series)?,
    };
    write_csv(&a.out, &imputed)?;
    if let Some(path) = a.plot {
        emit_plot_data(&path, &series, &cf, imputed.values(), None)?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let pred = read_table(&a.pred)?;
    let truth = read_table(&a.truth)?;
    let mask = read_mask(&a.eval_mask)?;
    ensure!(
        pred.names == truth.names,
        "variable names differ between {} and {}",
        a.pred.display(),
        a.truth.display()
    );
    let report = evaluate(&pred.to_matrix(), &truth.to_matrix(), &mask, &pred.names)?;
    write_json(&a.out, &report)?;
    eprintln!(
        "MAE {:.6} over {} cells",
        report.pooled.mae, report.pooled.count
    );
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<bool> {
    ensure!(!a.variants.is_empty(), "no variants requested");
    let pair = load_pair(&a.data)?;
    let config: AblationConfig = read_config(a.config.as_deref())?;
    let imputed_dir = a.out.join("imputed");
    let plot_dir = a.out.join("plot");
    for dir in [&imputed_dir, &plot_dir] {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let first_seed = a.seeds.first().copied();
    let run = run_ablation_with(&pair, &a.variants, &a.seeds, &config, |v, seed, out| {
        let stem = match seed {
            Some(s) => format!("{}_seed{s}", v.tag()),
            None => v.tag().to_string(),
        };
        write_csv(imputed_dir.join(format!("{stem}.csv")), &out.imputed)?;
        if let Some(cf) = &out.function {
            if seed == first_seed {
                emit_plot_data(
                    plot_dir.join(format!("{stem}.csv")),
                    &pair.corrupted,
                    cf,
                    out.imputed.values(),
                    Some((&pair.truth, &pair.eval_mask)),
                )?;
            }
        }
        Ok(())
    })?;

    write_json(&a.out.join("results.json"), &run)?;
    let summary = run.summary();
    write_json(&a.out.join("summary.json"), &summary)?;
    let mut table = String::from("variant,runs,mean_mae,std_mae,mean_mre\n");
    for s in &summary {
        let mre = s.mean_mre.map(|v| v.to_string()).unwrap_or_default();
        table += &format!(
            "{},{},{},{},{mre}\n",
            s.variant, s.runs, s.mean_mae, s.std_mae
        );
        let mre = s.mean_mre.map(|v| format!(" ({v:.3})")).unwrap_or_default();
        println!(
            "{:<16} {:.4} +/- {:.4}{mre}  [{} run(s)]",
            s.variant.label(),
            s.mean_mae,
            s.std_mae,
            s.runs
        );
    }
    fs::write(a.out.join("summary.csv"), table)?;
    for f in &run.failures {
        let seed = f.seed.map(|s| format!(" seed {s}")).unwrap_or_default();
        eprintln!("FAILED {}{seed}: {}", f.variant, f.error);
    }
    Ok(run.failures.is_empty())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth(c) => synth(c)?,
        Command::Corrupt(a) => corrupt(a)?,
        Command::FitRbf(a) => fit_rbf(a)?,
        Command::FitMirnn(a) => fit_mirnn_cmd(a)?,
        Command::Impute(a) => impute(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Ablate(a) => return ablate(a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
