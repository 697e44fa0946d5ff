use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgMatches, Args, FromArgMatches, Parser, Subcommand, ValueEnum};

use seqclass::engine::{self, Checkpoint, Dataset, EpochRecord, ExperimentConfig, CONFIG_KEYS};
use seqclass::metrics::EvalReport;
use seqclass::par::Parallelism;

/// Recurrent text classifiers: preprocess a CSV corpus, train an RNN, LSTM
/// or GRU, evaluate it and classify new text.
#[derive(Parser, Debug)]
#[command(name = "seqclass", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean and encode a CSV corpus; writes vocab.tsv, dataset.tsv,
    /// stats.txt and config.txt into the output directory.
    Preprocess {
        /// CSV file with a header row.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train on a preprocessed directory; writes model.ckpt, curve.csv and
    /// metrics.txt into the output directory.
    Train {
        /// Directory written by `preprocess`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Sequential execution (the result is bit-identical either way).
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on a split of a preprocessed directory.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
        split: SplitChoice,
        /// Metrics file; defaults to metrics_<split>.txt beside the model.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(short, long)]
        quiet: bool,
    },
    /// Classify lines from standard input: `class<TAB>probability` each.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(short, long)]
        quiet: bool,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SplitChoice {
    Train,
    Test,
    All,
}

/// Config file plus one `--key value` flag per config key; flags win.
#[derive(Debug, Default)]
struct Common {
    config: Option<PathBuf>,
    overrides: Vec<(String, String)>,
    quiet: bool,
}

impl FromArgMatches for Common {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let mut c = Common::default();
        c.update_from_arg_matches(m)?;
        Ok(c)
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        self.config = m.get_one::<PathBuf>("config").cloned();
        self.quiet = m.get_flag("quiet");
        self.overrides = CONFIG_KEYS
            .iter()
            .filter_map(|k| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
            .collect();
        Ok(())
    }
}

impl Args for Common {
    fn augment_args(cmd: clap::Command) -> clap::Command {
        let cmd = cmd
            .arg(
                clap::Arg::new("config")
                    .long("config")
                    .value_name("FILE")
                    .value_parser(clap::value_parser!(PathBuf))
                    .help("key = value config file"),
            )
            .arg(
                clap::Arg::new("quiet")
                    .short('q')
                    .long("quiet")
                    .action(clap::ArgAction::SetTrue)
                    .help("Suppress the config echo and per-epoch log"),
            );
        CONFIG_KEYS.iter().fold(cmd, |cmd, key| {
            let dashed = key.replace('_', "-");
            let mut arg = clap::Arg::new(*key).long(*key).value_name("VALUE").help_heading("Config keys");
            if dashed != *key {
                arg = arg.visible_alias(dashed);
            }
            cmd.arg(arg)
        })
    }

    fn augment_args_for_update(cmd: clap::Command) -> clap::Command {
        Self::augment_args(cmd)
    }
}

impl Common {
    /// Layers: defaults, then `base` (if any), then the config file, then flags.
    fn resolve(&self, base: Option<&Path>) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = base {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_text(&text)?;
        }
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| seqclass::Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        for (k, v) in &self.overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Settings fixed at preprocessing time; training must not change them.
const PIPELINE_KEYS: &[&str] = &[
    "vocab_size",
    "max_len",
    "text_column",
    "label_column",
    "lowercase",
    "strip_nonalpha",
    "stopwords",
    "oov_token",
];

fn echo_config(cfg: &ExperimentConfig, quiet: bool) {
    if !quiet {
        eprintln!("# resolved config");
        eprint!("{}", cfg.to_resolved_text());
    }
}

/// Write via a temporary sibling and rename, so a failed run never leaves
/// a partial artifact under the final name.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn preprocess(input: &Path, out_dir: &Path, common: &Common) -> Result<()> {
    let cfg = common.resolve(None)?;
    echo_config(&cfg, common.quiet);
    let ds = Dataset::load_csv(input, &cfg.text_column, &cfg.label_column, &cfg.pipeline()?)?;
    create_dir(out_dir)?;
    let stats = ds.stats().to_text();
    write_atomic(&out_dir.join("vocab.tsv"), ds.vocab.to_text().as_bytes())?;
    write_atomic(&out_dir.join("dataset.tsv"), ds.encoded_text().as_bytes())?;
    write_atomic(&out_dir.join("stats.txt"), stats.as_bytes())?;
    write_atomic(&out_dir.join("config.txt"), cfg.to_text().as_bytes())?;
    print!("{stats}");
    Ok(())
}

fn print_table(report: &EvalReport, ck: &Checkpoint) {
    let name = ck.config.cell.to_string().to_uppercase();
    print!("{}", report.to_table(&name, &ck.class_names, ck.config.averaging));
}

fn train(data: &Path, out_dir: &Path, sequential: bool, common: &Common) -> Result<()> {
    let base = data.join("config.txt");
    let cfg = common.resolve(base.exists().then_some(base.as_path()))?;
    if base.exists() {
        let mut saved = ExperimentConfig::default();
        saved.apply_text(&std::fs::read_to_string(&base)?)?;
        let (a, b) = (saved.to_text(), cfg.to_text());
        for key in PIPELINE_KEYS {
            let pick = |t: &str| t.lines().find(|l| l.starts_with(&format!("{key} = "))).map(str::to_string);
            if pick(&a) != pick(&b) {
                bail!(seqclass::Error::Config(format!(
                    "{key} differs from the value used by preprocess ({}); re-run preprocess instead",
                    pick(&a).unwrap_or_default()
                )));
            }
        }
    }
    echo_config(&cfg, common.quiet);
    let ds = Dataset::load_dir(data)?;
    if ds.max_len != cfg.max_len {
        bail!(seqclass::Error::Config(format!(
            "max_len {} does not match the dataset's {}",
            cfg.max_len, ds.max_len
        )));
    }
    let split = ds.split(cfg.train_fraction, cfg.seed)?;
    if !common.quiet {
        eprintln!("# {} train / {} test documents", split.train.len(), split.test.len());
    }
    let mode = if sequential { Parallelism::Sequential } else { Parallelism::Auto };
    let quiet = common.quiet;
    let out = engine::train_with(&cfg, &ds, &split, mode, |r: &EpochRecord| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  train loss {:.4} acc {:6.2}  test loss {:.4} acc {:6.2}",
                r.epoch, r.train_loss, r.train_acc, r.test_loss, r.test_acc
            );
        }
    })?;
    let ck = Checkpoint::new(cfg.clone(), &ds, out.model)?;
    let eval_on = if split.test.is_empty() { &split.train } else { &split.test };
    let report = engine::evaluate_split(&ck.model, &ds, eval_on, mode)?.report;

    create_dir(out_dir)?;
    write_atomic(&out_dir.join("model.ckpt"), &ck.to_bytes())?;
    write_atomic(&out_dir.join("curve.csv"), out.curve.to_csv().as_bytes())?;
    write_atomic(
        &out_dir.join("metrics.txt"),
        report.to_metrics_text(&ck.class_names, cfg.averaging).as_bytes(),
    )?;
    print_table(&report, &ck);
    Ok(())
}

fn evaluate(model: &Path, data: &Path, split: SplitChoice, out: Option<&Path>, quiet: bool) -> Result<()> {
    let ck = Checkpoint::load(model)?;
    echo_config(&ck.config, quiet);
    let ds = Dataset::load_dir(data)?;
    ck.check_dataset(&ds)?;
    let s = ds.split(ck.config.train_fraction, ck.config.seed)?;
    let (indices, name) = match split {
        SplitChoice::Train => (s.train, "train"),
        SplitChoice::Test => (s.test, "test"),
        SplitChoice::All => (ds.all_indices(), "all"),
    };
    if indices.is_empty() {
        bail!(seqclass::Error::Config(format!("the {name} split is empty")));
    }
    let report = engine::evaluate(&ck.model, &ds, &indices)?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => model.with_file_name(format!("metrics_{name}.txt")),
    };
    write_atomic(&path, report.to_metrics_text(&ck.class_names, ck.config.averaging).as_bytes())?;
    print_table(&report, &ck);
    Ok(())
}

fn predict(model: &Path, quiet: bool) -> Result<()> {
    let ck = Checkpoint::load(model)?;
    echo_config(&ck.config, quiet);
    let pipeline = ck.pipeline();
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    for line in stdin.lock().lines() {
        let line = line.context("reading standard input")?;
        let (class, p) = ck.predict_text(&pipeline, &line)?;
        writeln!(out, "{}\t{p}", ck.class_names[class])?;
    }
    out.flush()?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<seqclass::Error>()) {
        Some(seqclass::Error::Divergence { .. }) => 3,
        Some(e) if e.is_data_error() => 2,
        Some(_) => 1,
        // Unwrapped I/O failures come from reading inputs or writing outputs.
        None if err.chain().any(|e| e.is::<io::Error>()) => 2,
        None => 1,
    }
}

/// The error chain joined with ": ", skipping causes a parent already
/// quotes (library errors embed their io source in their own message).
fn render(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Preprocess { input, out_dir, common } => preprocess(input, out_dir, common),
        Command::Train {
            data,
            out_dir,
            sequential,
            common,
        } => train(data, out_dir, *sequential, common),
        Command::Evaluate {
            model,
            data,
            split,
            out,
            quiet,
        } => evaluate(model, data, *split, out.as_deref(), *quiet),
        Command::Predict { model, quiet } => predict(model, *quiet),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let div = seqclass::Error::Divergence {
            epoch: 2,
            batch: 7,
            detail: "loss is NaN".into(),
        };
        assert_eq!(exit_code(&anyhow::Error::new(div).context("training")), 3);
        let integ = seqclass::Error::Integrity("checksum mismatch".into());
        assert_eq!(exit_code(&anyhow::Error::new(integ)), 2);
        assert_eq!(exit_code(&anyhow::Error::new(seqclass::Error::Config("bad".into()))), 1);
        let io: Result<()> = Err(io::Error::new(io::ErrorKind::NotFound, "gone")).context("reading stdin");
        assert_eq!(exit_code(&io.unwrap_err()), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), 1);
    }

    #[test]
    fn render_skips_quoted_causes() {
        let io = io::Error::new(io::ErrorKind::NotFound, "gone");
        let err = seqclass::Error::File {
            path: "x.tsv".into(),
            source: io,
        };
        assert_eq!(render(&anyhow::Error::new(err).context("loading")), "loading: x.tsv: gone");
    }
}
