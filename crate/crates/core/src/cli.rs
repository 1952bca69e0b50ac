//! `locl` command line. Every command works inside a run directory whose
//! `manifest.json` lists each artifact with its SHA-256 and the
//! fingerprints of the artifacts it was built from. Commands refuse to
//! read an artifact that was modified or whose inputs have since changed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, sha256_hex};
use crate::augmentation::CorruptionMode;
use crate::data::{load_csv, make_folds, preprocess, NormMode, TabularDataset};
use crate::error::{LoclError, Result};
use crate::evaluation::protocol::{sweep_cells, FoldOutcome, ALPHA_GRID};
use crate::evaluation::report::{render_cells, render_folds, render_table};
use crate::evaluation::{
    evaluate, run_ablations, run_cells, run_protocol, train_probe, EvalReport, ProbeConfig, ProtocolOptions,
    SweepParam,
};
use crate::ordering::{order_features, split_features, OrderingVariant};
use crate::pipeline::{pretrain, pretrain_fold, EncoderKind, TrainConfig};
use crate::rng::{self, tag};

#[derive(Debug, Parser)]
#[command(name = "locl", version, about = "Local contrastive feature learning for tabular data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArg {
    /// Run directory holding artifacts and manifest.json.
    #[arg(long, default_value = "run")]
    pub run: PathBuf,
}

/// Training flags; each overrides the matching key of `--config`.
#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    /// TOML file with TrainConfig keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mask_p: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub kernel_size: Option<usize>,
    #[arg(long)]
    pub ordering_variant: Option<OrderingVariant>,
    #[arg(long)]
    pub encoder_kind: Option<EncoderKind>,
    #[arg(long)]
    pub overlap_fraction: Option<f64>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub corruption: Option<CorruptionMode>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Refit normalization on each fold's training partition.
    #[arg(long)]
    pub fold_local_stats: bool,
    /// Probe L2 penalty.
    #[arg(long, default_value_t = 1e-3)]
    pub reg: f64,
    /// Comma-separated penalties to choose from by 3-fold CV.
    #[arg(long, value_delimiter = ',')]
    pub reg_grid: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a CSV, encode categoricals, normalize, write dataset.bin.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long, default_value = "zscore")]
        mode: NormMode,
        #[command(flatten)]
        run: RunArg,
    },
    /// Compute a feature ordering and split over all dataset rows.
    Order {
        #[arg(long, default_value = "mst")]
        variant: OrderingVariant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        overlap_fraction: f64,
        #[command(flatten)]
        run: RunArg,
    },
    /// Pretrain on all rows, or on one fold's unlabeled rows with --fold.
    Pretrain {
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[command(flatten)]
        run: RunArg,
    },
    /// Encode every dataset row with the pretrained checkpoint.
    Embed {
        #[command(flatten)]
        run: RunArg,
    },
    /// Cross-validated linear probe on stored embeddings.
    Probe {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        eval: EvalArgs,
        #[command(flatten)]
        run: RunArg,
    },
    /// Full protocol: per-fold pretraining, embedding and probing.
    Protocol {
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[command(flatten)]
        run: RunArg,
    },
    /// The five encoder/ordering ablation cells on one fold plan.
    Ablate {
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[command(flatten)]
        run: RunArg,
    },
    /// Protocol over a grid of alpha or kernel-size values.
    Sweep {
        #[arg(long, default_value = "alpha")]
        param: SweepParam,
        /// Comma-separated grid; alpha defaults to 0.1,0.5,1,2,5.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[command(flatten)]
        run: RunArg,
    },
    /// Print the text tables of every report in the run directory.
    Report {
        #[command(flatten)]
        run: RunArg,
    },
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { cfg.$f = v; } )* };
        }
        set!(
            mask_p,
            alpha,
            lambda,
            latent_dim,
            kernel_size,
            ordering_variant,
            encoder_kind,
            overlap_fraction,
            seed,
            batch_size,
            max_epochs,
            learning_rate,
            patience,
            corruption
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

impl EvalArgs {
    fn options(&self) -> ProtocolOptions {
        ProtocolOptions {
            k: self.k,
            fold_local_stats: self.fold_local_stats,
            probe: ProbeConfig {
                reg: self.reg,
                reg_grid: self.reg_grid.clone(),
                ..ProbeConfig::default()
            },
            ..ProtocolOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
    /// Fingerprints of the artifacts this one was built from.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Last command that wrote to the run.
    pub command: String,
    pub config_path: Option<String>,
    pub config: Option<TrainConfig>,
    pub dataset_fingerprint: Option<String>,
    pub master_seed: Option<u64>,
    pub artifacts: BTreeMap<String, ArtifactRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub struct RunDir {
    pub root: PathBuf,
    pub manifest: RunManifest,
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    Ok(bytes)
}

impl RunDir {
    pub fn open(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| LoclError::io(root, e))?;
        let path = root.join(MANIFEST_FILE);
        let manifest = if path.exists() {
            serde_json::from_slice(&artifacts::read_bytes(&path)?)?
        } else {
            RunManifest::default()
        };
        Ok(RunDir {
            root: root.to_path_buf(),
            manifest,
        })
    }

    /// Write an artifact and record it with the fingerprints of `inputs`.
    pub fn put(&mut self, name: &str, file: &str, bytes: &[u8], inputs: &[&str]) -> Result<String> {
        let mut recorded = BTreeMap::new();
        for &i in inputs {
            let rec = self.record(i)?;
            recorded.insert(i.to_owned(), rec.sha256.clone());
        }
        artifacts::write_bytes(&self.root.join(file), bytes)?;
        let sha = sha256_hex(bytes);
        self.manifest.artifacts.insert(
            name.to_owned(),
            ArtifactRecord {
                path: file.to_owned(),
                sha256: sha.clone(),
                inputs: recorded,
            },
        );
        Ok(sha)
    }

    fn record(&self, name: &str) -> Result<&ArtifactRecord> {
        self.manifest
            .artifacts
            .get(name)
            .ok_or_else(|| LoclError::invalid(format!("run has no {name} artifact; run the producing command first")))
    }

    /// Read an artifact after checking its bytes and its inputs are current.
    pub fn get(&self, name: &str) -> Result<Vec<u8>> {
        let rec = self.record(name)?;
        let bytes = artifacts::read_bytes(&self.root.join(&rec.path))?;
        let found = sha256_hex(&bytes);
        if found != rec.sha256 {
            return Err(LoclError::Fingerprint {
                artifact: name.to_owned(),
                expected: rec.sha256.clone(),
                found,
            });
        }
        for (input, expected) in &rec.inputs {
            let current = &self.record(input)?.sha256;
            if current != expected {
                return Err(LoclError::Fingerprint {
                    artifact: format!("{input} (input of {name}, stale)"),
                    expected: expected.clone(),
                    found: current.clone(),
                });
            }
        }
        Ok(bytes)
    }

    pub fn dataset(&self) -> Result<TabularDataset> {
        artifacts::decode_dataset(&self.get("dataset")?)
    }

    pub fn save(&mut self, command: &str) -> Result<()> {
        self.manifest.tool_version = env!("CARGO_PKG_VERSION").to_owned();
        self.manifest.command = command.to_owned();
        self.manifest.dataset_fingerprint = self.manifest.artifacts.get("dataset").map(|r| r.sha256.clone());
        let bytes = to_json(&self.manifest)?;
        artifacts::write_bytes(&self.root.join(MANIFEST_FILE), &bytes)
    }

    fn set_config(&mut self, args: &TrainArgs, cfg: &TrainConfig) {
        self.manifest.config_path = args.config.as_ref().map(|p| p.display().to_string());
        self.manifest.config = Some(cfg.clone());
        self.manifest.master_seed = Some(cfg.seed);
    }
}

#[derive(Debug, Serialize)]
struct OrderArtifact<'a> {
    variant: OrderingVariant,
    seed: u64,
    permutation: &'a [usize],
    ordered_names: Vec<&'a str>,
    mst_edges: &'a [crate::ordering::Edge],
    split: &'a crate::ordering::SplitPlan,
}

#[derive(Debug, Serialize, Deserialize)]
struct CellsArtifact {
    cells: Vec<crate::evaluation::Cell>,
}

fn put_report(run: &mut RunDir, name: &str, json: &[u8], text: &str, inputs: &[&str]) -> Result<()> {
    run.put(name, &format!("{name}.json"), json, inputs)?;
    run.put(&format!("{name}_text"), &format!("{name}.txt"), text.as_bytes(), &[name])?;
    print!("{text}");
    Ok(())
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Preprocess { input, label, mode, run } => {
            let mut r = RunDir::open(&run.run)?;
            let table = load_csv(&input, None)?;
            let (d, report) = preprocess(&table, &label, mode)?;
            let sha = r.put("dataset", "dataset.bin", &artifacts::encode_dataset(&d)?, &[])?;
            r.put("preprocess_report", "preprocess_report.json", &to_json(&report)?, &["dataset"])?;
            r.save("preprocess")?;
            println!(
                "{} rows, {} features, {} classes; dataset {sha}",
                d.n_rows(),
                d.n_features(),
                d.n_classes()
            );
        }
        Command::Order {
            variant,
            seed,
            overlap_fraction,
            run,
        } => {
            let mut r = RunDir::open(&run.run)?;
            let d = r.dataset()?;
            let o = order_features(&d.x, variant, rng::derive_seed(seed, &[tag::ORDER]))?;
            let split = split_features(&o, overlap_fraction)?;
            let art = OrderArtifact {
                variant,
                seed,
                permutation: &o.permutation,
                ordered_names: o.permutation.iter().map(|&j| d.feature_names[j].as_str()).collect(),
                mst_edges: &o.mst_edges,
                split: &split,
            };
            r.put("ordering", "ordering.json", &to_json(&art)?, &["dataset"])?;
            r.save("order")?;
            println!("permutation {:?}", o.permutation);
        }
        Command::Pretrain { train, fold, k, run } => {
            let cfg = train.resolve()?;
            let mut r = RunDir::open(&run.run)?;
            let d = r.dataset()?;
            let (model, log) = match fold {
                Some(f) => {
                    let plan = make_folds(&d, k, 0.9, cfg.seed)?;
                    pretrain_fold(&d, &plan, f, &cfg)?
                }
                None => pretrain(&d, &(0..d.n_rows()).collect::<Vec<_>>(), &cfg)?,
            };
            let mut ckpt = Vec::new();
            model.write_checkpoint(&mut ckpt)?;
            r.set_config(&train, &cfg);
            r.put("config", "config.toml", cfg.to_toml()?.as_bytes(), &[])?;
            r.put("checkpoint", "checkpoint.bin", &ckpt, &["dataset", "config"])?;
            r.put("training_log", "training_log.jsonl", log.to_jsonl().as_bytes(), &["checkpoint"])?;
            r.save("pretrain")?;
            println!(
                "{} epochs, best epoch {}, best validation loss {:.6}",
                log.epochs.len(),
                log.best_epoch,
                log.best_validation().unwrap_or(f64::NAN)
            );
        }
        Command::Embed { run } => {
            let mut r = RunDir::open(&run.run)?;
            let d = r.dataset()?;
            let model = crate::pipeline::TwinModel::read_checkpoint(&r.get("checkpoint")?[..])?;
            let e = model.embed(&d, None)?;
            r.put("embeddings", "embeddings.bin", &artifacts::encode_embeddings(&e)?, &["checkpoint", "dataset"])?;
            r.put("embedding_rows", "embeddings_rows.json", &to_json(&e.row_ids)?, &["embeddings"])?;
            r.save("embed")?;
            println!("embeddings {} x {}", e.z.rows(), e.z.cols());
        }
        Command::Probe { seed, eval, run } => {
            let mut r = RunDir::open(&run.run)?;
            let d = r.dataset()?;
            let e = artifacts::decode_embeddings(&r.get("embeddings")?)?;
            if e.row_ids != (0..d.n_rows()).collect::<Vec<_>>() {
                return Err(LoclError::shape("embeddings do not cover every dataset row in order"));
            }
            let opts = eval.options();
            let plan = make_folds(&d, opts.k, opts.unlabeled_fraction, seed)?;
            let labels = d.labels()?;
            let mut folds = Vec::with_capacity(plan.k);
            for fold in 0..plan.k {
                let (lab, test) = (plan.labeled_rows(fold), plan.test_rows(fold));
                let pick = |rows: &[usize]| rows.iter().map(|&i| labels[i]).collect::<Vec<_>>();
                let probe = train_probe(&e.z.select_rows(&lab), &pick(&lab), &opts.probe)?;
                folds.push(FoldOutcome {
                    fold,
                    accuracy: evaluate(&probe, &e.z.select_rows(&test), &pick(&test))?,
                    unlabeled_rows: plan.unlabeled_rows(fold).len(),
                    labeled_rows: lab.len(),
                    test_rows: test.len(),
                    epochs_run: 0,
                    best_epoch: 0,
                    probe_reg: probe.reg,
                    probe_iterations: probe.iterations,
                });
            }
            let fp = r
                .manifest
                .config
                .as_ref()
                .map(TrainConfig::fingerprint)
                .unwrap_or_default();
            let report = EvalReport::from_folds(folds, fp);
            put_report(&mut r, "probe_report", &to_json(&report)?, &render_folds(&report), &["embeddings"])?;
            r.save("probe")?;
        }
        Command::Protocol { train, eval, run } => {
            let cfg = train.resolve()?;
            let mut r = RunDir::open(&run.run)?;
            let d = r.dataset()?;
            let report = run_protocol(&d, &cfg, &eval.options(), cfg.seed)?;
            r.set_config(&train, &cfg);
            put_report(&mut r, "protocol_report", &to_json(&report)?, &render_folds(&report), &["dataset"])?;
            r.save("protocol")?;
        }
        Command::Ablate { train, eval, run } => {
            let cfg = train.resolve()?;
            let mut r = RunDir::open(&run.run)?;
            let d = r.dataset()?;
            let cells = run_ablations(&d, &cfg, &eval.options(), cfg.seed)?;
            r.set_config(&train, &cfg);
            let text = render_cells(&cells);
            put_report(&mut r, "ablation_report", &to_json(&CellsArtifact { cells })?, &text, &["dataset"])?;
            r.save("ablate")?;
        }
        Command::Sweep {
            param,
            values,
            train,
            eval,
            run,
        } => {
            let cfg = train.resolve()?;
            let grid = match (values, param) {
                (Some(v), _) => v,
                (None, SweepParam::Alpha) => ALPHA_GRID.to_vec(),
                (None, SweepParam::KernelSize) => vec![3.0, 5.0, 7.0],
            };
            let mut r = RunDir::open(&run.run)?;
            let d = r.dataset()?;
            let cells = run_cells(&d, sweep_cells(&cfg, param, &grid)?, &eval.options(), cfg.seed)?;
            r.set_config(&train, &cfg);
            let rows: Vec<(String, &EvalReport)> = cells.iter().map(|c| (c.name.clone(), &c.report)).collect();
            let text = render_table(("Setting", "Accuracy"), &rows);
            put_report(&mut r, "sweep_report", &to_json(&CellsArtifact { cells })?, &text, &["dataset"])?;
            r.save("sweep")?;
        }
        Command::Report { run } => {
            let r = RunDir::open(&run.run)?;
            let mut any = false;
            for name in ["probe_report", "protocol_report", "ablation_report", "sweep_report"] {
                let text_name = format!("{name}_text");
                if r.manifest.artifacts.contains_key(&text_name) {
                    r.get(name)?;
                    let text = r.get(&text_name)?;
                    println!("== {name}");
                    print!("{}", String::from_utf8_lossy(&text));
                    any = true;
                }
            }
            if !any {
                return Err(LoclError::invalid(format!("no reports in {}", run.run.display())));
            }
        }
    }
    Ok(())
}

/// Entry point for the binary: parse arguments, run, map errors to exit 1.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
