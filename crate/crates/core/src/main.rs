use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use epigraph::binarize::{Polarity, ThresholdMethod, ThresholdParams};
use epigraph::classify::{
    evaluate, split_dataset, ClassifyError, LabeledSample, ModelFile, SplitConfig,
};
use epigraph::manifest::parse_manifest;
use epigraph::morphology::{CleanupParams, Connectivity};
use epigraph::pipeline::{
    enhance_one, enhanced_path, extract_features, read_features_csv, route_label, run_pipeline,
    train_model, write_csv, AlgorithmChoice, ClassifierConfig, FeatureRow, PipelineConfig,
    PipelineError, FEATURES_HEADER,
};
use epigraph::synth::{generate_synthetic_corpus, SynthParams};

#[derive(Parser)]
#[command(
    name = "epigraph",
    version,
    about = "Enhance and classify degraded inscription images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Binarize and clean images, writing PBM output
    Enhance {
        #[arg(long, conflicts_with = "input", required_unless_present = "input")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        enhance: EnhanceArgs,
    },
    /// Compute per-image (mean, std) features into a CSV
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        enhance: EnhanceArgs,
    },
    /// Train a classifier on the training split of a features CSV
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SingleAlgorithm::Knn)]
        algorithm: SingleAlgorithm,
        #[command(flatten)]
        classifier: ClassifierArgs,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Evaluate a trained model on the test split it was trained against
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Write the report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enhance, extract, split, train and evaluate in one run
    Pipeline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        enhance: EnhanceArgs,
        #[arg(long, value_enum, default_value_t = AlgorithmArg::Both)]
        algorithm: AlgorithmArg,
        #[command(flatten)]
        classifier: ClassifierArgs,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Generate a seeded synthetic corpus and manifest
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Images per (material, background) class
        #[arg(long, default_value_t = 25)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        size: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    GlobalOtsu,
    LocalNiblack,
    LocalSauvola,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolarityArg {
    DarkText,
    LightText,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgorithmArg {
    Knn,
    Svm,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SingleAlgorithm {
    Knn,
    Svm,
}

#[derive(Args)]
struct EnhanceArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    method: MethodArg,
    /// Local window side, odd
    #[arg(long, default_value_t = 31)]
    window: usize,
    /// Local threshold k (default -0.2 Niblack, 0.5 Sauvola)
    #[arg(long, allow_hyphen_values = true)]
    k: Option<f64>,
    /// Sauvola dynamic range
    #[arg(long, default_value_t = 128.0)]
    r: f64,
    #[arg(long, value_enum, default_value_t = PolarityArg::DarkText)]
    polarity: PolarityArg,
    #[arg(long, default_value_t = 18.0)]
    regularity_cutoff: f64,
    #[arg(long, default_value_t = 16)]
    regularity_block: usize,
    #[arg(long, default_value_t = 8)]
    min_area: usize,
    #[arg(long, default_value = "8", value_parser = ["4", "8"])]
    connectivity: String,
    /// Side of the square closing element
    #[arg(long, default_value_t = 3)]
    se_size: usize,
    #[arg(long)]
    no_despeckle: bool,
    #[arg(long)]
    no_close: bool,
}

#[derive(Args)]
struct ClassifierArgs {
    #[arg(long, default_value_t = 3)]
    knn_k: usize,
    #[arg(long, default_value_t = 1.0)]
    svm_c: f64,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl EnhanceArgs {
    fn apply(&self, config: &mut PipelineConfig) {
        config.threshold = ThresholdParams {
            method: match self.method {
                MethodArg::GlobalOtsu => ThresholdMethod::GlobalOtsu,
                MethodArg::LocalNiblack => ThresholdMethod::LocalNiblack,
                MethodArg::LocalSauvola => ThresholdMethod::LocalSauvola,
                MethodArg::Auto => ThresholdMethod::Auto,
            },
            window: self.window,
            k: self.k,
            r: self.r,
            polarity: match self.polarity {
                PolarityArg::DarkText => Polarity::DarkText,
                PolarityArg::LightText => Polarity::LightText,
            },
            regularity_cutoff: self.regularity_cutoff,
            regularity_block: self.regularity_block,
        };
        config.morphology = CleanupParams {
            despeckle: !self.no_despeckle,
            min_area: self.min_area,
            connectivity: if self.connectivity == "4" {
                Connectivity::Four
            } else {
                Connectivity::Eight
            },
            close: !self.no_close,
            se_size: self.se_size,
        };
    }
}

impl ClassifierArgs {
    fn config(&self, algorithm: AlgorithmChoice) -> ClassifierConfig {
        ClassifierConfig {
            algorithm,
            knn_k: self.knn_k,
            svm_c: self.svm_c,
            epochs: self.epochs,
        }
    }
}

impl SplitArgs {
    fn config(&self) -> SplitConfig {
        SplitConfig {
            ratio: self.ratio,
            seed: self.seed,
        }
    }
}

fn exit_code(err: &PipelineError) -> u8 {
    match err {
        PipelineError::Manifest(_) => 2,
        PipelineError::Classify(ClassifyError::StratumTooSmall { .. }) => 3,
        _ => 1,
    }
}

fn features_to_rows(
    manifest_path: &Path,
    config: &PipelineConfig,
) -> Result<Vec<FeatureRow>, PipelineError> {
    let manifest = parse_manifest(manifest_path)?;
    let mut rows = Vec::new();
    for (entry, result) in manifest
        .entries
        .iter()
        .zip(extract_features(&manifest, config))
    {
        match result {
            Ok(e) => rows.push(FeatureRow {
                image_id: entry.image_id.clone(),
                material: entry.material,
                background: entry.background,
                mean: e.features.mean,
                std: e.features.std,
                fallback: e.fallback,
            }),
            Err(err) => eprintln!("skipping {}: {err}", entry.image_id),
        }
    }
    Ok(rows)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Synth { out, n, seed, size } => {
            let manifest = generate_synthetic_corpus(
                &out,
                SynthParams {
                    per_class: n,
                    seed,
                    width: size,
                    height: size,
                },
            )?;
            println!(
                "wrote {} images and {}",
                manifest.len(),
                out.join("manifest.json").display()
            );
        }
        Command::Enhance {
            manifest,
            input,
            out,
            enhance,
        } => {
            let mut config = PipelineConfig::default();
            enhance.apply(&mut config);
            config.threshold.validate()?;
            fs::create_dir_all(&out)?;
            let jobs: Vec<(String, PathBuf)> = match (manifest, input) {
                (Some(m), _) => {
                    let manifest = parse_manifest(m)?;
                    manifest
                        .entries
                        .iter()
                        .map(|e| (e.image_id.clone(), manifest.resolve(e)))
                        .collect()
                }
                (None, Some(path)) => {
                    let id = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    vec![(id, path)]
                }
                (None, None) => unreachable!("clap requires one input"),
            };
            let mut failures = 0;
            for (id, path) in jobs {
                let target = enhanced_path(&out, &id);
                match enhance_one(&path, &config, Some(&target)) {
                    Ok(e) => println!(
                        "{id}\t{}\tmean={:.3}\tstd={:.3}\tregions={}",
                        route_label(&e.route),
                        e.features.mean,
                        e.features.std,
                        e.regions
                    ),
                    Err(err) => {
                        failures += 1;
                        eprintln!("skipping {id}: {err}");
                    }
                }
            }
            if failures > 0 {
                eprintln!("{failures} image(s) skipped");
            }
        }
        Command::Features {
            manifest,
            out,
            enhance,
        } => {
            let mut config = PipelineConfig::default();
            enhance.apply(&mut config);
            config.threshold.validate()?;
            let rows = features_to_rows(&manifest, &config)?;
            write_csv(&out, &rows, &FEATURES_HEADER)?;
            println!("wrote {} feature rows to {}", rows.len(), out.display());
        }
        Command::Train {
            features,
            out,
            algorithm,
            classifier,
            split,
        } => {
            let choice = match algorithm {
                SingleAlgorithm::Knn => AlgorithmChoice::Knn,
                SingleAlgorithm::Svm => AlgorithmChoice::Svm,
            };
            let config = PipelineConfig {
                classifier: classifier.config(choice),
                split: split.config(),
                ..PipelineConfig::default()
            };
            config.validate()?;
            let samples: Vec<LabeledSample> = read_features_csv(&features)?
                .iter()
                .map(FeatureRow::sample)
                .collect();
            let parts = split_dataset(&samples, config.split.ratio, config.split.seed)?;
            let algorithm = choice.algorithms()[0];
            let mut file = ModelFile::new(train_model(algorithm, &parts.train, &config)?);
            file.split = Some(config.split);
            fs::write(&out, serde_json::to_string_pretty(&file)? + "\n")?;
            println!(
                "trained {} on {} samples ({} held out); model written to {}",
                algorithm.as_str(),
                parts.train.len(),
                parts.test.len(),
                out.display()
            );
        }
        Command::Evaluate {
            features,
            model,
            out,
        } => {
            let file: ModelFile = serde_json::from_str(&fs::read_to_string(&model)?)?;
            let samples: Vec<LabeledSample> = read_features_csv(&features)?
                .iter()
                .map(FeatureRow::sample)
                .collect();
            let test = match file.split {
                Some(s) => split_dataset(&samples, s.ratio, s.seed)?.test,
                None => samples,
            };
            let report = evaluate(&file.model, &test)?;
            let json = serde_json::to_string_pretty(&report)? + "\n";
            match out {
                Some(path) => fs::write(path, json)?,
                None => print!("{json}"),
            }
        }
        Command::Pipeline {
            manifest,
            out,
            enhance,
            algorithm,
            classifier,
            split,
        } => {
            let choice = match algorithm {
                AlgorithmArg::Knn => AlgorithmChoice::Knn,
                AlgorithmArg::Svm => AlgorithmChoice::Svm,
                AlgorithmArg::Both => AlgorithmChoice::Both,
            };
            let mut config = PipelineConfig {
                classifier: classifier.config(choice),
                split: split.config(),
                ..PipelineConfig::default()
            };
            enhance.apply(&mut config);
            config.validate()?;
            let manifest = parse_manifest(&manifest)?;
            fs::create_dir_all(&out)?;
            let output = run_pipeline(&manifest, &config, &out)?;
            let r = &output.report;
            println!(
                "processed {} of {} images ({} skipped); train {} / test {}",
                r.counts.processed,
                r.counts.manifest,
                r.counts.skipped,
                r.counts.train,
                r.counts.test
            );
            for (algorithm, acc) in &r.overall_accuracy {
                println!("{}: overall accuracy {:.4}", algorithm.as_str(), acc);
                for (material, score) in &r.per_material[algorithm] {
                    println!(
                        "  {material}: {:.4} ({}/{})",
                        score.accuracy, score.correct, score.total
                    );
                }
            }
            println!("report written to {}", out.join("report.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
