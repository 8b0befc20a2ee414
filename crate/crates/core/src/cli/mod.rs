//! Command-line front end: synth, pretrain, train, refine, eval, translate.

mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lexalign::adversarial::{
    read_checkpoint, train_with, write_checkpoint, Checkpoint, RngState, Stage, TrainStatus, ValidationRecord,
};
use lexalign::embedding::{load_embeddings, normalize, synth_pair, write_embeddings, SynthSpec, SynthStructure};
use lexalign::error::{Error, Result};
use lexalign::evaluation::{load_gold, precision_at_k, translate};
use lexalign::retrieval::{procrustes, refine, CslsParams, RetrievalMode};
use lexalign::tensor::linear::{frobenius, orthogonality_defect};
use lexalign::{EmbeddingMatrix, ModelState, Normalization, TrainConfig};

use manifest::{manifest_path_for, RunManifest};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;
pub const EXIT_EMPTY: i32 = 5;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Format { .. } | Error::Checkpoint(_) => EXIT_IO,
        Error::Divergence(_) | Error::Degenerate(_) => EXIT_DIVERGENCE,
        Error::Empty(_) | Error::OutOfVocabulary(_) => EXIT_EMPTY,
        Error::Shape { .. } | Error::Config(_) | Error::InvalidArgument(_) | Error::Json(_) => EXIT_USAGE,
    }
}

#[derive(Parser, Debug)]
#[command(name = "lexalign", version, about = "Unsupervised bilingual lexicon induction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic embedding pair and its gold dictionary.
    Synth(SynthArgs),
    /// Pretrain both autoencoders.
    Pretrain(PretrainArgs),
    /// Adversarial training from a pretrained checkpoint.
    Train(TrainArgs),
    /// Iterative Procrustes refinement of the mappers.
    Refine(RefineArgs),
    /// Precision@k against a gold dictionary.
    Eval(EvalArgs),
    /// Nearest target words for one source word.
    Translate(TranslateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum AblationFlag {
    NoEncAdv,
    NoRecon,
    NoCycle,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum StructureArg {
    Skewed,
    Isotropic,
}

#[derive(Args, Debug)]
pub struct EmbeddingFiles {
    /// Source embeddings in text .vec format.
    #[arg(long)]
    pub src_emb: PathBuf,
    /// Target embeddings in text .vec format.
    #[arg(long)]
    pub tgt_emb: PathBuf,
}

/// Hyperparameter overrides. Precedence: flag, then --config file, then the
/// checkpoint's stored config (or defaults when there is none).
#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// JSON file with TrainConfig fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda_cyc: Option<f64>,
    #[arg(long)]
    pub lambda_rec: Option<f64>,
    #[arg(long)]
    pub smoothing: Option<f64>,
    #[arg(long)]
    pub n_critics: Option<usize>,
    #[arg(long)]
    pub code_dim: Option<usize>,
    #[arg(long)]
    pub csls_k: Option<usize>,
    #[arg(long)]
    pub disc_vocab_top: Option<usize>,
    #[arg(long)]
    pub valid_vocab_top: Option<usize>,
    #[arg(long)]
    pub disc_hidden: Option<usize>,
    #[arg(long)]
    pub max_vocab: Option<usize>,
    #[arg(long, value_enum)]
    pub normalize: Option<Normalization>,
    /// Disable a model component; repeatable.
    #[arg(long, value_enum)]
    pub ablation: Vec<AblationFlag>,
}

impl ConfigArgs {
    pub fn resolve(&self, base: TrainConfig) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                merge_json(&base, &text)?
            }
            None => base,
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field { cfg.$field = v; }
            )*};
        }
        set!(seed, lambda_cyc, lambda_rec, smoothing, n_critics, code_dim, csls_k, disc_vocab_top, valid_vocab_top, disc_hidden, max_vocab);
        if let Some(n) = self.normalize {
            cfg.normalize = n;
        }
        for flag in &self.ablation {
            match flag {
                AblationFlag::NoEncAdv => cfg.ablation.enc_adv = false,
                AblationFlag::NoRecon => cfg.ablation.recon = false,
                AblationFlag::NoCycle => cfg.ablation.cycle = false,
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Overlays the fields present in `text` on `base`.
fn merge_json(base: &TrainConfig, text: &str) -> Result<TrainConfig> {
    let mut value = serde_json::to_value(base)?;
    let patch: serde_json::Value = serde_json::from_str(text)?;
    let serde_json::Value::Object(patch) = patch else {
        return Err(Error::Config("config file must hold a JSON object".into()));
    };
    fn merge(dst: &mut serde_json::Value, src: serde_json::Map<String, serde_json::Value>) {
        for (k, v) in src {
            match (dst.get_mut(&k), v) {
                (Some(d @ serde_json::Value::Object(_)), serde_json::Value::Object(s)) => merge(d, s),
                (_, v) => {
                    dst[&k] = v;
                }
            }
        }
    }
    merge(&mut value, patch);
    Ok(serde_json::from_value(value)?)
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory for src.vec, tgt.vec and gold.tsv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub d: usize,
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "skewed")]
    pub structure: StructureArg,
    /// Spectrum decay exponent of the skewed structure.
    #[arg(long, default_value_t = 1.0)]
    pub exponent: f64,
    #[arg(long, default_value = "src")]
    pub src: String,
    #[arg(long, default_value = "tgt")]
    pub tgt: String,
    /// Also check that Procrustes on the gold pairs of a noiseless copy
    /// recovers the generating rotation.
    #[arg(long)]
    pub self_test: bool,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    /// Source language tag.
    #[arg(long)]
    pub src: String,
    /// Target language tag.
    #[arg(long)]
    pub tgt: String,
    #[command(flatten)]
    pub files: EmbeddingFiles,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Pretraining epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Pretrained checkpoint.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub files: EmbeddingFiles,
    /// Output checkpoint holding the best state.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Iterations per epoch.
    #[arg(long)]
    pub iters: Option<usize>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct RefineArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub files: EmbeddingFiles,
    #[arg(long)]
    pub out: PathBuf,
    /// Refinement iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub csls_k: Option<usize>,
    /// Frequent source words used for dictionary induction.
    #[arg(long)]
    pub top_n: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub files: EmbeddingFiles,
    /// Gold dictionary of "source target" lines.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_enum, default_value = "csls")]
    pub mode: RetrievalMode,
    #[arg(long)]
    pub csls_k: Option<usize>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Also write the JSON report (and a manifest) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub files: EmbeddingFiles,
    #[arg(long)]
    pub word: String,
    #[arg(long, default_value_t = 10)]
    pub topk: usize,
    #[arg(long, value_enum, default_value = "csls")]
    pub mode: RetrievalMode,
    #[arg(long)]
    pub csls_k: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Train(a) => cmd_train(a),
        Command::Refine(a) => cmd_refine(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Translate(a) => cmd_translate(a),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn load_pair(files: &EmbeddingFiles, cfg: &TrainConfig, src_lang: &str, tgt_lang: &str) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    let load = |path: &Path, lang: &str| -> Result<EmbeddingMatrix> {
        let (emb, report) = load_embeddings(path, cfg.max_vocab, lang)?;
        if report.skipped() > 0 {
            warn!("{}: skipped {} malformed or duplicate rows", path.display(), report.skipped());
        }
        info!("{}: {} words, dimension {}", path.display(), emb.len(), emb.dim());
        normalize(&emb, cfg.normalize)
    };
    Ok((load(&files.src_emb, src_lang)?, load(&files.tgt_emb, tgt_lang)?))
}

fn check_dims(state: &ModelState, src: &EmbeddingMatrix, tgt: &EmbeddingMatrix) -> Result<()> {
    if state.ae_src.embed_dim() != src.dim() || state.ae_tgt.embed_dim() != tgt.dim() {
        return Err(Error::InvalidArgument(format!(
            "checkpoint expects dimensions {}/{}, embeddings have {}/{}",
            state.ae_src.embed_dim(),
            state.ae_tgt.embed_dim(),
            src.dim(),
            tgt.dim()
        )));
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let structure = match a.structure {
        StructureArg::Skewed => SynthStructure::SkewedSpectrum { exponent: a.exponent },
        StructureArg::Isotropic => SynthStructure::Isotropic,
    };
    let spec = SynthSpec::new(a.n, a.d, a.sigma, a.seed).with_structure(structure);
    let mut manifest = RunManifest::start("synth", a.seed);
    let pair = synth_pair(&spec)?;
    std::fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let src_path = a.out.join("src.vec");
    let tgt_path = a.out.join("tgt.vec");
    let gold_path = a.out.join("gold.tsv");
    write_embeddings(&src_path, &pair.source.clone().with_lang(a.src.clone()))?;
    write_embeddings(&tgt_path, &pair.target.clone().with_lang(a.tgt.clone()))?;
    pair.gold.write_words(&gold_path, &pair.source, &pair.target)?;
    for p in [&src_path, &tgt_path, &gold_path] {
        manifest.output(p);
    }

    if a.self_test {
        let clean = synth_pair(&SynthSpec { noise_sigma: 0.0, ..spec.clone() })?;
        let src_rows = clean.source.vectors().select(ndarray::Axis(0), &clean.gold.sources());
        let tgt_rows = clean.target.vectors().select(ndarray::Axis(0), &clean.gold.targets());
        let w = procrustes(src_rows.view(), tgt_rows.view())?;
        let err = frobenius((w.weight() - &clean.rotation).view());
        if err >= 1e-6 {
            return Err(Error::Degenerate(format!(
                "self-test failed: Procrustes recovered the rotation with error {err:.3e}"
            )));
        }
        println!("self-test passed: rotation recovered with Frobenius error {err:.3e}");
    }
    manifest.finish(&a.out.join("manifest.json"))?;
    println!(
        "wrote {} source and {} target words and {} gold pairs to {}",
        pair.source.len(),
        pair.target.len(),
        pair.gold.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_pretrain(a: PretrainArgs) -> Result<()> {
    let mut cfg = a.cfg.resolve(TrainConfig::default())?;
    if let Some(e) = a.epochs {
        cfg.pretrain_epochs = e;
    }
    cfg.validate()?;
    let mut manifest = RunManifest::start("pretrain", cfg.seed);
    manifest.input(&a.files.src_emb)?;
    manifest.input(&a.files.tgt_emb)?;
    let (src, tgt) = load_pair(&a.files, &cfg, &a.src, &a.tgt)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = ModelState::init(src.dim(), tgt.dim(), &a.src, &a.tgt, &cfg, &mut rng);
    for (ae, emb) in [(&mut state.ae_src, &src), (&mut state.ae_tgt, &tgt)] {
        let report = ae.pretrain(emb, cfg.pretrain_epochs, &cfg, &mut rng)?;
        info!("{} autoencoder: final reconstruction loss {:.6e}", ae.lang, report.final_loss);
        println!("{}\treconstruction\t{:.6e}", ae.lang, report.final_loss);
    }
    let ckpt = Checkpoint {
        state,
        config: cfg.clone(),
        stage: Stage::Pretrained,
        epoch: 0,
        criterion: None,
        rng: RngState::capture(&rng),
    };
    write_checkpoint(&a.out, &ckpt)?;
    manifest.config = Some(cfg);
    manifest.output(&a.out);
    manifest.finish(&manifest_path_for(&a.out))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let base = read_checkpoint(&a.ckpt)?;
    let mut cfg = a.cfg.resolve(base.config.clone())?;
    if let Some(e) = a.epochs {
        cfg.n_epochs = e;
    }
    if let Some(i) = a.iters {
        cfg.iters_per_epoch = Some(i);
    }
    cfg.validate()?;
    if cfg.code_dim != base.state.code_dim() {
        return Err(Error::Config(format!(
            "code_dim {} differs from the checkpoint's {}",
            cfg.code_dim,
            base.state.code_dim()
        )));
    }
    let mut manifest = RunManifest::start("train", cfg.seed);
    manifest.input(&a.ckpt)?;
    manifest.input(&a.files.src_emb)?;
    manifest.input(&a.files.tgt_emb)?;
    let (src, tgt) = load_pair(&a.files, &cfg, &base.state.ae_src.lang, &base.state.ae_tgt.lang)?;
    check_dims(&base.state, &src, &tgt)?;

    let mut rng = if a.cfg.seed.is_some() {
        ChaCha8Rng::seed_from_u64(cfg.seed)
    } else {
        base.rng.restore()?
    };
    let log_path = {
        let mut name = a.out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".log");
        a.out.with_file_name(name)
    };
    let mut log = BufWriter::new(File::create(&log_path).map_err(io_err(&log_path))?);
    writeln!(log, "{}", ValidationRecord::LOG_HEADER).map_err(io_err(&log_path))?;
    let outcome = train_with(base.state, &src, &tgt, &cfg, &mut rng, |record, _| {
        writeln!(log, "{}", record.log_line()).map_err(io_err(&log_path))?;
        println!("{}", record.log_line());
        Ok(())
    })?;
    log.flush().map_err(io_err(&log_path))?;

    let ckpt = Checkpoint {
        state: outcome.best,
        config: cfg.clone(),
        stage: Stage::Trained,
        epoch: outcome.best_epoch,
        criterion: Some(outcome.best_criterion),
        rng: RngState::capture(&rng),
    };
    write_checkpoint(&a.out, &ckpt)?;
    println!(
        "best validation criterion {:.6} at epoch {} (initial {:.6})",
        outcome.best_criterion, outcome.best_epoch, outcome.initial_criterion
    );
    manifest.config = Some(cfg);
    manifest.output(&a.out);
    manifest.output(&log_path);
    manifest.finish(&manifest_path_for(&a.out))?;
    match outcome.status {
        TrainStatus::Completed => Ok(()),
        TrainStatus::Diverged(msg) => Err(Error::Divergence(format!("{msg}; best state saved to {}", a.out.display()))),
    }
}

fn cmd_refine(a: RefineArgs) -> Result<()> {
    let mut ckpt = read_checkpoint(&a.ckpt)?;
    let cfg = &mut ckpt.config;
    if let Some(i) = a.iters {
        cfg.refine_iters = i;
    }
    if let Some(k) = a.csls_k {
        cfg.csls_k = k;
    }
    if let Some(n) = a.top_n {
        cfg.refine_top_n = n;
    }
    cfg.validate()?;
    let cfg = ckpt.config.clone();
    let mut manifest = RunManifest::start("refine", cfg.seed);
    manifest.input(&a.ckpt)?;
    if cfg.refine_iters == 0 {
        std::fs::copy(&a.ckpt, &a.out).map_err(io_err(&a.out))?;
        println!("0 refinement iterations: checkpoint copied unchanged");
    } else {
        manifest.input(&a.files.src_emb)?;
        manifest.input(&a.files.tgt_emb)?;
        let (src, tgt) = load_pair(&a.files, &cfg, &ckpt.state.ae_src.lang, &ckpt.state.ae_tgt.lang)?;
        check_dims(&ckpt.state, &src, &tgt)?;
        let params = CslsParams { k_neighbors: cfg.csls_k };
        let outcome = refine(ckpt.state, &src, &tgt, cfg.refine_iters, params, cfg.refine_top_n)?;
        for (i, size) in outcome.dictionary_sizes.iter().enumerate() {
            println!("iteration {}\tdictionary {size}", i + 1);
        }
        let defect = orthogonality_defect(outcome.state.mapper_g.weight().view())
            .max(orthogonality_defect(outcome.state.mapper_f.weight().view()));
        println!("mapper orthogonality defect {defect:.3e}");
        let aborted = outcome.aborted;
        ckpt = Checkpoint {
            state: outcome.state,
            stage: if outcome.completed_iterations > 0 { Stage::Refined } else { ckpt.stage },
            ..ckpt
        };
        write_checkpoint(&a.out, &ckpt)?;
        if aborted {
            manifest.output(&a.out);
            manifest.finish(&manifest_path_for(&a.out))?;
            return Err(Error::Empty(format!(
                "refinement stopped after {} iterations on an empty dictionary; last valid state saved",
                outcome.completed_iterations
            )));
        }
    }
    manifest.config = Some(cfg);
    manifest.output(&a.out);
    manifest.finish(&manifest_path_for(&a.out))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let ckpt = read_checkpoint(&a.ckpt)?;
    let cfg = &ckpt.config;
    let (src, tgt) = load_pair(&a.files, cfg, &ckpt.state.ae_src.lang, &ckpt.state.ae_tgt.lang)?;
    check_dims(&ckpt.state, &src, &tgt)?;
    let gold = load_gold(&a.gold, &src, &tgt)?;
    let params = CslsParams {
        k_neighbors: a.csls_k.unwrap_or(cfg.csls_k),
    };
    let report = precision_at_k(&ckpt.state, &src, &tgt, &gold, &[1, 5, 10], a.mode, params)?;
    report.check_integrity(gold.total_sources())?;
    if a.json {
        println!("{}", report.to_json());
    } else {
        println!("{report}");
    }
    if let Some(out) = &a.out {
        let mut manifest = RunManifest::start("eval", cfg.seed);
        manifest.input(&a.ckpt)?;
        manifest.input(&a.files.src_emb)?;
        manifest.input(&a.files.tgt_emb)?;
        manifest.input(&a.gold)?;
        std::fs::write(out, report.to_json() + "\n").map_err(io_err(out))?;
        manifest.config = Some(cfg.clone());
        manifest.output(out);
        manifest.finish(&manifest_path_for(out))?;
    }
    Ok(())
}

fn cmd_translate(a: TranslateArgs) -> Result<()> {
    let ckpt = read_checkpoint(&a.ckpt)?;
    let cfg = &ckpt.config;
    let (src, tgt) = load_pair(&a.files, cfg, &ckpt.state.ae_src.lang, &ckpt.state.ae_tgt.lang)?;
    check_dims(&ckpt.state, &src, &tgt)?;
    let params = CslsParams {
        k_neighbors: a.csls_k.unwrap_or(cfg.csls_k),
    };
    let ranked = translate(&ckpt.state, &src, &tgt, &a.word, a.topk, a.mode, params)?;
    if a.json {
        let items: Vec<_> = ranked
            .iter()
            .map(|(w, s)| serde_json::json!({ "word": w, "score": s }))
            .collect();
        println!("{}", serde_json::Value::Array(items));
    } else {
        for (rank, (w, s)) in ranked.iter().enumerate() {
            println!("{}\t{w}\t{s:.6}", rank + 1);
        }
    }
    Ok(())
}
