use std::fmt;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::config::RunConfig;
use super::manifest::{fetch, store, ArtifactRef, ExtrapolationSummary, RunManifest, StageRecord};
use super::render::{results_table, roc_plots, slug};
use crate::error::{Error, Result};
use crate::generative::GenerativeModel;
use crate::io::{encode_pgm, pairs_csv, partition_checksums, predictions_csv, sha256_file, write_dataset};
use crate::nn::ModelParams;
use crate::pipeline::{
    build_partitions, derive_seed, draw_pairs, evaluate_leftover, extrapolate_stage, predict_records, run_baseline,
    run_debias, system_name, train_generator_stage, ExtrapolationOutcome, GeneratorOutcome, Partitions,
    BASELINE_SYSTEM,
};
use crate::stats::{fairness_report, FairnessReport};
use crate::traversal::{write_trace_csv, Strategy, SynthesisModels, KEPT_LATENT_TRACES};

/// Synthetic images written per strategy for inspection.
const PREVIEW_IMAGES: usize = 16;

/// Seed roles recorded in the manifest.
const SEED_ROLES: [&str; 11] = [
    "partitions",
    "manual",
    "e-ra-dls",
    "b-dr-dls",
    "ra-dls",
    "ra-dls-balance",
    "generative",
    "pairs",
    "l-ra-dls",
    "l-dr-dls",
    "d-dr-dls",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Generate,
    Baseline,
    Generator,
    DebiasRa,
    DebiasDr,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Generate,
        Stage::Baseline,
        Stage::Generator,
        Stage::DebiasRa,
        Stage::DebiasDr,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Baseline => "baseline",
            Stage::Generator => "generator",
            Stage::DebiasRa => "debias-ra",
            Stage::DebiasDr => "debias-dr",
            Stage::Evaluate => "evaluate",
        }
    }

    fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Generate => &[],
            Stage::Baseline => &[Stage::Generate],
            Stage::Generator => &[Stage::Baseline],
            Stage::DebiasRa | Stage::DebiasDr => &[Stage::Generator],
            Stage::Evaluate => &[Stage::Baseline],
        }
    }

    fn strategy(self) -> Option<Strategy> {
        match self {
            Stage::DebiasRa => Some(Strategy::RaOptimized),
            Stage::DebiasDr => Some(Strategy::DrOptimized),
            _ => None,
        }
    }

    /// Comma-separated stage names; `all` selects every stage, an empty string none.
    pub fn parse_list(s: &str) -> Result<Vec<Stage>> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Vec::new());
        }
        if s == "all" {
            return Ok(Stage::ALL.to_vec());
        }
        let mut out: Vec<Stage> = s.split(',').map(|t| t.trim().parse()).collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Exclusive lock on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

pub const LOCK_NAME: &str = ".lock";

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Integrity(format!(
                "run directory {} is locked by another run (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn report_key(strategy: Option<Strategy>) -> &'static str {
    strategy.map_or("baseline", Strategy::name)
}

fn checkpoint_key(strategy: Option<Strategy>) -> String {
    match strategy {
        None => "b_dr_dls".into(),
        Some(s) => format!("d_dr_dls_{}", s.name()),
    }
}

struct Runner {
    dir: PathBuf,
    config: RunConfig,
    manifest: RunManifest,
    data: Option<(Partitions, ExtrapolationOutcome)>,
}

impl Runner {
    fn missing(&self, stage: Stage, need: Stage) -> Error {
        Error::MissingDependency {
            stage: stage.name().into(),
            detail: format!("stage `{need}` has not been run in {}", self.dir.display()),
        }
    }

    /// Partitions and extrapolated labels, rebuilt from the config and checked
    /// against the checksums recorded by the generate stage.
    fn data(&mut self) -> Result<&(Partitions, ExtrapolationOutcome)> {
        if self.data.is_none() {
            let cfg = &self.config.pipeline;
            let mut partitions = build_partitions(&cfg.partition_spec(), &cfg.generator)?;
            let extrapolation = extrapolate_stage(&mut partitions, cfg)?;
            let sums = partition_checksums(&partitions);
            if !self.manifest.partition_checksums.is_empty() && self.manifest.partition_checksums != sums {
                return Err(Error::Integrity(
                    "rebuilt partitions do not match the recorded checksums".into(),
                ));
            }
            self.data = Some((partitions, extrapolation));
        }
        Ok(self.data.as_ref().expect("just built"))
    }

    fn store(&self, rel: &str, contents: impl AsRef<[u8]>) -> Result<ArtifactRef> {
        store(&self.dir, rel, contents)
    }

    fn checkpoint(&self, stage: Stage, key: &str) -> Result<Vec<u8>> {
        let a = self
            .manifest
            .checkpoints
            .get(key)
            .ok_or_else(|| Error::MissingDependency {
                stage: stage.name().into(),
                detail: format!("checkpoint `{key}` is not recorded in the manifest"),
            })?;
        fetch(&self.dir, a)
    }

    fn model(&self, stage: Stage, key: &str) -> Result<ModelParams> {
        ModelParams::from_bytes(&self.checkpoint(stage, key)?)
    }

    fn write_report(&mut self, key: &str, report: &FairnessReport, records_csv: String) -> Result<()> {
        let r = self.store(&format!("reports/{key}.json"), report.to_json())?;
        self.manifest.reports.insert(key.into(), r);
        let p = self.store(&format!("predictions/{key}.csv"), records_csv)?;
        self.manifest.other_artifacts.insert(format!("predictions_{key}"), p);
        Ok(())
    }

    fn run_stage(&mut self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Generate => self.generate(),
            Stage::Baseline => self.baseline(),
            Stage::Generator => self.generator(),
            Stage::DebiasRa | Stage::DebiasDr => self.debias(stage),
            Stage::Evaluate => self.evaluate(),
        }
    }

    fn generate(&mut self) -> Result<()> {
        let master = self.config.pipeline.master_seed;
        let dir = self.dir.join("data");
        let (partitions, ex) = self.data()?;
        let sums = partition_checksums(partitions);
        let summary = ExtrapolationSummary {
            validation_accuracy: ex.validation_accuracy,
            n_train: ex.n_train,
            n_val: ex.n_val,
            extrapolated: ex.extrapolated,
            changed: ex.changed,
        };
        let e_ra = ex.model.to_bytes();
        write_dataset(&dir, partitions)?;
        let m = &mut self.manifest;
        m.partition_checksums = sums;
        m.extrapolation = Some(summary);
        m.master_seed = master;
        m.seeds = SEED_ROLES
            .iter()
            .map(|r| (r.to_string(), derive_seed(master, r)))
            .collect();
        for (key, file) in [
            ("dataset_manifest", "data/manifest.csv"),
            ("dataset_factors", "data/factors.csv"),
        ] {
            let sha256 = sha256_file(&self.dir.join(file))?;
            self.manifest.other_artifacts.insert(
                key.into(),
                ArtifactRef {
                    path: file.into(),
                    sha256,
                },
            );
        }
        let a = self.store("models/e_ra_dls.ckpt", e_ra)?;
        self.manifest.checkpoints.insert("e_ra_dls".into(), a);
        Ok(())
    }

    fn baseline(&mut self) -> Result<()> {
        let cfg = self.config.pipeline.clone();
        let (partitions, _) = self.data()?;
        let outcome = run_baseline(partitions, &cfg)?;
        let records = predict_records(&outcome.model, &partitions.test, cfg.threshold)?;
        let csv = predictions_csv(partitions.test.iter().map(|s| s.id.as_str()).zip(&records));
        let a = self.store("models/b_dr_dls.ckpt", outcome.model.to_bytes())?;
        self.manifest.checkpoints.insert("b_dr_dls".into(), a);
        self.write_report("baseline", &outcome.report, csv)
    }

    fn generator(&mut self) -> Result<()> {
        let cfg = self.config.pipeline.clone();
        let b_dr = self.model(Stage::Generator, "b_dr_dls")?;
        let (partitions, _) = self.data()?;
        let g = train_generator_stage(partitions, &b_dr, &cfg)?;
        for (key, bytes) in [
            ("generative", g.generative.to_bytes()),
            ("ra_dls", g.ra_dls.to_bytes()),
            ("l_ra_dls", g.l_ra_dls.to_bytes()),
            ("l_dr_dls", g.l_dr_dls.to_bytes()),
        ] {
            let a = self.store(&format!("models/{key}.ckpt"), bytes)?;
            self.manifest.checkpoints.insert(key.into(), a);
        }
        let a = self.store("generator/pairs.csv", pairs_csv(&g.pairs))?;
        self.manifest.other_artifacts.insert("pairs".into(), a);
        let counts = g.pair_counts();
        let summary = serde_json::json!({
            "pair_count": g.pairs.len(),
            "pseudo_label_counts": {
                "healthy_lighter": counts[0],
                "referable_lighter": counts[1],
                "healthy_darker": counts[2],
                "referable_darker": counts[3],
            },
            "l_dr_dls_target": g.l_dr_target,
        });
        let a = self.store("generator/summary.json", format!("{:#}\n", summary))?;
        self.manifest.other_artifacts.insert("generator_summary".into(), a);
        Ok(())
    }

    fn load_generator(&self, stage: Stage, b_dr: &ModelParams) -> Result<GeneratorOutcome> {
        let generative = GenerativeModel::from_bytes(&self.checkpoint(stage, "generative")?)?;
        let ra_dls = self.model(stage, "ra_dls")?;
        let l_ra_dls = self.model(stage, "l_ra_dls")?;
        let l_dr_dls = self.model(stage, "l_dr_dls")?;
        let pairs = draw_pairs(&generative, b_dr, &ra_dls, &self.config.pipeline)?;
        let summary =
            self.manifest
                .other_artifacts
                .get("generator_summary")
                .ok_or_else(|| Error::MissingDependency {
                    stage: stage.name().into(),
                    detail: "generator summary is not recorded in the manifest".into(),
                })?;
        let summary: serde_json::Value = serde_json::from_slice(&fetch(&self.dir, summary)?)
            .map_err(|e| Error::Integrity(format!("{}: {e}", summary.path)))?;
        let l_dr_target = serde_json::from_value(summary["l_dr_dls_target"].clone())
            .map_err(|e| Error::Integrity(format!("generator summary: {e}")))?;
        Ok(GeneratorOutcome {
            generative,
            ra_dls,
            pairs,
            l_ra_dls,
            l_dr_dls,
            l_dr_target,
        })
    }

    fn debias(&mut self, stage: Stage) -> Result<()> {
        let strategy = stage.strategy().expect("debias stage");
        let cfg = self.config.pipeline.clone();
        let b_dr = self.model(stage, "b_dr_dls")?;
        let generator = self.load_generator(stage, &b_dr)?;
        let (partitions, _) = self.data()?;
        let outcome = run_debias(strategy, partitions, &b_dr, &generator, &cfg)?;
        let records = predict_records(&outcome.model, &partitions.test, cfg.threshold)?;
        let csv = predictions_csv(partitions.test.iter().map(|s| s.id.as_str()).zip(&records));

        let name = strategy.name();
        let a = self.store(&format!("models/d_dr_dls_{name}.ckpt"), outcome.model.to_bytes())?;
        self.manifest.checkpoints.insert(checkpoint_key(Some(strategy)), a);
        self.write_report(name, &outcome.report, csv)?;
        let mut synth = serde_json::to_string_pretty(&outcome.synthesis).expect("synthesis report serializes");
        synth.push('\n');
        let a = self.store(&format!("synthesis/{name}/report.json"), synth)?;
        self.manifest.other_artifacts.insert(format!("synthesis_{name}"), a);
        self.manifest.synthesis.insert(name.into(), outcome.synthesis.clone());

        let models = SynthesisModels {
            generative: &generator.generative,
            b_dr_dls: &b_dr,
            ra_dls: &generator.ra_dls,
            latent_clf: generator.latent_classifier(strategy),
            image_size: cfg.generator.image_size,
        };
        for (k, t) in outcome.traversals.iter().take(KEPT_LATENT_TRACES).enumerate() {
            let rel = format!("synthesis/{name}/trace_{k}.csv");
            let path = self.dir.join(&rel);
            write_trace_csv(&path, strategy, t, &models)?;
            let sha256 = sha256_file(&path)?;
            self.manifest
                .other_artifacts
                .insert(format!("trace_{name}_{k}"), ArtifactRef { path: rel, sha256 });
        }
        for s in outcome.synthetic.iter().take(PREVIEW_IMAGES) {
            let rel = format!("synthesis/{name}/{}.pgm", s.id);
            let a = self.store(&rel, encode_pgm(&s.pixels))?;
            self.manifest.other_artifacts.insert(format!("preview_{}", s.id), a);
        }
        Ok(())
    }

    fn evaluate(&mut self) -> Result<()> {
        let cfg = self.config.pipeline.clone();
        let mut systems: Vec<(Option<Strategy>, String)> = vec![(None, BASELINE_SYSTEM.to_string())];
        for s in Strategy::ALL {
            if self.manifest.checkpoints.contains_key(&checkpoint_key(Some(s))) {
                systems.push((Some(s), system_name(s).to_string()));
            }
        }
        let models: Vec<ModelParams> = systems
            .iter()
            .map(|(s, _)| self.model(Stage::Evaluate, &checkpoint_key(*s)))
            .collect::<Result<_>>()?;
        let (partitions, _) = self.data()?;
        let mut reports = Vec::new();
        let mut outputs = Vec::new();
        for ((strategy, system), model) in systems.iter().zip(&models) {
            let records = predict_records(model, &partitions.test, cfg.threshold)?;
            let mut report = fairness_report(system, &records, cfg.threshold)?;
            report.leftover_sensitivity = Some(evaluate_leftover(model, &partitions.leftover_rd, cfg.threshold)?);
            let csv = predictions_csv(partitions.test.iter().map(|s| s.id.as_str()).zip(&records));
            outputs.push((report_key(*strategy), report.clone(), csv));
            reports.push(report);
        }
        for (key, report, csv) in outputs {
            self.write_report(key, &report, csv)?;
            for (file, svg) in roc_plots(&report) {
                let a = self.store(&format!("plots/{file}"), svg)?;
                self.manifest
                    .other_artifacts
                    .insert(format!("plot_{}", file.trim_end_matches(".svg")), a);
            }
        }
        let a = self.store("reports/results.txt", results_table(&reports))?;
        self.manifest.reports.insert("results".into(), a);
        Ok(())
    }
}

/// Runs `stages` (in pipeline order) in `dir` and returns the updated manifest.
///
/// An empty stage list is a no-op: nothing is locked or written.
pub fn cmd_run(config: &RunConfig, dir: &Path, stages: &[Stage]) -> Result<RunManifest> {
    config.validate()?;
    if stages.is_empty() {
        return Ok(RunManifest::load(dir)?.unwrap_or_default());
    }
    let _lock = RunLock::acquire(dir)?;
    let snapshot = config.to_text();
    let manifest = match RunManifest::load(dir)? {
        Some(m) if m.config != snapshot => {
            return Err(Error::Config(format!(
                "{} holds a run with a different config; use a fresh output directory",
                dir.display()
            )))
        }
        Some(m) => {
            m.verify(dir)?;
            m
        }
        None => RunManifest {
            config: snapshot,
            master_seed: config.pipeline.master_seed,
            ..RunManifest::default()
        },
    };
    let mut runner = Runner {
        dir: dir.to_path_buf(),
        config: config.clone(),
        manifest,
        data: None,
    };
    let mut ordered = stages.to_vec();
    ordered.sort();
    ordered.dedup();
    for stage in ordered {
        if let Some(s) = stage.strategy() {
            if !config.strategies.contains(&s) {
                log::info!("skipping {stage}: strategy {} is not selected", s.name());
                continue;
            }
        }
        for &need in stage.requires() {
            if !runner.manifest.has_stage(need.name()) {
                return Err(runner.missing(stage, need));
            }
        }
        log::info!("stage {stage}");
        let started = now();
        runner.run_stage(stage)?;
        runner.manifest.stages.insert(
            stage.name().into(),
            StageRecord {
                started,
                finished: now(),
            },
        );
        runner.manifest.save(dir)?;
    }
    Ok(runner.manifest)
}

/// Writes the dataset (PGM images, `manifest.csv`, `factors.csv`) into `dir`.
pub fn cmd_generate(config: &RunConfig, dir: &Path) -> Result<Vec<crate::io::ManifestRow>> {
    config.validate()?;
    let cfg = &config.pipeline;
    let mut partitions = build_partitions(&cfg.partition_spec(), &cfg.generator)?;
    extrapolate_stage(&mut partitions, cfg)?;
    write_dataset(dir, &partitions)
}

/// Comparison table of every report recorded in the run directory.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let manifest = RunManifest::load(dir)?.ok_or_else(|| Error::MissingDependency {
        stage: "report".into(),
        detail: format!("no run manifest in {}", dir.display()),
    })?;
    let mut reports = Vec::new();
    for key in ["baseline", Strategy::RaOptimized.name(), Strategy::DrOptimized.name()] {
        if let Some(a) = manifest.reports.get(key) {
            let bytes = fetch(dir, a)?;
            let r: FairnessReport =
                serde_json::from_slice(&bytes).map_err(|e| Error::Integrity(format!("{}: {e}", a.path)))?;
            reports.push(r);
        }
    }
    if reports.is_empty() {
        return Err(Error::MissingDependency {
            stage: "report".into(),
            detail: "no system reports recorded; run the baseline stage first".into(),
        });
    }
    Ok(results_table(&reports))
}

/// Fairness report and ROC plots from a prediction dump.
pub fn cmd_stats(csv_text: &str, system: &str, out: Option<&Path>) -> Result<FairnessReport> {
    let rows = crate::io::parse_predictions(csv_text)?;
    let records: Vec<_> = rows.into_iter().map(|(_, r)| r).collect();
    let report = fairness_report(system, &records, crate::stats::DEFAULT_THRESHOLD)?;
    if let Some(dir) = out {
        store(dir, &format!("{}.json", slug(system)), report.to_json())?;
        for (file, svg) in roc_plots(&report) {
            store(dir, &file, svg)?;
        }
    }
    Ok(report)
}

/// Every stage in pipeline order with whether it is recorded, for status output.
pub fn stage_status(manifest: &RunManifest) -> Vec<(Stage, bool)> {
    Stage::ALL.iter().map(|&s| (s, manifest.has_stage(s.name()))).collect()
}
