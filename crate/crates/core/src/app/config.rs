use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::pipeline::{DlsConfig, PipelineConfig, Scale};
use crate::traversal::{LatentClassifierConfig, Strategy};

/// Everything `debias run` needs: pipeline settings, strategies and output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub strategies: Vec<Strategy>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pipeline: PipelineConfig::default(),
            strategies: Strategy::ALL.to_vec(),
            out_dir: None,
        }
    }
}

const DLS_ROLES: [&str; 4] = ["e_ra_dls", "ra_dls", "b_dr_dls", "d_dr_dls"];
const LATENT_ROLES: [&str; 2] = ["l_ra_dls", "l_dr_dls"];

fn bad(line: usize, key: &str, value: &str, want: &str) -> Error {
    Error::Config(format!("line {line}: `{key}` expects {want}, got `{value}`"))
}

fn parse<T: std::str::FromStr>(line: usize, key: &str, value: &str, want: &str) -> Result<T> {
    value.parse().map_err(|_| bad(line, key, value, want))
}

fn parse_list(line: usize, key: &str, value: &str) -> Result<Vec<usize>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| parse(line, key, v.trim(), "a comma-separated list of widths"))
        .collect()
}

fn list(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn set_train(t: &mut TrainConfig, field: &str, line: usize, key: &str, value: &str) -> Result<bool> {
    match field {
        "learning_rate" => t.learning_rate = parse(line, key, value, "a number")?,
        "epochs" => t.epochs = parse(line, key, value, "an integer")?,
        "batch_size" => t.batch_size = parse(line, key, value, "an integer")?,
        "init_scale" => t.weight_init_scale = parse(line, key, value, "a number")?,
        "seed" => t.seed = parse(line, key, value, "an integer")?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn train_entries(prefix: &str, t: &TrainConfig, out: &mut Vec<(String, String)>) {
    out.push((format!("{prefix}.learning_rate"), t.learning_rate.to_string()));
    out.push((format!("{prefix}.epochs"), t.epochs.to_string()));
    out.push((format!("{prefix}.batch_size"), t.batch_size.to_string()));
    out.push((format!("{prefix}.init_scale"), t.weight_init_scale.to_string()));
    out.push((format!("{prefix}.seed"), t.seed.to_string()));
}

impl RunConfig {
    /// Parses the flat `key = value` format. `#` starts a comment; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected `key = value`")))?;
            cfg.set(line, key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key. `line` is only used in error messages.
    pub fn set(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        let p = &mut self.pipeline;
        match key {
            "master_seed" => p.master_seed = parse(line, key, value, "an integer")?,
            "scale" => p.partition.scale = value.parse::<Scale>().map_err(|_| bad(line, key, value, "`num/den`"))?,
            "oversample_factor" => p.partition.oversample_factor = parse(line, key, value, "an integer")?,
            "val_fraction" => p.partition.val_fraction = parse(line, key, value, "a number")?,
            "render_size" => p.generator.render_size = parse(line, key, value, "an integer")?,
            "image_size" => p.generator.image_size = parse(line, key, value, "an integer")?,
            "ra_threshold_lo" => p.generator.thresholds.lo = parse(line, key, value, "a number")?,
            "ra_threshold_hi" => p.generator.thresholds.hi = parse(line, key, value, "a number")?,
            "marker_weight" => p.generator.marker_weight = parse(line, key, value, "a number")?,
            "marker_noise" => p.generator.marker_noise = parse(line, key, value, "a number")?,
            "manual_train_fraction" => p.manual_train_fraction = parse(line, key, value, "a number")?,
            "pair_count" => p.pair_count = parse(line, key, value, "an integer")?,
            "threshold" => p.threshold = parse(line, key, value, "a number")?,
            "generative.latent_dim" => p.generative.latent_dim = parse(line, key, value, "an integer")?,
            "generative.hidden_dim" => p.generative.hidden_dim = parse(line, key, value, "an integer")?,
            "generative.pca_init" => p.generative.pca_init = parse(line, key, value, "true or false")?,
            "generative.latent_scale" => p.generative.latent_scale = parse(line, key, value, "a number")?,
            "traversal.eta" => p.traversal.eta = parse(line, key, value, "a number")?,
            "traversal.max_steps" => p.traversal.max_steps = parse(line, key, value, "an integer")?,
            "traversal.target_prob" => p.traversal.target_prob = parse(line, key, value, "a number")?,
            "strategies" => {
                self.strategies = value
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<Strategy>()
                            .map_err(|_| bad(line, key, value, "ra_optimized and/or dr_optimized"))
                    })
                    .collect::<Result<_>>()?;
            }
            "out" => self.out_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            _ => {
                if !self.set_model(line, key, value)? {
                    return Err(Error::Config(format!("line {line}: unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    fn set_model(&mut self, line: usize, key: &str, value: &str) -> Result<bool> {
        let Some((role, field)) = key.split_once('.') else {
            return Ok(false);
        };
        let p = &mut self.pipeline;
        if role == "generative" {
            return set_train(&mut p.generative.train, field, line, key, value);
        }
        let (hidden, train) = match role {
            "e_ra_dls" => dls_parts(&mut p.e_ra_dls),
            "ra_dls" => dls_parts(&mut p.ra_dls),
            "b_dr_dls" => dls_parts(&mut p.b_dr_dls),
            "d_dr_dls" => dls_parts(&mut p.d_dr_dls),
            "l_ra_dls" => latent_parts(&mut p.l_ra_dls),
            "l_dr_dls" => latent_parts(&mut p.l_dr_dls),
            _ => return Ok(false),
        };
        if field == "hidden" {
            *hidden = parse_list(line, key, value)?;
            return Ok(true);
        }
        set_train(train, field, line, key, value)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if self.strategies.is_empty() {
            return Err(Error::Config("at least one strategy is required".into()));
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let p = &self.pipeline;
        let mut out: Vec<(String, String)> = vec![
            ("master_seed".into(), p.master_seed.to_string()),
            ("scale".into(), p.partition.scale.to_string()),
            ("oversample_factor".into(), p.partition.oversample_factor.to_string()),
            ("val_fraction".into(), p.partition.val_fraction.to_string()),
            ("render_size".into(), p.generator.render_size.to_string()),
            ("image_size".into(), p.generator.image_size.to_string()),
            ("ra_threshold_lo".into(), p.generator.thresholds.lo.to_string()),
            ("ra_threshold_hi".into(), p.generator.thresholds.hi.to_string()),
            ("marker_weight".into(), p.generator.marker_weight.to_string()),
            ("marker_noise".into(), p.generator.marker_noise.to_string()),
            ("manual_train_fraction".into(), p.manual_train_fraction.to_string()),
        ];
        let dls = [&p.e_ra_dls, &p.ra_dls, &p.b_dr_dls, &p.d_dr_dls];
        for (role, d) in DLS_ROLES.iter().zip(dls) {
            out.push((format!("{role}.hidden"), list(&d.hidden)));
            train_entries(role, &d.train, &mut out);
        }
        out.push(("generative.latent_dim".into(), p.generative.latent_dim.to_string()));
        out.push(("generative.hidden_dim".into(), p.generative.hidden_dim.to_string()));
        out.push(("generative.pca_init".into(), p.generative.pca_init.to_string()));
        out.push(("generative.latent_scale".into(), p.generative.latent_scale.to_string()));
        train_entries("generative", &p.generative.train, &mut out);
        out.push(("pair_count".into(), p.pair_count.to_string()));
        for (role, l) in LATENT_ROLES.iter().zip([&p.l_ra_dls, &p.l_dr_dls]) {
            out.push((format!("{role}.hidden"), list(&l.hidden)));
            train_entries(role, &l.train, &mut out);
        }
        out.push(("traversal.eta".into(), p.traversal.eta.to_string()));
        out.push(("traversal.max_steps".into(), p.traversal.max_steps.to_string()));
        out.push(("traversal.target_prob".into(), p.traversal.target_prob.to_string()));
        out.push(("threshold".into(), p.threshold.to_string()));
        let names: Vec<&str> = self.strategies.iter().map(|s| s.name()).collect();
        out.push(("strategies".into(), names.join(",")));
        out
    }

    /// Renders the config in the format [`RunConfig::parse`] reads. The output
    /// directory is left out so the snapshot does not depend on where the run lives.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

fn dls_parts(d: &mut DlsConfig) -> (&mut Vec<usize>, &mut TrainConfig) {
    (&mut d.hidden, &mut d.train)
}

fn latent_parts(l: &mut LatentClassifierConfig) -> (&mut Vec<usize>, &mut TrainConfig) {
    (&mut l.hidden, &mut l.train)
}
