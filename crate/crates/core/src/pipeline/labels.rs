use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{image_dataset, image_matrix, DlsConfig};
use crate::error::{Error, Result};
use crate::nn::{argmax, predict_proba_batch, train_classifier, Activation, Architecture, ModelParams, TrainConfig};
use crate::stats::Group;
use crate::synthetic::{ImageSample, Provenance, RaLabel};

#[derive(Clone, Debug)]
pub struct ExtrapolationOutcome {
    pub model: ModelParams,
    /// Accuracy on the held-out manual samples.
    pub validation_accuracy: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub extrapolated: usize,
    /// Extrapolated labels that changed the sample's appearance group.
    pub changed: usize,
}

/// Picks `count` manually labelled indices, balanced across appearance groups.
///
/// Lighter gets the extra sample when `count` is odd.
pub fn select_manual(samples: &[ImageSample], count: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lighter: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].ra_label == RaLabel::Lighter)
        .collect();
    let mut darker: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].ra_label == RaLabel::Darker)
        .collect();
    lighter.shuffle(&mut rng);
    darker.shuffle(&mut rng);
    let want_dark = count / 2;
    let want_light = count - want_dark;
    if lighter.len() < want_light || darker.len() < want_dark {
        return Err(Error::invalid(format!(
            "manual budget {count} exceeds available samples ({} lighter, {} darker)",
            lighter.len(),
            darker.len()
        )));
    }
    let mut out: Vec<usize> = lighter[..want_light]
        .iter()
        .chain(&darker[..want_dark])
        .copied()
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Trains E-RA-DLS on part of `manual`, validates on the rest, then relabels `unlabeled`.
pub fn extrapolate_ra_labels(
    manual: &[&ImageSample],
    unlabeled: &mut [&mut ImageSample],
    config: &DlsConfig,
    train: &TrainConfig,
    train_fraction: f64,
) -> Result<ExtrapolationOutcome> {
    let mut by_group: [Vec<&ImageSample>; 2] = [Vec::new(), Vec::new()];
    for s in manual {
        match s.ra_label {
            RaLabel::Lighter => by_group[0].push(s),
            RaLabel::Darker => by_group[1].push(s),
            RaLabel::Indeterminate => {}
        }
    }
    if by_group.iter().any(Vec::is_empty) {
        return Err(Error::invalid(
            "manual subset must contain both lighter and darker samples",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed ^ 0x3A7A_0000_0000_0001);
    let (mut fit, mut val) = (Vec::new(), Vec::new());
    for group in &mut by_group {
        group.shuffle(&mut rng);
        let k = ((train_fraction * group.len() as f64).round() as usize).clamp(1, group.len());
        fit.extend_from_slice(&group[..k]);
        val.extend_from_slice(&group[k..]);
    }
    let darker_target = |s: &ImageSample| usize::from(s.ra_label == RaLabel::Darker);
    let data = image_dataset(&fit, darker_target)?;
    let arch = Architecture::mlp(data.input_dim(), &config.hidden, 2, Activation::Identity);
    let model = train_classifier(&data, train, &arch)?;

    let validation_accuracy = if val.is_empty() {
        f64::NAN
    } else {
        let probs = predict_proba_batch(&model, image_matrix(&val)?.view())?;
        let correct = val
            .iter()
            .zip(probs.rows())
            .filter(|(s, p)| argmax(p.as_slice().expect("row")) == darker_target(s))
            .count();
        correct as f64 / val.len() as f64
    };

    let mut changed = 0;
    if !unlabeled.is_empty() {
        let refs: Vec<&ImageSample> = unlabeled.iter().map(|s| &**s).collect();
        let probs = predict_proba_batch(&model, image_matrix(&refs)?.view())?;
        for (s, p) in unlabeled.iter_mut().zip(probs.rows()) {
            let group = if argmax(p.as_slice().expect("row")) == 1 {
                Group::Darker
            } else {
                Group::Lighter
            };
            if Some(group) != s.ra_label.group() {
                changed += 1;
            }
            s.relabel(RaLabel::from_group(group), Provenance::Extrapolated)?;
        }
    }
    Ok(ExtrapolationOutcome {
        model,
        validation_accuracy,
        n_train: fit.len(),
        n_val: val.len(),
        extrapolated: unlabeled.len(),
        changed,
    })
}
