use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{FactorVector, Image};
use crate::error::{Error, Result};

pub const MIN_RENDER_SIZE: usize = 16;

const GEOMETRY_STREAM: u64 = 0x6E0_0001;
const LESION_STREAM: u64 = 0x1E5_0002;
const NOISE_STREAM: u64 = 0x4015_0003;

const LESIONS_PER_LEVEL: usize = 3;
const MAX_LESIONS: usize = 4 * LESIONS_PER_LEVEL;
const LESION_AMPLITUDE: f64 = 0.3;
const LESION_SIGMA: f64 = 1.3;
const LESION_PIGMENT_FADE: f64 = 0.6;
const NOISE_SIGMA: f64 = 0.02;

/// Blob count for a severity grade.
pub fn lesion_count(dr_severity: u8) -> usize {
    LESIONS_PER_LEVEL * usize::from(dr_severity)
}

/// A single bright blob, in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lesion {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
    pub amplitude: f64,
}

/// The rendered grid together with the geometry that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderLayers {
    pub image: Image,
    pub retina_center: (f64, f64),
    pub retina_radius: f64,
    pub background_level: f64,
    pub vessel_width: f64,
    /// Sum of vessel coverage over the grid, in pixels.
    pub vessel_area: f64,
    pub disc_center: (f64, f64),
    pub disc_radius: f64,
    pub cup_radius: f64,
    pub lesions: Vec<Lesion>,
}

pub fn render(factors: &FactorVector, size: usize) -> Result<Image> {
    render_layers(factors, size).map(|l| l.image)
}

struct Geometry {
    center: (f64, f64),
    radius: f64,
    disc: (f64, f64),
    disc_radius: f64,
    fovea: (f64, f64),
    vessels: Vec<Vec<(f64, f64)>>,
}

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn geometry(size: f64, seed: u64) -> Geometry {
    let mut rng = stream(seed, GEOMETRY_STREAM);
    let center = (
        size / 2.0 + rng.gen_range(-0.06..0.06) * size,
        size / 2.0 + rng.gen_range(-0.06..0.06) * size,
    );
    let radius = size * rng.gen_range(0.44..0.50);
    let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let disc = (
        center.0 + side * 0.45 * radius,
        center.1 + rng.gen_range(-0.05..0.05) * radius,
    );
    let disc_radius = 0.17 * radius;
    let fovea = (center.0 - side * 0.1 * radius, center.1);

    // Two main arcades plus two thinner nasal branches leaving the disc.
    let mut vessels = Vec::with_capacity(4);
    // (vertical direction, horizontal direction relative to the fovea, reach, bend)
    for (dir, toward, reach, bend) in [
        (-1.0, 1.0, 1.25, 0.55),
        (1.0, 1.0, 1.25, 0.55),
        (-1.0, -0.8, 0.55, 0.2),
        (1.0, -0.8, 0.55, 0.2),
    ] {
        let reach = reach * rng.gen_range(0.9..1.1);
        let bend = bend * rng.gen_range(0.8..1.2);
        let pts = (0..=24)
            .map(|i| {
                let t = f64::from(i) / 24.0;
                let dx = -side * toward * reach * t * radius;
                let dy = dir * (bend * (1.0 - (1.0 - t) * (1.0 - t)) + 0.1 * t) * radius;
                (disc.0 + dx, disc.1 + dy)
            })
            .collect();
        vessels.push(pts);
    }
    Geometry {
        center,
        radius,
        disc,
        disc_radius,
        fovea,
        vessels,
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

fn polyline_distance(p: (f64, f64), pts: &[(f64, f64)]) -> f64 {
    pts.windows(2)
        .map(|w| segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// Soft step that is 1 inside `edge - 0.5` and 0 beyond `edge + 0.5`.
fn coverage(distance: f64, edge: f64) -> f64 {
    (edge + 0.5 - distance).clamp(0.0, 1.0)
}

/// Candidate lesion sites: the fovea plus two hexagonal rings around it, minus
/// sites near the optic disc. Offsets are in retina radii.
const SITE_RINGS: [(f64, usize); 2] = [(0.34, 6), (0.68, 12)];
const SITE_JITTER: f64 = 0.02;

/// Positions for the largest severity; lower grades use a prefix so blobs nest.
fn lesion_layout(geo: &Geometry, scale: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = stream(seed, LESION_STREAM);
    let keep_out = geo.disc_radius + 3.0 * scale;
    let mut sites = vec![geo.fovea];
    for (r, n) in SITE_RINGS {
        for k in 0..n {
            let theta = std::f64::consts::TAU * k as f64 / n as f64;
            sites.push((
                geo.fovea.0 + r * geo.radius * theta.cos(),
                geo.fovea.1 + r * geo.radius * theta.sin(),
            ));
        }
    }
    sites.retain(|p| ((p.0 - geo.disc.0).powi(2) + (p.1 - geo.disc.1).powi(2)).sqrt() > keep_out);
    sites.shuffle(&mut rng);
    sites.truncate(MAX_LESIONS);
    for p in &mut sites {
        p.0 += rng.gen_range(-SITE_JITTER..SITE_JITTER) * geo.radius;
        p.1 += rng.gen_range(-SITE_JITTER..SITE_JITTER) * geo.radius;
    }
    sites
}

pub fn render_layers(factors: &FactorVector, size: usize) -> Result<RenderLayers> {
    if size < MIN_RENDER_SIZE {
        return Err(Error::invalid(format!(
            "render size {size} below minimum {MIN_RENDER_SIZE}"
        )));
    }
    factors.validate()?;
    let n = size as f64;
    let scale = n / 32.0;
    let geo = geometry(n, factors.lesion_seed);

    let pig = factors.pigmentation;
    let background = 0.62 - 0.38 * pig;
    let vessel_contrast = 0.45 - 0.2 * pig;
    let vessel_width = (0.6 + 1.2 * factors.vessel_caliber) * scale;
    let cup_ratio = 0.2 + 0.6 * factors.disc_ratio;
    let cup_radius = geo.disc_radius * cup_ratio;

    // Lesions lose contrast on darker backgrounds.
    let contrast = LESION_AMPLITUDE * (1.0 - LESION_PIGMENT_FADE * pig);
    let amplitude = match factors.dr_severity {
        0 => 0.0,
        1 => 0.5 * contrast,
        _ => contrast,
    };
    let sigma = LESION_SIGMA * scale;
    let layout = lesion_layout(&geo, scale, factors.lesion_seed);
    let lesions: Vec<Lesion> = layout
        .iter()
        .take(lesion_count(factors.dr_severity))
        .map(|&(x, y)| Lesion { x, y, sigma, amplitude })
        .collect();

    let mut noise = stream(factors.lesion_seed, NOISE_STREAM);
    let mut data = vec![0.0; size * size];
    let mut vessel_area = 0.0;
    for yi in 0..size {
        for xi in 0..size {
            // The noise stream advances for every pixel so its values do not
            // depend on which pixels fall inside the retina.
            let eps: f64 = StandardNormal.sample(&mut noise);
            let p = (xi as f64 + 0.5, yi as f64 + 0.5);
            let r = ((p.0 - geo.center.0).powi(2) + (p.1 - geo.center.1).powi(2)).sqrt();
            if r > geo.radius {
                continue;
            }
            let rel = r / geo.radius;
            let mut v = background * (1.0 - 0.15 * rel * rel);

            let dd = ((p.0 - geo.disc.0).powi(2) + (p.1 - geo.disc.1).powi(2)).sqrt();
            let rim = coverage(dd, geo.disc_radius);
            let cup = coverage(dd, cup_radius);
            v += rim * 0.22 + cup * 0.12;

            let cover = geo
                .vessels
                .iter()
                .enumerate()
                .map(|(k, pts)| {
                    let w = if k < 2 { vessel_width } else { 0.7 * vessel_width };
                    coverage(polyline_distance(p, pts), w / 2.0)
                })
                .fold(0.0, f64::max);
            vessel_area += cover;
            v *= 1.0 - vessel_contrast * cover;

            for l in &lesions {
                let d2 = (p.0 - l.x).powi(2) + (p.1 - l.y).powi(2);
                v += l.amplitude * (-d2 / (2.0 * l.sigma * l.sigma)).exp();
            }
            v += NOISE_SIGMA * eps;
            data[yi * size + xi] = v.clamp(1e-3, 1.0);
        }
    }

    Ok(RenderLayers {
        image: Image {
            width: size,
            height: size,
            data,
        },
        retina_center: geo.center,
        retina_radius: geo.radius,
        background_level: background,
        vessel_width,
        vessel_area,
        disc_center: geo.disc,
        disc_radius: geo.disc_radius,
        cup_radius,
        lesions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> FactorVector {
        FactorVector {
            pigmentation: 0.2,
            dr_severity: 0,
            vessel_caliber: 0.5,
            disc_ratio: 0.5,
            lesion_seed: 0xABCD,
        }
    }

    /// 8-connected components of `mask`.
    fn components(mask: &[bool], w: usize, h: usize) -> usize {
        let mut seen = vec![false; mask.len()];
        let mut count = 0;
        for start in 0..mask.len() {
            if !mask[start] || seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % w) as i64, (i / w) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if mask[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        count
    }

    #[test]
    fn deterministic() {
        let a = render(&base(), 36).unwrap();
        let b = render(&base(), 36).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn size_floor() {
        assert!(matches!(render(&base(), 15), Err(Error::InvalidArgument(_))));
        assert!(render(&base(), 16).is_ok());
    }

    #[test]
    fn pixels_in_range_and_background_outside_disk() {
        let l = render_layers(
            &FactorVector {
                dr_severity: 4,
                ..base()
            },
            36,
        )
        .unwrap();
        assert!(l.image.data.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(l.image.get(0, 0), 0.0);
        assert_eq!(l.image.get(35, 35), 0.0);
    }

    #[test]
    fn darker_pigment_lowers_mean() {
        for seed in 0..20 {
            let light = render(
                &FactorVector {
                    pigmentation: 0.0,
                    lesion_seed: seed,
                    ..base()
                },
                36,
            )
            .unwrap();
            let dark = render(
                &FactorVector {
                    pigmentation: 1.0,
                    lesion_seed: seed,
                    ..base()
                },
                36,
            )
            .unwrap();
            assert!(light.mean() > dark.mean());
        }
    }

    #[test]
    fn caliber_and_disc_ratio_are_monotone() {
        let thin = render_layers(
            &FactorVector {
                vessel_caliber: 0.1,
                ..base()
            },
            36,
        )
        .unwrap();
        let thick = render_layers(
            &FactorVector {
                vessel_caliber: 0.9,
                ..base()
            },
            36,
        )
        .unwrap();
        assert!(thick.vessel_width > thin.vessel_width);
        assert!(thick.vessel_area > thin.vessel_area);
        let small = render_layers(
            &FactorVector {
                disc_ratio: 0.1,
                ..base()
            },
            36,
        )
        .unwrap();
        let large = render_layers(
            &FactorVector {
                disc_ratio: 0.9,
                ..base()
            },
            36,
        )
        .unwrap();
        assert!(large.cup_radius / large.disc_radius > small.cup_radius / small.disc_radius);
    }

    #[test]
    fn lesion_count_steps() {
        let counts: Vec<usize> = (0..=4)
            .map(|s| {
                render_layers(
                    &FactorVector {
                        dr_severity: s,
                        ..base()
                    },
                    36,
                )
                .unwrap()
                .lesions
                .len()
            })
            .collect();
        assert_eq!(counts, vec![0, 3, 6, 9, 12]);
    }

    #[test]
    fn lesion_components_match_declared_count() {
        for (seed, pig) in (0..25).zip([0.0, 0.2, 0.9].into_iter().cycle()) {
            for sev in [2u8, 3, 4] {
                let f = FactorVector {
                    dr_severity: sev,
                    lesion_seed: seed,
                    pigmentation: pig,
                    ..base()
                };
                let with = render_layers(&f, 36).unwrap();
                let without = render(&FactorVector { dr_severity: 0, ..f }, 36).unwrap();
                let mask: Vec<bool> = with
                    .image
                    .data
                    .iter()
                    .zip(&without.data)
                    .map(|(a, b)| a - b > 0.65 * with.lesions[0].amplitude)
                    .collect();
                assert_eq!(
                    components(&mask, 36, 36),
                    with.lesions.len(),
                    "seed {seed} severity {sev}"
                );
                assert_eq!(with.lesions.len(), lesion_count(sev));
            }
        }
    }
}
