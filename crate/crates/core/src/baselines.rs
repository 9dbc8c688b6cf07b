//! TrivialAugment, RandAugment and AugMix over the shared catalog.

use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::policy::{magnitude_to_params, AugKind, AugOpInstance, Catalog};
use crate::transforms::{apply_op, ImageBuffer, SampleKey, SampleRng, TransformError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    None,
    Trivial,
    RandAugment,
    AugMix,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::None => "no augmentation",
            Strategy::Trivial => "trivialaugment",
            Strategy::RandAugment => "randaugment",
            Strategy::AugMix => "augmix",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub strategy: Strategy,
    #[serde(default = "default_n")]
    pub n: u32,
    #[serde(default = "default_magnitude")]
    pub magnitude: u32,
    #[serde(default = "default_three")]
    pub chains: u32,
    #[serde(default = "default_three")]
    pub max_depth: u32,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_n() -> u32 {
    2
}
fn default_magnitude() -> u32 {
    9
}
fn default_three() -> u32 {
    3
}
fn default_alpha() -> f64 {
    1.0
}

impl BaselineConfig {
    pub fn new(strategy: Strategy) -> Self {
        BaselineConfig {
            strategy,
            n: default_n(),
            magnitude: default_magnitude(),
            chains: default_three(),
            max_depth: default_three(),
            alpha: default_alpha(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n < 1 {
            return Err("baseline.n must be >= 1".into());
        }
        if self.magnitude > 30 {
            return Err("baseline.magnitude must be in 0..=30".into());
        }
        if self.chains < 1 || self.max_depth < 1 {
            return Err("baseline.chains and baseline.max_depth must be >= 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err("baseline.alpha must be > 0".into());
        }
        Ok(())
    }
}

/// Applies the configured strategy to one sample.
pub fn augment(img: &ImageBuffer, cfg: &BaselineConfig, key: SampleKey) -> Result<ImageBuffer, TransformError> {
    let catalog = Catalog::standard();
    match cfg.strategy {
        Strategy::None => Ok(img.clone()),
        Strategy::Trivial => trivial_augment(img, catalog, key),
        Strategy::RandAugment => rand_augment(img, catalog, cfg.n, cfg.magnitude, key),
        Strategy::AugMix => augmix(img, catalog, cfg, key),
    }
}

fn pick_kind(pool: &[AugKind], rng: &mut SampleRng) -> AugKind {
    pool[rng.below(pool.len() as u32) as usize]
}

/// Op drawn by TrivialAugment for this sample: a uniform kind at a uniform
/// magnitude, always applied.
pub fn trivial_choice(catalog: &Catalog, key: SampleKey) -> AugOpInstance {
    let kinds: Vec<AugKind> = catalog.kinds().collect();
    trivial_choice_from(&kinds, catalog, &mut key.rng(0))
}

fn trivial_choice_from(pool: &[AugKind], catalog: &Catalog, rng: &mut SampleRng) -> AugOpInstance {
    let kind = pick_kind(pool, rng);
    let m = rng.unit();
    magnitude_to_params(catalog, kind, m)
        .expect("unit draw is in [0, 1)")
        .with_probability(1.0)
}

/// One random transformation per image.
pub fn trivial_augment(img: &ImageBuffer, catalog: &Catalog, key: SampleKey) -> Result<ImageBuffer, TransformError> {
    let op = trivial_choice(catalog, key);
    apply_op(img, &op, &mut key.rng(1))
}

/// `n` kinds sampled with replacement, each at magnitude `magnitude / 30`.
pub fn rand_augment(
    img: &ImageBuffer,
    catalog: &Catalog,
    n: u32,
    magnitude: u32,
    key: SampleKey,
) -> Result<ImageBuffer, TransformError> {
    let kinds: Vec<AugKind> = catalog.kinds().collect();
    let m = (magnitude.min(30) as f64) / 30.0;
    let mut chooser = key.rng(0);
    let mut cur = img.clone();
    for i in 0..n {
        let kind = pick_kind(&kinds, &mut chooser);
        let op = magnitude_to_params(catalog, kind, m)
            .expect("magnitude within range")
            .with_probability(1.0);
        cur = apply_op(&cur, &op, &mut key.rng(1 + i as u64))?;
    }
    Ok(cur)
}

/// Mixing coefficients drawn for one AugMix sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MixDraw {
    pub weights: Vec<f64>,
    pub skip: f64,
}

pub fn draw_mix(cfg: &BaselineConfig, rng: &mut SampleRng) -> MixDraw {
    let gamma = Gamma::new(cfg.alpha, 1.0).expect("alpha > 0");
    let mut weights: Vec<f64> = (0..cfg.chains).map(|_| gamma.sample(rng)).collect();
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    } else {
        let k = weights.len() as f64;
        weights.iter_mut().for_each(|w| *w = 1.0 / k);
    }
    let skip = Beta::new(cfg.alpha, cfg.alpha).expect("alpha > 0").sample(rng);
    MixDraw { weights, skip }
}

/// `skip * img + (1 - skip) * sum_i w_i * chain_i`, clamped.
pub fn augmix_mix(img: &ImageBuffer, chains: &[ImageBuffer], draw: &MixDraw) -> ImageBuffer {
    let m = draw.skip as f32;
    let mut mixed = vec![0f32; img.data().len()];
    for (chain, &w) in chains.iter().zip(&draw.weights) {
        let w = w as f32;
        for (acc, &v) in mixed.iter_mut().zip(chain.data()) {
            *acc += w * v;
        }
    }
    let data = img
        .data()
        .iter()
        .zip(&mixed)
        .map(|(&orig, &mix)| m * orig + (1.0 - m) * mix)
        .collect();
    ImageBuffer::from_clamped(img.height(), img.width(), img.channels(), data)
}

/// Kinds AugMix chains draw from: the catalog minus `erasing`.
pub fn augmix_pool(catalog: &Catalog) -> Vec<AugKind> {
    catalog.kinds().filter(|k| *k != AugKind::Erasing).collect()
}

pub fn augmix(img: &ImageBuffer, catalog: &Catalog, cfg: &BaselineConfig, key: SampleKey) -> Result<ImageBuffer, TransformError> {
    let pool = augmix_pool(catalog);
    let draw = draw_mix(cfg, &mut key.rng(0));
    augmix_with(img, catalog, &pool, cfg, &draw, key)
}

/// AugMix with explicit op pool and mixing coefficients.
pub fn augmix_with(
    img: &ImageBuffer,
    catalog: &Catalog,
    pool: &[AugKind],
    cfg: &BaselineConfig,
    draw: &MixDraw,
    key: SampleKey,
) -> Result<ImageBuffer, TransformError> {
    let depth_cap = cfg.max_depth as u64;
    let mut chains = Vec::with_capacity(cfg.chains as usize);
    for c in 0..cfg.chains as u64 {
        // stream layout: 0 = mix draw, then per chain one chooser stream
        // followed by `max_depth` op streams
        let base = 1 + c * (depth_cap + 1);
        let mut chooser = key.rng(base);
        let depth = 1 + chooser.below(cfg.max_depth) as u64;
        let mut cur = img.clone();
        for d in 0..depth {
            let op = trivial_choice_from(pool, catalog, &mut chooser);
            cur = apply_op(&cur, &op, &mut key.rng(base + 1 + d))?;
        }
        chains.push(cur);
    }
    Ok(augmix_mix(img, &chains, draw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::{flip, kernel_invocations};

    fn ramp(h: usize, w: usize) -> ImageBuffer {
        let data = (0..h * w).map(|i| (i % 17) as f32 / 17.0).collect();
        ImageBuffer::new(h, w, 1, data).unwrap()
    }

    #[test]
    fn trivial_applies_exactly_one_kernel() {
        let img = ramp(6, 6);
        let before = kernel_invocations();
        for s in 0..500 {
            trivial_augment(&img, Catalog::standard(), SampleKey::new(1, 0, s)).unwrap();
        }
        assert_eq!(kernel_invocations() - before, 500);
    }

    #[test]
    fn trivial_is_seeded() {
        let a: Vec<_> = (0..50).map(|s| trivial_choice(Catalog::standard(), SampleKey::new(9, 2, s))).collect();
        let b: Vec<_> = (0..50).map(|s| trivial_choice(Catalog::standard(), SampleKey::new(9, 2, s))).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn randaugment_counts_and_identity() {
        let img = ramp(8, 8);
        let before = kernel_invocations();
        rand_augment(&img, Catalog::standard(), 2, 9, SampleKey::new(3, 0, 0)).unwrap();
        assert_eq!(kernel_invocations() - before, 2);
    }

    #[test]
    fn randaugment_magnitude_zero_is_identity_for_identity_ops() {
        // Every kind with an identity param is an exact no-op at m = 0.
        let cat = Catalog::standard();
        let img = ramp(8, 8);
        for kind in cat.kinds().filter(|k| !cat.is_probability_only(*k)) {
            let op = magnitude_to_params(cat, kind, 0.0).unwrap();
            let out = apply_op(&img, &op, &mut SampleKey::new(1, 1, 1).rng(0)).unwrap();
            assert_eq!(out, img, "{kind}");
        }
    }

    #[test]
    fn dirichlet_weights_sum_to_one() {
        let cfg = BaselineConfig::new(Strategy::AugMix);
        for s in 0..200 {
            let d = draw_mix(&cfg, &mut SampleKey::new(4, 0, s).rng(0));
            assert!((d.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((0.0..=1.0).contains(&d.skip));
            assert_eq!(d.weights.len(), 3);
        }
    }

    #[test]
    fn augmix_skip_one_returns_input() {
        let img = ramp(8, 8);
        let cfg = BaselineConfig::new(Strategy::AugMix);
        let draw = MixDraw {
            weights: vec![0.2, 0.3, 0.5],
            skip: 1.0,
        };
        let out = augmix_with(&img, Catalog::standard(), &augmix_pool(Catalog::standard()), &cfg, &draw, SampleKey::new(1, 0, 0)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn augmix_degenerate_mixture_is_the_chain() {
        let img = ramp(8, 8);
        let cfg = BaselineConfig {
            max_depth: 1,
            ..BaselineConfig::new(Strategy::AugMix)
        };
        let draw = MixDraw {
            weights: vec![1.0, 0.0, 0.0],
            skip: 0.0,
        };
        let out = augmix_with(&img, Catalog::standard(), &[AugKind::HorizontalFlip], &cfg, &draw, SampleKey::new(1, 0, 0)).unwrap();
        assert_eq!(out, flip(&img, true));
    }

    #[test]
    fn augmix_is_seeded_and_in_range() {
        let img = ramp(10, 10);
        let cfg = BaselineConfig::new(Strategy::AugMix);
        let a = augmix(&img, Catalog::standard(), &cfg, SampleKey::new(5, 1, 2)).unwrap();
        let b = augmix(&img, Catalog::standard(), &cfg, SampleKey::new(5, 1, 2)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn config_validation() {
        assert!(BaselineConfig::new(Strategy::RandAugment).validate().is_ok());
        let bad = BaselineConfig {
            magnitude: 31,
            ..BaselineConfig::new(Strategy::RandAugment)
        };
        assert!(bad.validate().is_err());
        let bad = BaselineConfig {
            alpha: 0.0,
            ..BaselineConfig::new(Strategy::AugMix)
        };
        assert!(bad.validate().is_err());
        let cfg: BaselineConfig = serde_json::from_str(r#"{"strategy":"randaugment","n":3}"#).unwrap();
        assert_eq!((cfg.n, cfg.magnitude), (3, 9));
    }
}
