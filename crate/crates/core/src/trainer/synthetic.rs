//! Small shape-classification dataset for desk-scale runs.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::transforms::{ImageBuffer, SampleRng};

pub const SYNTHETIC_CLASSES: [&str; 3] = ["disk", "square", "cross"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub image_size: usize,
    pub train_per_class: usize,
    pub valid_per_class: usize,
    /// Maximum centre offset in pixels, each axis.
    pub center_jitter: f64,
    /// Relative size jitter: radius scales by `U[1 - j, 1 + j]`.
    pub size_jitter: f64,
    pub base_radius: f64,
    pub noise_sigma: f64,
    pub background: f64,
    pub foreground: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            image_size: 32,
            train_per_class: 67,
            valid_per_class: 100,
            center_jitter: 4.0,
            size_jitter: 0.2,
            base_radius: 8.0,
            noise_sigma: 0.05,
            background: 0.2,
            foreground: 0.8,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.image_size < 8 {
            return Err("synthetic.image_size must be at least 8".into());
        }
        if self.train_per_class == 0 || self.valid_per_class == 0 {
            return Err("synthetic split sizes must be positive".into());
        }
        if !(0.0..1.0).contains(&self.size_jitter) || self.center_jitter < 0.0 || self.noise_sigma < 0.0 {
            return Err("synthetic jitter and noise must be non-negative (size_jitter < 1)".into());
        }
        if self.base_radius <= 0.0 {
            return Err("synthetic.base_radius must be positive".into());
        }
        for v in [self.background, self.foreground] {
            if !(0.0..=1.0).contains(&v) {
                return Err("synthetic intensities must lie in [0, 1]".into());
            }
        }
        Ok(())
    }
}

fn inside(class: usize, dx: f64, dy: f64, r: f64) -> bool {
    match class {
        0 => dx * dx + dy * dy <= r * r,
        1 => dx.abs().max(dy.abs()) <= r * 0.85,
        _ => {
            let w = r / 3.0;
            (dx.abs() <= w && dy.abs() <= r) || (dy.abs() <= w && dx.abs() <= r)
        }
    }
}

fn render(spec: &SyntheticSpec, class: usize, rng: &mut SampleRng) -> ImageBuffer {
    let n = spec.image_size;
    let mid = (n as f64 - 1.0) / 2.0;
    let cx = mid + rng.uniform(-spec.center_jitter, spec.center_jitter);
    let cy = mid + rng.uniform(-spec.center_jitter, spec.center_jitter);
    let r = spec.base_radius * rng.uniform(1.0 - spec.size_jitter, 1.0 + spec.size_jitter);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
    let mut data = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let base = if inside(class, x as f64 - cx, y as f64 - cy, r) {
                spec.foreground
            } else {
                spec.background
            };
            data.push((base + noise.sample(rng)) as f32);
        }
    }
    ImageBuffer::from_clamped(n, n, 1, data)
}

/// Deterministic in `(spec, seed)`. Rows are interleaved by class.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec, seed: u64) -> LabeledDataset {
    let split = |tag: u64, per_class: usize| {
        let mut rows = Vec::with_capacity(per_class * SYNTHETIC_CLASSES.len());
        for i in 0..per_class {
            for class in 0..SYNTHETIC_CLASSES.len() {
                let index = (i * SYNTHETIC_CLASSES.len() + class) as u64;
                let mut rng = SampleRng::derive(seed, tag, index, 0);
                rows.push((render(spec, class, &mut rng), class));
            }
        }
        rows
    };
    LabeledDataset {
        train: split(0, spec.train_per_class),
        valid: split(1, spec.valid_per_class),
        class_names: SYNTHETIC_CLASSES.iter().map(|s| s.to_string()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_counted() {
        let spec = SyntheticSpec {
            train_per_class: 5,
            valid_per_class: 4,
            ..SyntheticSpec::default()
        };
        let a = generate_synthetic_dataset(&spec, 11);
        assert_eq!(a, generate_synthetic_dataset(&spec, 11));
        assert_ne!(a, generate_synthetic_dataset(&spec, 12));
        for c in 0..3 {
            assert_eq!(a.train.iter().filter(|r| r.1 == c).count(), 5);
            assert_eq!(a.valid.iter().filter(|r| r.1 == c).count(), 4);
        }
        assert_eq!(a.train[0].0.height(), 32);
        assert_eq!(a.train[0].0.channels(), 1);
    }

    #[test]
    fn write_load_round_trip() {
        let spec = SyntheticSpec {
            train_per_class: 3,
            valid_per_class: 2,
            ..SyntheticSpec::default()
        };
        let ds = generate_synthetic_dataset(&spec, 5);
        let dir = tempfile::tempdir().unwrap();
        super::super::write_dataset(&ds, dir.path()).unwrap();
        let back = super::super::load_dataset(dir.path()).unwrap();
        // class names come back sorted
        let remap = |name: &str| back.class_names.iter().position(|n| n == name).unwrap();
        let quantize = |img: &ImageBuffer| -> Vec<u8> { crate::transforms::encode_image(img) };
        let mut want: Vec<(Vec<u8>, usize)> = ds
            .train
            .iter()
            .map(|(img, y)| (quantize(img), remap(&ds.class_names[*y])))
            .collect();
        let mut got: Vec<(Vec<u8>, usize)> = back.train.iter().map(|(img, y)| (quantize(img), *y)).collect();
        want.sort();
        got.sort();
        assert_eq!(want, got);
        assert_eq!(back.valid.len(), ds.valid.len());
    }
}
