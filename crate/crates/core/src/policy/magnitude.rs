use super::catalog::{AugKind, Catalog};
use super::model::AugOpInstance;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("magnitude {0} outside [0, 1]")]
pub struct MagnitudeError(pub f64);

/// Maps a scalar magnitude in `[0, 1]` onto an op of the given kind.
///
/// Each governed parameter moves linearly from its identity (or weak end) at
/// `m = 0` to its strong end at `m = 1`. Kinds with no identity-bearing
/// parameter (flips, equalize, erasing) express magnitude as apply
/// probability; all others get probability 1.
pub fn magnitude_to_params(
    catalog: &Catalog,
    kind: AugKind,
    m: f64,
) -> Result<AugOpInstance, MagnitudeError> {
    if !(0.0..=1.0).contains(&m) {
        return Err(MagnitudeError(m));
    }
    let mut op = AugOpInstance::new(kind);
    for spec in catalog.specs(kind) {
        let v = match (spec.identity.or(spec.weak_value()), spec.strong_value()) {
            (Some(start), Some(end)) => start + m * (end - start),
            _ => spec.default,
        };
        op.params.insert(spec.name.to_string(), spec.clamp(v));
    }
    if catalog.is_probability_only(kind) {
        op.apply_probability = m;
    }
    Ok(op)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cat() -> &'static Catalog {
        Catalog::standard()
    }

    #[test]
    fn rotate_endpoints() {
        let lo = magnitude_to_params(cat(), AugKind::Rotate, 0.0).unwrap();
        let hi = magnitude_to_params(cat(), AugKind::Rotate, 1.0).unwrap();
        assert_eq!(lo.param("degrees"), Some(0.0));
        assert_eq!(hi.param("degrees"), Some(180.0));
        assert_eq!(hi.apply_probability, 1.0);
    }

    #[test]
    fn posterize_moves_toward_fewer_bits() {
        // round(8 + 0.5 * (1 - 8)) = round(4.5) = 5
        let op = magnitude_to_params(cat(), AugKind::Posterize, 0.5).unwrap();
        assert_eq!(op.param("bits"), Some(5.0));
        let op = magnitude_to_params(cat(), AugKind::Posterize, 1.0).unwrap();
        assert_eq!(op.param("bits"), Some(1.0));
    }

    #[test]
    fn solarize_and_scale_crop_move_down() {
        let op = magnitude_to_params(cat(), AugKind::Solarize, 0.25).unwrap();
        assert_eq!(op.param("threshold"), Some(0.75));
        let op = magnitude_to_params(cat(), AugKind::ScaleCrop, 0.0).unwrap();
        assert_eq!(op.param("scale_min"), Some(1.0));
    }

    #[test]
    fn flips_use_probability() {
        let op = magnitude_to_params(cat(), AugKind::HorizontalFlip, 0.3).unwrap();
        assert!(op.params.is_empty());
        assert_eq!(op.apply_probability, 0.3);
    }

    #[test]
    fn erasing_area_scales_aspect_fixed() {
        let op = magnitude_to_params(cat(), AugKind::Erasing, 1.0).unwrap();
        assert_eq!(op.param("area"), Some(0.33));
        assert_eq!(op.param("aspect"), Some(1.0));
        assert_eq!(op.apply_probability, 1.0);
    }

    #[test]
    fn rejects_out_of_range_magnitude() {
        assert!(magnitude_to_params(cat(), AugKind::Rotate, 1.01).is_err());
        assert!(magnitude_to_params(cat(), AugKind::Rotate, -0.1).is_err());
        assert!(magnitude_to_params(cat(), AugKind::Rotate, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn magnitude_is_monotone(k in 0usize..16, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let kind = AugKind::ALL[k];
            let (m1, m2) = if a <= b { (a, b) } else { (b, a) };
            let p1 = magnitude_to_params(cat(), kind, m1).unwrap();
            let p2 = magnitude_to_params(cat(), kind, m2).unwrap();
            for spec in cat().specs(kind).iter().filter(|s| !s.discrete) {
                let Some(id) = spec.identity else { continue };
                let d1 = (p1.param(spec.name).unwrap() - id).abs();
                let d2 = (p2.param(spec.name).unwrap() - id).abs();
                prop_assert!(d1 <= d2 + 1e-12);
            }
        }

        #[test]
        fn mapped_ops_validate(k in 0usize..16, m in 0.0f64..=1.0) {
            let op = magnitude_to_params(cat(), AugKind::ALL[k], m).unwrap();
            prop_assert!(crate::policy::validate_op(&op, 0, cat()).is_empty());
        }
    }
}
