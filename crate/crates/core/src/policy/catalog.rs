use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

/// Version tag of the operation catalog. Travels in prompts, ledgers and the
/// bridge handshake.
pub const CATALOG_VERSION: &str = "augloop-catalog/1";

/// The closed set of augmentation kinds.
///
/// Variants are declared in alphabetical order of their wire names so the
/// derived `Ord` matches the canonical catalog order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AugKind {
    Brightness,
    Contrast,
    Equalize,
    Erasing,
    GaussianBlur,
    HorizontalFlip,
    Hue,
    Posterize,
    Rotate,
    Saturation,
    ScaleCrop,
    Sharpness,
    Shear,
    Solarize,
    Translate,
    VerticalFlip,
}

impl AugKind {
    pub const ALL: [AugKind; 16] = [
        AugKind::Brightness,
        AugKind::Contrast,
        AugKind::Equalize,
        AugKind::Erasing,
        AugKind::GaussianBlur,
        AugKind::HorizontalFlip,
        AugKind::Hue,
        AugKind::Posterize,
        AugKind::Rotate,
        AugKind::Saturation,
        AugKind::ScaleCrop,
        AugKind::Sharpness,
        AugKind::Shear,
        AugKind::Solarize,
        AugKind::Translate,
        AugKind::VerticalFlip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugKind::Brightness => "brightness",
            AugKind::Contrast => "contrast",
            AugKind::Equalize => "equalize",
            AugKind::Erasing => "erasing",
            AugKind::GaussianBlur => "gaussian_blur",
            AugKind::HorizontalFlip => "horizontal_flip",
            AugKind::Hue => "hue",
            AugKind::Posterize => "posterize",
            AugKind::Rotate => "rotate",
            AugKind::Saturation => "saturation",
            AugKind::ScaleCrop => "scale_crop",
            AugKind::Sharpness => "sharpness",
            AugKind::Shear => "shear",
            AugKind::Solarize => "solarize",
            AugKind::Translate => "translate",
            AugKind::VerticalFlip => "vertical_flip",
        }
    }

    /// Exact, case-sensitive lookup. Anything outside the catalog is `None`.
    pub fn from_name(name: &str) -> Option<AugKind> {
        AugKind::ALL.iter().copied().find(|k| k.name() == name)
    }
}

impl fmt::Display for AugKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which end of a parameter range is the "strong" (most distorting) one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extreme {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub lower: f64,
    pub upper: f64,
    /// Value that makes the op a no-op, if one exists.
    pub identity: Option<f64>,
    /// End that magnitude and hardening move toward. `None` marks a shape
    /// parameter that magnitude does not govern.
    pub strong: Option<Extreme>,
    /// Value used when magnitude does not govern the parameter.
    pub default: f64,
    pub discrete: bool,
}

impl ParamSpec {
    const fn toward_upper(name: &'static str, lower: f64, upper: f64) -> Self {
        ParamSpec {
            name,
            lower,
            upper,
            identity: Some(lower),
            strong: Some(Extreme::Upper),
            default: lower,
            discrete: false,
        }
    }

    pub fn strong_value(&self) -> Option<f64> {
        self.strong.map(|e| self.end(e))
    }

    /// The end opposite the strong one.
    pub fn weak_value(&self) -> Option<f64> {
        self.strong.map(|e| match e {
            Extreme::Lower => self.upper,
            Extreme::Upper => self.lower,
        })
    }

    pub fn end(&self, e: Extreme) -> f64 {
        match e {
            Extreme::Lower => self.lower,
            Extreme::Upper => self.upper,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v.is_finite() && v >= self.lower && v <= self.upper
    }

    /// Clamp into range and round discrete values.
    pub fn clamp(&self, v: f64) -> f64 {
        let v = if self.discrete { v.round() } else { v };
        v.clamp(self.lower, self.upper)
    }
}

/// The operation catalog: every kind with its parameter specs.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    entries: BTreeMap<AugKind, Vec<ParamSpec>>,
    version: String,
}

impl Catalog {
    /// The shipped 16-operation catalog.
    pub fn standard() -> &'static Catalog {
        static CATALOG: OnceLock<Catalog> = OnceLock::new();
        CATALOG.get_or_init(build_standard)
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn specs(&self, kind: AugKind) -> &[ParamSpec] {
        self.entries.get(&kind).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn spec(&self, kind: AugKind, param: &str) -> Option<&ParamSpec> {
        self.specs(kind).iter().find(|s| s.name == param)
    }

    /// Kinds in canonical (alphabetical) order.
    pub fn kinds(&self) -> impl Iterator<Item = AugKind> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Kinds whose strength is expressed only through the apply probability.
    pub fn is_probability_only(&self, kind: AugKind) -> bool {
        self.specs(kind).iter().all(|s| s.identity.is_none())
    }

    /// Checks the structural invariants of every spec.
    pub fn is_well_formed(&self) -> bool {
        self.entries.len() == AugKind::ALL.len()
            && self.entries.values().flatten().all(|s| {
                s.lower < s.upper
                    && s.identity.map_or(true, |id| s.lower <= id && id <= s.upper)
                    && s.lower <= s.default
                    && s.default <= s.upper
            })
    }
}

fn build_standard() -> Catalog {
    use AugKind::*;
    let mut entries = BTreeMap::new();
    entries.insert(Brightness, vec![ParamSpec::toward_upper("factor", 0.0, 0.9)]);
    entries.insert(Contrast, vec![ParamSpec::toward_upper("factor", 0.0, 0.9)]);
    entries.insert(Equalize, vec![]);
    entries.insert(
        Erasing,
        vec![
            ParamSpec {
                name: "area",
                lower: 0.02,
                upper: 0.33,
                identity: None,
                strong: Some(Extreme::Upper),
                default: 0.02,
                discrete: false,
            },
            ParamSpec {
                name: "aspect",
                lower: 0.3,
                upper: 3.3,
                identity: None,
                strong: None,
                default: 1.0,
                discrete: false,
            },
        ],
    );
    entries.insert(GaussianBlur, vec![ParamSpec::toward_upper("sigma", 0.0, 3.0)]);
    entries.insert(HorizontalFlip, vec![]);
    entries.insert(Hue, vec![ParamSpec::toward_upper("shift", 0.0, 0.5)]);
    entries.insert(
        Posterize,
        vec![ParamSpec {
            name: "bits",
            lower: 1.0,
            upper: 8.0,
            identity: Some(8.0),
            strong: Some(Extreme::Lower),
            default: 8.0,
            discrete: true,
        }],
    );
    entries.insert(Rotate, vec![ParamSpec::toward_upper("degrees", 0.0, 180.0)]);
    entries.insert(Saturation, vec![ParamSpec::toward_upper("factor", 0.0, 0.9)]);
    entries.insert(
        ScaleCrop,
        vec![ParamSpec {
            name: "scale_min",
            lower: 0.08,
            upper: 1.0,
            identity: Some(1.0),
            strong: Some(Extreme::Lower),
            default: 1.0,
            discrete: false,
        }],
    );
    entries.insert(Sharpness, vec![ParamSpec::toward_upper("factor", 0.0, 0.9)]);
    entries.insert(Shear, vec![ParamSpec::toward_upper("degrees", 0.0, 45.0)]);
    entries.insert(
        Solarize,
        vec![ParamSpec {
            name: "threshold",
            lower: 0.0,
            upper: 1.0,
            identity: Some(1.0),
            strong: Some(Extreme::Lower),
            default: 1.0,
            discrete: false,
        }],
    );
    entries.insert(
        Translate,
        vec![
            ParamSpec::toward_upper("tx", 0.0, 0.5),
            ParamSpec::toward_upper("ty", 0.0, 0.5),
        ],
    );
    entries.insert(VerticalFlip, vec![]);
    Catalog {
        entries,
        version: CATALOG_VERSION.to_string(),
    }
}
