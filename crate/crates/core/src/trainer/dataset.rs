use std::fs;
use std::path::{Path, PathBuf};

use crate::transforms::{decode_image, encode_image, ImageBuffer};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub train: Vec<(ImageBuffer, usize)>,
    pub valid: Vec<(ImageBuffer, usize)>,
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn check(&self) -> Result<(), DatasetError> {
        if self.class_names.is_empty() {
            return Err(DatasetError::Invalid("no classes".into()));
        }
        for (split, rows) in [("train", &self.train), ("valid", &self.valid)] {
            if rows.is_empty() {
                return Err(DatasetError::Invalid(format!("{split} split is empty")));
            }
            if let Some((_, y)) = rows.iter().find(|(_, y)| *y >= self.class_names.len()) {
                return Err(DatasetError::Invalid(format!("{split} label {y} out of range")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("missing split directory {0}")]
    MissingSplit(PathBuf),
    #[error("class directory {0} has no images")]
    EmptyClass(PathBuf),
    #[error("class sets differ between train and valid")]
    ClassMismatch,
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "ppm" | "pgm")
    )
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut out = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_err(dir)))
        .collect::<Result<Vec<_>, _>>()?;
    out.sort();
    Ok(out)
}

fn load_split(dir: &Path) -> Result<(Vec<String>, Vec<(ImageBuffer, usize)>), DatasetError> {
    if !dir.is_dir() {
        return Err(DatasetError::MissingSplit(dir.to_path_buf()));
    }
    let class_dirs: Vec<PathBuf> = sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()).collect();
    let mut names = Vec::new();
    let mut rows = Vec::new();
    for (index, class_dir) in class_dirs.iter().enumerate() {
        names.push(class_dir.file_name().unwrap().to_string_lossy().into_owned());
        let files: Vec<PathBuf> = sorted_entries(class_dir)?.into_iter().filter(|p| is_image(p)).collect();
        if files.is_empty() {
            return Err(DatasetError::EmptyClass(class_dir.clone()));
        }
        for file in files {
            let bytes = fs::read(&file).map_err(io_err(&file))?;
            let img = decode_image(&bytes).map_err(|e| DatasetError::Decode {
                path: file.clone(),
                reason: e.to_string(),
            })?;
            rows.push((img, index));
        }
    }
    Ok((names, rows))
}

/// Reads `root/{train,valid}/<class>/*.{png,ppm,pgm}`. Classes are indexed in
/// sorted name order.
pub fn load_dataset(root: &Path) -> Result<LabeledDataset, DatasetError> {
    let (train_names, train) = load_split(&root.join("train"))?;
    let (valid_names, valid) = load_split(&root.join("valid"))?;
    if train_names != valid_names {
        return Err(DatasetError::ClassMismatch);
    }
    let ds = LabeledDataset {
        train,
        valid,
        class_names: train_names,
    };
    ds.check()?;
    Ok(ds)
}

/// Writes the dataset as PGM/PPM files in the layout [`load_dataset`] reads.
pub fn write_dataset(ds: &LabeledDataset, root: &Path) -> Result<(), DatasetError> {
    for (split, rows) in [("train", &ds.train), ("valid", &ds.valid)] {
        for name in &ds.class_names {
            let dir = root.join(split).join(name);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        for (i, (img, y)) in rows.iter().enumerate() {
            let ext = if img.channels() == 1 { "pgm" } else { "ppm" };
            let path = root.join(split).join(&ds.class_names[*y]).join(format!("{i:05}.{ext}"));
            fs::write(&path, encode_image(img)).map_err(io_err(&path))?;
        }
    }
    Ok(())
}
