use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};

/// 8-bit grayscale raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(width * height, pixels.len(), "pixel buffer must fill the raster");
        GrayImage { width, height, pixels }
    }

    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn decode(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Decode {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        })?;
        let luma = img.into_luma8();
        let (w, h) = luma.dimensions();
        if w == 0 || h == 0 {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                reason: "zero-area image".into(),
            });
        }
        Ok(GrayImage::new(w as usize, h as usize, luma.into_raw()))
    }

    /// Writes a binary PGM or PNG, chosen by extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        image::save_buffer(
            path,
            &self.pixels,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Decode {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ImageSource {
    File(PathBuf),
    Memory(Arc<GrayImage>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub image: ImageSource,
    pub label: Option<u8>,
}

/// Named, ordered collection of labeled images.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<Example>,
    pub provenance: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn label(&self, index: usize) -> Option<u8> {
        self.examples[index].label
    }

    pub fn positives(&self) -> usize {
        self.examples.iter().filter(|e| e.label == Some(1)).count()
    }

    pub fn negatives(&self) -> usize {
        self.examples.iter().filter(|e| e.label == Some(0)).count()
    }

    pub fn image(&self, index: usize) -> Result<Arc<GrayImage>> {
        match &self.examples[index].image {
            ImageSource::Memory(img) => Ok(Arc::clone(img)),
            ImageSource::File(path) => GrayImage::decode(path).map(Arc::new),
        }
    }

    /// Loads a `path,label` CSV manifest; image paths are relative to the
    /// manifest's directory. Image headers are checked now, pixels are
    /// decoded on demand.
    pub fn load_manifest(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let parse_err = |line: usize, reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "path" || &headers[1] != "label" {
            return Err(parse_err(
                1,
                format!(
                    "expected header `path,label`, got `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            ));
        }
        let mut examples = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let label = match &record[1] {
                "0" => 0,
                "1" => 1,
                other => return Err(parse_err(line, format!("label must be 0 or 1, got `{other}`"))),
            };
            let image_path = base.join(&record[0]);
            if !image_path.exists() {
                return Err(Error::io(
                    &image_path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "image listed in manifest is missing"),
                ));
            }
            image::image_dimensions(&image_path).map_err(|e| Error::Decode {
                path: image_path.clone(),
                reason: e.to_string(),
            })?;
            examples.push(Example {
                image: ImageSource::File(image_path),
                label: Some(label),
            });
        }
        let name = path
            .parent()
            .and_then(Path::file_name)
            .or_else(|| path.file_stem())
            .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
        Ok(Dataset {
            name,
            examples,
            provenance: format!("manifest {}", path.display()),
        })
    }

    /// Writes every image as PGM into `dir` together with `manifest.csv`.
    pub fn materialize(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::from("path,label\n");
        for (i, ex) in self.examples.iter().enumerate() {
            let label = ex
                .label
                .ok_or_else(|| Error::Contract(format!("example {i} of {} has no label to write", self.name)))?;
            let file = format!("{i:05}.pgm");
            self.image(i)?.save(&dir.join(&file))?;
            manifest.push_str(&format!("{file},{label}\n"));
        }
        let path = dir.join("manifest.csv");
        std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_images(dir: &Path, labels: &[&str]) -> PathBuf {
        let mut manifest = String::from("path,label\n");
        for (i, l) in labels.iter().enumerate() {
            let img = GrayImage::new(3, 2, vec![i as u8; 6]);
            img.save(&dir.join(format!("{i}.pgm"))).unwrap();
            manifest.push_str(&format!("{i}.pgm,{l}\n"));
        }
        let path = dir.join("manifest.csv");
        std::fs::write(&path, manifest).unwrap();
        path
    }

    #[test]
    fn four_line_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_images(dir.path(), &["1", "0", "1", "0"]);
        let ds = Dataset::load_manifest(&path).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.positives(), 2);
        let img = ds.image(2).unwrap();
        assert_eq!((img.width, img.height), (3, 2));
        assert!(img.pixels.iter().all(|&p| p == 2));
    }

    #[test]
    fn bad_label_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_images(dir.path(), &["1", "2", "0"]);
        match Dataset::load_manifest(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_manifest_names_path() {
        let msg = Dataset::load_manifest(Path::new("/nonexistent/m.csv"))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("/nonexistent/m.csv"));
    }

    #[test]
    fn undecodable_image_is_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("junk.png"), b"not an image").unwrap();
        std::fs::write(dir.path().join("manifest.csv"), "path,label\njunk.png,1\n").unwrap();
        let err = Dataset::load_manifest(&dir.path().join("manifest.csv")).unwrap_err();
        assert!(matches!(err, Error::Decode { .. }), "{err:?}");
        assert!(err.to_string().contains("junk.png"));
    }

    #[test]
    fn materialize_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset {
            name: "mem".into(),
            examples: (0..3u8)
                .map(|i| Example {
                    image: ImageSource::Memory(Arc::new(GrayImage::new(2, 2, vec![i * 40, 1, 2, 255]))),
                    label: Some(i % 2),
                })
                .collect(),
            provenance: String::new(),
        };
        let path = ds.materialize(dir.path()).unwrap();
        let back = Dataset::load_manifest(&path).unwrap();
        assert_eq!(back.len(), 3);
        for i in 0..3 {
            assert_eq!(*back.image(i).unwrap(), *ds.image(i).unwrap());
            assert_eq!(back.label(i), ds.label(i));
        }
    }
}
