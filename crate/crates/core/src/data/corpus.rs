use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Luma, Rgb};

use super::SegmentationSample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// How a directory pair of PNG files is turned into samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusOptions {
    /// Output spatial size (square).
    pub target_size: usize,
    /// 1 loads grayscale, 3 loads RGB.
    pub in_channels: usize,
    /// Keep only images whose stem starts with one of these. Empty keeps all.
    pub prefixes: Vec<String>,
}

impl CorpusOptions {
    pub fn new(target_size: usize) -> Self {
        CorpusOptions {
            target_size,
            in_channels: 3,
            prefixes: Vec::new(),
        }
    }
}

/// Loads every `*.png` in `image_dir` together with the mask of the same stem
/// in `mask_dir` (a `<stem>_mask.png` file is accepted too). Images are
/// scaled to `[0, 1]` and bilinearly resized; masks are resized with nearest
/// neighbour and thresholded at 0.5. Samples come back sorted by stem.
pub fn load_corpus(image_dir: &Path, mask_dir: &Path, opts: &CorpusOptions) -> Result<Vec<SegmentationSample>> {
    if opts.target_size == 0 {
        return Err(Error::config("size", "must be positive"));
    }
    if opts.in_channels != 1 && opts.in_channels != 3 {
        return Err(Error::config(
            "in_channels",
            format!("images load as 1 or 3 channels, got {}", opts.in_channels),
        ));
    }
    if !mask_dir.is_dir() {
        return Err(Error::io(
            mask_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "mask directory not found"),
        ));
    }
    let mut images = png_files(image_dir)?;
    images.retain(|(stem, _)| opts.prefixes.is_empty() || opts.prefixes.iter().any(|p| stem.starts_with(p)));
    images.sort();
    images
        .into_iter()
        .map(|(stem, path)| {
            let mask_path = find_mask(mask_dir, &stem).ok_or_else(|| Error::MissingMask {
                stem: stem.clone(),
                dir: mask_dir.to_path_buf(),
            })?;
            let image = load_image(&path, opts)?;
            let mask = load_mask(&mask_path, opts.target_size)?;
            SegmentationSample::new(stem, image, mask)
        })
        .collect()
}

fn png_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.push((stem.to_string(), path.clone()));
        }
    }
    Ok(out)
}

fn find_mask(dir: &Path, stem: &str) -> Option<PathBuf> {
    [format!("{stem}.png"), format!("{stem}_mask.png"), format!("{stem}.PNG")]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn load_image(path: &Path, opts: &CorpusOptions) -> Result<Tensor> {
    let img = open(path)?;
    let s = opts.target_size as u32;
    let (w, h) = (img.width(), img.height());
    let planes: Vec<Vec<f32>> = if opts.in_channels == 1 {
        let gray: ImageBuffer<Luma<f32>, Vec<f32>> = img.to_luma32f();
        let gray = if (w, h) == (s, s) {
            gray
        } else {
            imageops::resize(&gray, s, s, FilterType::Triangle)
        };
        vec![gray.into_raw()]
    } else {
        let rgb: ImageBuffer<Rgb<f32>, Vec<f32>> = img.to_rgb32f();
        let rgb = if (w, h) == (s, s) {
            rgb
        } else {
            imageops::resize(&rgb, s, s, FilterType::Triangle)
        };
        let raw = rgb.into_raw();
        (0..3)
            .map(|c| raw.iter().skip(c).step_by(3).copied().collect())
            .collect()
    };
    let data: Vec<f32> = planes.into_iter().flatten().map(|v| v.clamp(0.0, 1.0)).collect();
    Tensor::from_vec([1, opts.in_channels, s as usize, s as usize], data)
}

fn load_mask(path: &Path, size: usize) -> Result<Tensor> {
    let gray = open(path)?.to_luma32f();
    let s = size as u32;
    let gray = if gray.dimensions() == (s, s) {
        gray
    } else {
        imageops::resize(&gray, s, s, FilterType::Nearest)
    };
    let data = gray.into_raw().into_iter().map(|v| (v >= 0.5) as u8 as f32).collect();
    Tensor::from_vec([1, 1, size, size], data)
}

/// Writes samples as `images/<id>.png` (8-bit gray or RGB) and
/// `masks/<id>.png` (0 or 255) under `root`, the layout [`load_corpus`] reads.
pub fn write_corpus(samples: &[SegmentationSample], root: &Path) -> Result<()> {
    for sub in ["images", "masks"] {
        let dir = root.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for s in samples {
        write_image_png(&s.image, &root.join("images").join(format!("{}.png", s.id)))?;
        write_mask_png(&s.mask, &root.join("masks").join(format!("{}.png", s.id)))?;
    }
    Ok(())
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn save(result: image::ImageResult<()>, path: &Path) -> Result<()> {
    result.map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a `[1, C, H, W]` image with values in `[0, 1]`; C must be 1 or 3.
pub fn write_image_png(t: &Tensor, path: &Path) -> Result<()> {
    let [_, c, h, w] = t.shape();
    let plane = h * w;
    let d = t.data();
    match c {
        1 => {
            let img = ImageBuffer::<Luma<u8>, _>::from_fn(w as u32, h as u32, |x, y| {
                Luma([to_u8(d[y as usize * w + x as usize])])
            });
            save(img.save(path), path)
        }
        3 => {
            let img = ImageBuffer::<Rgb<u8>, _>::from_fn(w as u32, h as u32, |x, y| {
                let i = y as usize * w + x as usize;
                Rgb([to_u8(d[i]), to_u8(d[plane + i]), to_u8(d[2 * plane + i])])
            });
            save(img.save(path), path)
        }
        other => Err(Error::Dimension {
            op: "write_image_png",
            axis: "channel",
            expected: "1 or 3".into(),
            actual: other,
        }),
    }
}

/// Writes the first plane of `t` binarized at 0.5 as a 0/255 PNG.
pub fn write_mask_png(t: &Tensor, path: &Path) -> Result<()> {
    let w = t.width();
    let d = t.data();
    let img = ImageBuffer::<Luma<u8>, _>::from_fn(w as u32, t.height() as u32, |x, y| {
        Luma([if d[y as usize * w + x as usize] > 0.5 { 255 } else { 0 }])
    });
    save(img.save(path), path)
}
