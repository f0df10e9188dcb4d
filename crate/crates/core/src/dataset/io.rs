use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};

use super::{Item, Label, LabeledSet, Mask};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor4};

pub const DIR_HEALTHY: &str = "healthy";
pub const DIR_DISEASED: &str = "diseased";
pub const DIR_MASKS: &str = "masks";

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 1x3xHxW tensor in [0,1] to an 8-bit RGB image.
pub fn tensor_to_rgb(image: &Tensor4) -> Result<RgbImage> {
    let s = image.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::shape("tensor_to_rgb", format!("expected 1x3xHxW, got {s}")));
    }
    let (r, g, b) = (image.plane(0, 0), image.plane(0, 1), image.plane(0, 2));
    Ok(RgbImage::from_fn(s.w as u32, s.h as u32, |x, y| {
        let i = y as usize * s.w + x as usize;
        Rgb([to_u8(r[i]), to_u8(g[i]), to_u8(b[i])])
    }))
}

pub fn rgb_to_tensor(img: &RgbImage) -> Tensor4 {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = w * h;
    let mut data = vec![0.0; 3 * plane];
    for (x, y, px) in img.enumerate_pixels() {
        let i = y as usize * w + x as usize;
        for ch in 0..3 {
            data[ch * plane + i] = f64::from(px[ch]) / 255.0;
        }
    }
    Tensor4::from_parts_unchecked(Shape::new(1, 3, h, w), data)
}

fn mask_to_gray(mask: &Mask) -> GrayImage {
    GrayImage::from_fn(mask.width as u32, mask.height as u32, |x, y| {
        Luma([if mask.cells[y as usize * mask.width + x as usize] { 255 } else { 0 }])
    })
}

fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb8())
}

fn read_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_luma8();
    Ok(Mask {
        height: img.height() as usize,
        width: img.width() as usize,
        cells: img.pixels().map(|p| p[0] >= 128).collect(),
    })
}

fn save_png<P, C>(img: &image::ImageBuffer<P, C>, path: &Path) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// One PNG as a 1x3xhxw tensor in [0, 1].
pub fn read_png(path: &Path) -> Result<Tensor4> {
    Ok(rgb_to_tensor(&read_rgb(path)?))
}

pub fn write_rgb_png(img: &RgbImage, path: &Path) -> Result<()> {
    save_png(img, path)
}

/// Writes `<root>/healthy/*.png`, `<root>/diseased/*.png` and one
/// `<root>/masks/<stem>.png` per masked item.
pub fn save_dir(set: &LabeledSet, root: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for dir in [DIR_HEALTHY, DIR_DISEASED, DIR_MASKS] {
        let d = root.join(dir);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for item in &set.items {
        let path = root.join(item.label.as_str()).join(format!("{}.png", item.name));
        save_png(&tensor_to_rgb(&item.image)?, &path)?;
        written.push(path);
        if let Some(mask) = &item.mask {
            let path = root.join(DIR_MASKS).join(format!("{}.png", item.name));
            save_png(&mask_to_gray(mask), &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// PNG files directly inside `dir`, sorted lexicographically.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Loads the directory layout written by [`save_dir`]. Masks attached to
/// healthy images are ignored with a warning.
pub fn load_dir(root: &Path) -> Result<LabeledSet> {
    let mut items = Vec::new();
    let mask_dir = root.join(DIR_MASKS);
    let mut size: Option<(usize, usize)> = None;
    for label in [Label::Healthy, Label::Diseased] {
        let dir = root.join(label.as_str());
        let files = list_pngs(&dir)?;
        if files.is_empty() {
            return Err(Error::EmptyClassDir(dir));
        }
        for path in files {
            let image = rgb_to_tensor(&read_rgb(&path)?);
            let s = image.shape();
            match size {
                None => size = Some((s.h, s.w)),
                Some(hw) if hw != (s.h, s.w) => {
                    return Err(Error::Data(format!(
                        "{} is {}x{}, expected {}x{}",
                        path.display(),
                        s.h,
                        s.w,
                        hw.0,
                        hw.1
                    )))
                }
                _ => {}
            }
            let name = stem(&path);
            let mask_path = mask_dir.join(format!("{name}.png"));
            let mask = if mask_path.is_file() {
                if label == Label::Healthy {
                    log::warn!("ignoring mask {} attached to a healthy image", mask_path.display());
                    None
                } else {
                    let m = read_mask(&mask_path)?;
                    if (m.height, m.width) != (s.h, s.w) {
                        return Err(Error::Data(format!("mask {} does not match its image size", mask_path.display())));
                    }
                    Some(m)
                }
            } else {
                None
            };
            items.push(Item {
                name,
                image,
                label,
                mask,
            });
        }
    }
    Ok(LabeledSet {
        items,
        seed: None,
        provenance: format!("loaded from {}", root.display()),
    })
}
