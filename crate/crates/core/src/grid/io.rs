//! 8-bit grayscale image files (PGM/P5, PNG) and debug renderings.

use std::path::Path;

use ::image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use ::image::{ExtendedColorType, GrayImage, ImageEncoder, ImageFormat, Luma, Rgb, RgbImage};

use super::{ImageGrid, LabelMap, RegionMask};
use crate::error::{Error, Result};

fn codec(path: &Path, source: ::image::ImageError) -> Error {
    match source {
        ::image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Codec {
            path: path.to_path_buf(),
            source,
        },
    }
}

/// Loads any supported image as luma with intensities mapped to `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let img = ::image::open(path).map_err(|e| codec(path, e))?.to_luma8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
    ImageGrid::new(w as usize, h as usize, data)
}

/// Loads a mask image; pixels at or above half intensity are members.
pub fn load_mask(path: impl AsRef<Path>) -> Result<RegionMask> {
    let img = load_image(path)?;
    Ok(RegionMask::threshold(&img, 0.5))
}

fn to_gray(grid: &ImageGrid, lo: f64, hi: f64) -> GrayImage {
    let span = if hi > lo { hi - lo } else { 1.0 };
    GrayImage::from_fn(grid.width() as u32, grid.height() as u32, |x, y| {
        let v = ((grid.get(x as usize, y as usize) - lo) / span).clamp(0.0, 1.0);
        Luma([(v * 255.0).round() as u8])
    })
}

fn save_gray(img: &GrayImage, path: &Path, format: ImageFormat) -> Result<()> {
    img.save_with_format(path, format)
        .map_err(|e| codec(path, e))
}

/// Writes `[0, 1]` intensities (clamped) as an 8-bit PNG.
pub fn save_png(grid: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    save_gray(&to_gray(grid, 0.0, 1.0), path.as_ref(), ImageFormat::Png)
}

/// Writes `[0, 1]` intensities (clamped) as binary PGM (P5).
pub fn save_pgm(grid: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = to_gray(grid, 0.0, 1.0);
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            img.as_raw(),
            img.width(),
            img.height(),
            ExtendedColorType::L8,
        )
        .map_err(|e| codec(path, e))
}

/// Min-max normalised rendering, used for error fields and level-set functions.
pub fn save_heatmap(grid: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    save_gray(
        &to_gray(grid, grid.min(), grid.max()),
        path.as_ref(),
        ImageFormat::Png,
    )
}

pub fn save_mask(mask: &RegionMask, path: impl AsRef<Path>) -> Result<()> {
    save_png(&mask.to_grid(), path)
}

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [255, 225, 25],
    [145, 30, 180],
    [245, 130, 48],
    [70, 240, 240],
    [240, 50, 230],
];

/// Label map rendered with a fixed colour per region id.
pub fn save_labels(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = RgbImage::from_fn(labels.width() as u32, labels.height() as u32, |x, y| {
        Rgb(PALETTE[labels.get(x as usize, y as usize) as usize % PALETTE.len()])
    });
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| codec(path, e))
}

/// Grayscale image with the zero crossing of `phi` drawn in red.
pub fn save_contour_overlay(
    img: &ImageGrid,
    phi: &ImageGrid,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    img.ensure_same_dims(phi.dims())?;
    let (w, h) = img.dims();
    let on_contour = |x: usize, y: usize| {
        let inside = phi.get(x, y) > 0.0;
        let neighbours = [
            (x.wrapping_sub(1), y),
            (x + 1, y),
            (x, y.wrapping_sub(1)),
            (x, y + 1),
        ];
        inside
            && neighbours
                .iter()
                .any(|&(nx, ny)| nx < w && ny < h && phi.get(nx, ny) <= 0.0)
    };
    let out = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        if on_contour(x, y) {
            Rgb([255, 0, 0])
        } else {
            let v = (img.get(x, y).clamp(0.0, 1.0) * 255.0).round() as u8;
            Rgb([v, v, v])
        }
    });
    out.save_with_format(path, ImageFormat::Png)
        .map_err(|e| codec(path, e))
}
