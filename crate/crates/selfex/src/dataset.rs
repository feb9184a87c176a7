//! Image ingestion: folders of PNGs, synthetic textures and noise.

use std::fs;
use std::path::Path;

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Rgb};
use selfex_core::pretrain::{make_synthetic_dataset, white_noise};
use selfex_core::seed::{self, stream};
use selfex_core::Image;

use crate::config::{ImageSource, PretrainConfig};
use crate::error::{Error, Result};
use crate::png_io::load_image;

/// Center-crops to a square and resizes to `size`×`size` RGB.
pub fn fit_to_size(image: &Image, size: usize) -> Image {
    let rgb = image.to_rgb();
    if rgb.height() == size && rgb.width() == size {
        return rgb;
    }
    let buf: ImageBuffer<Rgb<f32>, Vec<f32>> =
        ImageBuffer::from_raw(rgb.width() as u32, rgb.height() as u32, rgb.data().to_vec()).expect("buffer length");
    let side = rgb.height().min(rgb.width()) as u32;
    let x0 = (rgb.width() as u32 - side) / 2;
    let y0 = (rgb.height() as u32 - side) / 2;
    let crop = imageops::crop_imm(&buf, x0, y0, side, side).to_image();
    let out = imageops::resize(&crop, size as u32, size as u32, FilterType::Triangle);
    Image::new(size, size, 3, out.into_raw()).expect("resampled values are finite")
}

/// PNG files of a folder in file-name order, with their stems.
pub fn load_folder(path: &Path) -> Result<Vec<(String, Image)>> {
    let mut files: Vec<_> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            load_image(&p).map(|img| (id, img))
        })
        .collect()
}

/// Ground-truth images of one source, with their ids.
pub fn load_source(source: &ImageSource, size: usize) -> Result<Vec<(String, Image)>> {
    Ok(match source {
        ImageSource::Folder { path } => load_folder(path)?
            .into_iter()
            .map(|(id, img)| (id, fit_to_size(&img, size)))
            .collect(),
        ImageSource::Synthetic { dataset, seed } => {
            if dataset.image_size != size {
                return Err(Error::Invalid(format!(
                    "synthetic image_size {} differs from model input_size {size}",
                    dataset.image_size
                )));
            }
            make_synthetic_dataset(dataset, *seed)?
                .into_iter()
                .enumerate()
                .map(|(i, (img, info))| (format!("{}-p{}-{i:04}", info.family.name(), info.period), img))
                .collect()
        }
        ImageSource::Noise { count, seed: s } => (0..*count)
            .map(|i| {
                let img = white_noise(size, seed::derive(*s, &[stream::IMAGE, i as u64]));
                (format!("noise-{i:04}"), img)
            })
            .collect(),
    })
}

/// The pre-training corpus: synthetic textures plus, when a folder is set,
/// `real_fraction` of the count taken from it (cycling in file-name order).
pub fn pretrain_corpus(config: &PretrainConfig) -> Result<Vec<Image>> {
    let spec = &config.dataset;
    let real = match &spec.folder {
        Some(folder) => {
            let images = load_folder(Path::new(folder))?;
            if images.is_empty() {
                return Err(Error::Invalid(format!("no PNG files in {folder}")));
            }
            images
        }
        None => Vec::new(),
    };
    let n_real = if real.is_empty() {
        0
    } else {
        ((spec.count as f64 * config.real_fraction).round() as usize).min(spec.count)
    };
    let synthetic = selfex_core::pretrain::DatasetSpec {
        count: (spec.count - n_real).max(1),
        ..spec.clone()
    };
    let mut corpus: Vec<Image> = if n_real == spec.count {
        Vec::new()
    } else {
        make_synthetic_dataset(&synthetic, config.dataset_seed)?
            .into_iter()
            .map(|(img, _)| img)
            .collect()
    };
    corpus.extend(
        real.iter()
            .cycle()
            .take(n_real)
            .map(|(_, img)| fit_to_size(img, spec.image_size)),
    );
    Ok(corpus)
}
