use std::path::Path;

use scr_core::{Image, WeightContainer};

use crate::CliError;

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn create(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::create(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_weights(path: &Path) -> Result<WeightContainer, CliError> {
    Ok(WeightContainer::from_bytes(&read(path)?)?)
}

pub fn load_image(path: &Path) -> Result<Image, CliError> {
    let rgb = image::open(path)
        .map_err(|source| CliError::Image {
            path: path.to_owned(),
            source,
        })?
        .to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(Image::from_rgb8(w as usize, h as usize, rgb.as_raw())?)
}

/// Writes PNG or PPM, chosen by extension.
pub fn save_image(path: &Path, img: &Image) -> Result<(), CliError> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_rgb8())
        .expect("buffer length matches dimensions");
    buf.save(path).map_err(|source| CliError::Image {
        path: path.to_owned(),
        source,
    })
}
