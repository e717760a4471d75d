//! Tone mapping and image files: binary PPM, PNG and raw little-endian f32.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const GAMMA: f32 = 2.2;

/// Mean over `spp` samples, clamped to `[0,1]`, gamma 2.2, 8 bits.
pub fn tone_map(accumulation: &[f32], spp: u32) -> Vec<u8> {
    let scale = 1.0 / spp.max(1) as f32;
    accumulation
        .iter()
        .map(|&v| {
            let x = (v * scale).clamp(0.0, 1.0);
            (x.powf(1.0 / GAMMA) * 255.0 + 0.5) as u8
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_ppm(path: &Path, width: u32, height: u32, rgb: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    write!(w, "P6\n{width} {height}\n255\n")
        .and_then(|_| w.write_all(rgb))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_png(path: &Path, width: u32, height: u32, rgb: &[u8]) -> Result<()> {
    let w = create(path)?;
    let mut enc = png::Encoder::new(w, width, height);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let err = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let mut writer = enc.write_header().map_err(err)?;
    writer.write_image_data(rgb).map_err(err)
}

/// PNG for `.png`, PPM otherwise.
pub fn write_image(path: &Path, width: u32, height: u32, rgb: &[u8]) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("png") => write_png(path, width, height, rgb),
        _ => write_ppm(path, width, height, rgb),
    }
}

/// Accumulation buffer as bare little-endian f32 RGB triples, row-major.
pub fn write_raw(path: &Path, accumulation: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = accumulation.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_raw(path: &Path) -> Result<Vec<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Config(format!("{} is not a whole number of f32 values", path.display())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}
