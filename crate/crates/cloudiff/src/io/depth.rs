//! Depth image files.
//!
//! A 16-byte header of four little-endian `u32` words (magic `CDPT`, width,
//! height, format version) followed by `width × height` little-endian `f32`
//! depths in row-major order. `0.0` marks a pixel without depth.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use cloudiff_core::depth::DepthImage;

use super::FormatError;

pub const DEPTH_MAGIC: [u8; 4] = *b"CDPT";
pub const DEPTH_VERSION: u32 = 1;

pub fn write_depth(path: &Path, img: &DepthImage) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_depth_to(&mut w, img)?;
    w.flush()?;
    Ok(())
}

pub fn write_depth_to<W: Write>(w: &mut W, img: &DepthImage) -> std::io::Result<()> {
    w.write_all(&DEPTH_MAGIC)?;
    w.write_all(&(img.width() as u32).to_le_bytes())?;
    w.write_all(&(img.height() as u32).to_le_bytes())?;
    w.write_all(&DEPTH_VERSION.to_le_bytes())?;
    for d in img.data() {
        w.write_all(&(*d as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_depth(path: &Path) -> Result<DepthImage, FormatError> {
    read_depth_from(&mut BufReader::new(File::open(path)?))
}

pub fn read_depth_from<R: Read>(r: &mut R) -> Result<DepthImage, FormatError> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if header[..4] != DEPTH_MAGIC {
        return Err(FormatError::Invalid("not a depth image (bad magic)".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    let (width, height, version) = (word(4) as usize, word(8) as usize, word(12));
    if version != DEPTH_VERSION {
        return Err(FormatError::Invalid(format!("unsupported depth format version {version}")));
    }
    let mut bytes = vec![0u8; width * height * 4];
    r.read_exact(&mut bytes)?;
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    DepthImage::from_data(width, height, data).map_err(|e| FormatError::Invalid(e.to_string()))
}
