use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};

use crate::error::{Error, Result};
use crate::patch::{Channel, ImageGrid, PixelMask};
use crate::scalar::Real;

fn image_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Image { path: path.to_path_buf(), message: message.into() }
}

/// `<file>.meta.json`, holding `{"scale": s}` for a 16-bit disparity PNG.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DisparityMeta {
    /// Disparity value represented by PNG level 65535.
    pub scale: f64,
}

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| image_err(path, e.to_string()))
}

fn is_16bit(img: &DynamicImage) -> bool {
    let c = img.color();
    c.bytes_per_pixel() / c.channel_count() >= 2
}

/// Grayscale values in `[0, 1]` from an 8- or 16-bit PNG; colour images
/// are converted to luma.
pub fn read_png_gray<T: Real>(path: impl AsRef<Path>, channel: Channel) -> Result<ImageGrid<T>> {
    let path = path.as_ref();
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<T> = if is_16bit(&img) {
        img.into_luma16().into_raw().into_iter().map(|v| T::lit(f64::from(v) / 65535.0)).collect()
    } else {
        img.into_luma8().into_raw().into_iter().map(|v| T::lit(f64::from(v) / 255.0)).collect()
    };
    ImageGrid::new(w, h, values, channel)
}

fn quantize16<T: Real>(v: T) -> u16 {
    (v.as_f64().clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Writes values clamped to `[0, 1]` as a 16-bit grayscale PNG.
pub fn write_png16<T: Real>(path: impl AsRef<Path>, image: &ImageGrid<T>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u16> = image.values().iter().map(|&v| quantize16(v)).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(image.width() as u32, image.height() as u32, raw).expect("buffer sized to image");
    buf.save_with_format(path, ImageFormat::Png).map_err(|e| image_err(path, e.to_string()))
}

/// Writes `disparity / scale` as 16-bit PNG plus the scale sidecar.
pub fn write_disparity_png<T: Real>(path: impl AsRef<Path>, disparity: &ImageGrid<T>, scale: f64) -> Result<()> {
    let path = path.as_ref();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::param(format!("disparity scale must be positive, got {scale}")));
    }
    let inv = T::lit(1.0 / scale);
    let values = disparity.values().iter().map(|&v| v * inv).collect();
    write_png16(path, &ImageGrid::new(disparity.width(), disparity.height(), values, Channel::Disparity)?)?;
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string(&DisparityMeta { scale })?).map_err(|e| Error::io(&side, e))
}

/// Disparity from a PFM, or from a PNG scaled by its sidecar (scale 1
/// when the sidecar is absent).
pub fn read_disparity<T: Real>(path: impl AsRef<Path>) -> Result<ImageGrid<T>> {
    let path = path.as_ref();
    if has_extension(path, "pfm") {
        return read_pfm(path);
    }
    let grid = read_png_gray::<T>(path, Channel::Disparity)?;
    let side = sidecar_path(path);
    let scale = match fs::read_to_string(&side) {
        Ok(text) => serde_json::from_str::<DisparityMeta>(&text)?.scale,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => 1.0,
        Err(e) => return Err(Error::io(&side, e)),
    };
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(image_err(&side, format!("invalid scale {scale}")));
    }
    let s = T::lit(scale);
    let values = grid.values().iter().map(|&v| v * s).collect();
    ImageGrid::new(grid.width(), grid.height(), values, Channel::Disparity)
}

pub(crate) fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Nonzero pixels are observed, zero marks a hole.
pub fn read_mask(path: impl AsRef<Path>) -> Result<PixelMask> {
    let path = path.as_ref();
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let flags = img.into_luma16().into_raw().into_iter().map(|v| v != 0).collect();
    PixelMask::new(w, h, flags)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &PixelMask) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> = mask.flags().iter().map(|&o| if o { 255 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, raw).expect("buffer sized to mask");
    buf.save_with_format(path, ImageFormat::Png).map_err(|e| image_err(path, e.to_string()))
}

fn header_token(reader: &mut impl BufRead, path: &Path) -> Result<String> {
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            return Err(image_err(path, "truncated PFM header"));
        }
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            return Ok(t.to_string());
        }
    }
}

/// Reads a portable float map. Rows are stored bottom to top; a negative
/// scale marks little-endian data. Colour maps are averaged to one channel.
pub fn read_pfm<T: Real>(path: impl AsRef<Path>) -> Result<ImageGrid<T>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let channels = match header_token(&mut reader, path)?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(image_err(path, format!("not a PFM file (magic {other:?})"))),
    };
    let dims = header_token(&mut reader, path)?;
    let mut it = dims.split_whitespace().map(str::parse::<usize>);
    let (w, h) = match (it.next(), it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h)), None) if w > 0 && h > 0 => (w, h),
        _ => return Err(image_err(path, format!("bad PFM dimensions {dims:?}"))),
    };
    let scale: f64 = header_token(&mut reader, path)?
        .parse()
        .map_err(|_| image_err(path, "bad PFM scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(image_err(path, "bad PFM scale"));
    }
    let little = scale < 0.0;
    let mut bytes = vec![0u8; w * h * channels * 4];
    reader.read_exact(&mut bytes).map_err(|_| image_err(path, "truncated PFM data"))?;
    let floats: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| {
            let b = [b[0], b[1], b[2], b[3]];
            if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }
        })
        .collect();
    let mut values = vec![T::zero(); w * h];
    for row in 0..h {
        let y = h - 1 - row;
        for x in 0..w {
            let px = &floats[(row * w + x) * channels..][..channels];
            let v = px.iter().map(|&f| f64::from(f)).sum::<f64>() / channels as f64;
            if !v.is_finite() {
                return Err(image_err(path, format!("non-finite value at ({x}, {y})")));
            }
            values[y * w + x] = T::lit(v);
        }
    }
    ImageGrid::new(w, h, values, Channel::Disparity)
}

/// Writes a little-endian single-channel PFM.
pub fn write_pfm<T: Real>(path: impl AsRef<Path>, image: &ImageGrid<T>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (image.width(), image.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(image.get(x, y).as_f64() as f32).to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Width and height without decoding pixel data.
pub fn image_dimensions(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    if has_extension(path, "pfm") {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        header_token(&mut reader, path)?;
        let dims = header_token(&mut reader, path)?;
        let v: Vec<usize> = dims.split_whitespace().filter_map(|t| t.parse().ok()).collect();
        return match v.as_slice() {
            [w, h] => Ok((*w, *h)),
            _ => Err(image_err(path, format!("bad PFM dimensions {dims:?}"))),
        };
    }
    let (w, h) = image::image_dimensions(path).map_err(|e| image_err(path, e.to_string()))?;
    Ok((w as usize, h as usize))
}
