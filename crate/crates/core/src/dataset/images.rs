use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

struct Header {
    width: usize,
    height: usize,
    data_start: usize,
}

fn skip_space_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn header_number(bytes: &[u8], pos: usize, what: &str) -> Result<(usize, usize)> {
    let start = skip_space_and_comments(bytes, pos);
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(format_err(start, format!("expected {what}")));
    }
    let v = std::str::from_utf8(&bytes[start..end])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(start, format!("{what} out of range")))?;
    Ok((v, end))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    match bytes.get(..2) {
        Some(b"P6") => {}
        Some([b'P', b'1'..=b'7']) => {
            return Err(Error::Unsupported(format!(
                "netpbm variant {}, only binary P6 is supported",
                String::from_utf8_lossy(&bytes[..2])
            )))
        }
        _ => return Err(format_err(0, "missing P6 magic")),
    }
    let (width, pos) = header_number(bytes, 2, "width")?;
    let (height, pos) = header_number(bytes, pos, "height")?;
    let (maxval, pos) = header_number(bytes, pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::Unsupported(format!("PPM maxval {maxval}, only 255 is supported")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(format_err(pos, "expected a single whitespace byte before the raster")),
    }
    if width == 0 || height == 0 {
        return Err(format_err(pos, "zero image size"));
    }
    Ok(Header {
        width,
        height,
        data_start: pos + 1,
    })
}

/// Decodes binary P6 with maxval 255 into a `[1, 3, h, w]` tensor in `[0, 1]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let hdr = parse_header(bytes)?;
    let n = hdr.width * hdr.height * 3;
    let raster = &bytes[hdr.data_start..];
    if raster.len() < n {
        return Err(format_err(
            bytes.len(),
            format!("raster truncated: {} of {n} bytes", raster.len()),
        ));
    }
    if raster.len() > n {
        return Err(format_err(hdr.data_start + n, "trailing bytes after raster"));
    }
    Ok(Tensor::from_fn([1, 3, hdr.height, hdr.width], |_, c, y, x| {
        raster[(y * hdr.width + x) * 3 + c] as f64 / 255.0
    }))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn check_rgb(t: &Tensor) -> Result<()> {
    if t.batch() != 1 || t.channels() != 3 {
        return Err(Error::Config(format!("expected a [1, 3, h, w] image, got {:?}", t.dims())));
    }
    Ok(())
}

/// Encodes with the canonical header `P6\n<w> <h>\n255\n`; values are clamped
/// to `[0, 1]` and rounded to the nearest level.
pub fn encode_ppm(t: &Tensor) -> Result<Vec<u8>> {
    check_rgb(t)?;
    let (h, w) = (t.height(), t.width());
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out.push(to_u8(t.at(0, c, y, x)));
            }
        }
    }
    Ok(out)
}

/// PNG via the `image` crate: 8-bit samples are divided by 255, 16-bit by
/// 65535. Grey images are expanded to RGB and alpha is dropped.
pub fn decode_png(bytes: &[u8]) -> Result<Tensor> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    let sixteen = matches!(
        img,
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) | DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_)
    );
    let (w, h) = (img.width() as usize, img.height() as usize);
    if sixteen {
        let rgb = img.to_rgb16();
        Ok(Tensor::from_fn([1, 3, h, w], |_, c, y, x| {
            rgb.get_pixel(x as u32, y as u32)[c] as f64 / 65535.0
        }))
    } else {
        let rgb = img.to_rgb8();
        Ok(Tensor::from_fn([1, 3, h, w], |_, c, y, x| {
            rgb.get_pixel(x as u32, y as u32)[c] as f64 / 255.0
        }))
    }
}

/// 8-bit RGB PNG.
pub fn encode_png(t: &Tensor) -> Result<Vec<u8>> {
    check_rgb(t)?;
    let img = RgbImage::from_fn(t.width() as u32, t.height() as u32, |x, y| {
        image::Rgb(std::array::from_fn(|c| to_u8(t.at(0, c, y as usize, x as usize))))
    });
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageKind {
    Ppm,
    Png,
}

impl ImageKind {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "ppm" => Some(ImageKind::Ppm),
            "png" => Some(ImageKind::Png),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ImageKind::Ppm => "ppm",
            ImageKind::Png => "png",
        }
    }
}

fn kind_of(path: &Path) -> Result<ImageKind> {
    ImageKind::from_path(path)
        .ok_or_else(|| Error::Unsupported(format!("{}: expected .ppm or .png", path.display())))
}

pub fn load_image(path: &Path) -> Result<Tensor> {
    let kind = kind_of(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let t = match kind {
        ImageKind::Ppm => decode_ppm(&bytes),
        ImageKind::Png => decode_png(&bytes),
    };
    t.map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn save_image(path: &Path, t: &Tensor) -> Result<()> {
    let bytes = match kind_of(path)? {
        ImageKind::Ppm => encode_ppm(t)?,
        ImageKind::Png => encode_png(t)?,
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Sorted `.ppm`/`.png` files directly inside `dir`.
pub fn list_images(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && ImageKind::from_path(&p).is_some() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
