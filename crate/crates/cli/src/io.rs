//! Image and file IO: 8-bit PNG through the `image` crate, ASCII and binary
//! PPM/PGM by hand, and atomic writes.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use image::ImageEncoder as _;
use truncdiff::Image;

use crate::error::{CliError, Result};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "ppm", "pgm"];

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

pub fn is_image_path(path: &Path) -> bool {
    extension(path).is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str()))
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() && is_image_path(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned())
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Reads a grey or colour image into display range. Alpha is dropped and
/// 16-bit PNGs are reduced to 8 bits.
pub fn read_image(path: &Path) -> Result<Image> {
    match extension(path).as_deref() {
        Some("png") => read_png(path),
        Some("ppm" | "pgm") => {
            let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
            parse_pnm(&bytes).map_err(|m| CliError::data(path, m))
        }
        _ => Err(CliError::data(path, "unsupported image format; use .png, .ppm or .pgm")),
    }
}

fn read_png(path: &Path) -> Result<Image> {
    let dynamic = image::open(path).map_err(|e| CliError::data(path, e))?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let (channels, bytes) = if dynamic.color().has_color() {
        (3, dynamic.to_rgb8().into_raw())
    } else {
        (1, dynamic.to_luma8().into_raw())
    };
    Ok(Image::from_u8_interleaved(w, h, channels, &bytes)?)
}

/// Encodes by extension after clamping to `[0, 1]` and rounding to 8 bits.
pub fn encode_image(path: &Path, img: &Image) -> Result<Vec<u8>> {
    let channels = img.channels();
    if channels != 1 && channels != 3 {
        return Err(CliError::data(path, format!("cannot store {channels} channels; need 1 or 3")));
    }
    let (w, h) = (img.width(), img.height());
    let raw = img.to_u8_interleaved();
    match extension(path).as_deref() {
        Some("png") => {
            let color = if channels == 3 {
                image::ExtendedColorType::Rgb8
            } else {
                image::ExtendedColorType::L8
            };
            let mut out = Vec::new();
            image::codecs::png::PngEncoder::new(&mut out)
                .write_image(&raw, w as u32, h as u32, color)
                .map_err(|e| CliError::data(path, e))?;
            Ok(out)
        }
        Some("ppm") if channels == 3 => Ok(ascii_pnm("P3", w, h, &raw)),
        Some("pgm") if channels == 1 => Ok(ascii_pnm("P2", w, h, &raw)),
        Some("ppm" | "pgm") => Err(CliError::data(
            path,
            format!("{channels}-channel image needs .{}", if channels == 3 { "ppm" } else { "pgm" }),
        )),
        _ => Err(CliError::data(path, "unsupported image format; use .png, .ppm or .pgm")),
    }
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let bytes = encode_image(path, img)?;
    write_atomic(path, &bytes)
}

fn ascii_pnm(magic: &str, w: usize, h: usize, raw: &[u8]) -> Vec<u8> {
    let mut s = format!("{magic}\n{w} {h}\n255\n");
    let row = raw.len() / h.max(1);
    for line in raw.chunks(row.max(1)) {
        let cells: Vec<String> = line.iter().map(u8::to_string).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s.into_bytes()
}

/// Parses P2/P3 (ASCII) and P5/P6 (binary) with `maxval` up to 65535.
pub fn parse_pnm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let channels = match magic.as_str() {
        "P2" | "P5" => 1,
        "P3" | "P6" => 3,
        other => return Err(format!("unsupported PNM magic `{other}`")),
    };
    let num = |s: String, what: &str| s.parse::<usize>().map_err(|_| format!("bad {what} `{s}`"));
    let w = num(token()?, "width")?;
    let h = num(token()?, "height")?;
    let maxval = num(token()?, "maxval")?;
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(format!("bad header: {w}x{h}, maxval {maxval}"));
    }
    let count = w * h * channels;
    let mut values = Vec::with_capacity(count);
    if magic == "P2" || magic == "P3" {
        for _ in 0..count {
            let v = num(token()?, "sample")?;
            if v > maxval {
                return Err(format!("sample {v} above maxval {maxval}"));
            }
            values.push(v);
        }
    } else {
        // Exactly one whitespace byte separates the header from the raster.
        let start = pos + 1;
        let width = if maxval < 256 { 1 } else { 2 };
        let body = bytes.get(start..start + count * width).ok_or("truncated raster")?;
        values.extend(body.chunks(width).map(|c| c.iter().fold(0usize, |a, &b| a << 8 | b as usize)));
    }
    let scaled: Vec<u8> = values
        .iter()
        .map(|&v| ((v as f64 / maxval as f64) * 255.0).round() as u8)
        .collect();
    Image::from_u8_interleaved(w, h, channels, &scaled).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_round_trip() {
        let bytes: Vec<u8> = (0..24).map(|i| (i * 10) as u8).collect();
        let img = Image::from_u8_interleaved(4, 2, 3, &bytes).unwrap();
        let enc = encode_image(Path::new("a.ppm"), &img).unwrap();
        assert!(enc.starts_with(b"P3\n4 2\n255\n"));
        let back = parse_pnm(&enc).unwrap();
        assert_eq!(back.to_u8_interleaved(), bytes);
    }

    #[test]
    fn binary_and_comments() {
        let mut data = b"P5 # grey\n2 2\n# max\n255\n".to_vec();
        data.extend([0u8, 64, 128, 255]);
        let img = parse_pnm(&data).unwrap();
        assert_eq!(img.to_u8_interleaved(), vec![0, 64, 128, 255]);
        assert!(parse_pnm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(parse_pnm(b"P7\n1 1\n255\n0").is_err());
        assert!(parse_pnm(b"P2\n1 1\n10\n11").is_err());
    }

    #[test]
    fn channel_extension_mismatch() {
        let img = Image::from_u8_interleaved(1, 1, 1, &[3]).unwrap();
        assert!(encode_image(Path::new("a.ppm"), &img).is_err());
        assert!(encode_image(Path::new("a.pgm"), &img).is_ok());
        assert!(encode_image(Path::new("a.bmp"), &img).is_err());
    }
}
