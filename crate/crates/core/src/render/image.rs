use std::io::Cursor;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer grayscale raster as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    /// Largest representable level (`2^bits - 1`).
    pub max_value: u16,
    pub pixels: Vec<u16>,
}

/// Provenance of a rendered frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RenderMetadata {
    pub scene_hash: String,
    pub spp: u32,
    pub refined_pixels: usize,
    pub rays_traced: u64,
    /// Rays per pixel, row-major. Empty for images read from disk.
    #[serde(skip)]
    pub samples: Vec<u32>,
}

/// Quantized output of the render pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub width: u32,
    pub height: u32,
    pub bit_depth: u8,
    pub pixels: Vec<u16>,
    pub metadata: RenderMetadata,
}

impl RenderedImage {
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn max_value(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            max_value: self.max_value(),
            pixels: self.pixels.clone(),
        }
    }

    /// Reads an image written by [`RenderedImage::write`]. PGM files carry their
    /// bit depth in the header; 16-bit PNGs need it from `bit_depth`.
    pub fn read(path: impl AsRef<Path>, bit_depth: Option<u8>) -> Result<Self> {
        let path = path.as_ref();
        let mut img = GrayImage::read(path)?;
        if let Some(b) = bit_depth {
            img.max_value = ((1u32 << b) - 1) as u16;
        }
        let bits = (img.max_value as u32 + 1).trailing_zeros();
        if (1u32 << bits) - 1 != img.max_value as u32 || !matches!(bits, 8 | 10 | 12 | 16) {
            return Err(Error::parse(
                path,
                format!("maximum level {} is not 2^bits - 1 for a supported depth", img.max_value),
            ));
        }
        if bits == 16 {
            return Err(Error::parse(
                path,
                "16-bit container without a known bit depth (pass it from the sidecar)",
            ));
        }
        if img.pixels.iter().any(|&p| p > img.max_value) {
            return Err(Error::parse(path, "pixel exceeds the maximum level"));
        }
        Ok(Self {
            width: img.width,
            height: img.height,
            bit_depth: bits as u8,
            pixels: img.pixels,
            metadata: RenderMetadata::default(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_gray().write(path)
    }
}

impl GrayImage {
    pub fn new(width: u32, height: u32, max_value: u16, pixels: Vec<u16>) -> Result<Self> {
        if pixels.len() != (width as usize) * (height as usize) || max_value == 0 {
            return Err(Error::Input(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            max_value,
            pixels,
        })
    }

    /// Binary PGM (P5). Levels above 255 use big-endian 16-bit samples.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.max_value).into_bytes();
        if self.max_value < 256 {
            out.extend(self.pixels.iter().map(|&p| p as u8));
        } else {
            out.extend(self.pixels.iter().flat_map(|p| p.to_be_bytes()));
        }
        out
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut buf = Cursor::new(Vec::new());
        let dynamic = if self.max_value < 256 {
            let raw = self.pixels.iter().map(|&p| p as u8).collect();
            image::DynamicImage::ImageLuma8(
                image::GrayImage::from_raw(self.width, self.height, raw).expect("sized"),
            )
        } else {
            image::DynamicImage::ImageLuma16(
                image::ImageBuffer::from_raw(self.width, self.height, self.pixels.clone())
                    .expect("sized"),
            )
        };
        dynamic
            .write_to(&mut buf, image::ImageFormat::Png)
            .map_err(|e| Error::Input(format!("PNG encoding failed: {e}")))?;
        Ok(buf.into_inner())
    }

    /// Writes PGM or PNG depending on the extension.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = match extension(path).as_str() {
            "pgm" => self.to_pgm(),
            "png" => self.to_png()?,
            other => {
                return Err(Error::Input(format!(
                    "{}: unsupported image extension '{other}' (use .pgm or .png)",
                    path.display()
                )))
            }
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
            return parse_pgm(&bytes).map_err(|m| Error::parse(path, m));
        }
        let img = image::load_from_memory(&bytes).map_err(|e| Error::parse(path, e))?;
        Ok(match img {
            image::DynamicImage::ImageLuma8(g) => Self {
                width: g.width(),
                height: g.height(),
                max_value: 255,
                pixels: g.into_raw().into_iter().map(u16::from).collect(),
            },
            image::DynamicImage::ImageLuma16(g) => Self {
                width: g.width(),
                height: g.height(),
                max_value: u16::MAX,
                pixels: g.into_raw(),
            },
            other => {
                let g = other.to_luma8();
                Self {
                    width: g.width(),
                    height: g.height(),
                    max_value: 255,
                    pixels: g.into_raw().into_iter().map(u16::from).collect(),
                }
            }
        })
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let binary = bytes.starts_with(b"P5");
    // header: magic, width, height, maxval; '#' starts a comment
    let mut fields = Vec::with_capacity(4);
    let mut pos = 2;
    while fields.len() < 3 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        fields.push(text.parse::<u32>().map_err(|_| "malformed PGM header".to_string())?);
    }
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if maxval == 0 || maxval > 65535 {
        return Err(format!("PGM maxval {maxval} out of range"));
    }
    let count = width as usize * height as usize;
    let pixels: Vec<u16> = if binary {
        let data = &bytes[(pos + 1).min(bytes.len())..];
        if maxval < 256 {
            if data.len() < count {
                return Err("truncated PGM data".into());
            }
            data[..count].iter().map(|&b| b as u16).collect()
        } else {
            if data.len() < 2 * count {
                return Err("truncated PGM data".into());
            }
            data[..2 * count]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        }
    } else {
        let text = std::str::from_utf8(&bytes[pos..]).map_err(|e| e.to_string())?;
        let vals: std::result::Result<Vec<u16>, _> =
            text.split_ascii_whitespace().take(count).map(str::parse).collect();
        let vals = vals.map_err(|e| format!("PGM data: {e}"))?;
        if vals.len() < count {
            return Err("truncated PGM data".into());
        }
        vals
    };
    if pixels.iter().any(|&p| p as u32 > maxval) {
        return Err("PGM sample exceeds maxval".into());
    }
    Ok(GrayImage {
        width,
        height,
        max_value: maxval as u16,
        pixels,
    })
}
