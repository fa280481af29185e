use std::path::Path;

use serde::{Deserialize, Serialize};

use super::image::GrayImage;
use crate::error::{Error, Result};

/// Linear radiance of the plane around the bitmap unless configured otherwise.
pub const DEFAULT_BACKGROUND: f64 = 0.5;

/// Side length of the builtin bench marker.
pub const DEFAULT_MARKER_SIDE_MM: f64 = 50.0;

/// Interior payload of the builtin marker (1 = white). No two of its
/// quarter-turn rotations are alike, so the detector can recover the orientation.
pub const BENCH_PATTERN: [[u8; 4]; 4] = [[1, 1, 0, 1], [0, 1, 0, 0], [1, 0, 1, 1], [0, 0, 1, 0]];

/// Textured plane: a row-major bitmap of linear radiances in `[0, 1]` spanning
/// `side_mm` horizontally. Texels are square, so the physical height is
/// `side_mm * height / width`. Marker-local x runs along bitmap columns and y
/// along bitmap rows, with the origin at the bitmap center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerSpec {
    pub width: usize,
    pub height: usize,
    pub texels: Vec<f64>,
    pub side_mm: f64,
    pub background: f64,
}

impl MarkerSpec {
    pub fn new(width: usize, height: usize, texels: Vec<f64>, side_mm: f64) -> Result<Self> {
        let m = Self {
            width,
            height,
            texels,
            side_mm,
            background: DEFAULT_BACKGROUND,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_background(mut self, background: f64) -> Result<Self> {
        self.background = background;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Input("marker bitmap is empty".into()));
        }
        if self.texels.len() != self.width * self.height {
            return Err(Error::Input(format!(
                "marker bitmap has {} texels, expected {}x{}",
                self.texels.len(),
                self.width,
                self.height
            )));
        }
        if !(self.side_mm > 0.0) || !self.side_mm.is_finite() {
            return Err(Error::Input(format!("marker side must be positive, got {}", self.side_mm)));
        }
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.background) || !self.texels.iter().all(|&t| in_unit(t)) {
            return Err(Error::Input("marker radiances must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Builtin bench marker: 6x6 cells, black one-cell border around the
    /// [`BENCH_PATTERN`] payload.
    pub fn bench_square(side_mm: f64) -> Result<Self> {
        let texels = (0..36)
            .map(|i| {
                let (r, c) = (i / 6, i % 6);
                if r == 0 || c == 0 || r == 5 || c == 5 {
                    0.0
                } else {
                    BENCH_PATTERN[r - 1][c - 1] as f64
                }
            })
            .collect();
        Self::new(6, 6, texels, side_mm)
    }

    pub fn height_mm(&self) -> f64 {
        self.side_mm * self.height as f64 / self.width as f64
    }

    pub fn texel_size_mm(&self) -> f64 {
        self.side_mm / self.width as f64
    }

    /// Nearest texel at marker-local `(x, y)` mm, or `None` outside the bitmap.
    #[inline]
    pub fn texel_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let s = self.texel_size_mm();
        let c = (x + 0.5 * self.side_mm) / s;
        let r = (y + 0.5 * self.height_mm()) / s;
        if c >= 0.0 && r >= 0.0 {
            let (c, r) = (c as usize, r as usize);
            if c < self.width && r < self.height {
                return Some((c, r));
            }
        }
        None
    }

    #[inline]
    pub fn texel(&self, col: usize, row: usize) -> f64 {
        self.texels[row * self.width + col]
    }

    /// Marker-local corners (z = 0) in TL, TR, BR, BL order.
    pub fn corners_mm(&self) -> [[f64; 3]; 4] {
        let hw = 0.5 * self.side_mm;
        let hh = 0.5 * self.height_mm();
        [[-hw, -hh, 0.0], [hw, -hh, 0.0], [hw, hh, 0.0], [-hw, hh, 0.0]]
    }

    /// Loads a grayscale PGM or PNG; levels are normalized by the file's maximum.
    pub fn load(path: impl AsRef<Path>, side_mm: f64) -> Result<Self> {
        let img = GrayImage::read(path.as_ref())?;
        let scale = 1.0 / img.max_value as f64;
        let texels = img.pixels.iter().map(|&p| p as f64 * scale).collect();
        Self::new(img.width as usize, img.height as usize, texels, side_mm)
    }

    /// Parses a marker spec: `square[:SIDE]`, `chessboard:RxC:SQUARE` or
    /// `PATH[@SIDE]`. `default_side` applies when no side is given.
    pub fn from_spec(spec: &str, default_side: Option<f64>) -> Result<Self> {
        let side_or_default = default_side.unwrap_or(DEFAULT_MARKER_SIDE_MM);
        let parse_num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Input(format!("marker spec '{spec}': {e}")))
        };
        if spec == "square" {
            return Self::bench_square(side_or_default);
        }
        if let Some(side) = spec.strip_prefix("square:") {
            return Self::bench_square(parse_num(side)?);
        }
        if let Some(rest) = spec.strip_prefix("chessboard:") {
            let parts: Vec<&str> = rest.split(':').collect();
            let dims: Vec<&str> = parts[0].split('x').collect();
            if parts.len() != 2 || dims.len() != 2 {
                return Err(Error::Input(format!(
                    "marker spec '{spec}' must look like chessboard:ROWSxCOLS:SQUARE_MM"
                )));
            }
            let rows = dims[0]
                .parse()
                .map_err(|e| Error::Input(format!("marker spec '{spec}': {e}")))?;
            let cols = dims[1]
                .parse()
                .map_err(|e| Error::Input(format!("marker spec '{spec}': {e}")))?;
            return generate_chessboard(rows, cols, parse_num(parts[1])?);
        }
        match spec.rsplit_once('@') {
            Some((path, side)) => Self::load(path, parse_num(side)?),
            None => Self::load(spec, side_or_default),
        }
    }
}

/// Chessboard of `rows x cols` squares with a black top-left square.
pub fn generate_chessboard(rows: usize, cols: usize, square_mm: f64) -> Result<MarkerSpec> {
    if rows < 2 || cols < 2 {
        return Err(Error::Input(format!(
            "chessboard needs at least 2x2 squares, got {rows}x{cols}"
        )));
    }
    let texels = (0..rows * cols)
        .map(|i| ((i / cols + i % cols) % 2) as f64)
        .collect();
    MarkerSpec::new(cols, rows, texels, square_mm * cols as f64)
}
