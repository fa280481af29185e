//! Reference square-border detector.
//!
//! Dark pixels (adaptive threshold on linear intensity) are grouped into
//! 8-connected components; the largest component whose convex hull is close
//! to a quadrilateral is kept. Each side is then re-located to sub-pixel
//! precision along its normal, at the crossing of the level halfway between
//! the background and the darkest marker pixel. The edge samples are
//! undistorted and fitted with lines, and the corners are the line
//! intersections.

use nalgebra::{Matrix2, Vector2};

use super::pnp::homography;
use crate::camera::CameraRig;
use crate::optics::inverse_gamma_rec709;
use crate::render::{RenderedImage, BENCH_PATTERN};

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Interior code used to fix the corner order; `None` starts at the corner
    /// closest to the image origin.
    pub pattern: Option<[[u8; 4]; 4]>,
    /// Quads whose mean side is shorter are ignored.
    pub min_side_px: f64,
    /// Side of the box window for the local mean.
    pub window: usize,
    /// A pixel is dark when its linear value is this far below the local mean.
    pub offset: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            pattern: Some(BENCH_PATTERN),
            min_side_px: 12.0,
            window: 31,
            offset: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Outer corners in pixels: marker TL, TR, BR, BL.
    pub corners: [[f64; 2]; 4],
    /// Same corners in ideal (undistorted, normalized) coordinates.
    pub ideal: [[f64; 2]; 4],
    /// Fraction of interior cells matching the pattern (1 without a pattern).
    pub score: f64,
    /// Mean side length in pixels.
    pub side_px: f64,
}

pub fn detect_square_marker(image: &RenderedImage, rig: &CameraRig) -> Option<Detection> {
    detect_with(image, rig, &DetectorConfig::default())
}

pub fn detect_with(image: &RenderedImage, rig: &CameraRig, config: &DetectorConfig) -> Option<Detection> {
    let lin = Linear::from_image(image);
    let dark = lin.threshold(config.window, config.offset);
    let mut best: Option<([Vector2<f64>; 4], f64, f64)> = None;
    for comp in components(&dark, lin.w, lin.h) {
        if comp.touches_border || comp.pixels.len() < 16 {
            continue;
        }
        let Some(quad) = fit_quad(&comp.pixels) else {
            continue;
        };
        let area = shoelace(&quad);
        if mean_side(&quad) < config.min_side_px {
            continue;
        }
        if best.as_ref().map_or(true, |b| area > b.1) {
            let dark = comp.pixels.iter().map(|&(x, y)| lin.at(x, y)).fold(f64::INFINITY, f64::min);
            best = Some((quad, area, dark));
        }
    }
    let (quad, _, dark) = best?;
    let (corners_px, ideal) = refine_corners(&lin, rig, &quad, dark)?;
    if corners_px.iter().any(|c| !(c.x > -0.5 && c.y > -0.5 && c.x < lin.w as f64 - 0.5 && c.y < lin.h as f64 - 0.5)) {
        return None;
    }
    if mean_side(&corners_px) < config.min_side_px {
        return None;
    }

    let (shift, score) = match &config.pattern {
        Some(p) => orient(&lin, rig, &ideal, p)?,
        None => {
            let k = (0..4)
                .min_by(|&a, &b| {
                    let sa = corners_px[a].x + corners_px[a].y;
                    let sb = corners_px[b].x + corners_px[b].y;
                    sa.partial_cmp(&sb).unwrap()
                })
                .unwrap();
            (k, 1.0)
        }
    };
    let pick = |v: &[Vector2<f64>; 4]| std::array::from_fn(|i| [v[(i + shift) % 4].x, v[(i + shift) % 4].y]);
    let side_px = mean_side(&corners_px);
    Some(Detection {
        corners: pick(&corners_px),
        ideal: pick(&ideal),
        score,
        side_px,
    })
}

/// Linear-intensity copy of the image.
struct Linear {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Linear {
    fn from_image(image: &RenderedImage) -> Self {
        let max = image.max_value() as f64;
        Self {
            w: image.width as usize,
            h: image.height as usize,
            v: image.pixels.iter().map(|&p| inverse_gamma_rec709(p as f64 / max)).collect(),
        }
    }

    fn at(&self, x: usize, y: usize) -> f64 {
        self.v[y * self.w + x]
    }

    /// Bilinear sample with clamped coordinates.
    fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.w - 1), (y0 + 1).min(self.h - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x1, y0) * fx;
        let bot = self.at(x0, y1) * (1.0 - fx) + self.at(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    fn threshold(&self, window: usize, offset: f64) -> Vec<bool> {
        let (w, h) = (self.w, self.h);
        let mut integral = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += self.at(x, y);
                integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
            }
        }
        let r = window / 2;
        let mut out = vec![false; w * h];
        for y in 0..h {
            let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
            for x in 0..w {
                let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
                let s = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1] - integral[y1 * (w + 1) + x0]
                    + integral[y0 * (w + 1) + x0];
                let mean = s / ((x1 - x0) * (y1 - y0)) as f64;
                out[y * w + x] = self.at(x, y) < mean - offset;
            }
        }
        out
    }
}

struct Component {
    pixels: Vec<(usize, usize)>,
    touches_border: bool,
}

fn components(mask: &[bool], w: usize, h: usize) -> Vec<Component> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Component {
            pixels: Vec::new(),
            touches_border: false,
        };
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            comp.pixels.push((x, y));
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                comp.touches_border = true;
            }
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

fn cross(o: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Monotone-chain convex hull, counter-clockwise in a y-up frame.
fn convex_hull(points: &[(usize, usize)]) -> Vec<Vector2<f64>> {
    let mut pts: Vec<Vector2<f64>> = points.iter().map(|&(x, y)| Vector2::new(x as f64, y as f64)).collect();
    pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vector2<f64>>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn shoelace(poly: &[Vector2<f64>]) -> f64 {
    let n = poly.len();
    0.5 * (0..n).map(|i| poly[i].x * poly[(i + 1) % n].y - poly[(i + 1) % n].x * poly[i].y).sum::<f64>()
}

fn mean_side(q: &[Vector2<f64>; 4]) -> f64 {
    (0..4).map(|i| (q[(i + 1) % 4] - q[i]).norm()).sum::<f64>() / 4.0
}

/// Quadrilateral enclosing the hull, ordered clockwise on screen (positive
/// shoelace with y pointing down). Hull edges are removed greedily, each time
/// extending the two neighbouring edges to meet, choosing the removal that
/// adds the least area. `None` when the quad is a poor fit.
fn fit_quad(pixels: &[(usize, usize)]) -> Option<[Vector2<f64>; 4]> {
    let mut poly = convex_hull(pixels);
    if poly.len() < 4 {
        return None;
    }
    if shoelace(&poly) < 0.0 {
        poly.reverse();
    }
    let hull_area = shoelace(&poly);
    while poly.len() > 4 {
        let n = poly.len();
        let mut best: Option<(usize, Vector2<f64>, f64)> = None;
        for i in 0..n {
            // edge i runs from poly[i] to poly[i + 1]
            let (p0, p1, p2, p3) = (poly[(i + n - 1) % n], poly[i], poly[(i + 1) % n], poly[(i + 2) % n]);
            let (d0, d1) = (p1 - p0, p3 - p2);
            let denom = d0.x * d1.y - d0.y * d1.x;
            if denom.abs() < 1e-12 {
                continue;
            }
            let t = ((p2.x - p0.x) * d1.y - (p2.y - p0.y) * d1.x) / denom;
            let u = ((p2.x - p0.x) * d0.y - (p2.y - p0.y) * d0.x) / denom;
            // the extensions must meet beyond p1 and before p2
            if t < 1.0 || u > 0.0 {
                continue;
            }
            let x = p0 + d0 * t;
            let added = 0.5 * cross(p1, x, p2).abs();
            if best.map_or(true, |b| added < b.2) {
                best = Some((i, x, added));
            }
        }
        let (i, x, _) = best?;
        poly[i] = x;
        poly.remove((i + 1) % n);
    }
    let quad = [poly[0], poly[1], poly[2], poly[3]];
    if !(hull_area > 0.8 * shoelace(&quad)) {
        return None;
    }
    Some(quad)
}

/// Sub-pixel edge position along `normal` through `p`: where the profile,
/// scanned inward from the background, first drops to the mid level between
/// the background and `dark`.
fn edge_offset(lin: &Linear, p: Vector2<f64>, normal: Vector2<f64>, reach: f64, dark: f64) -> Option<f64> {
    const STEP: f64 = 0.25;
    let n = (2.0 * reach / STEP).round() as usize;
    let at = |s: f64| {
        let q = p + normal * s;
        lin.sample(q.x, q.y)
    };
    let s_of = |i: usize| -reach + i as f64 * STEP;
    let prof: Vec<f64> = (0..=n).map(|i| at(s_of(i))).collect();
    let bright = (0..=4).map(|k| at(reach + k as f64 * STEP)).sum::<f64>() / 5.0;
    if !(bright - dark > 0.05) {
        return None;
    }
    let level = 0.5 * (bright + dark);
    let i = (0..n).rev().find(|&i| prof[i] <= level)?;
    let (a, b) = (prof[i], prof[i + 1]);
    let f = if b > a { (level - a) / (b - a) } else { 0.0 };
    Some(s_of(i) + f * STEP)
}

/// Total-least-squares line through points: returns (point, direction).
fn fit_line(pts: &[Vector2<f64>]) -> Option<(Vector2<f64>, Vector2<f64>)> {
    if pts.len() < 2 {
        return None;
    }
    let c = pts.iter().sum::<Vector2<f64>>() / pts.len() as f64;
    let mut cov = Matrix2::zeros();
    for p in pts {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let i = if eig.eigenvalues[0] > eig.eigenvalues[1] { 0 } else { 1 };
    Some((c, eig.eigenvectors.column(i).into_owned()))
}

fn intersect(l1: &(Vector2<f64>, Vector2<f64>), l2: &(Vector2<f64>, Vector2<f64>)) -> Option<Vector2<f64>> {
    let m = Matrix2::from_columns(&[l1.1, -l2.1]);
    let t = m.try_inverse()? * (l2.0 - l1.0);
    Some(l1.0 + l1.1 * t.x)
}

fn refine_corners(
    lin: &Linear,
    rig: &CameraRig,
    quad: &[Vector2<f64>; 4],
    dark: f64,
) -> Option<([Vector2<f64>; 4], [Vector2<f64>; 4])> {
    let mut lines = Vec::with_capacity(4);
    for i in 0..4 {
        let (a, b) = (quad[i], quad[(i + 1) % 4]);
        let d = b - a;
        let len = d.norm();
        let dir = d / len;
        // clockwise on screen: outward normal is the direction turned left
        let normal = Vector2::new(dir.y, -dir.x);
        let count = (len.ceil() as usize).max(8);
        let mut pts = Vec::with_capacity(count);
        for k in 0..count {
            let t = 0.15 + 0.7 * (k as f64 + 0.5) / count as f64;
            let p = a + d * t;
            if let Some(s) = edge_offset(lin, p, normal, 4.0, dark) {
                let q = p + normal * s;
                if let Ok(u) = rig.pixel_to_ideal(q.x, q.y) {
                    pts.push(Vector2::from(u));
                }
            }
        }
        if pts.len() < count / 2 || pts.len() < 3 {
            return None;
        }
        lines.push(fit_line(&pts)?);
    }
    let mut ideal = [Vector2::zeros(); 4];
    let mut px = [Vector2::zeros(); 4];
    for i in 0..4 {
        // corner i joins side i-1 and side i
        let c = intersect(&lines[(i + 3) % 4], &lines[i])?;
        ideal[i] = c;
        px[i] = Vector2::from(rig.ideal_to_pixel(c.x, c.y).ok()?);
    }
    Some((px, ideal))
}

/// Corner shift that best aligns the sampled interior with `pattern`.
fn orient(lin: &Linear, rig: &CameraRig, ideal: &[Vector2<f64>; 4], pattern: &[[u8; 4]; 4]) -> Option<(usize, f64)> {
    let unit = [
        Vector2::new(0.0, 0.0),
        Vector2::new(1.0, 0.0),
        Vector2::new(1.0, 1.0),
        Vector2::new(0.0, 1.0),
    ];
    let h = homography(&unit, ideal).ok()?;
    let mut cells = [[0.0; 4]; 4];
    for (r, row) in cells.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let p = h * nalgebra::Vector3::new((c as f64 + 1.5) / 6.0, (r as f64 + 1.5) / 6.0, 1.0);
            let [x, y] = rig.ideal_to_pixel(p.x / p.z, p.y / p.z).ok()?;
            *v = lin.sample(x, y);
        }
    }
    let (lo, hi) = cells.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mid = 0.5 * (lo + hi);
    // cells[r][c] is read with corner 0 as TL; corner k as TL rotates the grid
    let mut best = (0, 0);
    for k in 0..4 {
        let mut hits = 0;
        for r in 0..4 {
            for c in 0..4 {
                let (sr, sc) = match k {
                    0 => (r, c),
                    1 => (c, 3 - r),
                    2 => (3 - r, 3 - c),
                    _ => (3 - c, r),
                };
                let bright = cells[sr][sc] > mid;
                if bright == (pattern[r][c] == 1) {
                    hits += 1;
                }
            }
        }
        if hits > best.1 {
            best = (k, hits);
        }
    }
    Some((best.0, best.1 as f64 / 16.0))
}
