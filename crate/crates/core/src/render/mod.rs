//! Thin-lens ray tracing of a textured marker plane with two-pass adaptive sampling.
//!
//! A coarse pass traces one pinhole ray per pixel and flags pixels that need
//! more samples: those next to a visible radiance step and those whose view of
//! the bitmap is defocused. Flagged pixels are re-rendered with a 4D Sobol
//! stream (sub-pixel offset plus lens position); the sample count is the number
//! of quantization levels unless capped.

mod image;
mod marker;
mod pose;
mod ray;

pub use image::{GrayImage, RenderMetadata, RenderedImage};
pub use marker::{
    generate_chessboard, MarkerSpec, BENCH_PATTERN, DEFAULT_BACKGROUND, DEFAULT_MARKER_SIDE_MM,
};
pub use pose::{wrap_degrees, Pose6D, RigidTransform};
pub use ray::{generate_ray, intersect_marker, Hit, HitKind, Ray};

use nalgebra::Vector3;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::camera::CameraRig;
use crate::error::{Error, Result};
use crate::optics::{build_kernel, develop, gamma_rec709, quantize};
use crate::sampling::SobolTable;

/// Largest tilt between the marker normal and the optical axis.
pub const MAX_TILT_DEG: f64 = 89.9;

/// A camera looking at one posed marker.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    rig: CameraRig,
    marker: MarkerSpec,
    pose: Pose6D,
    transform: RigidTransform,
    normal: Vector3<f64>,
}

impl Scene {
    pub fn new(rig: CameraRig, marker: MarkerSpec, pose: Pose6D) -> Result<Self> {
        pose.validate()?;
        marker.validate()?;
        let transform = pose.to_transform();
        let normal = transform.rotation.column(2).into_owned();
        if normal.z.abs() < MAX_TILT_DEG.to_radians().cos() {
            return Err(Error::Input(format!(
                "marker plane is tilted more than {MAX_TILT_DEG} deg from the optical axis"
            )));
        }
        Ok(Self {
            rig,
            marker,
            pose,
            transform,
            normal,
        })
    }

    pub fn rig(&self) -> &CameraRig {
        &self.rig
    }

    pub fn marker(&self) -> &MarkerSpec {
        &self.marker
    }

    pub fn pose(&self) -> &Pose6D {
        &self.pose
    }

    pub fn transform(&self) -> &RigidTransform {
        &self.transform
    }

    /// Marker plane normal in the camera frame.
    pub fn normal(&self) -> Vector3<f64> {
        self.normal
    }

    /// Marker corners (TL, TR, BR, BL) in pixel coordinates.
    pub fn projected_corners(&self) -> Result<[[f64; 2]; 4]> {
        let mut out = [[0.0; 2]; 4];
        for (o, c) in out.iter_mut().zip(self.marker.corners_mm()) {
            let p = self.transform.apply(Vector3::from(c));
            *o = self.rig.project([p.x, p.y, p.z])?;
        }
        Ok(out)
    }

    /// SHA-256 over the camera, marker and pose.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.rig.hash().as_bytes());
        h.update((self.marker.width as u64).to_le_bytes());
        h.update((self.marker.height as u64).to_le_bytes());
        for t in &self.marker.texels {
            h.update(t.to_bits().to_le_bytes());
        }
        let p = &self.pose;
        for v in [
            self.marker.side_mm,
            self.marker.background,
            p.x,
            p.y,
            p.z,
            p.roll,
            p.pitch,
            p.yaw,
        ] {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Cap on rays per refined pixel; the default is `2^bit_depth`.
    pub spp_max: Option<u32>,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
    pub diffraction: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            spp_max: None,
            workers: None,
            diffraction: true,
        }
    }
}

impl RenderOptions {
    pub fn spp(&self, rig: &CameraRig) -> Result<u32> {
        let levels = rig.sensor.levels();
        match self.spp_max {
            Some(0) => Err(Error::Config("spp_max must be at least 1".into())),
            Some(n) => Ok(n.min(levels)),
            None => Ok(levels),
        }
    }
}

/// Result of the single-ray pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarsePass {
    pub width: usize,
    pub height: usize,
    pub radiance: Vec<f64>,
    /// Camera-frame depth of each central hit (infinite on a miss).
    pub depth: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Linear radiance after the adaptive pass, before any optics.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceResult {
    pub width: usize,
    pub height: usize,
    pub radiance: Vec<f64>,
    pub samples: Vec<u32>,
    pub spp: u32,
    pub refined_pixels: usize,
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// One central ray per pixel plus the refinement mask.
pub fn render_coarse(scene: &Scene) -> Result<CoarsePass> {
    let rig = &scene.rig;
    let (w, h) = (rig.sensor.width as usize, rig.sensor.height as usize);
    let mut radiance = vec![0.0; w * h];
    let mut depth = vec![0.0; w * h];
    let mut on_bitmap = vec![false; w * h];
    radiance
        .par_chunks_mut(w)
        .zip(depth.par_chunks_mut(w))
        .zip(on_bitmap.par_chunks_mut(w))
        .enumerate()
        .try_for_each(|(y, ((rad, dep), bmp))| -> Result<()> {
            for x in 0..w {
                let ray = generate_ray((x as u32, y as u32), (0.5, 0.5), (0.5, 0.5), rig)?;
                let hit = intersect_marker(&ray, scene);
                rad[x] = hit.radiance;
                dep[x] = hit.depth;
                bmp[x] = matches!(hit.kind, HitKind::Texel(..));
            }
            Ok(())
        })?;

    let bits = rig.sensor.bit_depth;
    let levels: Vec<u16> = radiance.iter().map(|&v| quantize(gamma_rec709(v), bits)).collect();
    let pitch = rig.sensor.pixel_pitch_mm();
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let coc = if depth[i].is_finite() {
                rig.circle_of_confusion(depth[i])
            } else {
                0.0
            };
            let defocused = coc > pitch;
            let mut seed = defocused && on_bitmap[i];
            if !seed {
                'nb: for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        if levels[ny * w + nx] != levels[i] {
                            seed = true;
                            break 'nb;
                        }
                    }
                }
            }
            if !seed {
                continue;
            }
            let r = 1 + if defocused { (coc / pitch).ceil() as usize } else { 0 };
            for my in y.saturating_sub(r)..=(y + r).min(h - 1) {
                mask[my * w + x.saturating_sub(r)..=my * w + (x + r).min(w - 1)].fill(true);
            }
        }
    }
    Ok(CoarsePass {
        width: w,
        height: h,
        radiance,
        depth,
        mask,
    })
}

/// Coarse pass followed by Sobol refinement of the masked pixels.
pub fn trace(scene: &Scene, options: &RenderOptions) -> Result<TraceResult> {
    let spp = options.spp(&scene.rig)?;
    with_workers(options.workers, || trace_inner(scene, spp))?
}

fn trace_inner(scene: &Scene, spp: u32) -> Result<TraceResult> {
    let coarse = render_coarse(scene)?;
    let rig = &scene.rig;
    let table = SobolTable::new(4)?;
    let stream: Vec<[f64; 4]> = (0..spp)
        .map(|i| std::array::from_fn(|d| table.sample(i, d)))
        .collect();
    let CoarsePass {
        width: w,
        height: h,
        mut radiance,
        mask,
        ..
    } = coarse;
    let mut samples = vec![1u32; w * h];
    radiance
        .par_chunks_mut(w)
        .zip(samples.par_chunks_mut(w))
        .enumerate()
        .try_for_each(|(y, (rad, cnt))| -> Result<()> {
            for x in 0..w {
                if !mask[y * w + x] {
                    continue;
                }
                let mut sum = 0.0;
                let mut first = None;
                let mut uniform = true;
                for s in &stream {
                    let ray = generate_ray((x as u32, y as u32), (s[0], s[1]), (s[2], s[3]), rig)?;
                    let v = intersect_marker(&ray, scene).radiance;
                    sum += v;
                    match first {
                        None => first = Some(v),
                        Some(f) if f != v => uniform = false,
                        _ => {}
                    }
                }
                rad[x] = match first {
                    Some(f) if uniform => f,
                    _ => sum / stream.len() as f64,
                };
                cnt[x] = spp;
            }
            Ok(())
        })?;
    let refined_pixels = mask.iter().filter(|&&m| m).count();
    Ok(TraceResult {
        width: w,
        height: h,
        radiance,
        samples,
        spp,
        refined_pixels,
    })
}

/// Full pipeline: trace, diffraction, gamma, quantization.
pub fn render(scene: &Scene, options: &RenderOptions) -> Result<RenderedImage> {
    let traced = trace(scene, options)?;
    let kernel = if options.diffraction {
        Some(build_kernel(&scene.rig)?)
    } else {
        None
    };
    let bits = scene.rig.sensor.bit_depth;
    let pixels = with_workers(options.workers, || {
        develop(&traced.radiance, traced.width, traced.height, kernel.as_ref(), bits)
    })?;
    let rays_traced = traced.samples.iter().map(|&s| s as u64).sum();
    Ok(RenderedImage {
        width: traced.width as u32,
        height: traced.height as u32,
        bit_depth: bits,
        pixels,
        metadata: RenderMetadata {
            scene_hash: scene.hash(),
            spp: traced.spp,
            refined_pixels: traced.refined_pixels,
            rays_traced,
            samples: traced.samples,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{DistortionCoefficients, LensRig, SensorSpec};

    /// Small distortion-free rig so tests stay fast.
    fn small_rig(focus_mm: f64) -> CameraRig {
        CameraRig::new(
            LensRig::new(4.47, [47.5, 35.5], 2.8, focus_mm).unwrap(),
            DistortionCoefficients::none(),
            SensorSpec::new(96, 72, 8.3, 8).unwrap(),
            650.0,
        )
        .unwrap()
    }

    fn plain_square(side: f64) -> MarkerSpec {
        let texels = (0..16)
            .map(|i| if [5, 6, 9, 10].contains(&i) { 1.0 } else { 0.0 })
            .collect();
        MarkerSpec::new(4, 4, texels, side).unwrap()
    }

    #[test]
    fn edge_on_marker_rejected() {
        let r = Scene::new(
            small_rig(150.0),
            plain_square(50.0),
            Pose6D::new(0.0, 0.0, 500.0, 89.95, 0.0, 0.0),
        );
        assert!(matches!(r, Err(Error::Input(_))));
        assert!(Scene::new(
            small_rig(150.0),
            plain_square(50.0),
            Pose6D::new(0.0, 0.0, 500.0, 89.0, 0.0, 0.0)
        )
        .is_ok());
    }

    #[test]
    fn empty_frustum_has_empty_mask_and_constant_image() {
        // marker far off to the side: only the background plane is visible
        let s = Scene::new(
            small_rig(150.0),
            plain_square(10.0),
            Pose6D::new(5000.0, 0.0, 500.0, 0.0, 0.0, 0.0),
        )
        .unwrap();
        let c = render_coarse(&s).unwrap();
        assert!(c.mask.iter().all(|&m| !m));
        let img = render(&s, &RenderOptions::default()).unwrap();
        let bg = quantize(gamma_rec709(0.5), 8);
        assert!(img.pixels.iter().all(|&p| p == bg));
        assert_eq!(img.metadata.refined_pixels, 0);
    }

    #[test]
    fn in_focus_mask_is_a_thin_edge_band() {
        // marker at the focus distance: CoC is zero on the plane
        let s = Scene::new(
            small_rig(300.0),
            plain_square(30.0),
            Pose6D::new(0.0, 0.0, 300.0, 0.0, 0.0, 0.0),
        )
        .unwrap();
        let c = render_coarse(&s).unwrap();
        let f = s.rig().focal_length_px();
        let [cx, cy] = s.rig().lens.principal_point_px;
        // edges of the marker bitmap in pixel space (outer and inner square)
        let edges_x: Vec<f64> = [-15.0, -7.5, 7.5, 15.0].iter().map(|e| cx + f * e / 300.0).collect();
        let edges_y: Vec<f64> = [-15.0, -7.5, 7.5, 15.0].iter().map(|e| cy + f * e / 300.0).collect();
        let outer = (edges_x[0], edges_x[3], edges_y[0], edges_y[3]);
        let inner = (edges_x[1], edges_x[2], edges_y[1], edges_y[2]);
        // distance (px) from a pixel center to the nearest rectangle boundary
        let dist = |x: f64, y: f64, r: (f64, f64, f64, f64)| {
            let dx = (r.0 - x).max(x - r.1).max(0.0);
            let dy = (r.2 - y).max(y - r.3).max(0.0);
            let outside = dx.hypot(dy);
            if outside > 0.0 {
                outside
            } else {
                (x - r.0).min(r.1 - x).min(y - r.2).min(r.3 - y)
            }
        };
        for y in 0..c.height {
            for x in 0..c.width {
                let d = dist(x as f64, y as f64, outer).min(dist(x as f64, y as f64, inner));
                let m = c.mask[y * c.width + x];
                if d > 2.5 {
                    assert!(!m, "pixel ({x},{y}) at {d:.2} px from any edge is masked");
                }
                if d < 0.5 {
                    assert!(m, "pixel ({x},{y}) on an edge is not masked");
                }
            }
        }
    }

    #[test]
    fn defocused_mask_covers_footprint() {
        let s = Scene::new(
            small_rig(150.0),
            plain_square(60.0),
            Pose6D::new(0.0, 0.0, 900.0, 0.0, 0.0, 15.0),
        )
        .unwrap();
        let rig = s.rig();
        let coc_px = rig.circle_of_confusion(900.0) / rig.sensor.pixel_pitch_mm();
        assert!(coc_px > 2.0);
        let c = render_coarse(&s).unwrap();
        let corners = s.projected_corners().unwrap();
        // inside test against the projected (convex) quad
        let inside = |x: f64, y: f64| {
            (0..4).all(|i| {
                let a = corners[i];
                let b = corners[(i + 1) % 4];
                (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]) >= 0.0
            })
        };
        // square dilation windows reach sqrt(2) further along diagonals
        let reach = (2.0 + coc_px.ceil()) * std::f64::consts::SQRT_2;
        let near = |x: f64, y: f64| {
            let mut d = f64::INFINITY;
            for i in 0..4 {
                let a = corners[i];
                let b = corners[(i + 1) % 4];
                let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
                let t = (((x - a[0]) * ex + (y - a[1]) * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
                d = d.min((x - a[0] - t * ex).hypot(y - a[1] - t * ey));
            }
            d
        };
        for y in 0..c.height {
            for x in 0..c.width {
                let (fx, fy) = (x as f64, y as f64);
                let m = c.mask[y * c.width + x];
                if inside(fx, fy) {
                    assert!(m, "footprint pixel ({x},{y}) not masked");
                } else if near(fx, fy) > reach + 1.5 {
                    assert!(!m, "pixel ({x},{y}) beyond the dilated footprint is masked");
                }
            }
        }
    }

    #[test]
    fn radiance_stays_within_scene_bounds() {
        let s = Scene::new(
            small_rig(150.0),
            MarkerSpec::bench_square(50.0).unwrap().with_background(0.3).unwrap(),
            Pose6D::new(5.0, -3.0, 400.0, 20.0, -10.0, 33.0),
        )
        .unwrap();
        let t = trace(&s, &RenderOptions { spp_max: Some(64), ..Default::default() }).unwrap();
        assert!(t.radiance.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(t.samples.iter().all(|&n| n == 1 || n == 64));
    }

    #[test]
    fn refinement_leaves_unmasked_pixels_alone() {
        let s = Scene::new(
            small_rig(150.0),
            MarkerSpec::bench_square(40.0).unwrap(),
            Pose6D::new(0.0, 0.0, 300.0, 10.0, 5.0, 20.0),
        )
        .unwrap();
        let c = render_coarse(&s).unwrap();
        let a = trace(&s, &RenderOptions { spp_max: Some(4), ..Default::default() }).unwrap();
        let b = trace(&s, &RenderOptions { spp_max: Some(64), ..Default::default() }).unwrap();
        for i in 0..c.mask.len() {
            if !c.mask[i] {
                assert_eq!(a.radiance[i], c.radiance[i]);
                assert_eq!(b.radiance[i], c.radiance[i]);
            }
        }
    }

    #[test]
    fn constant_regions_match_coarse_exactly() {
        // defocused marker: interior of the white cell is refined but stays exactly white
        let s = Scene::new(
            small_rig(150.0),
            plain_square(120.0),
            Pose6D::new(0.0, 0.0, 700.0, 0.0, 0.0, 0.0),
        )
        .unwrap();
        let t = trace(&s, &RenderOptions::default()).unwrap();
        let center = (t.height / 2) * t.width + t.width / 2;
        assert_eq!(t.samples[center], 256);
        assert_eq!(t.radiance[center], 1.0);
    }

    #[test]
    fn spp_defaults_to_levels() {
        let rig = small_rig(150.0);
        assert_eq!(RenderOptions::default().spp(&rig).unwrap(), 256);
        let o = RenderOptions { spp_max: Some(1000), ..Default::default() };
        assert_eq!(o.spp(&rig).unwrap(), 256);
        let o = RenderOptions { spp_max: Some(0), ..Default::default() };
        assert!(o.spp(&rig).is_err());
    }

    #[test]
    fn quarter_turn_symmetric_marker_renders_identically() {
        // principal point at a pixel corner, so a quarter turn maps pixel centers onto pixel centers
        let rig = small_rig(400.0);
        let trace_at = |yaw: f64| {
            let s = Scene::new(rig.clone(), plain_square(30.0), Pose6D::new(0.0, 0.0, 400.0, 0.0, 0.0, yaw))
                .unwrap();
            trace(&s, &RenderOptions::default()).unwrap()
        };
        let a = trace_at(0.0);
        let b = trace_at(90.0);
        let w = a.width;
        for y in 0..a.height {
            for x in 12..84 {
                let (xr, yr) = (83 - y, x - 12);
                let (va, vb) = (a.radiance[y * w + x], b.radiance[yr * w + xr]);
                if a.samples[y * w + x] == 1 {
                    assert_eq!(va, vb);
                } else {
                    // only the sub-pixel sample pattern differs; each edge is stratified to 1/256
                    assert!((va - vb).abs() <= 2.0 / 256.0 + 1e-12, "({x},{y}): {va} vs {vb}");
                }
            }
        }
    }

    #[test]
    fn scene_hash_tracks_pose() {
        let a = Scene::new(small_rig(150.0), plain_square(50.0), Pose6D::new(0.0, 0.0, 500.0, 0.0, 0.0, 0.0)).unwrap();
        let b = Scene::new(small_rig(150.0), plain_square(50.0), Pose6D::new(0.0, 0.0, 500.0, 0.0, 0.0, 1.0)).unwrap();
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
    }
}
