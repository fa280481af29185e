use nalgebra::Vector3;

use super::Scene;
use crate::camera::CameraRig;
use crate::error::Result;
use crate::sampling::concentric_disk_map;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + t * self.direction
    }
}

/// Thin-lens ray for sensor sample `pixel + subpixel - 0.5` through lens
/// position `lens_uv` (mapped onto the pupil disk). Every lens position of a
/// given sensor sample passes through the same point on the plane `z = z_f`.
pub fn generate_ray(
    pixel: (u32, u32),
    subpixel: (f64, f64),
    lens_uv: (f64, f64),
    rig: &CameraRig,
) -> Result<Ray> {
    let x = pixel.0 as f64 + subpixel.0 - 0.5;
    let y = pixel.1 as f64 + subpixel.1 - 0.5;
    let [u, v] = rig.pixel_to_ideal(x, y)?;
    Ok(lens_ray(u, v, lens_uv, rig))
}

#[inline]
pub(crate) fn lens_ray(u: f64, v: f64, lens_uv: (f64, f64), rig: &CameraRig) -> Ray {
    let z_f = rig.lens.focus_distance_mm;
    let focus = Vector3::new(u * z_f, v * z_f, z_f);
    let (dx, dy) = concentric_disk_map(lens_uv.0, lens_uv.1);
    let r = 0.5 * rig.lens.pupil_diameter_mm();
    let origin = Vector3::new(dx * r, dy * r, 0.0);
    Ray {
        origin,
        direction: (focus - origin).normalize(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HitKind {
    /// Bitmap texel `(col, row)`.
    Texel(usize, usize),
    /// Marker plane outside the bitmap.
    Plane,
    /// Plane parallel to the ray or behind it.
    Miss,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub kind: HitKind,
    pub radiance: f64,
    /// Camera-frame z of the hit, infinite on a miss.
    pub depth: f64,
    /// Marker-local hit coordinates in mm (NaN on a miss).
    pub local: [f64; 2],
}

/// Ray / marker-plane intersection. Misses return the background radiance.
#[inline]
pub fn intersect_marker(ray: &Ray, scene: &Scene) -> Hit {
    let marker = scene.marker();
    let n = scene.normal();
    let denom = n.dot(&ray.direction);
    let miss = Hit {
        kind: HitKind::Miss,
        radiance: marker.background,
        depth: f64::INFINITY,
        local: [f64::NAN; 2],
    };
    if denom.abs() < 1e-12 {
        return miss;
    }
    let tf = scene.transform();
    let t = n.dot(&(tf.translation - ray.origin)) / denom;
    if !(t > 0.0) {
        return miss;
    }
    let p = ray.at(t);
    let local = tf.inverse_apply(p);
    let (kind, radiance) = match marker.texel_at(local.x, local.y) {
        Some((c, r)) => (HitKind::Texel(c, r), marker.texel(c, r)),
        None => (HitKind::Plane, marker.background),
    };
    Hit {
        kind,
        radiance,
        depth: p.z,
        local: [local.x, local.y],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::DistortionCoefficients;
    use crate::render::{MarkerSpec, Pose6D};
    use nalgebra::Matrix3;

    fn scene(pose: Pose6D) -> Scene {
        Scene::new(
            CameraRig::logitech_c270(),
            MarkerSpec::bench_square(50.0).unwrap(),
            pose,
        )
        .unwrap()
    }

    #[test]
    fn central_ray_is_pinhole_ray() {
        let rig = CameraRig::logitech_c270();
        let ray = generate_ray((100, 50), (0.5, 0.5), (0.5, 0.5), &rig).unwrap();
        assert_eq!(ray.origin, Vector3::zeros());
        let [u, v] = rig.pixel_to_ideal(100.0, 50.0).unwrap();
        let expected = Vector3::new(u, v, 1.0).normalize();
        assert!((ray.direction - expected).norm() < 1e-15);
        // and it projects back onto the pixel center
        let p = rig.project([ray.direction.x, ray.direction.y, ray.direction.z]).unwrap();
        assert!((p[0] - 100.0).abs() < 1e-9 && (p[1] - 50.0).abs() < 1e-9);
    }

    #[test]
    fn lens_rays_share_focus_point() {
        let rig = CameraRig::logitech_c270();
        let z_f = rig.lens.focus_distance_mm;
        let mut focus: Option<Vector3<f64>> = None;
        for &(lu, lv) in &[(0.5, 0.5), (0.0, 0.0), (1.0, 0.3), (0.2, 0.9), (0.77, 0.01)] {
            let ray = generate_ray((10, 400), (0.25, 0.75), (lu, lv), &rig).unwrap();
            assert!((ray.direction.norm() - 1.0).abs() < 1e-12);
            let t = (z_f - ray.origin.z) / ray.direction.z;
            let f = ray.at(t);
            if let Some(prev) = focus {
                assert!((f - prev).norm() < 1e-10);
            }
            focus = Some(f);
        }
    }

    #[test]
    fn principal_point_focuses_on_axis() {
        let mut rig = CameraRig::logitech_c270();
        rig.distortion = DistortionCoefficients::none();
        rig.lens.principal_point_px = [320.0, 240.0];
        let ray = generate_ray((320, 240), (0.5, 0.5), (0.9, 0.1), &rig).unwrap();
        let z_f = rig.lens.focus_distance_mm;
        let f = ray.at((z_f - ray.origin.z) / ray.direction.z);
        assert!(f.x.abs() < 1e-12 && f.y.abs() < 1e-12);
    }

    #[test]
    fn frontal_axis_ray_hits_bitmap_center() {
        let s = scene(Pose6D::new(0.0, 0.0, 1000.0, 0.0, 0.0, 0.0));
        let ray = Ray {
            origin: Vector3::zeros(),
            direction: Vector3::z(),
        };
        let hit = intersect_marker(&ray, &s);
        assert_eq!(hit.kind, HitKind::Texel(3, 3));
        assert_eq!(hit.depth, 1000.0);
        assert_eq!(hit.local, [0.0, 0.0]);
    }

    #[test]
    fn parallel_and_backward_rays_miss() {
        let s = scene(Pose6D::new(0.0, 0.0, 1000.0, 0.0, 0.0, 0.0));
        let ray = Ray {
            origin: Vector3::zeros(),
            direction: Vector3::x(),
        };
        assert_eq!(intersect_marker(&ray, &s).kind, HitKind::Miss);
        let ray = Ray {
            origin: Vector3::zeros(),
            direction: -Vector3::z(),
        };
        let hit = intersect_marker(&ray, &s);
        assert_eq!(hit.kind, HitKind::Miss);
        assert_eq!(hit.radiance, 0.5);
    }

    #[test]
    fn pitched_marker_hit_matches_linear_solve() {
        let pose = Pose6D::new(12.0, -7.0, 800.0, 0.0, 45.0, 0.0);
        let s = scene(pose);
        let r = pose.rotation();
        let rig = CameraRig::logitech_c270();
        for &(px, py, lu, lv) in &[(320u32, 240u32, 0.5, 0.5), (300, 200, 0.1, 0.8), (350, 260, 0.9, 0.4)] {
            let ray = generate_ray((px, py), (0.3, 0.6), (lu, lv), &rig).unwrap();
            // origin + t d = T + a e1 + b e2, solved as a 3x3 system
            let m = Matrix3::from_columns(&[ray.direction, -r.column(0).into_owned(), -r.column(1).into_owned()]);
            let sol = m.lu().solve(&(pose.translation() - ray.origin)).unwrap();
            let hit = intersect_marker(&ray, &s);
            let p = ray.at(sol[0]);
            assert!((hit.local[0] - sol[1]).abs() < 1e-9);
            assert!((hit.local[1] - sol[2]).abs() < 1e-9);
            assert!((hit.depth - p.z).abs() < 1e-9);
        }
    }
}
