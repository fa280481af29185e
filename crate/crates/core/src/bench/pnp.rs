use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Rotation3, Vector2, Vector3};

use crate::camera::CameraRig;
use crate::error::{Error, Result};
use crate::render::Pose6D;

#[derive(Debug, Clone, PartialEq)]
pub struct PnpSolution {
    pub pose: Pose6D,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// RMS reprojection error of the chosen candidate, in pixels.
    pub rms_px: f64,
    /// RMS error of the rejected planar candidate minus `rms_px`.
    pub ambiguity_margin: f64,
}

/// Pose of a planar object (all `object_points` at z = 0, mm) from its pixel
/// observations. Both planar candidates are refined; the one with the lower
/// reprojection error wins.
pub fn planar_pnp(
    image_points: &[[f64; 2]],
    object_points: &[[f64; 3]],
    rig: &CameraRig,
) -> Result<PnpSolution> {
    if image_points.len() != object_points.len() {
        return Err(Error::Input(format!(
            "{} image points for {} object points",
            image_points.len(),
            object_points.len()
        )));
    }
    if image_points.len() < 4 {
        return Err(Error::Input(format!(
            "planar pose needs at least 4 correspondences, got {}",
            image_points.len()
        )));
    }
    if object_points.iter().any(|p| p[2] != 0.0) {
        return Err(Error::Input("object points must lie on the plane z = 0".into()));
    }
    let ideal: Vec<Vector2<f64>> = image_points
        .iter()
        .map(|p| rig.pixel_to_ideal(p[0], p[1]).map(Vector2::from))
        .collect::<Result<_>>()?;
    let obj: Vec<Vector2<f64>> = object_points.iter().map(|p| Vector2::new(p[0], p[1])).collect();
    check_spread(&obj)?;

    // work about the object centroid so the homography's origin lies on the marker
    let c = obj.iter().sum::<Vector2<f64>>() / obj.len() as f64;
    let centered: Vec<Vector2<f64>> = obj.iter().map(|p| p - c).collect();
    let h = homography(&centered, &ideal)?;
    let candidates = decompose(&h)?;

    let f_px = rig.focal_length_px();
    let pts3: Vec<Vector3<f64>> = centered.iter().map(|p| Vector3::new(p.x, p.y, 0.0)).collect();
    let mut solved: Vec<(Matrix3<f64>, Vector3<f64>, f64)> = Vec::with_capacity(2);
    for r in candidates {
        let t = solve_translation(&r, &pts3, &ideal)?;
        let (r, t) = refine(r, t, &pts3, &ideal);
        let rms = rms(&r, &t, &pts3, &ideal) * f_px;
        solved.push((r, t, rms));
    }
    solved.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap_or(std::cmp::Ordering::Equal));
    let (r, t_c, rms_px) = solved[0];
    let ambiguity_margin = solved.get(1).map_or(f64::INFINITY, |s| s.2 - rms_px);
    // undo the centering: X_cam = R (p - c) + t_c
    let t = t_c - r * Vector3::new(c.x, c.y, 0.0);
    if !(t.z > 0.0) {
        return Err(Error::Estimation("recovered pose lies behind the camera".into()));
    }
    Ok(PnpSolution {
        pose: Pose6D::from_transform(&r, &t),
        rotation: r,
        translation: t,
        rms_px,
        ambiguity_margin,
    })
}

fn check_spread(obj: &[Vector2<f64>]) -> Result<()> {
    let n = obj.len() as f64;
    let c = obj.iter().sum::<Vector2<f64>>() / n;
    let mut cov = Matrix2::zeros();
    for p in obj {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo < 1e-10 * hi {
        return Err(Error::Estimation("object points are collinear or coincident".into()));
    }
    Ok(())
}

/// Hartley normalization: centroid to the origin, mean distance sqrt(2).
fn normalizer(pts: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let c = pts.iter().sum::<Vector2<f64>>() / n;
    let mean = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean > 0.0 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

/// Normalized DLT homography mapping `src` onto `dst`, scaled so `H[2][2] = 1`.
pub(crate) fn homography(src: &[Vector2<f64>], dst: &[Vector2<f64>]) -> Result<Matrix3<f64>> {
    let ts = normalizer(src);
    let td = normalizer(dst);
    let n = src.len();
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for i in 0..n {
        let p = ts * Vector3::new(src[i].x, src[i].y, 1.0);
        let q = td * Vector3::new(dst[i].x, dst[i].y, 1.0);
        let (x, y) = (p.x / p.z, p.y / p.z);
        let (u, v) = (q.x / q.z, q.y / q.z);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for j in 0..9 {
            a[(2 * i, j)] = r0[j];
            a[(2 * i + 1, j)] = r1[j];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Estimation("homography SVD failed".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].partial_cmp(&sv[j]).unwrap_or(std::cmp::Ordering::Equal));
    if sv[order[1]] < 1e-12 * sv[order[8]] {
        return Err(Error::Estimation("degenerate point configuration for a homography".into()));
    }
    let h = v_t.row(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let ts_inv = ts.try_inverse().expect("normalizer is invertible");
    let td_inv = td.try_inverse().expect("normalizer is invertible");
    let hm = td_inv * hn * ts;
    let _ = ts_inv;
    if hm[(2, 2)].abs() < 1e-300 {
        return Err(Error::Estimation("homography maps the object origin to infinity".into()));
    }
    Ok(hm / hm[(2, 2)])
}

/// Rotation taking the unit vector `p` onto +z.
fn rotation_to_axis(p: &Vector3<f64>) -> Matrix3<f64> {
    let p = p.normalize();
    let axis = p.cross(&Vector3::z());
    let s = axis.norm();
    let c = p.z;
    if s < 1e-15 {
        return Matrix3::identity();
    }
    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), s.atan2(c)).into_inner()
}

/// The two rotation candidates consistent with the homography's first-order
/// behaviour at the object origin.
fn decompose(h: &Matrix3<f64>) -> Result<[Matrix3<f64>; 2]> {
    let (u0, v0) = (h[(0, 2)], h[(1, 2)]);
    // Jacobian of the plane-to-image map at the origin (H[2][2] = 1)
    let j = Matrix2::new(
        h[(0, 0)] - h[(2, 0)] * u0,
        h[(0, 1)] - h[(2, 1)] * u0,
        h[(1, 0)] - h[(2, 0)] * v0,
        h[(1, 1)] - h[(2, 1)] * v0,
    );
    let p = Vector3::new(u0, v0, 1.0);
    let rv = rotation_to_axis(&p);
    // image-plane Jacobian of the re-centering rotation at p
    let b = rv.fixed_view::<2, 2>(0, 0).into_owned() / p.norm();
    let a = b * j;
    let gamma = a.singular_values().max();
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Estimation("homography Jacobian is singular".into()));
    }
    let r = a / gamma;
    let c1 = (1.0 - r[(0, 0)].powi(2) - r[(1, 0)].powi(2)).max(0.0).sqrt();
    let c2_mag = (1.0 - r[(0, 1)].powi(2) - r[(1, 1)].powi(2)).max(0.0).sqrt();
    let dot = r[(0, 0)] * r[(0, 1)] + r[(1, 0)] * r[(1, 1)];
    let c2 = if dot > 0.0 { -c2_mag } else { c2_mag };
    let build = |s: f64| {
        let r1 = Vector3::new(r[(0, 0)], r[(1, 0)], s * c1);
        let r2 = Vector3::new(r[(0, 1)], r[(1, 1)], s * c2);
        let r3 = r1.cross(&r2);
        let m = Matrix3::from_columns(&[r1, r2, r3]);
        rv.transpose() * orthonormalize(&m)
    };
    Ok([build(1.0), build(-1.0)])
}

fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Least-squares translation for a fixed rotation.
fn solve_translation(
    r: &Matrix3<f64>,
    pts: &[Vector3<f64>],
    ideal: &[Vector2<f64>],
) -> Result<Vector3<f64>> {
    let n = pts.len();
    let mut a = DMatrix::<f64>::zeros(2 * n, 3);
    let mut b = DVector::<f64>::zeros(2 * n);
    for (i, (p, q)) in pts.iter().zip(ideal).enumerate() {
        let rp = r * p;
        a[(2 * i, 0)] = 1.0;
        a[(2 * i, 2)] = -q.x;
        b[2 * i] = q.x * rp.z - rp.x;
        a[(2 * i + 1, 1)] = 1.0;
        a[(2 * i + 1, 2)] = -q.y;
        b[2 * i + 1] = q.y * rp.z - rp.y;
    }
    let t = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Estimation(format!("translation solve failed: {e}")))?;
    Ok(Vector3::new(t[0], t[1], t[2]))
}

fn residuals(r: &Matrix3<f64>, t: &Vector3<f64>, pts: &[Vector3<f64>], ideal: &[Vector2<f64>]) -> DVector<f64> {
    let mut res = DVector::zeros(2 * pts.len());
    for (i, (p, q)) in pts.iter().zip(ideal).enumerate() {
        let x = r * p + t;
        res[2 * i] = x.x / x.z - q.x;
        res[2 * i + 1] = x.y / x.z - q.y;
    }
    res
}

fn rms(r: &Matrix3<f64>, t: &Vector3<f64>, pts: &[Vector3<f64>], ideal: &[Vector2<f64>]) -> f64 {
    let res = residuals(r, t, pts, ideal);
    (res.norm_squared() / pts.len() as f64).sqrt()
}

/// Levenberg-Marquardt on normalized reprojection residuals; the rotation is
/// updated by a left-multiplied exponential map.
fn refine(
    mut r: Matrix3<f64>,
    mut t: Vector3<f64>,
    pts: &[Vector3<f64>],
    ideal: &[Vector2<f64>],
) -> (Matrix3<f64>, Vector3<f64>) {
    let n = pts.len();
    let mut res = residuals(&r, &t, pts, ideal);
    let mut cost = res.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..100 {
        let mut jac = DMatrix::<f64>::zeros(2 * n, 6);
        for (i, p) in pts.iter().enumerate() {
            let rp = r * p;
            let x = rp + t;
            let iz = 1.0 / x.z;
            let dpi = nalgebra::Matrix2x3::new(iz, 0.0, -x.x * iz * iz, 0.0, iz, -x.y * iz * iz);
            // d(R p)/d(omega) = -[R p]_x
            let skew = Matrix3::new(0.0, rp.z, -rp.y, -rp.z, 0.0, rp.x, rp.y, -rp.x, 0.0);
            let d_rot = dpi * skew;
            for c in 0..3 {
                jac[(2 * i, c)] = d_rot[(0, c)];
                jac[(2 * i + 1, c)] = d_rot[(1, c)];
                jac[(2 * i, 3 + c)] = dpi[(0, c)];
                jac[(2 * i + 1, 3 + c)] = dpi[(1, c)];
            }
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * &res;
        if g.amax() < 1e-18 {
            break;
        }
        let mut improved = false;
        for _ in 0..10 {
            let mut a = jtj.clone();
            for d in 0..6 {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let omega = Vector3::new(step[0], step[1], step[2]);
            let r_new = Rotation3::new(omega).into_inner() * r;
            let t_new = t + Vector3::new(step[3], step[4], step[5]);
            let res_new = residuals(&r_new, &t_new, pts, ideal);
            let cost_new = res_new.norm_squared();
            if cost_new <= cost {
                let small = step.norm() < 1e-15 * (1.0 + t.norm());
                r = r_new;
                t = t_new;
                res = res_new;
                let rel = (cost - cost_new) / cost.max(1e-300);
                cost = cost_new;
                lambda = (lambda * 0.1).max(1e-12);
                improved = true;
                if small || rel < 1e-16 {
                    return (r, t);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (r, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(side: f64) -> Vec<[f64; 3]> {
        let h = side / 2.0;
        vec![[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]]
    }

    fn project_all(rig: &CameraRig, pose: &Pose6D, obj: &[[f64; 3]]) -> Vec<[f64; 2]> {
        let t = pose.to_transform();
        obj.iter()
            .map(|p| {
                let q = t.apply(Vector3::from(*p));
                rig.project([q.x, q.y, q.z]).unwrap()
            })
            .collect()
    }

    #[test]
    fn exact_corners_round_trip() {
        let rig = CameraRig::logitech_c270();
        let obj = square(50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let z = rng.gen_range(500.0..1500.0);
            let pose = Pose6D::new(
                rng.gen_range(-0.2..0.2) * z,
                rng.gen_range(-0.15..0.15) * z,
                z,
                rng.gen_range(-45.0..45.0),
                rng.gen_range(-45.0..45.0),
                rng.gen_range(-180.0..180.0),
            );
            let img = project_all(&rig, &pose, &obj);
            let sol = planar_pnp(&img, &obj, &rig).unwrap();
            let e = crate::bench::pose_error(&sol.pose, &pose);
            for d in 0..6 {
                assert!(e[d].abs() < 1e-6, "{pose:?}: dof {d} error {}", e[d]);
            }
            assert!(sol.rms_px < 1e-9);
        }
    }

    #[test]
    fn noisy_corners_stay_close() {
        // 0.1 px noise at 1 m: X/Y sub-mm, Z within a few mm
        let rig = CameraRig::logitech_c270();
        let obj = square(50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pose = Pose6D::new(20.0, -10.0, 1000.0, 10.0, -15.0, 30.0);
        let clean = project_all(&rig, &pose, &obj);
        let (mut sx, mut sz) = (0.0f64, 0.0f64);
        let trials = 200;
        for _ in 0..trials {
            let img: Vec<[f64; 2]> = clean
                .iter()
                .map(|p| {
                    let g = |rng: &mut ChaCha8Rng| {
                        // Box-Muller
                        let (a, b): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
                        (-2.0 * a.ln()).sqrt() * (std::f64::consts::TAU * b).cos()
                    };
                    [p[0] + 0.1 * g(&mut rng), p[1] + 0.1 * g(&mut rng)]
                })
                .collect();
            let sol = planar_pnp(&img, &obj, &rig).unwrap();
            let e = crate::bench::pose_error(&sol.pose, &pose);
            sx = sx.max(e[0].abs()).max(e[1].abs());
            sz += e[2].abs();
        }
        assert!(sx < 1.0, "max X/Y error {sx}");
        let mean_z = sz / trials as f64;
        assert!(mean_z < 10.0 && mean_z > 0.01, "mean |eZ| {mean_z}");
    }

    #[test]
    fn more_than_four_points() {
        let rig = CameraRig::canon_rebel_xs();
        let obj: Vec<[f64; 3]> = (0..12).map(|i| [(i % 4) as f64 * 20.0, (i / 4) as f64 * 15.0, 0.0]).collect();
        let pose = Pose6D::new(-30.0, 25.0, 700.0, -20.0, 30.0, -120.0);
        let img = project_all(&rig, &pose, &obj);
        let sol = planar_pnp(&img, &obj, &rig).unwrap();
        let e = crate::bench::pose_error(&sol.pose, &pose);
        assert!(e.iter().all(|v| v.abs() < 1e-6), "{e:?}");
    }

    #[test]
    fn rejects_bad_input() {
        let rig = CameraRig::logitech_c270();
        let obj = square(50.0);
        let img = project_all(&rig, &Pose6D::new(0.0, 0.0, 800.0, 0.0, 0.0, 0.0), &obj);
        assert!(matches!(planar_pnp(&img[..3], &obj[..3], &rig), Err(Error::Input(_))));
        let line: Vec<[f64; 3]> = (0..4).map(|i| [i as f64, 2.0 * i as f64, 0.0]).collect();
        assert!(matches!(planar_pnp(&img, &line, &rig), Err(Error::Estimation(_))));
        let off_plane = vec![[0.0, 0.0, 1.0]; 4];
        assert!(matches!(planar_pnp(&img, &off_plane, &rig), Err(Error::Input(_))));
    }

    #[test]
    fn homography_maps_points() {
        let src: Vec<Vector2<f64>> = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.3, 0.6]]
            .into_iter()
            .map(Vector2::from)
            .collect();
        let truth = Matrix3::new(1.2, 0.1, 3.0, -0.2, 0.9, -1.0, 0.01, 0.02, 1.0);
        let dst: Vec<Vector2<f64>> = src
            .iter()
            .map(|p| {
                let q = truth * Vector3::new(p.x, p.y, 1.0);
                Vector2::new(q.x / q.z, q.y / q.z)
            })
            .collect();
        let h = homography(&src, &dst).unwrap();
        assert!((h - truth).amax() < 1e-10);
    }

    proptest::proptest! {
        #[test]
        fn recovers_pose_from_exact_corners(
            fx in -0.2f64..0.2, fy in -0.15f64..0.15, z in 500.0f64..1500.0,
            roll in -45.0f64..45.0, pitch in -45.0f64..45.0, yaw in -180.0f64..180.0,
        ) {
            let rig = CameraRig::logitech_c270();
            let obj = square(50.0);
            let pose = Pose6D::new(fx * z, fy * z, z, roll, pitch, yaw);
            let sol = planar_pnp(&project_all(&rig, &pose, &obj), &obj, &rig).unwrap();
            let e = crate::bench::pose_error(&sol.pose, &pose);
            proptest::prop_assert!(e.iter().all(|v| v.abs() < 1e-6), "{:?}", e);
        }
    }
}
