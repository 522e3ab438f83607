//! Covariance construction, screen-space projection, and the ray–ellipsoid
//! intersection that produces the surface parameterization direction.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::scene::{Camera, EllipsoidScaleMode, TexturedGaussian};

/// Splats with camera-frame depth at or below this are culled.
pub const NEAR_PLANE: f64 = 0.01;

/// Low-pass dilation added to both diagonal entries of the projected
/// covariance.
pub const LOW_PASS_DILATION: f64 = 0.3;

/// World-space covariance `R(q) * diag(s)^2 * R(q)^T`, symmetrized.
pub fn covariance_from(
    rotation: &nalgebra::UnitQuaternion<f64>,
    scale: &Vector3<f64>,
) -> Matrix3<f64> {
    let r = rotation.to_rotation_matrix();
    let d = Matrix3::from_diagonal(&scale.map(|s| s * s));
    let cov = r * d * r.transpose();
    0.5 * (cov + cov.transpose())
}

/// Screen-space projection of one splat.
#[derive(Debug, Clone)]
pub struct ProjectedCovariance {
    pub cov2: Matrix2<f64>,
    pub depth: f64,
    pub center: Vector2<f64>,
}

/// Projects a world covariance through the affine pinhole approximation:
/// `cov2 = J W cov W^T J^T` with the low-pass dilation added to the
/// diagonal. Returns `None` when the point is culled by the near plane.
pub fn project_covariance(
    cov: &Matrix3<f64>,
    position: &Vector3<f64>,
    cam: &Camera,
) -> Option<ProjectedCovariance> {
    let p = cam.to_camera(position);
    if p.z <= NEAR_PLANE {
        return None;
    }
    let (x, y, z) = (p.x, p.y, p.z);
    let inv_z = 1.0 / z;
    let jac = nalgebra::Matrix2x3::new(
        cam.fx * inv_z,
        0.0,
        -cam.fx * x * inv_z * inv_z,
        0.0,
        cam.fy * inv_z,
        -cam.fy * y * inv_z * inv_z,
    );
    let jw = jac * cam.rotation;
    let mut cov2 = jw * cov * jw.transpose();
    cov2[(0, 0)] += LOW_PASS_DILATION;
    cov2[(1, 1)] += LOW_PASS_DILATION;
    // Exact symmetry keeps the conic well formed downstream.
    let off = 0.5 * (cov2[(0, 1)] + cov2[(1, 0)]);
    cov2[(0, 1)] = off;
    cov2[(1, 0)] = off;
    Some(ProjectedCovariance {
        cov2,
        depth: z,
        center: Vector2::new(cam.fx * x * inv_z + cam.cx, cam.fy * y * inv_z + cam.cy),
    })
}

/// A world-space ray.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub dir: Vector3<f64>,
}

/// Ray through an arbitrary (fractional) pixel position.
pub fn ray_through(cam: &Camera, x: f64, y: f64) -> Ray {
    let d_cam = Vector3::new((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
    let dir = (cam.rotation.transpose() * d_cam).normalize();
    Ray {
        origin: cam.center(),
        dir,
    }
}

/// Ray through the center of pixel `(px, py)`.
///
/// Panics if the pixel is outside the image.
pub fn pixel_ray(cam: &Camera, px: usize, py: usize) -> Ray {
    assert!(
        px < cam.width && py < cam.height,
        "contract violation: pixel ({px}, {py}) outside {}x{} image",
        cam.width,
        cam.height
    );
    ray_through(cam, px as f64 + 0.5, py as f64 + 0.5)
}

/// Both roots of `a t^2 + b t + c = 0`, ascending, using the numerically
/// robust form `q = -(b + sign(b) sqrt(disc)) / 2`, roots `q/a` and `c/q`.
/// `None` when the discriminant is negative.
pub fn solve_quadratic(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sqrt_disc = disc.sqrt();
    let q = if b >= 0.0 {
        -0.5 * (b + sqrt_disc)
    } else {
        -0.5 * (b - sqrt_disc)
    };
    let (r0, r1) = if q != 0.0 {
        (q / a, c / q)
    } else {
        // b == 0 and c == 0 (or disc == 0 with b == 0): double root at 0.
        (0.0, 0.0)
    };
    Some(if r0 <= r1 { (r0, r1) } else { (r1, r0) })
}

/// Surface parameterization direction for one ray against one splat.
#[derive(Debug, Clone, Copy)]
pub struct SurfacePoint {
    /// Unit direction indexing the surface texture.
    pub dir: Vector3<f64>,
    /// False when the ray misses the ellipsoid and the closest-approach
    /// fallback was used.
    pub hit: bool,
}

/// Core intersection in the splat's scaled local frame, where the ellipsoid
/// is the unit sphere. `origin` and `dir` are the local ray divided
/// per-axis by the semi-axes (`dir` need not be unit length here).
///
/// On a miss the direction is the scaled-space point of closest approach to
/// the center, normalized — the continuous extension of the tangency limit.
pub fn intersect_scaled(origin: &Vector3<f64>, dir: &Vector3<f64>) -> SurfacePoint {
    let a = dir.norm_squared();
    let b = 2.0 * origin.dot(dir);
    let c = origin.norm_squared() - 1.0;
    match solve_quadratic(a, b, c) {
        Some((t, _)) => SurfacePoint {
            dir: origin + dir * t,
            hit: true,
        },
        None => {
            let t = -b / (2.0 * a);
            let closest = origin + dir * t;
            SurfacePoint {
                dir: closest.normalize(),
                hit: false,
            }
        }
    }
}

/// Intersects a world-space ray with the splat's surface ellipsoid and
/// returns the texture direction `n`.
///
/// The ray is expressed in the splat's local frame, axes are scaled per
/// `mode`, and the nearer quadratic root is taken; the intersection point
/// divided by the semi-axes lies on the unit sphere.
pub fn intersect_ray_ellipsoid(
    g: &TexturedGaussian,
    ray_origin: &Vector3<f64>,
    ray_dir: &Vector3<f64>,
    mode: EllipsoidScaleMode,
) -> SurfacePoint {
    let to_local = g.rotation.to_rotation_matrix().transpose();
    let axes = mode.semi_axes(&g.scale);
    let o_local = to_local * (ray_origin - g.position);
    let d_local = (to_local * ray_dir).normalize();
    let o_scaled = o_local.component_div(&axes);
    let d_scaled = d_local.component_div(&axes);
    intersect_scaled(&o_scaled, &d_scaled)
}
