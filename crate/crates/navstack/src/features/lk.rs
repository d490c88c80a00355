//! Iterative pyramidal Lucas-Kanade point tracking.
//!
//! Spatial gradients come from central differences of bilinearly sampled
//! template intensities; samples clamp at image borders. The structure
//! tensor is built once per level from the template window, then the flow
//! update `d += G^-1 b` iterates against the target image, coarse to fine,
//! doubling the flow estimate between levels.

use super::{FeatureError, ImagePyramid};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LkParams {
    /// Half window size; the full window is (2*window_half + 1)^2.
    pub window_half: usize,
    /// Iteration cap per pyramid level.
    pub max_iters: usize,
    /// Convergence threshold on the update norm, in pixels.
    pub eps: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        Self {
            window_half: 10,
            max_iters: 30,
            eps: 0.01,
        }
    }
}

/// Per-point tracking outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LkStatus {
    TrackedOk,
    /// Structure tensor rank-deficient: min eigenvalue below 1e-4 x window area.
    LostLowTexture,
    /// Iterations exhausted at level 0 with an update still >= 1 px.
    LostDiverged,
    /// The warped window center left the image.
    LostOutOfBounds,
}

const MIN_EIG_FACTOR: f64 = 1e-4;
const DIVERGED_UPDATE: f64 = 1.0;

/// Tracks `points` from `prev` to `next`. Both pyramids must share the same
/// level structure. Returns one (position, status) pair per input point; the
/// position is meaningful only for `TrackedOk`.
pub fn lk_track(
    prev: &ImagePyramid,
    next: &ImagePyramid,
    points: &[Vec2],
    params: &LkParams,
) -> Result<Vec<(Vec2, LkStatus)>, FeatureError> {
    if !prev.same_structure(next) {
        return Err(FeatureError::PyramidMismatch);
    }
    let wh = params.window_half as i64;
    let side = (2 * params.window_half + 1) as usize;
    let area = (side * side) as f64;
    let min_eig_threshold = MIN_EIG_FACTOR * area;

    // Scratch buffers shared across points.
    let mut template = vec![0.0f64; side * side];
    let mut grad_x = vec![0.0f64; side * side];
    let mut grad_y = vec![0.0f64; side * side];

    let mut out = Vec::with_capacity(points.len());
    'points: for &p in points {
        let top = prev.num_levels() - 1;
        // Flow estimate in the coordinates of the current level.
        let mut flow = Vec2::zeros();
        let mut status = LkStatus::TrackedOk;

        for level in (0..=top).rev() {
            let scale = (1u64 << level) as f64;
            let base = Vec2::new(p.x / scale, p.y / scale);
            let prev_img = prev.level(level);
            let next_img = next.level(level);
            let (w, h) = (prev_img.width() as f64, prev_img.height() as f64);

            // Template and gradients around the (fixed) source point.
            let mut gxx = 0.0;
            let mut gxy = 0.0;
            let mut gyy = 0.0;
            let mut idx = 0;
            for dy in -wh..=wh {
                for dx in -wh..=wh {
                    let sx = base.x + dx as f64;
                    let sy = base.y + dy as f64;
                    template[idx] = prev_img.sample_bilinear(sx, sy);
                    let ix = (prev_img.sample_bilinear(sx + 1.0, sy)
                        - prev_img.sample_bilinear(sx - 1.0, sy))
                        / 2.0;
                    let iy = (prev_img.sample_bilinear(sx, sy + 1.0)
                        - prev_img.sample_bilinear(sx, sy - 1.0))
                        / 2.0;
                    grad_x[idx] = ix;
                    grad_y[idx] = iy;
                    gxx += ix * ix;
                    gxy += ix * iy;
                    gyy += iy * iy;
                    idx += 1;
                }
            }

            // Smaller eigenvalue of the 2x2 structure tensor.
            let trace_half = (gxx + gyy) / 2.0;
            let det = gxx * gyy - gxy * gxy;
            let min_eig = trace_half - (trace_half * trace_half - det).max(0.0).sqrt();
            if min_eig < min_eig_threshold {
                out.push((p, LkStatus::LostLowTexture));
                continue 'points;
            }
            let inv_det = 1.0 / det;

            let mut d = Vec2::zeros();
            let mut last_update = f64::INFINITY;
            let mut iters = 0;
            while iters < params.max_iters {
                iters += 1;
                let cur = base + flow + d;
                if cur.x < 0.0 || cur.x > w - 1.0 || cur.y < 0.0 || cur.y > h - 1.0 {
                    out.push((p, LkStatus::LostOutOfBounds));
                    continue 'points;
                }
                let mut bx = 0.0;
                let mut by = 0.0;
                let mut idx = 0;
                for dy in -wh..=wh {
                    for dx in -wh..=wh {
                        let diff = template[idx]
                            - next_img.sample_bilinear(cur.x + dx as f64, cur.y + dy as f64);
                        bx += diff * grad_x[idx];
                        by += diff * grad_y[idx];
                        idx += 1;
                    }
                }
                // d += G^-1 b
                let ux = (gyy * bx - gxy * by) * inv_det;
                let uy = (gxx * by - gxy * bx) * inv_det;
                d.x += ux;
                d.y += uy;
                last_update = (ux * ux + uy * uy).sqrt();
                if last_update < params.eps {
                    break;
                }
            }
            if level == 0 && iters == params.max_iters && last_update >= DIVERGED_UPDATE {
                status = LkStatus::LostDiverged;
            }

            flow += d;
            if level > 0 {
                flow *= 2.0;
            }
        }

        let final_pos = p + flow;
        if status == LkStatus::TrackedOk {
            let l0 = prev.level(0);
            if final_pos.x < 0.0
                || final_pos.x > l0.width() as f64 - 1.0
                || final_pos.y < 0.0
                || final_pos.y > l0.height() as f64 - 1.0
            {
                status = LkStatus::LostOutOfBounds;
            }
        }
        out.push((final_pos, status));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_pyramid, GrayImage};

    fn textured(w: usize, h: usize, seed: u64) -> GrayImage {
        // Smooth random texture: low-frequency cosine mix plus hashed noise,
        // differentiable enough for gradient-based tracking.
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let fx = x as f64;
                let fy = y as f64;
                let base = 90.0
                    + 60.0 * ((fx * 0.31).sin() * (fy * 0.23).cos())
                    + 40.0 * ((fx * 0.11 + fy * 0.17).sin());
                let n = crate::rng::hash01(seed, x as i64, y as i64, 0x17) * 25.0;
                data.push((base + n).clamp(0.0, 255.0) as u8);
            }
        }
        GrayImage::new(w, h, data).unwrap()
    }

    fn shifted(img: &GrayImage, dx: i64, dy: i64) -> GrayImage {
        let mut out = GrayImage::filled(img.width(), img.height(), 0);
        for y in 0..img.height() {
            for x in 0..img.width() {
                out.set(x, y, img.get_clamped(x as i64 - dx, y as i64 - dy));
            }
        }
        out
    }

    #[test]
    fn identical_frames_track_with_zero_flow() {
        let img = textured(64, 64, 1);
        let pyr = build_pyramid(&img, 3).unwrap();
        let points: Vec<Vec2> = (2..6)
            .flat_map(|i| (2..6).map(move |j| Vec2::new(i as f64 * 10.0, j as f64 * 10.0)))
            .collect();
        let res = lk_track(&pyr, &pyr, &points, &LkParams::default()).unwrap();
        for (p, (q, s)) in points.iter().zip(&res) {
            assert_eq!(*s, LkStatus::TrackedOk);
            assert!((q - p).norm() < 1e-3, "{p:?} -> {q:?}");
        }
    }

    #[test]
    fn integer_shift_is_recovered() {
        let img = textured(96, 80, 2);
        let next = shifted(&img, 3, -2);
        let p0 = build_pyramid(&img, 3).unwrap();
        let p1 = build_pyramid(&next, 3).unwrap();
        let points: Vec<Vec2> = (0..6)
            .flat_map(|i| (0..5).map(move |j| Vec2::new(20.0 + i as f64 * 10.0, 18.0 + j as f64 * 10.0)))
            .collect();
        let res = lk_track(&p0, &p1, &points, &LkParams::default()).unwrap();
        let mut ok = 0;
        for (p, (q, s)) in points.iter().zip(&res) {
            if *s == LkStatus::TrackedOk {
                let flow = q - p;
                if (flow - Vec2::new(3.0, -2.0)).norm() < 0.1 {
                    ok += 1;
                }
            }
        }
        assert!(ok >= points.len() * 95 / 100, "{ok}/{}", points.len());
    }

    #[test]
    fn flat_region_reports_low_texture() {
        let img = GrayImage::filled(64, 64, 50);
        let pyr = build_pyramid(&img, 2).unwrap();
        let res = lk_track(&pyr, &pyr, &[Vec2::new(32.0, 32.0)], &LkParams::default()).unwrap();
        assert_eq!(res[0].1, LkStatus::LostLowTexture);
    }

    #[test]
    fn mismatched_pyramids_error() {
        let a = build_pyramid(&textured(64, 64, 3), 3).unwrap();
        let b = build_pyramid(&textured(64, 64, 3), 2).unwrap();
        assert_eq!(
            lk_track(&a, &b, &[], &LkParams::default()),
            Err(FeatureError::PyramidMismatch)
        );
    }

    #[test]
    fn border_point_with_no_coarse_footprint_is_out_of_bounds() {
        // x = 63 maps to 15.75 on the 16-wide top level, past its last
        // column, so the warped center check fires before any iteration.
        let img = textured(64, 64, 4);
        let pyr = build_pyramid(&img, 3).unwrap();
        let res = lk_track(&pyr, &pyr, &[Vec2::new(63.0, 32.0)], &LkParams::default()).unwrap();
        assert_eq!(res[0].1, LkStatus::LostOutOfBounds);
    }
}
