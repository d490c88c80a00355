//! FAST corner detection by the accelerated segment test.

use super::{FeatureError, GrayImage, Keypoint};
use crate::geometry::Vec2;

/// The 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock.
pub const FAST_CIRCLE: [(i64, i64); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastParams {
    /// Intensity contrast a circle pixel must clear, >= 1.
    pub threshold: u8,
    /// Required contiguous arc length, in [9, 12].
    pub arc_length: usize,
    /// Non-maximum suppression radius in pixels.
    pub nms_radius: f64,
}

impl Default for FastParams {
    fn default() -> Self {
        Self {
            threshold: 20,
            arc_length: 9,
            nms_radius: 5.0,
        }
    }
}

/// Detects corners: a pixel qualifies when at least `arc_length` contiguous
/// circle pixels are all brighter than center + threshold or all darker than
/// center - threshold. The score is the sum of absolute center differences
/// over the maximal qualifying arc. Candidates then pass greedy non-maximum
/// suppression (descending score, ties by y then x) within `nms_radius`, and
/// the survivors come back sorted by descending score.
pub fn fast_detect(image: &GrayImage, params: &FastParams) -> Result<Vec<Keypoint>, FeatureError> {
    image.check_min_size()?;
    if !(9..=12).contains(&params.arc_length) {
        return Err(FeatureError::BadArcLength(params.arc_length));
    }
    if params.threshold == 0 {
        return Err(FeatureError::BadThreshold);
    }

    let mut candidates = detect_candidates(image, params.threshold, params.arc_length);
    // Greedy NMS wants descending score with a deterministic tie order.
    candidates.sort_by(|a, b| {
        b.2.cmp(&a.2)
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.0.cmp(&b.0))
    });

    let r2 = params.nms_radius * params.nms_radius;
    let mut kept: Vec<(usize, usize, u32)> = Vec::new();
    'next: for c in candidates {
        for k in &kept {
            let dx = c.0 as f64 - k.0 as f64;
            let dy = c.1 as f64 - k.1 as f64;
            if dx * dx + dy * dy <= r2 {
                continue 'next;
            }
        }
        kept.push(c);
    }

    Ok(kept
        .into_iter()
        .map(|(x, y, score)| Keypoint {
            position: Vec2::new(x as f64, y as f64),
            score: score as f64,
        })
        .collect())
}

/// Segment test over every non-border pixel; returns (x, y, score) triples in
/// row-major order. Exposed to the crate so tests can compare the raw
/// candidate set against an oracle before suppression.
pub(crate) fn detect_candidates(image: &GrayImage, threshold: u8, arc_length: usize) -> Vec<(usize, usize, u32)> {
    let w = image.width();
    let h = image.height();
    let mut out = Vec::new();
    let mut circle = [0i16; 16];
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let center = image.get(x, y) as i16;
            let hi = center + threshold as i16;
            let lo = center - threshold as i16;

            // Cheap cardinal-direction reject before reading the full circle:
            // any contiguous arc of length >= 9 covers two adjacent cardinals.
            let p0 = image.get(x, y - 3) as i16;
            let p4 = image.get(x + 3, y) as i16;
            let p8 = image.get(x, y + 3) as i16;
            let p12 = image.get(x - 3, y) as i16;
            let bright_pair = (p0 > hi && p4 > hi)
                || (p4 > hi && p8 > hi)
                || (p8 > hi && p12 > hi)
                || (p12 > hi && p0 > hi);
            let dark_pair = (p0 < lo && p4 < lo)
                || (p4 < lo && p8 < lo)
                || (p8 < lo && p12 < lo)
                || (p12 < lo && p0 < lo);
            if !bright_pair && !dark_pair {
                continue;
            }

            for (i, (dx, dy)) in FAST_CIRCLE.iter().enumerate() {
                circle[i] = image.get((x as i64 + dx) as usize, (y as i64 + dy) as usize) as i16;
            }

            if let Some(score) = segment_score(&circle, center, threshold as i16, arc_length) {
                out.push((x, y, score));
            }
        }
    }
    out
}

/// Score of the maximal qualifying arc, or None when the pixel is no corner.
fn segment_score(circle: &[i16; 16], center: i16, threshold: i16, arc_length: usize) -> Option<u32> {
    let hi = center + threshold;
    let lo = center - threshold;
    let bright = best_run(circle, |p| p > hi);
    if let Some((start, len)) = bright {
        if len >= arc_length {
            return Some(run_score(circle, center, start, len));
        }
    }
    let dark = best_run(circle, |p| p < lo);
    if let Some((start, len)) = dark {
        if len >= arc_length {
            return Some(run_score(circle, center, start, len));
        }
    }
    None
}

/// Longest circular run of pixels satisfying `pred`, as (start, length).
/// Length 16 means the whole circle qualifies.
fn best_run(circle: &[i16; 16], pred: impl Fn(i16) -> bool) -> Option<(usize, usize)> {
    let mask: u32 = circle
        .iter()
        .enumerate()
        .map(|(i, &p)| (pred(p) as u32) << i)
        .sum();
    if mask == 0 {
        return None;
    }
    if mask == 0xffff {
        return Some((0, 16));
    }
    let mut best_len = 0usize;
    let mut best_start = 0usize;
    let mut i = 0usize;
    while i < 16 {
        if mask & (1 << i) != 0 && mask & (1 << ((i + 15) % 16)) == 0 {
            // Run starts here.
            let mut len = 0;
            while len < 16 && mask & (1 << ((i + len) % 16)) != 0 {
                len += 1;
            }
            if len > best_len {
                best_len = len;
                best_start = i;
            }
        }
        i += 1;
    }
    Some((best_start, best_len))
}

fn run_score(circle: &[i16; 16], center: i16, start: usize, len: usize) -> u32 {
    (0..len)
        .map(|k| (circle[(start + k) % 16] - center).unsigned_abs() as u32)
        .sum()
}
