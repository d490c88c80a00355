//! Track lifecycle: persistent IDs, loss marking and replenishment.

use super::{fast_detect, FastParams, FeatureError, GrayImage, LkStatus, BORDER_MARGIN};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackState {
    Active,
    Lost,
}

/// A persistently identified keypoint followed across frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub camera_index: usize,
    /// Append-only history of subpixel positions, one per tracked frame.
    pub positions: Vec<Vec2>,
    pub state: TrackState,
}

impl Track {
    pub fn latest(&self) -> Vec2 {
        *self.positions.last().expect("tracks are born with a position")
    }
}

/// Monotone ID source. `stride` lets independent per-camera sets draw from
/// disjoint ID ranges (camera k uses k, k + n, k + 2n, ...), which keeps IDs
/// globally unique without cross-camera coordination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdCounter {
    next: u64,
    stride: u64,
}

impl IdCounter {
    pub fn new(start: u64, stride: u64) -> Self {
        assert!(stride >= 1);
        Self {
            next: start,
            stride,
        }
    }

    pub fn take(&mut self) -> u64 {
        let id = self.next;
        self.next += self.stride;
        id
    }

    pub fn peek(&self) -> u64 {
        self.next
    }
}

/// All tracks of one camera stream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackSet {
    pub camera_index: usize,
    pub tracks: Vec<Track>,
}

impl TrackSet {
    pub fn new(camera_index: usize) -> Self {
        Self {
            camera_index,
            tracks: Vec::new(),
        }
    }

    pub fn active_count(&self) -> usize {
        self.tracks.iter().filter(|t| t.state == TrackState::Active).count()
    }

    pub fn active(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.state == TrackState::Active)
    }

    /// Latest positions of active tracks, in track order; pairs with the
    /// result layout expected by [`manage_tracks`].
    pub fn active_positions(&self) -> Vec<Vec2> {
        self.active().map(|t| t.latest()).collect()
    }

    /// Drops lost tracks older than the horizon to bound memory.
    pub fn prune_lost(&mut self) {
        self.tracks.retain(|t| t.state == TrackState::Active);
    }
}

/// Applies per-point tracking results to the set and replenishes from fresh
/// detections.
///
/// `lk_results` must be parallel to [`TrackSet::active_positions`] at call
/// time (one entry per active track). Tracks whose result is not
/// `TrackedOk`, or whose new position falls within the 3 px border margin,
/// are marked `Lost`; survivors get the new position appended. When fewer
/// than `target` tracks remain active, FAST corners at least
/// `min_separation` px from every active track (and from each other) are
/// promoted to new tracks with fresh IDs, strongest first. IDs are never
/// reused.
pub fn manage_tracks(
    set: &mut TrackSet,
    lk_results: Option<&[(Vec2, LkStatus)]>,
    target: usize,
    image: &GrayImage,
    detector: &FastParams,
    min_separation: f64,
    ids: &mut IdCounter,
) -> Result<(), FeatureError> {
    if let Some(results) = lk_results {
        let mut ri = 0;
        let w = image.width() as f64;
        let h = image.height() as f64;
        for track in set.tracks.iter_mut().filter(|t| t.state == TrackState::Active) {
            let (pos, status) = results[ri];
            ri += 1;
            let in_margin = pos.x >= BORDER_MARGIN
                && pos.y >= BORDER_MARGIN
                && pos.x <= w - 1.0 - BORDER_MARGIN
                && pos.y <= h - 1.0 - BORDER_MARGIN;
            if status == LkStatus::TrackedOk && in_margin {
                track.positions.push(pos);
            } else {
                track.state = TrackState::Lost;
            }
        }
        debug_assert_eq!(ri, results.len());
    }

    let active = set.active_count();
    if active >= target {
        return Ok(());
    }

    let detections = fast_detect(image, detector)?;
    let mut anchors: Vec<Vec2> = set.active().map(|t| t.latest()).collect();
    let min_sep2 = min_separation * min_separation;
    let mut spawned = 0;
    for kp in detections {
        if active + spawned >= target {
            break;
        }
        let clear = anchors
            .iter()
            .all(|a| (kp.position - a).norm_squared() >= min_sep2);
        if !clear {
            continue;
        }
        set.tracks.push(Track {
            id: ids.take(),
            camera_index: set.camera_index,
            positions: vec![kp.position],
            state: TrackState::Active,
        });
        anchors.push(kp.position);
        spawned += 1;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corner_rich_image() -> GrayImage {
        // A grid of bright 4x4 blocks on dark background: plenty of corners.
        let mut img = GrayImage::filled(128, 128, 10);
        for by in 0..12 {
            for bx in 0..12 {
                let ox = 8 + bx * 10;
                let oy = 8 + by * 10;
                for y in 0..4 {
                    for x in 0..4 {
                        img.set(ox + x, oy + y, 220);
                    }
                }
            }
        }
        img
    }

    #[test]
    fn cold_start_spawns_target_tracks_with_sequential_ids() {
        let img = corner_rich_image();
        let mut set = TrackSet::new(0);
        let mut ids = IdCounter::new(0, 1);
        manage_tracks(&mut set, None, 50, &img, &FastParams::default(), 6.0, &mut ids).unwrap();
        assert_eq!(set.active_count(), 50);
        let got: Vec<u64> = set.tracks.iter().map(|t| t.id).collect();
        assert_eq!(got, (0..50).collect::<Vec<u64>>());
    }

    #[test]
    fn full_set_is_left_untouched() {
        let img = corner_rich_image();
        let mut set = TrackSet::new(0);
        let mut ids = IdCounter::new(0, 1);
        manage_tracks(&mut set, None, 30, &img, &FastParams::default(), 6.0, &mut ids).unwrap();
        let before = set.clone();
        let results: Vec<(Vec2, LkStatus)> = set
            .active_positions()
            .iter()
            .map(|p| (*p, LkStatus::TrackedOk))
            .collect();
        manage_tracks(
            &mut set,
            Some(&results),
            30,
            &img,
            &FastParams::default(),
            6.0,
            &mut ids,
        )
        .unwrap();
        assert_eq!(set.active_count(), 30);
        for (a, b) in before.tracks.iter().zip(&set.tracks) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.latest(), b.latest());
            assert_eq!(b.positions.len(), 2);
        }
    }

    #[test]
    fn losses_are_replenished_with_fresh_separated_ids() {
        let img = corner_rich_image();
        let mut set = TrackSet::new(0);
        let mut ids = IdCounter::new(0, 1);
        let min_sep = 6.0;
        manage_tracks(&mut set, None, 50, &img, &FastParams::default(), min_sep, &mut ids).unwrap();

        // Lose 10 of the 50.
        let results: Vec<(Vec2, LkStatus)> = set
            .active_positions()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if i % 5 == 0 {
                    (*p, LkStatus::LostDiverged)
                } else {
                    (*p, LkStatus::TrackedOk)
                }
            })
            .collect();
        manage_tracks(
            &mut set,
            Some(&results),
            50,
            &img,
            &FastParams::default(),
            min_sep,
            &mut ids,
        )
        .unwrap();
        assert_eq!(set.active_count(), 50);

        let fresh: Vec<u64> = set.tracks.iter().filter(|t| t.id >= 50).map(|t| t.id).collect();
        assert_eq!(fresh.len(), 10);
        assert_eq!(fresh, (50..60).collect::<Vec<u64>>());

        // No resurrected IDs: lost tracks stay lost.
        let lost: Vec<u64> = set
            .tracks
            .iter()
            .filter(|t| t.state == TrackState::Lost)
            .map(|t| t.id)
            .collect();
        assert_eq!(lost.len(), 10);
        for t in set.active() {
            assert!(!lost.contains(&t.id));
        }

        // Pairwise separation among active tracks.
        let pos = set.active_positions();
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                assert!(
                    (pos[i] - pos[j]).norm() >= min_sep,
                    "tracks {i} and {j} too close"
                );
            }
        }
    }

    #[test]
    fn out_of_margin_result_marks_lost() {
        let img = corner_rich_image();
        let mut set = TrackSet::new(0);
        let mut ids = IdCounter::new(0, 1);
        manage_tracks(&mut set, None, 1, &img, &FastParams::default(), 6.0, &mut ids).unwrap();
        let results = vec![(Vec2::new(1.0, 64.0), LkStatus::TrackedOk)];
        manage_tracks(&mut set, Some(&results), 0, &img, &FastParams::default(), 6.0, &mut ids)
            .unwrap();
        assert_eq!(set.active_count(), 0);
    }

    #[test]
    fn strided_counters_stay_disjoint() {
        let mut a = IdCounter::new(0, 4);
        let mut b = IdCounter::new(1, 4);
        let ids: Vec<u64> = (0..4).flat_map(|_| [a.take(), b.take()]).collect();
        assert_eq!(ids, vec![0, 1, 4, 5, 8, 9, 12, 13]);
    }
}
