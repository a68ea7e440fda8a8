use alloc::vec;
use alloc::vec::Vec;

use super::{reproject_depth, DepthError, DepthImage, Keyframe};
use crate::par::Executor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Projected and current depth agree when closer than this, m.
    pub depth_threshold: f64,
    /// A pixel survives when it agrees with strictly more than this many neighbours.
    pub min_successes: usize,
    /// Neighbours are keyframes with `|id - center| <= window`.
    pub window: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { depth_threshold: 0.5, min_successes: 2, window: 2 }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), DepthError> {
        if !(self.depth_threshold > 0.0) || !self.depth_threshold.is_finite() {
            return Err(DepthError::InvalidConfig("depth_threshold must be positive"));
        }
        if self.min_successes < 1 {
            return Err(DepthError::InvalidConfig("min_successes must be at least 1"));
        }
        if self.window < 1 {
            return Err(DepthError::InvalidConfig("window must be at least 1"));
        }
        Ok(())
    }
}

/// Filters the depth image of keyframe `center_id` against its neighbours in
/// `frames`.
///
/// Each neighbour is re-projected into the center frame. A pixel counts a
/// success for every neighbour whose projected depth lies within
/// `depth_threshold` of the center depth. Pixels with more than
/// `min_successes` successes take the mean of the center depth and all
/// agreeing projected depths; all others become empty.
pub fn temporal_filter(
    frames: &[Keyframe],
    center_id: u64,
    config: &FilterConfig,
) -> Result<DepthImage, DepthError> {
    config.validate()?;
    let center = frames
        .iter()
        .find(|f| f.id == center_id)
        .ok_or(DepthError::MissingCenter(center_id))?;
    let (w, h) = (center.depth.width(), center.depth.height());
    let mut count = vec![0usize; w * h];
    let mut sum = vec![0.0f64; w * h];

    for other in frames {
        if other.id == center_id || other.id.abs_diff(center_id) > config.window {
            continue;
        }
        let projected = reproject_depth(other, center)?;
        for (i, (&dp, &dc)) in projected.data().iter().zip(center.depth.data()).enumerate() {
            if dp > 0.0 && dc > 0.0 && libm::fabs(dp - dc) < config.depth_threshold {
                count[i] += 1;
                sum[i] += dp;
            }
        }
    }

    let data: Vec<f64> = center
        .depth
        .data()
        .iter()
        .enumerate()
        .map(|(i, &dc)| {
            if dc > 0.0 && count[i] > config.min_successes {
                (dc + sum[i]) / (count[i] + 1) as f64
            } else {
                DepthImage::EMPTY
            }
        })
        .collect();
    Ok(DepthImage { width: w, height: h, data })
}

/// Filters every keyframe of a trajectory, using the neighbours within the
/// configured id window.
pub fn temporal_filter_sequence(
    frames: &[Keyframe],
    config: &FilterConfig,
    exec: &Executor,
) -> Result<Vec<DepthImage>, DepthError> {
    config.validate()?;
    let results = exec.map_chunks(frames.len(), 1, |range| {
        let i = range.start;
        let id = frames[i].id;
        let lo = frames.partition_point(|f| f.id + config.window < id);
        let hi = frames.partition_point(|f| f.id <= id + config.window);
        temporal_filter(&frames[lo..hi], id, config)
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::CameraIntrinsics;
    use crate::geometry::Pose;

    fn static_window(depths: &[f64]) -> Vec<Keyframe> {
        let k = CameraIntrinsics::new(20.0, 20.0, 5.0, 5.0, 11, 11).unwrap();
        depths
            .iter()
            .enumerate()
            .map(|(i, &d)| Keyframe {
                id: i as u64,
                timestamp: i as f64 * 0.2,
                pose: Pose::identity(),
                depth: DepthImage::from_data(11, 11, vec![d; 121]).unwrap(),
                intrinsics: k,
            })
            .collect()
    }

    #[test]
    fn consensus_of_identical_values() {
        let frames = static_window(&[5.0; 5]);
        let out = temporal_filter(&frames, 2, &FilterConfig::default()).unwrap();
        assert!(out.data().iter().all(|&d| d == 5.0));
    }

    #[test]
    fn below_count_threshold_is_empty() {
        // Only frame 1 agrees with the center; the rest are 1 m off.
        let frames = static_window(&[6.0, 5.05, 5.0, 6.0, 6.0]);
        let out = temporal_filter(&frames, 2, &FilterConfig::default()).unwrap();
        assert_eq!(out.valid_count(), 0);
    }

    #[test]
    fn average_includes_center() {
        let frames = static_window(&[5.1, 5.1, 5.0, 5.1, 6.0]);
        let out = temporal_filter(&frames, 2, &FilterConfig::default()).unwrap();
        let expected = (5.0 + 3.0 * 5.1) / 4.0;
        assert!(out.data().iter().all(|&d| (d - expected).abs() < 1e-12));
    }

    #[test]
    fn missing_center() {
        let frames = static_window(&[5.0; 3]);
        assert_eq!(
            temporal_filter(&frames, 7, &FilterConfig::default()),
            Err(DepthError::MissingCenter(7))
        );
    }

    #[test]
    fn config_validation() {
        let frames = static_window(&[5.0; 3]);
        let bad = FilterConfig { min_successes: 0, ..Default::default() };
        assert!(temporal_filter(&frames, 1, &bad).is_err());
        let bad = FilterConfig { depth_threshold: -0.1, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sequence_uses_id_window() {
        let frames = static_window(&[5.0; 6]);
        let out = temporal_filter_sequence(&frames, &FilterConfig::default(), &Executor::sequential()).unwrap();
        // Frame 0 only has two neighbours (1 and 2): not more than α = 2.
        assert_eq!(out[0].valid_count(), 0);
        assert_eq!(out[1].valid_count(), 121);
        assert_eq!(out[5].valid_count(), 0);
    }
}
