//! Three-state occupancy octree and the observed area built from camera rays.
//!
//! Every voxel starts `Unknown`. A ray marks the voxels it passes as `Free`,
//! and a surface ray marks its endpoint voxel `Occupied`. `Occupied` is never
//! downgraded, so the final map does not depend on ray order. The observed
//! area is the set of voxels that are not `Unknown`.

mod traverse;

pub use traverse::{traverse, VoxelWalk};

use alloc::vec;
use alloc::vec::Vec;

use crate::depth::Keyframe;
use crate::geometry::{Point3, Pose, Vector3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum VoxelState {
    Unknown = 0,
    Free = 1,
    Occupied = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointKind {
    /// A measured surface; the endpoint voxel becomes occupied.
    Surface,
    /// No return within range; the whole ray including its end is free.
    FreeProbe,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OccupancyError {
    #[error("resolution must be positive and finite, got {0}")]
    InvalidResolution(f64),
    #[error("bounds are empty or not finite")]
    InvalidBounds,
    #[error("ray origin {0:?} lies outside the map bounds")]
    OriginOutside([f64; 3]),
    #[error("ray endpoint {index} is not finite")]
    NonFiniteEndpoint { index: usize },
    #[error("invalid observed-area config: {0}")]
    InvalidConfig(&'static str),
    #[error("{keyframes} keyframes but {poses} poses")]
    LengthMismatch { keyframes: usize, poses: usize },
}

/// Rays sharing one camera center.
#[derive(Debug, Clone, PartialEq)]
pub struct RayBatch {
    pub origin: Point3,
    pub endpoints: Vec<Point3>,
    pub kinds: Vec<EndpointKind>,
}

impl RayBatch {
    pub fn new(origin: Point3) -> Self {
        Self { origin, endpoints: Vec::new(), kinds: Vec::new() }
    }

    pub fn push(&mut self, endpoint: Point3, kind: EndpointKind) {
        self.endpoints.push(endpoint);
        self.kinds.push(kind);
    }

    pub fn len(&self) -> usize {
        self.endpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.endpoints.is_empty()
    }
}

/// Membership test for the observed area.
pub trait ObservedArea {
    fn contains(&self, p: &Point3) -> bool;
}

const NONE: u32 = u32::MAX;

/// Octree over a fixed axis-aligned region. Voxel `(i, j, k)` covers
/// `min + res·[i, i+1) × …`.
#[derive(Debug, Clone)]
pub struct OccupancyOctree {
    resolution: f64,
    min: Point3,
    dims: [i64; 3],
    depth: u32,
    /// Internal nodes; at the lowest internal level children index `leaves`.
    nodes: Vec<[u32; 8]>,
    leaves: Vec<[VoxelState; 8]>,
    observed: usize,
}

impl OccupancyOctree {
    /// Creates an all-unknown map covering at least `[min, max]`.
    pub fn new(resolution: f64, min: Point3, max: Point3) -> Result<Self, OccupancyError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(OccupancyError::InvalidResolution(resolution));
        }
        let ext = max - min;
        if !(ext.x > 0.0 && ext.y > 0.0 && ext.z > 0.0) || !ext.iter().all(|v| v.is_finite()) {
            return Err(OccupancyError::InvalidBounds);
        }
        let dims = [0, 1, 2].map(|a| (libm::ceil(ext[a] / resolution) as i64).max(1));
        let largest = dims.iter().copied().max().unwrap_or(1);
        // Depth 2 at least so the root is an internal node.
        let mut depth = 2;
        while (1i64 << depth) < largest {
            depth += 1;
        }
        Ok(Self { resolution, min, dims, depth, nodes: vec![[NONE; 8]], leaves: Vec::new(), observed: 0 })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn min(&self) -> Point3 {
        self.min
    }

    /// Voxel counts along each axis.
    pub fn dims(&self) -> [i64; 3] {
        self.dims
    }

    /// Continuous voxel coordinates of a world point.
    #[inline]
    pub fn to_grid(&self, p: &Point3) -> Vector3 {
        (p - self.min) / self.resolution
    }

    #[inline]
    pub fn key(&self, p: &Point3) -> [i64; 3] {
        let g = self.to_grid(p);
        [libm::floor(g.x) as i64, libm::floor(g.y) as i64, libm::floor(g.z) as i64]
    }

    #[inline]
    pub fn in_bounds(&self, key: &[i64; 3]) -> bool {
        (0..3).all(|a| key[a] >= 0 && key[a] < self.dims[a])
    }

    pub fn voxel_center(&self, key: &[i64; 3]) -> Point3 {
        self.min + Vector3::new(key[0] as f64 + 0.5, key[1] as f64 + 0.5, key[2] as f64 + 0.5) * self.resolution
    }

    #[inline]
    fn child_slot(key: &[i64; 3], level: u32) -> usize {
        let bit = |v: i64| ((v >> level) & 1) as usize;
        bit(key[0]) | (bit(key[1]) << 1) | (bit(key[2]) << 2)
    }

    pub fn state(&self, key: &[i64; 3]) -> VoxelState {
        if !self.in_bounds(key) {
            return VoxelState::Unknown;
        }
        let mut node = 0usize;
        for level in (1..self.depth).rev() {
            let next = self.nodes[node][Self::child_slot(key, level)];
            if next == NONE {
                return VoxelState::Unknown;
            }
            if level == 1 {
                return self.leaves[next as usize][Self::child_slot(key, 0)];
            }
            node = next as usize;
        }
        VoxelState::Unknown
    }

    pub fn state_at(&self, p: &Point3) -> VoxelState {
        self.state(&self.key(p))
    }

    /// Raises the state of an in-bounds voxel to at least `state`.
    pub fn mark(&mut self, key: &[i64; 3], state: VoxelState) {
        if !self.in_bounds(key) || state == VoxelState::Unknown {
            return;
        }
        let mut node = 0usize;
        for level in (1..self.depth).rev() {
            let slot = Self::child_slot(key, level);
            let mut next = self.nodes[node][slot];
            if next == NONE {
                next = if level == 1 {
                    self.leaves.push([VoxelState::Unknown; 8]);
                    (self.leaves.len() - 1) as u32
                } else {
                    self.nodes.push([NONE; 8]);
                    (self.nodes.len() - 1) as u32
                };
                self.nodes[node][slot] = next;
            }
            if level == 1 {
                let cell = &mut self.leaves[next as usize][Self::child_slot(key, 0)];
                if *cell == VoxelState::Unknown {
                    self.observed += 1;
                }
                if state > *cell {
                    *cell = state;
                }
                return;
            }
            node = next as usize;
        }
    }

    /// Number of voxels that are not unknown.
    pub fn observed_count(&self) -> usize {
        self.observed
    }

    /// All non-unknown voxels in ascending key order.
    pub fn voxels(&self) -> Vec<([i64; 3], VoxelState)> {
        let mut out = Vec::with_capacity(self.observed);
        self.collect(0, self.depth - 1, [0; 3], &mut out);
        out.sort_unstable_by_key(|(k, _)| (k[0], k[1], k[2]));
        out
    }

    fn collect(&self, node: usize, level: u32, base: [i64; 3], out: &mut Vec<([i64; 3], VoxelState)>) {
        for slot in 0..8 {
            let child = self.nodes[node][slot];
            if child == NONE {
                continue;
            }
            let off = |b: usize| ((slot >> b) & 1) as i64;
            let key = [base[0] | (off(0) << level), base[1] | (off(1) << level), base[2] | (off(2) << level)];
            if level == 1 {
                for (ls, &s) in self.leaves[child as usize].iter().enumerate() {
                    if s != VoxelState::Unknown {
                        let lo = |b: usize| ((ls >> b) & 1) as i64;
                        out.push(([key[0] | lo(0), key[1] | lo(1), key[2] | lo(2)], s));
                    }
                }
            } else {
                self.collect(child as usize, level - 1, key, out);
            }
        }
    }

    /// Casts every ray of `batch`. Rays are clipped where they leave the
    /// bounds; a clipped surface ray marks nothing occupied.
    pub fn cast_rays(&mut self, batch: &RayBatch) -> Result<(), OccupancyError> {
        let o = self.key(&batch.origin);
        if !batch.origin.iter().all(|v| v.is_finite()) || !self.in_bounds(&o) {
            return Err(OccupancyError::OriginOutside([batch.origin.x, batch.origin.y, batch.origin.z]));
        }
        if let Some(index) = batch.endpoints.iter().position(|e| !e.iter().all(|v| v.is_finite())) {
            return Err(OccupancyError::NonFiniteEndpoint { index });
        }
        let start = self.to_grid(&batch.origin);
        for (end, kind) in batch.endpoints.iter().zip(&batch.kinds) {
            self.cast(&start, &self.to_grid(end), *kind);
        }
        Ok(())
    }

    fn cast(&mut self, start: &Vector3, end: &Vector3, kind: EndpointKind) {
        let mut walk = VoxelWalk::new(start, end);
        let mut current = walk.current();
        while let Some(next) = walk.next() {
            if !self.in_bounds(&next) {
                // Leaving the convex bounds: everything so far is free.
                self.mark(&current, VoxelState::Free);
                return;
            }
            self.mark(&current, VoxelState::Free);
            current = next;
        }
        let end_state = match kind {
            EndpointKind::Surface => VoxelState::Occupied,
            EndpointKind::FreeProbe => VoxelState::Free,
        };
        self.mark(&current, end_state);
    }
}

impl ObservedArea for OccupancyOctree {
    fn contains(&self, p: &Point3) -> bool {
        self.state_at(p) != VoxelState::Unknown
    }
}

/// Observed area expressed in a frame moved by `transform`: a point `p` is
/// inside when `transform⁻¹ p` is inside the underlying map.
pub struct TransformedArea<'a, A: ObservedArea + ?Sized> {
    pub area: &'a A,
    pub transform: Pose,
}

impl<A: ObservedArea + ?Sized> ObservedArea for TransformedArea<'_, A> {
    fn contains(&self, p: &Point3) -> bool {
        self.area.contains(&self.transform.inverse_transform_point(p))
    }
}

/// Parameters for [`build_observed_area`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedAreaConfig {
    /// Octree resolution ρ_o, m.
    pub resolution: f64,
    /// Pixels at or beyond this depth are treated as having no return, m.
    pub th_d: f64,
    /// Depth of free-probe ray endpoints, m.
    pub th_f: f64,
}

impl Default for ObservedAreaConfig {
    fn default() -> Self {
        Self { resolution: 0.8, th_d: 30.0, th_f: 20.0 }
    }
}

impl ObservedAreaConfig {
    pub fn validate(&self) -> Result<(), OccupancyError> {
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(OccupancyError::InvalidResolution(self.resolution));
        }
        if !(self.th_d > 0.0) || !self.th_d.is_finite() {
            return Err(OccupancyError::InvalidConfig("th_d must be positive"));
        }
        if !(self.th_f > 0.0) || !self.th_f.is_finite() {
            return Err(OccupancyError::InvalidConfig("th_f must be positive"));
        }
        Ok(())
    }
}

/// Rays for one keyframe placed at `pose`. Pixels with depth below `th_d`
/// give surface rays; empty pixels and those at or beyond `th_d` give free
/// probes ending at depth `th_f`.
pub fn keyframe_rays(frame: &Keyframe, pose: &Pose, th_d: f64, th_f: f64) -> RayBatch {
    let k = &frame.intrinsics;
    let mut batch = RayBatch::new(Point3::from(pose.translation));
    batch.endpoints.reserve(k.width * k.height);
    batch.kinds.reserve(k.width * k.height);
    for v in 0..frame.depth.height() {
        for u in 0..frame.depth.width() {
            let ray = k.ray(u, v);
            match frame.depth.get(u, v) {
                Some(d) if d < th_d => batch.push(pose.transform_point(&Point3::from(ray * d)), EndpointKind::Surface),
                _ => batch.push(pose.transform_point(&Point3::from(ray * th_f)), EndpointKind::FreeProbe),
            }
        }
    }
    batch
}

/// Ray casts every keyframe into a fresh map covering `[min, max]`.
pub fn build_observed_area(
    keyframes: &[Keyframe],
    poses: &[Pose],
    config: &ObservedAreaConfig,
    min: Point3,
    max: Point3,
) -> Result<OccupancyOctree, OccupancyError> {
    config.validate()?;
    if keyframes.len() != poses.len() {
        return Err(OccupancyError::LengthMismatch { keyframes: keyframes.len(), poses: poses.len() });
    }
    let mut map = OccupancyOctree::new(config.resolution, min, max)?;
    for (frame, pose) in keyframes.iter().zip(poses) {
        map.cast_rays(&keyframe_rays(frame, pose, config.th_d, config.th_f))?;
    }
    Ok(map)
}
