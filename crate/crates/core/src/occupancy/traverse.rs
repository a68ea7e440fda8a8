use alloc::vec::Vec;

use crate::geometry::Vector3;

/// Incremental grid walk from `start` to `end` in voxel coordinates (unit
/// voxels, voxel `k` covers `[k, k+1)` on each axis).
///
/// The walk visits exactly the voxels the segment passes through, moving one
/// face-adjacent step at a time, and always ends in the voxel containing
/// `end`. The number of steps is the Manhattan distance between the start and
/// end voxels.
pub struct VoxelWalk {
    current: [i64; 3],
    step: [i64; 3],
    remaining: [u64; 3],
    t_max: [f64; 3],
    t_delta: [f64; 3],
}

impl VoxelWalk {
    pub fn new(start: &Vector3, end: &Vector3) -> Self {
        let cell = |v: f64| libm::floor(v) as i64;
        let current = [cell(start.x), cell(start.y), cell(start.z)];
        let last = [cell(end.x), cell(end.y), cell(end.z)];
        let d = end - start;
        let mut step = [0; 3];
        let mut remaining = [0; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            remaining[a] = last[a].abs_diff(current[a]);
            if remaining[a] == 0 {
                continue;
            }
            // remaining > 0 implies d[a] != 0.
            if d[a] > 0.0 {
                step[a] = 1;
                t_max[a] = ((current[a] + 1) as f64 - start[a]) / d[a];
            } else {
                step[a] = -1;
                t_max[a] = (current[a] as f64 - start[a]) / d[a];
            }
            t_delta[a] = 1.0 / libm::fabs(d[a]);
        }
        Self { current, step, remaining, t_max, t_delta }
    }

    pub fn current(&self) -> [i64; 3] {
        self.current
    }
}

impl Iterator for VoxelWalk {
    type Item = [i64; 3];

    fn next(&mut self) -> Option<[i64; 3]> {
        let mut axis = None;
        let mut best = f64::INFINITY;
        for a in 0..3 {
            if self.remaining[a] > 0 && (axis.is_none() || self.t_max[a] < best) {
                axis = Some(a);
                best = self.t_max[a];
            }
        }
        let a = axis?;
        self.current[a] += self.step[a];
        self.remaining[a] -= 1;
        self.t_max[a] += self.t_delta[a];
        Some(self.current)
    }
}

/// All voxels from `start` to `end`, inclusive, in visiting order.
pub fn traverse(start: &Vector3, end: &Vector3) -> Vec<[i64; 3]> {
    let mut walk = VoxelWalk::new(start, end);
    let mut out = alloc::vec![walk.current()];
    out.extend(&mut walk);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_in_plane() {
        let v = traverse(&Vector3::new(0.5, 0.2, 0.5), &Vector3::new(2.5, 1.2, 0.5));
        // x crosses at t = 0.25 and 0.75, y at t = 0.8.
        assert_eq!(v, alloc::vec![[0, 0, 0], [1, 0, 0], [2, 0, 0], [2, 1, 0]]);
    }

    #[test]
    fn negative_direction() {
        let v = traverse(&Vector3::new(0.5, 0.5, 0.5), &Vector3::new(-1.5, 0.5, 0.5));
        assert_eq!(v, alloc::vec![[0, 0, 0], [-1, 0, 0], [-2, 0, 0]]);
    }

    #[test]
    fn same_voxel() {
        let v = traverse(&Vector3::new(0.1, 0.1, 0.1), &Vector3::new(0.9, 0.9, 0.9));
        assert_eq!(v, alloc::vec![[0, 0, 0]]);
    }
}
