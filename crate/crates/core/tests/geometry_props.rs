use std::collections::HashSet;

use cloudiff_core::geometry::{so3, transform_cloud, voxel_downsample, voxel_key, nearest_distance};
use cloudiff_core::{Point3, PointCloud, Pose, SpatialIndex, Vector3};
use proptest::prelude::*;

fn point(range: f64) -> impl Strategy<Value = Point3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn cloud(max: usize) -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec(point(20.0), 1..max)
}

fn pose() -> impl Strategy<Value = Pose> {
    (point(10.0), point(3.0)).prop_map(|(t, r)| Pose::new(t.coords, so3::exp(&r.coords)))
}

fn brute_nearest(points: &[Point3], q: &Point3) -> f64 {
    points.iter().map(|p| (p - q).norm_squared()).fold(f64::INFINITY, f64::min).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kd_tree_matches_brute_force(points in cloud(2000), queries in prop::collection::vec(point(25.0), 1..50)) {
        let index = SpatialIndex::from_points(points.clone());
        for q in &queries {
            prop_assert_eq!(nearest_distance(q, &index).unwrap(), brute_nearest(&points, q));
        }
    }

    #[test]
    fn kd_tree_finds_members(points in cloud(500)) {
        let index = SpatialIndex::from_points(points.clone());
        for p in &points {
            prop_assert_eq!(nearest_distance(p, &index).unwrap(), 0.0);
        }
    }

    #[test]
    fn knn_matches_sorted_scan(points in cloud(800), q in point(25.0), k in 1usize..20) {
        let index = SpatialIndex::from_points(points.clone());
        let mut all: Vec<(usize, f64)> =
            points.iter().enumerate().map(|(i, p)| (i, (p - q).norm_squared())).collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let got = index.knn(&q, k);
        let want: Vec<f64> = all.iter().take(k).map(|x| x.1).collect();
        prop_assert_eq!(got.iter().map(|x| x.1).collect::<Vec<_>>(), want);
    }

    #[test]
    fn transform_is_rigid(points in cloud(60), pose in pose()) {
        let c = PointCloud::from_points(points, "a").unwrap();
        let t = transform_cloud(&c, &pose);
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                let before = (c.points()[i] - c.points()[j]).norm();
                let after = (t.points()[i] - t.points()[j]).norm();
                prop_assert!((before - after).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn downsample_counts_distinct_voxels(points in cloud(3000), res in 0.1f64..4.0) {
        let c = PointCloud::from_points(points.clone(), "a").unwrap();
        let out = voxel_downsample(&c, res).unwrap();
        let keys: HashSet<[i64; 3]> = points.iter().map(|p| voxel_key(p, res)).collect();
        prop_assert_eq!(out.len(), keys.len());
    }

    #[test]
    fn downsample_is_idempotent(points in cloud(3000), res in 0.1f64..4.0) {
        let c = PointCloud::from_points(points, "a").unwrap();
        let once = voxel_downsample(&c, res).unwrap();
        let twice = voxel_downsample(&once, res).unwrap();
        let k1: Vec<[i64; 3]> = once.iter().map(|p| voxel_key(p, res)).collect();
        let k2: Vec<[i64; 3]> = twice.iter().map(|p| voxel_key(p, res)).collect();
        prop_assert_eq!(k1, k2);
    }

    #[test]
    fn composition_is_associative(a in pose(), b in pose(), c in pose()) {
        let left = a.compose(&b).compose(&c);
        let right = a.compose(&b.compose(&c));
        prop_assert!((left.translation - right.translation).norm() < 1e-9);
        prop_assert!(left.rotation.angle_to(&right.rotation) < 1e-9);
    }

    #[test]
    fn between_undoes_compose(a in pose(), b in pose(), p in point(10.0)) {
        let rel = a.between(&b);
        let q1 = a.compose(&rel).transform_point(&p);
        let q2 = b.transform_point(&p);
        prop_assert!((q1 - q2).norm() < 1e-9);
    }

    #[test]
    fn so3_log_inverts_exp(v in point(1.8).prop_filter("principal range", |v| v.coords.norm() < 3.1)) {
        let back = so3::log(&so3::exp(&v.coords));
        prop_assert!((back - v.coords).norm() < 1e-9);
    }
}

#[test]
fn downsample_ten_thousand_points() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let points: Vec<Point3> =
        (0..10_000).map(|_| Point3::from(Vector3::from_fn(|_, _| rng.random_range(0.0..10.0)))).collect();
    let keys: HashSet<[i64; 3]> = points.iter().map(|p| voxel_key(p, 0.4)).collect();
    let c = PointCloud::from_points(points, "a").unwrap();
    assert_eq!(voxel_downsample(&c, 0.4).unwrap().len(), keys.len());
}
