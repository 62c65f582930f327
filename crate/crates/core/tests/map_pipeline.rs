use std::collections::BTreeMap;

use cloudreg::evaluation::transform_error;
use cloudreg::io::write_ply;
use cloudreg::map_pipeline::{merge, parse_octree, serialize_octree, to_octree, OctreeMap};
use cloudreg::registration::FsHicpParams;
use cloudreg::synthetic::{dense_room, disjoint_pair, full_overlap_pair, room_quadrant_maps};
use cloudreg::{Error, KdTree, PointCloud, RigidTransform};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn identical_clouds_merge_to_identity() {
    let cloud = full_overlap_pair(1500, 0.0, 0.0, 2).target;
    let out = merge(&[cloud.clone(), cloud.clone()], &FsHicpParams::default()).unwrap();
    assert_eq!(out.transforms.len(), 2);
    assert_eq!(out.transforms[0], RigidTransform::identity());
    assert!(out.transforms[1].max_abs_diff(&RigidTransform::identity()) < 1e-6);
    assert!(out.global_cloud.len() <= cloud.len());
}

#[test]
fn room_maps_recover_truth_and_stay_consistent() {
    let params = FsHicpParams::default();
    for seed in 0..3 {
        let maps = room_quadrant_maps(3000, 0.3, 5.0, 0.1, 0.003, seed);
        let out = merge(&maps.clouds, &params).unwrap();
        assert_eq!(out.transforms.len(), 4);
        for (i, (truth, est)) in maps.truth.iter().zip(&out.transforms).enumerate() {
            let err = transform_error(truth, est);
            assert!(err.rotation_angle_error < 2.0 && err.translation_error < 0.05, "seed {seed} map {i}: {err:?}");
        }
        assert_frames_consistent(&maps.clouds, &out, params.fine_max_corr);
    }
}

fn assert_frames_consistent(clouds: &[PointCloud], out: &cloudreg::map_pipeline::MergeResult, radius: f64) {
    let tree = KdTree::build(&out.global_cloud).unwrap();
    let (mut near, mut total) = (0usize, 0usize);
    for (cloud, t) in clouds.iter().zip(&out.transforms) {
        for p in t.apply(cloud).iter() {
            total += 1;
            near += tree.nearest_within(p, radius).unwrap().is_some() as usize;
        }
    }
    assert!(near as f64 >= 0.9 * total as f64, "{near}/{total}");
}

#[test]
fn non_overlapping_pair_is_named() {
    let far = disjoint_pair(600, 10.0, 4);
    let a = full_overlap_pair(600, 0.0, 0.0, 4).target;
    let err = merge(&[a.clone(), a, far.source], &FsHicpParams::default()).unwrap_err();
    assert!(matches!(err, Error::PairFailed { pair: 1, .. }), "{err:?}");
    assert!(err.to_string().contains('1'), "{err}");
}

#[test]
fn octree_is_smaller_than_ply() {
    let room = dense_room(100_000, 9);
    let map = to_octree(&room, 0.05).unwrap();
    let octree_bytes = serialize_octree(&map).len();
    let ply_bytes = write_ply(&room).len();
    assert!(octree_bytes < ply_bytes, "{octree_bytes} vs {ply_bytes}");
    assert_eq!(map.total_weight(), room.len() as u64);
}

#[test]
fn ten_thousand_leaf_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut map = OctreeMap::new(0.037).unwrap();
    while map.leaf_count() < 10_000 {
        let key = [rng.gen_range(-500..500), rng.gen_range(-500..500), rng.gen_range(-50..50)];
        map.insert(key, rng.gen_range(1..1000)).unwrap();
    }
    let bytes = serialize_octree(&map);
    let back = parse_octree(&bytes).unwrap();
    assert_eq!(back, map);
    assert_eq!(serialize_octree(&back), bytes);
    assert!(parse_octree(&bytes[..bytes.len() - 3]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn leaves_match_cell_counts(
        pts in prop::collection::vec([-4.0f64..4.0, -4.0f64..4.0, -4.0f64..4.0], 1..500),
        resolution in 0.05f64..2.0,
    ) {
        let cloud = PointCloud::from_xyz(&pts).unwrap();
        let map = to_octree(&cloud, resolution).unwrap();
        let mut oracle: BTreeMap<[i32; 3], u32> = BTreeMap::new();
        for p in &pts {
            let key = [(p[0] / resolution).floor() as i32, (p[1] / resolution).floor() as i32, (p[2] / resolution).floor() as i32];
            *oracle.entry(key).or_default() += 1;
        }
        prop_assert!(map.leaf_count() <= pts.len());
        prop_assert_eq!(map.total_weight(), pts.len() as u64);
        prop_assert_eq!(map.leaves().collect::<Vec<_>>(), oracle.into_iter().collect::<Vec<_>>());
        let bytes = serialize_octree(&map);
        prop_assert_eq!(serialize_octree(&parse_octree(&bytes).unwrap()), bytes);
    }
}
