use glfm_core::io::{encode_ply, encode_xyz, parse_ply_cloud, parse_ply_vertices, parse_xyz, read_cloud_auto, write_cloud, CloudFormat, ExtraProperty};
use glfm_core::PointCloud;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL
}

fn cloud_strategy() -> impl Strategy<Value = PointCloud> {
    prop::collection::vec((prop::array::uniform3(finite()), any::<bool>()), 0..60).prop_flat_map(|rows| {
        any::<bool>().prop_map(move |with_mask| {
            let points = rows.iter().map(|(p, _)| *p).collect();
            let mask = with_mask.then(|| rows.iter().map(|(_, m)| *m).collect());
            PointCloud::new("c", points, mask).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn binary_ply_round_trips_exactly(cloud in cloud_strategy()) {
        let bytes = encode_ply(&cloud, true, &[], &[]).unwrap();
        let back = parse_ply_cloud("c", &bytes).unwrap();
        let bits = |c: &PointCloud| c.points().iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&cloud));
        prop_assert_eq!(back.mask(), cloud.mask());
    }

    #[test]
    fn ascii_ply_round_trips_exactly(cloud in cloud_strategy()) {
        let bytes = encode_ply(&cloud, false, &[], &["note".to_string()]).unwrap();
        let back = parse_ply_cloud("c", &bytes).unwrap();
        prop_assert_eq!(back.points(), cloud.points());
        prop_assert_eq!(back.mask(), cloud.mask());
    }

    #[test]
    fn xyz_round_trips_exactly(cloud in cloud_strategy()) {
        let text = String::from_utf8(encode_xyz(&cloud)).unwrap();
        let back = parse_xyz("c".into(), &text).unwrap();
        prop_assert_eq!(back.points(), cloud.points());
        if !cloud.is_empty() {
            prop_assert_eq!(back.mask(), cloud.mask());
        }
    }
}

#[test]
fn extra_scores_survive_as_float_property() {
    let cloud = PointCloud::from_points("c", vec![[0.0; 3], [1.0, 2.0, 3.0]]).unwrap();
    let scores = [0.25, 7.5];
    let bytes = encode_ply(&cloud, true, &[ExtraProperty { name: "score", values: &scores }], &[]).unwrap();
    let table = parse_ply_vertices(&bytes).unwrap();
    assert_eq!(table.column("score").unwrap(), &scores);
}

#[test]
fn files_round_trip_by_extension() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = PointCloud::new("c", vec![[0.5, -1.0, 2.0], [3.0, 4.0, 5.0]], Some(vec![false, true])).unwrap();
    for (name, fmt) in [("a.ply", CloudFormat::PlyBinaryLe), ("b.ply", CloudFormat::PlyAscii), ("c.xyz", CloudFormat::Xyz)] {
        let path = dir.path().join(name);
        write_cloud(&cloud, &path, fmt).unwrap();
        let back = read_cloud_auto(&path).unwrap();
        assert_eq!(back.points(), cloud.points());
        assert_eq!(back.mask(), cloud.mask());
    }
}
