use std::fs;

use cubepose::dataset::{
    label_to_cube, maps_from_tmap, maps_to_tmap, read_jsonl_file, read_tmap, render_targets, write_jsonl_file,
    write_tmap, CubeLabel, HeadLabel, PosePrediction, RenderOptions,
};
use cubepose::EulerPose;
use proptest::prelude::*;
use tempfile::TempDir;

fn labels() -> Vec<CubeLabel> {
    (0..5)
        .map(|i| {
            let t = i as f64;
            label_to_cube(&HeadLabel {
                image_id: format!("img-{i}"),
                bbox: [13.3 * t, 7.1 + t, 64.0 + 3.7 * t, 70.5],
                yaw: -170.0 + 71.3 * t,
                pitch: 80.0 - 37.1 * t,
                roll: 1.0 / 3.0 + 45.0 * t,
                nose: (i % 2 == 0).then_some([40.0 + t, 41.0]),
                l: None,
            })
            .unwrap()
        })
        .collect()
}

#[test]
fn cube_label_file_round_trip() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("cubes.jsonl");
    let original = labels();
    write_jsonl_file(&path, &original).unwrap();
    let back: Vec<CubeLabel> = read_jsonl_file(&path).unwrap().into_iter().map(|r| r.unwrap().value).collect();
    assert_eq!(back, original);
}

#[test]
fn tmap_file_round_trip_of_rendered_maps() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("maps.tmap");
    let maps = render_targets(&labels(), &RenderOptions::default()).unwrap();
    let mut bytes = Vec::new();
    write_tmap(&mut bytes, &maps_to_tmap(&maps, Some("scene"))).unwrap();
    fs::write(&path, &bytes).unwrap();
    let back = maps_from_tmap(&read_tmap(&fs::read(&path).unwrap()).unwrap()).unwrap();
    assert_eq!(back, maps);
}

proptest! {
    #[test]
    fn prediction_floats_survive_bit_exactly(
        yaw in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO,
        pitch in -90.0f64..90.0,
        roll in any::<f64>().prop_filter("finite", |v| v.is_finite()),
    ) {
        let p = PosePrediction::new("x", EulerPose::new(yaw, pitch, roll));
        let text = serde_json::to_string(&p).unwrap();
        let back: PosePrediction = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.yaw.to_bits(), yaw.to_bits());
        prop_assert_eq!(back.pitch.to_bits(), pitch.to_bits());
        prop_assert_eq!(back.roll.to_bits(), roll.to_bits());
    }
}
