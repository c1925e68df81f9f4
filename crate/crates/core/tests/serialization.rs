mod common;

use densekp::dataset::{format_homography, parse_homography_file, write_homography_file};
use densekp::descmatch::{read_matches_csv, write_matches_csv, MatchPair};
use densekp::detectors::{DetectorProfile, KeypointDetector};
use densekp::espnet::{init_weights, ModelWeights};
use densekp::imgcore::{
    keypoints_from_csv, keypoints_to_csv, load_image, load_mask, read_keypoints_csv, rgb_to_gray, save_image,
    save_mask, write_keypoints_csv, BinaryMask, Homography, Keypoint,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn weights_file_bit_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let w = init_weights(3);
    let p = tmp.path().join("w.bin");
    w.save(&p).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    let back = ModelWeights::load(&p).unwrap();
    assert_eq!(back.len(), w.len());
    for ((na, ta), (nb, tb)) in w.iter().zip(back.iter()) {
        assert_eq!(na, nb);
        assert_eq!(ta.shape(), tb.shape());
        assert!(ta.data().iter().zip(tb.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    let p2 = tmp.path().join("w2.bin");
    back.save(&p2).unwrap();
    assert_eq!(std::fs::read(&p2).unwrap(), bytes);

    // Truncation and trailing garbage are both rejected.
    std::fs::write(&p2, &bytes[..bytes.len() - 1]).unwrap();
    assert!(ModelWeights::load(&p2).is_err());
    let mut longer = bytes.clone();
    longer.push(0);
    std::fs::write(&p2, &longer).unwrap();
    assert!(ModelWeights::load(&p2).is_err());
}

#[test]
fn masks_and_images_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mask = BinaryMask::from_fn(33, 17, |_, _| rng.gen_bool(0.3));
    for ext in ["pgm", "png"] {
        let p = tmp.path().join(format!("m.{ext}"));
        save_mask(&mask, &p).unwrap();
        assert_eq!(load_mask(&p).unwrap(), mask);
    }
    let img = common::synthetic_scene(2, 30, 20);
    for ext in ["ppm", "png"] {
        let p = tmp.path().join(format!("i.{ext}"));
        save_image(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
    }
}

#[test]
fn detector_keypoints_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let gray = rgb_to_gray(&common::synthetic_scene(5, 64, 64));
    for det in KeypointDetector::ALL {
        let kps = det.detect(&gray, &DetectorProfile::low()).unwrap();
        let p = tmp.path().join(format!("{det}.csv"));
        write_keypoints_csv(&kps, &p).unwrap();
        let back = read_keypoints_csv(&p).unwrap();
        assert_eq!(back.len(), kps.len());
        for (a, b) in kps.iter().zip(&back) {
            // Fields are rounded to six decimals; pyramid detectors report non-integer positions.
            for (u, v) in [(a.x, b.x), (a.y, b.y), (a.score, b.score), (a.scale, b.scale)] {
                assert!((u - v).abs() <= 5e-7 + 2.0 * u.abs() * f32::EPSILON, "{det}");
            }
        }
        assert_eq!(keypoints_to_csv(&back), std::fs::read_to_string(&p).unwrap());
    }
}

proptest! {
    #[test]
    fn keypoint_csv_is_a_fixed_point(pts in prop::collection::vec((0.0f32..5000.0, 0.0f32..5000.0, -1e6f32..1e6, 0.5f32..64.0), 0..30)) {
        let kps: Vec<Keypoint> = pts.iter().map(|&(x, y, score, scale)| Keypoint { x, y, score, scale }).collect();
        let text = keypoints_to_csv(&kps);
        let once = keypoints_from_csv(&text).unwrap();
        prop_assert_eq!(keypoints_to_csv(&once), text.clone());
        for (a, b) in kps.iter().zip(&once) {
            for (u, v) in [(a.x, b.x), (a.y, b.y), (a.score, b.score), (a.scale, b.scale)] {
                prop_assert!((u - v).abs() <= 5e-7 + 2.0 * u.abs() * f32::EPSILON);
            }
        }
    }

    #[test]
    fn project_unproject_round_trip(seed in 0u64..u64::MAX) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = [
            rng.gen_range(0.5..1.5), rng.gen_range(-0.3..0.3), rng.gen_range(-50.0..50.0),
            rng.gen_range(-0.3..0.3), rng.gen_range(0.5..1.5), rng.gen_range(-50.0..50.0),
            rng.gen_range(-5e-4..5e-4), rng.gen_range(-5e-4..5e-4), 1.0,
        ];
        let h = Homography::new(m).unwrap();
        let inv = h.inverse().unwrap();
        let (x, y) = (rng.gen_range(0.0..800.0), rng.gen_range(0.0..640.0));
        let p = h.project(x, y).unwrap();
        let q = inv.project(p.0, p.1).unwrap();
        prop_assert!((q.0 - x).hypot(q.1 - y) < 1e-6);
    }
}

#[test]
fn homography_files_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("H1to2p");
    let h = Homography::new([0.9, 0.05, 10.5, -0.02, 1.01, -3.25, 1.2e-5, -7e-6, 1.0]).unwrap();
    write_homography_file(&h, &p).unwrap();
    let back = parse_homography_file(&p).unwrap();
    assert_eq!(back, h);
    assert_eq!(format_homography(&back), std::fs::read_to_string(&p).unwrap());
}

#[test]
fn matches_csv_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("m.csv");
    let m = vec![
        MatchPair { index_a: 0, index_b: 5, distance: 0.1 + 0.2, ratio: 1.0 / 3.0 },
        MatchPair { index_a: 7, index_b: 2, distance: 12.0, ratio: 0.0 },
    ];
    write_matches_csv(&m, &p).unwrap();
    assert_eq!(read_matches_csv(&p).unwrap(), m);
}
