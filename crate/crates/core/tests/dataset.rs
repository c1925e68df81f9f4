mod common;

use std::collections::HashSet;
use std::path::PathBuf;

use densekp::dataset::{
    format_homography, load_sequence, parse_homography, parse_homography_file, split_corpus, write_homography_file,
};
use densekp::detectors::ProfileName;
use densekp::fusion::LabeledSample;
use densekp::imgcore::{save_image, Homography};
use densekp::Error;
use proptest::prelude::*;

fn sequence_dir(skip_h: Option<usize>, skip_img: Option<usize>) -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let img = common::synthetic_scene(0, 24, 20);
    for i in 1..=6 {
        if Some(i) != skip_img {
            let ext = if i % 2 == 0 { "png" } else { "ppm" };
            save_image(&img, tmp.path().join(format!("img{i}.{ext}"))).unwrap();
        }
    }
    for n in 2..=6 {
        if Some(n) != skip_h {
            let h = Homography::translation(n as f64, 0.5 * n as f64);
            write_homography_file(&h, tmp.path().join(format!("H1to{n}p"))).unwrap();
        }
    }
    tmp
}

#[test]
fn loads_well_formed_sequence() {
    let tmp = sequence_dir(None, None);
    let seq = load_sequence(tmp.path()).unwrap();
    assert_eq!(seq.images.len(), 6);
    assert_eq!(seq.homographies.len(), 5);
    assert_eq!(seq.homographies.keys().copied().collect::<Vec<_>>(), vec![2, 3, 4, 5, 6]);
    assert!(seq.images[1].extension().unwrap() == "png");
    assert_eq!(seq.homography(4).unwrap().project(0.0, 0.0).unwrap(), (4.0, 2.0));
}

#[test]
fn missing_files_listed_together() {
    let tmp = sequence_dir(Some(4), Some(3));
    match load_sequence(tmp.path()) {
        Err(Error::IncompleteSequence { missing, .. }) => {
            assert_eq!(missing.len(), 2);
            assert!(missing[0].starts_with("img3"));
            assert_eq!(missing[1], "H1to4p");
        }
        other => panic!("unexpected {other:?}"),
    }
    let err = load_sequence(sequence_dir(Some(4), None).path()).unwrap_err();
    assert!(err.to_string().contains("H1to4p"));
}

#[test]
fn singular_homography_propagates() {
    let tmp = sequence_dir(None, None);
    std::fs::write(tmp.path().join("H1to5p"), "1 2 3\n2 4 6\n0 0 1\n").unwrap();
    assert!(matches!(load_sequence(tmp.path()), Err(Error::SingularMatrix(_))));
    assert!(matches!(load_sequence(tmp.path().join("nope")), Err(Error::MissingFile(_))));
}

#[test]
fn homography_file_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("H");
    let h = Homography::new([1.0 / 3.0, 0.1, -7.25, 2e-3, 0.9, 14.0, 1e-6, -3e-7, 1.0]).unwrap();
    write_homography_file(&h, &p).unwrap();
    let back = parse_homography_file(&p).unwrap();
    std::fs::write(&p, format_homography(&back)).unwrap();
    assert_eq!(parse_homography_file(&p).unwrap(), back);
    assert!(matches!(parse_homography_file(tmp.path().join("none")), Err(Error::MissingFile(_))));
}

proptest! {
    #[test]
    fn parse_serialize_parse_within_12_digits(m in prop::array::uniform9(-1e3f64..1e3)) {
        prop_assume!(Homography::new(m).is_ok());
        let h = Homography::new(m).unwrap();
        let once = parse_homography(&format_homography(&h), std::path::Path::new("p")).unwrap();
        for (a, b) in h.matrix().iter().zip(once.matrix()) {
            prop_assert!((a - b).abs() <= 5e-12 * a.abs());
        }
        let twice = parse_homography(&format_homography(&once), std::path::Path::new("p")).unwrap();
        prop_assert_eq!(once, twice);
    }
}

fn samples(n: usize) -> Vec<LabeledSample> {
    (0..n)
        .map(|i| LabeledSample {
            image_path: PathBuf::from(format!("i{i}.ppm")),
            mask_path: PathBuf::from(format!("m{i}.pgm")),
            profile_used: ProfileName::Low,
            degraded: i % 3 == 0,
        })
        .collect()
}

#[test]
fn split_disjoint_and_deterministic_over_seeds() {
    let all = samples(41);
    for seed in 0..100 {
        for fraction in [33.0 / 41.0, 0.5, 0.9] {
            let s = split_corpus(&all, fraction, seed).unwrap();
            assert_eq!(s, split_corpus(&all, fraction, seed).unwrap());
            assert_eq!(s.seed, seed);
            let expect = (fraction * 41.0 + 1e-9).floor() as usize;
            assert_eq!(s.train.len(), expect);
            let tr: HashSet<_> = s.train.iter().map(|x| x.image_path.clone()).collect();
            let va: HashSet<_> = s.val.iter().map(|x| x.image_path.clone()).collect();
            assert!(tr.is_disjoint(&va));
            assert_eq!(tr.len() + va.len(), 41);
        }
    }
    assert_ne!(split_corpus(&all, 0.5, 1).unwrap().train, split_corpus(&all, 0.5, 2).unwrap().train);
}
