mod common;

use common::oracles::oracle_label;
use densekp::detectors::{DetectorProfile, ProfileName};
use densekp::fusion::{
    build_label, build_label_parts, fuse_masks, generate_corpus, read_manifest_entries, ManifestEntry, MANIFEST_NAME,
};
use densekp::imgcore::{load_image, load_mask, save_image, BinaryMask};
use proptest::prelude::*;

#[test]
fn label_is_or_of_all_nine_masks() {
    for s in 0..10 {
        let img = common::synthetic_scene(s, 56, 48);
        for p in [DetectorProfile::normal(), DetectorProfile::low()] {
            let label = build_label(&img, &p).unwrap();
            assert_eq!(label, oracle_label(&img, &p), "image {s}, {:?}", p.name);
            let parts = build_label_parts(&img, &p).unwrap();
            assert_eq!(parts.len(), 9);
            assert!(parts.iter().all(|(_, m)| m.is_subset_of(&label)));
        }
    }
}

fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
    prop::collection::vec(any::<bool>(), 12 * 9).prop_map(|bits| BinaryMask::from_fn(12, 9, |x, y| bits[y * 12 + x]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn fusion_is_a_semilattice(a in mask_strategy(), b in mask_strategy(), c in mask_strategy()) {
        let ab = fuse_masks(&[a.clone(), b.clone()]).unwrap();
        prop_assert_eq!(&ab, &fuse_masks(&[b.clone(), a.clone()]).unwrap());
        let left = fuse_masks(&[ab.clone(), c.clone()]).unwrap();
        let right = fuse_masks(&[a.clone(), fuse_masks(&[b.clone(), c.clone()]).unwrap()]).unwrap();
        prop_assert_eq!(&left, &right);
        prop_assert_eq!(&left, &fuse_masks(&[a.clone(), b.clone(), c.clone()]).unwrap());
        prop_assert_eq!(&fuse_masks(&[a.clone(), a.clone()]).unwrap(), &a);
    }
}

fn source_dir(n: usize) -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    for i in 0..n {
        save_image(&common::synthetic_scene(i as u64, 40, 32), tmp.path().join(format!("s{i}.ppm"))).unwrap();
    }
    tmp
}

#[test]
fn corpus_generation_is_reproducible() {
    let src = source_dir(4);
    std::fs::write(src.path().join("broken.ppm"), b"P6\n4 4\n255\nxx").unwrap();
    let out1 = tempfile::tempdir().unwrap();
    let out2 = tempfile::tempdir().unwrap();
    let c1 = generate_corpus(src.path(), out1.path(), 0.25, 7).unwrap();
    let c2 = generate_corpus(src.path(), out2.path(), 0.25, 7).unwrap();
    assert_eq!(c2.samples.len(), c1.samples.len());
    assert_eq!(c1.samples.len(), 4);
    assert_eq!(c1.samples.iter().filter(|s| s.degraded).count(), 1);
    assert!(c1.samples.iter().filter(|s| s.degraded).all(|s| s.profile_used == ProfileName::Low));
    assert_eq!(c1.skipped.len(), 1);

    let m1 = std::fs::read(out1.path().join(MANIFEST_NAME)).unwrap();
    let m2 = std::fs::read(out2.path().join(MANIFEST_NAME)).unwrap();
    assert_eq!(m1, m2);
    let entries = read_manifest_entries(&out1.path().join(MANIFEST_NAME)).unwrap();
    assert_eq!(entries.len(), 5);
    assert_eq!(entries.iter().filter(|e| matches!(e, ManifestEntry::Skipped { .. })).count(), 1);

    // Every stored label equals the label rebuilt from the stored image.
    for s in &c1.samples {
        let img = load_image(&s.image_path).unwrap();
        let mask = load_mask(&s.mask_path).unwrap();
        assert_eq!(mask, build_label(&img, &DetectorProfile::named(s.profile_used)).unwrap());
    }
}

#[test]
fn empty_source_is_an_error() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    assert!(generate_corpus(src.path(), out.path(), 0.25, 0).is_err());
    assert!(generate_corpus(src.path(), out.path(), 1.5, 0).is_err());
}
