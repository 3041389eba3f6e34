use std::path::PathBuf;

use iconify::dataset::{
    augment_icons, border_is_white, extract_all, load_coco, load_domain_dir, sample_unpaired_batch, synthetic_shapes,
    write_domain_dir, AugmentParams, DomainDataset, SubsetFilter, DEFAULT_MIN_AREA, MARGIN,
};
use iconify::nn::Domain;
use iconify::Tensor;
use image::{Rgb, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/coco_mini")
}

fn expected() -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(fixture().join("expected.json")).unwrap()).unwrap()
}

#[test]
fn coco_fixture_yields_precomputed_cutout_count() {
    let corpus = load_coco(&fixture().join("annotations.json"), &fixture().join("images")).unwrap();
    assert_eq!(corpus.len(), 20);
    let (cutouts, skips) = extract_all(&corpus, DEFAULT_MIN_AREA);
    let exp = expected();
    assert_eq!(cutouts.len() as u64, exp["cutouts"].as_u64().unwrap());
    assert_eq!(cutouts.len(), 37);
    assert_eq!(
        skips.below_min_area as u64,
        exp["skipped_below_min_area"].as_u64().unwrap()
    );
    assert_eq!(skips.zero_area as u64, exp["skipped_zero_area"].as_u64().unwrap());
    for c in &cutouts {
        assert_eq!(c.image.dimensions(), (256, 256));
        assert!(c.area >= DEFAULT_MIN_AREA);
        assert!(border_is_white(&c.image, MARGIN));
    }
}

#[test]
fn min_area_filter_is_what_removes_small_objects() {
    let corpus = load_coco(&fixture().join("annotations.json"), &fixture().join("images")).unwrap();
    let exp = expected();
    let (all, skips) = extract_all(&corpus, 1);
    assert_eq!(skips.below_min_area, 0);
    assert_eq!(
        all.len() as u64,
        exp["cutouts"].as_u64().unwrap() + exp["skipped_below_min_area"].as_u64().unwrap()
    );
}

fn tiny_icons(n: usize) -> Vec<RgbImage> {
    (0..n)
        .map(|i| {
            RgbImage::from_fn(8, 8, |x, y| {
                if (2..6).contains(&x) && (2..6).contains(&y) {
                    Rgb([i as u8, 0, 0])
                } else {
                    Rgb([255; 3])
                }
            })
        })
        .collect()
}

#[test]
fn augmentation_reproduces_reported_counts() {
    assert_eq!(
        augment_icons(&tiny_icons(883), &AugmentParams::with_k(10), 0)
            .unwrap()
            .len(),
        8830
    );
    assert_eq!(
        augment_icons(&tiny_icons(72), &AugmentParams::with_k(20), 0)
            .unwrap()
            .len(),
        1440
    );
}

#[test]
fn augmentation_independent_of_thread_count() {
    let icons = tiny_icons(20);
    let params = AugmentParams::with_k(5);
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let a = single.install(|| augment_icons(&icons, &params, 7).unwrap());
    let b = augment_icons(&icons, &params, 7).unwrap();
    assert_eq!(a, b);
}

fn indexed_set(n: usize) -> DomainDataset {
    let items = (0..n).map(|i| Tensor::full([3, 2, 2], i as f32 / n as f32)).collect();
    DomainDataset::new(Domain::X, items, 0).unwrap()
}

#[test]
fn sampling_is_uniform_within_three_sigma() {
    let x = indexed_set(10);
    let y = indexed_set(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut freq = [0usize; 10];
    for _ in 0..10_000 {
        let (bx, _) = sample_unpaired_batch(&x, &y, 1, &mut rng).unwrap();
        freq[(bx.data()[0] * 10.0).round() as usize] += 1;
    }
    let sigma = (10_000.0f64 * 0.1 * 0.9).sqrt();
    for f in freq {
        assert!((f as f64 - 1000.0).abs() <= 3.0 * sigma, "{freq:?}");
    }
}

#[test]
fn sampling_replays_under_seed() {
    let x = indexed_set(10);
    let y = indexed_set(7);
    let draw = || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        (0..50)
            .map(|_| sample_unpaired_batch(&x, &y, 2, &mut rng).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(), draw());
}

#[test]
fn domain_directory_round_trip_and_filter() {
    let dir = tempfile::tempdir().unwrap();
    let (squares, _) = synthetic_shapes(4, 32, 0);
    let labels = vec![
        ("person".to_owned(), "1".to_owned()),
        ("dog".to_owned(), "2".to_owned()),
        ("person".to_owned(), "3".to_owned()),
        ("person".to_owned(), "4".to_owned()),
    ];
    write_domain_dir(dir.path(), &squares, &labels).unwrap();
    let (all, entries) = load_domain_dir(dir.path(), Domain::X, &SubsetFilter::default(), 0).unwrap();
    assert_eq!(entries.len(), 4);
    assert_eq!(all.to_images().unwrap(), squares);

    let deny = dir.path().join("deny.txt");
    std::fs::write(&deny, "# partial bodies\n3\n").unwrap();
    let filter = SubsetFilter {
        label: Some("person".into()),
        allow: None,
        deny: SubsetFilter::read_list(&deny).unwrap(),
    };
    let (people, entries) = load_domain_dir(dir.path(), Domain::X, &filter, 0).unwrap();
    assert_eq!(people.len(), 2);
    assert_eq!(
        entries.iter().map(|e| e.source_id.as_str()).collect::<Vec<_>>(),
        ["1", "4"]
    );
}
