use std::fs;
use std::io::Write;
use std::path::PathBuf;

use metarep::linalg::SeededRng;
use metarep::mnist::{build_digit_pair_tasks, build_fewshot_task, parse_idx, read_idx, IdxFile, ImageSet, DEFAULT_FEWSHOT_PAIR, DEFAULT_META_PAIRS, IMAGES_MAGIC, LABELS_MAGIC};
use metarep::tasks::{load_task_data, DatasetKind};
use proptest::prelude::*;

/// 10 images of each digit, 3×3 pixels, pixel values depending on the index.
fn toy_set() -> ImageSet {
    let count = 100;
    let labels = IdxFile { magic: LABELS_MAGIC, dims: vec![count as u32], payload: (0..count).map(|i| (i % 10) as u8).collect() };
    let images = IdxFile { magic: IMAGES_MAGIC, dims: vec![count as u32, 3, 3], payload: (0..count * 9).map(|i| (i * 31 % 256) as u8).collect() };
    ImageSet::from_idx(&images, &labels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn idx_round_trips(dims in prop::collection::vec(1u32..5, 1..4), seed in any::<u64>()) {
        let len: u32 = dims.iter().product();
        let mut rng = SeededRng::new(seed, 0);
        let payload: Vec<u8> = (0..len).map(|_| rng.index(256) as u8).collect();
        let file = IdxFile { magic: 0x0800 | dims.len() as u32, dims, payload };
        let bytes = file.encode();
        let back = parse_idx(&bytes).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(back.encode(), bytes);
    }
}

#[test]
fn gzip_and_raw_files_read_the_same() {
    let tmp = tempfile::tempdir().unwrap();
    let file = IdxFile { magic: LABELS_MAGIC, dims: vec![6], payload: vec![0, 1, 2, 3, 4, 5] };
    fs::write(tmp.path().join("raw"), file.encode()).unwrap();
    let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    gz.write_all(&file.encode()).unwrap();
    fs::write(tmp.path().join("packed.gz"), gz.finish().unwrap()).unwrap();
    assert_eq!(read_idx(&tmp.path().join("raw")).unwrap(), file);
    assert_eq!(read_idx(&tmp.path().join("packed.gz")).unwrap(), file);
    fs::write(tmp.path().join("broken.gz"), [0x1f, 0x8b, 1, 2, 3]).unwrap();
    assert!(read_idx(&tmp.path().join("broken.gz")).is_err());
}

#[test]
fn tasks_are_balanced_and_saves_are_reproducible() {
    let set = toy_set();
    let pairs = [(0, 1), (2, 3), (4, 5)];
    let a = build_digit_pair_tasks(&set, &pairs, 4, 11).unwrap();
    for task in &a.tasks {
        let positives = task.data.labels.iter().filter(|&&y| y == 1.0).count();
        assert_eq!((positives, task.data.n()), (4, 8));
        for (&i, &y) in task.indices.iter().zip(&task.data.labels) {
            assert_eq!(set.labels[i], if y == 1.0 { task.positive } else { task.negative });
        }
    }
    // Centered over all selected images.
    let mean: f64 = a.tasks.iter().map(|t| (0..t.data.n()).map(|i| t.data.inputs[(i, 4)]).sum::<f64>()).sum();
    assert!(mean.abs() < 1e-12);

    let b = build_digit_pair_tasks(&set, &pairs, 4, 11).unwrap();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.save(d1.path()).unwrap();
    b.save(d2.path()).unwrap();
    let mut names: Vec<_> = fs::read_dir(d1.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 5);
    for name in names {
        assert_eq!(fs::read(d1.path().join(&name)).unwrap(), fs::read(d2.path().join(&name)).unwrap(), "{name:?}");
    }
    let (header, tasks) = load_task_data(d1.path()).unwrap();
    assert_eq!((header.kind, header.d, header.k, header.r), (DatasetKind::MnistDigitPair, 9, 3, 0));
    assert_eq!(tasks[1], a.tasks[1].data);

    assert!(build_digit_pair_tasks(&set, &pairs, 11, 11).is_err());
    assert_ne!(build_digit_pair_tasks(&set, &pairs, 4, 12).unwrap(), a);
}

#[test]
fn fewshot_split_is_disjoint_and_uses_meta_centering() {
    let set = toy_set();
    let meta = build_digit_pair_tasks(&set, &[(0, 1), (2, 3)], 3, 1).unwrap();
    let split = build_fewshot_task(&set, (1, 9), 5, Some(6), &meta.centering, &[(0, 1), (2, 3)], &mut SeededRng::new(1, 0)).unwrap();
    assert_eq!(split.train_labels.iter().filter(|&&y| y == 1.0).count(), 3);
    assert_eq!(split.eval_labels.len(), 6);
    assert!(split.train_indices.iter().all(|i| !split.eval_indices.contains(i)));
    let i = split.train_indices[0];
    let expected = set.image(i)[0] as f64 / 255.0 - meta.centering[0];
    assert!((split.train_inputs[(0, 0)] - expected).abs() < 1e-15);
    assert!(split.warning.is_none());
    let overlap = build_fewshot_task(&set, (0, 1), 2, Some(2), &meta.centering, &[(0, 1)], &mut SeededRng::new(1, 0)).unwrap();
    assert!(overlap.warning.is_some());
}

fn real_mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("METAREP_MNIST_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("/root/data/mnist"));
    ImageSet::load(&dir, "train").is_ok().then_some(dir)
}

#[test]
fn real_files_have_mnist_shapes() {
    let Some(dir) = real_mnist_dir() else {
        eprintln!("MNIST files not found; set METAREP_MNIST_DIR to run this test");
        return;
    };
    for split in ["train", "t10k"] {
        let set = ImageSet::load(&dir, split).unwrap();
        assert_eq!(set.pixels_per_image, 784);
        assert!(!set.is_empty() && set.labels.iter().all(|&l| l < 10));
    }
}

#[test]
fn real_files_give_fifteen_tasks() {
    let Some(dir) = real_mnist_dir() else {
        eprintln!("MNIST files not found; set METAREP_MNIST_DIR to run this test");
        return;
    };
    let set = ImageSet::load(&dir, "train").unwrap();
    let ds = build_digit_pair_tasks(&set, &DEFAULT_META_PAIRS, 50, 0).unwrap();
    assert_eq!((ds.tasks.len(), ds.d()), (15, 784));
    assert!(!DEFAULT_META_PAIRS.contains(&DEFAULT_FEWSHOT_PAIR));
    assert!(ds.tasks.iter().all(|t| t.data.n() == 100));
}
