use std::collections::HashSet;
use std::fs;

use speckledic::dataset::{build_dataset, plan_pairs, read_flow, DatasetConfig, Manifest, Split};
use speckledic::image::GrayImage;

fn tiny(cfg: DatasetConfig) -> DatasetConfig {
    DatasetConfig {
        n_references: 2,
        train_per_reference: 2,
        test_per_reference: 1,
        frame_size: 48,
        ..cfg
    }
}

#[test]
fn mini_v1_build_is_structurally_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = DatasetConfig {
        n_references: 3,
        ..DatasetConfig::v1()
    };
    let m = build_dataset(&cfg, dir.path()).unwrap();
    assert_eq!(m.pairs.len(), 303);
    assert_eq!((m.train_count, m.test_count), (300, 3));
    m.verify(dir.path()).unwrap();

    let loaded = Manifest::load(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(loaded, m);
    assert!((m.disks_per_pixel - m.references[0].params.disks_per_pixel()).abs() < 1e-12);

    let first = &m.pairs[0];
    let img = GrayImage::load_png(&dir.path().join(&first.deformed)).unwrap();
    assert_eq!(img.dims(), (256, 256));
    let flow = read_flow(&dir.path().join(&first.flow)).unwrap();
    assert_eq!(flow.dims(), (256, 256));
    assert!(flow.max_abs() <= 1.0);
    let (u, v) = flow.get(0, 0);
    assert_eq!((u, v), (0.0, 0.0));
}

#[test]
fn rebuild_is_bit_identical_and_thread_independent() {
    let cfg = tiny(DatasetConfig::v2());
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let ma = one.install(|| build_dataset(&cfg, a.path())).unwrap();
    let mb = three.install(|| build_dataset(&cfg, b.path())).unwrap();
    assert_eq!(ma.checksum, mb.checksum);
    for p in &ma.pairs {
        assert_eq!(
            fs::read(a.path().join(&p.deformed)).unwrap(),
            fs::read(b.path().join(&p.deformed)).unwrap()
        );
    }

    let c = tempfile::tempdir().unwrap();
    let other = DatasetConfig { master_seed: 1, ..cfg };
    assert_ne!(build_dataset(&other, c.path()).unwrap().checksum, ma.checksum);
}

#[test]
fn noisy_pairs_use_two_noise_realizations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = DatasetConfig {
        region_sizes: vec![8],
        ..tiny(DatasetConfig::v2())
    };
    let m = build_dataset(&cfg, dir.path()).unwrap();
    let p0 = &m.pairs[0];
    let p1 = &m.pairs[1];
    assert_eq!(p0.reference_frame, p1.reference_frame);
    let r0 = fs::read(dir.path().join(&p0.reference)).unwrap();
    let r1 = fs::read(dir.path().join(&p1.reference)).unwrap();
    assert_ne!(r0, r1, "each pair carries its own noisy copy of the reference");
}

#[test]
fn no_pair_is_in_both_splits() {
    for cfg in [DatasetConfig::v1(), DatasetConfig::v2()] {
        let plan = plan_pairs(&cfg);
        let key = |p: &speckledic::dataset::PairPlan| (p.reference, p.region_size, p.deformation);
        let train: HashSet<_> = plan.iter().filter(|p| p.split == Split::Train).map(key).collect();
        assert!(plan.iter().filter(|p| p.split == Split::Test).all(|p| !train.contains(&key(p))));
        let seeds: HashSet<u64> = plan.iter().map(|p| p.seed).collect();
        assert_eq!(seeds.len(), plan.len());
    }
}

#[test]
fn v2_counts_per_split() {
    let plan = plan_pairs(&DatasetConfig::v2());
    let train = plan.iter().filter(|p| p.split == Split::Train).count();
    assert_eq!((plan.len(), train), (21_780, 19_602));
}
