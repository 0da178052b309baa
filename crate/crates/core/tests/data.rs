use depthprior::data::{
    generate_synthetic, load_dataset, load_frames, read_manifest, read_png_gray, sample_training_patches, write_manifest, write_png16,
    write_scene, Frame, SyntheticSpec,
};
use depthprior::patch::{Channel, ImageGrid};
use depthprior::training::DatasetSplit;

fn frame(w: usize, h: usize, shift: f64) -> Frame<f64> {
    Frame {
        intensity: ImageGrid::from_fn(w, h, Channel::Intensity, |x, y| ((x + 2 * y) % 7) as f64 / 7.0),
        disparity: ImageGrid::from_fn(w, h, Channel::Disparity, |x, _| shift + x as f64),
    }
}

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_scene(root, "a", &[frame(16, 12, 1.0), frame(16, 12, 2.0)], 40.0).unwrap();
    write_scene(root, "b", &[frame(16, 12, 3.0)], 40.0).unwrap();
    let split = DatasetSplit::new(vec!["a".into()], vec!["b".into()]).unwrap();
    write_manifest(root, &split).unwrap();
    assert_eq!(read_manifest(root).unwrap(), split);

    let ds = load_dataset(root, &split).unwrap();
    assert_eq!(ds.train.len(), 1);
    assert_eq!(ds.train[0].frames.len(), 2);
    let loaded = load_frames::<f64>(&ds.train, None).unwrap();
    // largest training disparity is 2 + 15
    assert!((loaded.normalization - 17.0).abs() < 1e-3, "{}", loaded.normalization);
    let d = &loaded.frames[1].disparity;
    assert!((d.get(15, 0) - 1.0).abs() < 1e-4);
    assert!((d.get(0, 5) - 2.0 / 17.0).abs() < 1e-4);

    let test = load_frames::<f64>(&ds.test, Some(loaded.normalization)).unwrap();
    assert!((test.frames[0].disparity.get(0, 0) - 3.0 / 17.0).abs() < 1e-4);

    let patches = sample_training_patches(&loaded.frames, 1000, 0).unwrap();
    // stride 4 on 16x12 gives 3 x 2 sites per frame
    assert_eq!(patches.len(), 12);
    assert_eq!(sample_training_patches(&loaded.frames, 5, 1).unwrap().len(), 5);
}

#[test]
fn png16_keeps_sixteen_bits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.png");
    let img = ImageGrid::from_fn(9, 4, Channel::Intensity, |x, y| (x * 4 + y) as f64 / 40.0);
    write_png16(&path, &img).unwrap();
    let back = read_png_gray::<f64>(&path, Channel::Intensity).unwrap();
    for (a, b) in back.values().iter().zip(img.values()) {
        assert!((a - b).abs() <= 0.5 / 65535.0);
    }
}

fn edge_correlation(rho: f64, seed: u64) -> f64 {
    let pairs = generate_synthetic::<f64>(&SyntheticSpec { rho, seed, ..SyntheticSpec::default() }, 20_000).unwrap();
    let xs: Vec<(f64, f64)> = pairs
        .iter()
        .map(|p| (f64::from(u8::from(p.intensity_edge.is_some())), f64::from(u8::from(p.disparity_edge.is_some()))))
        .collect();
    let n = xs.len() as f64;
    let (ma, mb) = (xs.iter().map(|x| x.0).sum::<f64>() / n, xs.iter().map(|x| x.1).sum::<f64>() / n);
    let cov = xs.iter().map(|(a, b)| (a - ma) * (b - mb)).sum::<f64>() / n;
    let va = xs.iter().map(|(a, _)| (a - ma).powi(2)).sum::<f64>() / n;
    let vb = xs.iter().map(|(_, b)| (b - mb).powi(2)).sum::<f64>() / n;
    cov / (va * vb).sqrt()
}

#[test]
fn uncoupled_edges_are_uncorrelated() {
    let r = edge_correlation(0.0, 3);
    assert!(r.abs() <= 0.03, "{r}");
    assert!(edge_correlation(0.9, 3) > 0.5);
}

#[test]
fn partial_coupling_yields_every_edge_combination() {
    let pairs = generate_synthetic::<f64>(&SyntheticSpec { rho: 0.6, seed: 4, ..SyntheticSpec::default() }, 5000).unwrap();
    let mut seen = [[false; 2]; 2];
    for p in &pairs {
        seen[usize::from(p.intensity_edge.is_some())][usize::from(p.disparity_edge.is_some())] = true;
    }
    assert_eq!(seen, [[true; 2]; 2]);
}

#[test]
fn generator_is_deterministic() {
    let spec = SyntheticSpec { seed: 12, ..SyntheticSpec::default() };
    let a = generate_synthetic::<f64>(&spec, 200).unwrap();
    let b = generate_synthetic::<f64>(&spec, 200).unwrap();
    assert_eq!(a, b);
}
