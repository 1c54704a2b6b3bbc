use std::fs;

use difflle::data_io::{
    load_image, load_network, load_niqe_model, load_pairs, parse_config, save_image, save_network, save_niqe_model,
    Checkpoint, DataConfig, DatasetLayout, SyntheticBenchmark,
};
use difflle::metrics::{fit_niqe_model, NiqeConfig};
use difflle::nnet::{Arch, NetworkParams};
use difflle::{data_io, Error, Image, Network, SeededRng};

#[test]
fn quantized_images_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SeededRng::new(1);
    for c in [1usize, 3] {
        let data = (0..c * 5 * 7).map(|_| rng.below(256) as f32 / 255.0).collect();
        let img = Image::from_vec(c, 5, 7, data).unwrap();
        let path = dir.path().join(if c == 1 { "g.pgm" } else { "c.ppm" });
        save_image(&img, &path).unwrap();
        let back: Image = load_image(&path).unwrap();
        assert_eq!(back, img);
        save_image(&back, dir.path().join("again")).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(dir.path().join("again")).unwrap());
    }
}

#[test]
fn network_checkpoints_are_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SeededRng::new(2);
    for arch in [
        Arch::Enhancer { in_channels: 3, channels: 8, blocks: 2 },
        Arch::Denoiser { in_channels: 3, channels: 8, emb_dim: 8 },
        Arch::Discriminator { in_channels: 3, channels: 8 },
    ] {
        let net: Network = NetworkParams::init(arch, &mut rng).unwrap();
        let path = dir.path().join("net.ck");
        save_network(&net, &path).unwrap();
        let back: Network = load_network(&path, Some(arch)).unwrap();
        assert_eq!(back.arch(), arch);
        for (a, b) in net.tensors().iter().zip(back.tensors()) {
            assert_eq!(a.name, b.name);
            assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let bytes = fs::read(&path).unwrap();
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }
    let other = Arch::Enhancer { in_channels: 3, channels: 4, blocks: 1 };
    assert!(load_network::<f32>(dir.path().join("net.ck"), Some(other)).is_err());
}

#[test]
fn niqe_model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus: Vec<Image> = data_io::gen_clean_corpus(100, 96, &mut SeededRng::new(3)).unwrap();
    let model = fit_niqe_model(&corpus, &NiqeConfig::default()).unwrap();
    let path = dir.path().join("niqe.ck");
    save_niqe_model(&model, &path).unwrap();
    let back = load_niqe_model(&path).unwrap();
    assert_eq!(back.config, model.config);
    assert_eq!(back.patches, model.patches);
    for (a, b) in model.mean.iter().chain(&model.cov).zip(back.mean.iter().chain(&back.cov)) {
        assert_eq!(*b, *a as f32 as f64);
    }
}

#[test]
fn benchmark_layout_and_pair_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = DataConfig { train: 4, test: 2, size: 16 };
    let bench: SyntheticBenchmark<f32> = SyntheticBenchmark::generate(&cfg, &mut SeededRng::new(4)).unwrap();
    let layout = DatasetLayout::new(dir.path());
    bench.write(&layout).unwrap();
    for sub in ["trainA", "trainB", "test/low", "test/ref", "test_ood/low", "test_ood/ref"] {
        assert!(dir.path().join(sub).is_dir(), "{sub}");
    }
    let pairs = load_pairs::<f32>(layout.test_low(), layout.test_ref()).unwrap();
    assert_eq!(pairs.names, bench.test.names);
    assert_eq!(pairs.low, bench.test.low);

    let first = layout.test_ref().join(&pairs.names[0]);
    fs::rename(&first, layout.test_ref().join("renamed.ppm")).unwrap();
    match load_pairs::<f32>(layout.test_low(), layout.test_ref()) {
        Err(Error::Dataset(msg)) => assert!(msg.contains(&pairs.names[0]), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn config_file_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    fs::write(&path, "# run\nseed = 9\nftd.lr = 2e-5\n").unwrap();
    let cfg = parse_config(&path).unwrap();
    assert_eq!((cfg.seed, cfg.ftd.lr), (9, 2e-5));
    fs::write(&path, "seed = 9\n\nddc.gamma = zero\n").unwrap();
    assert!(matches!(parse_config(&path), Err(Error::Config { line: 3, .. })));
    assert!(matches!(parse_config(dir.path().join("missing.cfg")), Err(Error::Io { .. })));
}
