use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use difflle::cli::{dispatch, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use difflle::data_io::{load_network, load_pairs, DatasetLayout};
use difflle::metrics::psnr;
use difflle::pipeline::enhance_in_domain;
use difflle::Network;

const TINY: &str = "\
data.train = 6
data.test = 3
data.size = 32
denoiser.channels = 4
denoiser.emb_dim = 4
denoiser.epochs = 2
denoiser.batch = 3
denoiser.patch = 16
uem.channels = 4
uem.blocks = 1
uem.epochs = 1
uem.steps_per_epoch = 2
uem.patch = 32
disc.channels = 4
ftd.epochs = 2
ftd.batch = 2
ftd.patch = 16
ftd.steps_per_epoch = 2
";

fn run(args: &[&str]) -> i32 {
    dispatch(std::iter::once("difflle").chain(args.iter().copied()).map(String::from).collect())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Every stage on a tiny benchmark, with all artifacts under `root`.
fn full_run(root: &Path, jobs: &str) {
    let cfg = root.join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    let base = ["--config", s(&cfg), "--seed", "3", "--jobs", jobs];
    let data = root.join("data");
    let r = |a: &[&str]| {
        let args: Vec<&str> = base.iter().copied().chain(a.iter().copied()).collect();
        assert_eq!(run(&args), EXIT_OK, "{a:?}");
    };
    r(&["gen-data", "--out", s(&data)]);
    r(&["train-denoiser", "--data", s(&data), "--out", s(&root.join("den"))]);
    r(&["train-uem", "--data", s(&data), "--out", s(&root.join("uem"))]);
    let den = root.join("den/denoiser.ck");
    let uem = root.join("uem/enhancer.ck");
    r(&["distill", "--data", s(&data), "--enhancer", s(&uem), "--denoiser", s(&den), "--out", s(&root.join("ftd"))]);
    let tuned = root.join("ftd/enhancer.ck");
    let ood = DatasetLayout::new(&data).ood_low();
    r(&["enhance", "--enhancer", s(&tuned), "--out", s(&root.join("plain")), s(&ood)]);
    r(&["enhance", "--enhancer", s(&tuned), "--ddc", "--denoiser", s(&den), "--out", s(&root.join("ddc")), s(&ood)]);
    let ood_ref = DatasetLayout::new(&data).ood_ref();
    r(&[
        "evaluate",
        "--images",
        s(&root.join("ddc")),
        "--reference",
        s(&ood_ref),
        "--original",
        s(&ood),
        "--disc",
        s(&root.join("uem/disc_low.ck")),
        "--out",
        s(&root.join("eval")),
    ]);
    r(&[
        "cds",
        "--disc",
        s(&root.join("uem/disc_low.ck")),
        "--ddc",
        "--denoiser",
        s(&den),
        "--out",
        s(&root.join("cds")),
        s(&ood),
    ]);
    r(&[
        "ablate-omega",
        "--enhancer",
        s(&tuned),
        "--denoiser",
        s(&den),
        "--data",
        s(&data),
        "--out",
        s(&root.join("omega")),
    ]);
    r(&[
        "ablate-settings",
        "--uem",
        s(&uem),
        "--distilled",
        s(&tuned),
        "--denoiser",
        s(&den),
        "--data",
        s(&data),
        "--out",
        s(&root.join("settings")),
    ]);
}

#[test]
fn pipeline_runs_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    full_run(a.path(), "1");
    full_run(b.path(), "3");
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(v == &sb[k], "{} differs between runs", k.display());
    }

    let root = a.path();
    let names: Vec<String> = fs::read_dir(root.join("data/test_ood/low"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    for n in &names {
        assert!(root.join("plain").join(n).is_file(), "{n} not mirrored");
    }

    let omega = fs::read_to_string(root.join("omega/omega_ablation.csv")).unwrap();
    let lines: Vec<&str> = omega.lines().collect();
    assert_eq!(lines[0], "omega,psnr,ssim");
    assert_eq!(lines.len(), 6);
    let phi: Network = load_network(root.join("ftd/enhancer.ck"), None).unwrap();
    let set = load_pairs::<f32>(root.join("data/test_ood/low"), root.join("data/test_ood/ref")).unwrap();
    let baseline = set
        .low
        .iter()
        .zip(&set.reference)
        .map(|(y, r)| psnr(&enhance_in_domain(y, &phi).unwrap(), r).unwrap())
        .sum::<f64>()
        / set.low.len() as f64;
    assert_eq!(lines[1].split(',').nth(1).unwrap(), format!("{baseline:.4}"));

    let settings = fs::read_to_string(root.join("settings/settings_ablation.csv")).unwrap();
    assert_eq!(settings.lines().count(), 6);
    let cds = fs::read_to_string(root.join("cds/cds.csv")).unwrap();
    assert!(cds.starts_with("input,cds\nraw,") && cds.contains("\ncalibrated,"), "{cds}");
    let eval = fs::read_to_string(root.join("eval/metrics.csv")).unwrap();
    assert_eq!(eval.lines().next().unwrap(), "image,psnr,ssim,loe,cds");
    assert!(root.join("eval/metrics.txt").is_file());
}

#[test]
fn ddc_with_identity_settings_matches_plain_enhance() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = root.join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    let data = root.join("data");
    assert_eq!(run(&["--config", s(&cfg), "gen-data", "--out", s(&data)]), EXIT_OK);
    assert_eq!(
        run(&[
            "--config",
            s(&cfg),
            "--set",
            "uem.epochs=0",
            "train-uem",
            "--data",
            s(&data),
            "--out",
            s(&root.join("uem"))
        ]),
        EXIT_OK
    );
    assert_eq!(
        run(&[
            "--config",
            s(&cfg),
            "--set",
            "denoiser.epochs=0",
            "train-denoiser",
            "--data",
            s(&data),
            "--out",
            s(&root.join("den"))
        ]),
        EXIT_OK
    );
    let phi = root.join("uem/enhancer.ck");
    let den = root.join("den/denoiser.ck");
    let low = data.join("test_ood/low");
    assert_eq!(
        run(&["--config", s(&cfg), "enhance", "--enhancer", s(&phi), "--out", s(&root.join("a")), s(&low)]),
        EXIT_OK
    );
    let code = run(&[
        "--config",
        s(&cfg),
        "--set",
        "ddc.gamma=1",
        "--set",
        "ddc.omega=0",
        "enhance",
        "--ddc",
        "--denoiser",
        s(&den),
        "--enhancer",
        s(&phi),
        "--out",
        s(&root.join("b")),
        s(&low),
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(snapshot(&root.join("a")), snapshot(&root.join("b")));

    // Scoring images against themselves.
    assert_eq!(run(&["evaluate", "--images", s(&low), "--reference", s(&low), "--out", s(&root.join("e"))]), EXIT_OK);
    let csv = fs::read_to_string(root.join("e/metrics.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(&cols[1..], &["99.0000", "1.0000"], "{line}");
    }
}

#[test]
fn seed_sources_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = root.join("tiny.cfg");
    fs::write(&cfg, format!("{TINY}seed = 5\n")).unwrap();
    let gen = |name: &str, extra: &[&str]| {
        let out = root.join(name);
        let mut args = vec!["--config", s(&cfg)];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["gen-data", "--out", s(&out)]);
        assert_eq!(run(&args), EXIT_OK);
        snapshot(&out)
    };
    let file = gen("file", &[]);
    let set7 = gen("set7", &["--set", "seed=7"]);
    let flag7 = gen("flag7", &["--seed", "7", "--set", "seed=9"]);
    assert_ne!(file, set7);
    assert_eq!(set7, flag7);

    let bin = env!("CARGO_BIN_EXE_difflle");
    let out = root.join("env7");
    let status = Command::new(bin)
        .env("DIFFLLE_SEED", "7")
        .args(["--config", s(&cfg), "gen-data", "--out", s(&out)])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(snapshot(&out), set7);
}

#[test]
fn exit_codes() {
    let bin = env!("CARGO_BIN_EXE_difflle");
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&help.stdout).contains("ablate-omega"));

    let bad = Command::new(bin).arg("sharpen").output().unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("Usage"));

    for args in [
        &["gen-data", "--out", "x", "--colour"][..],
        &["gen-data", "--out", "x", "--set", "ddc.gama=2"],
        &["enhance", "--enhancer", "e.ck", "--out", "o", "--ddc", "in.ppm"],
        &["evaluate", "--images", "x"],
        &[],
    ] {
        let out = Command::new(bin).args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(EXIT_USAGE), "{args:?}");
    }

    let dir = tempfile::tempdir().unwrap();
    let missing = Command::new(bin)
        .args(["enhance", "--enhancer", s(&dir.path().join("nope.ck")), "--out", s(dir.path()), "in.ppm"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(EXIT_RUNTIME));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.ck"));
}
