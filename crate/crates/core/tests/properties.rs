use difflle::diffusion::{forward_step, reverse_chain, LatentState, OraclePredictor};
use difflle::metrics::{fit_niqe_model, loe, niqe_score, psnr, ssim, NiqeConfig};
use difflle::nnet::{loss, Arch, NetworkParams};
use difflle::pipeline::{enhance_in_domain, enhance_out_of_domain, gamma_adjust, CalibrationConfig, CurveMode};
use difflle::{data_io, Image64, ImageTensor, NoiseSchedule, SeededRng};
use proptest::prelude::*;

fn random_image<T: difflle::Scalar>(rng: &mut SeededRng, c: usize, h: usize, w: usize) -> ImageTensor<T> {
    ImageTensor::from_vec(c, h, w, (0..c * h * w).map(|_| T::lit(rng.uniform())).collect()).unwrap()
}

/// Forward `omega` steps from `x0` with fresh noise, then undo them with the oracle.
fn oracle_roundtrip<T: difflle::Scalar>(x0: &ImageTensor<T>, omega: usize, sched: &NoiseSchedule, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let mut state = LatentState::clean(x0.clone());
    for _ in 0..omega {
        state = forward_step(&state, sched, &mut rng).unwrap();
    }
    let window = sched.tail_window(omega).unwrap();
    let oracle = OraclePredictor { x0: x0.clone(), schedule: sched };
    let back = reverse_chain(&state.tensor, &window, &oracle, sched).unwrap();
    back.max_abs_diff(x0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tail_window_is_low_noise_prefix(t in 1usize..300, n_frac in 0.0f64..1.0, w_frac in 0.0f64..1.0) {
        let sched = NoiseSchedule::linear(t, 1e-4, 0.02).unwrap();
        let n = 1 + ((t - 1) as f64 * n_frac) as usize;
        let sub = sched.ddim_subsequence(n).unwrap();
        let omega = 1 + ((n - 1) as f64 * w_frac) as usize;
        let win = sub.tail_window(omega).unwrap();
        prop_assert_eq!(win.len(), omega);
        prop_assert!(win.iter().all(|&s| s <= sub.ddim_steps()[omega - 1]));
        prop_assert!(win.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn oracle_recovers_x0(seed in any::<u64>(), omega in 1usize..12, t in 12usize..120, n_frac in 0.0f64..1.0) {
        let sched = NoiseSchedule::linear(t, 1e-4, 0.02).unwrap();
        let n = (omega + ((t - omega) as f64 * n_frac) as usize).clamp(omega, t);
        let sched = sched.ddim_subsequence(n).unwrap();
        let mut rng = SeededRng::new(seed ^ 1);
        let x64: Image64 = random_image(&mut rng, 3, 6, 6);
        prop_assert!(oracle_roundtrip(&x64, omega, &sched, seed) <= 1e-5);
        let x32: difflle::Image = x64.cast();
        prop_assert!(oracle_roundtrip(&x32, omega, &sched, seed) <= 1e-3);
    }

    #[test]
    fn gamma_preserves_lightness_order(seed in any::<u64>(), gamma in 0.3f64..3.0, literal in any::<bool>()) {
        let mut rng = SeededRng::new(seed);
        let x: Image64 = random_image(&mut rng, 3, 12, 12);
        let curve = if literal { CurveMode::Literal } else { CurveMode::Brighten };
        let y = gamma_adjust(&x, &CalibrationConfig { gamma, curve, ..Default::default() });
        prop_assert_eq!(loe(&y, &x).unwrap(), 0.0);
    }

    #[test]
    fn enhanced_outputs_in_unit_range(seed in any::<u64>(), hq in 1usize..4, wq in 1usize..4, scale in 0.5f64..3.0) {
        let mut rng = SeededRng::new(seed);
        let arch = Arch::Enhancer { in_channels: 3, channels: 4, blocks: 1 };
        let mut phi = NetworkParams::<f64>::init(arch, &mut rng).unwrap();
        for p in phi.tensors_mut() {
            p.data.iter_mut().for_each(|v| *v *= scale);
        }
        let y: Image64 = random_image(&mut rng, 3, 4 * hq, 4 * wq);
        let a = enhance_in_domain(&y, &phi).unwrap();
        prop_assert!(a.in_unit_range());
        prop_assert_eq!(a.shape(), y.shape());
        let sched = NoiseSchedule::linear(20, 1e-4, 0.02).unwrap();
        let den = NetworkParams::<f64>::init(Arch::Denoiser { in_channels: 3, channels: 4, emb_dim: 4 }, &mut rng).unwrap();
        let b = enhance_out_of_domain(&y, &phi, &CalibrationConfig::default(), &den, &sched, &mut rng).unwrap();
        prop_assert!(b.in_unit_range());
    }

    #[test]
    fn distill_loss_zero_iff_equal(seed in any::<u64>(), j in 0usize..48, d in prop_oneof![-1.0f64..-1e-9, 1e-9f64..1.0]) {
        let mut rng = SeededRng::new(seed);
        let a: Image64 = random_image(&mut rng, 3, 4, 4);
        prop_assert_eq!(loss::l1(&a, &a).unwrap().0, 0.0);
        let mut b = a.clone();
        b.data_mut()[j] += d;
        prop_assert!(loss::l1(&a, &b).unwrap().0 > 0.0);
    }

    #[test]
    fn full_reference_bounds(seed in any::<u64>(), sigma in 0.001f64..0.3) {
        let mut rng = SeededRng::new(seed);
        let a: Image64 = random_image(&mut rng, 3, 16, 16);
        let noise = difflle::rng::sample_gaussian::<f64>(&mut rng, 3, 16, 16).unwrap();
        let b = a.zip_map(&noise, |v, n| (v + sigma * n).clamp(0.0, 1.0)).unwrap();
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!(psnr(&a, &b).unwrap() < psnr(&a, &a).unwrap());
        let s = ssim(&a, &b).unwrap();
        prop_assert!(s.abs() <= 1.0);
        prop_assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }
}

#[test]
fn niqe_stable_under_small_mean_shift() {
    let mut rng = SeededRng::new(21);
    let corpus: Vec<difflle::Image> = data_io::gen_clean_corpus(128, 96, &mut rng).unwrap();
    let model = fit_niqe_model(&corpus[..120], &NiqeConfig::default()).unwrap();
    for img in &corpus[120..] {
        let base = niqe_score(img, &model).unwrap();
        for c in [-0.1f32, -0.05, 0.05, 0.1] {
            let shifted = img.map(|v| v + c);
            let s = niqe_score(&shifted, &model).unwrap();
            assert!((s - base).abs() < 0.05 * base, "shift {c}: {base} -> {s}");
        }
    }
}
