//! Finite-difference verification of hand-written gradients.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

use super::{backward, Gradients, NetworkParams};

/// A scalar reducer over the network output: `(loss, d loss / d output)`.
pub type LossFn<'a, T> = dyn Fn(&ImageTensor<T>) -> Result<(T, ImageTensor<T>)> + 'a;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub tol: f64,
    /// Central-difference step.
    pub step: f64,
    /// Fraction of parameters sampled (every tensor contributes at least one).
    pub fraction: f64,
    pub min_samples: usize,
    /// Also sample entries of the input gradient.
    pub check_input: bool,
    /// Denominator floor of the relative error, so entries whose true
    /// gradient is ~0 are compared absolutely.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { tol: 1e-4, step: 1e-4, fraction: 0.01, min_samples: 32, check_input: true, floor: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Location of the largest error, e.g. `block0.conv1.weight[17]`.
    pub worst: String,
    pub passed: bool,
}

/// Largest network this harness accepts.
pub const MAX_PARAMS: usize = 50_000;

/// Checks `backward` against central differences of `loss(forward(input))`.
pub fn grad_check<T: Scalar>(
    net: &NetworkParams<T>,
    input: &ImageTensor<T>,
    t: Option<usize>,
    loss: &LossFn<'_, T>,
    opts: GradCheckOptions,
    rng: &mut SeededRng,
) -> Result<GradCheckReport> {
    let (out, tape) = net.forward(input, t)?;
    let (_, g_out) = loss(&out)?;
    let (grads, g_in) = backward(net, &tape, &g_out)?;
    grad_check_against(net, input, t, loss, &grads, Some(&g_in), opts, rng)
}

/// Compares caller-supplied analytic gradients with central differences.
#[allow(clippy::too_many_arguments)]
pub fn grad_check_against<T: Scalar>(
    net: &NetworkParams<T>,
    input: &ImageTensor<T>,
    t: Option<usize>,
    loss: &LossFn<'_, T>,
    analytic: &Gradients<T>,
    analytic_input: Option<&ImageTensor<T>>,
    opts: GradCheckOptions,
    rng: &mut SeededRng,
) -> Result<GradCheckReport> {
    let total = net.param_count();
    if total > MAX_PARAMS {
        return Err(Error::InvalidParameter(format!(
            "gradient check limited to {MAX_PARAMS} parameters, network has {total}"
        )));
    }
    let eval = |n: &NetworkParams<T>, x: &ImageTensor<T>| -> Result<f64> { Ok(loss(&n.infer(x, t)?)?.0.as_f64()) };
    let h = opts.step;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(opts.floor);

    let mut picks: Vec<(usize, usize)> = Vec::new();
    for (ti, p) in net.tensors().iter().enumerate() {
        picks.push((ti, rng.below(p.data.len())));
    }
    let want = ((total as f64 * opts.fraction).ceil() as usize).max(opts.min_samples).min(total);
    let mut all: Vec<(usize, usize)> =
        net.tensors().iter().enumerate().flat_map(|(ti, p)| (0..p.data.len()).map(move |j| (ti, j))).collect();
    rng.shuffle(&mut all);
    for pick in all {
        if picks.len() >= want {
            break;
        }
        if !picks.contains(&pick) {
            picks.push(pick);
        }
    }

    let mut probe = net.clone();
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for &(ti, j) in &picks {
        let orig = probe.tensors()[ti].data[j];
        probe.tensors_mut()[ti].data[j] = orig + T::lit(h);
        let up = eval(&probe, input)?;
        probe.tensors_mut()[ti].data[j] = orig - T::lit(h);
        let down = eval(&probe, input)?;
        probe.tensors_mut()[ti].data[j] = orig;
        let numeric = (up - down) / (2.0 * h);
        let e = rel(analytic.tensors[ti][j].as_f64(), numeric);
        checked += 1;
        if e > worst.0 || worst.1.is_empty() {
            worst = (e, format!("{}[{j}]", net.tensors()[ti].name));
        }
    }
    if let (true, Some(gi)) = (opts.check_input, analytic_input) {
        let n_in = (input.len() / 50).clamp(4, 64).min(input.len());
        let mut x = input.clone();
        for _ in 0..n_in {
            let j = rng.below(x.len());
            let orig = x.data()[j];
            x.data_mut()[j] = orig + T::lit(h);
            let up = eval(net, &x)?;
            x.data_mut()[j] = orig - T::lit(h);
            let down = eval(net, &x)?;
            x.data_mut()[j] = orig;
            let e = rel(gi.data()[j].as_f64(), (up - down) / (2.0 * h));
            checked += 1;
            if e > worst.0 {
                worst = (e, format!("input[{j}]"));
            }
        }
    }
    Ok(GradCheckReport { max_rel_error: worst.0, checked, worst: worst.1, passed: worst.0 <= opts.tol })
}

/// Gradient check of a freshly initialized `arch` on a random `h×w` input,
/// reduced to a scalar by a random projection of the output.
pub fn check_network(
    arch: super::Arch,
    h: usize,
    w: usize,
    t: Option<usize>,
    opts: GradCheckOptions,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = SeededRng::new(seed);
    let net = NetworkParams::<f64>::init(arch, &mut rng)?;
    let c = arch.in_channels();
    let input = ImageTensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.uniform()).collect())?;
    let (out, _) = net.forward(&input, t)?;
    let (oc, oh, ow) = out.shape();
    let direction = crate::rng::sample_gaussian::<f64>(&mut rng, oc, oh, ow)?;
    let loss = move |o: &ImageTensor<f64>| super::loss::projection(o, &direction);
    grad_check(&net, &input, t, &loss, opts, &mut rng)
}

/// Layer-level check: every entry of every input, weight and bias of each
/// layer kind, against central differences of `Σ out · r` for a random `r`.
/// Returns the largest relative error per layer (f64, step 1e-4).
pub fn check_layers(seed: u64) -> Vec<(String, f64)> {
    use super::layers::*;

    const H: f64 = 1e-4;
    let mut rng = SeededRng::new(seed);
    let rand_tensor = |rng: &mut SeededRng, c, h, w| {
        ImageTensor::<f64>::from_vec(c, h, w, (0..c * h * w).map(|_| rng.gaussian()).collect()).unwrap()
    };
    let rand_vec = |rng: &mut SeededRng, n| (0..n).map(|_| rng.gaussian()).collect::<Vec<f64>>();
    let dot =
        |a: &ImageTensor<f64>, b: &ImageTensor<f64>| a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum::<f64>();
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    let fd = |params: &[f64], analytic: &[f64], f: &dyn Fn(&[f64]) -> f64| {
        let mut p = params.to_vec();
        let mut worst: f64 = 0.0;
        for i in 0..p.len() {
            let orig = p[i];
            p[i] = orig + H;
            let up = f(&p);
            p[i] = orig - H;
            let down = f(&p);
            p[i] = orig;
            worst = worst.max(rel(analytic[i], (up - down) / (2.0 * H)));
        }
        worst
    };

    let mut out = Vec::new();
    let zero_k4 = ConvSpec { in_ch: 2, out_ch: 3, kernel: 4, stride: 2, pad: 1, padding: Padding::Zero };
    let valid = ConvSpec { in_ch: 3, out_ch: 1, kernel: 3, stride: 1, pad: 0, padding: Padding::Zero };
    let convs = [
        ("conv3x3 reflect", ConvSpec::same3x3(2, 3), 5, 4),
        ("conv3x3 reflect stride 2", ConvSpec { stride: 2, ..ConvSpec::same3x3(2, 2) }, 6, 6),
        ("conv4x4 zero-pad stride 2", zero_k4, 8, 8),
        ("conv3x3 valid", valid, 5, 5),
    ];
    for (name, spec, h, w) in convs {
        let x = rand_tensor(&mut rng, spec.in_ch, h, w);
        let wt = rand_vec(&mut rng, spec.weight_len());
        let b = rand_vec(&mut rng, spec.out_ch);
        let (o, cache) = conv2d_forward(&spec, &wt, &b, &x).unwrap();
        let r = rand_tensor(&mut rng, o.channels(), o.height(), o.width());
        let (gx, gw, gb) = conv2d_backward(&spec, &wt, &cache, &r).unwrap();
        let e = fd(&wt, &gw, &|p| dot(&conv2d_forward(&spec, p, &b, &x).unwrap().0, &r))
            .max(fd(&b, &gb, &|p| dot(&conv2d_forward(&spec, &wt, p, &x).unwrap().0, &r)))
            .max(fd(x.data(), gx.data(), &|p| {
                let xi = ImageTensor::from_vec(spec.in_ch, h, w, p.to_vec()).unwrap();
                dot(&conv2d_forward(&spec, &wt, &b, &xi).unwrap().0, &r)
            }));
        out.push((name.to_string(), e));
    }

    let x = rand_tensor(&mut rng, 3, 4, 5);
    let scale = rand_vec(&mut rng, 3);
    let shift = rand_vec(&mut rng, 3);
    let (_, cache) = instance_norm_forward(&x, &scale, &shift);
    let r = rand_tensor(&mut rng, 3, 4, 5);
    let (gx, gs, gb) = instance_norm_backward(&scale, &cache, &r);
    let e = fd(&scale, &gs, &|p| dot(&instance_norm_forward(&x, p, &shift).0, &r))
        .max(fd(&shift, &gb, &|p| dot(&instance_norm_forward(&x, &scale, p).0, &r)))
        .max(fd(x.data(), gx.data(), &|p| {
            let xi = ImageTensor::from_vec(3, 4, 5, p.to_vec()).unwrap();
            dot(&instance_norm_forward(&xi, &scale, &shift).0, &r)
        }));
    out.push(("instance norm".to_string(), e));

    let x = rand_tensor(&mut rng, 2, 3, 3);
    let r = rand_tensor(&mut rng, 2, 3, 3);
    for (name, slope) in [("relu", 0.0), ("leaky relu", LEAKY_SLOPE)] {
        let g = leaky_relu_backward(&x, &r, slope);
        let e = fd(x.data(), g.data(), &|p| {
            let xi = ImageTensor::from_vec(2, 3, 3, p.to_vec()).unwrap();
            dot(&leaky_relu_forward(&xi, slope), &r)
        });
        out.push((name.to_string(), e));
    }

    let x = rand_tensor(&mut rng, 3, 2, 2);
    let emb = time_embedding::<f64>(17, 8);
    let wt = rand_vec(&mut rng, 3 * 8);
    let r = rand_tensor(&mut rng, 3, 2, 2);
    let gw = time_bias_backward(&r, &emb);
    let e = fd(&wt, &gw, &|p| {
        let mut y = x.clone();
        time_bias_forward(&mut y, p, &emb);
        dot(&y, &r)
    });
    out.push(("time bias".to_string(), e));

    let x = rand_tensor(&mut rng, 2, 3, 2);
    let r = rand_tensor(&mut rng, 2, 6, 4);
    let g = upsample2_backward(&r);
    let e = fd(x.data(), g.data(), &|p| {
        let xi = ImageTensor::from_vec(2, 3, 2, p.to_vec()).unwrap();
        dot(&upsample2_forward(&xi), &r)
    });
    out.push(("nearest upsample".to_string(), e));
    out
}
