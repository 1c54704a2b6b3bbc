//! Unpaired enhancer pretraining: two generators, two patch critics,
//! least-squares adversarial losses and an L1 cycle term.

use crate::error::{Error, Result};
use crate::nnet::{adam_step, backward, loss, AdamState, Arch, Gradients, NetKind, NetworkParams};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

use super::{Batcher, TrainConfig};

/// Trained networks. `g` maps low to normal light and is the enhancer;
/// `d_a` scores membership of the low-light training domain.
#[derive(Debug, Clone)]
pub struct UemModels<T> {
    pub g: NetworkParams<T>,
    pub f: NetworkParams<T>,
    pub d_a: NetworkParams<T>,
    pub d_b: NetworkParams<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UemEpoch {
    pub adversarial: f64,
    pub cycle: f64,
    pub discriminator: f64,
}

struct Direction<T> {
    adv: f64,
    cyc: f64,
    fake: ImageTensor<T>,
}

/// One translation direction `x → gen(x) → back(gen(x))` judged by `disc`.
/// Accumulates generator gradients into `g_gen` and `g_back`.
#[allow(clippy::too_many_arguments)]
fn direction<T: Scalar>(
    gen: &NetworkParams<T>,
    back: &NetworkParams<T>,
    disc: &NetworkParams<T>,
    x: &ImageTensor<T>,
    lambda: f64,
    g_gen: &mut Gradients<T>,
    g_back: &mut Gradients<T>,
) -> Result<Direction<T>> {
    let (fake, tape_gen) = gen.forward(x, None)?;
    let (score, tape_d) = disc.forward(&fake, None)?;
    let (adv, g_score) = loss::least_squares(&score, 1.0);
    let (_, mut g_fake) = backward(disc, &tape_d, &g_score)?;
    let mut cyc = 0.0;
    if lambda > 0.0 {
        let (rec, tape_back) = back.forward(&fake, None)?;
        let (c, g_rec) = loss::l1(&rec, x)?;
        cyc = c.as_f64();
        let (gb, g_fake_cyc) = backward(back, &tape_back, &g_rec.scale(T::lit(lambda)))?;
        g_back.accumulate(&gb);
        g_fake.add_assign(&g_fake_cyc)?;
    }
    let (gg, _) = backward(gen, &tape_gen, &g_fake)?;
    g_gen.accumulate(&gg);
    Ok(Direction { adv: adv.as_f64(), cyc, fake })
}

/// Least-squares critic loss `½·mean((D(real) − 1)²) + ½·mean(D(fake)²)`.
fn critic<T: Scalar>(
    disc: &NetworkParams<T>,
    real: &ImageTensor<T>,
    fake: &ImageTensor<T>,
    grads: &mut Gradients<T>,
) -> Result<f64> {
    let half = T::lit(0.5);
    let mut total = 0.0;
    for (img, label) in [(real, 1.0), (fake, 0.0)] {
        let (score, tape) = disc.forward(img, None)?;
        let (l, g) = loss::least_squares(&score, label);
        total += 0.5 * l.as_f64();
        let (gd, _) = backward(disc, &tape, &g.scale(half))?;
        grads.accumulate(&gd);
    }
    Ok(total)
}

/// Trains the unpaired translation model on `low` (domain A) and `normal`
/// (domain B). Each step pairs a batch from each set drawn independently.
pub fn train_uem<T: Scalar>(
    low: &[ImageTensor<T>],
    normal: &[ImageTensor<T>],
    gen_arch: Arch,
    disc_arch: Arch,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<(UemModels<T>, Vec<UemEpoch>)> {
    cfg.validate()?;
    if low.is_empty() || normal.is_empty() {
        return Err(Error::Empty("unpaired training sets".into()));
    }
    if gen_arch.kind() != NetKind::Enhancer || disc_arch.kind() != NetKind::Discriminator {
        return Err(Error::InvalidParameter("expected enhancer and discriminator architectures".into()));
    }
    let mut m = UemModels {
        g: NetworkParams::init(gen_arch, rng)?,
        f: NetworkParams::init(gen_arch, rng)?,
        d_a: NetworkParams::init(disc_arch, rng)?,
        d_b: NetworkParams::init(disc_arch, rng)?,
    };
    let mut opt = [&m.g, &m.f, &m.d_a, &m.d_b].map(|n| AdamState::new(n, cfg.adam));
    let batcher = Batcher::from_config(cfg);
    let lambda = cfg.lambda_cyc;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let batches_a = batcher.epoch(low, rng)?;
        let batches_b = batcher.epoch(normal, rng)?;
        let steps = batches_a.len().min(batches_b.len());
        let mut stats = UemEpoch { adversarial: 0.0, cycle: 0.0, discriminator: 0.0 };
        for (ba, bb) in batches_a.iter().zip(&batches_b).take(steps) {
            let n = ba.len().min(bb.len());
            let inv = T::lit(1.0 / n as f64);
            let mut gg = Gradients::zeros_for(&m.g);
            let mut gf = Gradients::zeros_for(&m.f);
            let mut fakes = Vec::with_capacity(n);
            for (a, b) in ba.iter().zip(bb).take(n) {
                let ab = direction(&m.g, &m.f, &m.d_b, a, lambda, &mut gg, &mut gf)?;
                let ba_ = direction(&m.f, &m.g, &m.d_a, b, lambda, &mut gf, &mut gg)?;
                stats.adversarial += (ab.adv + ba_.adv) / n as f64;
                stats.cycle += (ab.cyc + ba_.cyc) / n as f64;
                fakes.push((ab.fake, ba_.fake));
            }
            gg.scale(inv);
            gf.scale(inv);
            let [og, of, oa, ob] = &mut opt;
            adam_step(&mut m.g, &gg, og, lr)?;
            adam_step(&mut m.f, &gf, of, lr)?;

            let mut gda = Gradients::zeros_for(&m.d_a);
            let mut gdb = Gradients::zeros_for(&m.d_b);
            for ((a, b), (fake_b, fake_a)) in ba.iter().zip(bb).zip(&fakes) {
                stats.discriminator += critic(&m.d_b, b, fake_b, &mut gdb)? / n as f64;
                stats.discriminator += critic(&m.d_a, a, fake_a, &mut gda)? / n as f64;
            }
            gda.scale(inv);
            gdb.scale(inv);
            adam_step(&mut m.d_a, &gda, oa, lr)?;
            adam_step(&mut m.d_b, &gdb, ob, lr)?;
        }
        let s = steps.max(1) as f64;
        history.push(UemEpoch {
            adversarial: stats.adversarial / s,
            cycle: stats.cycle / s,
            discriminator: stats.discriminator / s,
        });
    }
    Ok((m, history))
}
