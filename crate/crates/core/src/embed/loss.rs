//! Structure and adversarial objectives with analytic gradients.
//!
//! All losses are minimized; the skip-gram and generator payoffs are
//! negated so that lower is better everywhere.

use alloc::format;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix, SparseRows};
use crate::nn::{log_sigmoid, sigmoid, BatchStats, Grads, Input, Mlp, Mode};
use crate::walker::PairBatch;

/// Discriminator outputs are clamped into `[PROB_CLAMP, 1 − PROB_CLAMP]`
/// before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct IdwOutput {
    pub loss: f64,
    pub target_grads: Grads,
    pub context_grads: Grads,
    pub target_stats: BatchStats,
    pub context_stats: BatchStats,
    pub signature: u64,
}

/// Negative-sampling skip-gram loss averaged over the batch:
/// `−Σ [ln σ(u′_cᵀu_t) + Σ_n ln σ(−u′_nᵀu_t)] / B`, with `u = G(x)` and
/// `u′ = F(x)`.
///
/// Targets form one batch through `target`; contexts followed by all
/// negatives form one batch through `context`.
pub fn idw_batch_loss(
    target: &Mlp,
    context: &Mlp,
    batch: &PairBatch,
    features: &SparseRows,
) -> Result<IdwOutput> {
    let b = batch.len();
    let k = batch.k;
    if b == 0 || batch.negatives.len() != b * k || batch.contexts.len() != b {
        return Err(Error::InvalidArgument("malformed pair batch".into()));
    }
    let n = features.rows() as u32;
    if batch.targets.iter().chain(&batch.contexts).chain(&batch.negatives).any(|&i| i >= n) {
        return Err(Error::InvalidArgument(format!("pair batch index out of range 0..{n}")));
    }
    let t_rows = features.gather(batch.targets.iter().map(|&i| i as usize));
    let c_rows = features.gather(
        batch
            .contexts
            .iter()
            .chain(&batch.negatives)
            .map(|&i| i as usize),
    );
    let t_tape = target.forward(Input::Sparse(&t_rows), Mode::Train)?;
    let c_tape = context.forward(Input::Sparse(&c_rows), Mode::Train)?;
    let u = t_tape.output();
    let v = c_tape.output();
    if u.cols() != v.cols() {
        return Err(Error::shape(u.cols(), v.cols()));
    }

    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut du = Matrix::zeros(u.rows(), u.cols());
    let mut dv = Matrix::zeros(v.rows(), v.cols());
    for r in 0..b {
        let ur = u.row(r);
        let pos = r;
        let s = dot(ur, v.row(pos));
        loss -= log_sigmoid(s);
        let coef = -sigmoid(-s) * inv_b;
        axpy(coef, v.row(pos), du.row_mut(r));
        axpy(coef, ur, dv.row_mut(pos));
        for j in 0..k {
            let neg = b + r * k + j;
            let s = dot(ur, v.row(neg));
            loss -= log_sigmoid(-s);
            let coef = sigmoid(s) * inv_b;
            axpy(coef, v.row(neg), du.row_mut(r));
            axpy(coef, ur, dv.row_mut(neg));
        }
    }
    loss *= inv_b;

    let mut target_grads = target.zero_grads();
    let mut context_grads = context.zero_grads();
    target.backward(&t_tape, &du, Some(&mut target_grads), false)?;
    context.backward(&c_tape, &dv, Some(&mut context_grads), false)?;
    let signature = target.kink_signature(&t_tape) ^ context.kink_signature(&c_tape).rotate_left(17);
    Ok(IdwOutput {
        loss,
        target_grads,
        context_grads,
        target_stats: t_tape.into_stats(),
        context_stats: c_tape.into_stats(),
        signature,
    })
}

#[derive(Debug, Clone)]
pub struct DiscriminatorOutput {
    pub loss: f64,
    pub grads: Grads,
    pub real_stats: BatchStats,
    pub fake_stats: BatchStats,
    /// Fraction of real and fake samples the discriminator labels correctly.
    pub accuracy: f64,
    pub signature: u64,
}

#[inline]
fn clamp_prob(p: f64) -> (f64, bool) {
    if p < PROB_CLAMP {
        (PROB_CLAMP, true)
    } else if p > 1.0 - PROB_CLAMP {
        (1.0 - PROB_CLAMP, true)
    } else {
        (p, false)
    }
}

/// `−(mean ln D(z) + mean ln(1 − D(u)))` over prior samples `real` and
/// detached embeddings `fake`. Each side is its own batch-norm batch.
pub fn discriminator_loss(disc: &Mlp, real: &Matrix, fake: &Matrix) -> Result<DiscriminatorOutput> {
    if real.rows() != fake.rows() || real.cols() != fake.cols() {
        return Err(Error::shape(
            format_args!("{:?}", real.shape()),
            format_args!("{:?}", fake.shape()),
        ));
    }
    let b = real.rows();
    let inv_b = 1.0 / b as f64;
    let r_tape = disc.forward(Input::Dense(real), Mode::Train)?;
    let f_tape = disc.forward(Input::Dense(fake), Mode::Train)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut dr = Matrix::zeros(b, 1);
    let mut df = Matrix::zeros(b, 1);
    for i in 0..b {
        let d_real = r_tape.output()[(i, 0)];
        let (p, clamped) = clamp_prob(d_real);
        loss -= libm::log(p) * inv_b;
        if !clamped {
            dr[(i, 0)] = -inv_b / p;
        }
        correct += usize::from(d_real > 0.5);

        let d_fake = f_tape.output()[(i, 0)];
        let (q, clamped) = clamp_prob(d_fake);
        loss -= libm::log(1.0 - q) * inv_b;
        if !clamped {
            df[(i, 0)] = inv_b / (1.0 - q);
        }
        correct += usize::from(d_fake < 0.5);
    }
    let mut grads = disc.zero_grads();
    disc.backward(&r_tape, &dr, Some(&mut grads), false)?;
    disc.backward(&f_tape, &df, Some(&mut grads), false)?;
    let signature = disc.kink_signature(&r_tape) ^ disc.kink_signature(&f_tape).rotate_left(29);
    Ok(DiscriminatorOutput {
        loss,
        grads,
        real_stats: r_tape.into_stats(),
        fake_stats: f_tape.into_stats(),
        accuracy: correct as f64 / (2 * b) as f64,
        signature,
    })
}

/// Share of real samples scored above 0.5 and fake samples below 0.5, with
/// batch statistics computed per side.
pub fn discriminator_accuracy(disc: &Mlp, real: &Matrix, fake: &Matrix) -> Result<f64> {
    let r = disc.forward(Input::Dense(real), Mode::Train)?.into_output();
    let f = disc.forward(Input::Dense(fake), Mode::Train)?.into_output();
    let hits = r.as_slice().iter().filter(|&&p| p > 0.5).count()
        + f.as_slice().iter().filter(|&&p| p < 0.5).count();
    Ok(hits as f64 / (r.rows() + f.rows()) as f64)
}

#[derive(Debug, Clone)]
pub struct AdversarialOutput {
    pub loss: f64,
    /// Gradients for the generator only; the discriminator is read, never
    /// differentiated with respect to its own parameters.
    pub grads: Grads,
    pub generator_stats: BatchStats,
    pub signature: u64,
}

/// `−mean ln D(G(x))` for the feature rows `rows`.
pub fn generator_adversarial_loss(gen: &Mlp, disc: &Mlp, rows: &SparseRows) -> Result<AdversarialOutput> {
    let g_tape = gen.forward(Input::Sparse(rows), Mode::Train)?;
    let d_tape = disc.forward(Input::Dense(g_tape.output()), Mode::Train)?;
    let b = rows.rows();
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut dd = Matrix::zeros(b, 1);
    for i in 0..b {
        let (p, clamped) = clamp_prob(d_tape.output()[(i, 0)]);
        loss -= libm::log(p) * inv_b;
        if !clamped {
            dd[(i, 0)] = -inv_b / p;
        }
    }
    let du = disc
        .backward(&d_tape, &dd, None, true)?
        .expect("input gradient was requested");
    let mut grads = gen.zero_grads();
    gen.backward(&g_tape, &du, Some(&mut grads), false)?;
    let signature = gen.kink_signature(&g_tape) ^ disc.kink_signature(&d_tape).rotate_left(7);
    Ok(AdversarialOutput {
        loss,
        grads,
        generator_stats: g_tape.into_stats(),
        signature,
    })
}

#[derive(Debug, Clone)]
pub struct DaeOutput {
    pub loss: f64,
    pub encoder_grads: Grads,
    pub decoder_grads: Grads,
    pub encoder_stats: BatchStats,
    pub signature: u64,
}

/// Masks each input entry to zero with probability `corruption`, encodes,
/// decodes and returns the mean squared error against the clean rows.
pub fn dae_batch_loss<R: Rng + ?Sized>(
    encoder: &Mlp,
    decoder: &Mlp,
    rows: &SparseRows,
    corruption: f64,
    rng: &mut R,
) -> Result<DaeOutput> {
    if !(0.0..1.0).contains(&corruption) {
        return Err(Error::InvalidArgument(format!(
            "corruption must lie in [0, 1), got {corruption}"
        )));
    }
    let noisy = if corruption > 0.0 {
        rows.filter(|_, _, _| rng.random::<f64>() >= corruption)
    } else {
        rows.clone()
    };
    let e_tape = encoder.forward(Input::Sparse(&noisy), Mode::Train)?;
    let d_tape = decoder.forward(Input::Dense(e_tape.output()), Mode::Train)?;
    let y = d_tape.output();
    if y.cols() != rows.cols() {
        return Err(Error::shape(rows.cols(), y.cols()));
    }
    let clean = rows.to_dense();
    let scale = 1.0 / (y.rows() * y.cols()) as f64;
    let mut loss = 0.0;
    let mut dy = Matrix::zeros(y.rows(), y.cols());
    for ((g, &yv), &xv) in dy.as_mut_slice().iter_mut().zip(y.as_slice()).zip(clean.as_slice()) {
        let r = yv - xv;
        loss += r * r;
        *g = 2.0 * r * scale;
    }
    loss *= scale;
    let mut decoder_grads = decoder.zero_grads();
    let dh = decoder
        .backward(&d_tape, &dy, Some(&mut decoder_grads), true)?
        .expect("input gradient was requested");
    let mut encoder_grads = encoder.zero_grads();
    encoder.backward(&e_tape, &dh, Some(&mut encoder_grads), false)?;
    let signature = encoder.kink_signature(&e_tape) ^ decoder.kink_signature(&d_tape).rotate_left(11);
    Ok(DaeOutput {
        loss,
        encoder_grads,
        decoder_grads,
        encoder_stats: e_tape.into_stats(),
        signature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradient_check, Dense, Layer, NormOrder};
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn features(n: usize, rng: &mut ChaCha8Rng) -> SparseRows {
        let m = Matrix::from_fn(n, n, |i, j| {
            if i == j || rng.random::<f64>() < 0.4 {
                rng.random::<f64>() * 2.0
            } else {
                0.0
            }
        });
        SparseRows::from_dense(&m)
    }

    fn batch(n: u32, b: usize, k: usize, rng: &mut ChaCha8Rng) -> PairBatch {
        let mut out = PairBatch {
            k,
            ..PairBatch::default()
        };
        for _ in 0..b {
            out.targets.push(rng.random_range(0..n));
            out.contexts.push(rng.random_range(0..n));
            for _ in 0..k {
                out.negatives.push(rng.random_range(0..n));
            }
        }
        out
    }

    /// A generator whose output is identically zero.
    fn zero_net(inputs: usize, dim: usize) -> Mlp {
        let d = Dense::from_parts(Matrix::zeros(inputs, dim), vec![0.0; dim]).unwrap();
        Mlp::new(inputs, vec![Layer::Dense(d)]).unwrap()
    }

    /// Discriminator whose output is `sigmoid(bias)` regardless of input.
    fn constant_disc(dim: usize, bias: f64, rng: &mut ChaCha8Rng) -> Mlp {
        let mut d = Mlp::discriminator(dim, &[4], rng);
        let last = d.layers().len() - 2;
        if let Layer::Dense(out) = &mut d.layers_mut()[last] {
            out.weight.fill(0.0);
            out.bias[0] = bias;
        }
        d
    }

    #[test]
    fn idw_zero_embeddings_cost_one_plus_k_ln2() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = features(6, &mut rng);
        let b = batch(6, 4, 5, &mut rng);
        let out = idw_batch_loss(&zero_net(6, 3), &zero_net(6, 3), &b, &x).unwrap();
        assert!((out.loss - 6.0 * core::f64::consts::LN_2).abs() < 1e-12);
        assert!((out.loss - 4.1589).abs() < 1e-4);
    }

    #[test]
    fn idw_saturated_scores_cost_nothing() {
        // one-hot features, identity target net, context net mapping each
        // node to ±scaled copies so the positive scores +50 and negatives −50
        let x = SparseRows::from_dense(&Matrix::identity(3));
        let ident = Mlp::new(
            3,
            vec![Layer::Dense(Dense::from_parts(Matrix::identity(3), vec![0.0; 3]).unwrap())],
        )
        .unwrap();
        let mut w = Matrix::zeros(3, 3);
        // context(0) = 50·e0, context(1) = −50·e0
        w[(0, 0)] = 50.0;
        w[(1, 0)] = -50.0;
        let ctx = Mlp::new(3, vec![Layer::Dense(Dense::from_parts(w, vec![0.0; 3]).unwrap())]).unwrap();
        let b = PairBatch {
            targets: vec![0],
            contexts: vec![0],
            negatives: vec![1; 5],
            k: 5,
        };
        let out = idw_batch_loss(&ident, &ctx, &b, &x).unwrap();
        assert!(out.loss < 1e-20, "{}", out.loss);
    }

    #[test]
    fn idw_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = features(6, &mut rng);
        let b = batch(6, 5, 3, &mut rng);
        let g = Mlp::generator(6, 3, NormOrder::AfterActivation, &mut rng);
        let f = Mlp::generator(6, 3, NormOrder::AfterActivation, &mut rng);
        let out = idw_batch_loss(&g, &f, &b, &x).unwrap();
        let mut nets = vec![g, f];
        let report = gradient_check(&mut nets, &[out.target_grads, out.context_grads], 1e-3, |n| {
            let o = idw_batch_loss(&n[0], &n[1], &b, &x).unwrap();
            (o.loss, o.signature)
        });
        assert!(report.max_rel_error < 1e-4, "{report:?}");
        assert!(report.checked > 40);
    }

    #[test]
    fn untrained_half_discriminator_costs_two_ln2() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = constant_disc(2, 0.0, &mut rng);
        let real = Matrix::from_fn(4, 2, |_, _| rng.random());
        let fake = Matrix::from_fn(4, 2, |_, _| rng.random());
        let out = discriminator_loss(&d, &real, &fake).unwrap();
        assert!((out.loss - 2.0 * core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_discriminator_costs_nothing() {
        // D(v) = σ(60·v₀) on one-dimensional inputs ±1, no batch norm
        let w = Matrix::from_vec(1, 1, vec![60.0]).unwrap();
        let d = Mlp::new(
            1,
            vec![Layer::Dense(Dense::from_parts(w, vec![0.0]).unwrap()), Layer::Sigmoid],
        )
        .unwrap();
        let real = Matrix::from_fn(3, 1, |_, _| 1.0);
        let fake = Matrix::from_fn(3, 1, |_, _| -1.0);
        let out = discriminator_loss(&d, &real, &fake).unwrap();
        assert!(out.loss < 1e-11, "{}", out.loss);
        assert_eq!(out.accuracy, 1.0);
    }

    #[test]
    fn discriminator_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = Mlp::discriminator(3, &[5, 4], &mut rng);
        let real = Matrix::from_fn(6, 3, |_, _| 2.0 * rng.random::<f64>() - 1.0);
        let fake = Matrix::from_fn(6, 3, |_, _| rng.random::<f64>() * 0.5);
        let out = discriminator_loss(&d, &real, &fake).unwrap();
        let mut nets = vec![d];
        let report = gradient_check(&mut nets, &[out.grads], 1e-3, |n| {
            let o = discriminator_loss(&n[0], &real, &fake).unwrap();
            (o.loss, o.signature)
        });
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn minimax_signs() {
        // raising D on prior samples lowers the discriminator loss; raising D
        // on embeddings lowers the generator loss
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = features(5, &mut rng);
        let g = Mlp::generator(5, 2, NormOrder::AfterActivation, &mut rng);
        let real = Matrix::from_fn(5, 2, |_, _| 2.0 * rng.random::<f64>() - 1.0);
        let fake = g.forward(Input::Sparse(&x), Mode::Train).unwrap().into_output();
        let base_d = constant_disc(2, 0.0, &mut rng);
        let up_d = constant_disc(2, 0.3, &mut rng);
        let lr = discriminator_loss(&base_d, &real, &real).unwrap().loss;
        let lr_up = discriminator_loss(&up_d, &real, &real).unwrap().loss;
        // with identical sides only the real term can improve: check it alone
        let real_term = |d: &Mlp| -> f64 {
            let p = d.forward(Input::Dense(&real), Mode::Train).unwrap().into_output();
            -p.as_slice().iter().map(|v| libm::log(*v)).sum::<f64>() / 5.0
        };
        assert!(real_term(&up_d) < real_term(&base_d));
        assert!(lr.is_finite() && lr_up.is_finite());
        let lg = generator_adversarial_loss(&g, &base_d, &x).unwrap().loss;
        let lg_up = generator_adversarial_loss(&g, &up_d, &x).unwrap().loss;
        assert!(lg_up < lg);
        let _ = fake;
    }

    #[test]
    fn constant_discriminator_gives_ln2_and_zero_generator_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = features(5, &mut rng);
        let g = Mlp::generator(5, 3, NormOrder::AfterActivation, &mut rng);
        let d = constant_disc(3, 0.0, &mut rng);
        let out = generator_adversarial_loss(&g, &d, &x).unwrap();
        assert!((out.loss - core::f64::consts::LN_2).abs() < 1e-12);
        assert!(out.grads.is_zero());

        let sure = constant_disc(3, 40.0, &mut rng);
        let out = generator_adversarial_loss(&g, &sure, &x).unwrap();
        assert!(out.loss < 1e-11, "{}", out.loss);
    }

    #[test]
    fn generator_gradients_through_frozen_discriminator() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = features(7, &mut rng);
        let g = Mlp::generator(7, 3, NormOrder::AfterActivation, &mut rng);
        let d = Mlp::discriminator(3, &[6, 5], &mut rng);
        let d_before = d.clone();
        let out = generator_adversarial_loss(&g, &d, &x).unwrap();
        assert_eq!(d, d_before);
        let mut nets = vec![g];
        let report = gradient_check(&mut nets, &[out.grads], 1e-3, |n| {
            let o = generator_adversarial_loss(&n[0], &d, &x).unwrap();
            (o.loss, o.signature)
        });
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn dae_perfect_identity_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = features(4, &mut rng);
        let id = || {
            Mlp::new(
                4,
                vec![Layer::Dense(Dense::from_parts(Matrix::identity(4), vec![0.0; 4]).unwrap())],
            )
            .unwrap()
        };
        let out = dae_batch_loss(&id(), &id(), &x, 0.0, &mut rng).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(dae_batch_loss(&id(), &id(), &x, 1.0, &mut rng).is_err());
    }

    #[test]
    fn dae_zero_rows_with_zero_bias_networks() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let zeros = SparseRows::from_dense(&Matrix::zeros(3, 5));
        let enc = Mlp::generator(5, 2, NormOrder::AfterActivation, &mut rng);
        let dec = Mlp::linear(2, 5, &mut rng);
        let out = dae_batch_loss(&enc, &dec, &zeros, 0.2, &mut rng).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn dae_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = features(6, &mut rng);
        let enc = Mlp::generator(6, 3, NormOrder::AfterActivation, &mut rng);
        let dec = Mlp::linear(3, 6, &mut rng);
        let seed = 99;
        let run = |e: &Mlp, d: &Mlp| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            dae_batch_loss(e, d, &x, 0.3, &mut r).unwrap()
        };
        let out = run(&enc, &dec);
        let mut nets = vec![enc, dec];
        let report = gradient_check(&mut nets, &[out.encoder_grads, out.decoder_grads], 1e-3, |n| {
            let o = run(&n[0], &n[1]);
            (o.loss, o.signature)
        });
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn out_of_range_batches_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = features(4, &mut rng);
        let b = batch(9, 3, 2, &mut rng);
        let g = zero_net(4, 2);
        assert!(idw_batch_loss(&g, &g, &b, &x).is_err());
    }
}
