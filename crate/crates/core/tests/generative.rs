//! Generative-model behaviour: architecture shapes, loss values, gradient
//! checks and the training loops at desk scale.

mod common;

use common::{finite_difference, max_rel_err};
use rand::Rng;
use sdx_core::eeg::Label;
use sdx_core::gen::{
    build_vae, build_vae_with, build_wgan, critic_loss_with_gp, sample_synthetic,
    train_generative, GenError, GenHistory, GenKind, GenSchedule, GpConfig, VaeConfig, WganConfig,
};
use sdx_core::rng::seeded;
use sdx_core::spectrogram::{Origin, Provenance, Spectrogram};
use sdx_core::tensor::{Activation, Init, LayerSpec, Network, Tape};

fn spec_image(label: Label, id: usize, rows: usize, cols: usize, f: impl Fn(usize, usize) -> f32) -> Spectrogram {
    let mut values = vec![0f32; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            values[r * cols + c] = f(r, c);
        }
    }
    Spectrogram {
        freq_bins: rows,
        time_frames: cols,
        values,
        provenance: Provenance {
            subject_id: format!("s{id}"),
            segment_index: id,
            origin: Origin::Real,
        },
        label,
    }
}

#[test]
fn paper_scale_architecture_shape_identities() {
    // VAE encoder flattens to 16384 and decodes back to 512x32x1
    let vae = build_vae::<f32>(0);
    assert_eq!(vae.cfg.flatten_dim(), 16_384);
    assert_eq!(vae.cfg.bottleneck_spatial(), (16, 1));
    let mut tape = Tape::new();
    let x = tape.leaf(vec![1, 512, 32, 1], vec![0.25; 512 * 32]);
    let enc = vae.encoder.forward_eval(&mut tape, x).unwrap();
    let mu = vae.mu_head.forward_eval(&mut tape, enc.output).unwrap();
    assert_eq!(tape.shape(mu.output), &[1, 512]);
    let dec = vae.decoder.forward_eval(&mut tape, mu.output).unwrap();
    assert_eq!(tape.shape(dec.output), &[1, 512, 32, 1]);

    // critic flattens to 8192 and scores one scalar per sample
    let wgan = build_wgan::<f32>(0);
    assert_eq!(wgan.cfg.critic_flatten_dim(), 8_192);
    let mut tape = Tape::new();
    let x = tape.leaf(vec![2, 512, 32, 1], vec![0.0; 2 * 512 * 32]);
    let scores = wgan.critic.forward_eval(&mut tape, x).unwrap();
    assert_eq!(tape.shape(scores.output), &[2, 1]);

    // generator: noise 128 -> 512x32x1 in [-1, 1]
    let mut tape = Tape::new();
    let z = tape.leaf(vec![1, 128], vec![0.3; 128]);
    let img = wgan.generator.forward_eval(&mut tape, z).unwrap();
    assert_eq!(tape.shape(img.output), &[1, 512, 32, 1]);
    assert!(tape
        .data(img.output)
        .iter()
        .all(|v| (-1.0..=1.0).contains(v)));
}

fn tiny_vae_cfg() -> VaeConfig {
    VaeConfig {
        input: (16, 8),
        conv_channels: vec![2, 4],
        fc_widths: vec![8],
        latent_dim: 4,
        conv_kernel: 3,
        output_kernel: 3,
    }
}

#[test]
fn kl_term_reference_values() {
    // mu = 0, logvar = 0 -> kl = 0 ; mu = 1 over 512 dims -> kl = 256
    let cfg = tiny_vae_cfg();
    let mut model = build_vae_with::<f64>(&cfg, 1);
    // force heads to constants: weight 0, bias b
    for (net, bias) in [(&mut model.mu_head, 0.0), (&mut model.logvar_head, 0.0)] {
        let mut params = net.parameters_mut();
        params[0].value.iter_mut().for_each(|v| *v = 0.0);
        params[1].value.iter_mut().for_each(|v| *v = bias);
    }
    let batch = vec![0.5; 2 * 16 * 8];
    let mut tape = Tape::new();
    let terms = model.elbo_loss(&mut tape, &batch, 2, &mut seeded(0)).unwrap();
    assert!(terms.kl.abs() <= 1e-9, "kl {}", terms.kl);

    // now mu = 1 everywhere with latent 512
    let cfg512 = VaeConfig {
        latent_dim: 512,
        ..tiny_vae_cfg()
    };
    let mut model = build_vae_with::<f64>(&cfg512, 2);
    {
        let mut params = model.mu_head.parameters_mut();
        params[0].value.iter_mut().for_each(|v| *v = 0.0);
        params[1].value.iter_mut().for_each(|v| *v = 1.0);
        let mut params = model.logvar_head.parameters_mut();
        params[0].value.iter_mut().for_each(|v| *v = 0.0);
        params[1].value.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut tape = Tape::new();
    let terms = model.elbo_loss(&mut tape, &batch, 2, &mut seeded(0)).unwrap();
    assert!((terms.kl - 256.0).abs() <= 1e-9, "kl {}", terms.kl);
    assert!(terms.kl >= -1e-6);
}

#[test]
fn elbo_rejects_values_outside_unit_interval() {
    let model = build_vae_with::<f64>(&tiny_vae_cfg(), 3);
    let mut batch = vec![0.5; 16 * 8];
    batch[7] = 1.2;
    let mut tape = Tape::new();
    assert!(matches!(
        model.elbo_loss(&mut tape, &batch, 1, &mut seeded(0)),
        Err(GenError::ValueRange { .. })
    ));
}

#[test]
fn elbo_gradient_matches_finite_differences_with_fixed_noise() {
    let cfg = tiny_vae_cfg();
    let model = build_vae_with::<f64>(&cfg, 4);
    let mut rng = seeded(5);
    let batch: Vec<f64> = (0..2 * 16 * 8).map(|_| rng.gen::<f64>()).collect();

    // fixed epsilon: rebuild the rng with one seed for every evaluation
    let loss_of = |m: &sdx_core::gen::VaeModel<f64>| -> f64 {
        let mut tape = Tape::new();
        let terms = m.elbo_loss(&mut tape, &batch, 2, &mut seeded(42)).unwrap();
        tape.scalar(terms.loss)
    };

    let mut tape = Tape::new();
    let terms = model.elbo_loss(&mut tape, &batch, 2, &mut seeded(42)).unwrap();
    // check a parameter from each sub-network
    let nets: [(&str, usize); 4] = [("encoder", 0), ("mu", 1), ("logvar", 2), ("decoder", 3)];
    let passes = [
        &terms.passes.encoder,
        &terms.passes.mu,
        &terms.passes.logvar,
        &terms.passes.decoder,
    ];
    let networks = [&model.encoder, &model.mu_head, &model.logvar_head, &model.decoder];
    for (ni, (name, idx)) in nets.iter().enumerate() {
        let adjoints = tape
            .backward(terms.loss, &passes[*idx].param_nodes)
            .unwrap();
        // bias of the first layer: small and influential
        let params = networks[ni].parameters();
        let target = params.len() - 1;
        let analytic = adjoints[target]
            .map(|g| tape.data(g).to_vec())
            .unwrap_or_else(|| vec![0.0; params[target].value.len()]);
        let numeric = finite_difference(
            |probe| {
                let mut m = model.clone();
                let nets_mut = [
                    &mut m.encoder,
                    &mut m.mu_head,
                    &mut m.logvar_head,
                    &mut m.decoder,
                ];
                nets_mut[ni].parameters_mut()[target].value = probe.to_vec();
                loss_of(&m)
            },
            &params[target].value,
            1e-5,
        );
        let err = max_rel_err(&analytic, &numeric);
        assert!(err <= 1e-4, "{name}: rel err {err}");
    }
}

fn dense_net(dims: &[usize], act: Activation, out_act: Option<Activation>, seed: u64) -> Network<f64> {
    let mut spec = Vec::new();
    for (i, w) in dims.windows(2).enumerate() {
        spec.push(LayerSpec::Dense {
            in_dim: w[0],
            out_dim: w[1],
            init: if i + 2 == dims.len() { Init::GlorotUniform } else { Init::HeUniform },
        });
        if i + 2 < dims.len() {
            spec.push(LayerSpec::Activation(act));
        }
    }
    if let Some(a) = out_act {
        spec.push(LayerSpec::Activation(a));
    }
    Network::build(&spec, &mut seeded(seed)).unwrap()
}

#[test]
fn critic_loss_reference_values() {
    // D linear with unit-norm weight, real == fake -> loss 0
    let mut critic = dense_net(&[4, 1], Activation::LeakyRelu(0.2), None, 7);
    {
        let mut params = critic.parameters_mut();
        params[0].value = vec![0.5, 0.5, 0.5, 0.5]; // norm 1
        params[1].value = vec![0.0];
    }
    let batch = vec![0.3, -0.2, 0.9, 0.1, -0.6, 0.4, 0.2, -0.8];
    let gp = GpConfig::default();
    let mut tape = Tape::new();
    let outcome = critic_loss_with_gp(
        &mut tape, &mut critic, &batch, &batch, &[4], 2, &gp, &mut seeded(1),
    )
    .unwrap();
    assert!(tape.scalar(outcome.loss).abs() <= 1e-9);
    assert!(outcome.penalty.abs() <= 1e-9);

    // D identically zero -> loss = lambda * (0-1)^2 = lambda
    let mut zero_critic = dense_net(&[4, 1], Activation::LeakyRelu(0.2), None, 8);
    {
        let mut params = zero_critic.parameters_mut();
        params[0].value = vec![0.0; 4];
        params[1].value = vec![0.0];
    }
    let mut tape = Tape::new();
    let outcome = critic_loss_with_gp(
        &mut tape, &mut zero_critic, &batch, &batch, &[4], 2, &gp, &mut seeded(2),
    )
    .unwrap();
    // the norm's 1e-12 sqrt guard turns an exactly-zero gradient into 1e-6
    assert!((tape.scalar(outcome.loss) - gp.lambda).abs() <= 1e-4);

    // mismatched batch shapes are rejected
    let mut tape = Tape::new();
    assert!(critic_loss_with_gp(
        &mut tape, &mut critic, &batch, &batch[..4], &[4], 2, &gp, &mut seeded(3),
    )
    .is_err());
}

#[test]
fn critic_gp_gradient_matches_finite_differences() {
    let mut rng = seeded(11);
    let real: Vec<f64> = (0..3 * 6).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    let fake: Vec<f64> = (0..3 * 6).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    let gp = GpConfig::default();

    let critic = dense_net(&[6, 8, 1], Activation::LeakyRelu(0.2), None, 12);
    let loss_of = |net: &Network<f64>| -> f64 {
        let mut c = net.clone();
        let mut tape = Tape::new();
        let outcome = critic_loss_with_gp(
            &mut tape, &mut c, &real, &fake, &[6], 3, &gp, &mut seeded(77),
        )
        .unwrap();
        tape.scalar(outcome.loss)
    };

    let mut work = critic.clone();
    let mut tape = Tape::new();
    let outcome = critic_loss_with_gp(
        &mut tape, &mut work, &real, &fake, &[6], 3, &gp, &mut seeded(77),
    )
    .unwrap();
    let all_nodes: Vec<usize> = outcome
        .passes
        .iter()
        .flat_map(|p| p.param_nodes.iter().copied())
        .collect();
    let adjoints = tape.backward(outcome.loss, &all_nodes).unwrap();
    let per = critic.parameters().len();

    for pi in 0..per {
        // sum adjoints across the three passes
        let len = critic.parameters()[pi].value.len();
        let mut analytic = vec![0.0; len];
        for pass in 0..outcome.passes.len() {
            if let Some(adj) = adjoints[pass * per + pi] {
                for (a, &v) in analytic.iter_mut().zip(tape.data(adj)) {
                    *a += v;
                }
            }
        }
        let numeric = finite_difference(
            |probe| {
                let mut perturbed = critic.clone();
                perturbed.parameters_mut()[pi].value = probe.to_vec();
                loss_of(&perturbed)
            },
            &critic.parameters()[pi].value,
            1e-5,
        );
        let err = max_rel_err(&analytic, &numeric);
        assert!(err <= 1e-3, "param {pi}: rel err {err}");
    }
}

#[test]
fn generator_loss_signs_and_gradient() {
    use sdx_core::gen::generator_loss;
    // frozen critic D(x) = sum(x): pushing any output up reduces loss
    let mut gen = dense_net(&[2, 6, 3], Activation::LeakyRelu(0.2), None, 30);
    let mut sum_critic = dense_net(&[3, 1], Activation::LeakyRelu(0.2), None, 31);
    {
        let mut params = sum_critic.parameters_mut();
        params[0].value = vec![1.0; 3];
        params[1].value = vec![0.0];
    }
    let noise = vec![0.4, -0.3, 0.8, 0.2];
    let mut tape = Tape::new();
    let outcome = generator_loss(
        &mut tape, &mut gen, &mut sum_critic, &noise, 2, 2, &mut seeded(32),
    )
    .unwrap();
    // -mean(sum(G(z))) equals the loss
    let fake = tape.data(outcome.gen_pass.output);
    let expect = -(fake.iter().sum::<f64>() / 2.0);
    assert!((tape.scalar(outcome.loss) - expect).abs() <= 1e-12);

    // constant critic: loss = -c with zero gradient into the generator
    let mut const_critic = dense_net(&[3, 1], Activation::LeakyRelu(0.2), None, 33);
    {
        let mut params = const_critic.parameters_mut();
        params[0].value = vec![0.0; 3];
        params[1].value = vec![2.5];
    }
    let mut tape = Tape::new();
    let outcome = generator_loss(
        &mut tape, &mut gen, &mut const_critic, &noise, 2, 2, &mut seeded(34),
    )
    .unwrap();
    assert!((tape.scalar(outcome.loss) + 2.5).abs() <= 1e-12);
    let adjoints = tape
        .backward(outcome.loss, &outcome.gen_pass.param_nodes)
        .unwrap();
    for adj in adjoints.into_iter().flatten() {
        assert!(tape.data(adj).iter().all(|v| v.abs() <= 1e-12));
    }

    // finite differences through critic into generator parameters
    let gen_base = dense_net(&[2, 6, 3], Activation::LeakyRelu(0.2), None, 35);
    let critic_base = dense_net(&[3, 8, 1], Activation::LeakyRelu(0.2), None, 36);
    let loss_of = |g: &Network<f64>| {
        let mut gg = g.clone();
        let mut cc = critic_base.clone();
        let mut tape = Tape::new();
        let out = generator_loss(&mut tape, &mut gg, &mut cc, &noise, 2, 2, &mut seeded(37)).unwrap();
        tape.scalar(out.loss)
    };
    let mut gg = gen_base.clone();
    let mut cc = critic_base.clone();
    let mut tape = Tape::new();
    let outcome = generator_loss(&mut tape, &mut gg, &mut cc, &noise, 2, 2, &mut seeded(37)).unwrap();
    let adjoints = tape
        .backward(outcome.loss, &outcome.gen_pass.param_nodes)
        .unwrap();
    for pi in 0..gen_base.parameters().len() {
        let analytic = adjoints[pi]
            .map(|g| tape.data(g).to_vec())
            .unwrap_or_else(|| vec![0.0; gen_base.parameters()[pi].value.len()]);
        let numeric = finite_difference(
            |probe| {
                let mut perturbed = gen_base.clone();
                perturbed.parameters_mut()[pi].value = probe.to_vec();
                loss_of(&perturbed)
            },
            &gen_base.parameters()[pi].value,
            1e-5,
        );
        let err = max_rel_err(&analytic, &numeric);
        assert!(err <= 1e-4, "gen param {pi}: rel err {err}");
    }
}

fn small_wgan_cfg() -> WganConfig {
    WganConfig {
        image: (32, 8),
        noise_dim: 8,
        gen_channels: vec![8, 4, 1],
        critic_channels: vec![4, 8, 8],
        gen_kernel: 3,
        critic_kernel: 3,
        dropout: 0.3,
        output_dropout: false,
        upsample: sdx_core::gen::UpsampleMode::Transposed,
    }
}

#[test]
fn train_generative_enforces_single_class_and_counts_critic_steps() {
    let dir = tempfile::tempdir().unwrap();
    let mixed: Vec<Spectrogram> = (0..6)
        .map(|i| {
            spec_image(
                if i == 3 { Label::Sch } else { Label::Norm },
                i,
                32,
                8,
                |r, _| r as f32 / 32.0,
            )
        })
        .collect();
    let schedule = GenSchedule {
        epochs: 1,
        batch_size: 2,
        learning_rate: 1e-4,
        seed: 9,
    };
    let err = train_generative::<f32>(
        GenKind::Wgan,
        Label::Norm,
        &mixed,
        &VaeConfig::default(),
        &small_wgan_cfg(),
        &GpConfig::default(),
        &schedule,
        &dir.path().join("w.sdx"),
    )
    .unwrap_err();
    assert!(matches!(err, GenError::MixedClassDataset { .. }));

    // n_critic bookkeeping: critic steps ~ 3x generator steps
    let single: Vec<Spectrogram> = (0..16)
        .map(|i| spec_image(Label::Norm, i, 32, 8, |r, c| ((r + c + i) % 13) as f32 / 13.0))
        .collect();
    let schedule = GenSchedule {
        epochs: 2,
        batch_size: 2,
        learning_rate: 1e-4,
        seed: 10,
    };
    let outcome = train_generative::<f32>(
        GenKind::Wgan,
        Label::Norm,
        &single,
        &VaeConfig::default(),
        &small_wgan_cfg(),
        &GpConfig::default(),
        &schedule,
        &dir.path().join("w.sdx"),
    )
    .unwrap();
    let GenHistory::Wgan(history) = &outcome.history else {
        panic!("wgan history expected")
    };
    for epoch in history {
        assert!(epoch.generator_steps > 0);
        let ratio_ok = epoch.critic_steps >= 3 * epoch.generator_steps - 1
            && epoch.critic_steps <= 3 * epoch.generator_steps + 1;
        assert!(ratio_ok, "critic {} vs generator {}", epoch.critic_steps, epoch.generator_steps);
    }
}

#[test]
fn sampling_is_seeded_in_range_and_class_checked() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vae.sdx");
    let data: Vec<Spectrogram> = (0..8)
        .map(|i| spec_image(Label::Sch, i, 16, 8, |r, c| ((r * 3 + c + i) % 11) as f32 / 11.0))
        .collect();
    let schedule = GenSchedule {
        epochs: 2,
        batch_size: 4,
        learning_rate: 1e-3,
        seed: 20,
    };
    train_generative::<f32>(
        GenKind::Vae,
        Label::Sch,
        &data,
        &tiny_vae_cfg(),
        &WganConfig::default(),
        &GpConfig::default(),
        &schedule,
        &path,
    )
    .unwrap();

    let a = sample_synthetic::<f32>(&path, 5, Label::Sch, 77).unwrap();
    let b = sample_synthetic::<f32>(&path, 5, Label::Sch, 77).unwrap();
    assert_eq!(a.len(), 5);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.values, y.values, "same seed must reproduce samples");
        assert_eq!(x.provenance.origin, Origin::Vae);
        assert!(x.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }
    let c = sample_synthetic::<f32>(&path, 5, Label::Sch, 78).unwrap();
    assert!(a.iter().zip(&c).any(|(x, y)| x.values != y.values));

    assert!(matches!(
        sample_synthetic::<f32>(&path, 5, Label::Norm, 1),
        Err(GenError::ClassMismatch { .. })
    ));
    assert!(sample_synthetic::<f32>(&path, 0, Label::Sch, 1).is_err());
}
