use super::*;
use crate::autodiff::Graph;
use crate::data::{synth_corpus, CsiBatch, SynthCorpusSpec};
use crate::models::{ClassifierSpec, CriticSpec, DiscriminatorSpec, GeneratorSpec};
use crate::rng::Rng;

fn col<'g>(g: &'g Graph, v: &[f32]) -> Var<'g> {
    g.constant(Tensor::new(&[v.len(), 1], v.to_vec()).unwrap())
}

fn close(a: f32, b: f32, tol: f32) {
    assert!((a - b).abs() <= tol, "{a} vs {b}");
}

#[test]
fn bce_uncertain_discriminator() {
    let g = Graph::first_order();
    let (d, gl) = bce_gan_losses(col(&g, &[0.5, 0.5]), col(&g, &[0.5, 0.5])).unwrap();
    close(d.item(), 2.0 * 2f32.ln(), 1e-6);
    close(gl.item(), 2f32.ln(), 1e-6);
}

#[test]
fn bce_hand_computed_and_perfect() {
    let g = Graph::first_order();
    let (d, _) = bce_gan_losses(col(&g, &[0.8]), col(&g, &[0.3])).unwrap();
    close(d.item(), -(0.8f32.ln()) - 0.7f32.ln(), 1e-6);
    close(d.item(), 0.5798, 1e-4);
    let (d, _) = bce_gan_losses(col(&g, &[1.0]), col(&g, &[0.0])).unwrap();
    assert!(d.item() < 1e-6);
    let sat = bce_gen_loss(col(&g, &[0.3]), true).unwrap();
    close(sat.item(), 0.7f32.ln(), 1e-6);
}

#[test]
fn nan_inputs_are_numeric_errors() {
    let g = Graph::first_order();
    assert!(matches!(bce_gan_losses(col(&g, &[f32::NAN]), col(&g, &[0.5])), Err(Error::Numeric(_))));
    assert!(matches!(wloss(col(&g, &[1.0]), col(&g, &[f32::NAN])), Err(Error::Numeric(_))));
}

#[test]
fn wloss_substitution_and_translation() {
    let g = Graph::first_order();
    let (c, gl) = wloss(col(&g, &[1.0, 1.0]), col(&g, &[0.0, 0.0])).unwrap();
    assert_eq!((c.item(), gl.item()), (-1.0, -0.0));
    let (c, _) = wloss(col(&g, &[0.3, -2.0]), col(&g, &[0.3, -2.0])).unwrap();
    assert_eq!(c.item(), 0.0);
    let (a, _) = wloss(col(&g, &[0.5, 1.5]), col(&g, &[-1.0, 0.25])).unwrap();
    let (b, _) = wloss(col(&g, &[7.5, 8.5]), col(&g, &[6.0, 7.25])).unwrap();
    close(a.item(), b.item(), 1e-5);
}

#[test]
fn interpolation_endpoints_and_contract() {
    let r = Tensor::full(&[2, 3], 2.0);
    let f = Tensor::full(&[2, 3], 4.0);
    assert_eq!(interpolate(&r, &f, &Tensor::ones(&[2, 1])).unwrap(), r);
    assert_eq!(interpolate(&r, &f, &Tensor::zeros(&[2, 1])).unwrap(), f);
    assert_eq!(interpolate(&r, &f, &Tensor::full(&[2, 1], 0.5)).unwrap(), Tensor::full(&[2, 3], 3.0));
    let bad = Tensor::new(&[2, 1], vec![0.5, 1.5]).unwrap();
    assert!(matches!(interpolate(&r, &f, &bad), Err(Error::Contract(_))));
}

fn linear_penalty(w: [f32; 2], lambda: f32, g: &Graph) -> Result<f32> {
    let w = g.param(Tensor::new(&[2, 1], w.to_vec()).unwrap());
    let x = Rng::stream(1, "xhat").normal_tensor(&[5, 2], 3.0);
    let p = gradient_penalty(g.input(x, true), |x| x.matmul(w), lambda)?;
    Ok(p.item())
}

#[test]
fn linear_critic_penalties() {
    let g = Graph::second_order();
    assert_eq!(linear_penalty([0.6, 0.8], 10.0, &g).unwrap(), 0.0);
    close(linear_penalty([3.0, 4.0], 10.0, &g).unwrap(), 160.0, 1e-3);
    assert_eq!(linear_penalty([3.0, 4.0], 0.0, &g).unwrap(), 0.0);
    let first = Graph::first_order();
    assert!(matches!(linear_penalty([3.0, 4.0], 10.0, &first), Err(Error::Capability(_))));
}

#[test]
fn penalty_gradient_of_linear_critic() {
    // P = λ(‖w‖ - 1)², dP/dw = 2λ(‖w‖ - 1)·w/‖w‖ = 2·10·4·(0.6, 0.8)
    let g = Graph::second_order();
    let w = g.param(Tensor::new(&[2, 1], vec![3.0, 4.0]).unwrap());
    let x = Tensor::ones(&[3, 2]);
    let p = gradient_penalty(g.input(x, true), |x| x.matmul(w), 10.0).unwrap();
    let grad = g.backward(p, &[w]).unwrap().remove(0);
    close(grad.data()[0], 48.0, 1e-3);
    close(grad.data()[1], 64.0, 1e-3);
}

fn one_param(v: Vec<f32>) -> ModelParams {
    let n = v.len();
    ModelParams::new(vec![("w".into(), Tensor::new(&[n], v).unwrap())], 0).unwrap()
}

#[test]
fn adam_first_step_moves_by_lr() {
    let cfg = AdamConfig { lr: 3e-4, beta1: 0.5, beta2: 0.9, eps: 1e-8 };
    let mut p = one_param(vec![0.0; 3]);
    let grads: GradMap = [("w".to_string(), Tensor::new(&[3], vec![0.7, -3.0, 12.0]).unwrap())].into();
    let mut state = AdamState::new();
    adam_step(&mut state, &mut p, &grads, &cfg).unwrap();
    let after = p.get("w").unwrap().data();
    for (a, g) in after.iter().zip([0.7f32, -3.0, 12.0]) {
        // first bias-corrected step is lr·g/(|g| + eps'), about lr for |g| >> eps
        close(-a, 3e-4 * g.signum(), 1e-9);
    }
    assert_eq!(state.t, 1);
}

#[test]
fn adam_zero_gradient_only_decays_moments() {
    let cfg = AdamConfig { lr: 0.1, beta1: 0.5, beta2: 0.9, eps: 1e-8 };
    let mut p = one_param(vec![1.0]);
    let mut state = AdamState::new();
    let g1: GradMap = [("w".to_string(), Tensor::new(&[1], vec![1.0]).unwrap())].into();
    adam_step(&mut state, &mut p, &g1, &cfg).unwrap();
    let (m1, v1) = (state.first_moment("w").unwrap()[0], state.second_moment("w").unwrap()[0]);
    let zero: GradMap = [("w".to_string(), Tensor::zeros(&[1]))].into();
    let mut fresh = one_param(vec![1.0]);
    let mut fresh_state = AdamState::new();
    adam_step(&mut fresh_state, &mut fresh, &zero, &cfg).unwrap();
    assert_eq!(fresh.get("w").unwrap().data(), &[1.0]);
    adam_step(&mut state, &mut p, &zero, &cfg).unwrap();
    assert_eq!(state.first_moment("w").unwrap()[0], 0.5 * m1);
    assert_eq!(state.second_moment("w").unwrap()[0], 0.9 * v1);
}

#[test]
fn adam_missing_gradient_is_a_contract_error() {
    let cfg = AdamConfig { lr: 0.1, beta1: 0.5, beta2: 0.9, eps: 1e-8 };
    let mut p = one_param(vec![1.0]);
    assert!(matches!(
        adam_step(&mut AdamState::new(), &mut p, &GradMap::new(), &cfg),
        Err(Error::Contract(_))
    ));
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    for bad in [
        TrainConfig { n_critic: 0, ..TrainConfig::default() },
        TrainConfig { lambda_gp: -1.0, ..TrainConfig::default() },
        TrainConfig { adam_betas: (1.0, 0.9), ..TrainConfig::default() },
        TrainConfig { save_every: 0, ..TrainConfig::default() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Contract(_))));
    }
}

fn tiny_corpus() -> CsiBatch {
    let spec = SynthCorpusSpec { per_class: 12, antennas: 3, time: 4, num_classes: 3, ..SynthCorpusSpec::desk() };
    synth_corpus(&spec).unwrap().normalize().unwrap()
}

fn tiny_specs(data: &CsiBatch) -> (GeneratorSpec, CriticSpec) {
    let gen = GeneratorSpec {
        hidden: [8, 8, 8, 8],
        ..GeneratorSpec::wasserstein(6, data.num_classes(), data.antennas(), data.time())
    };
    let critic = CriticSpec { hidden: [8, 8], ..CriticSpec::new(data.features(), data.num_classes()) };
    (gen, critic)
}

fn tiny_cfg() -> TrainConfig {
    TrainConfig {
        latent_dim: 6,
        batch_size: 8,
        epochs: 20,
        save_every: 5,
        save_per_class: 3,
        seed: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn cwgan_schedule_cadence_and_determinism() {
    let data = tiny_corpus();
    let before = data.clone();
    let (gen, critic) = tiny_specs(&data);
    let mut epochs = Vec::new();
    let a = train_cwgan_with(&data, &gen, &critic, &tiny_cfg(), &mut |s| {
        epochs.push(s.epoch);
        Ok(())
    })
    .unwrap();
    assert_eq!(data, before);
    assert_eq!(epochs, vec![5, 10, 15, 20]);
    assert_eq!(a.saved.len(), 4);
    assert_eq!(a.log.generator_updates, 20);
    assert_eq!(a.log.critic_updates, 5 * a.log.generator_updates);
    assert_eq!(a.log.len(), 20);
    assert!(a.log.all_finite());
    assert!(a.log.records.windows(2).all(|w| w[1].iter == w[0].iter + 1));
    let (_, s) = &a.saved[0];
    assert_eq!(s.class_counts(), vec![3; 3]);
    assert!(!s.is_normalized());

    let b = train_cwgan(&data, &gen, &critic, &tiny_cfg()).unwrap();
    assert_eq!(a.saved, b.saved);
    assert_eq!(a.log, b.log);
    assert_eq!(a.generator, b.generator);
    let c = train_cwgan(&data, &gen, &critic, &TrainConfig { seed: 5, ..tiny_cfg() }).unwrap();
    assert_ne!(a.generator, c.generator);
}

#[test]
fn full_pass_epochs() {
    let data = tiny_corpus();
    let (gen, critic) = tiny_specs(&data);
    let cfg = TrainConfig { epochs: 2, save_every: 1, epoch_unit: EpochUnit::FullPass, ..tiny_cfg() };
    let out = train_cwgan(&data, &gen, &critic, &cfg).unwrap();
    // 36 samples at batch 8 is 5 updates per pass
    assert_eq!(out.log.generator_updates, 10);
    assert_eq!(out.saved.iter().map(|(e, _)| *e).collect::<Vec<_>>(), vec![1, 2]);
}

#[test]
fn cwgan_preconditions() {
    let data = tiny_corpus();
    let (gen, critic) = tiny_specs(&data);
    let raw = data.denormalize().unwrap();
    assert!(matches!(train_cwgan(&raw, &gen, &critic, &tiny_cfg()), Err(Error::Contract(_))));
    let empty = data.select(&[]);
    assert!(matches!(train_cwgan(&empty, &gen, &critic, &tiny_cfg()), Err(Error::Data(_))));
    let bce = TrainConfig { loss_kind: LossKind::Bce, ..tiny_cfg() };
    assert!(matches!(train_cwgan(&data, &gen, &critic, &bce), Err(Error::Contract(_))));
}

#[test]
fn nan_data_aborts_with_iteration() {
    let data = tiny_corpus();
    let (gen, critic) = tiny_specs(&data);
    let mut amps = data.amplitudes().clone();
    amps.data_mut().fill(f32::NAN);
    let poisoned = CsiBatch::new(amps, data.labels().to_vec(), data.num_classes())
        .unwrap()
        .with_norm(data.norm_params());
    match train_cwgan(&poisoned, &gen, &critic, &tiny_cfg()) {
        Err(Error::Divergence { iteration, .. }) => assert_eq!(iteration, 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn bce_run_logs_accuracy_every_iteration() {
    let data = tiny_corpus();
    let gen = GeneratorSpec { hidden: [8, 8, 8, 8], ..GeneratorSpec::bce(6, 3, 3, 4) };
    let disc = DiscriminatorSpec { hidden: [8, 8, 8, 8], ..DiscriminatorSpec::new(12, 3) };
    let cfg = TrainConfig { loss_kind: LossKind::Bce, ..tiny_cfg() };
    let a = train_cgan_bce(&data, &gen, &disc, &cfg, &mut |_| Ok(())).unwrap();
    assert_eq!(a.log.len(), 20);
    assert!(a.log.records.iter().all(|r| r.disc_acc.is_some_and(|x| (0.0..=1.0).contains(&x))));
    assert!(a.log.records.iter().all(|r| r.grad_penalty.is_none()));
    let b = train_cgan_bce(&data, &gen, &disc, &cfg, &mut |_| Ok(())).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.saved, b.saved);
    let sig = a.log.bce_signature();
    assert!((0.0..=1.0).contains(&sig.saturated_fraction));
}

#[test]
fn log_csv_round_trip() {
    let log = TrainLog {
        records: vec![
            IterRecord { iter: 1, gen_loss: 0.1, critic_loss: -1.5e-3, grad_penalty: Some(2.0), disc_acc: None, wall_ms: None },
            IterRecord { iter: 2, gen_loss: 1.0 / 3.0, critic_loss: 7.0, grad_penalty: None, disc_acc: Some(0.75), wall_ms: Some(12) },
        ],
        ..TrainLog::default()
    };
    let csv = log.to_csv();
    assert!(csv.starts_with("iter,gen_loss,critic_loss,grad_penalty,disc_acc,wall_ms\n1,0.1,-0.0015,2,,\n"));
    assert_eq!(TrainLog::parse_csv(&csv).unwrap(), log);
}

#[test]
fn bce_signature_flags() {
    let rec = |i, g, acc| IterRecord { iter: i, gen_loss: g, critic_loss: 0.0, grad_penalty: None, disc_acc: Some(acc), wall_ms: None };
    let rising = TrainLog { records: (0..8).map(|i| rec(i, i as f32, 0.5)).collect(), ..TrainLog::default() };
    assert!(rising.bce_signature().flagged);
    let calm = TrainLog { records: (0..8).map(|i| rec(i, 1.0, 0.5)).collect(), ..TrainLog::default() };
    assert!(!calm.bce_signature().flagged);
    let saturated = TrainLog { records: (0..8).map(|i| rec(i, 1.0, 1.0)).collect(), ..TrainLog::default() };
    assert!(saturated.bce_signature().flagged);
}

#[test]
fn generate_synthetic_counts() {
    let gen = GeneratorSpec { hidden: [4, 4, 4, 4], ..GeneratorSpec::wasserstein(3, 8, 2, 3) };
    let params = crate::models::build_generator(&gen, 0).unwrap();
    let range = crate::data::NormParams { min: 10.0, max: 20.0 };
    let b = generate_synthetic(&gen, &params, 3750, 1, Some(range)).unwrap();
    assert_eq!(b.len(), 30_000);
    assert_eq!(b.class_counts(), vec![3750; 8]);
    assert!(b.amplitudes().data().iter().all(|v| (10.0..=20.0).contains(v)));
    assert!(generate_synthetic(&gen, &params, 0, 1, None).unwrap().is_empty());
    assert_eq!(
        generate_synthetic(&gen, &params, 2, 9, None).unwrap(),
        generate_synthetic(&gen, &params, 2, 9, None).unwrap()
    );
}

#[test]
fn classifier_learns_desk_corpus() {
    let data = synth_corpus(&SynthCorpusSpec::desk()).unwrap();
    let spec = ClassifierSpec::new(8, 10, 4);
    let cfg = ClassifierTrainConfig { epochs: 30, seed: 2, ..ClassifierTrainConfig::default() };
    let out = train_classifier(&data, &spec, &cfg).unwrap();
    let acc = accuracy(&spec, &out.params, &data).unwrap();
    assert!(acc >= 0.99, "train accuracy {acc}");
    assert!(out.warnings.is_empty());
}

#[test]
fn classifier_zero_epochs_and_determinism() {
    let data = tiny_corpus().denormalize().unwrap();
    let spec = ClassifierSpec::new(8, 8, 3);
    let data8 = synth_corpus(&SynthCorpusSpec { antennas: 8, time: 8, num_classes: 3, per_class: 10, ..SynthCorpusSpec::desk() }).unwrap();
    let zero = ClassifierTrainConfig { epochs: 0, seed: 3, ..ClassifierTrainConfig::default() };
    let out = train_classifier(&data8, &spec, &zero).unwrap();
    assert_eq!(out.params, crate::models::build_classifier(&spec, 3).unwrap());
    let two = ClassifierTrainConfig { epochs: 2, ..zero };
    assert_eq!(
        train_classifier(&data8, &spec, &two).unwrap().params,
        train_classifier(&data8, &spec, &two).unwrap().params
    );
    assert!(matches!(train_classifier(&data, &spec, &two), Err(Error::Dimension(_))));
}

#[test]
fn single_class_training_warns() {
    let data = synth_corpus(&SynthCorpusSpec { antennas: 8, time: 8, num_classes: 2, per_class: 6, ..SynthCorpusSpec::desk() }).unwrap();
    let only0: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == 0).collect();
    let one = data.select(&only0);
    let cfg = ClassifierTrainConfig { epochs: 1, ..ClassifierTrainConfig::default() };
    let out = train_classifier(&one, &ClassifierSpec::new(8, 8, 2), &cfg).unwrap();
    assert_eq!(out.warnings.len(), 1);
}
