use ccnets_core::baselines::{AutoencoderNet, BaselineConfig, MlpClassifier};
use ccnets_core::gradcheck::{check_gradients, sample_coordinates, SequentialObjective, TripleObjective};
use ccnets_core::nn::InnerKind;
use ccnets_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
// Central differences of an O(1) loss carry ~1e-11 absolute roundoff.
const FLOOR: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn small(inner: [InnerKind; 3], joint: JointMode) -> CcnetsConfig {
    let mut cfg = CcnetsConfig {
        observe_size: 5,
        explain_size: 3,
        hidden_size: 6,
        ..CcnetsConfig::default()
    };
    for (net, kind) in [&mut cfg.explainer, &mut cfg.reasoner, &mut cfg.producer].into_iter().zip(inner) {
        net.inner_network = kind;
        net.inner_network_number_of_layer = 2;
        net.joint_type = joint;
    }
    cfg
}

fn batch(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> (Tensor, Tensor) {
    let x = Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap();
    let y = Tensor::from_vec(rows, 1, (0..rows).map(|i| (i % 2) as f64).collect()).unwrap();
    (x, y)
}

fn check_all_roles(cfg: CcnetsConfig, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, y) = batch(&mut rng, 4, cfg.observe_size);
    let mut triple = CooperativeTriple::new(cfg, seed).unwrap();
    for role in Role::ALL {
        let coords = sample_coordinates(&triple.store, triple.range(role), usize::MAX, 0);
        let mut probe = TripleObjective {
            triple: &mut triple,
            x: &x,
            y: &y,
            role,
        };
        let report = check_gradients(&mut probe, &coords, EPS, FLOOR).unwrap();
        assert!(report.checked > coords.len() / 2, "{role:?}: too many kinks {report:?} {cfg:?}");
        assert!(report.max_rel_error < TOL, "{role:?} {cfg:?}: {report:?}");
    }
}

#[test]
fn every_inner_kind_and_joint_mode() {
    let kinds = [InnerKind::Mlp, InnerKind::Resmlp, InnerKind::Deepfm];
    for (i, joint) in [JointMode::None, JointMode::Add, JointMode::Cat].into_iter().enumerate() {
        for (j, &k) in kinds.iter().enumerate() {
            let rotated = [k, kinds[(j + 1) % 3], kinds[(j + 2) % 3]];
            check_all_roles(small(rotated, joint), (i * 3 + j) as u64);
        }
    }
}

#[test]
fn every_reduction_and_form() {
    let reductions = [ReductionMode::All, ReductionMode::Layer, ReductionMode::Batch, ReductionMode::None];
    let mut seed = 100;
    for pred in reductions {
        for model in reductions {
            for form in [ModelLossForm::Signed, ModelLossForm::Abs] {
                let mut cfg = small([InnerKind::Mlp, InnerKind::Deepfm, InnerKind::Resmlp], JointMode::Add);
                cfg.prediction_loss_reduction = pred;
                cfg.model_loss_reduction = model;
                cfg.model_loss_form = form;
                check_all_roles(cfg, seed);
                seed += 1;
            }
        }
    }
}

#[test]
fn log_loss_prediction_distance() {
    let mut cfg = small([InnerKind::Mlp, InnerKind::Mlp, InnerKind::Mlp], JointMode::Add);
    cfg.prediction_loss_type = LossKind::LogLoss;
    cfg.producer.final_activation = Activation::Sigmoid;
    check_all_roles(cfg, 7);
}

#[test]
fn tanh_and_sigmoid_inner_activations() {
    let mut cfg = small([InnerKind::Resmlp, InnerKind::Deepfm, InnerKind::Mlp], JointMode::Cat);
    cfg.explainer.inner_activation = Activation::Tanh;
    cfg.reasoner.inner_activation = Activation::Sigmoid;
    cfg.producer.final_activation = Activation::Tanh;
    check_all_roles(cfg, 9);
}

#[test]
fn autoencoder_and_classifier() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (x, _) = batch(&mut rng, 8, 30);
    let mut ae = AutoencoderNet::new(30, &BaselineConfig::default(), 1).unwrap();
    let coords = sample_coordinates(&ae.net.store, 0..ae.net.store.len(), 12, 5);
    let report = check_gradients(
        &mut SequentialObjective {
            net: &mut ae.net,
            x: &x,
            target: &x,
            kind: LossKind::L1,
        },
        &coords,
        EPS,
        FLOOR,
    )
    .unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");

    let y = Tensor::from_vec(8, 1, (0..8).map(|i| (i % 3 == 0) as u8 as f64).collect()).unwrap();
    let mut mlp = MlpClassifier::new(30, &BaselineConfig::default(), 2).unwrap();
    let coords = sample_coordinates(&mlp.net.store, 0..mlp.net.store.len(), 12, 6);
    let report = check_gradients(
        &mut SequentialObjective {
            net: &mut mlp.net,
            x: &x,
            target: &y,
            kind: LossKind::LogLoss,
        },
        &coords,
        EPS,
        FLOOR,
    )
    .unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
}

#[test]
fn probing_restores_parameters_exactly() {
    let cfg = small([InnerKind::Mlp, InnerKind::Deepfm, InnerKind::Resmlp], JointMode::Add);
    let mut triple = CooperativeTriple::new(cfg, 4).unwrap();
    let before = triple.store.checksum();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (x, y) = batch(&mut rng, 3, 5);
    let coords = sample_coordinates(&triple.store, triple.range(Role::Producer), 3, 1);
    check_gradients(
        &mut TripleObjective {
            triple: &mut triple,
            x: &x,
            y: &y,
            role: Role::Producer,
        },
        &coords,
        EPS,
        FLOOR,
    )
    .unwrap();
    assert_eq!(before, triple.store.checksum());
}
