use capslid_core::autodiff::{finite_diff_check, Evaluation, Graph, ProbePoint};
use capslid_core::capsnet::{
    build_encoder, build_training_loss, forward, loss_and_gradients, margin_loss, predict, reconstruct, route,
    total_loss, CapsNetConfig, CapsuleOutputs, MarginLossConfig, ModelParams, ParamSlot, Prediction,
};
use capslid_core::dsp::ModelInput;
use capslid_core::math::l2_norm;
use capslid_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_input(seed: u64) -> ModelInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelInput::new((0..800).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

/// Routing written out step by step for two children and two parents, with
/// no shared code beyond plain arithmetic.
fn hand_stepped_routing(u: [[[f64; 2]; 2]; 2], iterations: usize) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let squash = |s: [f64; 2]| {
        let n2 = s[0] * s[0] + s[1] * s[1];
        if n2 == 0.0 {
            return [0.0, 0.0];
        }
        let n = n2.sqrt();
        let f = n2 / (1.0 + n2) / n;
        [s[0] * f, s[1] * f]
    };
    let mut b = [[0.0f64; 2]; 2];
    let mut c = [[0.0f64; 2]; 2];
    let mut v = [[0.0f64; 2]; 2];
    for it in 0..iterations {
        for i in 0..2 {
            let m = b[i][0].max(b[i][1]);
            let e0 = (b[i][0] - m).exp();
            let e1 = (b[i][1] - m).exp();
            c[i] = [e0 / (e0 + e1), e1 / (e0 + e1)];
        }
        for j in 0..2 {
            let s = [
                c[0][j] * u[0][j][0] + c[1][j] * u[1][j][0],
                c[0][j] * u[0][j][1] + c[1][j] * u[1][j][1],
            ];
            v[j] = squash(s);
        }
        if it + 1 < iterations {
            for i in 0..2 {
                for j in 0..2 {
                    b[i][j] += u[i][j][0] * v[j][0] + u[i][j][1] * v[j][1];
                }
            }
        }
    }
    (v, c)
}

#[test]
fn two_by_two_routing_matches_hand_stepped_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut u = [[[0.0; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for d in 0..2 {
                u[i][j][d] = rng.gen_range(-2.0..2.0);
            }
        }
    }
    let flat: Vec<f64> = u.iter().flatten().flatten().copied().collect();
    let state = route(&Tensor::new(&[2, 2, 2], flat).unwrap(), 3).unwrap();
    let (v, c) = hand_stepped_routing(u, 3);
    for j in 0..2 {
        for d in 0..2 {
            assert!((state.outputs.data()[j * 2 + d] - v[j][d]).abs() < 1e-12);
        }
    }
    for i in 0..2 {
        for j in 0..2 {
            assert!((state.couplings().data()[i * 2 + j] - c[i][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_norms_are_in_unit_interval() {
    let params = ModelParams::init(CapsNetConfig::reduced(), 3).unwrap();
    for seed in 0..3 {
        let out = forward(&params, &random_input(seed)).unwrap();
        assert_eq!(out.norms.len(), 5);
        for (n, v) in out.norms.iter().zip(&out.vectors) {
            assert!((0.0..1.0).contains(n));
            assert!((l2_norm(v) - n).abs() < 1e-15);
        }
    }
}

#[test]
fn zeroed_parameters_give_zero_norms() {
    let params = ModelParams::zeros(CapsNetConfig::reduced()).unwrap();
    let out = forward(&params, &random_input(1)).unwrap();
    assert!(out.norms.iter().all(|&n| n == 0.0));
}

#[test]
fn full_size_primary_capsule_grid() {
    let params = ModelParams::init(CapsNetConfig::default(), 1).unwrap();
    let x = random_input(2).to_tensor();
    let mut g = Graph::new();
    let enc = build_encoder(&mut g, &params, &x, false).unwrap();
    assert_eq!(g.value(enc.conv1).shape(), &[24, 17, 128]);
    assert_eq!(g.value(enc.primary_caps).shape(), &[8 * 5 * 32, 8]);
    assert_eq!(g.value(enc.mid_routing.outputs).shape(), &[32, 8]);
    assert_eq!(g.value(enc.lang).shape(), &[5, 16]);
    assert!(g.value(enc.norms).data().iter().all(|n| (0.0..1.0).contains(n)));
}

#[test]
fn decoder_with_zero_weights_outputs_half() {
    let params = ModelParams::zeros(CapsNetConfig::default()).unwrap();
    let img = reconstruct(&[0.3; 16], &params).unwrap();
    assert_eq!(img.len(), 800);
    assert!(img.iter().all(|&p| p == 0.5));
    assert!(reconstruct(&[0.3; 15], &params).is_err());
}

#[test]
fn perfect_reconstruction_and_outputs_give_zero_loss() {
    let params = ModelParams::zeros(CapsNetConfig::reduced()).unwrap();
    let input = ModelInput::new(vec![0.5; 800]).unwrap();
    let outputs = CapsuleOutputs {
        vectors: vec![vec![0.0; 8]; 5],
        norms: vec![0.95, 0.0, 0.05, 0.1, 0.0],
    };
    assert_eq!(total_loss(&input, &outputs, 0, &params, &MarginLossConfig::default()).unwrap(), 0.0);
}

#[test]
fn total_loss_is_margin_plus_weighted_reconstruction() {
    let params = ModelParams::init(CapsNetConfig::reduced(), 5).unwrap();
    let input = random_input(6);
    let cfg = MarginLossConfig::default();
    let outputs = forward(&params, &input).unwrap();

    // Oracle: the two terms computed separately.
    let margin = margin_loss(&outputs, 2, &cfg).unwrap();
    let recon = reconstruct(&outputs.vectors[2], &params).unwrap();
    let sq: f64 = recon.iter().zip(input.pixels()).map(|(r, x)| (r - x).powi(2)).sum();
    let expected = margin + cfg.recon_weight * sq;

    let total = total_loss(&input, &outputs, 2, &params, &cfg).unwrap();
    assert!((total - expected).abs() < 1e-15);

    let (breakdown, _) = loss_and_gradients(&params, &input.to_tensor(), 2, &cfg).unwrap();
    assert!((breakdown.total - expected).abs() < 1e-12);
    assert!((breakdown.margin - margin).abs() < 1e-12);

    let no_recon = MarginLossConfig { recon_weight: 0.0, ..cfg };
    assert_eq!(total_loss(&input, &outputs, 2, &params, &no_recon).unwrap(), margin);
}

#[test]
fn permuting_language_capsules_permutes_norms() {
    let params = ModelParams::init(CapsNetConfig::reduced(), 9).unwrap();
    let input = random_input(10);
    let cfg = MarginLossConfig::default();
    let perm = [3usize, 0, 4, 1, 2]; // new position p holds old capsule perm[p]
    let mut permuted = params.clone();
    let c = *params.config();
    let block = c.lang_dim * c.mid_dim;
    {
        let src = params.get(ParamSlot::LangTransform).data().to_vec();
        let dst = permuted.get_mut(ParamSlot::LangTransform).data_mut();
        for i in 0..c.mid_caps {
            for (p, &old) in perm.iter().enumerate() {
                let to = (i * c.lang_caps + p) * block;
                let from = (i * c.lang_caps + old) * block;
                dst[to..to + block].copy_from_slice(&src[from..from + block]);
            }
        }
    }
    let a = forward(&params, &input).unwrap();
    let b = forward(&permuted, &input).unwrap();
    for (p, &old) in perm.iter().enumerate() {
        assert!((b.norms[p] - a.norms[old]).abs() < 1e-12);
    }
    for label in 0..5 {
        let new_label = perm.iter().position(|&o| o == label).unwrap();
        let la = total_loss(&input, &a, label, &params, &cfg).unwrap();
        let lb = total_loss(&input, &b, new_label, &permuted, &cfg).unwrap();
        assert!((la - lb).abs() < 1e-12);
    }
}

#[test]
fn prediction_tie_breaks_to_lowest_index() {
    assert_eq!(Prediction::from_norms(vec![0.1, 0.8, 0.2, 0.1, 0.1]).label, 1);
    assert_eq!(Prediction::from_norms(vec![0.5, 0.5, 0.1, 0.1, 0.1]).label, 0);
}

#[test]
fn out_of_range_label_is_rejected_by_the_graph_loss() {
    let params = ModelParams::init(CapsNetConfig::reduced(), 1).unwrap();
    let x = random_input(1).to_tensor();
    let mut g = Graph::new();
    let enc = build_encoder(&mut g, &params, &x, true).unwrap();
    assert!(build_training_loss(&mut g, &enc, 5, &MarginLossConfig::default()).is_err());
}

#[test]
fn reduced_model_gradients_match_finite_differences() {
    let cfg = MarginLossConfig::default();
    let config = CapsNetConfig::reduced();
    let params = ModelParams::init(config, 42).unwrap();
    let x = random_input(43).to_tensor();
    let (_, analytic) = loss_and_gradients(&params, &x, 1, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let subset: Vec<ProbePoint> = analytic
        .iter()
        .enumerate()
        .flat_map(|(tensor, t)| {
            let n = t.len();
            (0..12).map(|_| ProbePoint { tensor, index: rng.gen_range(0..n) }).collect::<Vec<_>>()
        })
        .collect();
    let mut tensors = params.clone().into_tensors();
    let report = finite_diff_check(&mut tensors, &analytic, &subset, 1e-5, 1e-4, |ts| {
        let p = ModelParams::from_tensors(config, ts.to_vec())?;
        let mut g = Graph::new();
        let enc = build_encoder(&mut g, &p, &x, false)?;
        let loss = build_training_loss(&mut g, &enc, 1, &cfg)?;
        Evaluation::from_terms(&g, &[(loss.margin, 1.0), (loss.squared_errors, cfg.recon_weight)])
    })
    .unwrap();
    assert!(report.passed(), "max rel error {} worst {:?}", report.max_rel_error, report.worst());
}

#[test]
fn full_model_gradients_are_finite_and_shaped_like_parameters() {
    let params = ModelParams::init(CapsNetConfig::default(), 1).unwrap();
    let x = random_input(3).to_tensor();
    let (loss, grads) = loss_and_gradients(&params, &x, 0, &MarginLossConfig::default()).unwrap();
    assert!(loss.total.is_finite() && loss.total > 0.0);
    for (g, p) in grads.iter().zip(params.tensors()) {
        assert_eq!(g.shape(), p.shape());
        assert!(g.is_finite());
    }
    assert_eq!(predict(&params, &random_input(3)).unwrap().norms.len(), 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn margin_loss_is_nonnegative_and_zero_exactly_on_hinges(
        norms in prop::collection::vec(0.0f64..1.0, 5),
        label in 0usize..5,
    ) {
        let cfg = MarginLossConfig::default();
        let out = CapsuleOutputs { vectors: norms.iter().map(|&n| vec![n]).collect(), norms: norms.clone() };
        let loss = margin_loss(&out, label, &cfg).unwrap();
        prop_assert!(loss >= 0.0);
        let hinges_quiet = norms.iter().enumerate().all(|(c, &n)| if c == label { n >= 0.9 } else { n <= 0.1 });
        prop_assert_eq!(loss == 0.0, hinges_quiet);
    }

    #[test]
    fn classification_ignores_monotone_transforms(norms in prop::collection::vec(0.0f64..1.0, 5)) {
        let base = Prediction::from_norms(norms.clone()).label;
        let transformed: Vec<f64> = norms.iter().map(|n| (3.0 * n).exp() + n.powi(3)).collect();
        prop_assert_eq!(Prediction::from_norms(transformed).label, base);
    }
}
