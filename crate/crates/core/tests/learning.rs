use dcnet_core::data::{synth, SynthSpec};
use dcnet_core::metrics::{accuracy, kappa};
use dcnet_core::model::{model_backward, model_forward, ModelConfig, ModelParams};
use dcnet_core::train::{adam_step, cross_entropy, evaluate, train, AdamConfig, AdamState, TrainConfig};
use dcnet_core::Rng;

#[test]
fn separable_set_is_learned() {
    let cfg = ModelConfig::tiny(4, 128, 4);
    let train_set = synth(&SynthSpec::new(64, 4, 128, 4, 5.0, 1)).unwrap();
    let val = synth(&SynthSpec::new(64, 4, 128, 4, 5.0, 2)).unwrap();
    let test = synth(&SynthSpec::new(64, 4, 128, 4, 5.0, 3)).unwrap();
    let params = ModelParams::init(&cfg, &mut Rng::new(7)).unwrap();
    let tc = TrainConfig { batch_size: 16, max_epochs: 200, patience: 50, learning_rate: 1e-2, seed: 7, ..TrainConfig::default() };
    let t0 = std::time::Instant::now();
    let out = train(&cfg, params, &train_set, &val, &tc).unwrap();
    let (_, cm) = evaluate(&out.params, &cfg, &train_set).unwrap();
    let (_, cm_test) = evaluate(&out.params, &cfg, &test).unwrap();
    let (acc, k, test_acc) = (accuracy(&cm).unwrap(), kappa(&cm).unwrap(), accuracy(&cm_test).unwrap());
    println!("epochs {} best {} train acc {acc} kappa {k} held-out {test_acc} in {:?}", out.state.history.len(), out.state.best_epoch, t0.elapsed());
    assert!(acc >= 0.95 && k >= 0.9 && test_acc >= 0.8);
}

#[test]
fn fixed_batch_loss_is_non_increasing_in_most_runs() {
    // dropout off: the objective is the same function at every step
    let cfg = ModelConfig { dropout: 0.0, ..ModelConfig::tiny(4, 128, 4) };
    let mut decreasing = 0;
    let runs = 20;
    for seed in 0..runs {
        let set = synth(&SynthSpec::new(8, 4, 128, 4, 5.0, seed)).unwrap();
        let idx: Vec<usize> = (0..8).collect();
        let x = set.batch_tensor(&idx).unwrap();
        let labels = set.batch_labels(&idx);
        let mut params = ModelParams::init(&cfg, &mut Rng::new(seed)).unwrap();
        let mut state = AdamState::new(&params.trainable());
        let mut rng = Rng::new(seed);
        let adam = AdamConfig::default();
        let mut losses = Vec::new();
        for _ in 0..50 {
            let (probs, trace) = model_forward(&x, &params, &cfg, true, &mut rng).unwrap();
            losses.push(cross_entropy(&probs, &labels).unwrap());
            params.commit_running_stats(&trace).unwrap();
            let g = model_backward(trace, &labels, &params).unwrap();
            adam_step(&mut params.trainable_mut(), &g.trainable(), &mut state, &adam).unwrap();
        }
        let increases = losses.windows(2).filter(|w| w[1] > w[0]).count();
        if increases == 0 {
            decreasing += 1;
        } else {
            println!("seed {seed}: {increases} increases over 50 steps");
        }
    }
    assert!(decreasing * 10 >= runs * 9, "{decreasing}/{runs}");
}
