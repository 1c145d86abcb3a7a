use segalign::align::BeamConfig;
use segalign::duration::{make_binning, RemainingTarget, StepMode};
use segalign::features::{FeatureMatrix, WindowConfig};
use segalign::nn::TrainConfig;
use segalign::pipeline::{
    durnet_tuples, generate_synthetic, realign, run_ablation, run_eval, run_training, DurationChoice, PipelineConfig,
    SynthConfig,
};
use segalign::{Alignment, Transcript, VideoSample, Vocab};

/// Small networks at a learning rate that moves in a few epochs.
fn quick_config(epochs: usize) -> PipelineConfig {
    let net = TrainConfig {
        learning_rate: 1e-3,
        hidden: 16,
        epochs,
        ..TrainConfig::default()
    };
    let mut cfg = PipelineConfig {
        rounds: 0,
        ..PipelineConfig::default()
    };
    cfg.durnet.train = net.clone();
    cfg.selector.vsnet = net.clone();
    cfg.selector.osnet = TrainConfig { seed: 1, ..net.clone() };
    cfg.selector.mar = TrainConfig { seed: 2, hidden: 0, ..net };
    cfg.beam = BeamConfig::new(30, cfg.beam.fusion).unwrap();
    cfg
}

#[test]
fn same_seed_same_corpus() {
    let cfg = SynthConfig { train_videos: 4, test_videos: 3, ..SynthConfig::default() };
    let a = generate_synthetic(&cfg).unwrap();
    let b = generate_synthetic(&cfg).unwrap();
    for (x, y) in a.train.iter().chain(&a.test).zip(b.train.iter().chain(&b.test)) {
        assert_eq!(x.features().as_slice(), y.features().as_slice());
        assert_eq!(x.reference(), y.reference());
        assert_eq!(x.transcript(), y.transcript());
    }
    assert_eq!(a.train_truth, b.train_truth);
    let c = generate_synthetic(&SynthConfig { seed: cfg.seed + 1, ..cfg }).unwrap();
    assert_ne!(a.test[0].features().as_slice(), c.test[0].features().as_slice());
}

#[test]
fn pace_mixture_gives_two_duration_modes() {
    let cfg = SynthConfig {
        duration_sigma: 0.05,
        train_videos: 0,
        test_videos: 1500,
        seed: 5,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&cfg).unwrap();
    let verb = "cut";
    let base = cfg.verb_durations.iter().find(|(v, _)| v == verb).unwrap().1;
    let lengths: Vec<f64> = data
        .test
        .iter()
        .flat_map(|v| v.reference().unwrap().segments().to_vec())
        .filter(|s| data.vocab.verb_name(data.vocab.verb_of(s.action)) == verb)
        .map(|s| s.len as f64 / base)
        .collect();
    assert!(lengths.len() >= 500, "only {} instances", lengths.len());
    let share = |lo: f64, hi: f64| lengths.iter().filter(|&&x| x >= lo && x < hi).count() as f64 / lengths.len() as f64;
    let (slow, fast, between) = (share(0.6, 0.8), share(1.3, 1.7), share(0.9, 1.2));
    assert!(slow > 0.35 && fast > 0.35, "modes hold {slow:.2} and {fast:.2}");
    assert!(between < 0.02, "{between:.2} between the modes");
}

#[test]
fn single_run_tuple_is_labelled_with_its_length() {
    let vocab = Vocab::new(&[("pour_milk", "pour", "milk"), ("cut_bun", "cut", "bun")], None).unwrap();
    let bins = 5;
    let gammas = [18.0, 30.0];
    let binning = make_binning(&gammas, bins).unwrap();
    let window = WindowConfig::new(4, 2).unwrap();
    for len in [1usize, 7, 18, 29, 64] {
        let features = FeatureMatrix::new(len, 2, vec![0.25; 2 * len]).unwrap();
        let reference = Alignment::from_lengths(&[(0, len)]).unwrap();
        let v = VideoSample::new("one", features, Transcript::new(vec![0]).unwrap(), Some(reference), &vocab).unwrap();
        let tuples = durnet_tuples(&[v], &vocab, &binning, &window, RemainingTarget::Width).unwrap();
        let width = gammas[0] / (bins / 2 + 1) as f64;
        let want = ((len as f64 / width).floor() as usize).min(bins - 1);
        assert_eq!(tuples[0].elapsed_bin, 0);
        assert_eq!(tuples[0].target_bin, want, "length {len}");
        // One more tuple per step inside the run.
        assert_eq!(tuples.len(), len.div_ceil(binning.step(0)));
    }
}

#[test]
fn zero_rounds_keeps_the_initial_references() {
    let data = generate_synthetic(&SynthConfig { train_videos: 6, test_videos: 0, ..SynthConfig::default() }).unwrap();
    let out = run_training(&data.train, &data.vocab, &quick_config(2)).unwrap();
    assert!(out.rounds.is_empty());
    let initial: Vec<Alignment> = data.train.iter().map(|v| v.reference().unwrap().clone()).collect();
    assert_eq!(out.pseudo, initial);
    assert!(out.models.durnet.is_some());
}

#[test]
fn realigned_references_are_valid() {
    let data = generate_synthetic(&SynthConfig { train_videos: 8, test_videos: 0, ..SynthConfig::default() }).unwrap();
    let cfg = PipelineConfig { rounds: 1, ..quick_config(3) };
    let out = run_training(&data.train, &data.vocab, &cfg).unwrap();
    assert_eq!(out.rounds.len(), 1);
    for (v, a) in data.train.iter().zip(&out.pseudo) {
        assert!(a.matches(v.transcript()));
        assert_eq!(a.total_frames(), v.num_frames());
    }
    let (again, _, _) = realign(&data.train, &data.vocab, &out.models, &cfg).unwrap();
    assert_eq!(again.len(), data.train.len());
}

#[test]
fn noise_free_corpus_is_decoded_almost_perfectly() {
    let synth = SynthConfig {
        feature_noise: 0.0,
        boundary_jitter: 0,
        train_videos: 40,
        test_videos: 10,
        seed: 17,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&synth).unwrap();
    let cfg = PipelineConfig { beam: BeamConfig::default(), ..quick_config(40) };
    let out = run_training(&data.train, &data.vocab, &cfg).unwrap();
    let duration = out.models.duration_model(DurationChoice::DurNet).unwrap();
    let (report, records) = run_eval(&data.test, &data.vocab, out.models.models(&data.vocab, &duration), &cfg.beam).unwrap();
    assert_eq!(records.len(), 10);
    let acc = report.mean_acc().unwrap();
    assert!(acc >= 0.95, "mean accuracy {acc}");
}

#[test]
fn ablation_grid_has_one_row_per_cell() {
    let data = generate_synthetic(&SynthConfig { train_videos: 6, test_videos: 3, ..SynthConfig::default() }).unwrap();
    let modes = [StepMode::Median, StepMode::Mean, StepMode::Max, StepMode::Fixed(20)];
    let rows = run_ablation(
        &data.train,
        &data.test,
        &data.vocab,
        &quick_config(2),
        &[DurationChoice::DurNet, DurationChoice::Poisson],
        &modes,
    )
    .unwrap();
    assert_eq!(rows.len(), 8);
}
