use unetcast::dataio::{compute_norm_stats, generate_synthetic, NormStats, SyntheticConfig};
use unetcast::evaluation::{evaluate, ModelForecaster, Persistence};
use unetcast::grid::{GridField, GridSeries, MonthRange, MonthStamp};
use unetcast::model::{build_model, Arch, Model, ModelConfig};
use unetcast::nn::Tensor4;
use unetcast::stacking::{assemble_range, assemble_sample, Sample, TemporalCase};
use unetcast::training::{finetune, predict, train, TrainConfig};
use unetcast::Error;

struct Data {
    series: GridSeries,
    elevation: GridField,
    norm: NormStats,
}

fn data(years: usize, noise_std: f64, base_equator: f64) -> Data {
    let cfg = SyntheticConfig {
        n_lat: 8,
        n_lon: 16,
        n_years: years,
        noise_std,
        base_equator,
        ..Default::default()
    };
    let (series, elevation) = generate_synthetic(&cfg).unwrap();
    let norm = compute_norm_stats(std::slice::from_ref(&series), Some(&elevation), "synthetic").unwrap();
    Data {
        series,
        elevation,
        norm,
    }
}

fn case(s: &str) -> TemporalCase {
    s.parse().unwrap()
}

fn samples(d: &Data, norm: &NormStats, c: &TemporalCase, first: usize, last: usize) -> Vec<Sample> {
    assemble_range(
        &d.series,
        Some(&d.elevation),
        norm,
        c,
        d.series.stamp(first),
        d.series.stamp(last),
    )
    .unwrap()
}

fn fresh(c: &TemporalCase, norm: &NormStats, seed: u64) -> Model<f32> {
    build_model(ModelConfig::new(Arch::Unet, *c, true, 4, norm.clone()), seed).unwrap()
}

fn fast(epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        weight_decay: 0.0,
        epochs,
        batch_size: 8,
        early_stop_patience: None,
        seed: 5,
        ..Default::default()
    }
}

fn normalized_val_mse(model: &Model<f32>, val: &[Sample]) -> f64 {
    let norm = &model.config().norm_stats;
    let mut se = 0.0;
    let mut n = 0;
    for s in val {
        let p = model.infer(&s.input).unwrap();
        for (a, t) in p.data().iter().zip(s.target.values()) {
            let d = *a as f64 - (norm.normalize(*t) as f32) as f64;
            se += d * d;
            n += 1;
        }
    }
    se / n as f64
}

#[test]
fn zero_epochs_returns_initial_parameters() {
    let d = data(2, 0.5, 27.0);
    let c = case("seq-6");
    let tr = samples(&d, &d.norm, &c, 6, 15);
    let mut m = fresh(&c, &d.norm, 1);
    let initial = m.snapshot();
    let (ckpt, hist) = train(&mut m, &tr, &tr, &fast(0)).unwrap();
    assert_eq!(m.snapshot(), initial);
    assert_eq!(ckpt.tensors, initial);
    assert_eq!(hist.epochs.len(), 1);
    assert_eq!(hist.best_epoch, 0);
}

#[test]
fn runs_are_bitwise_reproducible_and_select_the_best_epoch() {
    let d = data(3, 0.5, 27.0);
    let c = case("seq-6");
    let tr = samples(&d, &d.norm, &c, 6, 23);
    let va = samples(&d, &d.norm, &c, 24, 35);
    for shuffle in [false, true] {
        let cfg = TrainConfig { shuffle, ..fast(6) };
        let mut a = fresh(&c, &d.norm, 2);
        let mut b = fresh(&c, &d.norm, 2);
        let (ca, ha) = train(&mut a, &tr, &va, &cfg).unwrap();
        let (cb, hb) = train(&mut b, &tr, &va, &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(ca, cb);

        assert!(ha.epochs[1].train_mse < ha.epochs[0].train_mse);
        let best = ha
            .epochs
            .iter()
            .map(|r| r.val_mse)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(ha.best_validation_loss, best);
        assert_eq!(ha.epochs[ha.best_epoch].val_mse, best);
        let reloaded = ca.to_model().unwrap();
        assert!((normalized_val_mse(&reloaded, &va) - best).abs() < 1e-6);
        for r in &ha.epochs[1..] {
            assert_eq!(r.learning_rate, cfg.scheduler().rate(r.epoch - 1));
        }
    }
}

#[test]
fn non_finite_loss_is_a_divergence_error() {
    let d = data(2, 0.5, 27.0);
    let c = case("seq-6");
    let mut tr = samples(&d, &d.norm, &c, 6, 13);
    let dims = tr[0].input.dims();
    tr[0].input = Tensor4::filled(dims, f32::NAN);
    let mut m = fresh(&c, &d.norm, 3);
    let cfg = TrainConfig { shuffle: false, ..fast(3) };
    match train(&mut m, &tr, &tr[1..], &cfg) {
        Err(Error::Divergence { epoch, step, .. }) => assert_eq!((epoch, step), (1, 0)),
        other => panic!("expected divergence, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn finetune_contracts() {
    let d = data(3, 0.5, 27.0);
    let c = case("seq-6");
    let tr = samples(&d, &d.norm, &c, 6, 23);
    let va = samples(&d, &d.norm, &c, 24, 35);
    let mut m = fresh(&c, &d.norm, 4);
    let (ckpt, hist) = train(&mut m, &tr, &va, &fast(3)).unwrap();

    let (same, _) = finetune(&ckpt, &c, &tr, &va, &fast(0)).unwrap();
    assert_eq!(same.tensors, ckpt.tensors);

    let (_, again) = finetune(&ckpt, &c, &tr, &va, &fast(2)).unwrap();
    assert!(again.best_validation_loss <= hist.best_validation_loss + 1e-6);

    assert!(matches!(
        finetune(&ckpt, &case("y1m1"), &tr, &va, &fast(1)),
        Err(Error::Config(_))
    ));
}

#[test]
fn finetuning_adapts_to_a_shifted_climate() {
    let c = case("y1m1");
    let pre = data(6, 0.3, 27.0);
    let tr = samples(&pre, &pre.norm, &c, 13, 59);
    let va = samples(&pre, &pre.norm, &c, 60, 71);
    let mut m = fresh(&c, &pre.norm, 7);
    let (ckpt, _) = train(&mut m, &tr, &va, &fast(8)).unwrap();

    // same geography, warmer tropics; statistics stay frozen from pretraining
    let shifted = data(6, 0.3, 31.0);
    let ft_train = samples(&shifted, &pre.norm, &c, 13, 47);
    let ft_val = samples(&shifted, &pre.norm, &c, 48, 59);
    let held_out = samples(&shifted, &pre.norm, &c, 60, 71);
    let (tuned, _) = finetune(&ckpt, &c, &ft_train, &ft_val, &fast(6)).unwrap();
    let before = normalized_val_mse(&ckpt.to_model().unwrap(), &held_out);
    let after = normalized_val_mse(&tuned.to_model().unwrap(), &held_out);
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn predict_contracts_and_skill_on_noise_free_data() {
    let d = data(10, 0.0, 27.0);
    let c = case("y1m1");
    let tr = samples(&d, &d.norm, &c, 13, 95);
    let va = samples(&d, &d.norm, &c, 96, 107);
    let mut m = build_model(ModelConfig::new(Arch::Unet, c, true, 8, d.norm.clone()), 8).unwrap();
    train(&mut m, &tr, &va, &fast(30)).unwrap();

    let target = d.series.stamp(65);
    let a = predict(&m, &d.series, Some(&d.elevation), target).unwrap();
    let b = predict(&m, &d.series, Some(&d.elevation), target).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.shape(), d.series.shape());
    let next = d.series.end().advance(1);
    assert!(predict(&m, &d.series, Some(&d.elevation), next).is_ok());
    assert!(matches!(
        predict(&m, &d.series, Some(&d.elevation), d.series.stamp(12)),
        Err(Error::InsufficientHistory(_))
    ));
    assert!(matches!(
        predict(&m, &d.series, Some(&d.elevation), MonthStamp::new(1900, 1).unwrap()),
        Err(Error::InsufficientHistory(_))
    ));

    let range = MonthRange::new(d.series.stamp(108), d.series.end()).unwrap();
    let model_mae = evaluate(
        &ModelForecaster {
            model: &m,
            history: &d.series,
            elevation: Some(&d.elevation),
        },
        &d.series,
        &[],
        range,
    )
    .unwrap()
    .overall_mae;
    let persistence = evaluate(&Persistence { series: &d.series }, &d.series, &[], range)
        .unwrap()
        .overall_mae;
    assert!(model_mae < persistence, "{model_mae} !< {persistence}");
}

#[test]
fn samples_carry_celsius_targets() {
    let d = data(2, 0.5, 27.0);
    let c = case("seq-6");
    let s = assemble_sample(&d.series, Some(&d.elevation), &d.norm, &c, 10).unwrap();
    assert_eq!(&s.target, d.series.field(10));
    assert_eq!(s.input.dims(), [1, 7, 8, 16]);
}
