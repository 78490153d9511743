use coldstart_al::alloop::f1_binary;
use coldstart_al::model::{self, ClassifierHead, TrainConfig};
use coldstart_al::synth::{self, SyntheticSpec};
use coldstart_al::{par, Dataset, Split};
use proptest::prelude::*;

type Labeled = Vec<(usize, bool)>;

fn task(sigma: f64, seed: u64) -> (Dataset, Labeled, Labeled) {
    let spec = SyntheticSpec {
        n_classes: 2,
        n_samples: 600,
        dim: 10,
        class_prevalences: vec![0.7, 0.3],
        center_separation: 1.0,
        noise_sigma: sigma,
        seed,
    };
    let s = synth::generate_synthetic(&spec).unwrap();
    let ds = Dataset::new(s.embeddings, s.records).unwrap();
    let t = ds.task("class1");
    let set = |split| ds.ids_in(split).into_iter().map(|id| (id, t.label(id))).collect::<Vec<_>>();
    let (train, dev) = (set(Split::Train), set(Split::Dev));
    (ds, train, dev)
}

#[test]
fn returned_head_is_the_best_dev_epoch() {
    let (ds, train, dev) = task(0.35, 1);
    let train: Vec<_> = train.into_iter().take(60).collect();
    let (head, report) = model::train(&ds.embeddings, &train, &dev, &TrainConfig::default(), 3).unwrap();
    assert_eq!(report.dev_f1_per_epoch.len(), report.epochs_run);
    assert_eq!(report.dev_loss_per_epoch.len(), report.epochs_run);
    let max = report.dev_f1_per_epoch.iter().copied().fold(0.0, f64::max);
    assert_eq!(report.best_dev_f1, max);
    assert_eq!(report.dev_f1_per_epoch[report.best_epoch - 1], max);
    // Among epochs tied at the best F1, the chosen one has the lowest loss up to it.
    for e in 0..report.best_epoch - 1 {
        if report.dev_f1_per_epoch[e] == max {
            assert!(report.dev_loss_per_epoch[e] > report.dev_loss_per_epoch[report.best_epoch - 1]);
        }
    }
    if report.stopped_early {
        assert_eq!(report.epochs_run, report.best_epoch + TrainConfig::default().patience);
    }
    let ids: Vec<usize> = dev.iter().map(|d| d.0).collect();
    let preds: Vec<bool> = head.predict(&ds.embeddings, &ids).unwrap().iter().map(|&p| p >= 0.5).collect();
    let truth: Vec<bool> = dev.iter().map(|d| d.1).collect();
    assert_eq!(f1_binary(&preds, &truth).unwrap().2, report.best_dev_f1);
}

#[test]
fn separable_task_is_learned_from_ten_labels() {
    let (ds, train, dev) = task(0.02, 2);
    let mut few: Vec<_> = train.iter().filter(|t| t.1).take(5).copied().collect();
    few.extend(train.iter().filter(|t| !t.1).take(5));
    let (_, report) = model::train(&ds.embeddings, &few, &dev, &TrainConfig::default(), 0).unwrap();
    assert_eq!(report.best_dev_f1, 1.0);
}

#[test]
fn training_ignores_thread_count() {
    let (ds, train, dev) = task(0.3, 3);
    let run = |t| par::with_threads(t, || model::train(&ds.embeddings, &train, &dev, &TrainConfig::default(), 5).unwrap());
    assert_eq!(run(1), run(8));
}

proptest! {
    #[test]
    fn sigmoid_is_a_probability(z in -1e4f64..1e4) {
        let p = model::sigmoid(z);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p + model::sigmoid(-z) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predictions_are_probabilities(seed in any::<u64>(), rate in 0.0f64..0.9) {
        let (ds, _, _) = task(0.3, seed % 20);
        let head = ClassifierHead::init(10, 8, rate, seed).unwrap();
        let ids: Vec<usize> = (0..50).collect();
        for p in head.predict(&ds.embeddings, &ids).unwrap() {
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
