use hyblink::neural::{train_autoencoder, train_classifier, TrainConfig};
use hyblink::seeding::derive_seed;
use hyblink::synthgen::{generate_dataset, split, FeatureStatsTable};
use hyblink::{init_model, Thresholds};

fn main() {
    let master = 42u64;
    let train_seed = derive_seed(master, "train");
    let d = generate_dataset(2040, 42, &Thresholds::default(), &FeatureStatsTable::default()).unwrap();
    let (tr, va) = split(&d, 0.8, derive_seed(train_seed, "split")).unwrap();
    for head_epochs in [100u32, 200, 400, 800] {
        let t0 = std::time::Instant::now();
        let mut m = init_model(derive_seed(train_seed, "init"));
        let cfg = TrainConfig { seed: train_seed, ..TrainConfig::default() };
        let ae = train_autoencoder(&mut m, &tr, &va, &cfg).unwrap();
        let head_cfg = TrainConfig { epochs: head_epochs, ..cfg };
        let cl = train_classifier(&mut m, &tr, &va, &head_cfg).unwrap();
        println!(
            "head_epochs {head_epochs}: ran {} epochs (stopped_early {}), val_acc {:.4}, train_acc {:.4}, ae_epochs {} ae_val {:.4}, took {:?}",
            cl.history.len(), cl.stopped_early, cl.val_accuracy, cl.train_accuracy, ae.history.len(), ae.best_val_loss, t0.elapsed()
        );
    }
}
