use mlfht::data::{DatasetSplit, Sample, SplitSizes};
use mlfht::training::{init_kernel, train_kernel, Architecture, TrainConfig};
use mlfht::RandomSource;
use rand::Rng;

fn blob(center: f64, n: usize, src: &RandomSource) -> Sample {
    let mut g = src.rng();
    Sample::scalars((0..n).map(|_| center + 0.1 * (g.random::<f64>() - 0.5)).collect()).unwrap()
}

fn improves(arch: Architecture, seed: u64) -> bool {
    let src = RandomSource::new(seed);
    let n = 200;
    let (x, y) = (blob(-1.0, n, &src.fork(&[0])), blob(1.0, n, &src.fork(&[1])));
    let sizes = SplitSizes {
        n_tr: n,
        n_ev: 0,
        n_cal: 0,
        n_opt: 0,
        eval_within_train: false,
    };
    let split = DatasetSplit::carve(&x, &y, sizes).unwrap();
    let init = init_kernel(arch, &[8], 2, &split.train.x, &split.train.y, &src.fork(&[2])).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.02,
        batch_size: 32,
        max_epochs: 20,
        patience: 5,
        seed,
        ..TrainConfig::default()
    };
    let r = train_kernel(&split, &init, &cfg, &src.fork(&[3])).unwrap();
    r.best_val_objective() > r.val_objective[0]
}

#[test]
fn training_improves_separable_toy() {
    for arch in [Architecture::DeepO, Architecture::DeepG] {
        let wins = (0..10).filter(|&s| improves(arch, s)).count();
        assert!(wins >= 9, "{arch:?}: {wins}/10 runs improved");
    }
}
