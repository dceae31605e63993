use proptest::prelude::*;

use fedvote::data::{
    load_dataset, partition_clients, save_dataset, stratified_split, Dataset, LabelSpace,
};
use fedvote::ensemble::VoteMethod;
use fedvote::federation::{aggregate_fedavg, ClientUpdate, Strategy as GlobalStrategy};
use fedvote::metrics::{report, ConfusionMatrix};
use fedvote::models::{
    cross_entropy, init_model, set_params, ArchKind, Architecture, BaseLearner, ParameterVector,
};
use fedvote::numerics::{RngStream, Tensor};

/// Each sample's single feature is its index in the original dataset.
fn indexed(labels: Vec<usize>) -> Dataset {
    let m = labels.len();
    let x = Tensor::new(vec![m, 1], (0..m).map(|i| i as f64).collect()).unwrap();
    Dataset::new(x, labels, LabelSpace::default()).unwrap()
}

fn origins(d: &Dataset) -> Vec<usize> {
    d.features().data().iter().map(|&v| v as usize).collect()
}

fn labels_with_every_class() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..4, 0..120).prop_map(|mut l| {
        l.extend(0..4);
        l
    })
}

fn archs() -> Vec<Architecture> {
    ArchKind::ALL
        .iter()
        .map(|&k| Architecture::for_features(k, &[36], 4, 8).unwrap())
        .collect()
}

fn random_model(arch: &Architecture, rng: &mut RngStream, scale: f64) -> BaseLearner {
    let theta = (0..arch.param_count())
        .map(|_| scale * rng.standard_normal())
        .collect();
    BaseLearner::from_params(
        arch.clone(),
        ParameterVector::new(arch.kind, theta).unwrap(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shards_are_disjoint_exhaustive_and_balanced(
        labels in labels_with_every_class(),
        p in 1usize..9,
        seed in any::<u64>(),
    ) {
        let d = indexed(labels);
        prop_assume!(d.len() >= p);
        let part = partition_clients(&d, p, &mut RngStream::new(seed, 3)).unwrap();
        prop_assert_eq!(part.shards.len(), p);

        let mut seen: Vec<usize> = part.shards.iter().flat_map(origins).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..d.len()).collect::<Vec<_>>());

        for class in 0..4 {
            let sizes: Vec<usize> = part.shards.iter().map(|s| s.class_counts()[class]).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        for s in &part.shards {
            for (o, &l) in origins(s).iter().zip(s.labels()) {
                prop_assert_eq!(d.labels()[*o], l);
            }
        }
    }

    #[test]
    fn split_keeps_every_sample_and_its_class(
        labels in labels_with_every_class(),
        frac in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let d = indexed(labels);
        let (train, test) = stratified_split(&d, frac, &mut RngStream::new(seed, 2)).unwrap();
        prop_assert_eq!(train.len() + test.len(), d.len());
        let mut seen: Vec<usize> = origins(&train).into_iter().chain(origins(&test)).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..d.len()).collect::<Vec<_>>());
        for part in [&train, &test] {
            for (o, &l) in origins(part).iter().zip(part.labels()) {
                prop_assert_eq!(d.labels()[*o], l);
            }
        }
        for (c, &n) in d.class_counts().iter().enumerate() {
            prop_assert_eq!(train.class_counts()[c], (frac * n as f64 + 1e-9).floor() as usize);
        }
    }

    #[test]
    fn file_round_trip_is_lossless_for_single_precision_values(
        values in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 1..60),
        dim in 1usize..4,
    ) {
        let m = values.len() / dim;
        prop_assume!(m > 0);
        let data: Vec<f64> = values[..m * dim].iter().map(|&v| v as f64).collect();
        let labels: Vec<usize> = (0..m).map(|i| i % 4).collect();
        let d = Dataset::new(Tensor::new(vec![m, dim], data).unwrap(), labels, LabelSpace::default()).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        save_dataset(&d, tmp.path()).unwrap();
        let back = load_dataset(tmp.path()).unwrap();
        prop_assert_eq!(back.features().shape(), d.features().shape());
        let same_bits = back
            .features()
            .data()
            .iter()
            .zip(d.features().data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same_bits);
        prop_assert_eq!(back.labels(), d.labels());
    }

    #[test]
    fn forward_and_loss_stay_finite_on_large_inputs(seed in any::<u64>(), scale in 0.01f64..2.0) {
        let mut rng = RngStream::new(seed, 0);
        for arch in archs() {
            let model = random_model(&arch, &mut rng, scale);
            let m = 8;
            let x = Tensor::new(vec![m, 36], (0..m * 36).map(|_| 200.0 * rng.uniform() - 100.0).collect()).unwrap();
            let labels: Vec<usize> = (0..m).map(|i| i % 4).collect();
            let probs = model.forward(&x).unwrap();
            prop_assert!(probs.data().iter().all(|p| p.is_finite() && *p >= 0.0));
            let loss = cross_entropy(&probs, &labels).unwrap();
            prop_assert!(loss.is_finite());
            prop_assert!(model.gradient(&x, &labels).unwrap().as_slice().iter().all(|g| g.is_finite()));
        }
    }

    #[test]
    fn fedavg_stays_inside_the_client_range(
        seed in any::<u64>(),
        p in 1usize..9,
        shuffle_seed in any::<u64>(),
    ) {
        let mut rng = RngStream::new(seed, 0);
        let archs = archs();
        let empty = report(&ConfusionMatrix::zeros(LabelSpace::default()), 0.0);
        let mut updates: Vec<ClientUpdate> = (0..p)
            .map(|id| ClientUpdate {
                client_id: id,
                architectures: archs.clone(),
                params: archs.iter().map(|a| random_model(a, &mut rng, 1.0).params().clone()).collect(),
                sample_count: 1 + rng.below(1000) as usize,
                val_metrics: empty.clone(),
                member_val_metrics: Vec::new(),
            })
            .collect();
        let g = aggregate_fedavg(&updates, GlobalStrategy::FedavgEnsemble, VoteMethod::Vote).unwrap();
        for (m, member) in g.ensemble.members().iter().enumerate() {
            for (j, &v) in member.params().as_slice().iter().enumerate() {
                let column = updates.iter().map(|u| u.params[m].as_slice()[j]);
                let lo = column.clone().fold(f64::INFINITY, f64::min);
                let hi = column.fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= v && v <= hi);
            }
        }

        RngStream::new(shuffle_seed, 0).shuffle(&mut updates);
        let again = aggregate_fedavg(&updates, GlobalStrategy::FedavgEnsemble, VoteMethod::Vote).unwrap();
        prop_assert_eq!(again, g);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn small_full_batch_step_does_not_increase_loss(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0);
        for arch in archs() {
            let model = init_model(&arch, &mut rng).unwrap();
            let m = 24;
            let x = Tensor::new(vec![m, 36], (0..m * 36).map(|_| rng.standard_normal()).collect()).unwrap();
            let labels: Vec<usize> = (0..m).map(|_| rng.below(4) as usize).collect();
            let before = model.loss(&x, &labels).unwrap();
            let g = model.gradient(&x, &labels).unwrap();
            let stepped: Vec<f64> = model
                .params()
                .as_slice()
                .iter()
                .zip(g.as_slice())
                .map(|(t, d)| t - 1e-3 * d)
                .collect();
            let next = set_params(&model, ParameterVector::new(arch.kind, stepped).unwrap()).unwrap();
            let after = next.loss(&x, &labels).unwrap();
            prop_assert!(after <= before, "{}: {before} -> {after}", arch.kind);
        }
    }
}
