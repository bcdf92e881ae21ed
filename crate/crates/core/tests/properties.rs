use dvip::autodiff::Tape;
use dvip::checkpoint::Checkpoint;
use dvip::config::TrainConfig;
use dvip::data::{make_split, Dataset, SplitSpec, Standardizer, Task};
use dvip::layer::{conditional, empirical_moments, kl_to_prior, moments_of};
use dvip::metrics::crps_mixture;
use dvip::model::PredictiveMixture;
use dvip::train::TrainState;
use dvip::Tensor;
use proptest::prelude::*;

fn tensor(shape: Vec<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(lo..hi, n).prop_map(move |d| Tensor::from_shape(shape.clone(), d))
}

fn dims(max_s: usize, max_b: usize) -> impl Strategy<Value = (usize, usize)> {
    (2..=max_s, 1..=max_b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoints_are_linear(x in tensor(vec![3, 4], -2.0, 2.0), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let grad = |which: u8| {
            let tape = Tape::new();
            let v = tape.leaf(x.clone());
            let f = v.tanh().square().sum();
            let g = v.t().matmul(v.exp()).sum();
            let out = match which {
                0 => f,
                1 => g,
                _ => f.scale(a) + g.scale(b),
            };
            tape.backward(out).unwrap().get(v)
        };
        let (gf, gg, gc) = (grad(0), grad(1), grad(2));
        for i in 0..x.len() {
            let expected = a * gf.data()[i] + b * gg.data()[i];
            prop_assert!((gc.data()[i] - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn feature_gram_is_empirical_covariance(
        (s, b) in dims(12, 8),
        seed in any::<u64>(),
    ) {
        let mut r = dvip::rng::stream(seed, dvip::rng::Domain::Test, &[0]);
        let samples = Tensor::from_shape([s, b], dvip::rng::normals(&mut r, s * b));
        let (mean, phi) = moments_of(&samples);
        for i in 0..b {
            let direct_mean = (0..s).map(|k| samples.at2(k, i)).sum::<f64>() / s as f64;
            prop_assert!((mean.data()[i] - direct_mean).abs() < 1e-12);
            for j in 0..b {
                let mj = mean.data()[j];
                let direct = (0..s)
                    .map(|k| (samples.at2(k, i) - direct_mean) * (samples.at2(k, j) - mj))
                    .sum::<f64>() / s as f64;
                let gram = (0..s).map(|k| phi.at2(i, k) * phi.at2(j, k)).sum::<f64>();
                prop_assert!((gram - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kl_is_nonnegative(
        mean in tensor(vec![4, 2], -2.0, 2.0),
        chol in tensor(vec![2, 4, 4], -1.5, 1.5),
    ) {
        let tape = Tape::new();
        let kl = kl_to_prior(tape.constant(mean), tape.constant(chol)).item();
        prop_assert!(kl >= -1e-12, "{}", kl);
    }

    #[test]
    fn unit_variance_is_at_least_the_noise(
        samples in tensor(vec![5, 6], -3.0, 3.0),
        mean in tensor(vec![5, 2], -1.0, 1.0),
        chol in tensor(vec![2, 5, 5], -2.0, 1.0),
        noise in tensor(vec![1, 2], 1e-4, 1.0),
    ) {
        let tape = Tape::new();
        let m = empirical_moments(tape.constant(samples));
        let (_, vars) = conditional(&m, tape.constant(mean), tape.constant(chol), Some(tape.constant(noise.clone())), None);
        let vars = vars.value();
        for n in 0..6 {
            for h in 0..2 {
                prop_assert!(vars.at2(n, h) >= noise.data()[h]);
            }
        }
    }

    #[test]
    fn crps_is_nonnegative(
        comps in prop::collection::vec((-5.0..5.0f64, 0.0..3.0f64), 1..8),
        noise in 0.0..1.0f64,
        y in -8.0..8.0f64,
    ) {
        let (m, v): (Vec<f64>, Vec<f64>) = comps.into_iter().unzip();
        prop_assert!(crps_mixture(&m, &v, noise, y) >= -1e-12);
    }

    #[test]
    fn standardizer_round_trip(
        rows in 2..20usize,
        cols in 1..5usize,
        seed in any::<u64>(),
        shift in -1e3..1e3f64,
        scale in 1e-2..1e2f64,
    ) {
        let mut r = dvip::rng::stream(seed, dvip::rng::Domain::Test, &[1]);
        let x: Vec<f64> = dvip::rng::normals(&mut r, rows * cols).iter().map(|v| shift + scale * v).collect();
        let y: Vec<f64> = dvip::rng::normals(&mut r, rows).iter().map(|v| shift + scale * v).collect();
        let columns = (0..=cols).map(|c| format!("c{c}")).collect();
        let data = Dataset::new(Tensor::from_shape([rows, cols], x), y, Task::Regression, columns).unwrap();
        let st = Standardizer::fit(&data);
        let back = st.inverse(&st.transform(&data));
        let tol = 1e-12 * (shift.abs() + scale);
        prop_assert!(back.x.max_abs_diff(&data.x) <= tol);
        for (a, b) in back.y.iter().zip(&data.y) {
            prop_assert!((a - b).abs() <= tol);
        }
    }

    #[test]
    fn splits_partition_the_rows(n in 10..500usize, index in 0..50u64, seed in any::<u64>(), frac in 0.05..0.5f64) {
        let spec = SplitSpec { index, test_fraction: frac, seed };
        let (train, test) = make_split(n, spec).unwrap();
        prop_assert!(!train.is_empty() && !test.is_empty());
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(make_split(n, spec).unwrap(), (train, test));
    }

    #[test]
    fn single_component_density_is_gaussian(m in -3.0..3.0f64, v in 1e-3..2.0f64, noise in 1e-3..1.0f64, y in -5.0..5.0f64) {
        let mix = PredictiveMixture { means: Tensor::from_shape([1, 1], vec![m]), vars: Tensor::from_shape([1, 1], vec![v]) };
        let s2 = v + noise;
        let direct = -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (y - m).powi(2) / (2.0 * s2);
        prop_assert!((mix.log_density_at(0, y, noise) - direct).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoint_round_trips_any_parameters(seed in any::<u64>(), depth in 1..4usize, dim in 1..4usize) {
        let config = TrainConfig { depth, samples: 4, seed, ..TrainConfig::default() };
        let mut model = config.build_model(dim, 50).unwrap();
        let mut r = dvip::rng::stream(seed, dvip::rng::Domain::Test, &[2]);
        let ids: Vec<_> = model.store.ids().collect();
        for id in ids {
            let n = model.store.get(id).len();
            model.store.get_mut(id).data_mut().copy_from_slice(&dvip::rng::normals(&mut r, n));
        }
        let state = TrainState::new(&model, 1e-3);
        let ck = Checkpoint { model, state, seed, standardizer: None };
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back.model.store, &ck.model.store);
        prop_assert_eq!(back.to_bytes(), bytes);
    }
}
