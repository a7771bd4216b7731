use gpdthresh_core::distributions::splice_sample;
use gpdthresh_core::sampler::summarize_chains;
use gpdthresh_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn synthetic(n: usize, seed: u64) -> OrderedSample {
    let bulk = BulkMixture::new(
        vec![2.0 / 3.0, 1.0 / 3.0],
        vec![
            GammaComponent::from_shape_rate(4.0, 2.0).unwrap(),
            GammaComponent::from_shape_rate(8.0, 1.0).unwrap(),
        ],
    )
    .unwrap();
    let model = SpliceModel::new(bulk, GpdParams::new(0.4, 2.0, 9.0).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    OrderedSample::new(splice_sample(n, &model, &mut rng)).unwrap()
}

fn trace(chain: &PosteriorSamples, name: &str) -> Vec<f64> {
    chain.traces().into_iter().find(|(n, _)| n == name).unwrap().1
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, v.sqrt())
}

fn chain(sample: &OrderedSample, spec: &ThresholdPriorSpec, iterations: usize, seed: u64) -> PosteriorSamples {
    let cfg = ChainConfig { iterations, burn_in: iterations / 2, seed, ..ChainConfig::default() };
    run_chain(sample, spec, &HyperPriors::default(), &cfg).unwrap()
}

#[test]
fn recovers_tail_within_three_sd() {
    let s = synthetic(1000, 3);
    for spec in [ThresholdPriorSpec::uniform(), ThresholdPriorSpec::kl()] {
        let c = chain(&s, &spec, 8000, 11);
        for (name, truth) in [("xi", 0.4), ("sigma", 2.0), ("theta", 9.0)] {
            let (m, sd) = mean_sd(&trace(&c, name));
            assert!((m - truth).abs() < 3.0 * sd, "{:?} {name}: {m} ± {sd}", spec.kind);
        }
    }
}

#[test]
fn more_data_narrows_intervals() {
    let spec = ThresholdPriorSpec::uniform();
    let small = summarize_chains(&[chain(&synthetic(1000, 21), &spec, 6000, 1)]).unwrap();
    let large = summarize_chains(&[chain(&synthetic(5000, 21), &spec, 6000, 1)]).unwrap();
    for name in ["xi", "sigma", "theta"] {
        let w = |s: &SummaryStats| {
            let p = s.get(name).unwrap();
            p.upper - p.lower
        };
        assert!(w(&large) < w(&small), "{name}: {} vs {}", w(&large), w(&small));
    }
}

#[test]
fn independent_long_chains_agree() {
    let s = synthetic(1000, 5);
    let spec = ThresholdPriorSpec::uniform();
    let a = chain(&s, &spec, 20_000, 1);
    let b = chain(&s, &spec, 20_000, 2);
    for name in ["xi", "sigma"] {
        let (ta, tb) = (trace(&a, name), trace(&b, name));
        let r = gelman_rubin(&[&ta, &tb]).unwrap();
        assert!((0.99..=1.05).contains(&r), "{name}: R̂ = {r}");
    }
}

#[test]
fn reported_log_posterior_matches_full_evaluation() {
    let s = synthetic(400, 9);
    let spec = ThresholdPriorSpec::kl();
    let hyp = HyperPriors::default();
    let c = chain(&s, &spec, 1000, 4);
    for d in c.draws.iter().step_by(50) {
        let full = log_posterior(&s, &d.state, &spec, &hyp);
        assert!((full - d.log_posterior).abs() <= 1e-8 * full.abs());
    }
}
