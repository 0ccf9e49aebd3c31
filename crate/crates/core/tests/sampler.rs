mod common;

use std::collections::HashMap;

use common::{exact_instance, exact_posterior, set_partitions, sizes_of, tv_distance, Hyper, Prior, SingleSiteOracle};
use potts_sir::gibbs::GibbsModel;
use potts_sir::gsw::{EtaMode, GswConfig, GswSettings};
use potts_sir::lattice::Lattice;
use potts_sir::mcmc::{log_unnormalized_posterior, InitPolicy, RunConfig, Sampler};
use potts_sir::regression::{ClusteredDesign, CoefficientState, Dataset, Workspace};
use potts_sir::synth::univariate_beta_hats;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

fn config(model: GibbsModel<f64>, kappa: f64, tau: f64, eta: EtaMode<f64>, seed: u64) -> RunConfig<f64> {
    RunConfig {
        iterations: 10,
        burn_in: 0,
        thin: 1,
        seed,
        model,
        gsw: GswSettings { kappa, tau, h: 1 },
        init: InitPolicy::OneCluster,
        eta,
        ..Default::default()
    }
}

fn frequencies(data: &Dataset<f64>, cfg: &RunConfig<f64>, sweeps: usize) -> HashMap<Vec<usize>, usize> {
    let gsw = GswConfig::new(cfg.gsw, univariate_beta_hats(data).unwrap()).unwrap();
    let mut sampler = Sampler::new(data, cfg, gsw, 0).unwrap();
    let mut counts = HashMap::new();
    for _ in 0..1000 {
        sampler.sweep().unwrap();
    }
    for _ in 0..sweeps {
        sampler.sweep().unwrap();
        *counts.entry(sampler.labels().to_vec()).or_insert(0) += 1;
    }
    counts
}

#[test]
fn enumerated_posterior_is_spread() {
    let data = exact_instance(0.4);
    let post = exact_posterior(&data, Prior::Dp(1.0), 0.4, &Hyper::default(), 1.0);
    assert_eq!(post.len(), 15);
    let max = post.iter().map(|(_, p)| *p).fold(0.0, f64::max);
    assert!(max < 0.6, "posterior too concentrated: {max}");
    assert!((post.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn gsw_matches_enumeration_fixed_eta() {
    for (model, prior, upsilon, kappa, tau) in [
        (GibbsModel::dp(1.0).unwrap(), Prior::Dp(1.0), 0.4, 0.5, 0.0),
        (GibbsModel::py(0.5, 0.5).unwrap(), Prior::Py(0.5, 0.5), 0.8, 1.0, 0.0),
        (GibbsModel::mfm(1.0, 1.0).unwrap(), Prior::Mfm(1.0, 1.0), 0.6, 0.7, 1.0),
    ] {
        let data = exact_instance(upsilon);
        let exact = exact_posterior(&data, prior, upsilon, &Hyper::default(), 1.0);
        let cfg = config(model, kappa, tau, EtaMode::Fixed { value: 1.0 }, 5);
        let counts = frequencies(&data, &cfg, 300_000);
        let tv = tv_distance(&exact, &counts);
        assert!(tv < 0.02, "{model:?} upsilon={upsilon} kappa={kappa}: TV {tv}");
    }
}

#[test]
fn several_auxiliary_clusters_leave_the_target_unchanged() {
    let data = exact_instance(0.5);
    let exact = exact_posterior(&data, Prior::Dp(0.7), 0.5, &Hyper::default(), 1.0);
    let mut cfg = config(GibbsModel::dp(0.7).unwrap(), 0.4, 0.0, EtaMode::Fixed { value: 1.0 }, 8);
    cfg.gsw.h = 3;
    let tv = tv_distance(&exact, &frequencies(&data, &cfg, 200_000));
    assert!(tv < 0.02, "TV {tv}");
}

#[test]
fn kappa_zero_matches_single_site_oracle() {
    let upsilon = 0.5;
    let data = exact_instance(upsilon);
    let cfg = config(
        GibbsModel::dp(1.0).unwrap(),
        0.0,
        1.0,
        EtaMode::Fixed { value: 1.0 },
        13,
    );
    let gsw_counts = frequencies(&data, &cfg, 200_000);

    let mut oracle = SingleSiteOracle::new(&data, Prior::Dp(1.0), upsilon, Hyper::default(), 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut labels = vec![0; 4];
    let mut oracle_counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for _ in 0..200_000 {
        oracle.sweep(&mut labels, &mut rng);
        *oracle_counts.entry(labels.clone()).or_insert(0) += 1;
    }
    let total = 200_000.0;
    let oracle_table: Vec<(Vec<usize>, f64)> = set_partitions(4)
        .into_iter()
        .map(|z| {
            let c = oracle_counts.get(&z).copied().unwrap_or(0) as f64;
            (z, c / total)
        })
        .collect();
    let tv = tv_distance(&oracle_table, &gsw_counts);
    assert!(tv < 0.02, "TV {tv}");
    // both agree with the enumeration as well
    let exact = exact_posterior(&data, Prior::Dp(1.0), upsilon, &Hyper::default(), 1.0);
    assert!(tv_distance(&exact, &oracle_counts) < 0.02);
}

#[test]
fn sampled_eta_matches_integrated_posterior() {
    // Exact target with eta* integrated out by Monte Carlo per partition.
    let upsilon = 0.3;
    let data = exact_instance(upsilon);
    let model = GibbsModel::dp(1.0).unwrap();
    let cfg = config(model, 0.6, 0.0, EtaMode::Sampled, 21);
    let hyper = cfg.hyper.resolved(1).unwrap();
    let precision = Gamma::new(hyper.a_eta, 1.0 / hyper.b_eta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut ws = Workspace::default();
    let logs: Vec<(Vec<usize>, f64)> = set_partitions(4)
        .into_iter()
        .map(|z| {
            let stats = ClusteredDesign::build(&data, &z).unwrap();
            let m = stats.num_clusters();
            let draws = 200_000;
            let vals: Vec<f64> = (0..draws)
                .map(|_| {
                    let eta: Vec<f64> = (0..m).map(|_| 1.0 / precision.sample(&mut rng)).collect();
                    stats.log_marginal(&eta, &hyper, &mut ws).unwrap()
                })
                .collect();
            let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mean = vals.iter().map(|v| (v - max).exp()).sum::<f64>() / draws as f64;
            let prior = model.log_prior_partition(data.lattice(), &z).unwrap();
            (z, prior + max + mean.ln())
        })
        .collect();
    let max = logs.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|(_, l)| (l - max).exp()).sum();
    let exact: Vec<(Vec<usize>, f64)> = logs.into_iter().map(|(z, l)| (z, (l - max).exp() / total)).collect();
    let tv = tv_distance(&exact, &frequencies(&data, &cfg, 400_000));
    assert!(tv < 0.025, "TV {tv}");
}

#[test]
fn py_without_discount_reproduces_dp_trace() {
    let data = common::toy_dataset(3, 3, 25, 0.5, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, -1.0], 4);
    let gsw = GswConfig::new(GswSettings::default(), univariate_beta_hats(&data).unwrap()).unwrap();
    let dp = config(GibbsModel::dp(1.3).unwrap(), 0.5, 1.0, EtaMode::Sampled, 3);
    let py = RunConfig {
        model: GibbsModel::py(1.3, 0.0).unwrap(),
        ..dp.clone()
    };
    let mut a = Sampler::new(&data, &dp, gsw.clone(), 0).unwrap();
    let mut b = Sampler::new(&data, &py, gsw, 0).unwrap();
    for _ in 0..300 {
        a.sweep().unwrap();
        b.sweep().unwrap();
        assert_eq!(a.labels(), b.labels());
        assert_eq!(a.coefficients(), b.coefficients());
    }
}

#[test]
fn chains_are_reproducible_and_distinct() {
    let data = common::toy_dataset(3, 3, 25, 0.5, &[1.0; 9], 5);
    let gsw = GswConfig::new(GswSettings::default(), univariate_beta_hats(&data).unwrap()).unwrap();
    let cfg = config(GibbsModel::mfm(1.0, 1.0).unwrap(), 0.5, 1.0, EtaMode::Sampled, 9);
    let trace = |chain: usize| {
        let mut s = Sampler::new(&data, &cfg, gsw.clone(), chain).unwrap();
        (0..50)
            .map(|_| {
                s.sweep().unwrap();
                (s.labels().to_vec(), s.coefficients().sigma2)
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(trace(0), trace(0));
    assert_ne!(trace(0), trace(1));
}

#[test]
fn state_invariants_hold_every_sweep() {
    let (_, data, _) = potts_sir::synth::make_scenario::<f64>(&potts_sir::synth::ScenarioConfig::new(
        potts_sir::synth::ScenarioName::Scenario2,
        2,
    ))
    .unwrap();
    let data = data.with_lattice(Lattice::new(10, 10, 0.7).unwrap()).unwrap();
    let gsw = GswConfig::new(GswSettings::default(), univariate_beta_hats(&data).unwrap()).unwrap();
    for init in [
        InitPolicy::Singletons,
        InitPolicy::OneCluster,
        InitPolicy::RandomK { k: 12 },
    ] {
        let cfg = RunConfig {
            init,
            model: GibbsModel::py(1.0, 0.25).unwrap(),
            ..config(GibbsModel::dp(1.0).unwrap(), 0.5, 1.0, EtaMode::Sampled, 4)
        };
        let mut s = Sampler::new(&data, &cfg, gsw.clone(), 0).unwrap();
        for _ in 0..60 {
            s.sweep().unwrap();
            let labels = s.labels();
            let m = s.num_clusters();
            assert!(m <= 100);
            assert_eq!(potts_sir::lattice::canonicalize_labels(labels), labels);
            assert_eq!(labels.iter().max().unwrap() + 1, m);
            let c = s.coefficients();
            assert_eq!(c.beta_star.len(), m);
            assert_eq!(c.eta_star.len(), m);
            assert!(c.sigma2 > 0.0 && c.eta_star.iter().all(|&e| e > 0.0));
            assert!(s.log_posterior().unwrap().is_finite());
            assert!(s.last_nested_count() >= m);
        }
    }
}

#[test]
fn log_posterior_matches_naive_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let upsilon = 0.9;
    let data = common::toy_dataset(3, 3, 7, upsilon, &[0.5; 9], 8);
    let model = GibbsModel::py(1.0, 0.3).unwrap();
    let hyper = common::Hyper::default().to_lib(1.0);
    for _ in 0..20 {
        let labels = potts_sir::lattice::canonicalize_labels(&common::random_labels(&mut rng, 9, 3));
        let sizes = sizes_of(&labels);
        let m = sizes.len();
        let coeffs = CoefficientState {
            mu: vec![rng.random_range(-1.0..1.0)],
            beta_star: (0..m).map(|_| rng.random_range(-2.0..2.0)).collect(),
            sigma2: rng.random_range(0.3..2.0),
            eta_star: (0..m).map(|_| rng.random_range(0.3..2.0)).collect(),
        };
        let lib = log_unnormalized_posterior(&data, &labels, &coeffs, &model, &hyper).unwrap();

        let ln_norm =
            |x: f64, mean: f64, var: f64| -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var);
        let ln_ig = |x: f64, a: f64, b: f64| a * b.ln() - common::lgamma(a) - (a + 1.0) * x.ln() - b / x;
        let mut naive = 0.0;
        for i in 0..7 {
            let mut f = coeffs.mu[0];
            for j in 0..9 {
                f += data.x(i, j) * coeffs.beta_star[labels[j]] / (sizes[labels[j]] as f64).sqrt();
            }
            naive += ln_norm(data.y()[i], f, coeffs.sigma2);
        }
        naive += ln_norm(coeffs.mu[0], 0.0, coeffs.sigma2 * 100.0);
        for k in 0..m {
            naive += ln_norm(coeffs.beta_star[k], 0.0, coeffs.sigma2 * coeffs.eta_star[k]);
            naive += ln_ig(coeffs.eta_star[k], 1.0, 1.0);
        }
        naive += ln_ig(coeffs.sigma2, 1.0, 1.0);
        naive += common::eppf(Prior::Py(1.0, 0.3), &labels).ln() + common::potts(3, 3, upsilon, &labels);
        assert!((lib - naive).abs() < 1e-10, "{lib} vs {naive}");
    }
}
