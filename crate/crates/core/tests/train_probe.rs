//! Training calibration probes; ignored by default.

use nafd_core::madrl::baselines::{evaluate_policy, Policy, UplinkScheme};
use nafd_core::madrl::{train, Algorithm, TrainConfig};
use nafd_core::scenario::SystemConfig;
use rayon::prelude::*;

#[test]
#[ignore]
fn probe_three_seed_matrix() {
    let sys = SystemConfig::small();
    let tcfg = TrainConfig {
        episodes: 300,
        batch_size: 64,
        ..TrainConfig::default()
    };
    let jobs: Vec<(Algorithm, u64)> = [Algorithm::Matd3, Algorithm::Maddpg]
        .into_iter()
        .flat_map(|a| [1u64, 2, 3].into_iter().map(move |s| (a, s)))
        .collect();
    let t0 = std::time::Instant::now();
    let results: Vec<(Algorithm, u64, f64)> = jobs
        .par_iter()
        .map(|&(algo, seed)| {
            let out = train(&sys, &tcfg, algo, seed).unwrap();
            (algo, seed, out.log.tail_mean(100))
        })
        .collect();
    println!("matrix wall time {:?}", t0.elapsed());
    let mut sums = std::collections::HashMap::new();
    for (algo, seed, tail) in &results {
        println!("{algo:?} seed {seed}: tail-100 {tail:.4}");
        *sums.entry(format!("{algo:?}")).or_insert(0.0) += tail / 3.0;
    }
    println!("aggregate: {sums:?}");
    for seed in [1u64, 2, 3] {
        for scheme in [UplinkScheme::Random, UplinkScheme::Equal, UplinkScheme::Max] {
            let res = evaluate_policy(&sys, &tcfg, seed, 200, 100, &Policy::Baseline(scheme)).unwrap();
            println!("seed {seed} baseline {scheme:?} on episodes 200..300: {:.4}", res.mean_reward());
        }
    }
}
