//! Sweeps (eta, epsilon) grids for both aggregation schemes on the
//! synthetic-blob task and prints one summary row per run.
//!
//!     cargo run --release --example sweep -- [epochs]

use fedspace_cli::threads::Threads;
use fedspace_core::data::{make_public, partition_ring, synth_blobs};
use fedspace_core::experiment::{self, Algorithm, ModelSpec, RunConfig, RunData};
use fedspace_core::graph::TopologySpec;
use fedspace_core::meta::Schedule;
use fedspace_core::nn::{Head, TrainLoss};

fn main() {
    let epochs: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(150);
    let n = 10;
    let source = synth_blobs(10, 400, 0.3, 7).unwrap();
    let locals = partition_ring(&source, n, 2, 200, 11).unwrap();
    let public = make_public(&source, 500, 13).unwrap();
    let test = synth_blobs(10, 50, 0.3, 7 ^ 0x7e57).unwrap();
    let data = RunData {
        locals,
        public: Some(public),
        test,
    };
    let exec = Threads::new(8);

    let etas = [0.0003, 0.001, 0.003];
    let cmfd_eps = [0.03, 0.1, 0.3];
    let avg_eps = [0.01, 0.05, 0.25];

    println!("alg      eta      eps      acc     max-min  dev       distill");
    for (alg, eps_grid) in [
        (Algorithm::Cmfd, &cmfd_eps),
        (Algorithm::ParamAvg, &avg_eps),
    ] {
        for &eta in &etas {
            for &eps in eps_grid {
                let cfg = RunConfig {
                    algorithm: alg,
                    topology: TopologySpec::Ring { n, k: 1 },
                    dynamic_topology: false,
                    topology_seed: 0,
                    eta: Schedule::Constant(eta),
                    epsilon: eps,
                    epochs,
                    minibatch: 100,
                    distill_minibatch: 100,
                    metric_cadence: 1,
                    master_seed: 21,
                    models: vec![
                        ModelSpec {
                            layers: vec![2, 64, 10],
                            head: Head::Softmax,
                            dropout: Some(0.1),
                        };
                        n
                    ],
                    train_loss: TrainLoss::CrossEntropy,
                    collect_digests: false,
                };
                match experiment::run(&cfg, &data, &exec) {
                    Ok(out) => {
                        let s = &out.summary;
                        println!(
                            "{:8} {:<8} {:<8} {:.4}  {:.4}   {:.6}  {}",
                            format!("{alg:?}"),
                            eta,
                            eps,
                            s.acc,
                            s.max_min,
                            s.dev,
                            s.mean_distill_loss_final
                                .map_or(String::new(), |c| format!("{c:.4}")),
                        );
                    }
                    Err(e) => println!("{alg:?} eta={eta} eps={eps}: failed: {e}"),
                }
            }
        }
    }
}
