use pulm_sim::consensus::push_sum_run;
use pulm_sim::harness::{self, ExperimentConfig};
use pulm_sim::topology::{DirectedGraph, Network, PacketLossModel, TopologyModel};
use pulm_sim::Matrix;

fn cfg(text: &str) -> ExperimentConfig {
    text.parse().unwrap()
}

#[test]
fn sweep_output_does_not_depend_on_thread_count() {
    let c = cfg(
        "task = optimize\ntopology.kind = latent_dropout\ntopology.n = 6\nobjective.samples = 120\n\
                 objective.features = 4\noptimizer.outer = 15\noptimizer.r = 3\noutput = opt.csv",
    );
    let seeds = [3, 1, 4, 1, 5];
    let (one, many) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let serial = harness::sweep(&c, &seeds, one.path(), 1);
    let parallel = harness::sweep(&c, &seeds, many.path(), 4);
    assert_eq!(serial.iter().map(|r| r.0).collect::<Vec<_>>(), seeds);
    for ((s, a), (_, b)) in serial.iter().zip(&parallel) {
        let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
        assert_eq!(a.0.csv, b.0.csv, "seed {s}");
        assert_eq!(a.1.file_name(), Some(std::ffi::OsStr::new(&format!("opt-seed{s}.csv"))));
    }
}

#[test]
fn different_seeds_give_different_traces() {
    let a = harness::execute(&cfg("task = consensus\nrounds = 20\ntopology.n = 8\nseed = 1")).unwrap();
    let b = harness::execute(&cfg("task = consensus\nrounds = 20\ntopology.n = 8\nseed = 2")).unwrap();
    assert_ne!(a.csv, b.csv);
}

#[test]
fn push_sum_mass_leaks_under_loss_on_the_complete_graph() {
    let n = 10;
    let x = Matrix::from_fn(n, 1, |i, _| i as f64);
    for seed in 0..5 {
        let net = Network::new(TopologyModel::fixed(DirectedGraph::complete(n)))
            .with_loss(PacketLossModel::new(0.05, seed).unwrap());
        let run = push_sum_run(&x, &net, 50).unwrap();
        let mass = run.trace.last().unwrap().weight_sum.unwrap();
        assert!(n as f64 - mass > 1e-6, "seed {seed}: weight sum {mass}");
    }
}
