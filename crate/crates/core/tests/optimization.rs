use pulm_sim::objectives::QuadraticObjective;
use pulm_sim::optimization::{pulm_dgd_run, push_diging_run, Anchor, OptimizerConfig, PushDigingConfig, RkSchedule};
use pulm_sim::topology::{DirectedGraph, Network, TopologyModel};

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn static_ring_reaches_the_quadratic_minimizer() {
    let q = QuadraticObjective::random(6, 5, 11).unwrap();
    let net = Network::new(TopologyModel::fixed(DirectedGraph::ring(6)));
    let x0 = vec![0.0; 5];
    let cfg = OptimizerConfig::new(0.5, 300, RkSchedule::Constant(20));
    let traj = pulm_dgd_run(&q, &net, &cfg, &x0).unwrap();
    assert!(traj.status.is_ok());
    let gap = max_gap(traj.means.last().unwrap(), &q.minimizer());
    assert!(gap <= 1e-6, "PULM-DGD ends {gap:e} from the minimizer");

    let pd = PushDigingConfig {
        alpha: 0.1,
        rounds: 1000,
        record_every: 100,
    };
    let traj = push_diging_run(&q, &net, &pd, &x0).unwrap();
    let gap = max_gap(traj.means.last().unwrap(), &q.minimizer());
    assert!(gap <= 1e-6, "push-DIGing ends {gap:e} from the minimizer");
}

#[test]
fn anchors_agree_on_the_complete_graph_but_not_on_sparse_ones() {
    let q = QuadraticObjective::random(6, 3, 5).unwrap();
    let x0 = vec![1.0, -1.0, 0.5];
    let run = |graph: DirectedGraph, anchor| {
        let cfg = OptimizerConfig::new(0.2, 5, RkSchedule::Constant(2)).with_anchor(anchor);
        pulm_dgd_run(&q, &Network::new(TopologyModel::fixed(graph)), &cfg, &x0)
            .unwrap()
            .final_params
    };
    let full: Vec<_> = [Anchor::Gradient, Anchor::ScaledGradient, Anchor::SeededState]
        .into_iter()
        .map(|a| run(DirectedGraph::complete(6), a))
        .collect();
    assert!(full[0].frobenius_distance(&full[1]).unwrap() < 1e-12);
    assert!(full[1].frobenius_distance(&full[2]).unwrap() < 1e-12);
    let sparse_a = run(DirectedGraph::ring(6), Anchor::Gradient);
    let sparse_b = run(DirectedGraph::ring(6), Anchor::ScaledGradient);
    assert!(sparse_a.frobenius_distance(&sparse_b).unwrap() > 1e-6);
}
