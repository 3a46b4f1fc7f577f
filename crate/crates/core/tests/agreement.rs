use nalgebra::DVector;
use netnash::games::{sample_instance, CournotGenerator, GameInstance};
use netnash::gnep::{Coupling, CouplingSpec};
use netnash::harness::{self, RunConfig};
use netnash::linalg::inf_norm;
use netnash::oracle;
use netnash::seeker::{self, run_exact, GammaSchedule, InnerSolver, Seeker, StepConfig};
use netnash::{BoxSet, NetworkTopology, NoiseModel, StructuralMaps};

fn seek(inst: &GameInstance) -> DVector<f64> {
    let topo = inst.topology();
    let maps = StructuralMaps::new(topo);
    let rho = seeker::choose_rho_monotone(inst, &maps, 1.05).unwrap();
    let step = StepConfig::gershgorin(topo, rho, 0.9, 1.0, GammaSchedule::Constant(1.0)).unwrap();
    let sk = Seeker::new(inst, &maps, step, InnerSolver::ClosedForm).unwrap();
    let run = run_exact(&sk, &sk.initial_point(), 50_000, 1e-10, None).unwrap();
    assert!(run.converged);
    maps.layout.own_decisions(topo, &run.y)
}

fn path_lq(a: [f64; 3]) -> GameInstance {
    let t = NetworkTopology::new(3, vec![1; 3], &[(0, 1), (1, 0), (1, 2), (2, 1)]).unwrap();
    let w = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]];
    GameInstance::scalar_lq(t, vec![0.2; 3], a.to_vec(), w, vec![BoxSet::uniform(1, 0.0, 10.0); 3], NoiseModel::none())
        .unwrap()
}

#[test]
fn seeker_limit_matches_vi_oracle_on_lq() {
    let inst = path_lq([1.0, 12.0, -2.0]);
    let sol = oracle::solve_vi_centralized(&inst, 1e-12).unwrap();
    assert!(sol.certified);
    assert!(inf_norm(&(seek(&inst) - sol.x_vec())) < 1e-6);
}

#[test]
fn seeker_limit_matches_vi_oracle_on_small_cournot() {
    let gen = CournotGenerator {
        players: 4,
        chords: 2,
        ..CournotGenerator::default()
    };
    for seed in [21, 22, 23] {
        let inst = sample_instance(seed, &gen).unwrap();
        let sol = oracle::solve_vi_centralized(&inst, 1e-11).unwrap();
        assert!(inf_norm(&(seek(&inst) - sol.x_vec())) < 1e-6, "seed {seed}");
    }
}

#[test]
fn tighter_budget_lowers_total_use() {
    let inst = path_lq([3.0, 4.0, 5.0]);
    let mut totals = Vec::new();
    for c in [9.0, 7.5, 6.0, 4.5, 3.0] {
        let spec = CouplingSpec {
            a: vec![vec![vec![1.0]]; 3],
            c: vec![c],
            c_split: None,
            local: vec![],
        };
        let cp = Coupling::from_spec(&spec, inst.topology()).unwrap();
        let sol = oracle::gnep_kkt_oracle(&inst, &cp, 1e-8).unwrap();
        assert!(sol.certified, "c = {c}");
        totals.push(sol.x.iter().sum::<f64>());
    }
    assert!(totals.windows(2).all(|w| w[1] < w[0]), "{totals:?}");
}

#[test]
fn gnep_mode_matches_its_oracle() {
    let text = r#"{
        "mode": "gnep",
        "instance": {"inline": {
            "topology": {"players": 3, "dims": [1, 1, 1], "edges": [[0, 1], [1, 0], [1, 2], [2, 1]]},
            "game": {"kind": "scalar_lq", "k": [0.2, 0.2, 0.2], "a": [3, 4, 5],
                     "weights": [[0, 1, 0], [1, 0, 1], [0, 1, 0]]},
            "boxes": [{"lower": [0], "upper": [10]}, {"lower": [0], "upper": [10]}, {"lower": [0], "upper": [10]}]
        }},
        "step": {"rho": 1.0, "gamma": {"constant": 1.0}},
        "gnep": {"coupling": {"a": [[[1]], [[1]], [[1]]], "c": [6]}},
        "iters": 50000,
        "tol": 1e-11
    }"#;
    let cfg = RunConfig::from_json(text, "inline").unwrap();
    let (_, out) = harness::run_config(&cfg, None).unwrap();
    assert!(out.summary.converged);
    let kkt = out.summary.kkt.unwrap();
    assert!(kkt.lambda_gap < 1e-6 && kkt.complementarity < 1e-6, "{kkt:?}");
    assert!(out.rows.last().unwrap().dist_sne.unwrap() < 1e-4);
}
