use idode::dataset::{build_supervised, load_trajectories, sample_uniform, save_trajectories, ParamGrid, TrajectorySet};
use idode::embed::EmbeddingSpec;
use idode::eval::{run_experiment, Backend, ExperimentConfig, Representation};
use idode::infer::{infer, ExactFieldModel, InferConfig, SearchSpace};
use idode::integrate::{batch_integrate, integrate, Method};
use idode::net::{init_model, load_model, save_model, Activation, OptimizerConfig};
use idode::oracle::affine_least_squares;
use idode::systems::{evaluate_affine, lotka_volterra, system_by_name, velocity_of, DynamicalSystem, SystemOptions};
use idode::train::{train, TrainConfig};
use idode::Error;
use tempfile::tempdir;

fn small_lvpp(t_end: f64) -> TrajectorySet {
    let sys = lotka_volterra();
    let grid = ParamGrid::lattice(sys.param_box(), 0.5).unwrap();
    let out = batch_integrate(&sys, &grid, &sys.default_x0(), t_end, 0.01, &Method::default(), 1).unwrap();
    assert!(out.failures.is_empty());
    out.set
}

#[test]
fn catalog_systems_agree_with_their_affine_parts() {
    for (name, dim) in [("lorenz", None), ("lvpp", None), ("lorenz96", Some(6)), ("double-pendulum", None)] {
        let sys = system_by_name(name, &SystemOptions { dim }).unwrap();
        let x = sys.default_x0();
        let alpha = sys.param_box().midpoint();
        let direct = velocity_of(sys.as_ref(), &x, &alpha);
        match evaluate_affine(sys.as_ref(), &x) {
            Ok((l, b)) => {
                let f = l.dot(&ndarray::Array1::from(alpha.clone())) + b;
                for (a, d) in f.iter().zip(&direct) {
                    assert!((a - d).abs() <= 1e-10 * (1.0 + d.abs()), "{name}");
                }
            }
            Err(Error::NotAffine(_)) => assert_eq!(name, "double-pendulum"),
            Err(e) => panic!("{name}: {e}"),
        }
    }
}

#[test]
fn trajectory_sets_survive_disk_and_embedding() {
    let dir = tempdir().unwrap();
    let set = small_lvpp(5.0);
    let path = dir.path().join("lv.set");
    save_trajectories(&set, &path).unwrap();
    let back = load_trajectories(&path).unwrap();
    assert_eq!(back, set);

    let spec = EmbeddingSpec::scalar(1, 7, 3).unwrap();
    let embedded = back.embed(&spec).unwrap();
    assert_eq!(embedded.width, 3);
    let t = &embedded.trajectories[2];
    let raw = set.trajectories[2].channel(1);
    for k in 0..t.len() {
        for j in 0..3 {
            assert_eq!(t.states[[k, j]], raw[k + 14 - 7 * j]);
        }
    }
    let epath = dir.path().join("lv_e.set");
    save_trajectories(&embedded, &epath).unwrap();
    assert_eq!(load_trajectories(&epath).unwrap(), embedded);
}

#[test]
fn trained_model_roundtrips_and_drives_inference() {
    let dir = tempdir().unwrap();
    let set = small_lvpp(10.0);
    let data = build_supervised(&set, true).unwrap();
    let model = init_model(&[6, 32, 32, 2], Activation::Softplus, 2, 0).unwrap();
    let cfg = TrainConfig { optimizer: OptimizerConfig::adam(3e-3), epochs: 1500, ..TrainConfig::default() };
    let (model, report) = train(model, &data, &cfg).unwrap();
    assert!(report.final_heldout_loss.unwrap() < report.curve[0].train_loss);

    let path = dir.path().join("m.idmdl");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, model);

    let sys = lotka_volterra();
    let alpha0 = [1.2, 0.8, 0.9, 1.1];
    let traj = integrate(&sys, &alpha0, &sys.default_x0(), 10.0, 0.01, &Method::default()).unwrap();
    let space = SearchSpace::new(sys.param_box().clone());
    let icfg = InferConfig { optimizer: OptimizerConfig::adam(1e-2), max_iters: 600, ..InferConfig::default() };
    let r = infer(&loaded, &traj, &space, &icfg).unwrap();
    let start_err: f64 = sys.param_box().midpoint().iter().zip(&alpha0).map(|(a, b)| (a - b).abs()).sum();
    let end_err: f64 = r.alpha_hat.iter().zip(&alpha0).map(|(a, b)| (a - b).abs()).sum();
    assert!(end_err < start_err, "{end_err} vs {start_err}");
}

#[test]
fn exact_field_inference_matches_the_oracle() {
    let sys = lotka_volterra();
    let alpha0 = [0.7, 1.3, 1.1, 0.9];
    let traj = integrate(&sys, &alpha0, &sys.default_x0(), 20.0, 0.01, &Method::default()).unwrap();
    let (oracle, _) = affine_least_squares(&sys, &traj).unwrap();
    let model = ExactFieldModel::new(sys.clone());
    let cfg = InferConfig {
        optimizer: OptimizerConfig::adam(1e-2),
        max_iters: 5000,
        batch_size: None,
        plateau_tol: 0.0,
        ..InferConfig::default()
    };
    let r = infer(&model, &traj, &SearchSpace::new(sys.param_box().clone()), &cfg).unwrap();
    for (a, b) in r.alpha_hat.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }
}

#[test]
fn oracle_experiment_on_lotka_volterra() {
    let dir = tempdir().unwrap();
    let cfg = ExperimentConfig {
        grid_step: 0.5,
        t_end: 20.0,
        test_count: 8,
        backend: Backend::Oracle,
        output_dir: Some(dir.path().to_path_buf()),
        ..ExperimentConfig::desk("lvpp")
    };
    let report = run_experiment(&cfg, 1).unwrap();
    assert_eq!(report.scatter.len(), 8);
    assert!(report.min_r_squared().unwrap() > 0.999);
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("results.jsonl.meta.json").exists());
}

#[test]
fn delay_representation_runs_end_to_end() {
    let cfg = ExperimentConfig {
        representation: Representation::ScalarDelay { channel: 0, tau: 10, dim: 3 },
        grid_step: 0.5,
        t_end: 10.0,
        test_count: 3,
        hidden: vec![16, 16],
        train: TrainConfig { epochs: 50, ..TrainConfig::default() },
        infer: InferConfig { max_iters: 20, ..InferConfig::default() },
        ..ExperimentConfig::desk("lvpp")
    };
    let report = run_experiment(&cfg, 1).unwrap();
    assert_eq!(report.scatter.len(), 3);
    assert!(report.failures.is_empty());
}

#[test]
fn uniform_test_parameters_stay_in_the_box() {
    let sys = lotka_volterra();
    for p in sample_uniform(sys.param_box(), 200, 9) {
        assert!(sys.param_box().contains(&p));
    }
}
