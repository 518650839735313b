use diffsteer::control::{Direction, ErrorFilter, PoleSet, ReferenceCircle};
use diffsteer::dynamics::{PlantState, RolloutConfig, VehicleParams};
use diffsteer::sysid::{
    derive_gains, evaluate_controller, generate_ground_truth, identify, mean_loss, DecisionVar,
    GenerateSpec, IdentificationProblem, ProblemMode, Scoring, Split, TrainSettings, VarGroup,
};
use nalgebra::{Matrix3, Vector3};

fn default_poles() -> PoleSet {
    PoleSet::from_real(&[-5.0, -4.0, -7.0, -10.0]).unwrap()
}

/// Algebraic least-squares circle fit, returning centre and radius.
fn fit_circle(pts: &[&PlantState<f64>]) -> ([f64; 2], f64) {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for p in pts {
        let row = Vector3::new(p.s_x, p.s_y, 1.0);
        ata += row * row.transpose();
        atb += row * -(p.s_x * p.s_x + p.s_y * p.s_y);
    }
    let sol = ata.lu().solve(&atb).unwrap();
    let (cx, cy) = (-sol[0] / 2.0, -sol[1] / 2.0);
    ([cx, cy], (cx * cx + cy * cy - sol[2]).sqrt())
}

#[test]
fn full_lock_circles_have_kinematic_radius() {
    let truth = VehicleParams::f1tenth();
    let cfg = RolloutConfig::default();
    let data = generate_ground_truth(&truth, &GenerateSpec::default(), ProblemMode::TrajectoryMatch, &cfg, 0).unwrap();
    let states: Vec<&PlantState<f64>> = data.entries[0].reference.iter().skip(200).collect();
    let (centre, radius) = fit_circle(&states);
    // Rear-axle radius L / tan(delta_max).
    let kinematic = truth.wheelbase() / truth.delta_max.tan();
    assert!((radius / kinematic - 1.0).abs() < 0.06, "radius {radius} vs {kinematic}");
    for s in &states {
        let r = ((s.s_x - centre[0]).powi(2) + (s.s_y - centre[1]).powi(2)).sqrt();
        assert!((r - radius).abs() < 1e-6);
    }
}

#[test]
fn left_and_right_turns_mirror() {
    let cfg = RolloutConfig { steps: 500, ..Default::default() };
    let data = generate_ground_truth(&VehicleParams::f1tenth(), &GenerateSpec::default(), ProblemMode::TrajectoryMatch, &cfg, 0).unwrap();
    let yaw_rates: Vec<f64> = data.entries.iter().map(|e| e.reference.last().unwrap().psi_dot).collect();
    let left = yaw_rates.iter().filter(|w| **w > 0.0).count();
    assert_eq!(left, 8);
    assert_eq!(yaw_rates.len() - left, 8);
    assert_eq!(data.split(Split::Train).len(), 12);
    assert_eq!(data.split(Split::Val).len(), 4);
}

#[test]
fn short_identification_lowers_the_loss() {
    let truth = VehicleParams::f1tenth();
    let cfg = RolloutConfig { steps: 500, ..Default::default() };
    let data = generate_ground_truth(&truth, &GenerateSpec::default(), ProblemMode::TrajectoryMatch, &cfg, 3).unwrap();
    let problem = IdentificationProblem {
        mode: ProblemMode::TrajectoryMatch,
        groups: vec![
            VarGroup::new(vec![DecisionVar::CSf], [3.0, 8.0], [0.1, 50.0]),
            VarGroup::new(vec![DecisionVar::CSr], [3.0, 8.0], [0.1, 50.0]),
        ],
        fixed: truth,
        v_x: 1.0,
        poles: default_poles(),
    };
    let mut scoring = Scoring::trajectory_match(cfg);
    scoring.loss.gamma = 1e-4;
    scoring.sample_every = 25;
    let settings = TrainSettings { epochs: 10, ..Default::default() };
    let report = identify(&problem, &data, &scoring, &settings, 1).unwrap();
    let train = data.split(Split::Train);
    let before = mean_loss(&problem, &scoring, &train, &report.initial_params);
    let after = mean_loss(&problem, &scoring, &train, &report.final_params);
    assert!(after < before, "{before} -> {after}");
    assert_eq!(report.records.len(), 10);
    for (v, g) in report.final_params.iter().zip(&problem.groups) {
        assert!(*v >= g.bounds[0] && *v <= g.bounds[1]);
    }
}

#[test]
fn evaluation_reports_design_poles() {
    let p = VehicleParams::f1tenth();
    let circle = ReferenceCircle::offset_from_origin(30.0, Direction::Ccw).unwrap();
    let cfg = RolloutConfig { steps: 200, ..Default::default() };
    let eval = evaluate_controller(&p, &p, &default_poles(), &circle, &cfg, 1.0, &ErrorFilter::default()).unwrap();
    assert_eq!(eval.profile.len(), 201);
    assert_eq!(eval.states.len(), 201);
    assert_eq!(eval.gains, derive_gains(&p, 1.0, &default_poles()).unwrap());
    let mut re: Vec<f64> = eval.eigenvalues.iter().map(|e| e[0]).collect();
    re.sort_by(f64::total_cmp);
    for (a, b) in re.iter().zip([-10.0, -7.0, -5.0, -4.0]) {
        assert!((a - b).abs() < 1e-6);
    }
}
