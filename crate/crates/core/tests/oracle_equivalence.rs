use fracinv::fem::{make_mesh, NonlocalMatrices};
use fracinv::inverse::{gradient, run_cgm, CgmConfig, ForwardOperator, GradientRoute, StopReason};
use fracinv::spectral::{compute_eigenbasis, forward_series, inverse_series};
use fracinv::time_stepper::{L1Stepper, TimeGrid};
use nalgebra::DVector;

fn trig(x: f64) -> f64 {
    let p = std::f64::consts::PI * x;
    p.cos() * p.sin()
}

#[test]
fn spectral_and_l1_forward_solutions_agree() {
    let mesh = make_mesh(64).unwrap();
    let mats = NonlocalMatrices::assemble(&mesh, 0.5).unwrap();
    let basis = compute_eigenbasis(&mats, mats.dim()).unwrap();
    let g = mesh.sample(trig);
    let spectral = forward_series(&g, &basis, 0.5, 1.0).unwrap();
    let grid = TimeGrid::new(200, 1.0, 0.5).unwrap();
    let stepped = L1Stepper::new(&mats, grid).unwrap().final_value(&g).unwrap();
    let gap = mats.mass.norm(&(&spectral - &stepped));
    assert!(gap < 5e-3, "gap {gap}");
}

#[test]
fn gradient_routes_agree_on_experiment_grid() {
    let mesh = make_mesh(64).unwrap();
    let mats = NonlocalMatrices::assemble(&mesh, 0.5).unwrap();
    let op = ForwardOperator::new(L1Stepper::new(&mats, TimeGrid::new(100, 1.0, 0.5).unwrap()).unwrap());
    let h = op.apply(&mesh.sample(trig)).unwrap();
    let g = DVector::from_element(mats.dim(), 1.0);
    let a = gradient(&g, &h, 0.0, &op, GradientRoute::Adjoint, 1e-3).unwrap();
    let b = gradient(&g, &h, 0.0, &op, GradientRoute::SelfAdjoint, 1e-3).unwrap();
    let rel = mats.mass.norm(&(&a - &b)) / mats.mass.norm(&b);
    assert!(rel < 0.02, "relative gap {rel}");
}

#[test]
fn inverse_series_undoes_forward_series() {
    let mesh = make_mesh(48).unwrap();
    let mats = NonlocalMatrices::assemble(&mesh, 0.3).unwrap();
    let basis = compute_eigenbasis(&mats, mats.dim()).unwrap();
    let g = mesh.sample(|x| (1.0 - x * x) * (2.0 * x).exp());
    let h = forward_series(&g, &basis, 0.7, 1.0).unwrap();
    let back = inverse_series(&h, &basis, 0.7, 1.0, basis.count()).unwrap();
    let rel = mats.mass.norm(&(&back - &g)) / mats.mass.norm(&g);
    assert!(rel < 1e-8, "round trip {rel}");
}

#[test]
fn cgm_recovers_single_mode_in_one_step() {
    let mesh = make_mesh(40).unwrap();
    let mats = NonlocalMatrices::assemble(&mesh, 0.6).unwrap();
    let basis = compute_eigenbasis(&mats, 3).unwrap();
    let op = ForwardOperator::new(L1Stepper::new(&mats, TimeGrid::new(50, 1.0, 0.4).unwrap()).unwrap());
    for p in 0..3 {
        let truth = basis.vector(p);
        let h = op.apply(&truth).unwrap();
        let config = CgmConfig {
            g0: Some(DVector::zeros(mats.dim())),
            max_iter: 10,
            theta_override: Some(1e-10),
            ..CgmConfig::default()
        };
        let (g, trace) = run_cgm(&h, 0.0, &config, &op, Some(&truth)).unwrap();
        assert_eq!(trace.stop_reason, StopReason::Discrepancy, "mode {p}");
        assert_eq!(trace.stopping_index, 1, "mode {p}");
        assert!(mats.mass.norm(&(&g - &truth)) < 1e-9, "mode {p}");
    }
}

#[test]
fn first_eigenvalue_settles_under_refinement() {
    let lambda1 = |n| {
        let mesh = make_mesh(n).unwrap();
        let mats = NonlocalMatrices::assemble(&mesh, 0.5).unwrap();
        compute_eigenbasis(&mats, 1).unwrap().lambdas[0]
    };
    let (coarse, fine) = (lambda1(64), lambda1(128));
    assert!((coarse - fine).abs() / fine < 1e-2, "{coarse} vs {fine}");
    // Half-Laplacian on (-1, 1): first eigenvalue 1.1577738836977...
    assert!((fine - 1.157_773_883_697_7).abs() < 1e-2, "{fine}");
}
