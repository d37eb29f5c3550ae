use qong_core::fluctuations::linearized_system;
use qong_core::steady::{
    continue_branch, critical_power, fastest_rate, follow_drive, integrate_classical, select_operating_point,
    CriticalPower,
};
use qong_core::{InjectionScheme, ModelParams, ParamKey, SolverStrategy, Stability, SteadyState};

fn sh_optimum() -> ModelParams {
    ModelParams::tfln_reference()
        .with_drive(0.0, 23.507e-3)
        .with_coupling(1.018e5, 5.462e5)
}

fn optima() -> [ModelParams; 3] {
    let r = ModelParams::tfln_reference();
    [
        sh_optimum(),
        r.with_drive(0.945e-6, 0.0).with_coupling(6.747e6, 6.675e7),
        r.with_drive(1.5e-3, 1.873e-3).with_coupling(4.353e5, 8.769e6),
    ]
}

fn operating_point(p: &ModelParams, s: &SolverStrategy) -> SteadyState {
    select_operating_point(p, s)
        .unwrap()
        .chosen
        .expect("an operating point")
        .0
}

fn sh_threshold(s: &SolverStrategy) -> CriticalPower {
    critical_power(&sh_optimum(), InjectionScheme::SecondHarmonic, (1e-3, 30e-3), s).unwrap()
}

#[test]
fn reported_optima_are_stable() {
    let s = SolverStrategy::default();
    for p in optima() {
        let st = operating_point(&p, &s);
        assert_eq!(st.stability, Stability::Stable);
        assert!(st.max_real_part < 0.0);
    }
}

#[test]
fn stable_points_stay_put_for_a_hundred_lifetimes() {
    let s = SolverStrategy::default();
    for p in optima() {
        let st = operating_point(&p, &s);
        let r = p.rates();
        let lifetime = 1.0 / (r.kappa[0] + r.gamma[0]).min(r.kappa[1] + r.gamma[1]);
        let dt = 0.1 / fastest_rate(&p);
        let traj = integrate_classical(&p, &st.amplitudes, 100.0 * lifetime, dt).unwrap();
        let x0 = st.x();
        let norm = x0.norm();
        let worst = traj
            .states
            .iter()
            .map(|a| (qong_core::steady::pack(a) - x0).norm() / norm)
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "relative drift {worst:e}");
    }
}

#[test]
fn followed_branch_eigenvalue_crosses_zero_at_threshold() {
    let s = SolverStrategy::default();
    let pc = sh_threshold(&s);
    let base = sh_optimum();
    let mut last = f64::NEG_INFINITY;
    for k in 0..=20 {
        let p2 = pc.pc * (0.8 + 0.02 * k as f64);
        let st = follow_drive(&base.with_drive(0.0, p2), 1e-3, &s).expect("branch");
        let re = st.max_real_part;
        if p2 < pc.lower {
            assert!(re < 0.0, "P2 {p2:e}: {re:e}");
        }
        if p2 > pc.upper {
            assert!(re > 0.0, "P2 {p2:e}: {re:e}");
        }
        assert!(re > last, "not increasing at P2 {p2:e}");
        last = re;
    }
}

#[test]
fn continuation_in_pump_power_finds_the_threshold() {
    let s = SolverStrategy::default();
    let pc = sh_threshold(&s);
    let grid: Vec<f64> = (0..=60).map(|k| 0.1e-3 * 300f64.powf(k as f64 / 60.0)).collect();
    let branch = continue_branch(&sh_optimum().with_drive(0.0, grid[0]), ParamKey::P2, &grid, &s).unwrap();
    assert_eq!(branch.len(), grid.len());

    let first_unstable = branch
        .iter()
        .position(|b| b.stability != Stability::Stable)
        .expect("threshold");
    assert!(branch[..first_unstable]
        .iter()
        .all(|b| b.stability == Stability::Stable));
    assert!(grid[first_unstable - 1] <= pc.upper && grid[first_unstable] >= pc.lower);

    // Below threshold the continued branch is the one reached by ramping the drive.
    let k = first_unstable / 2;
    let ramped = follow_drive(&sh_optimum().with_drive(0.0, grid[k]), 1e-3, &s).unwrap();
    let d = (branch[k].x() - ramped.x()).norm() / ramped.x().norm();
    assert!(d < 1e-8, "relative distance {d:e}");
}

#[test]
fn slowest_mode_softens_approaching_threshold_from_above() {
    let s = SolverStrategy::default();
    let pc = sh_threshold(&s);
    let mut prev = f64::INFINITY;
    for eps in [0.2, 0.1, 0.05, 0.02, 0.01] {
        let p = sh_optimum().with_drive(0.0, pc.upper * (1.0 + eps));
        let st = operating_point(&p, &s);
        assert!(
            st.amplitudes.a[0].norm() > 0.0,
            "above threshold the fundamental oscillates"
        );
        let m = linearized_system(&st, &p).unwrap();
        let slowest = m
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(f64::INFINITY, f64::min);
        assert!(slowest < prev, "eps {eps}: {slowest:e} vs {prev:e}");
        prev = slowest;
    }
}
