use std::sync::OnceLock;
use threshold_dirac::forms::{anti_hermiticity_defect, hermiticity_defect, taylor_form, taylor_form_fd};
use threshold_dirac::probes::*;
use threshold_dirac::*;

struct Fixture {
    crit: CriticalStructure,
    forms: PerturbationForms,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let g = Grid3::new(9, 1.0).unwrap();
        let shape = FourPotential::spherical_well(1.0, 0.7, 0.2);
        let crit = find_critical_coupling(&shape, g, (0.5, 40.0), &CriticalOptions::default()).unwrap();
        let forms = perturbation_forms(&crit, &crit.potential, 1e-6).unwrap();
        Fixture { crit, forms }
    })
}

#[test]
fn forms_have_the_expected_symmetry() {
    let f = fixture();
    let scale = |m: &nalgebra::DMatrix<C64>| m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(hermiticity_defect(&f.forms.r) <= 1e-6 * scale(&f.forms.r));
    assert!(anti_hermiticity_defect(&f.forms.s) <= 1e-6 * scale(&f.forms.s));
    assert!(f.forms.spectrum.gammas.windows(2).all(|w| w[0] <= w[1]));
    for s in &f.forms.splits {
        assert!(s.c1 > 0.0 && s.c2 >= 0.0 && s.c3 >= 0.0);
    }
}

#[test]
fn second_order_form_matches_difference_quotient() {
    let crit = &fixture().crit;
    let exact = taylor_form(crit, 2).unwrap();
    let fd = taylor_form_fd(crit, 2, 1e-2).unwrap();
    let err = (&exact - &fd).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = exact.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(err <= 1e-4 * scale, "{err} vs {scale}");
}

#[test]
fn sweep_is_deterministic_and_consistent() {
    let f = fixture();
    let ctx = ProbeContext::new(&f.crit, &f.forms.spectrum, &f.crit.potential, SolverSettings::default()).unwrap();
    let plan = SweepPlan {
        mus: vec![-0.01, 0.0],
        ks: vec![0.05, 0.2],
        js: vec![1, 2],
    };
    let a = resonance_sweep(&ctx, &plan).unwrap();
    let b = resonance_sweep(&ctx, &plan).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.records.len(), 8);
    for r in &a.records {
        assert!(r.sup_norm >= 1.0 - 1e-9);
        assert!(r.sup_norm + 1e-9 >= r.n_part_norm - r.residual_part - 1.0);
        assert!(r.predicted_bound.is_finite() && r.predicted_bound > 0.0);
    }
    // the k^{-1} growth at mu = 0 dominates the regular mu < 0 cells
    let at = |mu: f64, k: f64| {
        a.records
            .iter()
            .find(|r| r.mu == mu && r.k == k && r.j == 1)
            .unwrap()
            .sup_norm
    };
    assert!(at(0.0, 0.05) > 2.0 * at(0.0, 0.2));
}

#[test]
fn derivative_recursion_matches_difference_quotient() {
    let f = fixture();
    let ctx = ProbeContext::new(&f.crit, &f.forms.spectrum, &f.crit.potential, SolverSettings::default()).unwrap();
    let err = derivative_fd_error(&ctx, 0.01, 1, 0.15, 1e-3).unwrap();
    assert!(err <= 1e-3, "{err}");
    let d = derivative_recursion(&ctx, 0.01, 2, 0.15, 2).unwrap();
    assert_eq!(d.weighted_norms.len(), 3);
    assert!(d.alpha > 1.0);
    assert!(derivative_recursion(&ctx, 0.0, 1, 0.15, 3).is_err());
}

#[test]
fn plan_errors_are_reported() {
    let f = fixture();
    let ctx = ProbeContext::new(&f.crit, &f.forms.spectrum, &f.crit.potential, SolverSettings::default()).unwrap();
    let bad = SweepPlan {
        mus: vec![0.0],
        ks: vec![-0.1],
        js: vec![1],
    };
    assert!(resonance_sweep(&ctx, &bad).is_err());
    assert!(lambda1_probe(&ctx, &[0.0], &[0.1]).is_err());
}

#[test]
fn radial_oracle_is_consistent_with_closed_form() {
    let w = RadialWell::new(0.0, 1.0, 1).unwrap();
    let r = threshold_condition(&w, 2.5, 6.0).unwrap();
    let exact = 1.0 + (1.0 + std::f64::consts::PI.powi(2)).sqrt();
    assert!((r.depth_shooting - exact).abs() < 1e-8);
}
