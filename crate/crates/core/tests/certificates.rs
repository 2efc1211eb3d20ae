use mirrorfree::geometry::{monotonicity_certificate, rel_smooth_certificate, rel_strong_mono_certificate, BoxSampler};
use mirrorfree::operator::{fields, symmetric_min_eig, symmetric_part};
use mirrorfree::problems::{
    build_cgo_pair, build_example_eg2, build_example_smooth, eg2_subproblem, l3_sanity_check, random_smooth_params,
    random_subproblem_center, QuadraticGame, SmoothExampleParams, SubproblemOptions,
};
use mirrorfree::prox::MirrorVariant;
use nalgebra::{dvector, DMatrix, DVector};
use proptest::prelude::*;

fn options(variant: MirrorVariant, m_reg: Option<f64>) -> SubproblemOptions {
    SubproblemOptions {
        variant,
        m_reg,
        ..SubproblemOptions::default()
    }
}

#[test]
fn quartic_saddle_constants_certify() {
    for n in [2, 5, 10] {
        for seed in 0..5 {
            for separable in [false, true] {
                let inst = build_example_smooth(random_smooth_params(n, seed, separable).unwrap()).unwrap();
                let (s, m) = inst.certify(200, seed, 1e-9).unwrap();
                assert!(s.holds, "n={n} seed={seed}: {}", s.worst_margin);
                assert!(m.holds, "n={n} seed={seed}: {}", m.worst_margin);
            }
        }
    }
}

#[test]
fn smoothness_certificate_fails_below_strong_monotonicity() {
    let mut inst = build_example_smooth(SmoothExampleParams::canonical(2)).unwrap();
    inst.l = inst.m / 2.0;
    let (s, _) = inst.certify(200, 0, 1e-9).unwrap();
    assert!(!s.holds);
    // The witness reproduces the reported margin.
    let jf = inst.field_f.jacobian(&s.worst_point).unwrap();
    let jh = inst.field_h.jacobian(&s.worst_point).unwrap();
    assert_eq!(symmetric_min_eig(&(jh * inst.l - jf)).unwrap(), s.worst_margin);
}

#[test]
fn canonical_strong_monotonicity_oracle() {
    // E = C = I: ∇F = blockdiag(‖x‖²I + 2xxᵀ + I, ...) and ∇H has the same
    // form, so ∇F - m∇H ⪰ 0 for any m ≤ 1 and fails near the origin above 1.
    let mut inst = build_example_smooth(SmoothExampleParams::canonical(2)).unwrap();
    assert!((inst.m - 1.0 / 3.0).abs() < 1e-15);
    for (m, holds) in [(1.0 / 3.0, true), (1.0, true), (1.1, false)] {
        inst.m = m;
        let (_, r) = inst.certify(200, 1, 1e-9).unwrap();
        assert_eq!(r.holds, holds, "m = {m}");
    }
}

#[test]
fn model_pairs_certify_at_tau_squared_regularization() {
    for variant in [MirrorVariant::Standard, MirrorVariant::Conservative] {
        for seed in 0..5 {
            let inst = eg2_subproblem(2, seed, &options(variant, None)).unwrap();
            assert_eq!(inst.l, 2.0);
            assert_eq!(inst.m, 1.0);
            let (s, m) = inst.certify(200, seed, 1e-9).unwrap();
            assert!(
                s.holds && m.holds,
                "{variant:?} seed {seed}: {} {}",
                s.worst_margin,
                m.worst_margin
            );
        }
    }
}

#[test]
fn model_pairs_fail_at_two_tau_regularization() {
    // With M = 2τL₃ the quartic terms balance only at h = 0; the cubic Taylor
    // remainder then breaks relative smoothness away from the center.
    for variant in [MirrorVariant::Standard, MirrorVariant::Conservative] {
        for seed in 0..5 {
            let inst = eg2_subproblem(2, seed, &options(variant, Some(2.0 * 3.0 * 24.0))).unwrap();
            let (s, m) = inst.certify(200, seed, 1e-9).unwrap();
            assert!(!s.holds, "{variant:?} seed {seed}");
            assert!(m.holds);
        }
    }
}

#[test]
fn displayed_model_coefficients_are_not_relatively_smooth() {
    // F with 2M∇d₄ and H with ½(1-1/τ)∇Φ(z_a): the quartic growth of F
    // outpaces L·H, so no sample box certifies L = (τ+1)/(τ-1).
    let inst = eg2_subproblem(2, 0, &options(MirrorVariant::Standard, None)).unwrap();
    let (model, _) = inst.third_order.clone().unwrap();
    let m_reg = model.m_reg();
    let f = inst
        .field_f
        .add(&fields::d4_gradient(4).unwrap().scaled(1.5 * m_reg))
        .unwrap();
    let half_linear = fields::linear(model.jac_phi_at_za() * (0.5 * model.mirror_scale())).unwrap();
    let h = inst.field_h.sub(&half_linear).unwrap();
    let s = BoxSampler::default_box(4, 0).unwrap();
    assert!(!rel_smooth_certificate(&f, &h, inst.l, &s, 200, 1e-9).unwrap().holds);
}

#[test]
fn conservative_and_standard_mirrors_share_quadratic_forms() {
    for seed in 0..3 {
        let std = eg2_subproblem(2, seed, &options(MirrorVariant::Standard, None)).unwrap();
        let con = eg2_subproblem(2, seed, &options(MirrorVariant::Conservative, None)).unwrap();
        for h in BoxSampler::default_box(4, seed).unwrap().points(50) {
            let a = symmetric_part(&std.field_h.jacobian(&h).unwrap());
            let b = con.field_h.jacobian(&h).unwrap();
            assert!((&a - &b).norm() < 1e-12);
            // Strictly monotone away from the center.
            if h.norm() > 1e-3 {
                assert!(symmetric_min_eig(&b).unwrap() > 0.0);
            }
        }
    }
}

#[test]
fn mirror_margin_is_at_least_the_quartic_bound() {
    // sym ∇H'(h) ⪰ s·S + (κ/2)(‖h‖²I + 2hhᵀ) with S = sym ∇Φ(z_a) ⪰ 0, so
    // its smallest eigenvalue is at least (κ/2)‖h‖².
    for seed in 0..3 {
        let inst = eg2_subproblem(2, seed, &SubproblemOptions::default()).unwrap();
        let (model, _) = inst.third_order.clone().unwrap();
        let half_k = 0.5 * model.kappa();
        for h in BoxSampler::default_box(4, 10 + seed).unwrap().points(100) {
            let e = symmetric_min_eig(&inst.field_h.jacobian(&h).unwrap()).unwrap();
            assert!(
                e >= half_k * h.norm_squared() - 1e-9,
                "{e} vs {}",
                half_k * h.norm_squared()
            );
        }
    }
}

#[test]
fn competitive_gradient_pair_certifies_with_unit_constants() {
    for seed in 0..5 {
        let game = QuadraticGame::random(3, 3, seed).unwrap();
        let z_a = BoxSampler::default_box(6, seed).unwrap().points(1).remove(0);
        let (phi_alpha, phi_0) = build_cgo_pair(&game, &z_a, 0.8, 0.3).unwrap();
        let s = BoxSampler::default_box(6, seed).unwrap();
        let smooth = rel_smooth_certificate(&phi_alpha, &phi_0, 1.0, &s, 200, 1e-9).unwrap();
        let mono = rel_strong_mono_certificate(&phi_alpha, &phi_0, 1.0, &s, 200, 1e-9).unwrap();
        assert!(smooth.holds && mono.holds);
        // Equality case: both margins are zero.
        assert!(smooth.worst_margin.abs() < 1e-9 && mono.worst_margin.abs() < 1e-9);
        assert!(monotonicity_certificate(&phi_0, &s, 200, 1e-9).unwrap().holds);
    }
}

#[test]
fn competitive_gradient_with_zero_alpha_is_the_reference() {
    let game = QuadraticGame::random(2, 2, 1).unwrap();
    let z_a = dvector![0.1, -0.4, 1.0, 2.0];
    let (a, b) = build_cgo_pair(&game, &z_a, 0.0, 0.5).unwrap();
    for h in BoxSampler::default_box(4, 0).unwrap().points(10) {
        assert_eq!(a.eval(&h).unwrap(), b.eval(&h).unwrap());
    }
}

#[test]
fn center_rejection_sampling_mostly_accepts() {
    for n in [2, 3, 5] {
        let mut draws = 0;
        let trials = 200;
        for seed in 0..trials {
            let (_, z, d) = random_subproblem_center(n, seed, 0.25).unwrap();
            let (x, y) = (z.rows(0, n).norm(), z.rows(n, n).norm());
            assert!(x.min(y) >= 0.25);
            draws += d;
        }
        let rate = trials as f64 / draws as f64;
        assert!(rate > 0.9, "n={n}: acceptance rate {rate}");
    }
}

#[test]
fn eg2_third_order_constant_is_24() {
    // ∇Φ's cubic block 4‖x‖²I + 8xxᵀ has third derivative bounded by 24 in
    // spectral norm, attained along x.
    let a = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 1.5, 0.2]);
    let phi = build_example_eg2(&a).unwrap();
    let s = BoxSampler::default_box(4, 3).unwrap();
    let l3 = l3_sanity_check(&phi, &s, 200).unwrap();
    assert!(l3 <= 24.0 + 1e-9, "{l3}");
    assert!(l3 > 12.0, "{l3}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cgo_cross_term_is_skew(
        h1 in prop::collection::vec(-3.0f64..3.0, 2),
        h2 in prop::collection::vec(-3.0f64..3.0, 2),
        alpha in 0.0f64..1.0,
        eta in 0.1f64..4.0,
    ) {
        // f(x, y) = xy at z_a = 0.
        let game = QuadraticGame {
            p: DMatrix::zeros(1, 1),
            q: DMatrix::zeros(1, 1),
            c: DMatrix::from_element(1, 1, 1.0),
            p_vec: DVector::zeros(1),
            q_vec: DVector::zeros(1),
        };
        let (pa, p0) = build_cgo_pair(&game, &DVector::zeros(2), alpha, eta).unwrap();
        let delta = pa.sub(&p0).unwrap();
        let (h1, h2) = (DVector::from_vec(h1), DVector::from_vec(h2));
        let d1 = delta.eval(&h1).unwrap();
        prop_assert!((d1.clone() - dvector![h1[1], -h1[0]] * (alpha / eta)).norm() < 1e-12);
        let v = (delta.eval(&h2).unwrap() - d1).dot(&(&h2 - &h1));
        prop_assert!(v.abs() < 1e-12);
    }
}
