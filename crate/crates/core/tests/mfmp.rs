use mirrorfree::geometry::{gbd, loop_integral, BoxSampler, GeometryContext, TrianglePath};
use mirrorfree::mfmp::{
    contraction_check, contraction_slacks, gap_estimate, lemma_mfmp_slack, run_mfmp, run_mfmp_sm, theorem2_bound,
    unrolled_corollary_check, RunConfig, RunTrace,
};
use mirrorfree::problems::{
    bilinear_instance, build_example_smooth, eg2_subproblem, random_smooth_params, solve_reference, ProblemInstance,
    SmoothExampleParams, SubproblemOptions,
};
use mirrorfree::Point;
use nalgebra::{dvector, DMatrix, DVector};
use proptest::prelude::*;

fn rotation() -> ProblemInstance {
    bilinear_instance(&DMatrix::from_element(1, 1, 1.0)).unwrap()
}

fn with_reference(mut inst: ProblemInstance) -> ProblemInstance {
    if inst.z_star.is_none() {
        inst.z_star = Some(solve_reference(&inst.field_f, 1e-12, 200).unwrap());
    }
    inst
}

fn omega<'a>(inst: &'a ProblemInstance, ctx: &'a GeometryContext) -> impl Fn(&Point) -> mirrorfree::Result<f64> + 'a {
    let z_star = inst.z_star.clone().unwrap();
    move |z: &Point| gbd(ctx, &inst.field_h, &z_star, z)
}

fn sm_run(inst: &ProblemInstance, z_1: Point, k: usize) -> RunTrace {
    run_mfmp_sm(inst, &RunConfig::new(z_1, k)).unwrap()
}

#[test]
fn rotation_gap_within_relative_lipschitz_bound() {
    let inst = rotation();
    let z_1 = dvector![1.0, 0.0];
    for k in [10, 100, 1000] {
        let t = run_mfmp(&inst, &RunConfig::new(z_1.clone(), k)).unwrap();
        let gap = t.gap_estimate.unwrap();
        let omega_max = t
            .comparison
            .iter()
            .map(|z| 0.5 * (z - &z_1).norm_squared())
            .fold(0.0, f64::max);
        let bound = theorem2_bound(inst.l, k, omega_max, 0.0);
        assert!(gap <= 1.05 * bound, "K={k}: gap {gap:e} bound {bound:e}");
    }
}

#[test]
fn bilinear_gap_decays_like_one_over_k() {
    let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]);
    let inst = bilinear_instance(&b).unwrap();
    let z_1 = dvector![1.0, -0.5, 0.25, 0.75];
    let gap = |k| {
        run_mfmp(&inst, &RunConfig::new(z_1.clone(), k))
            .unwrap()
            .gap_estimate
            .unwrap()
    };
    let (g10, g100) = (gap(10), gap(100));
    assert!(g100 <= g10 / 5.0, "{g10:e} {g100:e}");
}

#[test]
fn averaged_output_is_mean_of_half_steps() {
    let inst = rotation();
    let t = run_mfmp(&inst, &RunConfig::new(dvector![0.3, -0.9], 37)).unwrap();
    let mean = t.records.iter().fold(DVector::zeros(2), |acc, r| acc + &r.z_half) / 37.0;
    assert!((&mean - &t.z_out).norm() <= 1e-15);
    let sm = sm_run(&inst, dvector![0.3, -0.9], 5);
    assert_eq!(sm.z_out, sm.records[4].z_k);
}

#[test]
fn lemma_slack_on_rotation_probes() {
    let inst = rotation();
    let t = run_mfmp(&inst, &RunConfig::new(dvector![1.0, 0.0], 20)).unwrap();
    let probes = BoxSampler::new(2, -2.0, 2.0, 5).unwrap().points(50);
    for r in &t.records {
        for z in &probes {
            let s = lemma_mfmp_slack(r, &inst.field_f, &inst.field_h, inst.l, z).unwrap();
            assert!(s >= -1e-8, "k={} slack {s:e}", r.k);
        }
    }
}

#[test]
fn conservative_mirror_error_is_operator_loop() {
    let inst = with_reference(eg2_subproblem(2, 1, &SubproblemOptions::default()).unwrap());
    assert!(inst.h_is_conservative);
    let ctx = GeometryContext::default();
    let z_1 = BoxSampler::default_box(4, 1).unwrap().points(1).remove(0);
    let t = sm_run(&inst, z_1, 10);
    for r in &t.records {
        let tri = TrianglePath::new(r.z_k.clone(), r.z_half.clone(), r.z_next.clone()).unwrap();
        let direct = -inst.l * loop_integral(&ctx, &inst.field_f, &tri).unwrap();
        let e = r.e_k.unwrap();
        assert!(
            (e - direct).abs() <= 1e-10 * direct.abs().max(1.0),
            "k={}: {e:e} vs {direct:e}",
            r.k
        );
    }
}

#[test]
fn conservative_pair_has_vanishing_error_terms() {
    // F = H = ∇(½‖z‖²) on both sides.
    let inst = build_example_smooth(SmoothExampleParams::canonical(2)).unwrap();
    let mut sym = ProblemInstance::new("gradient", inst.field_h.clone(), inst.field_h.clone(), 1.0, 1.0).unwrap();
    sym.z_star = Some(DVector::zeros(4));
    let t = sm_run(&sym, dvector![0.5, -1.0, 0.25, 0.8], 8);
    for r in &t.records {
        assert!(r.e_k.unwrap().abs() <= 1e-10);
    }
}

#[test]
fn model_run_seed_3_contracts_each_step() {
    let inst = with_reference(eg2_subproblem(2, 3, &SubproblemOptions::default()).unwrap());
    let ctx = GeometryContext::default();
    let z_1 = BoxSampler::default_box(4, 3).unwrap().points(1).remove(0);
    let t = sm_run(&inst, z_1, 40);
    assert!(t.records.iter().all(|r| r.e_k.unwrap().is_finite()));
    let slack = contraction_check(&t, inst.l, inst.m, omega(&inst, &ctx)).unwrap();
    assert!(slack >= -1e-8, "{slack:e}");
    let chained = unrolled_corollary_check(&t, inst.l, inst.m, omega(&inst, &ctx)).unwrap();
    assert!(chained >= -1e-8, "{chained:e}");
}

#[test]
fn separable_quartic_run_contracts_each_step() {
    let inst = with_reference(build_example_smooth(random_smooth_params(2, 0, true).unwrap()).unwrap());
    let ctx = GeometryContext::default();
    let t = sm_run(&inst, dvector![0.6, 0.0, -0.8, 0.0], 50);
    for (k, s) in contraction_slacks(&t, inst.l, inst.m, omega(&inst, &ctx))
        .unwrap()
        .into_iter()
        .enumerate()
    {
        assert!(s >= -1e-8, "k={k}: {s:e}");
    }
}

#[test]
fn canonical_quartic_run_reaches_solver_floor() {
    // Near the origin F and H both behave like the identity, so ‖F(z_k)‖
    // shrinks by about 4/5 per step from a unit start; 1e-8 needs roughly
    // 90 steps.
    let inst = build_example_smooth(SmoothExampleParams::canonical(2)).unwrap();
    let z_1 = dvector![0.5, -0.5, 0.5, 0.5];
    let t = sm_run(&inst, z_1, 121);
    let at = |k| t.op_norm_at(k).unwrap();
    assert!(at(121) <= 1e-8, "{:e}", at(121));
    assert!(at(60) <= 1e-4 * at(1), "{:e}", at(60));
    // Geometric decay while above the prox tolerance.
    assert!(at(60) / at(30) <= 0.85f64.powi(30));
}

#[test]
fn model_run_plateaus_above_zero() {
    let inst = eg2_subproblem(
        2,
        0,
        &SubproblemOptions {
            kappa_min: 0.5,
            ..Default::default()
        },
    )
    .unwrap();
    let z_1 = BoxSampler::default_box(4, 0).unwrap().points(1).remove(0);
    let t = sm_run(&inst, z_1, 100);
    let (late, last) = (t.op_norm_at(80).unwrap(), t.op_norm_at(100).unwrap());
    assert!(last > 1e-6, "{last:e}");
    assert!((last - late).abs() / late <= 0.05);
}

#[test]
fn runs_are_bit_reproducible() {
    let inst = with_reference(eg2_subproblem(2, 4, &SubproblemOptions::default()).unwrap());
    let z_1 = BoxSampler::default_box(4, 4).unwrap().points(1).remove(0);
    let strip = |t: RunTrace| {
        t.records
            .into_iter()
            .map(|r| (r.z_k, r.z_half, r.z_next, r.e_k.map(f64::to_bits), r.prox_residuals))
            .collect::<Vec<_>>()
    };
    let a = strip(sm_run(&inst, z_1.clone(), 15));
    let b = strip(sm_run(&inst, z_1, 15));
    assert_eq!(a, b);
}

#[test]
fn gap_at_equilibrium_is_zero() {
    let inst = rotation();
    let ring: Vec<Point> = BoxSampler::default_box(2, 2).unwrap().points(30);
    assert!(gap_estimate(&DVector::zeros(2), &inst.field_f, &ring).unwrap().abs() <= 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn identity_sm_halves_each_step(z in prop::collection::vec(-5.0f64..5.0, 3), k in 1usize..8) {
        let id = mirrorfree::operator::fields::identity(3).unwrap();
        let mut inst = ProblemInstance::new("identity", id.clone(), id, 1.0, 1.0).unwrap();
        inst.z_star = Some(DVector::zeros(3));
        let z_1 = DVector::from_vec(z);
        let t = sm_run(&inst, z_1.clone(), k);
        for r in &t.records {
            prop_assert!((&r.z_next - &r.z_k * 0.5).norm() <= 1e-12 * (1.0 + r.z_k.norm()));
        }
        let expect = z_1 * 0.5f64.powi(k as i32);
        prop_assert!((t.last_iterate() - expect).norm() <= 1e-12);
    }
}
