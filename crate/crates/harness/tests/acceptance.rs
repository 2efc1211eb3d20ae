//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use mirrorfree::geometry::{
    anti_lipschitz_ratio, d_theta, gbd, norelip_triangle, relative_gbd_margin, three_point_residual, BoxSampler,
    GeometryContext,
};
use mirrorfree::mfmp::{run_mfmp, ComparisonSpec, RunConfig};
use mirrorfree::operator::fields;
use mirrorfree::problems::{
    build_cgo_pair, build_example_eg2, build_example_smooth, eg2_subproblem, norelip_pair, random_instance,
    random_smooth_params, random_subproblem_center, smooth_mirror, InstanceKind, ProblemInstance, QuadraticGame,
    SubproblemOptions,
};
use mirrorfree::prox::{prox_generic, third_order_prox_step, MirrorVariant, ProxSpec};
use mirrorfree::{Point, VectorField};
use mirrorfree_harness::runner::{initial_point, run_seed};
use mirrorfree_harness::{default_suite, run_experiment, ExperimentConfig, RunStatus};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = mirrorfree_harness::Result<(bool, String)>;

fn normal_point(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Point {
    DVector::from_fn(d, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        scale * v
    })
}

fn cgo_fields(seed: u64) -> mirrorfree_harness::Result<(VectorField, VectorField)> {
    let game = QuadraticGame::random(3, 3, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z_a = normal_point(&mut rng, 6, 1.0);
    Ok(build_cgo_pair(&game, &z_a, 0.7, 0.5)?)
}

fn eg2_options(variant: MirrorVariant) -> SubproblemOptions {
    SubproblemOptions {
        variant,
        ..SubproblemOptions::default()
    }
}

/// The six polynomial fields of the library.
fn library_fields() -> mirrorfree_harness::Result<Vec<(&'static str, VectorField)>> {
    let smooth = build_example_smooth(random_smooth_params(3, 0, false)?)?;
    let (a, _, _) = random_subproblem_center(2, 0, 0.25)?;
    let sub = eg2_subproblem(2, 0, &eg2_options(MirrorVariant::Conservative))?;
    let (phi_alpha, _) = cgo_fields(0)?;
    Ok(vec![
        ("quartic saddle operator", smooth.field_f),
        ("quartic saddle mirror", smooth_mirror(3)?),
        ("eg2 operator", build_example_eg2(&a)?),
        ("third-order model operator", sub.field_f),
        ("conservative third-order mirror", sub.field_h),
        ("competitive gradient operator", phi_alpha),
    ])
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let ctx = GeometryContext::default();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (i, (name, f)) in library_fields()?.into_iter().enumerate() {
        let mut w: f64 = 0.0;
        for t in BoxSampler::default_box(f.dim(), 100 + i as u64)?.triangles(100) {
            w = w.max(three_point_residual(&ctx, &f, &t.a, &t.b, &t.c)?);
        }
        parts.push(format!("{name} {w:.1e}"));
        worst = worst.max(w);
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst <= 1e-10 && secs < 5.0,
        format!("max residual {worst:.2e} ({}), {secs:.2} s", parts.join(", ")),
    ))
}

fn criterion_2() -> Outcome {
    let ctx = GeometryContext::default();
    let mut monotone: Vec<(String, VectorField)> =
        library_fields()?.into_iter().map(|(n, f)| (n.to_string(), f)).collect();
    let (_, phi_0) = cgo_fields(0)?;
    let standard = eg2_subproblem(2, 0, &eg2_options(MirrorVariant::Standard))?;
    monotone.push(("competitive gradient reference".into(), phi_0));
    monotone.push(("standard third-order mirror".into(), standard.field_h.clone()));
    monotone.push(("identity".into(), fields::identity(4)?));
    monotone.push((
        "bilinear".into(),
        fields::bilinear(&DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]))?,
    ));

    let mut worst_gbd = f64::INFINITY;
    for (i, (_, f)) in monotone.iter().enumerate() {
        for (a, b) in BoxSampler::default_box(f.dim(), 200 + i as u64)?.pairs(100) {
            worst_gbd = worst_gbd.min(gbd(&ctx, f, &b, &a)?);
        }
    }

    let mut pairs: Vec<(String, ProblemInstance)> = Vec::new();
    for seed in 0..3 {
        pairs.push((
            format!("smooth seed {seed}"),
            random_instance(InstanceKind::SmoothInseparable, 3, seed)?,
        ));
        pairs.push((
            format!("smooth B=0 seed {seed}"),
            random_instance(InstanceKind::SmoothSeparable, 3, seed)?,
        ));
        pairs.push((
            format!("bilinear seed {seed}"),
            random_instance(InstanceKind::Bilinear, 3, seed)?,
        ));
    }
    pairs.push(("third-order standard".into(), standard));
    pairs.push((
        "third-order conservative".into(),
        eg2_subproblem(2, 0, &eg2_options(MirrorVariant::Conservative))?,
    ));
    let (phi_alpha, phi_0) = cgo_fields(1)?;
    pairs.push((
        "competitive gradient".into(),
        ProblemInstance::new("cgo", phi_alpha, phi_0, 1.0, 1.0)?,
    ));

    let mut worst_rel = f64::INFINITY;
    let mut worst_name = String::new();
    for (i, (name, inst)) in pairs.iter().enumerate() {
        for (a, b) in BoxSampler::default_box(inst.dim(), 300 + i as u64)?.pairs(100) {
            let v = relative_gbd_margin(&ctx, &inst.field_f, &inst.field_h, inst.l, &a, &b)?;
            if v < worst_rel {
                worst_rel = v;
                worst_name = name.clone();
            }
        }
    }
    Ok((
        worst_gbd >= -1e-10 && worst_rel >= -1e-9,
        format!(
            "min gbd {worst_gbd:.2e} over {} fields; min L*w_H - w_F {worst_rel:.2e} over {} pairs (at {worst_name})",
            monotone.len(),
            pairs.len()
        ),
    ))
}

fn criterion_3() -> Outcome {
    let mut ok = true;
    let mut worst_s = f64::INFINITY;
    let mut worst_m = f64::INFINITY;
    let mut failures = Vec::new();
    for n in [2, 5, 10] {
        for seed in 0..5 {
            let inst = build_example_smooth(random_smooth_params(n, seed, false)?)?;
            let (s, m) = inst.certify(200, seed, 1e-9)?;
            worst_s = worst_s.min(s.worst_margin);
            worst_m = worst_m.min(m.worst_margin);
            if !(s.holds && m.holds) {
                ok = false;
                failures.push(format!("n={n} seed={seed}"));
            }
        }
    }
    Ok((
        ok,
        format!(
            "15 instances, worst smoothness margin {worst_s:.3e}, worst monotonicity margin {worst_m:.3e}{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!(", failing: {}", failures.join(" "))
            }
        ),
    ))
}

fn criterion_4() -> Outcome {
    let tol = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_diff: f64 = 0.0;
    let mut worst_root: f64 = 0.0;
    let mut max_iters = 0;
    let mut all_converged = true;
    for i in 0..20u64 {
        let n = 1 + (i % 3) as usize;
        let variant = if i % 2 == 0 {
            MirrorVariant::Conservative
        } else {
            MirrorVariant::Standard
        };
        let inst = eg2_subproblem(n, i, &eg2_options(variant))?;
        let (model, variant) = inst.third_order.clone().expect("model pair");
        let d = inst.dim();
        let anchor = normal_point(&mut rng, d, 0.3);
        let query = normal_point(&mut rng, d, 0.3);
        let m = if i % 4 < 2 { 0.0 } else { inst.m };
        let (closed, solve) = third_order_prox_step(&model, variant, inst.l, m, &anchor, &query, tol)?;
        let spec = ProxSpec::new(&inst.field_f, &inst.field_h, inst.l, &anchor, &query)
            .with_m(m)
            .with_tolerance(tol);
        let newton = prox_generic(&spec)?;
        all_converged &= newton.converged;
        worst_diff = worst_diff.max((&closed.z_prime - &newton.z_prime).norm());
        worst_root = worst_root.max(solve.residual);
        max_iters = max_iters.max(solve.iterations());
    }
    Ok((
        all_converged && worst_diff <= 10.0 * tol && worst_root <= 1e-10 && max_iters <= 40,
        format!("max |z_closed - z_newton| {worst_diff:.2e}, max root residual {worst_root:.2e}, max lambda iterations {max_iters}"),
    ))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut cases: Vec<(String, ProblemInstance, Point, f64)> = vec![(
        "rotation".into(),
        mirrorfree::problems::bilinear_instance(&DMatrix::from_element(1, 1, 1.0))?,
        DVector::from_vec(vec![1.0, 0.0]),
        2.0,
    )];
    for seed in 0..3 {
        let inst = random_instance(InstanceKind::Bilinear, 3, seed)?;
        cases.push((format!("n=3 seed {seed}"), inst, initial_point(6, seed, 1.0), 2.0));
    }
    let mut ok = true;
    let mut worst_ratio: f64 = 0.0;
    for (_, inst, z1, radius) in &cases {
        for k in [10, 100, 1000] {
            let mut rc = RunConfig::new(z1.clone(), k);
            rc.comparison = ComparisonSpec {
                radius: *radius,
                count: 64,
            };
            let trace = run_mfmp(inst, &rc).map_err(|a| a.error)?;
            let gap = trace.gap_estimate.expect("gap estimate");
            let max_omega = trace
                .comparison
                .iter()
                .map(|z| 0.5 * (z - z1).norm_squared())
                .fold(0.0, f64::max);
            let bound = inst.l * max_omega;
            let lhs = gap * k as f64;
            worst_ratio = worst_ratio.max(lhs / bound);
            ok &= lhs <= 1.05 * bound;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        ok && secs < 10.0,
        format!(
            "{} instances x K in {{10, 100, 1000}}, max K*gap / (L max w) = {worst_ratio:.4}, {secs:.2} s",
            cases.len()
        ),
    ))
}

struct SuiteRun {
    config: ExperimentConfig,
    seed: u64,
    summary: mirrorfree_harness::SeedSummary,
    trace: mirrorfree::mfmp::RunTrace,
    secs: f64,
}

fn run_suite(dir: &Path) -> mirrorfree_harness::Result<Vec<SuiteRun>> {
    let mut out = Vec::new();
    for cfg in default_suite() {
        let d = cfg.output_dir(dir);
        fs::create_dir_all(&d).expect("output directory");
        for &seed in &cfg.run.seeds {
            let start = Instant::now();
            let (summary, trace) = run_seed(&cfg, seed, &d)?;
            out.push(SuiteRun {
                config: cfg.clone(),
                seed,
                summary,
                trace,
                secs: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(out)
}

fn criterion_6(runs: &[SuiteRun]) -> Outcome {
    let mut ok = true;
    let mut worst_step = f64::INFINITY;
    let mut worst_written = f64::INFINITY;
    let mut worst_unrolled = f64::INFINITY;
    let mut failures = Vec::new();
    for r in runs {
        let Some(c) = &r.summary.checks.contraction else {
            ok = false;
            failures.push(format!("{} seed {}: no contraction data", r.config.label(), r.seed));
            continue;
        };
        worst_step = worst_step.min(c.worst_step_slack);
        worst_written = worst_written.min(c.corollary_slack);
        worst_unrolled = worst_unrolled.min(c.unrolled_corollary_slack);
        if c.worst_step_slack < -1e-8 || c.corollary_slack < -1e-8 {
            ok = false;
            failures.push(format!(
                "{} seed {} (step {:.2e}, cumulative {:.2e})",
                r.config.label(),
                r.seed,
                c.worst_step_slack,
                c.corollary_slack
            ));
        }
    }
    Ok((
        ok,
        format!(
            "{} runs, worst step slack {worst_step:.2e}, worst cumulative slack {worst_written:.2e} \
             (chained per-step bound {worst_unrolled:.2e}){}",
            runs.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failing: {}", failures.join(", "))
            }
        ),
    ))
}

fn criterion_7(runs: &[SuiteRun]) -> Outcome {
    let mut ok = true;
    let mut finals = Vec::new();
    let mut max_secs: f64 = 0.0;
    let mut count = 0;
    for r in runs.iter().filter(|r| r.config.instance.kind.starts_with("smooth")) {
        count += 1;
        let k = r.trace.records.len();
        let v = r.trace.op_norm_at(k).unwrap_or(f64::NAN);
        ok &= r.summary.status == RunStatus::Ok && k == 200 && r.config.instance.n == 10 && v <= 1e-8;
        max_secs = max_secs.max(r.secs);
        finals.push(v);
    }
    ok &= count == 10 && max_secs < 30.0;
    let lo = finals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finals.iter().copied().fold(0.0, f64::max);
    Ok((
        ok,
        format!("{count} runs, final |F| in [{lo:.3e}, {hi:.3e}] after K=200, slowest run {max_secs:.2} s"),
    ))
}

fn criterion_8(runs: &[SuiteRun]) -> Outcome {
    let mut ok = true;
    let mut count = 0;
    let mut min_final = f64::INFINITY;
    let mut max_change: f64 = 0.0;
    for r in runs.iter().filter(|r| r.config.instance.kind == "eg2-subproblem") {
        count += 1;
        let k = r.trace.records.len();
        let (last, earlier) = match (
            r.trace.op_norm_at(k),
            k.checked_sub(20).and_then(|j| r.trace.op_norm_at(j)),
        ) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                ok = false;
                continue;
            }
        };
        let change = (last - earlier).abs() / last;
        min_final = min_final.min(last);
        max_change = max_change.max(change);
        ok &= r.summary.status == RunStatus::Ok && last > 1e-6 && change <= 0.05;
    }
    ok &= count == 10;
    Ok((
        ok,
        format!("{count} runs, smallest final |Phi| {min_final:.3e}, largest relative change over 20 iterations {max_change:.2e}"),
    ))
}

fn criterion_9() -> Outcome {
    let ctx = GeometryContext::default();
    let (f, h) = norelip_pair(1.0, 1.0)?;
    let mut worst: f64 = 0.0;
    for theta in [1.0, 0.1, 0.01] {
        let r = anti_lipschitz_ratio(&ctx, &f, &h, &norelip_triangle(theta))?;
        let d = d_theta(1.0, 1.0, theta)?;
        worst = worst.max((r - d).abs() / d.abs().max(1.0));
    }
    let theta = 1e-3;
    let numeric = anti_lipschitz_ratio(&ctx, &f, &h, &norelip_triangle(theta / 2.0))?
        / anti_lipschitz_ratio(&ctx, &f, &h, &norelip_triangle(theta))?;
    let closed = d_theta(1.0, 1.0, theta / 2.0)? / d_theta(1.0, 1.0, theta)?;
    Ok((
        worst <= 1e-8 && (3.9..=4.1).contains(&closed) && (3.9..=4.1).contains(&numeric),
        format!("max rel. error {worst:.2e}; d(th/2)/d(th) at 1e-3: closed form {closed:.6}, numeric {numeric:.6}"),
    ))
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let name = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                if name.ends_with(".csv") && !name.ends_with(".timing.csv") {
                    out.insert(name, fs::read(&p).unwrap());
                }
            }
        }
    }
    out
}

fn criterion_10() -> Outcome {
    let a = tempfile::tempdir().expect("tempdir");
    let b = tempfile::tempdir().expect("tempdir");
    for cfg in default_suite() {
        run_experiment(&cfg, a.path())?;
        run_experiment(&cfg, b.path())?;
    }
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    let same = !fa.is_empty() && fa == fb;
    let differing = fa.iter().filter(|(k, v)| fb.get(*k) != Some(v)).count();
    Ok((same, format!("{} trace files compared, {differing} differ", fa.len())))
}

fn report(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f));
    let (pass, detail) = match outcome {
        Ok(Ok(v)) => v,
        Ok(Err(e)) => (false, format!("error: {e}")),
        Err(_) => (false, "panicked".to_string()),
    };
    println!(
        "criterion {n:>2} {} {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn main() -> ExitCode {
    let mut pass = true;
    pass &= report(1, "three-point identity", criterion_1);
    pass &= report(2, "divergence positivity", criterion_2);
    pass &= report(3, "quartic saddle certificates", criterion_3);
    pass &= report(4, "closed-form prox vs Newton", criterion_4);
    pass &= report(5, "bilinear ergodic rate", criterion_5);

    let dir = tempfile::tempdir().expect("tempdir");
    let runs = run_suite(dir.path());
    let runs = match runs {
        Ok(r) => Some(r),
        Err(e) => {
            println!("default suite failed to run: {e}");
            None
        }
    };
    let with_runs = |f: fn(&[SuiteRun]) -> Outcome| {
        let runs = runs.as_deref();
        move || match runs {
            Some(r) => f(r),
            None => Ok((false, "default suite unavailable".into())),
        }
    };
    pass &= report(6, "contraction and cumulative bound", with_runs(criterion_6));
    pass &= report(7, "quartic saddle convergence", with_runs(criterion_7));
    pass &= report(8, "sub-problem plateau", with_runs(criterion_8));
    pass &= report(9, "anti-Lipschitz ratio", criterion_9);
    pass &= report(10, "determinism", criterion_10);

    if pass {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria failed");
        ExitCode::FAILURE
    }
}
