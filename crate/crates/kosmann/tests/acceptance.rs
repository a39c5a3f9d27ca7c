//! End-to-end acceptance checks. Each numbered criterion prints a single
//! pass/fail line so a full run reads as a short scorecard.

use std::time::Instant;

use kosmann::cli::{load_scenario, random_tensor_field, run_checks, RunOptions, SplitMix64};
use kosmann::expr::{parse, C64, Expr, Point};
use kosmann::geometry::{mat4_eval, Frame, FrameContext, FrameKind, Metric};
use kosmann::lie::{
    kosmann_derivative, kosmann_lift, lie_derivative_frame, max_abs, max_residual, s_tensor,
    to_holonomic, LiftVariant, VectorField,
};
use kosmann::spin::{expm, spin_lift_w, spin_to_lorentz, SpinContext};

fn mat_max_abs(m: &kosmann::geometry::Mat4, p: &Point) -> f64 {
    mat4_eval(m, p)
        .unwrap()
        .iter()
        .flatten()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

fn scenario_path(name: &str) -> String {
    format!("{}/scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

fn report(number: usize, label: &str, pass: bool) {
    println!(
        "ACCEPTANCE {number}: {label} ... {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "acceptance criterion {number} ({label}) failed");
}

fn minkowski_names() -> [String; 4] {
    ["t", "x", "y", "z"].map(str::to_string)
}

fn minkowski_ctx() -> FrameContext {
    let names = minkowski_names();
    let eta = kosmann::geometry::minkowski();
    FrameContext::new(
        names,
        Metric::new(eta, &minkowski_names()).unwrap(),
        Frame::new(FrameKind::Orthonormal, kosmann::geometry::mat4_identity(), true),
    )
}

fn ex(src: &str) -> Expr {
    parse(src, &minkowski_names()).unwrap()
}

fn sample_points(seed: u64, n: usize) -> Vec<Point> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|_| Point::new(std::array::from_fn(|_| rng.next_in(-1.0, 1.0))))
        .collect()
}

/// Structure transport: the metric-compatible derivative annihilates the
/// frame metric, the spinor metric and the soldering field on curved and
/// flat scenarios alike, for generators that are not isometries.
#[test]
fn criterion_1_structure_annihilation() {
    let started = Instant::now();
    let mut pass = true;
    for name in ["minkowski-cartesian", "minkowski-spherical", "schwarzschild"] {
        let s = load_scenario(&scenario_path(name)).unwrap();
        let points = s.sample_points(None, None);
        assert_eq!(points.len(), 32);

        // At least five generators must genuinely move the metric.
        let mut non_killing = 0;
        for (_, x) in &s.vector_fields {
            let st = s_tensor(x, &s.ctx);
            let worst = points
                .iter()
                .map(|p| mat_max_abs(&st, p))
                .fold(0.0f64, f64::max);
            if worst > 1e-3 {
                non_killing += 1;
            }
        }
        pass &= non_killing >= 5;

        let reports = run_checks(&s, "theorem81", &RunOptions::default()).unwrap();
        pass &= reports.iter().all(|r| r.pass && r.max_residual < 1e-9);
    }
    pass &= started.elapsed().as_secs_f64() < 10.0;
    report(1, "structure fields annihilated on all geometries", pass);
}

/// Isometry degeneration: for flat-space Killing generators the
/// difference tensor vanishes and the metric derivative reduces to the
/// ordinary Lie derivative; generic generators have a sizable difference
/// tensor.
#[test]
fn criterion_2_killing_degeneration() {
    let ctx = minkowski_ctx();
    let killing: Vec<VectorField> = vec![
        // four translations
        VectorField::new([ex("1"), ex("0"), ex("0"), ex("0")]),
        VectorField::new([ex("0"), ex("1"), ex("0"), ex("0")]),
        VectorField::new([ex("0"), ex("0"), ex("1"), ex("0")]),
        VectorField::new([ex("0"), ex("0"), ex("0"), ex("1")]),
        // three rotations
        VectorField::new([ex("0"), ex("-y"), ex("x"), ex("0")]),
        VectorField::new([ex("0"), ex("0"), ex("-z"), ex("y")]),
        VectorField::new([ex("0"), ex("z"), ex("0"), ex("-x")]),
        // three boosts
        VectorField::new([ex("x"), ex("t"), ex("0"), ex("0")]),
        VectorField::new([ex("y"), ex("0"), ex("t"), ex("0")]),
        VectorField::new([ex("z"), ex("0"), ex("0"), ex("t")]),
    ];
    assert_eq!(killing.len(), 10);
    let points = sample_points(7, 8);
    let mut rng = SplitMix64::new(20260826);
    let pool: Vec<_> = (0..3).map(|_| random_tensor_field(2, 2, &mut rng)).collect();

    let mut pass = true;
    for x in &killing {
        let st = s_tensor(x, &ctx);
        for p in &points {
            pass &= mat_max_abs(&st, p) < 1e-12;
        }
        for t in &pool {
            let metric_compatible = kosmann_derivative(x, t, &ctx);
            let ordinary = lie_derivative_frame(x, t, &ctx);
            for p in &points {
                pass &= max_residual(&metric_compatible, &ordinary, p).unwrap() < 1e-9;
            }
        }
    }
    for x in [
        VectorField::new([ex("t^2"), ex("0"), ex("0"), ex("0")]),
        VectorField::new([ex("0"), ex("x^2"), ex("0"), ex("0")]),
        VectorField::new([ex("t"), ex("x"), ex("y"), ex("z")]),
    ] {
        let st = s_tensor(&x, &ctx);
        let worst = points
            .iter()
            .map(|p| mat_max_abs(&st, p))
            .fold(0.0f64, f64::max);
        pass &= worst > 1e-3;
    }
    report(2, "isometries degenerate to the ordinary derivative", pass);
}

/// Flow oracle: the ordinary Lie derivative of (1,0), (0,1) and (1,1)
/// fields matches a second-order pullback difference quotient, with the
/// expected quadratic convergence.
#[test]
fn criterion_3_flow_oracle() {
    let s = load_scenario(&scenario_path("minkowski-cartesian")).unwrap();
    let types: Vec<(usize, usize)> = s
        .tensor_fields
        .iter()
        .map(|(_, t)| (t.up, t.down))
        .collect();
    let mut pass = [(1, 0), (0, 1), (1, 1)]
        .iter()
        .all(|ty| types.contains(ty));

    let reports = run_checks(&s, "oracle", &RunOptions::default()).unwrap();
    for r in &reports {
        if r.name.starts_with("error.") {
            pass &= r.pass && r.max_residual <= 1e-4;
        } else {
            // slope residual is |slope - 2|; within [1.8, 2.2]
            pass &= r.pass && r.max_residual <= 0.2;
        }
    }
    report(3, "flow oracle confirms the derivative to second order", pass);
}

/// Commutator closure: the bracket defect of two metric derivatives is
/// the action of the commutator of their difference tensors, and the
/// curvature-style combination of difference tensors collapses to it.
#[test]
fn criterion_4_commutator_closure() {
    let s = load_scenario(&scenario_path("minkowski-cartesian")).unwrap();
    let reports = run_checks(&s, "commutator", &RunOptions::default()).unwrap();
    let pairs = reports.iter().filter(|r| r.name.starts_with("defect.")).count();
    let pass = pairs >= 3 && reports.iter().all(|r| r.pass && r.max_residual < 1e-8);
    report(4, "commutator defect closes on difference tensors", pass);
}

/// Spinor transport: the induced spinor matrix is symmetric when
/// lowered, equivariant under the soldering pair, agrees with the
/// covariant-derivative path, and the spin structure fields are
/// covariantly constant — on every bundled scenario.
#[test]
fn criterion_5_spinor_transport() {
    let mut pass = true;
    for name in [
        "minkowski-cartesian",
        "minkowski-spherical",
        "schwarzschild",
        "conformally-flat",
    ] {
        let s = load_scenario(&scenario_path(name)).unwrap();
        let reports = run_checks(&s, "spin", &RunOptions::default()).unwrap();
        pass &= !reports.is_empty() && reports.iter().all(|r| r.pass);
    }
    report(5, "spinor transport consistent on all geometries", pass);
}

/// Plain frame transport on spinors: the spinor metric is constant, the
/// soldering field moves by the symmetric part of the generator's
/// gradient, and the frame metric moves by the ordinary Lie derivative.
#[test]
fn criterion_6_natural_variant() {
    let opts = RunOptions {
        variant: LiftVariant::Natural,
        ..RunOptions::default()
    };
    let mut pass = true;
    for name in [
        "minkowski-cartesian",
        "minkowski-spherical",
        "schwarzschild",
        "conformally-flat",
    ] {
        let s = load_scenario(&scenario_path(name)).unwrap();
        let reports = run_checks(&s, "spin", &opts).unwrap();
        pass &= !reports.is_empty() && reports.iter().all(|r| r.pass && r.max_residual < 1e-9);
    }
    report(6, "plain frame transport moves structures as expected", pass);
}

/// Two-to-one covering: diagonal spinor families map onto boosts and
/// rotations, the identity maps to the identity, and exponentiated lifts
/// match to second order in the parameter.
#[test]
fn criterion_7_spin_covering() {
    let ctx = minkowski_ctx();
    let sc = SpinContext::canonical(&ctx);
    let p = Point::new([0.3, -0.2, 0.5, 0.1]);
    let mut pass = true;

    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let id = spin_to_lorentz([[one, zero], [zero, one]], &sc, &p).unwrap();
    for n in 0..4 {
        for m in 0..4 {
            let want = if n == m { 1.0 } else { 0.0 };
            pass &= (id[n][m] - want).abs() < 1e-10;
        }
    }

    for lam in [0.3, 0.9, 1.5] {
        let s = [
            [C64::new((lam / 2.0f64).exp(), 0.0), zero],
            [zero, C64::new((-lam / 2.0f64).exp(), 0.0)],
        ];
        let b = spin_to_lorentz(s, &sc, &p).unwrap();
        pass &= (b[0][0] - lam.cosh()).abs() < 1e-10;
        pass &= (b[3][3] - lam.cosh()).abs() < 1e-10;
        pass &= (b[0][3].abs() - lam.sinh().abs()).abs() < 1e-10;
        pass &= (b[1][1] - 1.0).abs() < 1e-10 && (b[2][2] - 1.0).abs() < 1e-10;
    }
    for th in [0.4, 1.1, 2.0] {
        let s = [
            [C64::new(0.0, th / 2.0).exp(), zero],
            [zero, C64::new(0.0, -th / 2.0).exp()],
        ];
        let r = spin_to_lorentz(s, &sc, &p).unwrap();
        pass &= (r[0][0] - 1.0).abs() < 1e-10 && (r[3][3] - 1.0).abs() < 1e-10;
        pass &= (r[1][1] - th.cos()).abs() < 1e-10;
        pass &= (r[2][2] - th.cos()).abs() < 1e-10;
        pass &= (r[1][2].abs() - th.sin().abs()).abs() < 1e-10;
    }

    // exp(eps W) maps to I + eps V + O(eps^2): fit the error slope.
    let x = VectorField::new([ex("t"), ex("x*sin(y)"), ex("t*x"), ex("1")]);
    let v = kosmann_lift(&x, &ctx);
    let w = spin_lift_w(&v, &ctx, &sc);
    let wp: [[C64; 2]; 2] =
        std::array::from_fn(|i| std::array::from_fn(|j| w[i][j].evaluate(&p).unwrap()));
    let vp: [[C64; 4]; 4] =
        std::array::from_fn(|i| std::array::from_fn(|j| v[i][j].evaluate(&p).unwrap()));
    let eps_list = [1e-1, 5e-2, 2.5e-2];
    let mut errs = Vec::new();
    for eps in eps_list {
        let se: [[C64; 2]; 2] =
            std::array::from_fn(|i| std::array::from_fn(|j| wp[i][j] * eps));
        let lam = spin_to_lorentz(expm(se), &sc, &p).unwrap();
        let mut err = 0.0f64;
        for n in 0..4 {
            for m in 0..4 {
                let first_order = if n == m { 1.0 } else { 0.0 } + eps * vp[n][m].re;
                err = err.max((lam[n][m] - first_order).abs());
            }
        }
        errs.push(err);
    }
    let slope = kosmann::lie::fit_slope(&eps_list, &errs);
    pass &= slope >= 1.8;
    report(7, "spinor families cover the frame transformations", pass);
}

/// Frame independence: the metric derivative computed through a tetrad
/// agrees with the same derivative computed holonomically, on every
/// bundled scenario.
#[test]
fn criterion_8_frame_equivalence() {
    let mut pass = true;
    for name in [
        "minkowski-cartesian",
        "minkowski-spherical",
        "schwarzschild",
        "conformally-flat",
    ] {
        let s = load_scenario(&scenario_path(name)).unwrap();
        let ctx_hol = FrameContext::holonomic(s.names.clone(), s.ctx.metric.clone());
        let points = s.sample_points(Some(8), None);
        for (_, x) in &s.vector_fields {
            let x_hol = VectorField::from_tensor(&to_holonomic(&x.as_tensor(), &s.ctx.frame));
            for (_, t_frame) in &s.tensor_fields {
                let t_hol = to_holonomic(t_frame, &s.ctx.frame);
                let via_tetrad =
                    to_holonomic(&kosmann_derivative(x, t_frame, &s.ctx), &s.ctx.frame);
                let direct = kosmann_derivative(&x_hol, &t_hol, &ctx_hol);
                for p in &points {
                    pass &= max_residual(&via_tetrad, &direct, p).unwrap() < 1e-8;
                }
            }
            // the difference tensor itself is frame-covariant: its
            // trace-free antisymmetric data contracts identically
            let g_frame = s.ctx.g_frame_tensor();
            let annihilated = kosmann_derivative(x, &g_frame, &s.ctx);
            let g_hol = ctx_hol.g_frame_tensor();
            let annihilated_hol = kosmann_derivative(&x_hol, &g_hol, &ctx_hol);
            for p in &points {
                pass &= max_abs(&annihilated, p).unwrap() < 1e-9;
                pass &= max_abs(&annihilated_hol, p).unwrap() < 1e-9;
            }
        }
    }
    report(8, "tetrad and holonomic computations agree", pass);
}
