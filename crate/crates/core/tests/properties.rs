use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use convext::convexity::{check_midpoint_convexity, joint_check};
use convext::extension::{
    extend_affine, extend_convex, extend_mixture, extend_zero, ExtendOptions, MixtureSpec,
    SofteningParams,
};
use convext::extremal::{extremal_function, log_laplace};
use convext::integrals::{log_integral, normalization_gap, prekopa_marginal};
use convext::transforms::{
    biconjugate, convex_envelope, legendre_transform, legendre_transform_direct, padded_dual_spec, slope_range,
};
use convext::{AffineFunction, Axis, GridFunction, GridSpec, ProductGridFunction};

fn line(lo: f64, hi: f64, n: usize) -> GridSpec {
    GridSpec::line(lo, hi, n).unwrap()
}

prop_compose! {
    fn axis()(lo in -3.0..1.0f64, width in 0.5..4.0f64, count in 2usize..12) -> Axis {
        Axis::new(lo, lo + width, count).unwrap()
    }
}

prop_compose! {
    fn small_spec()(axes in prop::collection::vec(axis(), 1..=2)) -> GridSpec {
        GridSpec::new(axes).unwrap()
    }
}

prop_compose! {
    fn function_on(spec: GridSpec)(values in prop::collection::vec(-5.0..5.0f64, spec.len())) -> GridFunction {
        GridFunction::new(spec.clone(), values).unwrap()
    }
}

fn any_function() -> impl Strategy<Value = GridFunction> {
    small_spec().prop_flat_map(function_on)
}

/// Random convex closed form: a PSD quadratic plus a max of affines.
#[derive(Clone, Debug)]
struct ConvexForm {
    b: Vec<f64>,
    pieces: Vec<(Vec<f64>, f64)>,
    dim: usize,
}

impl ConvexForm {
    fn eval(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut quad = 0.0;
        for r in 0..d {
            let y: f64 = (0..d).map(|c| self.b[r * d + c] * x[c]).sum();
            quad += y * y;
        }
        let quad: f64 = 0.5 * quad + 0.25 * x.iter().map(|v| v * v).sum::<f64>();
        let hinge = self
            .pieces
            .iter()
            .map(|(a, c)| a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + c)
            .fold(f64::NEG_INFINITY, f64::max);
        quad + hinge
    }
}

fn convex_form(dim: usize) -> impl Strategy<Value = ConvexForm> {
    (
        prop::collection::vec(-1.0..1.0f64, dim * dim),
        prop::collection::vec((prop::collection::vec(-1.0..1.0f64, dim), -1.0..1.0f64), 1..=3),
    )
        .prop_map(move |(b, pieces)| ConvexForm { b, pieces, dim })
}

fn max_affine(dim: usize) -> impl Strategy<Value = Vec<(Vec<f64>, f64)>> {
    prop::collection::vec((prop::collection::vec(-2.0..2.0f64, dim), -1.0..1.0f64), 1..=4)
}

fn eval_max_affine(pieces: &[(Vec<f64>, f64)], x: &[f64]) -> f64 {
    pieces
        .iter()
        .map(|(a, c)| a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + c)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// A jointly convex weight on `[-1, 1] x [-5, 5]`, normalized at `t = 0`.
fn normalized_weight(form: &ConvexForm, nt: usize, nx: usize) -> ProductGridFunction {
    let phi = ProductGridFunction::from_fn(line(-1.0, 1.0, nt), line(-5.0, 5.0, nx), |t, x| {
        form.eval(&[t[0], x[0]])
    })
    .unwrap();
    let m = prekopa_marginal(&phi).unwrap();
    let anchor = phi.t_zero_index().unwrap();
    phi.shift(-m.value(anchor)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eval_is_exact_at_nodes(f in any_function()) {
        for i in 0..f.spec().len() {
            prop_assert_eq!(f.eval(&f.spec().coords(i)).unwrap(), f.value(i));
        }
    }

    #[test]
    fn algebra_commutes_with_eval_at_nodes(
        f in any_function(),
        c in -3.0..3.0f64,
        s in 0.0..3.0f64,
        a in prop::collection::vec(-2.0..2.0f64, 2),
        b in -1.0..1.0f64,
    ) {
        let spec = f.spec().clone();
        let affine = AffineFunction::new(a[..spec.dim()].to_vec(), b).unwrap();
        let g = f.shift(c).unwrap();
        let h = f.scale(s).unwrap();
        let k = f.tilt(&affine).unwrap();
        let sum = f.add(&g).unwrap();
        for i in 0..spec.len() {
            let x = spec.coords(i);
            prop_assert_eq!(g.eval(&x).unwrap(), f.value(i) + c);
            prop_assert_eq!(h.eval(&x).unwrap(), s * f.value(i));
            prop_assert_eq!(k.eval(&x).unwrap(), f.value(i) - affine.eval(&x));
            prop_assert_eq!(sum.eval(&x).unwrap(), f.value(i) + g.value(i));
        }
    }

    #[test]
    fn sampled_convex_forms_pass_the_check(
        spec in small_spec(),
        form in convex_form(2),
        pieces in max_affine(2),
        seed in any::<u64>(),
    ) {
        let dim = spec.dim();
        let form = ConvexForm { b: form.b[..dim * dim].to_vec(), pieces: form.pieces.iter().map(|(a, c)| (a[..dim].to_vec(), *c)).collect(), dim };
        let f = GridFunction::from_fn(spec.clone(), |x| form.eval(x)).unwrap();
        prop_assert_eq!(check_midpoint_convexity(&f, 500, seed).unwrap().worst_violation, 0.0);
        let pieces: Vec<_> = pieces.iter().map(|(a, c)| (a[..dim].to_vec(), *c)).collect();
        let g = GridFunction::from_fn(spec, |x| eval_max_affine(&pieces, x)).unwrap();
        prop_assert_eq!(check_midpoint_convexity(&g, 500, seed).unwrap().worst_violation, 0.0);
    }

    #[test]
    fn jointly_affine_maxima_pass_the_joint_check(
        t_axis in axis(),
        x_spec in small_spec(),
        pieces in max_affine(3),
        seed in any::<u64>(),
    ) {
        let t_spec = GridSpec::new(vec![t_axis]).unwrap();
        let n = 1 + x_spec.dim();
        let pieces: Vec<_> = pieces.iter().map(|(a, c)| (a[..n].to_vec(), *c)).collect();
        let f = ProductGridFunction::from_fn(t_spec, x_spec, |t, x| {
            let z: Vec<f64> = t.iter().chain(x).copied().collect();
            eval_max_affine(&pieces, &z)
        }).unwrap();
        prop_assert_eq!(joint_check(&f, 500, seed).unwrap().worst_violation, 0.0);
    }

    #[test]
    fn conjugation_reverses_order(f in any_function(), bump in prop::collection::vec(0.0..2.0f64, 144)) {
        let spec = f.spec().clone();
        let g = GridFunction::new(spec.clone(), f.values().iter().zip(&bump).map(|(v, b)| v + b).collect()).unwrap();
        let dual = GridSpec::uniform(spec.dim(), -3.0, 3.0, 9).unwrap();
        let fs = legendre_transform(&f, &dual).unwrap();
        let gs = legendre_transform(&g, &dual).unwrap();
        for i in 0..dual.len() {
            prop_assert!(fs.value(i) >= gs.value(i));
        }
    }

    #[test]
    fn tilt_shifts_the_conjugate(f in any_function(), k in prop::collection::vec(-4i32..=4, 2)) {
        let spec = f.spec().clone();
        let dim = spec.dim();
        // tilt slopes on the dual lattice so shifted nodes are shared
        let step = 0.25;
        let a: Vec<f64> = k[..dim].iter().map(|&k| k as f64 * step).collect();
        let dual = GridSpec::uniform(dim, -4.0, 4.0, 33).unwrap();
        let fs = legendre_transform(&f, &dual).unwrap();
        let ts = legendre_transform(&f.tilt(&AffineFunction::new(a.clone(), 0.0).unwrap()).unwrap(), &dual).unwrap();
        let counts = dual.counts();
        for j in 0..dual.len() {
            let idx = dual.index_of(j);
            let shifted: Vec<i64> = idx.iter().zip(&k).map(|(&i, &k)| i as i64 + k as i64).collect();
            if shifted.iter().zip(&counts).all(|(&s, &n)| s >= 0 && (s as usize) < n) {
                let sidx: Vec<usize> = shifted.iter().map(|&s| s as usize).collect();
                let expected = fs.value(dual.ravel(&sidx));
                prop_assert!((ts.value(j) - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
            }
        }
    }

    #[test]
    fn envelope_is_idempotent(f in any_function()) {
        let dual = padded_dual_spec(&f).unwrap();
        let once = convex_envelope(&f, &dual).unwrap();
        let twice = convex_envelope(&once, &dual).unwrap();
        prop_assert!(once.sup_distance(&twice).unwrap() <= 1e-9);
    }

    #[test]
    fn fast_conjugate_matches_direct(f in any_function(), lo in -4.0..0.0f64, width in 0.5..6.0f64, count in 2usize..15) {
        let dual = GridSpec::uniform(f.spec().dim(), lo, lo + width, count).unwrap();
        let fast = legendre_transform(&f, &dual).unwrap();
        let direct = legendre_transform_direct(&f, &dual).unwrap();
        for i in 0..dual.len() {
            prop_assert!((fast.value(i) - direct.value(i)).abs() <= 1e-12 * (1.0 + direct.value(i).abs()));
        }
    }

    #[test]
    fn biconjugate_of_convex_is_close(spec in small_spec(), form in convex_form(2)) {
        let dim = spec.dim();
        let form = ConvexForm { b: form.b[..dim * dim].to_vec(), pieces: form.pieces.iter().map(|(a, c)| (a[..dim].to_vec(), *c)).collect(), dim };
        let f = GridFunction::from_fn(spec.clone(), |x| form.eval(x)).unwrap();
        let bi = biconjugate(&f).unwrap();
        let h = spec.steps().into_iter().fold(0.0, f64::max);
        let range = slope_range(&f).unwrap().into_iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
        prop_assert!(bi.sup_distance(&f).unwrap() <= 2.0 * h * range + 1e-12);
    }

    #[test]
    fn log_integral_is_cash_invariant_and_monotone(f in any_function(), c in -50.0..50.0f64, bump in prop::collection::vec(0.0..1.0f64, 144)) {
        let base = log_integral(&f).unwrap();
        prop_assert!(base.underflow_fraction < 1.0);
        let shifted = log_integral(&f.shift(c).unwrap()).unwrap().value;
        prop_assert!((shifted - base.value - c).abs() <= 1e-12 * (1.0 + c.abs()));
        let g = GridFunction::new(f.spec().clone(), f.values().iter().zip(&bump).map(|(v, b)| v + b).collect()).unwrap();
        prop_assert!(log_integral(&g).unwrap().value >= base.value);
    }

    #[test]
    fn prekopa_marginals_are_convex(form in convex_form(2)) {
        let phi = ProductGridFunction::from_fn(line(-1.0, 1.0, 21), line(-5.0, 5.0, 101), |t, x| form.eval(&[t[0], x[0]])).unwrap();
        let m = prekopa_marginal(&phi).unwrap();
        prop_assert!(check_midpoint_convexity(&m, 200, 0).unwrap().worst_violation <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn log_laplace_is_convex(form in convex_form(1)) {
        let phi = GridFunction::from_fn(line(-6.0, 6.0, 121), |x| form.eval(x)).unwrap();
        let z = log_laplace(&phi, &line(-4.0, 4.0, 81)).unwrap();
        prop_assert!(check_midpoint_convexity(&z, 500, 0).unwrap().worst_violation <= 1e-9);
    }

    #[test]
    fn extremal_is_convex_cash_invariant_and_monotone(form in convex_form(1), c in -20.0..20.0f64, extra in max_affine(1)) {
        let spec = line(-6.0, 6.0, 121);
        let phi = GridFunction::from_fn(spec.clone(), |x| form.eval(x)).unwrap();
        let dual = line(-6.0, 6.0, 241);
        let e = extremal_function(&phi, &dual).unwrap().e;
        prop_assert!(check_midpoint_convexity(&e, 500, 0).unwrap().worst_violation <= 1e-6);
        let shifted = extremal_function(&phi.shift(c).unwrap(), &dual).unwrap().e;
        for (a, b) in e.values().iter().zip(shifted.values()) {
            prop_assert!((b - a - c).abs() <= 1e-9);
        }
        // adding a nonnegative convex function raises the weight
        let bigger = GridFunction::from_fn(spec, |x| form.eval(x) + eval_max_affine(&extra, x).max(0.0)).unwrap();
        let e2 = extremal_function(&bigger, &dual).unwrap().e;
        for (a, b) in e.values().iter().zip(e2.values()) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn zero_slope_affine_is_the_zero_extension(form in convex_form(2)) {
        let phi = normalized_weight(&form, 9, 81);
        let o = ExtendOptions { check_samples: 200, ..Default::default() };
        let z = extend_zero(&phi, &o).unwrap();
        let a = extend_affine(&AffineFunction::zero(1), &phi, &o).unwrap();
        prop_assert_eq!(&z.psi, &a.psi);
        prop_assert!(z.max_residual.abs() <= 1e-9);
        prop_assert!(z.joint_convexity.worst_violation <= 1e-6);
    }

    #[test]
    fn rescaled_mixture_shifts_by_log_s(
        form in convex_form(2),
        comps in prop::collection::vec((-1.5..1.5f64, -1.0..1.0f64, -2.0..2.0f64), 1..5),
        log_s in -5.0..5.0f64,
    ) {
        let phi = normalized_weight(&form, 7, 61);
        let nodes = comps.iter().map(|(a, b, _)| AffineFunction::new(vec![*a], *b).unwrap()).collect();
        let mix = MixtureSpec::new(nodes, comps.iter().map(|c| c.2).collect()).unwrap();
        let o = ExtendOptions { check_samples: 200, ..Default::default() };
        let base = extend_mixture(&mix, &phi, &o).unwrap();
        let scaled = extend_mixture(&mix.shifted(log_s), &phi, &o).unwrap();
        for (a, b) in base.psi.values().iter().zip(scaled.psi.values()) {
            prop_assert!((b - a - log_s).abs() <= 1e-9);
        }
        prop_assert!(base.joint_convexity.worst_violation <= 1e-6);
    }
}

fn convex_psi(pieces: &[(Vec<f64>, f64)], spec: &GridSpec) -> GridFunction {
    GridFunction::from_fn(spec.clone(), |x| eval_max_affine(pieces, x)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn extension_is_translation_equivariant(form in convex_form(2), pieces in max_affine(1), v in -2.0..2.0f64) {
        let phi = normalized_weight(&form, 5, 61);
        let psi = convex_psi(&pieces, phi.x_spec());
        let params = SofteningParams::new(3.0, line(-3.0, 3.0, 31)).unwrap();
        let o = ExtendOptions { tol: 1e-12, max_iter: 25, check_samples: 200, seed: 0 };
        let r = extend_convex(&psi, &phi, &params, &o).unwrap();
        // same samples on a moved x-grid: phi(t, x - v) and psi(x - v)
        let moved_x = phi.x_spec().translated(&[v]).unwrap();
        let phi_v = ProductGridFunction::new(phi.t_spec().clone(), moved_x.clone(), phi.values().to_vec()).unwrap();
        let psi_v = GridFunction::new(moved_x, psi.values().to_vec()).unwrap();
        let rv = extend_convex(&psi_v, &phi_v, &params, &o).unwrap();
        for (a, b) in r.psi.values().iter().zip(rv.psi.values()) {
            prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn extension_is_cash_invariant(form in convex_form(2), pieces in max_affine(1), c in -10.0..10.0f64) {
        let phi = normalized_weight(&form, 5, 61);
        let psi = convex_psi(&pieces, phi.x_spec());
        let params = SofteningParams::new(3.0, line(-3.0, 3.0, 31)).unwrap();
        let o = ExtendOptions { tol: 1e-12, max_iter: 25, check_samples: 200, seed: 0 };
        let r = extend_convex(&psi, &phi, &params, &o).unwrap();
        let rc = extend_convex(&psi, &phi.shift(c).unwrap(), &params, &o).unwrap();
        for (a, b) in r.psi.values().iter().zip(rc.psi.values()) {
            prop_assert!((b - a - c).abs() <= 1e-9);
        }
        prop_assert!((r.normalization_shift - c - rc.normalization_shift).abs() <= 1e-9);
    }

    #[test]
    fn lambda_one_needs_a_single_step(form in convex_form(2), pieces in max_affine(1)) {
        let phi = normalized_weight(&form, 5, 61);
        let psi = convex_psi(&pieces, phi.x_spec());
        let params = SofteningParams::new(1.0, line(-3.0, 3.0, 31)).unwrap();
        let o = ExtendOptions { check_samples: 200, ..Default::default() };
        let r = extend_convex(&psi, &phi, &params, &o).unwrap();
        let tr = r.trace.unwrap();
        prop_assert!(tr.converged);
        prop_assert!(tr.iterations <= 1);
        prop_assert!(r.max_residual <= 1e-9);
        prop_assert!(r.joint_convexity.worst_violation <= 1e-6);
    }

    #[test]
    fn no_t_variables_means_identity(form in convex_form(1), pieces in max_affine(1)) {
        let x = line(-5.0, 5.0, 61);
        let phi = ProductGridFunction::from_fn(GridSpec::point(), x.clone(), |_, x| form.eval(x)).unwrap();
        let psi = convex_psi(&pieces, &x);
        let params = SofteningParams::new(10.0, line(-3.0, 3.0, 31)).unwrap();
        let r = extend_convex(&psi, &phi, &params, &ExtendOptions::default()).unwrap();
        let c = normalization_gap(&psi, &phi.slice(0)).unwrap();
        prop_assert_eq!(r.normalization_shift, c);
        prop_assert_eq!(r.psi.slice(0), psi.shift(-c).unwrap());
    }

    #[test]
    fn holder_trace_respects_the_geometric_bound(form in convex_form(2), pieces in max_affine(1), lambda in 1.0..8.0f64) {
        let phi = normalized_weight(&form, 5, 61);
        let psi = convex_psi(&pieces, phi.x_spec());
        let params = SofteningParams::new(lambda, line(-3.0, 3.0, 31)).unwrap();
        let o = ExtendOptions { tol: 1e-9, max_iter: 400, check_samples: 200, seed: 0 };
        let r = extend_convex(&psi, &phi, &params, &o).unwrap();
        let tr = r.trace.unwrap();
        for (a, b) in tr.log_a.iter().zip(&tr.theoretical) {
            prop_assert!(*a <= b + 1e-9);
        }
        prop_assert!(tr.converged);
        prop_assert!(r.joint_convexity.worst_violation <= 1e-6);
        assert_abs_diff_eq!(r.psi.slice(phi.t_zero_index().unwrap()).value(0), r.psi.slice_values(phi.t_zero_index().unwrap())[0]);
    }
}
