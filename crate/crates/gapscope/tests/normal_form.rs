use gapscope::ifs_core::{make_gauss, make_linear, make_linear_from, IfsModel, Interval, Observable, Word};
use gapscope::normal_form::*;
use gapscope::phase_space::zeta_leaf;
use gapscope::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn linear() -> IfsModel {
    make_linear_from(0.65, (-1f64).exp())
        .unwrap()
        .with_tau(Observable::slopes(vec![0.0, 1.0]))
        .with_potential(Observable::slopes(vec![0.3, -0.5]))
}

fn gauss2() -> IfsModel {
    make_gauss(2)
        .unwrap()
        .with_tau(Observable::jacobian(-1.0))
        .with_potential(Observable::jacobian(-0.5))
}

fn gauss3() -> IfsModel {
    make_gauss(3)
        .unwrap()
        .with_tau(Observable::jacobian(-1.0))
        .with_potential(Observable::jacobian(-0.5))
}

fn random_word(model: &IfsModel, rng: &mut ChaCha8Rng, past_len: usize, future_len: usize) -> BiWord {
    let n = model.n_symbols();
    let w0 = rng.random_range(0..n);
    let mut past = vec![w0];
    while past.len() < past_len + 1 {
        let cur = *past.last().unwrap();
        let preds: Vec<usize> = (0..n).filter(|&i| model.allowed(i, cur)).collect();
        past.push(preds[rng.random_range(0..preds.len())]);
    }
    past.reverse();
    let mut future = vec![w0];
    while future.len() < future_len {
        let succ: Vec<usize> = model.successors(*future.last().unwrap()).collect();
        future.push(succ[rng.random_range(0..succ.len())]);
    }
    BiWord::new(model, past, future).unwrap()
}

fn grid_on(iv: Interval, n: usize) -> Vec<f64> {
    (0..n).map(|k| iv.lo + iv.width() * k as f64 / (n - 1) as f64).collect()
}

#[test]
fn anchors_on_random_words() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for model in [linear(), gauss3()] {
        for _ in 0..50 {
            let w = random_word(&model, &mut rng, 40, 50);
            let u = upsilon(&model, 0.1, &w, w.x_w, 40).unwrap();
            assert!(u.norm() < 1e-8, "upsilon(x_w) = {u}");
            assert!(h_scatter(&model, &w, 0.0, 40).unwrap().value.abs() < 1e-8);
            let hp = h_prime_at_zero(&model, &w, 40).unwrap();
            assert!((hp - 1.0).abs() < 1e-8, "H'(0) = {hp}");
        }
    }
}

#[test]
fn constant_potential_and_roof_give_zero_upsilon() {
    let m = make_gauss(3)
        .unwrap()
        .with_tau(Observable::constant(0.8))
        .with_potential(Observable::constant(-1.3));
    let w = BiWord::canonical(&m, &[0, 2, 1], 45).unwrap();
    for y in grid_on(m.intervals[0], 17) {
        assert!(upsilon(&m, 0.3, &w, y, 40).unwrap().norm() < 1e-15);
    }
}

#[test]
fn upsilon_rejects_points_outside_first_interval() {
    let m = gauss3();
    let w = BiWord::canonical(&m, &[1], 45).unwrap();
    assert_eq!(upsilon(&m, 0.1, &w, 0.9, 40).unwrap_err(), Error::PointOutsideInterval(0.9, 2));
}

#[test]
fn upsilon_derivative_is_the_stable_leaf() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for model in [linear(), gauss3()] {
        for _ in 0..5 {
            let w = random_word(&model, &mut rng, 40, 45);
            let leaf = zeta_leaf(&model, &Word::open(w.future.clone()), 40).unwrap();
            let iv = model.intervals[w.w0()];
            for y in grid_on(Interval::new(iv.lo + 1e-4, iv.hi - 1e-4), 21) {
                let fd = d_upsilon0(&model, &w, y, 40).unwrap();
                let z = leaf.value(y).unwrap();
                assert!((fd - z).abs() < 1e-6, "d upsilon/dy = {fd}, zeta = {z}");
            }
        }
    }
}

#[test]
fn homological_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for model in [linear(), gauss3()] {
        for _ in 0..10 {
            let w = random_word(&model, &mut rng, 40, 45);
            let lw = w.shift(&model).unwrap();
            let ys = grid_on(model.intervals[w.w0()], 25);
            let tol = upsilon_tail(&model, 0.2, &w, 40) + upsilon_tail(&model, 0.2, &lw, 40) + 1e-13;
            let r = homological_residual(&model, 0.2, &w, &ys, 40).unwrap();
            assert!(r <= tol, "residual {r} > {tol}");
        }
    }
}

#[test]
fn upsilon_is_holder_in_the_word() {
    let model = gauss3();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = random_word(&model, &mut rng, 40, 60);
    let ys = grid_on(model.intervals[w.w0()], 9);
    let mut ks = Vec::new();
    let mut logs = Vec::new();
    for k in (2..=14).step_by(2) {
        let mut future = w.future[..=k].to_vec();
        let last = future[k];
        let alt = model.successors(last).find(|&j| j != w.future[k + 1]).unwrap();
        future.push(alt);
        let future = gapscope::phase_space::canonical_future(&model, &future, 60);
        let wp = BiWord::new(&model, w.past.clone(), future).unwrap();
        let d = upsilon_distance(&model, 0.1, &w, &wp, &ys, 55).unwrap();
        assert!(d > 0.0);
        ks.push(k as f64);
        logs.push(d.ln());
    }
    let n = ks.len() as f64;
    let (mk, ml) = (ks.iter().sum::<f64>() / n, logs.iter().sum::<f64>() / n);
    let slope = ks.iter().zip(&logs).map(|(k, l)| (k - mk) * (l - ml)).sum::<f64>()
        / ks.iter().map(|k| (k - mk) * (k - mk)).sum::<f64>();
    let c = ks.iter().zip(&logs).map(|(k, l)| l - k * model.theta.ln()).fold(f64::MIN, f64::max).exp();
    assert!(slope <= model.theta.ln() + 0.05, "slope {slope}, theta {}", model.theta);
    for (k, l) in ks.iter().zip(&logs) {
        assert!(l.exp() <= c * model.theta.powf(*k) * (1.0 + 1e-12));
    }
}

#[test]
fn linear_model_scatter_is_identity() {
    let m = linear();
    let w = BiWord::canonical(&m, &[0, 1, 1, 0], 50).unwrap();
    let r = admissible_radius(&m, &w, 40).unwrap();
    for z in symmetric_grid(r, 11) {
        for n in [1, 5, 20, 40] {
            let s = h_scatter(&m, &w, z, n).unwrap();
            assert!((s.value - z).abs() < 1e-15 * (1.0 + z.abs()) * 4.0, "H({z}) = {}", s.value);
        }
    }
    let zs = symmetric_grid(r, 15);
    assert!(conjugation_residual(&m, &w, &zs, 40).unwrap() < 1e-14);
}

#[test]
fn gauss_scattering_converges() {
    let m = make_gauss(2).unwrap();
    let w = BiWord::periodic(&m, &[0, 1], 50).unwrap();
    let a = h_scatter(&m, &w, 0.01, 30).unwrap().value;
    let b = h_scatter(&m, &w, 0.01, 40).unwrap();
    assert!((a - b.value).abs() < 1e-12, "gap {}", (a - b.value).abs());
    assert!(b.cauchy_gap < 1e-12);
    assert!((b.value - 0.01).abs() > 1e-6);
    assert_eq!(h_scatter(&m, &w, 0.0, 40).unwrap().value, 0.0);
}

#[test]
fn gauss_conjugation_residual() {
    let m = make_gauss(2).unwrap();
    let w = BiWord::periodic(&m, &[0, 1], 50).unwrap();
    let lw = w.shift(&m).unwrap();
    let d1 = m.branch(0, 1).deriv(w.x_w).abs();
    let r = admissible_radius(&m, &w, 40).unwrap().min(admissible_radius(&m, &lw, 40).unwrap() / d1);
    let zs = symmetric_grid(r, 21);
    let r40 = conjugation_residual(&m, &w, &zs, 40).unwrap();
    let r10 = conjugation_residual(&m, &w, &zs, 10).unwrap();
    assert!(r40 < 1e-10, "residual {r40}");
    assert!(r10 > r40, "{r10} vs {r40}");
}

#[test]
fn scattering_leaves_domain_outside_neighbourhood() {
    let m = make_gauss(2).unwrap();
    let w = BiWord::periodic(&m, &[0, 1], 50).unwrap();
    assert!(matches!(h_scatter(&m, &w, 5.0, 40), Err(Error::OutsideDomain(_))));
}

#[test]
fn transfer_conjugation_trivial_linear() {
    let m = make_linear(&[Interval::new(0.0, 0.3), Interval::new(0.5, 0.9)]).unwrap();
    let w = BiWord::canonical(&m, &[0, 1, 0], 50).unwrap();
    let r = admissible_radius(&m, &w, 40).unwrap();
    let test = TestFunction::Bump { center: w.x_w, radius: 0.3 * m.intervals[0].width() };
    let d = transfer_conjugation_check(&m, 0.1, &w, &test, &symmetric_grid(0.5 * r, 21), 40).unwrap();
    assert!(d < 1e-13, "defect {d}");
}

#[test]
fn transfer_conjugation_linear_with_roof() {
    let m = make_linear_from(0.65, (-1f64).exp()).unwrap().with_tau(Observable::slopes(vec![0.0, 1.0]));
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..5 {
        let w = random_word(&m, &mut rng, 40, 50);
        let r = admissible_radius(&m, &w, 40).unwrap();
        let iv = m.intervals[w.w0()];
        for test in [
            TestFunction::Gaussian { center: w.x_w, width: 0.1 * iv.width() },
            TestFunction::Bump { center: w.x_w, radius: 0.3 * iv.width() },
        ] {
            let d = transfer_conjugation_check(&m, 0.1, &w, &test, &symmetric_grid(0.5 * r, 31), 40).unwrap();
            assert!(d < 1e-8, "defect {d}");
        }
    }
}

#[test]
fn transfer_conjugation_gauss() {
    let m = gauss2();
    let w = BiWord::periodic(&m, &[0, 1], 50).unwrap();
    let r = admissible_radius(&m, &w, 40).unwrap();
    let iv = m.intervals[w.w0()];
    let test = TestFunction::Gaussian { center: w.x_w, width: 0.1 * iv.width() };
    let d = transfer_conjugation_check(&m, 0.5, &w, &test, &symmetric_grid(0.5 * r, 31), 40).unwrap();
    assert!(d < 1e-6, "defect {d}");
}

#[test]
fn iterated_transfer_conjugation() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for m in [linear(), gauss3()] {
        let w = random_word(&m, &mut rng, 40, 50);
        let r = admissible_radius(&m, &w, 40).unwrap();
        let iv = m.intervals[w.w0()];
        let test = TestFunction::Gaussian { center: w.x_w, width: 0.1 * iv.width() };
        let zs = symmetric_grid(0.5 * r, 21);
        let one = transfer_conjugation_defect(&m, 0.5, &w, 1, &test, &zs, 40).unwrap();
        let three = transfer_conjugation_defect(&m, 0.5, &w, 3, &test, &zs, 40).unwrap();
        assert!(one < 1e-8 && three < 1e-8, "defects {one}, {three}");
    }
}

#[test]
fn normal_form_data_summary() {
    let m = gauss3();
    let w = BiWord::canonical(&m, &[0, 2, 1], 50).unwrap();
    let nf = normal_form_data(&m, 0.1, &w, 40, 17).unwrap();
    assert_eq!(nf.upsilon.len(), 17);
    assert!(nf.upsilon_at_x_w < 1e-12);
    assert!(nf.h_at_0.abs() < 1e-15);
    assert!((nf.h_prime_at_0 - 1.0).abs() < 1e-8);
    assert!(nf.conjugation_residual < 1e-10);
    for (_, _, _, zeta, fd) in &nf.upsilon {
        assert!((zeta - fd).abs() < 1e-6);
    }
}

fn chi() -> ChiSpec {
    ChiSpec { y0: 1.0, lambda0: 1.0 }
}

fn gaussian0() -> TestFunction {
    TestFunction::Gaussian { center: 0.1, width: 0.04 }
}

#[test]
fn dilation_slopes() {
    let lambdas: Vec<f64> = (0..=12).map(|k| 2.0 + 0.5 * k as f64).collect();
    for (d, m) in [(0usize, 2.0), (1, 3.0)] {
        let rep = dilation_check(0.01, &lambdas, d, m, &chi(), &gaussian0()).unwrap();
        assert!(rep.residual_norms.iter().all(|r| *r > 0.0));
        assert!(rep.fitted_slope <= -(d as f64 + 2.0) + 0.15, "slope {}", rep.fitted_slope);
    }
}

#[test]
fn dilation_hbar_scaling() {
    for d in [0usize, 1] {
        let m = d as f64 + 2.0;
        let a = dilation_expansion_residual(0.01, 6.0, d, m, &chi(), &gaussian0()).unwrap().value;
        let b = dilation_expansion_residual(0.02, 6.0, d, m, &chi(), &gaussian0()).unwrap().value;
        let want = 2f64.powf(-(d as f64 + 1.5));
        assert!(((b / a) / want - 1.0).abs() < 0.2, "ratio {} want {want}", b / a);
    }
}

#[test]
fn dilation_vanishing_moments() {
    let odd = TestFunction::GaussianDerivative { center: 0.0, width: 0.05 };
    let mut prev = f64::INFINITY;
    for lambda in [2.0, 4.0, 6.0, 8.0] {
        let r = dilation_expansion_residual(0.01, lambda, 0, 2.0, &chi(), &odd).unwrap().value;
        let plain = dilation_norm(0.01, lambda, 2.0, &chi(), &odd).unwrap().value;
        assert!((r / plain - 1.0).abs() < 1e-8, "{r} vs {plain}");
        assert!(r < prev);
        prev = r;
    }
    assert!(prev < 1e-3);
}

#[test]
fn dilation_argument_checks() {
    let g = gaussian0();
    assert!(matches!(dilation_expansion_residual(0.01, 3.0, 1, 2.5, &chi(), &g), Err(Error::OutOfRange(_))));
    assert!(matches!(dilation_expansion_residual(0.01, 0.5, 0, 2.0, &chi(), &g), Err(Error::OutOfRange(_))));
    assert!(matches!(dilation_expansion_residual(0.0, 3.0, 0, 2.0, &chi(), &g), Err(Error::OutOfRange(_))));
}

#[test]
fn dilation_report_records_window() {
    let r = dilation_expansion_residual(0.01, 4.0, 0, 2.0, &chi(), &gaussian0()).unwrap();
    assert!(r.window > 1.0 && r.step > 0.0 && r.value > 0.0);
}
