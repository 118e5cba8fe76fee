use gapscope::gap_bounds::*;
use gapscope::ifs_core::*;
use gapscope::Error;

fn cantor_pair() -> IfsModel {
    make_linear(&[Interval::new(0.05, 0.49), Interval::new(0.55, 0.75)]).unwrap()
}

fn linear(delta: f64, omega: f64, a: f64) -> IfsModel {
    make_linear_from(delta, omega).unwrap().with_potential(Observable::jacobian(1.0 - a))
}

// δ on the γ_Gibbs = γ_sc curve of the V = 0 family, by bisection on
// e^{−δJ₁} + e^{−δJ₂} = 1 with J₁ = 2 log(1+ω), J₂ = J₁ − log ω
fn triple_delta(omega: f64) -> f64 {
    let j1 = 2.0 * (1.0 + omega).ln();
    let j2 = j1 - omega.ln();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if (-m * j1).exp() + (-m * j2).exp() > 1.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    lo
}

#[test]
fn homogeneous_closed_forms() {
    let h = 2f64.ln();
    for delta in [0.3, 0.5, 0.65, 0.8] {
        let jh = h / delta;
        for a in [0.0, 0.5, 1.0, 2.0] {
            let m = linear(delta, 1.0, a);
            let r = gap_report(&m).unwrap();
            assert!((r.gamma_gibbs - h * (1.0 - a / delta)).abs() < 1e-10);
            assert!((r.gamma_conj - h * (0.5 - a / delta)).abs() < 1e-10);
            assert!((r.gamma_sc - h * (0.5 - a) / delta).abs() < 1e-10);
            assert!((r.beta0 - delta).abs() < 1e-10);
            assert!((r.j_avg - jh).abs() < 1e-10);
            assert!((r.delta - delta).abs() < 1e-10);
            let (up, case) = gamma_up(&m).unwrap();
            if delta >= 0.5 {
                assert_eq!(case, Bound::Up);
                assert!((up - h * (0.5 + (0.25 - a) / delta)).abs() < 1e-10);
            } else {
                assert_eq!(case, Bound::Gibbs);
                assert!((up - r.gamma_gibbs).abs() < 1e-14);
            }
            assert!((gamma_jc(&m, jh).unwrap() - (r.gamma_conj + jh / 4.0)).abs() < 1e-10);
        }
    }
}

#[test]
fn half_dimension_triple_point() {
    let m = linear(0.5, 1.0, 1.0);
    let r = gap_report(&m).unwrap();
    let l2 = 2f64.ln();
    for g in [r.gamma_gibbs, r.gamma_sc, r.gamma_up] {
        assert!((g + l2).abs() < 1e-10);
    }
    assert!((r.beta0 - 0.5).abs() < 1e-10);
    assert!(r.up_case_applicable);
}

#[test]
fn cantor_pair_values() {
    let m = cantor_pair();
    let (j1, j2) = (0.44f64.ln().abs(), 5f64.ln());
    assert!((gamma_gibbs(&m).unwrap() - (0.64f64).ln()).abs() < 1e-12);
    assert!((gamma_gibbs(&m).unwrap() + 0.44629).abs() < 1e-5);
    assert!((gamma_conj(&m).unwrap() - 0.5 * 0.2336f64.ln()).abs() < 1e-12);
    assert!((gamma_conj(&m).unwrap() + 0.7271).abs() < 1e-4);
    let ja = j_average(&m).unwrap();
    assert!(ja > j1 && ja < j2);
    // β₀ as an independent bisection on (s₁^{2−β}+s₂^{2−β}) = (s₁+s₂)²
    let f = |b: f64| 0.44f64.powf(2.0 - b) + 0.2f64.powf(2.0 - b) - 0.64f64.powi(2);
    let (mut lo, mut hi) = (0.0, 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b = beta0_solve(&m).unwrap();
    assert!((b - lo).abs() < 1e-10);
    let diff = 0.44f64.powf(2.0 - b) + 0.2f64.powf(2.0 - b);
    assert!((diff.ln() - 2.0 * 0.64f64.ln()).abs() < 1e-10);
}

#[test]
fn sc_is_exact_at_period_one_for_linear_models() {
    let m = cantor_pair();
    let (j1, j2) = (0.44f64.ln().abs(), 5f64.ln());
    for a in [0.0, 0.3, 0.5, 1.0, 2.0] {
        let m = m.clone().with_potential(Observable::jacobian(1.0 - a));
        let want = if a >= 0.5 { (0.5 - a) * j1 } else { (0.5 - a) * j2 };
        assert!((gamma_sc(&m, 1).unwrap() - want).abs() < 1e-12);
        assert!((gamma_sc(&m, 8).unwrap() - want).abs() < 1e-12);
    }
    let half = m.with_potential(Observable::jacobian(0.5));
    assert!(gamma_sc(&half, 6).unwrap().abs() < 1e-14);
}

#[test]
fn shifted_potential_keeps_average() {
    let m = cantor_pair().with_potential(Observable::jacobian(0.3));
    let shifted = m.clone().with_potential(Observable::jacobian(0.3).add(&Observable::constant(-0.7)));
    assert!((j_average(&m).unwrap() - j_average(&shifted).unwrap()).abs() < 1e-10);
    let g = make_gauss(3).unwrap();
    let gs = g.clone().with_potential(Observable::constant(0.4));
    assert!((j_average(&g).unwrap() - j_average(&gs).unwrap()).abs() < 1e-8);
}

#[test]
fn report_invariants() {
    let models = [
        cantor_pair(),
        cantor_pair().with_potential(Observable::jacobian(0.6)),
        make_gauss(3).unwrap(),
        make_linear_from(0.65, (-1f64).exp()).unwrap(),
        make_gauss(2).unwrap().with_potential(Observable::slopes(vec![0.1, -0.2])),
    ];
    for m in &models {
        let r = gap_report(m).unwrap();
        assert!(r.gamma_conj <= r.gamma_gibbs + 1e-8);
        assert!(r.j_avg >= r.j_min - 1e-8 && r.j_avg <= r.j_max + 1e-8);
        if r.up_case_applicable {
            assert!((r.gamma_up - (r.gamma_conj + r.j_avg / 4.0)).abs() < 1e-14);
        } else {
            assert_eq!(r.gamma_up, r.gamma_gibbs);
        }
    }
}

#[test]
fn low_beta_falls_back_to_gibbs() {
    // homogeneous with δ < ½ has β₀ = δ < ½
    let m = linear(0.3, 1.0, 1.0);
    let (v, case) = gamma_up(&m).unwrap();
    assert_eq!(case, Bound::Gibbs);
    assert_eq!(v, gamma_gibbs(&m).unwrap());
}

#[test]
fn v_zero_family_beats_gibbs_and_sc() {
    for omega in [0.3, 0.5, 0.7] {
        let d = triple_delta(omega);
        let m = linear(d, omega, 1.0);
        let r = gap_report(&m).unwrap();
        assert!((r.gamma_gibbs - r.gamma_sc).abs() < 1e-9, "omega {omega}");
        assert!(r.beta0 > 0.5);
        assert!(r.up_case_applicable);
        assert!(r.gamma_up < r.gamma_gibbs.min(r.gamma_sc));
        let cell = classify_cell(1.0, d, omega);
        assert_eq!(cell.label, Some(Bound::Up));
    }
}

#[test]
fn gamma_jc_branches_meet_at_average() {
    for m in [cantor_pair(), make_gauss(3).unwrap(), linear(0.65, (-1f64).exp(), 0.0)] {
        let b = Bounds::new(&m);
        let ja = b.j_average().unwrap();
        let left = ja / 4.0 - 0.5 * ja * b.beta0().unwrap() + b.gamma_gibbs().unwrap();
        let right = ja / 4.0 + b.gamma_conj().unwrap();
        assert!((left - right).abs() < 1e-9);
        let (jmin, _) = j_extremes(&m, 8).unwrap();
        if ja < 2.0 * jmin {
            assert!((gamma_jc(&m, ja).unwrap() - right).abs() < 1e-9);
        }
        let small = gamma_jc(&m, 1e-9).unwrap();
        assert!((small - b.gamma_gibbs().unwrap()).abs() < 1e-8);
    }
}

#[test]
fn gamma_jc_range_is_enforced() {
    let m = cantor_pair();
    let jmin = 0.44f64.ln().abs();
    assert!(matches!(gamma_jc(&m, 0.0), Err(Error::OutOfRange(_))));
    assert!(matches!(gamma_jc(&m, 2.0 * jmin + 1e-6), Err(Error::OutOfRange(_))));
}

#[test]
fn grid_minimum_is_gamma_up() {
    for m in [cantor_pair(), linear(0.65, (-1f64).exp(), 1.0), make_gauss(3).unwrap()] {
        let r = gap_report(&m).unwrap();
        if !r.up_case_applicable {
            continue;
        }
        let c = gamma_curve(&m, 1e-3, 2.0 * r.j_min - 1e-3, 200).unwrap();
        let min = c.gamma_of_jc.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((min - r.gamma_up).abs() < 1e-6, "{min} vs {}", r.gamma_up);
        assert!(min >= r.gamma_up - 1e-12);
        assert!(c.j1_star < r.j_avg && r.j_avg < c.j2_star);
    }
}

#[test]
fn closed_form_matches_numeric_minimum_of_v() {
    let m = cantor_pair();
    let b = Bounds::new(&m);
    let (jmin, jmax) = (0.44f64.ln().abs(), 5f64.ln());
    let grid: Vec<f64> = (1..2000).map(|k| jmin + (jmax - jmin) * k as f64 / 2000.0).collect();
    let v1: Vec<f64> = grid.iter().map(|&jb| b.v1(jb).unwrap()).collect();
    let g = b.gamma_gibbs().unwrap();
    for jc in [0.3, 0.9, 1.1, 1.3, 1.6] {
        let mut min = f64::INFINITY;
        for (jb, v) in grid.iter().zip(&v1) {
            let v = if *jb <= jc { *v } else { jc / jb * (v + 2.0 * g) - 2.0 * g };
            min = min.min(v);
        }
        let numeric = jc / 4.0 - 0.5 * min;
        let closed = gamma_jc(&m, jc).unwrap();
        assert!((numeric - closed).abs() < 1e-5, "J_c {jc}: {numeric} vs {closed}");
    }
}

#[test]
fn direct_estimator_homogeneous() {
    let m = linear(0.65, 1.0, 1.0);
    let jh = 2f64.ln() / 0.65;
    for jc in [0.5 * jh, jh, 1.5 * jh] {
        let d = gamma_jc_direct(&m, jc, 14).unwrap();
        let c = gamma_jc(&m, jc).unwrap();
        assert!((d - c).abs() < 0.05, "J_c {jc}: {d} vs {c}");
    }
}

#[test]
fn direct_estimator_unconstrained_limit() {
    let m = cantor_pair();
    let jc = 5f64.ln() + 0.01;
    for n in [6, 10] {
        let d = gamma_jc_direct(&m, jc, n).unwrap();
        let want = jc / 4.0 + (2f64.ln() + n as f64 * 0.2336f64.ln()) / (2.0 * n as f64);
        assert!((d - want).abs() < 1e-12);
    }
}

#[test]
fn direct_estimator_converges_on_cantor_pair() {
    let m = cantor_pair();
    let ja = j_average(&m).unwrap();
    let c = gamma_jc(&m, ja).unwrap();
    let g10 = (gamma_jc_direct(&m, ja, 10).unwrap() - c).abs();
    let g14 = (gamma_jc_direct(&m, ja, 14).unwrap() - c).abs();
    assert!(g14 < g10, "{g14} vs {g10}");
    assert!(g14 < 0.05);
    assert!(matches!(gamma_jc_direct(&make_gauss(3).unwrap(), 1.0, 15), Err(Error::EnumerationTooLarge(_))));
}

#[test]
fn classify_rows() {
    let deltas = [0.2, 0.35, 0.45, 0.55, 0.7, 0.8];
    for a in [0.0, 0.7, 1.0, 1.5] {
        let pd = classify(a, &deltas, &[1.0]);
        for c in &pd.cells {
            assert!(c.feasible);
            let want = if c.delta < 0.5 { Bound::Gibbs } else { Bound::Sc };
            assert_eq!(c.label, Some(want), "a {a} delta {}", c.delta);
        }
    }
    let omegas = [0.2, 0.4, 0.6, 0.8, 1.0];
    let pd = classify(0.5, &deltas, &omegas);
    assert_eq!(pd.cells.len(), deltas.len() * omegas.len());
    for c in pd.cells.iter().filter(|c| c.feasible) {
        assert_ne!(c.label, Some(Bound::Up));
    }
    let tri = classify_cell(1.0, 0.5, 1.0);
    assert!(tri.tie && tri.label == Some(Bound::Gibbs));
    let bad = classify_cell(1.0, 0.999, 0.999);
    assert!(!bad.feasible && bad.label.is_none());
}

#[test]
fn direct_estimator_matches_word_enumeration() {
    // literal loop over all w_{0,n} of the full two-letter shift
    let m = cantor_pair();
    let s = [0.44f64, 0.2];
    let n = 10;
    for jc in [0.6, 1.0, 1.3] {
        let mut sum = 0.0;
        for code in 0..(1usize << (n + 1)) {
            let w: Vec<usize> = (0..=n).map(|i| (code >> i) & 1).collect();
            let mut jk = 0.0;
            let mut nstar = 0;
            for k in 1..=n {
                jk += -s[w[k]].ln();
                if jk < n as f64 * jc {
                    nstar = k;
                } else {
                    break;
                }
            }
            let head: f64 = (1..=nstar).map(|k| s[w[k]]).product();
            let tail: f64 = (nstar + 1..=n).map(|k| s[w[k]]).product();
            sum += head * head * tail * 0.64f64.powi((n - nstar) as i32);
        }
        let want = jc / 4.0 + sum.ln() / (2.0 * n as f64);
        assert!((gamma_jc_direct(&m, jc, n).unwrap() - want).abs() < 1e-12);
    }
}
