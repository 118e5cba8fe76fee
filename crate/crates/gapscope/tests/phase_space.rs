use gapscope::ifs_core::*;
use gapscope::phase_space::*;
use gapscope::Error;
use std::time::Instant;

fn cantor_pair() -> IfsModel {
    make_linear(&[Interval::new(0.05, 0.49), Interval::new(0.55, 0.75)]).unwrap()
}

fn linear_with_roof() -> IfsModel {
    cantor_pair().with_tau(Observable::slopes(vec![0.0, 1.0]))
}

fn gauss_minus_j() -> IfsModel {
    make_gauss(3).unwrap().with_tau(Observable::jacobian(-1.0))
}

#[test]
fn canonical_map_examples() {
    let m = linear_with_roof();
    let x = 0.3;
    let p = canonical_map(&m, 0, 1, PhasePoint::new(x, 0.0)).unwrap();
    assert!((p.x - (0.55 + 0.2 * x)).abs() < 1e-15);
    assert!((p.xi - 1.0).abs() < 1e-15);
    let q = canonical_map(&m, 0, 0, PhasePoint::new(x, -0.07)).unwrap();
    assert!((q.xi - (-0.07 / 0.44)).abs() < 1e-15);
    let z = cantor_pair();
    for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let x = z.intervals[i].mid();
        let p = canonical_map(&z, i, j, PhasePoint::new(x, 0.0)).unwrap();
        assert_eq!(p.xi, 0.0);
    }
    assert!(matches!(canonical_map(&m, 0, 1, PhasePoint::new(0.52, 0.0)), Err(Error::PointOutsideInterval(..))));
}

#[test]
fn escape_radius_examples() {
    assert_eq!(escape_radius(&cantor_pair(), 1.5).unwrap(), 0.0);
    let r = escape_radius(&linear_with_roof(), 1.01).unwrap();
    assert!((r - 1.01 / (1.0 / 0.44 - 1.01)).abs() < 1e-12);
    assert!((r - 0.7997).abs() < 1e-3);
    let h = make_linear_from(0.5, 1.0).unwrap().with_tau(Observable::slopes(vec![0.3, 0.3]));
    let ej = 4.0;
    assert!((escape_radius(&h, 2.0).unwrap() - 2.0 * 0.3 / (ej - 2.0)).abs() < 1e-12);
    assert!(matches!(escape_radius(&h, 4.5), Err(Error::OutOfRange(_))));
    // grid check of the defining property |ξ| > R ⇒ |ξ'| > κ|ξ|
    let m = gauss_minus_j();
    let kappa = 1.3;
    let r = escape_radius(&m, kappa).unwrap();
    for b in &m.branches {
        let iv = m.intervals[b.source];
        for k in 0..=20 {
            let x = iv.lo + iv.width() * k as f64 / 20.0;
            for xi in [r * 1.0001, -r * 1.0001, 3.0 * r, -3.0 * r] {
                let p = canonical_map(&m, b.source, b.target, PhasePoint::new(x, xi)).unwrap();
                assert!(p.xi.abs() > kappa * xi.abs());
            }
        }
    }
}

#[test]
fn zeta_leaf_examples() {
    let m = linear_with_roof();
    let ones = zeta_leaf(&m, &Word::open(vec![0; 41]), 40).unwrap();
    let twos = zeta_leaf(&m, &Word::open(vec![1; 41]), 40).unwrap();
    for x in [0.06, 0.3, 0.48] {
        assert_eq!(ones.value(x).unwrap(), 0.0);
    }
    for x in [0.56, 0.6, 0.74] {
        assert!((twos.value(x).unwrap() + 0.25).abs() < twos.tail_bound.max(1e-15));
        assert!((twos.value(x).unwrap() + 0.25).abs() < 1e-14);
    }
    let z = cantor_pair();
    let leaf = zeta_leaf(&z, &Word::open(vec![0, 1, 1, 0, 1, 0, 0]), 6).unwrap();
    assert_eq!(leaf.value(0.2).unwrap(), 0.0);
    assert!(matches!(zeta_leaf(&m, &Word::open(vec![0; 5]), 6), Err(Error::OutOfRange(_))));
    assert!(matches!(twos.value(0.3), Err(Error::PointOutsideInterval(..))));
}

#[test]
fn zeta_tail_bound_is_certified() {
    for m in [linear_with_roof(), gauss_minus_j()] {
        let n = m.n_symbols();
        for seed in 0..6usize {
            let mut letters = vec![seed % n];
            let mut s = seed;
            while letters.len() < 81 {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                letters.push((s >> 33) % n);
            }
            let w = Word::open(letters);
            let short = zeta_leaf(&m, &w, 20).unwrap();
            let long = zeta_leaf(&m, &w, 80).unwrap();
            let iv = m.intervals[w.letters[0]];
            for k in 0..=8 {
                let x = iv.lo + iv.width() * k as f64 / 8.0;
                let d = (short.value(x).unwrap() - long.value(x).unwrap()).abs();
                assert!(d <= short.tail_bound, "{d} vs {}", short.tail_bound);
            }
        }
    }
}

#[test]
fn code_point_examples() {
    let m = cantor_pair();
    let (x, w) = code_point(&m, &Word::open(vec![0; 41])).unwrap();
    let (fix, _) = periodic_fixed_point(&m, &Word::closed(vec![0])).unwrap();
    assert!((x - 0.05 / 0.56).abs() < 1e-14 && (x - fix).abs() < 1e-14);
    assert!((x - 0.0892857).abs() < 1e-7);
    assert!(w < 1e-14);
    let (x0, w0) = code_point(&m, &Word::open(vec![1])).unwrap();
    assert_eq!((x0, w0), (0.65, 0.75 - 0.55));
    let (x1, w1) = code_point(&m, &Word::open(vec![0, 1])).unwrap();
    assert!(x1 - 0.5 * w1 >= 0.56 - 1e-15 && x1 + 0.5 * w1 <= 0.648 + 1e-15);
    // width shrinks at least like θ^n
    let past: Vec<usize> = (0..12).map(|k| (k * 7 / 3) % 2).collect();
    let (_, wn) = code_point(&m, &Word::open(past.clone())).unwrap();
    assert!(wn <= 0.44f64.powi(11) * m.intervals[past[0]].width() * (1.0 + 1e-12));
}

#[test]
fn leaves_commute_with_the_canonical_map() {
    for m in [linear_with_roof(), gauss_minus_j()] {
        let n = m.n_symbols();
        for seed in 0..8usize {
            let mut s = seed + 11;
            let mut next = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 33) % n
            };
            let past: Vec<usize> = (0..40).map(|_| next()).collect();
            let fut: Vec<usize> = (0..60).map(|_| next()).collect();
            // w = (…, past, w_0 = fut[0], fut[1], …)
            let mut wm = past.clone();
            wm.push(fut[0]);
            if m.check_word(&wm).is_err() || m.check_word(&fut).is_err() {
                continue;
            }
            let (x, _) = code_point(&m, &Word::open(wm.clone())).unwrap();
            let leaf = zeta_leaf(&m, &Word::open(fut[..=50].to_vec()), 50).unwrap();
            let p = canonical_map(&m, fut[0], fut[1], PhasePoint::new(x, leaf.value(x).unwrap())).unwrap();
            let mut wm1 = wm.clone();
            wm1.push(fut[1]);
            let (x1, _) = code_point(&m, &Word::open(wm1)).unwrap();
            let leaf1 = zeta_leaf(&m, &Word::open(fut[1..=50].to_vec()), 49).unwrap();
            assert!((p.x - x1).abs() < 1e-12);
            assert!((p.xi - leaf1.value(x1).unwrap()).abs() < 1e-10);
        }
    }
}

#[test]
fn trapped_points_stay_inside_escape_radius() {
    for m in [linear_with_roof(), gauss_minus_j()] {
        let r = escape_radius(&m, 1.01).unwrap();
        for w in enumerate_words(&m, 7, WordKind::Open) {
            let full = canonical_future(&m, &w.letters, 41);
            let leaf = zeta_leaf(&m, &Word::open(full), 40).unwrap();
            let (x, _) = code_point(&m, &Word::open(m.canonical_past(w.letters[0], 40))).unwrap();
            assert!(leaf.value(x).unwrap().abs() <= r);
        }
    }
}

#[test]
fn captivity_examples() {
    let t = Instant::now();
    let rep = captivity_check(&linear_with_roof(), 0.05, 6, 16).unwrap();
    assert!(rep.passed, "gap {}", rep.min_branch_gap);
    assert!(rep.witnesses.is_empty());
    // the two leaf families sit in [−0.11, 0] and [−0.25, −0.2]
    assert!(rep.min_branch_gap > 0.2 && rep.min_branch_gap < 0.21);
    assert!(t.elapsed().as_secs_f64() < 30.0);

    let t = Instant::now();
    let rep = captivity_check(&cantor_pair(), 0.05, 6, 16).unwrap();
    assert!(!rep.passed);
    assert_eq!(rep.min_branch_gap, 0.0);
    assert!(!rep.witnesses.is_empty());
    assert!(t.elapsed().as_secs_f64() < 30.0);

    let t = Instant::now();
    let rep = captivity_check(&gauss_minus_j(), 0.01, 6, 16).unwrap();
    assert!(rep.passed, "gap {}", rep.min_branch_gap);
    assert!(t.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn separation_examples() {
    let m = cantor_pair();
    let s = separation_distances(&m, &Word::open(vec![0, 0, 0]), &Word::open(vec![1, 0, 0]), 2).unwrap();
    assert_eq!((s.n1, s.n2), (0, 2));
    assert!(s.dzeta.is_none());
    // minimal distance between the branch images φ_{i,j}(I_i)
    let mut gap = f64::INFINITY;
    for (a, b) in [((0, 0), (1, 0)), ((0, 1), (1, 1)), ((0, 0), (0, 1)), ((1, 0), (1, 1))] {
        let (p, q) = (m.image(a.0, a.1), m.image(b.0, b.1));
        gap = gap.min((q.lo - p.hi).max(p.lo - q.hi));
    }
    assert!(gap > 0.0);
    assert!(s.ratio_x >= gap && s.ratio_x >= 0.06);
    assert!(matches!(
        separation_distances(&m, &Word::open(vec![0, 1, 0]), &Word::open(vec![0, 1, 0]), 2),
        Err(Error::IdenticalWords)
    ));
    // differing only in the far end: n₁ = n
    let l = linear_with_roof();
    let s = separation_distances(&l, &Word::open(vec![0, 1, 0, 0, 1, 1]), &Word::open(vec![0, 1, 0, 0, 1, 0]), 5).unwrap();
    assert_eq!((s.n1, s.n2), (5, 0));
    let dz = s.dzeta.unwrap();
    let j = birkhoff(&[0, 1, 0, 0, 1]);
    assert!((s.ratio_zeta.unwrap() - dz * j.exp()).abs() < 1e-12 * s.ratio_zeta.unwrap());
    assert!(s.ratio_zeta.unwrap() > 0.1);
}

fn image_gap(m: &IfsModel) -> f64 {
    let mut gap = f64::INFINITY;
    for a in &m.branches {
        for b in &m.branches {
            if a.target == b.target && a.source != b.source {
                let (p, q) = (m.image(a.source, a.target), m.image(b.source, b.target));
                gap = gap.min((q.lo - p.hi).max(p.lo - q.hi));
            }
        }
    }
    gap
}

fn birkhoff(w: &[usize]) -> f64 {
    let j = [0.44f64.ln().abs(), 5f64.ln()];
    w[1..].iter().map(|&l| j[l]).sum()
}

#[test]
fn separation_ratios_have_uniform_lower_bound() {
    let m = linear_with_roof();
    let mut prev = None;
    for n in 1..=8 {
        let s = separation_survey(&m, n).unwrap();
        assert_eq!(s.pairs, (1usize << (n + 1)) * ((1usize << (n + 1)) - 1));
        assert!(s.min_ratio_x >= image_gap(&m) && s.min_ratio_zeta > 0.01, "n {n}: {s:?}");
        if n >= 6 {
            if let Some((rx, rz)) = prev {
                let (rx, rz): (f64, f64) = (rx, rz);
                assert!((s.min_ratio_x / rx - 1.0).abs() < 0.2 && (s.min_ratio_zeta / rz - 1.0).abs() < 0.2);
            }
        }
        prev = Some((s.min_ratio_x, s.min_ratio_zeta));
    }
    // survey and single pairs agree
    let a = Word::open(vec![1, 0, 1, 1]);
    let b = Word::open(vec![1, 0, 0, 1]);
    let s = separation_distances(&m, &a, &b, 3).unwrap();
    let sv = separation_survey(&m, 3).unwrap();
    assert!(sv.min_ratio_x <= s.ratio_x + 1e-15 && sv.min_ratio_zeta <= s.ratio_zeta.unwrap() + 1e-15);
}
