use super::*;
use crate::hilbert::enumerate_basis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy)]
enum Op {
    P,
    X,
}

/// Applies a literal operator string (rightmost factor first) to a bit
/// pattern on the unconstrained ring.
fn apply_string(ops: &[(i64, Op)], bits: u32, l: usize) -> Option<u32> {
    let mut s = bits;
    for &(site, op) in ops.iter().rev() {
        let j = site.rem_euclid(l as i64) as u32;
        match op {
            Op::P if s >> j & 1 == 1 => return None,
            Op::P => {}
            Op::X => s ^= 1 << j,
        }
    }
    Some(s)
}

/// Dense matrix of a sum of operator strings, projected onto the constrained space.
fn literal_matrix(basis: &ConstrainedBasis, strings: &[Vec<(i64, Op)>]) -> Vec<Vec<f64>> {
    let n = basis.dim();
    let mut m = vec![vec![0.0; n]; n];
    for (a, &s) in basis.states().iter().enumerate() {
        for ops in strings {
            if let Some(t) = apply_string(ops, s, basis.sites()) {
                if let Some(b) = basis.index_of(t) {
                    m[b][a] += 1.0;
                }
            }
        }
    }
    m
}

fn assert_matches(h: &SparseHamiltonian, want: &[Vec<f64>]) {
    let d = h.to_dense();
    for (r, row) in want.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            assert_eq!(d[(r, c)], v, "entry ({r}, {c})");
        }
    }
}

use Op::{P, X};

fn pxp_strings(l: usize) -> Vec<Vec<(i64, Op)>> {
    (0..l as i64).map(|j| vec![(j - 1, P), (j, X), (j + 1, P)]).collect()
}

#[test]
fn pxp_matches_literal_strings() {
    for l in [4, 5, 8] {
        let b = enumerate_basis(l).unwrap();
        assert_matches(&build_pxp(&b), &literal_matrix(&b, &pxp_strings(l)));
    }
}

#[test]
fn z2pert_matches_literal_strings() {
    let l = 8;
    let strings: Vec<_> = (0..l as i64)
        .flat_map(|j| {
            [
                vec![(j - 2, P), (j - 1, P), (j, X), (j + 1, P)],
                vec![(j - 2, P), (j - 1, X), (j, P), (j + 1, P)],
            ]
        })
        .collect();
    let b = enumerate_basis(l).unwrap();
    assert_matches(&build_term(&b, TermName::Z2Pert).unwrap(), &literal_matrix(&b, &strings));
}

#[test]
fn z3perts_match_literal_strings() {
    let l = 12;
    let b = enumerate_basis(l).unwrap();
    let ns = 0..(l / 3) as i64;
    let v1: Vec<_> = ns
        .clone()
        .flat_map(|n| {
            let m = 3 * n;
            [
                vec![(m - 2, P), (m - 1, X), (m, P), (m + 1, P)],
                vec![(m - 1, P), (m, P), (m + 1, X), (m + 2, P)],
                vec![(m - 1, P), (m, X), (m + 1, P), (m + 2, P)],
                vec![(m - 2, P), (m - 1, P), (m, X), (m + 1, P)],
            ]
        })
        .collect();
    let v2: Vec<_> = ns
        .clone()
        .flat_map(|n| {
            let m = 3 * n;
            [
                vec![(m, P), (m + 1, P), (m + 2, X), (m + 3, P)],
                vec![(m, P), (m + 1, X), (m + 2, P), (m + 3, P)],
            ]
        })
        .collect();
    let v3: Vec<_> = ns
        .flat_map(|n| {
            let m = 3 * n;
            [
                vec![(m, P), (m + 1, X), (m + 2, X), (m + 3, X), (m + 4, P)],
                vec![(m - 1, P), (m, X), (m + 1, X), (m + 2, X), (m + 3, P)],
            ]
        })
        .collect();
    assert_matches(&build_term(&b, TermName::Z3Pert1).unwrap(), &literal_matrix(&b, &v1));
    assert_matches(&build_term(&b, TermName::Z3Pert2).unwrap(), &literal_matrix(&b, &v2));
    assert_matches(&build_term(&b, TermName::Z3Pert3).unwrap(), &literal_matrix(&b, &v3));
}

#[test]
fn pxp_examples() {
    let b4 = enumerate_basis(4).unwrap();
    let h4 = build_pxp(&b4);
    let row: Vec<_> = h4.row(0).collect();
    assert_eq!(row.len(), 4);
    assert!(row.iter().all(|&(c, v)| v == 1.0 && b4.states()[c].count_ones() == 1));

    // every edge of the single-flip graph appears twice
    let b6 = enumerate_basis(6).unwrap();
    let edges = (0..b6.dim())
        .flat_map(|a| (0..b6.dim()).map(move |c| (a, c)))
        .filter(|&(a, c)| a < c && (b6.states()[a] ^ b6.states()[c]).count_ones() == 1)
        .count();
    assert_eq!(build_pxp(&b6).nnz(), 2 * edges);

    let b8 = enumerate_basis(8).unwrap();
    let z2 = b8.index(b8.special_config(StateTag::Z2).unwrap()).unwrap();
    assert_eq!(build_pxp(&b8).row(z2).count(), 4);
}

#[test]
fn z2pert_on_z2_reaches_single_down_flips() {
    let b = enumerate_basis(8).unwrap();
    let z2 = b.special_state(StateTag::Z2).unwrap();
    let z2bits = b.special_config(StateTag::Z2).unwrap().bits();
    let out = build_term(&b, TermName::Z2Pert).unwrap().matvec(&z2).unwrap();
    for (i, a) in out.amplitudes().iter().enumerate() {
        if a.norm() > 0.0 {
            let s = b.states()[i];
            assert_eq!((s ^ z2bits).count_ones(), 1);
            assert_eq!(s & z2bits, s);
        }
    }
    // every up site of Z2 has up sites at distance two, so the term annihilates it
    assert_eq!(out.norm(), 0.0);
}

#[test]
fn sigma_terms_exchange_complementary_windows() {
    let l = 8;
    let b = enumerate_basis(l).unwrap();
    for width in [3usize, 5] {
        let h = build_term(&b, TermName::sigma(width).unwrap()).unwrap();
        assert!(h.nnz() > 0);
        for (r, c, v) in h.entries() {
            assert_eq!(v, 1.0);
            let (s, t) = (b.states()[r], b.states()[c]);
            let diff = s ^ t;
            assert_eq!(diff.count_ones() as usize, width);
            assert_eq!((s.count_ones() as i64 - t.count_ones() as i64).abs(), 1);
            // the differing sites form one contiguous window with both flanks down
            let start = (0..l).find(|&i| (0..width).all(|k| diff >> ((i + k) % l) & 1 == 1)).unwrap();
            let (left, right) = ((start + l - 1) % l, (start + width) % l);
            for x in [s, t] {
                assert_eq!(x >> left & 1, 0);
                assert_eq!(x >> right & 1, 0);
            }
        }
    }
}

#[test]
fn sigma3_literal_window_pairs() {
    // …0 101 0… ↔ …0 010 0… on sites i−1..i+3
    let l = 8;
    let b = enumerate_basis(l).unwrap();
    let h = build_term(&b, TermName::Sigma(3)).unwrap();
    let mut want = vec![vec![0.0; b.dim()]; b.dim()];
    for (a, &s) in b.states().iter().enumerate() {
        for (c, &t) in b.states().iter().enumerate() {
            for i in 0..l {
                let bit = |x: u32, k: usize| x >> ((i + k) % l) & 1;
                let win = |x: u32| (0..5).map(|k| bit(x, k)).collect::<Vec<_>>();
                let outside = (0..l).filter(|&j| (j + l - i) % l >= 5).all(|j| s >> j & 1 == t >> j & 1);
                let (ws, wt) = (win(s), win(t));
                let pair = (ws == [0, 1, 0, 1, 0] && wt == [0, 0, 1, 0, 0])
                    || (ws == [0, 0, 1, 0, 0] && wt == [0, 1, 0, 1, 0]);
                if outside && pair {
                    want[c][a] += 1.0;
                }
            }
        }
    }
    assert_matches(&h, &want);
}

#[test]
fn z3pert1_on_vacuum() {
    // every site is flippable from the vacuum; coefficients are 2 on 3j sites and 1 elsewhere
    let b = enumerate_basis(6).unwrap();
    let v = b.special_state(StateTag::Vacuum).unwrap();
    let out = build_term(&b, TermName::Z3Pert1).unwrap().matvec(&v).unwrap();
    assert!((out.norm() - 12f64.sqrt()).abs() < 1e-14);
}

#[test]
fn applicability_errors() {
    let b8 = enumerate_basis(8).unwrap();
    assert!(matches!(build_term(&b8, TermName::Z3Pert1), Err(Error::Configuration(_))));
    assert!(matches!(build_term(&b8, TermName::Sigma(9)), Err(Error::Configuration(_))));
    assert!(build_term(&b8, TermName::Sigma(7)).unwrap().nnz() > 0);
    assert!("sigma4".parse::<TermName>().is_err());
    assert!("sigma15".parse::<TermName>().is_err());
    assert!("nope".parse::<TermName>().is_err());
}

#[test]
fn term_names_round_trip() {
    for name in ["pxp", "z2pert", "z3pert1", "z3pert2", "z3pert3", "sigma3", "sigma13"] {
        assert_eq!(name.parse::<TermName>().unwrap().to_string(), name);
    }
}

#[test]
fn assemble_zero_strengths_is_pxp() {
    let b = enumerate_basis(12).unwrap();
    let mut cfg = ModelConfig::new(12, StateTag::Z2);
    cfg.terms.insert(TermName::Z2Pert, 0.0);
    cfg.terms.insert(TermName::Z3Pert2, 0.0);
    assert_eq!(assemble(&b, &cfg).unwrap(), build_pxp(&b));
}

#[test]
fn pxp_strength_is_fixed() {
    let b = enumerate_basis(8).unwrap();
    let cfg = ModelConfig::new(8, StateTag::Z2).with_term(TermName::Pxp, 2.0);
    assert!(matches!(assemble(&b, &cfg), Err(Error::Configuration(_))));
    let cfg = ModelConfig::new(8, StateTag::Z2).with_term(TermName::Z2Pert, f64::NAN);
    assert!(assemble(&b, &cfg).is_err());
}

fn check_ladder(b: &ConstrainedBasis, cfg: &ModelConfig, scheme: Scheme) -> LadderPair {
    let lp = ladder_split(b, cfg, scheme).unwrap();
    let h = assemble(b, cfg).unwrap();
    assert_eq!(lp.hminus.max_abs_diff(&lp.hplus.transpose()).unwrap(), 0.0);
    assert!(lp.full().max_abs_diff(&h).unwrap() < 1e-12);
    let v0 = b.special_state(scheme.initial_tag()).unwrap();
    assert!(lp.hminus.matvec(&v0).unwrap().norm() < 1e-12);
    assert_eq!(lp.reference_state(), v0);
    lp
}

#[test]
fn ladder_invariants_all_schemes() {
    let b8 = enumerate_basis(8).unwrap();
    let b12 = enumerate_basis(12).unwrap();
    let b14 = enumerate_basis(14).unwrap();

    let lp = check_ladder(&b8, &ModelConfig::new(8, StateTag::Z2), Scheme::Z2);
    let z2p = b8.special_state(StateTag::Z2Prime).unwrap();
    assert!(lp.hplus.matvec(&z2p).unwrap().norm() < 1e-12);
    check_ladder(&b8, &ModelConfig::new(8, StateTag::Z2).with_term(TermName::Z2Pert, 0.108), Scheme::Z2);

    let lp = check_ladder(&b8, &ModelConfig::new(8, StateTag::Vacuum), Scheme::Vacuum);
    for tag in [StateTag::Z2, StateTag::Z2Prime] {
        assert_eq!(lp.hplus.matvec(&b8.special_state(tag).unwrap()).unwrap().norm(), 0.0);
    }
    let long_range = ModelConfig::new(14, StateTag::Vacuum)
        .with_term(TermName::Sigma(3), 0.31)
        .with_term(TermName::Sigma(5), 0.23)
        .with_term(TermName::Sigma(7), 0.2)
        .with_term(TermName::Sigma(9), 0.18)
        .with_term(TermName::Sigma(11), 0.19)
        .with_term(TermName::Sigma(13), 0.01);
    check_ladder(&b14, &long_range, Scheme::Vacuum);

    let z3 = ModelConfig::new(12, StateTag::Z3)
        .with_term(TermName::Z3Pert1, 0.18244)
        .with_term(TermName::Z3Pert2, -0.10390)
        .with_term(TermName::Z3Pert3, 0.05445);
    check_ladder(&b12, &z3, Scheme::Z3);
    check_ladder(&b12, &ModelConfig::z3exact(12), Scheme::Z3Exact);
}

#[test]
fn z3_split_matches_displayed_sublattice_form() {
    // H̄⁺ = Σ σ̃⁻_{3j} + σ̃⁺_{3j+1} + σ̃⁺_{3j+2}
    let b = enumerate_basis(12).unwrap();
    let lp = ladder_split(&b, &ModelConfig::new(12, StateTag::Z3), Scheme::Z3).unwrap();
    for (r, c, _) in build_pxp(&b).entries() {
        let (t, s) = (b.states()[r], b.states()[c]);
        let j = (s ^ t).trailing_zeros();
        let raising = t >> j & 1 == 1;
        let in_plus = if j % 3 == 0 { !raising } else { raising };
        assert_eq!(lp.hplus.get(r, c) != 0.0, in_plus);
    }
}

#[test]
fn vacuum_sigma3_raising_coefficients() {
    let (l, h) = (10usize, 0.31);
    let b = enumerate_basis(l).unwrap();
    let cfg = ModelConfig::new(l, StateTag::Vacuum).with_term(TermName::Sigma(3), h);
    let lp = ladder_split(&b, &cfg, Scheme::Vacuum).unwrap();
    let ones: Vec<f64> = b.states().iter().map(|s| if s.count_ones() == 1 { 1.0 } else { 0.0 }).collect();
    let v1 = StateVector::from_real(&ones).normalized().unwrap();
    let out = lp.hplus.matvec(&v1).unwrap();
    let sq = (l as f64).sqrt();
    for (i, a) in out.amplitudes().iter().enumerate() {
        let s = b.states()[i];
        if s.count_ones() != 2 {
            assert_eq!(a.norm(), 0.0);
            continue;
        }
        let nearest = (0..l).any(|j| s >> j & 1 == 1 && s >> ((j + 2) % l) & 1 == 1);
        let want = if nearest { (2.0 + h) / sq } else { 2.0 / sq };
        assert!((a.re - want).abs() < 1e-14, "state {s:b}");
    }
}

#[test]
fn ladder_errors() {
    let b8 = enumerate_basis(8).unwrap();
    let cfg = ModelConfig::new(8, StateTag::Vacuum).with_term(TermName::Z2Pert, 0.1);
    assert!(matches!(ladder_split(&b8, &cfg, Scheme::Vacuum), Err(Error::UnsupportedSplit { .. })));
    let cfg = ModelConfig::new(8, StateTag::Z2);
    assert!(matches!(ladder_split(&b8, &cfg, Scheme::Vacuum), Err(Error::Configuration(_))));
    let b12 = enumerate_basis(12).unwrap();
    let cfg = ModelConfig::new(12, StateTag::Z3);
    assert!(matches!(ladder_split(&b12, &cfg, Scheme::Z3Exact), Err(Error::Configuration(_))));
    let b9 = enumerate_basis(9).unwrap();
    assert!(ladder_split(&b9, &ModelConfig::new(9, StateTag::Z2), Scheme::Z2).is_err());
}

#[test]
fn z3exact_literal_transcription_is_inconsistent() {
    let b = enumerate_basis(12).unwrap();
    let r = z3exact_literal_raising(&b).unwrap();
    let h = assemble(&b, &ModelConfig::z3exact(12)).unwrap();
    assert!(r.add(&r.transpose()).unwrap().max_abs_diff(&h).unwrap() > 0.5);
    let lp = ladder_split(&b, &ModelConfig::z3exact(12), Scheme::Z3Exact).unwrap();
    // the two raising operators differ only on 3j+2 flips
    let diff = lp.hplus.sub(&r).unwrap();
    for (row, col, _) in diff.entries() {
        let j = (b.states()[row] ^ b.states()[col]).trailing_zeros();
        assert_eq!(j % 3, 2);
    }
}

#[test]
fn algebra_defects() {
    let free = free_paramagnet(4).unwrap();
    assert!(algebra_defect(&free).unwrap() < 1e-12);
    let b8 = enumerate_basis(8).unwrap();
    let lp = ladder_split(&b8, &ModelConfig::new(8, StateTag::Z2), Scheme::Z2).unwrap();
    let defect = algebra_defect(&lp).unwrap();
    assert!(defect > 0.1, "{defect}");
    let b12 = enumerate_basis(12).unwrap();
    let lp = ladder_split(&b12, &ModelConfig::z3exact(12), Scheme::Z3Exact).unwrap();
    assert!(algebra_defect(&lp).unwrap().is_finite());
}

#[test]
fn ladder_sum_acts_like_hamiltonian() {
    let b = enumerate_basis(10).unwrap();
    let cfg = ModelConfig::new(10, StateTag::Z2).with_term(TermName::Z2Pert, 0.2);
    let lp = ladder_split(&b, &cfg, Scheme::Z2).unwrap();
    let h = assemble(&b, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let v: Vec<f64> = (0..b.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v = StateVector::from_real(&v);
    let mut lhs = lp.hplus.matvec(&v).unwrap();
    lhs.axpy(1.0.into(), &lp.hminus.matvec(&v).unwrap());
    assert!(lhs.distance(&h.matvec(&v).unwrap()) < 1e-12);
}
