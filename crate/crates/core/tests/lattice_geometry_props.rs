use proptest::prelude::*;
use scatgeo_core::geometry::{norm_split, FrameChange};
use scatgeo_core::sampling::SplitRng;
use scatgeo_core::{ClusterDecomposition, JacobiFrame, MassSpec, PairIndex};

/// Bell numbers from the Bell triangle.
fn bell_triangle(n: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 1..n {
        let mut next = vec![*row.last().unwrap()];
        for v in &row {
            let last = *next.last().unwrap();
            next.push(last + v);
        }
        row = next;
    }
    *row.last().unwrap()
}

#[test]
fn enumeration_counts_are_bell_numbers() {
    assert_eq!(bell_triangle(5), 52);
    for n in 2..=8 {
        let all = ClusterDecomposition::enumerate(n).unwrap();
        assert_eq!(all.len() as u64, bell_triangle(n), "N = {n}");
        let mut sorted = all.clone();
        sorted.sort_by_key(|d| d.to_string());
        sorted.dedup();
        assert_eq!(sorted.len(), all.len());
    }
}

#[test]
fn refinement_is_a_partial_order() {
    for n in 2..=5 {
        let all = ClusterDecomposition::enumerate(n).unwrap();
        for a in &all {
            assert!(a.is_refinement_of(a).unwrap());
            for b in &all {
                let ab = a.is_refinement_of(b).unwrap();
                if ab && b.is_refinement_of(a).unwrap() {
                    assert_eq!(a, b);
                }
                if !ab {
                    continue;
                }
                for c in &all {
                    if b.is_refinement_of(c).unwrap() {
                        assert!(a.is_refinement_of(c).unwrap());
                    }
                }
            }
        }
    }
}

#[test]
fn pair_order_matches_refinement() {
    for n in 2..=5 {
        for a in ClusterDecomposition::enumerate(n).unwrap() {
            for pair in PairIndex::all(n) {
                let pd = ClusterDecomposition::from_pair(pair, n).unwrap();
                assert_eq!(
                    a.contains_pair(pair).unwrap(),
                    pd.is_refinement_of(&a).unwrap()
                );
            }
        }
    }
}

#[test]
fn merging_preserves_refinement() {
    for n in 2..=5 {
        let all = ClusterDecomposition::enumerate(n).unwrap();
        for c in all.iter().filter(|c| c.len() >= 2) {
            for link in c.links().unwrap() {
                let m = c.merge(link).unwrap();
                assert_eq!(m.len(), c.len() - 1);
                assert!(c.is_refinement_of(&m).unwrap());
                for d in &all {
                    if d.is_refinement_of(c).unwrap() {
                        assert!(d.is_refinement_of(&m).unwrap());
                    }
                }
            }
        }
    }
}

fn random_masses(rng: &mut SplitRng, n: usize) -> MassSpec {
    MassSpec::with_unit_hbar((0..n).map(|_| rng.uniform_in(0.2, 5.0)).collect()).unwrap()
}

#[test]
fn frame_changes_are_mass_orthogonal() {
    let rng = SplitRng::new(2024);
    let mut worst: f64 = 0.0;
    for n in 2..=5 {
        let mut r = rng.fork(n as u64);
        let mass = random_masses(&mut r, n);
        let nu = 1 + n % 3;
        let frames: Vec<JacobiFrame> = ClusterDecomposition::enumerate(n)
            .unwrap()
            .iter()
            .map(|b| JacobiFrame::build(&mass, b, nu).unwrap())
            .collect();
        for f1 in &frames {
            for f2 in &frames {
                let u = FrameChange::between(f1, f2).unwrap();
                for _ in 0..100 {
                    let x: Vec<f64> = (0..f1.dim()).map(|_| r.normal()).collect();
                    let y: Vec<f64> = (0..f1.dim()).map(|_| r.normal()).collect();
                    let lhs = f2.inner(&u.apply(&x), &u.apply(&y)).unwrap();
                    let rhs = f1.inner(&x, &y).unwrap();
                    let scale = (f1.inner(&x, &x).unwrap() * f1.inner(&y, &y).unwrap()).sqrt();
                    worst = worst.max((lhs - rhs).abs() / scale);
                }
            }
        }
    }
    assert!(worst <= 1e-12, "{worst}");
}

/// A maximal chain from the one-block decomposition down to singletons.
fn chain(n: usize, rng: &mut SplitRng) -> Vec<ClusterDecomposition> {
    let mut out = vec![ClusterDecomposition::singletons(n)];
    while out.last().unwrap().len() > 1 {
        let c = out.last().unwrap();
        let links = c.links().unwrap();
        let next = c.merge(links[rng.index(links.len())]).unwrap();
        out.push(next);
    }
    out.reverse();
    out
}

#[test]
fn pythagoras_chain() {
    let rng = SplitRng::new(77);
    for n in 2..=5 {
        for trial in 0..20 {
            let mut r = rng.fork((n * 100 + trial) as u64);
            let mass = random_masses(&mut r, n);
            let nu = 2;
            let links = chain(n, &mut r);
            let frames: Vec<JacobiFrame> = links
                .iter()
                .map(|b| JacobiFrame::build(&mass, b, nu).unwrap())
                .collect();
            let x0: Vec<f64> = (0..frames[0].dim()).map(|_| r.normal()).collect();
            let total = frames[0].inner(&x0, &x0).unwrap();
            let cfg = frames[0].to_configuration(&x0).unwrap();
            // |x|^2 = |x_b|^2 + sum of split links down the chain.
            let mut acc = 0.0;
            for w in frames.windows(2).skip(1) {
                let xb = w[0].to_coords(&cfg).unwrap();
                let (inter, zck, intra) = norm_split(&xb, &w[0], &w[1]).unwrap();
                if acc == 0.0 {
                    acc = inter;
                }
                acc += zck;
                let whole = inter + zck + intra;
                assert!((whole - total).abs() <= 1e-12 * total, "N = {n}");
            }
            if frames.len() > 2 {
                assert!(
                    (acc - total).abs() <= 1e-12 * total,
                    "N = {n}: {acc} vs {total}"
                );
            }
        }
    }
}

proptest! {
    #[test]
    fn frame_round_trip(seed in any::<u64>(), n in 2usize..=5) {
        let mut r = SplitRng::new(seed);
        let mass = random_masses(&mut r, n);
        let all = ClusterDecomposition::enumerate(n).unwrap();
        let a = &all[r.index(all.len())];
        let b = &all[r.index(all.len())];
        let fa = JacobiFrame::build(&mass, a, 1).unwrap();
        let fb = JacobiFrame::build(&mass, b, 1).unwrap();
        let there = FrameChange::between(&fa, &fb).unwrap();
        let back = FrameChange::between(&fb, &fa).unwrap();
        let x: Vec<f64> = (0..fa.dim()).map(|_| r.normal()).collect();
        let y = back.apply(&there.apply(&x));
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p - q).abs() < 1e-12 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn decomposition_json_round_trip(seed in any::<u64>(), n in 2usize..=6) {
        let mut r = SplitRng::new(seed);
        let all = ClusterDecomposition::enumerate(n).unwrap();
        let d = &all[r.index(all.len())];
        let s = serde_json::to_string(d).unwrap();
        let back: ClusterDecomposition = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(&back, d);
    }
}
