mod common;

use common::*;
use hostcap::stability::*;

fn within(x: u32, target: u32, rel: f64) -> bool {
    (x as f64 - target as f64).abs() <= rel * target as f64
}

#[test]
fn identical_group_low_count_boundary() {
    let m = system(&[("n", 75.0, 2)]);
    let v = sweep_counts(&m, "n", 18..=20, margin_tol()).unwrap();
    assert!(v[0].1.stable);
    assert!(!v[2].1.stable);
    assert!(!sweep_counts(&m, "n", 708..=708, margin_tol()).unwrap()[0].1.stable);
}

#[test]
fn sweep_of_one_count_equals_direct_classification() {
    let m = system(&[("n", 75.0, 2)]);
    let v = sweep_counts(&m, "n", 37..=37, margin_tol()).unwrap();
    let direct = evaluate(&m.with_count("n", 37).unwrap(), margin_tol()).unwrap();
    assert_eq!(v, vec![(37, direct)]);
}

#[test]
fn sweep_rejects_bad_ranges() {
    let m = system(&[("n", 75.0, 2)]);
    assert!(sweep_counts(&m, "n", 0..=5, margin_tol()).is_err());
    assert!(sweep_counts(&m, "n", 1..=10_001, margin_tol()).is_err());
    assert!(sweep_counts(&m, "x", 1..=5, margin_tol()).is_err());
}

#[test]
fn case_one_larger_delay_added() {
    let m = system(&[("N1", 67.5, 8), ("N5", 82.5, 1)]);
    let r = find_ranges(&m, "N5", DEFAULT_N_MAX, margin_tol()).unwrap();
    assert_eq!(r.first_unstable(), Some(10));
    assert!(within(r.last_unstable().unwrap(), 784, 0.15));
    assert_eq!(r.fixed_counts.get("N1"), Some(&8));
}

#[test]
fn case_two_smaller_delay_added() {
    let m = system(&[("N5", 82.5, 2), ("N1", 67.5, 1)]);
    let r = find_ranges(&m, "N1", DEFAULT_N_MAX, margin_tol()).unwrap();
    assert_eq!(r.first_unstable(), Some(42));
    assert!(within(r.last_unstable().unwrap(), 612, 0.15));
}

#[test]
fn case_four_midway_delay_added() {
    let m = system(&[("N1", 67.5, 2), ("N5", 82.5, 6), ("N3", 75.0, 1)]);
    let r = find_ranges(&m, "N3", DEFAULT_N_MAX, margin_tol()).unwrap();
    assert_eq!(r.first_unstable(), Some(8));
    assert!(within(r.last_unstable().unwrap(), 700, 0.15));
}

#[test]
fn ranges_are_bimodal_and_coherent() {
    let m = system(&[("n", 75.0, 2)]);
    for (td, r) in delay_sweep(&m, "n", &[67.5e-6, 75e-6, 82.5e-6], DEFAULT_N_MAX, margin_tol()).unwrap() {
        assert_eq!(r.stable_set.len(), 2, "td {td}: {:?}", r.stable_set);
        assert_eq!(r.stable_set[0].0, 1);
        assert_eq!(r.stable_set[1].1, DEFAULT_N_MAX);
        for w in r.stable_set.windows(2) {
            assert!(w[0].1 + 1 < w[1].0);
        }
        for b in &r.boundaries {
            assert_eq!(b.stable.abs_diff(b.unstable), 1);
            let mb = m.with_params("n", params(td * 1e6)).unwrap();
            assert!(evaluate(&mb.with_count("n", b.stable).unwrap(), margin_tol()).unwrap().stable);
            assert!(!evaluate(&mb.with_count("n", b.unstable).unwrap(), margin_tol()).unwrap().stable);
        }
    }
}

#[test]
fn delay_ordering_of_boundaries() {
    let m = system(&[("n", 75.0, 2)]);
    let rows = delay_sweep(&m, "n", &[67.5e-6, 75e-6, 82.5e-6], DEFAULT_N_MAX, margin_tol()).unwrap();
    let lower: Vec<u32> = rows.iter().map(|(_, r)| r.first_unstable().unwrap()).collect();
    let upper: Vec<u32> = rows.iter().map(|(_, r)| r.last_unstable().unwrap()).collect();
    assert!(lower.windows(2).all(|w| w[0] > w[1]), "{lower:?}");
    assert!(upper.windows(2).all(|w| w[0] < w[1]), "{upper:?}");
}

#[test]
fn delay_sweep_single_and_duplicate_values() {
    let m = system(&[("n", 75.0, 2)]);
    let direct = find_ranges(&m, "n", 200, margin_tol()).unwrap();
    let rows = delay_sweep(&m, "n", &[75e-6, 75e-6], 200, margin_tol()).unwrap();
    assert_eq!(rows[0].1, direct);
    assert_eq!(rows[0], rows[1]);
    assert!(delay_sweep(&m, "n", &[-1e-6], 200, margin_tol()).is_err());
}

#[test]
fn smaller_delay_addition_keeps_more_headroom() {
    // stable counts below the first loss; zero when even one is unstable
    let headroom = |r: &StabilityRange| match r.stable_set.first() {
        Some(&(1, hi)) => hi,
        _ => 0,
    };
    for added in [2, 4, 8, 16] {
        let small = system(&[("s", 75.0, 1), ("a", 67.5, added)]);
        let large = system(&[("s", 75.0, 1), ("a", 82.5, added)]);
        let rs = find_ranges(&small, "s", 300, margin_tol()).unwrap();
        let rl = find_ranges(&large, "s", 300, margin_tol()).unwrap();
        assert!(headroom(&rs) >= headroom(&rl), "{added}: {:?} vs {:?}", rs.stable_set, rl.stable_set);
    }
}

#[test]
fn locus_dominant_branch_crosses_axis() {
    let m = system(&[("n", 75.0, 2)]);
    let trace = locus_trace(&m, "n", 2..=100, 4).unwrap();
    let rightmost = |n: u32| {
        trace.rows.iter().filter(|r| r.count == n).map(|r| r.re).fold(f64::NEG_INFINITY, f64::max)
    };
    // the verdict threshold is -margin_tol; the branch crosses it in (18, 20]
    assert!(rightmost(18) < -margin_tol());
    assert!(rightmost(20) > -margin_tol());
    assert!(rightmost(22) > 0.0);
    // conjugate branches mirror each other
    for n in [2, 50, 100] {
        let rows: Vec<_> = trace.rows.iter().filter(|r| r.count == n).collect();
        for r in &rows {
            assert!(rows.iter().any(|q| (q.re - r.re).abs() <= 1e-9 * r.re.abs().max(1.0) && (q.im + r.im).abs() <= 1e-6 * r.im.abs().max(1.0)));
        }
    }
}

#[test]
fn locus_single_count_and_continuity() {
    let m = system(&[("n", 75.0, 2)]);
    let one = locus_trace(&m, "n", 2..=2, 3).unwrap();
    assert_eq!(one.rows.len(), 3);
    assert!(one.rows.iter().all(|r| r.count == 2));
    assert!(locus_trace(&m, "n", 2..=2, 0).is_err());

    let t = locus_trace(&m, "n", 10..=60, 2).unwrap();
    for id in 0..2 {
        let branch: Vec<_> = t.rows.iter().filter(|r| r.branch_id == id).collect();
        for w in branch.windows(2) {
            let step = ((w[1].re - w[0].re).powi(2) + (w[1].im - w[0].im).powi(2)).sqrt();
            assert!(step < 0.05 * w[0].im.abs().max(100.0), "branch {id} jumps {step} at {}", w[1].count);
        }
    }
}
