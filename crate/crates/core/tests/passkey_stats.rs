//! Statistical sanity of the pass-key needle placement.

use ropescope_core::tasks::passkey_make;

#[test]
fn needle_depth_uniform_over_ten_bins() {
    let mut bins = [0u64; 10];
    for seed in 0..10_000u64 {
        let p = passkey_make(768, 5, seed).unwrap();
        assert!((0.0..1.0).contains(&p.depth_fraction));
        bins[(p.depth_fraction * 10.0) as usize] += 1;
    }
    let expected = 1_000.0;
    let chi2: f64 = bins
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum();
    // Critical value of chi-square with 9 degrees of freedom at p = 0.01.
    assert!(chi2 <= 21.666, "chi-square {chi2} too large; bins {bins:?}");
}
