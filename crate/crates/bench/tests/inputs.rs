//! Benchmark inputs are deterministic and well formed.

use subbasis_bench::{random_matrix, test_waveform};

#[test]
fn inputs_are_reproducible() {
    assert_eq!(random_matrix(40, 90, 3), random_matrix(40, 90, 3));
    assert_ne!(random_matrix(40, 90, 3), random_matrix(40, 90, 4));
    assert_eq!(test_waveform(1).samples, test_waveform(1).samples);
}

#[test]
fn waveform_is_one_second_and_bounded() {
    let w = test_waveform(9);
    assert_eq!(w.len(), 16000);
    assert_eq!(w.sample_rate, 16000);
    assert!(w.samples.iter().all(|s| s.abs() <= 0.41));
}
