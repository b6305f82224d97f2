use std::time::Instant;

use intlstm_core::activations::{fixed_sigmoid, fixed_tanh};
use intlstm_core::fixedpoint::QFormat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn out(q: i16) -> f64 {
    q as f64 / 32768.0
}

#[test]
fn exhaustive_accuracy_q3_12() {
    let fmt = QFormat::Q3_12;
    let (mut worst_t, mut worst_s) = (0f64, 0f64);
    for q in i16::MIN..=i16::MAX {
        let x = q as f64 / 4096.0;
        worst_t = worst_t.max((out(fixed_tanh(q, fmt).unwrap()) - x.tanh()).abs());
        let s = fixed_sigmoid(q, fmt).unwrap();
        assert!((0..=32767).contains(&s));
        worst_s = worst_s.max((out(s) - sigmoid(x)).abs());
    }
    assert!(worst_t <= 3e-4, "tanh {worst_t}");
    assert!(worst_s <= 1.5e-4, "sigmoid {worst_s}");
}

#[test]
fn monotone_q3_12_and_q4_11() {
    for fmt in [QFormat::Q3_12, QFormat::q16(4).unwrap()] {
        let mut prev_t = i16::MIN;
        let mut prev_s = i16::MIN;
        for q in i16::MIN..=i16::MAX {
            let t = fixed_tanh(q, fmt).unwrap();
            let s = fixed_sigmoid(q, fmt).unwrap();
            assert!(t >= prev_t, "{fmt} tanh drops at {q}");
            assert!(s >= prev_s, "{fmt} sigmoid drops at {q}");
            prev_t = t;
            prev_s = s;
        }
    }
}

#[test]
fn monotone_all_supported_formats() {
    for m in 0..=6 {
        let fmt = QFormat::q16(m).unwrap();
        let t: Vec<i16> = (i16::MIN..=i16::MAX).map(|q| fixed_tanh(q, fmt).unwrap()).collect();
        let s: Vec<i16> = (i16::MIN..=i16::MAX).map(|q| fixed_sigmoid(q, fmt).unwrap()).collect();
        assert!(t.windows(2).all(|w| w[0] <= w[1]), "tanh {fmt}");
        assert!(s.windows(2).all(|w| w[0] <= w[1]), "sigmoid {fmt}");
    }
}

#[test]
fn tanh_odd_symmetry() {
    for m in 0..=6 {
        let fmt = QFormat::q16(m).unwrap();
        for q in (i16::MIN + 1)..=i16::MAX {
            let a = fixed_tanh(q, fmt).unwrap() as i32;
            let b = fixed_tanh(-q, fmt).unwrap() as i32;
            assert!((a + b).abs() <= 1, "{fmt} q={q}: {a} vs {b}");
        }
    }
}

#[test]
fn tanh_clamps_to_top_of_range() {
    assert_eq!(fixed_tanh(32767, QFormat::Q3_12).unwrap(), 32767);
    assert_eq!(fixed_tanh(-32768, QFormat::Q3_12).unwrap(), -32768);
}

#[test]
fn sigmoid_tanh_identity() {
    // sigmoid(x) = (tanh(x/2) + 1) / 2; the same raw value read as Q2.13 is x/2.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let half = QFormat::q16(2).unwrap();
    for _ in 0..10_000 {
        let q: i16 = rng.gen();
        let s = fixed_sigmoid(q, QFormat::Q3_12).unwrap() as i32;
        let t = fixed_tanh(q, half).unwrap() as i32;
        let via_tanh = (t + 32768 + 1).div_euclid(2);
        assert!((s - via_tanh).abs() <= 2, "q={q}: {s} vs {via_tanh}");
    }
}

#[test]
fn timing_is_input_independent() {
    // Smoke check only: saturated inputs must not be much cheaper or dearer
    // than inputs near zero.
    let fmt = QFormat::Q3_12;
    let near_zero: Vec<i16> = (-2048..2048).collect();
    let saturated: Vec<i16> = (28672..=32767).collect();
    let time = |xs: &[i16]| {
        let mut best = f64::INFINITY;
        for _ in 0..15 {
            let start = Instant::now();
            let mut acc = 0i64;
            for _ in 0..20 {
                for &q in xs {
                    acc += fixed_tanh(std::hint::black_box(q), fmt).unwrap() as i64;
                    acc += fixed_sigmoid(std::hint::black_box(q), fmt).unwrap() as i64;
                }
            }
            std::hint::black_box(acc);
            best = best.min(start.elapsed().as_secs_f64());
        }
        best
    };
    let a = time(&near_zero);
    let b = time(&saturated);
    let ratio = a.max(b) / a.min(b);
    assert!(ratio < 3.0, "timing ratio {ratio}");
}
