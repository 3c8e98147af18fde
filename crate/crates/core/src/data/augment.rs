//! Horizontal flip augmentation and low-speed filtering.

use rand::Rng;

use crate::types::{Sample, STEERING};

/// Mirrors every frame left-right and negates every steering value in the CAN
/// window and the targets. Speeds are untouched.
pub fn flip_sample(sample: &Sample) -> Sample {
    let mut out = sample.clone();
    let w = out.clip.width;
    if w > 0 {
        for row in out.clip.frames.chunks_exact_mut(w) {
            row.reverse();
        }
    }
    for s in &mut out.can.states {
        s.steering_rad = -s.steering_rad;
    }
    for row in &mut out.targets.values {
        row[STEERING] = -row[STEERING];
    }
    out
}

/// Flips with probability `probability`, drawing exactly once from `rng`.
pub fn augment_flip<R: Rng + ?Sized>(sample: &Sample, rng: &mut R, probability: f64) -> Sample {
    if rng.gen::<f64>() < probability {
        flip_sample(sample)
    } else {
        sample.clone()
    }
}

/// Keeps samples whose CAN-window mean speed is at least `threshold_mps`.
pub fn filter_low_speed(samples: Vec<Sample>, threshold_mps: f64) -> Vec<Sample> {
    samples
        .into_iter()
        .filter(|s| s.can.mean_speed() >= threshold_mps)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::fixtures::{small_spec, well_formed};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flip_negates_steering_only() {
        let mut s = well_formed(small_spec(), 1.0);
        s.can.states.truncate(2);
        s.can.states[0].steering_rad = 0.1;
        s.can.states[1].steering_rad = -0.2;
        let f = flip_sample(&s);
        assert_eq!(f.can.states[0].steering_rad, -0.1);
        assert_eq!(f.can.states[1].steering_rad, 0.2);
        for (a, b) in s.can.states.iter().zip(&f.can.states) {
            assert_eq!(a.speed_mps, b.speed_mps);
        }
        for (a, b) in s.targets.values.iter().zip(&f.targets.values) {
            assert_eq!((a[0], -a[1]), (b[0], b[1]));
        }
    }

    #[test]
    fn flip_moves_column_three_to_four() {
        let mut s = well_formed(small_spec(), 1.0);
        s.clip.frames.iter_mut().for_each(|v| *v = 0.0);
        let idx = s.clip.index(1, 2, 5, 3);
        s.clip.frames[idx] = 1.0;
        let f = flip_sample(&s);
        assert_eq!(f.clip.frames[f.clip.index(1, 2, 5, 4)], 1.0);
        assert_eq!(f.clip.frames.iter().filter(|&&v| v == 1.0).count(), 1);
    }

    #[test]
    fn probability_extremes() {
        let s = well_formed(small_spec(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment_flip(&s, &mut rng, 0.0), s);
        assert_eq!(augment_flip(&s, &mut rng, 1.0), flip_sample(&s));
    }

    #[test]
    fn flip_rate_tracks_probability() {
        let s = well_formed(small_spec(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let flipped = (0..2000)
            .filter(|_| augment_flip(&s, &mut rng, 0.5).can.states[0].steering_rad != s.can.states[0].steering_rad)
            .count();
        // binomial(2000, 0.5): sigma ≈ 22.4
        assert!((flipped as f64 - 1000.0).abs() < 5.0 * 22.4);
    }

    fn with_mean_speed(v: f64) -> Sample {
        let mut s = well_formed(small_spec(), 1.0);
        s.can.states.iter_mut().for_each(|st| st.speed_mps = v);
        s
    }

    #[test]
    fn filter_examples() {
        let samples = vec![with_mean_speed(1.0), with_mean_speed(5.0)];
        assert_eq!(filter_low_speed(samples.clone(), 0.0), samples);
        let kept = filter_low_speed(samples, 2.0);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].can.states[0].speed_mps, 5.0);
    }

    proptest! {
        #[test]
        fn flip_is_an_involution(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = well_formed(small_spec(), 1.0);
            s.clip.frames.iter_mut().for_each(|v| *v = rng.gen());
            s.can.states.iter_mut().for_each(|st| st.steering_rad = rng.gen_range(-1.0..1.0));
            prop_assert_eq!(flip_sample(&flip_sample(&s)), s);
        }

        #[test]
        fn filter_matches_recount_and_is_monotone(
            speeds in prop::collection::vec(prop::collection::vec(0.0f64..6.0, 10), 1..20),
            lo in 0.0f64..5.0, extra in 0.0f64..3.0,
        ) {
            let samples: Vec<Sample> = speeds.iter().map(|v| {
                let mut s = well_formed(small_spec(), 1.0);
                for (st, &x) in s.can.states.iter_mut().zip(v) { st.speed_mps = x; }
                s
            }).collect();
            let expected = speeds.iter().filter(|v| v.iter().sum::<f64>() / v.len() as f64 >= lo).count();
            let kept = filter_low_speed(samples.clone(), lo).len();
            prop_assert_eq!(kept, expected);
            prop_assert!(filter_low_speed(samples, lo + extra).len() <= kept);
        }
    }
}
