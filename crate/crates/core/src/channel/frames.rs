use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DROP_STREAM: u64 = 1;

/// Independent per-frame drop decisions with probability `p`.
pub fn drop_flags(frame_count: usize, p: f64, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DROP_STREAM);
    (0..frame_count).map(|_| rng.gen::<f64>() < p).collect()
}

/// Flags frames as dropped. Frames are returned unchanged; the decoder
/// conceals flagged frames.
pub fn drop_frames<T>(frames: Vec<T>, p: f64, seed: u64) -> (Vec<T>, Vec<bool>) {
    let flags = drop_flags(frames.len(), p, seed);
    (frames, flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremes() {
        let (frames, flags) = drop_frames(vec![0u8; 500], 0.0, 1);
        assert_eq!(frames.len(), 500);
        assert!(flags.iter().all(|&f| !f));
        let (_, flags) = drop_frames(vec![0u8; 500], 1.0, 1);
        assert!(flags.iter().all(|&f| f));
    }

    #[test]
    fn binomial_count() {
        // Binomial(10_000, 0.1): mean 1000, sd 30.
        let dropped = drop_flags(10_000, 0.1, 2024).iter().filter(|&&f| f).count();
        assert!((900..=1100).contains(&dropped), "{dropped}");
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        assert_eq!(drop_flags(1_000, 0.3, 5), drop_flags(1_000, 0.3, 5));
        assert_ne!(drop_flags(1_000, 0.3, 5), drop_flags(1_000, 0.3, 6));
    }

    #[test]
    fn independent_of_corruption_stream() {
        let mut corrupt = ChaCha8Rng::seed_from_u64(5);
        corrupt.set_stream(super::super::gilbert_elliot::CORRUPTION_STREAM);
        let from_corrupt: Vec<bool> = (0..1_000).map(|_| corrupt.gen::<f64>() < 0.5).collect();
        assert_ne!(drop_flags(1_000, 0.5, 5), from_corrupt);
    }
}
