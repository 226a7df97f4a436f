//! All randomness in the pipeline funnels through one root seed; component
//! streams are derived by hashing stable tags, so resuming a run at epoch k
//! replays exactly the epoch-k randomness of the uninterrupted run.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from the root seed and a list of stable tags.
pub fn derive_seed(root: u64, tags: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    for t in tags {
        h.update([0u8]);
        h.update(t.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Tagged seed with numeric indices (epoch, step, ...).
pub fn derive_seed_indexed(root: u64, tags: &[&str], indices: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    for t in tags {
        h.update([0u8]);
        h.update(t.as_bytes());
    }
    for i in indices {
        h.update([1u8]);
        h.update(i.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

pub fn rng_from(root: u64, tags: &[&str]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(root, tags))
}

pub fn rng_indexed(root: u64, tags: &[&str], indices: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed_indexed(root, tags, indices))
}

/// Standard normal draw (Box-Muller); identical across platforms.
pub fn randn(rng: &mut ChaCha12Rng) -> f64 {
    use rand::Rng;
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        let a = derive_seed(7, &["gen"]);
        let b = derive_seed(7, &["gen"]);
        let c = derive_seed(7, &["disc"]);
        let d = derive_seed(8, &["gen"]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn indexed_seeds_depend_on_indices() {
        let a = derive_seed_indexed(1, &["noise"], &[0, 1]);
        let b = derive_seed_indexed(1, &["noise"], &[0, 2]);
        let c = derive_seed_indexed(1, &["noise"], &[1, 0]);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
