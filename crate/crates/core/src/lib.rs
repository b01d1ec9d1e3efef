//! Learned cooperative-coevolution CMA-ES.
//!
//! A reinforcement-learned policy picks, at every macro-step, one of three
//! variance-ranked decomposition strategies. The resulting subgroups are
//! optimized by CMA-ES on slices of a shared global distribution and written
//! back afterwards.
//!
//! Modules, bottom-up:
//! - [`problems`]: synthetic benchmark suite with exact optima and FE accounting
//! - [`cmaes`]: CMA-ES plus subspace extraction / write-back
//! - [`decomposition`]: the MiVD / RD / MaVD strategy pool
//! - [`features`]: state features and rewards
//! - [`policy`]: actor and critic MLPs
//! - [`ppo`]: clipped-surrogate training with hand-written gradients
//! - [`harness`]: episodes, training, evaluation, baselines, ablations, checkpoints

pub mod cmaes;
pub mod decomposition;
pub mod features;
pub mod harness;
pub mod policy;
pub mod ppo;
pub mod problems;

/// 64-bit FNV-1a. Used for state digests, config fingerprints and
/// checkpoint checksums.
pub fn fnv1a<I: IntoIterator<Item = u8>>(bytes: I) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
