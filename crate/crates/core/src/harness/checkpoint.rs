//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic "LCC1" | version u32 | config fingerprint u64
//! m u32 | L u32 | in-width u32
//! actor param count u64 | critic param count u64
//! epoch u64 | rng seed u64 | rng word position u128
//! actor adam step u64 | critic adam step u64
//! f64 × n: actor θ, critic φ, actor m, actor v, critic m, critic v
//! FNV-1a 64 checksum of all preceding bytes
//! ```

use std::fs;
use std::path::Path;

use crate::policy::{param_count, ActorCritic, Mlp, HIDDEN};
use crate::ppo::{Adam, Learner};

use super::HarnessError;

pub const MAGIC: &[u8; 4] = b"LCC1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub fingerprint: u64,
    pub m: u32,
    pub n_actions: u32,
    pub in_width: u32,
    pub epoch: u64,
    pub rng_seed: u64,
    pub rng_word_pos: u128,
    pub learner: Learner,
}

impl Checkpoint {
    pub fn net(&self) -> &ActorCritic {
        &self.learner.net
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let net = &self.learner.net;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        for v in [self.m, self.n_actions, self.in_width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(net.actor.params().len() as u64).to_le_bytes());
        out.extend_from_slice(&(net.critic.params().len() as u64).to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.rng_seed.to_le_bytes());
        out.extend_from_slice(&self.rng_word_pos.to_le_bytes());
        out.extend_from_slice(&self.learner.actor_opt.t.to_le_bytes());
        out.extend_from_slice(&self.learner.critic_opt.t.to_le_bytes());
        for block in [
            net.actor.params(),
            net.critic.params(),
            &self.learner.actor_opt.m,
            &self.learner.actor_opt.v,
            &self.learner.critic_opt.m,
            &self.learner.critic_opt.v,
        ] {
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = crate::fnv1a(out.iter().copied());
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HarnessError> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            if bytes.len() >= 4 && &bytes[..4] != MAGIC {
                return Err(HarnessError::Malformed("bad magic".into()));
            }
            return Err(HarnessError::ChecksumMismatch);
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(HarnessError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < 16 {
            return Err(HarnessError::ChecksumMismatch);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if crate::fnv1a(body.iter().copied()) != stored {
            return Err(HarnessError::ChecksumMismatch);
        }

        let mut r = Reader { buf: body, pos: 8 };
        let fingerprint = r.u64()?;
        let m = r.u32()?;
        let n_actions = r.u32()?;
        let in_width = r.u32()?;
        let n_actor = r.u64()? as usize;
        let n_critic = r.u64()? as usize;
        let epoch = r.u64()?;
        let rng_seed = r.u64()?;
        let rng_word_pos = r.u128()?;
        let actor_t = r.u64()?;
        let critic_t = r.u64()?;

        let (actor_sizes, critic_sizes) =
            ActorCritic::sizes(in_width as usize, HIDDEN, n_actions as usize);
        if param_count(&actor_sizes) != n_actor || param_count(&critic_sizes) != n_critic {
            return Err(HarnessError::Malformed(format!(
                "parameter counts {n_actor}/{n_critic} do not fit a {in_width}x{HIDDEN}x{HIDDEN}x{n_actions} network"
            )));
        }
        let actor = r.f64s(n_actor)?;
        let critic = r.f64s(n_critic)?;
        let mut actor_opt = Adam::new(n_actor);
        actor_opt.m = r.f64s(n_actor)?;
        actor_opt.v = r.f64s(n_actor)?;
        actor_opt.t = actor_t;
        let mut critic_opt = Adam::new(n_critic);
        critic_opt.m = r.f64s(n_critic)?;
        critic_opt.v = r.f64s(n_critic)?;
        critic_opt.t = critic_t;
        if r.pos != body.len() {
            return Err(HarnessError::Malformed(format!(
                "{} trailing bytes",
                body.len() - r.pos
            )));
        }
        let net = ActorCritic {
            actor: Mlp::from_params(&actor_sizes, actor).expect("count checked"),
            critic: Mlp::from_params(&critic_sizes, critic).expect("count checked"),
        };
        Ok(Checkpoint {
            fingerprint,
            m,
            n_actions,
            in_width,
            epoch,
            rng_seed,
            rng_word_pos,
            learner: Learner {
                net,
                actor_opt,
                critic_opt,
            },
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], HarnessError> {
        if self.pos + n > self.buf.len() {
            return Err(HarnessError::Malformed("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, HarnessError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, HarnessError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn u128(&mut self) -> Result<u128, HarnessError> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().expect("16 bytes")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, HarnessError> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, HarnessError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
