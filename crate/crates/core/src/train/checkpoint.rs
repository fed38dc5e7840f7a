//! Versioned binary checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic            8 bytes  "FDRNCKPT"
//! version          u32      (currently 1)
//! config           6 × u32  phases, channels, fd_layers, aux_blocks,
//!                           reduction, in_channels
//! iteration        u64
//! rng seed         32 bytes (ChaCha8 key)
//! rng word_pos     u128     (stream position)
//! adam step        u64
//! param count      u32
//! per parameter:
//!   name           u32 length + UTF-8 bytes
//!   shape          4 × u64
//!   data           count × f64
//!   adam m         count × f64
//!   adam v         count × f64
//! ```
//!
//! Parameters appear in the network's fixed traversal order, so
//! save → load → save is byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::{Network, NetworkConfig};
use crate::tensor::{Shape, Tensor};
use crate::train::adam::AdamState;

const MAGIC: &[u8; 8] = b"FDRNCKPT";
const VERSION: u32 = 1;

pub struct Checkpoint {
    pub net: Network,
    pub adam: AdamState,
    pub iteration: u64,
    pub rng: ChaCha8Rng,
}

pub fn save(
    path: &Path,
    net: &Network,
    adam: &AdamState,
    iteration: u64,
    rng: &ChaCha8Rng,
) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let c = net.config();
    for v in [
        c.phases,
        c.channels,
        c.fd_layers,
        c.aux_blocks,
        c.reduction,
        c.in_channels,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&iteration.to_le_bytes());
    out.extend_from_slice(&rng.get_seed());
    out.extend_from_slice(&rng.get_word_pos().to_le_bytes());
    out.extend_from_slice(&adam.step_count().to_le_bytes());

    let mut count: u32 = 0;
    net.for_each_param(&mut |_, _| count += 1);
    out.extend_from_slice(&count.to_le_bytes());

    let slots = adam.slots();
    let mut index = 0usize;
    net.for_each_param(&mut |name, t| {
        let bytes = name.as_bytes();
        out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(bytes);
        for d in t.shape().0 {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let (m, v) = &slots[index];
        index += 1;
        for x in m {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    });

    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Config("checkpoint truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(8 * n)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut r = Reader { buf: &buf, pos: 0 };

    if r.take(8)? != MAGIC {
        return Err(Error::Config(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut cfg = [0usize; 6];
    for c in &mut cfg {
        *c = r.u32()? as usize;
    }
    let config = NetworkConfig {
        phases: cfg[0],
        channels: cfg[1],
        fd_layers: cfg[2],
        aux_blocks: cfg[3],
        reduction: cfg[4],
        in_channels: cfg[5],
    };
    let iteration = r.u64()?;
    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let word_pos = r.u128()?;
    let adam_step = r.u64()?;
    let count = r.u32()? as usize;

    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_word_pos(word_pos);

    // Build a network skeleton and overwrite every parameter in order.
    let mut init_rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = Network::new(config, &mut init_rng)?;
    let mut expected: u32 = 0;
    net.for_each_param(&mut |_, _| expected += 1);
    if expected as usize != count {
        return Err(Error::Config(format!(
            "checkpoint holds {count} parameter tensors, the config implies {expected}"
        )));
    }

    let mut slots = Vec::with_capacity(count);
    net.for_each_param_mut(&mut |name, t| {
        let name_len = r.u32()? as usize;
        let stored = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Config("checkpoint parameter name is not UTF-8".into()))?;
        if stored != name {
            return Err(Error::Config(format!(
                "checkpoint parameter order mismatch: found '{stored}', expected '{name}'"
            )));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u64()? as usize;
        }
        let shape = Shape(dims);
        if shape != t.shape() {
            return Err(Error::Config(format!(
                "checkpoint shape {shape} for '{name}' does not match {}",
                t.shape()
            )));
        }
        let n = shape.count();
        let data = r.f64_vec(n)?;
        *t = Tensor::param_from_vec(shape, data)?;
        slots.push((r.f64_vec(n)?, r.f64_vec(n)?));
        Ok(())
    })?;

    if r.pos != buf.len() {
        return Err(Error::Config("trailing bytes after checkpoint payload".into()));
    }

    Ok(Checkpoint {
        net,
        adam: AdamState::from_parts(adam_step, slots),
        iteration,
        rng,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    fn small_net() -> Network {
        let config = NetworkConfig {
            phases: 1,
            channels: 4,
            fd_layers: 1,
            aux_blocks: 1,
            reduction: 2,
            in_channels: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        Network::new(config, &mut rng).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let net = small_net();
        let adam = AdamState::new(&net);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        rng.next_u64(); // advance so word_pos is nontrivial

        let p1 = dir.path().join("a.ckpt");
        save(&p1, &net, &adam, 123, &rng).unwrap();
        let ck = load(&p1).unwrap();
        assert_eq!(ck.iteration, 123);
        let p2 = dir.path().join("b.ckpt");
        save(&p2, &ck.net, &ck.adam, ck.iteration, &ck.rng).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn restored_rng_continues_the_stream() {
        let dir = tempfile::tempdir().unwrap();
        let net = small_net();
        let adam = AdamState::new(&net);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        rng.next_u64();
        let path = dir.path().join("c.ckpt");
        save(&path, &net, &adam, 0, &rng).unwrap();
        let mut restored = load(&path).unwrap().rng;
        assert_eq!(rng.next_u64(), restored.next_u64());
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOTACKPTxxxxxxxxxxxx").unwrap();
        assert!(matches!(load(&path), Err(Error::Config(_))));
    }
}
