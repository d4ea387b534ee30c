//! Weight checkpoints.
//!
//! ```text
//! "HM2B"  u32 version  u32 n_arrays
//! per trainable layer, in topology order:  u64 length, then f64 values
//! ```
//! All fields little-endian. Values are stored bit-exactly.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::topology::NetworkTopology;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HM2B";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(net: &NetworkTopology) -> Vec<u8> {
    let layers = net.trainable_layers();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for k in layers {
        let w = net.weights(k);
        out.extend_from_slice(&(w.len() as u64).to_le_bytes());
        for v in w {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Loads weights saved by [`encode_checkpoint`] into `net`, which must have
/// the same trainable layer sizes.
pub fn decode_checkpoint(bytes: &[u8], net: &mut NetworkTopology) -> Result<()> {
    let bad = |m: &str| Error::data(format!("checkpoint: {m}"));
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let layers = net.trainable_layers();
    if n != layers.len() {
        return Err(Error::config(format!(
            "checkpoint has {n} weight arrays, topology has {}",
            layers.len()
        )));
    }
    let mut all = net.all_weights().to_vec();
    for k in layers {
        let len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        if len != all[k].len() {
            return Err(Error::config(format!(
                "checkpoint layer {k} has {len} weights, topology has {}",
                all[k].len()
            )));
        }
        let raw = take(len.checked_mul(8).ok_or_else(|| bad("length overflow"))?)?;
        all[k] = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    net.set_weights(all)
}

pub fn save_checkpoint(path: &Path, net: &NetworkTopology) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&encode_checkpoint(net))?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, net: &mut NetworkTopology) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    decode_checkpoint(&bytes, net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spike::{NeuronParams, TimeGrid};
    use crate::topology::{LayerSpec, Shape};
    use rand::SeedableRng;

    fn net(hidden: usize) -> NetworkTopology {
        let p = NeuronParams::for_grid(&TimeGrid::mnist(), 10.0).unwrap();
        NetworkTopology::new(vec![
            LayerSpec::input(Shape::new(1, 6, 6), p),
            LayerSpec::conv(2, 3, p),
            LayerSpec::pool(p),
            LayerSpec::dense(hidden, p),
        ])
        .unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let mut a = net(3);
        a.init_uniform(&mut rand_chacha::ChaCha8Rng::seed_from_u64(5));
        a.weights_mut(3)[0] = f64::MIN_POSITIVE / 3.0;
        let bytes = encode_checkpoint(&a);
        let mut b = net(3);
        decode_checkpoint(&bytes, &mut b).unwrap();
        for (x, y) in a.all_weights().iter().zip(b.all_weights()) {
            let xb: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn topology_mismatch_is_rejected() {
        let bytes = encode_checkpoint(&net(3));
        assert!(matches!(decode_checkpoint(&bytes, &mut net(4)), Err(Error::Config(_))));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1], &mut net(3)).is_err());
        assert!(decode_checkpoint(b"XXXX", &mut net(3)).is_err());
    }
}
