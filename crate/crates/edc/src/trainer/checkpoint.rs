//! Versioned binary model checkpoints.
//!
//! Layout: `b"EDCK"` magic, little-endian `u32` version, payload, then a
//! CRC-32 of everything before it. Tensor data is stored as raw `f32` bit
//! patterns, so save/restore round-trips are bit-identical.

use super::{Model, ModelLayer, TrainError};
use crate::net::NetworkSpec;

const MAGIC: &[u8; 4] = b"EDCK";
const VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend(v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend(v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.buf.extend(b);
    }
    fn f32s(&mut self, vs: &[f32]) {
        self.u32(vs.len() as u32);
        for v in vs {
            self.buf.extend(v.to_bits().to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        let slice = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| TrainError::BadCheckpoint("unexpected end of data".into()))?;
        self.pos += n;
        Ok(slice)
    }
    fn u32(&mut self) -> Result<u32, TrainError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
    fn u64(&mut self) -> Result<u64, TrainError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
    fn bytes(&mut self) -> Result<&'a [u8], TrainError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
    fn f32s(&mut self) -> Result<Vec<f32>, TrainError> {
        let n = self.u32()? as usize;
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|b| f32::from_bits(u32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect())
    }
}

/// Serializes a model into the checkpoint container.
pub fn checkpoint_save(model: &Model<f32>) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend(MAGIC);
    w.u32(VERSION);
    w.bytes(serde_json::to_string(&model.net).expect("network serializes").as_bytes());
    w.u32(model.act_bits.unwrap_or(0));
    w.u64(model.seed);
    w.u32(model.layers.len() as u32);
    for layer in &model.layers {
        w.u32(layer.q_bits.unwrap_or(0));
        w.f32s(&layer.weights);
        w.f32s(&layer.bias);
        w.bytes(&layer.mask);
    }
    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    w.buf
}

/// Restores a model from checkpoint bytes, verifying version and CRC.
pub fn checkpoint_restore(bytes: &[u8]) -> Result<Model<f32>, TrainError> {
    if bytes.len() < 12 {
        return Err(TrainError::BadCheckpoint("too short".into()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(TrainError::BadCheckpoint(format!(
            "crc mismatch: stored {stored:#010x}, computed {computed:#010x}"
        )));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(TrainError::BadCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(TrainError::BadCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let net: NetworkSpec = serde_json::from_slice(r.bytes()?)
        .map_err(|e| TrainError::BadCheckpoint(format!("network: {e}")))?;
    let act_bits = match r.u32()? {
        0 => None,
        b => Some(b),
    };
    let seed = r.u64()?;
    let layer_count = r.u32()? as usize;
    if layer_count != net.layers.len() {
        return Err(TrainError::BadCheckpoint(format!(
            "layer count {layer_count} does not match network ({})",
            net.layers.len()
        )));
    }

    let mut model = Model::new(net, seed)?;
    model.act_bits = act_bits;
    for l in 0..layer_count {
        let q_bits = match r.u32()? {
            0 => None,
            b => Some(b),
        };
        let weights = r.f32s()?;
        let bias = r.f32s()?;
        let mask = r.bytes()?.to_vec();
        let expect = &model.layers[l];
        if weights.len() != expect.weights.len()
            || bias.len() != expect.bias.len()
            || mask.len() != expect.mask.len()
        {
            return Err(TrainError::BadCheckpoint(format!(
                "layer {l}: tensor sizes do not match the network"
            )));
        }
        model.layers[l] = ModelLayer {
            weights,
            bias,
            mask,
            q_bits,
        };
    }
    if r.pos != body.len() {
        return Err(TrainError::BadCheckpoint("trailing bytes".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::parse_network;

    fn small_model() -> Model<f32> {
        let json = br#"{"name":"t","input_shape":[1,8,8],"layers":[
            {"kind":"conv","c_out":2,"f":[3,3],"padding":1,"activation":"relu","pool":2},
            {"kind":"fc","c_out":3}
        ]}"#;
        Model::new(parse_network(json).unwrap(), 99).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let mut model = small_model();
        model.layers[0].q_bits = Some(4);
        model.layers[0].mask[3] = 0;
        model.layers[0].weights[3] = 0.0;
        let bytes = checkpoint_save(&model);
        let restored = checkpoint_restore(&bytes).unwrap();
        assert_eq!(model, restored);
    }

    #[test]
    fn corruption_detected() {
        let model = small_model();
        let mut bytes = checkpoint_save(&model);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        assert!(matches!(
            checkpoint_restore(&bytes),
            Err(TrainError::BadCheckpoint(_))
        ));
    }

    #[test]
    fn truncation_detected() {
        let model = small_model();
        let bytes = checkpoint_save(&model);
        assert!(checkpoint_restore(&bytes[..bytes.len() - 9]).is_err());
    }
}
