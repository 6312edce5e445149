//! Checkpoint files: a JSON header, one NUL byte, then every parameter as a
//! little-endian `f64` in layer order (weights before biases).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HeadConfig, LayerSpec, Model, NnError};

pub const CHECKPOINT_FORMAT: &str = "circdir-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    input_size: usize,
    seed: u64,
    head: HeadConfig,
    layers: Vec<LayerEntry>,
    parameter_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerEntry {
    spec: LayerSpec,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    weights: usize,
    biases: usize,
}

pub fn write_checkpoint<W: Write>(model: &Model, mut out: W) -> Result<(), NnError> {
    let header = Header {
        format: CHECKPOINT_FORMAT.into(),
        version: VERSION,
        input_size: model.input_size(),
        seed: model.seed(),
        head: model.head(),
        layers: model
            .layers
            .iter()
            .map(|l| LayerEntry {
                spec: l.spec,
                input_shape: l.in_shape.clone(),
                output_shape: l.out_shape.clone(),
                weights: l.weights.len(),
                biases: l.bias.len(),
            })
            .collect(),
        parameter_count: model.param_count(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    out.write_all(&json)?;
    out.write_all(&[0])?;
    let params = model.params_flat();
    let mut blob = Vec::with_capacity(params.len() * 8);
    for p in params {
        blob.extend_from_slice(&p.to_le_bytes());
    }
    out.write_all(&blob)?;
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Model, NnError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let nul = bytes
        .iter()
        .position(|&b| b == 0)
        .ok_or_else(|| NnError::Checkpoint("missing NUL separator after the header".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[..nul]).map_err(|e| NnError::Checkpoint(format!("bad header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT || header.version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported format {} v{}", header.format, header.version)));
    }

    let specs: Vec<LayerSpec> = header.layers.iter().map(|l| l.spec).collect();
    let mut model = Model::uninitialized(header.input_size, &specs, header.head, header.seed)?;
    for (i, (layer, entry)) in model.layers.iter().zip(&header.layers).enumerate() {
        if layer.in_shape != entry.input_shape
            || layer.out_shape != entry.output_shape
            || layer.weights.len() != entry.weights
            || layer.bias.len() != entry.biases
        {
            return Err(NnError::Checkpoint(format!("layer {i} shapes disagree with its spec")));
        }
    }
    if model.param_count() != header.parameter_count {
        return Err(NnError::Checkpoint("parameter count disagrees with the layers".into()));
    }

    let blob = &bytes[nul + 1..];
    if blob.len() != header.parameter_count * 8 {
        return Err(NnError::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            header.parameter_count * 8,
            blob.len()
        )));
    }
    let params: Vec<f64> = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    model.set_params_flat(&params)?;
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<(), NnError> {
    let file = fs::File::create(path)?;
    write_checkpoint(model, std::io::BufWriter::new(file))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model, NnError> {
    read_checkpoint(std::io::BufReader::new(fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{ActivationKind, Encoding};
    use crate::nn::{probing_cnn, Scale};

    fn model() -> Model {
        let head = HeadConfig::new(Encoding::Angle, ActivationKind::Cyclic).unwrap();
        probing_cnn(32, Scale::Desk, head, 42).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let mut bytes = Vec::new();
        write_checkpoint(&m, &mut bytes).unwrap();
        let back = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(back.specs(), m.specs());
        assert_eq!(back.head(), m.head());
        assert_eq!(back.seed(), 42);
        let same = m.params_flat().iter().zip(back.params_flat()).all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same);

        let mut again = Vec::new();
        write_checkpoint(&back, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn layout() {
        let m = model();
        let mut bytes = Vec::new();
        write_checkpoint(&m, &mut bytes).unwrap();
        let nul = bytes.iter().position(|&b| b == 0).unwrap();
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nul]).unwrap();
        assert_eq!(header["format"], CHECKPOINT_FORMAT);
        assert_eq!(header["head"]["encoding"], "1N");
        assert_eq!(header["layers"][0]["spec"]["type"], "conv2d");
        assert_eq!(bytes.len() - nul - 1, m.param_count() * 8);
        let first = f64::from_le_bytes(bytes[nul + 1..nul + 9].try_into().unwrap());
        assert_eq!(first, m.params_flat()[0]);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut bytes = Vec::new();
        write_checkpoint(&model(), &mut bytes).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let no_nul: Vec<u8> = bytes.iter().copied().take_while(|&b| b != 0).collect();
        assert!(read_checkpoint(no_nul.as_slice()).is_err());
        let text = String::from_utf8(no_nul).unwrap().replace("\"seed\"", "\"sede\"");
        let mut broken = text.into_bytes();
        broken.push(0);
        assert!(read_checkpoint(broken.as_slice()).is_err());
    }
}
