//! Versioned weight files: architecture descriptor, then each layer's
//! weights and bias as little-endian `f64`.

use std::path::Path;

use super::{Architecture, LayerSpec, Network, Tensor};
use crate::codec::{to_u32, Reader, Write};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PHSNET\0\0";
const VERSION: u32 = 1;

pub fn write_weights(net: &Network) -> Result<Vec<u8>> {
    let arch = net.architecture();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.put_u32(VERSION);
    out.put_u32(to_u32(arch.input_channels, "input channels")?);
    out.put_u32(to_u32(arch.height, "height")?);
    out.put_u32(to_u32(arch.width, "width")?);
    out.put_u32(to_u32(arch.layers.len(), "layer count")?);
    for spec in &arch.layers {
        out.put_u32(to_u32(spec.out_channels, "channels")?);
        out.put_u32(to_u32(spec.kernel, "kernel")?);
        out.put_u32(to_u32(spec.dilation, "dilation")?);
        out.put_u32(to_u32(spec.pool.unwrap_or(0), "pool")?);
    }
    for layer in net.layers() {
        for t in [&layer.weight, &layer.bias] {
            out.put_u64(t.len() as u64);
            for &v in t.data() {
                out.put_f64(v);
            }
        }
    }
    Ok(out)
}

pub fn read_weights(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader::new(bytes, "weight file");
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Version {
            expected: VERSION,
            found: version,
        });
    }
    let input_channels = r.u32()? as usize;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    if n_layers > 64 {
        return Err(Error::Format(format!("implausible layer count {n_layers}")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let out_channels = r.u32()? as usize;
        let kernel = r.u32()? as usize;
        let dilation = r.u32()? as usize;
        let pool = r.u32()? as usize;
        layers.push(LayerSpec {
            out_channels,
            kernel,
            dilation,
            pool: (pool > 0).then_some(pool),
        });
    }
    let arch = Architecture {
        input_channels,
        height,
        width,
        layers,
    };
    let template = Network::zeros(arch.clone()).map_err(|e| Error::Format(format!("bad architecture: {e}")))?;
    let mut params = Vec::with_capacity(n_layers);
    for layer in template.layers() {
        let mut read = |shape: &[usize]| -> Result<Tensor> {
            let n = r.count(8)?;
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            Tensor::from_vec(shape, data).map_err(|e| Error::Format(e.to_string()))
        };
        let w = read(layer.weight.shape())?;
        let b = read(layer.bias.shape())?;
        params.push((w, b));
    }
    r.finish()?;
    Network::from_parameters(arch, params)
}

pub fn save_weights(path: impl AsRef<Path>, net: &Network) -> Result<()> {
    std::fs::write(path, write_weights(net)?)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Network> {
    read_weights(&std::fs::read(path)?)
}

/// Loads a weight file and refuses it unless it has architecture `expected`.
pub fn load_weights_expecting(path: impl AsRef<Path>, expected: &Architecture) -> Result<Network> {
    let net = load_weights(path)?;
    if net.architecture() != expected {
        return Err(Error::ArchitectureMismatch {
            expected: expected.to_string(),
            found: net.architecture().to_string(),
        });
    }
    Ok(net)
}
