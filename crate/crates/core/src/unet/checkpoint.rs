//! Binary checkpoint container for the denoiser.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "EBT1" | version u32 | depth u32 | base_filters u32 | in_ch u32 |
//! out_ch u32 | input_h u32 | input_w u32 | dropout f64 | norm_constant f64 |
//! n_tensors u32 | { name_len u32 | name | ndims u32 | dims u32... | f32 data }*
//! ```
//!
//! Weights round-trip bit-exactly; batchnorm running statistics and the
//! training loss history ride along as ordinary tensors.

use crate::error::{Error, Result};
use crate::unet::model::{UNet, UNetConfig};

const MAGIC: &[u8; 4] = b"EBT1";
const VERSION: u32 = 1;

/// Named views of every persistent tensor, in a fixed order.
fn tensor_names(config: &UNetConfig) -> Vec<String> {
    let mut names = Vec::new();
    let block = |prefix: &str, names: &mut Vec<String>| {
        for part in [
            "conv1.w", "conv1.b", "bn1.gamma", "bn1.beta", "bn1.running_mean", "bn1.running_var",
            "conv2.w", "conv2.b", "bn2.gamma", "bn2.beta", "bn2.running_mean", "bn2.running_var",
        ] {
            names.push(format!("{prefix}.{part}"));
        }
    };
    for i in 0..config.depth {
        block(&format!("enc{i}"), &mut names);
    }
    block("bottleneck", &mut names);
    for i in 0..config.depth {
        names.push(format!("up{i}.w"));
        names.push(format!("up{i}.b"));
    }
    for i in 0..config.depth {
        block(&format!("dec{i}"), &mut names);
    }
    names.push("final.w".into());
    names.push("final.b".into());
    names
}

fn collect_tensors(net: &UNet<f32>) -> Vec<(Vec<usize>, Vec<f32>)> {
    let mut out = Vec::new();
    let push4 = |a: &ndarray::Array4<f32>, out: &mut Vec<(Vec<usize>, Vec<f32>)>| {
        out.push((a.shape().to_vec(), a.as_slice().unwrap().to_vec()));
    };
    let push1 = |a: &ndarray::Array1<f32>, out: &mut Vec<(Vec<usize>, Vec<f32>)>| {
        out.push((vec![a.len()], a.as_slice().unwrap().to_vec()));
    };
    let push_block = |b: &crate::unet::model::ConvBlock<f32>, out: &mut Vec<(Vec<usize>, Vec<f32>)>| {
        push4(&b.conv1.w, out);
        push1(&b.conv1.b, out);
        push1(&b.bn1.gamma, out);
        push1(&b.bn1.beta, out);
        push1(&b.bn1.running_mean, out);
        push1(&b.bn1.running_var, out);
        push4(&b.conv2.w, out);
        push1(&b.conv2.b, out);
        push1(&b.bn2.gamma, out);
        push1(&b.bn2.beta, out);
        push1(&b.bn2.running_mean, out);
        push1(&b.bn2.running_var, out);
    };
    for b in &net.enc {
        push_block(b, &mut out);
    }
    push_block(&net.bottleneck, &mut out);
    for u in &net.ups {
        push4(&u.w, &mut out);
        push1(&u.b, &mut out);
    }
    for b in &net.dec {
        push_block(b, &mut out);
    }
    push4(&net.final_conv.w, &mut out);
    push1(&net.final_conv.b, &mut out);
    out
}

fn assign_tensors(net: &mut UNet<f32>, tensors: Vec<(Vec<usize>, Vec<f32>)>) -> Result<()> {
    let mut it = tensors.into_iter();
    macro_rules! take {
        ($a:expr, $name:expr) => {{
            let (shape, data) =
                it.next().ok_or_else(|| Error::Format("missing tensor".into()))?;
            if shape != $a.shape() {
                return Err(Error::Shape(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    $name,
                    shape,
                    $a.shape()
                )));
            }
            $a.as_slice_mut().unwrap().copy_from_slice(&data);
        }};
    }
    macro_rules! take_block {
        ($b:expr) => {{
            take!($b.conv1.w, "conv1.w");
            take!($b.conv1.b, "conv1.b");
            take!($b.bn1.gamma, "bn1.gamma");
            take!($b.bn1.beta, "bn1.beta");
            take!($b.bn1.running_mean, "bn1.running_mean");
            take!($b.bn1.running_var, "bn1.running_var");
            take!($b.conv2.w, "conv2.w");
            take!($b.conv2.b, "conv2.b");
            take!($b.bn2.gamma, "bn2.gamma");
            take!($b.bn2.beta, "bn2.beta");
            take!($b.bn2.running_mean, "bn2.running_mean");
            take!($b.bn2.running_var, "bn2.running_var");
        }};
    }
    for i in 0..net.enc.len() {
        take_block!(net.enc[i]);
    }
    take_block!(net.bottleneck);
    for i in 0..net.ups.len() {
        take!(net.ups[i].w, "up.w");
        take!(net.ups[i].b, "up.b");
    }
    for i in 0..net.dec.len() {
        take_block!(net.dec[i]);
    }
    take!(net.final_conv.w, "final.w");
    take!(net.final_conv.b, "final.b");
    Ok(())
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!(
                "checkpoint truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
}

/// Serialize network weights, normalization constant and loss history.
pub fn serialize(net: &UNet<f32>, norm_constant: f64, loss_history: &[f64]) -> Vec<u8> {
    let cfg = net.config;
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u32(cfg.depth as u32);
    w.u32(cfg.base_filters as u32);
    w.u32(cfg.in_channels as u32);
    w.u32(cfg.out_channels as u32);
    w.u32(cfg.input_size.0 as u32);
    w.u32(cfg.input_size.1 as u32);
    w.f64(cfg.dropout_rate);
    w.f64(norm_constant);

    let names = tensor_names(&cfg);
    let tensors = collect_tensors(net);
    debug_assert_eq!(names.len(), tensors.len());
    w.u32(names.len() as u32 + 1); // + loss history
    for (name, (shape, data)) in names.iter().zip(tensors.iter()) {
        w.u32(name.len() as u32);
        w.buf.extend_from_slice(name.as_bytes());
        w.u32(shape.len() as u32);
        for &d in shape {
            w.u32(d as u32);
        }
        for &v in data {
            w.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let name = "meta.loss_history";
    w.u32(name.len() as u32);
    w.buf.extend_from_slice(name.as_bytes());
    w.u32(1);
    w.u32(loss_history.len() as u32);
    for &v in loss_history {
        w.buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.buf
}

/// Deserialize into a freshly constructed network.
pub fn deserialize(bytes: &[u8]) -> Result<(UNet<f32>, f64, Vec<f64>)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.bytes(4)? != MAGIC {
        return Err(Error::Format("bad magic; not a denoiser checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let config = UNetConfig {
        depth: r.u32()? as usize,
        base_filters: r.u32()? as usize,
        in_channels: r.u32()? as usize,
        out_channels: r.u32()? as usize,
        input_size: (r.u32()? as usize, r.u32()? as usize),
        dropout_rate: r.f64()?,
    };
    config.validate().map_err(|e| Error::Format(format!("invalid checkpoint config: {e}")))?;
    let norm_constant = r.f64()?;
    let n_tensors = r.u32()? as usize;

    let expected = tensor_names(&config);
    let mut tensors: Vec<(Vec<usize>, Vec<f32>)> = Vec::with_capacity(expected.len());
    let mut loss_history = Vec::new();
    for t in 0..n_tensors {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.bytes(name_len)?)
            .map_err(|_| Error::Format("tensor name is not utf-8".into()))?
            .to_string();
        let ndims = r.u32()? as usize;
        if ndims > 4 {
            return Err(Error::Format(format!("tensor {name} has {ndims} dims")));
        }
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            shape.push(r.u32()? as usize);
        }
        let count: usize = shape.iter().product();
        let raw = r.bytes(count * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if name == "meta.loss_history" {
            loss_history = data.iter().map(|&v| v as f64).collect();
            continue;
        }
        let idx = tensors.len();
        if idx >= expected.len() || expected[idx] != name {
            return Err(Error::Format(format!(
                "unexpected tensor #{t} named {name:?}"
            )));
        }
        tensors.push((shape, data));
    }
    if tensors.len() != expected.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} weight tensors, expected {}",
            tensors.len(),
            expected.len()
        )));
    }

    let mut net = UNet::init(config, 0)?;
    assign_tensors(&mut net, tensors)?;
    Ok((net, norm_constant, loss_history))
}
