//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  "AHTCKPT\0"
//! version    u32      FORMAT_VERSION
//! count      u32      number of network sections
//! per network:
//!   tag      "NET\0"
//!   name     u32 length + UTF-8
//!   layers   u32 L, u64 input width, then L x (u64 output width, u8 activation)
//!   version  u64 parameter version
//!   params   f64 x num_params, declared layer order (weights row-major, bias)
//!   optional "ADAM": f64 lr, beta1, beta2, eps; u64 step, skipped;
//!                    f64 x num_params first moments, f64 x num_params second moments
//! scalars    "SCAL", u32 count, count x (u32 length + UTF-8 key, f64 value)
//! end        "END\0"
//! ```
//!
//! Every integer and float is little-endian. Files are written to a sibling
//! temporary file and renamed into place.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::adam::Adam;
use crate::nn::mlp::{Activation, Dense, Gradients, Mlp};

pub const MAGIC: &[u8; 8] = b"AHTCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedNetwork {
    pub name: String,
    pub net: Mlp,
    pub optimizer: Option<Adam>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub networks: Vec<NamedNetwork>,
    pub scalars: Vec<(String, f64)>,
}

impl Checkpoint {
    pub fn network(&self, name: &str) -> Option<&NamedNetwork> {
        self.networks.iter().find(|n| n.name == name)
    }

    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.scalars.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_u32(&mut out, self.networks.len() as u32);
        for n in &self.networks {
            out.extend_from_slice(b"NET\0");
            put_str(&mut out, &n.name);
            put_u32(&mut out, n.net.layers().len() as u32);
            put_u64(&mut out, n.net.input_width() as u64);
            for l in n.net.layers() {
                put_u64(&mut out, l.output_width() as u64);
                out.push(l.activation.tag());
            }
            put_u64(&mut out, n.net.version());
            put_f64s(&mut out, &n.net.params_flat());
            if let Some(opt) = &n.optimizer {
                out.extend_from_slice(b"ADAM");
                put_f64s(&mut out, &[opt.lr, opt.beta1, opt.beta2, opt.eps]);
                put_u64(&mut out, opt.step_count());
                put_u64(&mut out, opt.skipped_steps());
                let (m, v) = opt.moments();
                put_f64s(&mut out, &m.flatten());
                put_f64s(&mut out, &v.flatten());
            }
        }
        out.extend_from_slice(b"SCAL");
        put_u32(&mut out, self.scalars.len() as u32);
        for (k, v) in &self.scalars {
            put_str(&mut out, k);
            put_f64s(&mut out, &[*v]);
        }
        out.extend_from_slice(b"END\0");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err("not a checkpoint file (bad magic)".into());
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let count = r.u32()?;
        let mut networks = Vec::with_capacity(count as usize);
        for _ in 0..count {
            r.expect_tag(b"NET\0")?;
            let name = r.string()?;
            let num_layers = r.u32()? as usize;
            if num_layers == 0 {
                return Err(format!("network `{name}` has no layers"));
            }
            let mut width = r.u64()? as usize;
            let mut layers = Vec::with_capacity(num_layers);
            for _ in 0..num_layers {
                let out = r.u64()? as usize;
                let act = Activation::from_tag(r.u8()?).ok_or("unknown activation tag")?;
                layers.push(Dense::zeros(width, out, act));
                width = out;
            }
            let param_version = r.u64()?;
            let mut net = Mlp::from_layers(layers, param_version).map_err(|e| e.to_string())?;
            let params = r.f64s(net.num_params())?;
            net.set_params_flat(&params).map_err(|e| e.to_string())?;
            let optimizer = if r.peek_tag(b"ADAM") {
                r.expect_tag(b"ADAM")?;
                let h = r.f64s(4)?;
                let step = r.u64()?;
                let skipped = r.u64()?;
                let m = Gradients::from_flat(&net, &r.f64s(net.num_params())?).map_err(|e| e.to_string())?;
                let v = Gradients::from_flat(&net, &r.f64s(net.num_params())?).map_err(|e| e.to_string())?;
                Some(Adam::from_parts([h[0], h[1], h[2], h[3]], step, skipped, m, v))
            } else {
                None
            };
            networks.push(NamedNetwork { name, net, optimizer });
        }
        r.expect_tag(b"SCAL")?;
        let n = r.u32()?;
        let mut scalars = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let k = r.string()?;
            let v = r.f64s(1)?[0];
            scalars.push((k, v));
        }
        r.expect_tag(b"END\0")?;
        if r.pos != bytes.len() {
            return Err("trailing bytes after end tag".into());
        }
        Ok(Self { networks, scalars })
    }

    /// Write to a temporary sibling file and rename it over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let err = |reason: String| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        };
        let mut tmp_name = path.file_name().ok_or_else(|| err("no file name".into()))?.to_os_string();
        tmp_name.push(".tmp");
        let tmp = path.with_file_name(tmp_name);
        {
            let mut f = std::fs::File::create(&tmp).map_err(|e| err(e.to_string()))?;
            f.write_all(&self.to_bytes()).map_err(|e| err(e.to_string()))?;
            f.sync_all().map_err(|e| err(e.to_string()))?;
        }
        std::fs::rename(&tmp, path).map_err(|e| err(e.to_string()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.take(n.checked_mul(8).ok_or("size overflow")?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "invalid UTF-8 name".to_string())
    }

    fn peek_tag(&self, tag: &[u8; 4]) -> bool {
        self.bytes.get(self.pos..self.pos + 4) == Some(tag.as_slice())
    }

    fn expect_tag(&mut self, tag: &[u8; 4]) -> std::result::Result<(), String> {
        let at = self.pos;
        if self.take(4)? != tag {
            return Err(format!(
                "expected section `{}` at byte {at}",
                String::from_utf8_lossy(tag).trim_end_matches('\0')
            ));
        }
        Ok(())
    }
}
