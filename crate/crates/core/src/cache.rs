//! Cached preprocessed datasets.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "DNBD" | version u32 | sample count u64 | sigma count u16
//! per sample: id (u32 len + UTF-8) | H u32 | W u32 | clean f32 × H·W
//!             then per sigma: sigma_raw u16 | noisy f32 × H·W
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::codec::{Reader, Writer};
use crate::error::{invalid_arg, FormatError, Result};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: [u8; 4] = *b"DNBD";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CachedSample {
    pub id: String,
    /// `(1, 1, H, W)`.
    pub clean: Tensor,
    /// Noisy versions keyed by `sigma_raw`, same shape as `clean`.
    pub noisy: Vec<(u16, Tensor)>,
}

/// Every sample must carry the same sigma list, in the same order.
pub fn encode_dataset(samples: &[CachedSample]) -> Result<Vec<u8>> {
    let sigmas: Vec<u16> = samples.first().map(|s| s.noisy.iter().map(|&(s, _)| s).collect()).unwrap_or_default();
    let mut w = Writer::default();
    w.bytes(&DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.u64(samples.len() as u64);
    w.u16(sigmas.len() as u16);
    for s in samples {
        let [_, _, h, wd] = s.clean.dims4()?;
        if s.clean.numel() != h * wd {
            return Err(invalid_arg!("{}: cached images must be single-channel", s.id));
        }
        if s.noisy.iter().map(|&(sigma, _)| sigma).ne(sigmas.iter().copied()) {
            return Err(invalid_arg!("{}: sigma list differs from the first sample", s.id));
        }
        w.str(&s.id);
        w.u32(h as u32);
        w.u32(wd as u32);
        w.f32s(s.clean.data());
        for (sigma, noisy) in &s.noisy {
            if !noisy.same_shape(&s.clean) {
                return Err(invalid_arg!("{}: noisy image shape differs from clean", s.id));
            }
            w.u16(*sigma);
            w.f32s(noisy.data());
        }
    }
    Ok(w.buf)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<CachedSample>, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    let version = r.u32("version")?;
    if version != DATASET_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let count = r.u64("sample count")?;
    let sigma_count = r.u16("sigma count")?;
    let mut samples = Vec::new();
    for _ in 0..count {
        let id = r.str("sample id")?;
        let h = r.u32("height")? as usize;
        let w = r.u32("width")? as usize;
        let image = |data: Vec<f32>| {
            Tensor::new(&[1, 1, h, w], data).map_err(|e| FormatError::Malformed(format!("{}: {}", id, e)))
        };
        let clean = image(r.f32s(h * w, "clean pixels")?)?;
        let mut noisy = Vec::with_capacity(sigma_count as usize);
        for _ in 0..sigma_count {
            let sigma = r.u16("sigma")?;
            noisy.push((sigma, image(r.f32s(h * w, "noisy pixels")?)?));
        }
        samples.push(CachedSample { id, clean, noisy });
    }
    r.finish()?;
    Ok(samples)
}
