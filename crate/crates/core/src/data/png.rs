//! 8-bit and 16-bit RGB PNG decoding into `[0, 1]` tensors, and encoding back.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

fn image_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Raw RGB samples of a PNG together with its bit depth.
struct Decoded {
    width: usize,
    height: usize,
    depth: BitDepth,
    bytes: Vec<u8>,
}

fn decode(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| image_err(path, format!("PNG decode failed: {e}")))?;
    let info = reader.info();
    if info.color_type != ColorType::Rgb {
        return Err(image_err(
            path,
            format!("expected RGB image, found {:?}", info.color_type),
        ));
    }
    let (width, height, depth) = (info.width as usize, info.height as usize, info.bit_depth);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| image_err(path, "image too large"))?;
    let mut bytes = vec![0u8; size];
    let frame = reader
        .next_frame(&mut bytes)
        .map_err(|e| image_err(path, format!("PNG decode failed: {e}")))?;
    bytes.truncate(frame.buffer_size());
    Ok(Decoded {
        width,
        height,
        depth,
        bytes,
    })
}

/// Interleaved RGB samples to a planar `(1, 3, H, W)` tensor.
fn planar(width: usize, height: usize, samples: impl Iterator<Item = f32>) -> Tensor {
    let plane = width * height;
    let mut data = vec![0.0f32; 3 * plane];
    for (i, v) in samples.enumerate().take(3 * plane) {
        let (px, c) = (i / 3, i % 3);
        data[c * plane + px] = v;
    }
    Tensor::from_vec(Shape::new(1, 3, height, width), data).expect("3 planes")
}

/// 8-bit RGB PNG, values divided by 255.
pub fn load_png8(path: &Path) -> Result<Tensor> {
    let d = decode(path)?;
    if d.depth != BitDepth::Eight {
        return Err(image_err(
            path,
            format!("expected 8-bit samples, found {:?}", d.depth),
        ));
    }
    Ok(planar(
        d.width,
        d.height,
        d.bytes.iter().map(|&b| b as f32 / 255.0),
    ))
}

/// 16-bit RGB PNG, values divided by 65535.
pub fn load_png16(path: &Path) -> Result<Tensor> {
    let d = decode(path)?;
    if d.depth != BitDepth::Sixteen {
        return Err(image_err(
            path,
            format!("expected 16-bit samples, found {:?}", d.depth),
        ));
    }
    Ok(planar(
        d.width,
        d.height,
        d.bytes
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 / 65535.0),
    ))
}

/// 8- or 16-bit RGB PNG, normalized by its own maximum code value.
pub fn load_png(path: &Path) -> Result<Tensor> {
    let d = decode(path)?;
    match d.depth {
        BitDepth::Eight => Ok(planar(
            d.width,
            d.height,
            d.bytes.iter().map(|&b| b as f32 / 255.0),
        )),
        BitDepth::Sixteen => Ok(planar(
            d.width,
            d.height,
            d.bytes
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 / 65535.0),
        )),
        other => Err(image_err(path, format!("unsupported bit depth {other:?}"))),
    }
}

fn interleave(x: &Tensor, path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let s = x.shape();
    if s.n != 1 || s.c != 3 {
        return Err(image_err(
            path,
            format!("can only encode a (1, 3, H, W) tensor, got {s}"),
        ));
    }
    let plane = s.plane();
    let mut out = Vec::with_capacity(3 * plane);
    for px in 0..plane {
        for c in 0..3 {
            out.push(x.data()[c * plane + px].clamp(0.0, 1.0));
        }
    }
    Ok((s.w, s.h, out))
}

fn encode(path: &Path, width: usize, height: usize, depth: BitDepth, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(ColorType::Rgb);
    enc.set_depth(depth);
    let mut writer = enc
        .write_header()
        .map_err(|e| image_err(path, format!("PNG encode failed: {e}")))?;
    writer
        .write_image_data(bytes)
        .map_err(|e| image_err(path, format!("PNG encode failed: {e}")))?;
    writer
        .finish()
        .map_err(|e| image_err(path, format!("PNG encode failed: {e}")))
}

/// Clamp to `[0, 1]`, scale by 65535 and round to nearest.
pub fn save_png16(x: &Tensor, path: &Path) -> Result<()> {
    let (w, h, samples) = interleave(x, path)?;
    let mut bytes = Vec::with_capacity(samples.len() * 2);
    for v in samples {
        bytes.extend_from_slice(&((v * 65535.0).round() as u16).to_be_bytes());
    }
    encode(path, w, h, BitDepth::Sixteen, &bytes)
}

/// Clamp to `[0, 1]`, scale by 255 and round to nearest.
pub fn save_png8(x: &Tensor, path: &Path) -> Result<()> {
    let (w, h, samples) = interleave(x, path)?;
    let bytes: Vec<u8> = samples.iter().map(|v| (v * 255.0).round() as u8).collect();
    encode(path, w, h, BitDepth::Eight, &bytes)
}
