//! PNG encoding for the render layers and edge maps.
//!
//! Depth maps are 16-bit grayscale in millimeters with a 20 m far clip;
//! misses and anything beyond the clip are stored as 0. The depth
//! convention travels in a `tEXt` chunk so consumers never have to guess.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEPTH_FAR_CLIP_M: f32 = 20.0;
pub const DEPTH_CONVENTION_KEY: &str = "depth_convention";

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("png encode: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("png decode: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("unsupported png layout: {0}")]
    Unsupported(String),
    #[error("buffer size {got} does not match {width}x{height}x{channels}")]
    BadBuffer { got: usize, width: u32, height: u32, channels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthConvention {
    /// Distance: smaller is closer.
    Metric,
    /// Inverse depth: larger is closer.
    Disparity,
}

impl fmt::Display for DepthConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DepthConvention::Metric => "metric",
            DepthConvention::Disparity => "disparity",
        })
    }
}

impl FromStr for DepthConvention {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "metric" => Ok(DepthConvention::Metric),
            "disparity" => Ok(DepthConvention::Disparity),
            other => Err(format!("unknown depth convention `{other}`")),
        }
    }
}

/// A single-channel float map plus its convention.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
    pub convention: Option<DepthConvention>,
}

impl DepthMap {
    pub fn get(&self, x: u32, y: u32) -> Option<f32> {
        (x < self.width && y < self.height).then(|| self.values[(y * self.width + x) as usize])
    }
}

fn check(buf: usize, width: u32, height: u32, channels: usize) -> Result<(), ImageIoError> {
    if buf != width as usize * height as usize * channels {
        return Err(ImageIoError::BadBuffer { got: buf, width, height, channels });
    }
    Ok(())
}

fn encode<W: Write>(
    out: W,
    width: u32,
    height: u32,
    color: png::ColorType,
    depth: png::BitDepth,
    text: &[(&str, String)],
    data: &[u8],
) -> Result<(), ImageIoError> {
    let mut enc = png::Encoder::new(out, width, height);
    enc.set_color(color);
    enc.set_depth(depth);
    for (k, v) in text {
        enc.add_text_chunk(k.to_string(), v.clone())?;
    }
    let mut writer = enc.write_header()?;
    writer.write_image_data(data)?;
    writer.finish()?;
    Ok(())
}

pub fn encode_rgb<W: Write>(out: W, width: u32, height: u32, rgb: &[u8]) -> Result<(), ImageIoError> {
    check(rgb.len(), width, height, 3)?;
    encode(out, width, height, png::ColorType::Rgb, png::BitDepth::Eight, &[], rgb)
}

pub fn encode_gray8<W: Write>(out: W, width: u32, height: u32, data: &[u8]) -> Result<(), ImageIoError> {
    check(data.len(), width, height, 1)?;
    encode(out, width, height, png::ColorType::Grayscale, png::BitDepth::Eight, &[], data)
}

/// 1-bit grayscale; any nonzero input is white.
pub fn encode_binary<W: Write>(out: W, width: u32, height: u32, data: &[u8]) -> Result<(), ImageIoError> {
    check(data.len(), width, height, 1)?;
    let stride = (width as usize).div_ceil(8);
    let mut packed = vec![0u8; stride * height as usize];
    for y in 0..height as usize {
        for x in 0..width as usize {
            if data[y * width as usize + x] != 0 {
                packed[y * stride + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    encode(out, width, height, png::ColorType::Grayscale, png::BitDepth::One, &[], &packed)
}

/// Millimeter quantization with far clip; non-finite and clipped values become 0.
pub fn quantize_depth_mm(meters: f32) -> u16 {
    if !meters.is_finite() || meters <= 0.0 || meters > DEPTH_FAR_CLIP_M {
        0
    } else {
        (meters * 1000.0).round() as u16
    }
}

pub fn encode_depth16<W: Write>(
    out: W,
    width: u32,
    height: u32,
    depth_m: &[f32],
    convention: DepthConvention,
) -> Result<(), ImageIoError> {
    check(depth_m.len(), width, height, 1)?;
    let mut data = Vec::with_capacity(depth_m.len() * 2);
    for &d in depth_m {
        data.extend_from_slice(&quantize_depth_mm(d).to_be_bytes());
    }
    let text = [
        (DEPTH_CONVENTION_KEY, convention.to_string()),
        ("depth_units", "mm".to_string()),
        ("far_clip_m", format!("{DEPTH_FAR_CLIP_M}")),
    ];
    encode(out, width, height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &text, &data)
}

/// Decoded single-channel image: samples widened to u16 plus text chunks.
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub samples: Vec<u16>,
    pub text: Vec<(String, String)>,
}

fn buffered<R: Read>(mut input: R) -> Result<std::io::Cursor<Vec<u8>>, ImageIoError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| ImageIoError::Unsupported(e.to_string()))?;
    Ok(std::io::Cursor::new(bytes))
}

pub fn decode_gray<R: Read>(input: R) -> Result<GrayImage, ImageIoError> {
    let mut decoder = png::Decoder::new(buffered(input)?);
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader.next_frame(&mut buf)?;
    let info = reader.info();
    if frame.color_type != png::ColorType::Grayscale {
        return Err(ImageIoError::Unsupported(format!("{:?}", frame.color_type)));
    }
    let (w, h) = (frame.width as usize, frame.height as usize);
    let samples = match frame.bit_depth {
        png::BitDepth::Sixteen => buf[..w * h * 2].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect(),
        png::BitDepth::Eight => buf[..w * h].iter().map(|&v| v as u16).collect(),
        png::BitDepth::One => {
            let stride = frame.line_size;
            (0..h)
                .flat_map(|y| (0..w).map(move |x| (y, x)))
                .map(|(y, x)| ((buf[y * stride + x / 8] >> (7 - x % 8)) & 1) as u16)
                .collect()
        }
        other => return Err(ImageIoError::Unsupported(format!("{other:?} bit depth"))),
    };
    let text = info.uncompressed_latin1_text.iter().map(|t| (t.keyword.clone(), t.text.clone())).collect();
    Ok(GrayImage { width: frame.width, height: frame.height, samples, text })
}

/// Reads a 16-bit millimeter depth PNG back into meters; zero samples are +∞.
pub fn decode_depth16<R: Read>(input: R) -> Result<DepthMap, ImageIoError> {
    let img = decode_gray(input)?;
    let convention = img.text.iter().find(|(k, _)| k == DEPTH_CONVENTION_KEY).and_then(|(_, v)| v.parse().ok());
    let values = img.samples.iter().map(|&s| if s == 0 { f32::INFINITY } else { s as f32 / 1000.0 }).collect();
    Ok(DepthMap { width: img.width, height: img.height, values, convention })
}

/// 8-bit RGB decode for user-supplied panoramas.
pub fn decode_rgb8<R: Read>(input: R) -> Result<(u32, u32, Vec<u8>), ImageIoError> {
    let mut decoder = png::Decoder::new(buffered(input)?);
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader.next_frame(&mut buf)?;
    let channels = match frame.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        other => return Err(ImageIoError::Unsupported(format!("{other:?}"))),
    };
    let mut rgb = Vec::with_capacity(frame.width as usize * frame.height as usize * 3);
    for px in buf[..frame.buffer_size()].chunks_exact(channels) {
        if channels < 3 {
            rgb.extend_from_slice(&[px[0], px[0], px[0]]);
        } else {
            rgb.extend_from_slice(&px[..3]);
        }
    }
    Ok((frame.width, frame.height, rgb))
}
