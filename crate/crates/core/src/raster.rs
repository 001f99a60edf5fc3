//! Raster types and Netpbm/PNG codecs.
//!
//! Three in-memory image kinds flow through the pipeline:
//! - [`RgbRaster`]: interleaved 8-bit R,G,B
//! - [`GrayRaster`]: 8-bit intensities
//! - [`BinaryRaster`]: values in {0, 1}, where 1 marks foreground text
//!
//! PGM (P2/P5), PPM (P3/P6) and PBM (P1/P4) are encoded and decoded here.
//! PNG input is decoded through the `png` crate.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

/// Largest accepted width or height.
pub const MAX_DIMENSION: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type RasterResult<T> = Result<T, RasterError>;

fn check_dims(width: usize, height: usize, len: usize, channels: usize) -> RasterResult<()> {
    if width == 0 || height == 0 {
        return Err(RasterError::InvalidRaster(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    if width > MAX_DIMENSION || height > MAX_DIMENSION {
        return Err(RasterError::InvalidRaster(format!(
            "dimensions {width}x{height} exceed {MAX_DIMENSION}"
        )));
    }
    if len != width * height * channels {
        return Err(RasterError::InvalidRaster(format!(
            "expected {} samples for {width}x{height}x{channels}, got {len}",
            width * height * channels
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbRaster {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbRaster {
    /// `data` holds `width * height` interleaved RGB triples in row-major order.
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> RasterResult<Self> {
        check_dims(width, height, data.len(), 3)?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> RasterResult<Self> {
        check_dims(width, height, data.len(), 1)?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds a raster by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> RasterResult<Self> {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryRaster {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryRaster {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> RasterResult<Self> {
        check_dims(width, height, data.len(), 1)?;
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(RasterError::InvalidRaster(format!(
                "binary value {} at index {pos}",
                data[pos]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> RasterResult<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> RasterResult<Self> {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(u8::from(f(row, col)));
            }
        }
        Self::new(width, height, data)
    }

    /// Internal constructor for data already known to be 0/1 with matching length.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|&v| v <= 1));
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = u8::from(value);
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn complement(&self) -> BinaryRaster {
        Self::from_raw(
            self.width,
            self.height,
            self.data.iter().map(|&v| 1 - v).collect(),
        )
    }

    /// True when every foreground pixel of `self` is also foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryRaster) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }
}

/// A decoded image of whichever kind the source file holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Image {
    Rgb(RgbRaster),
    Gray(GrayRaster),
    Binary(BinaryRaster),
}

impl Image {
    /// Grayscale view used as pipeline input. Binary sources map text (1) to black.
    pub fn into_gray(self) -> GrayRaster {
        match self {
            Image::Rgb(rgb) => to_grayscale(&rgb),
            Image::Gray(gray) => gray,
            Image::Binary(bin) => GrayRaster {
                width: bin.width,
                height: bin.height,
                data: bin
                    .data
                    .iter()
                    .map(|&v| if v == 1 { 0 } else { 255 })
                    .collect(),
            },
        }
    }
}

/// BT.601 luma with round-half-up, computed in exact integer arithmetic.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let weighted = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
    ((weighted + 500) / 1000).min(255) as u8
}

pub fn to_grayscale(img: &RgbRaster) -> GrayRaster {
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| luma(p[0], p[1], p[2]))
        .collect();
    GrayRaster {
        width: img.width,
        height: img.height,
        data,
    }
}

// ---------------------------------------------------------------------------
// Netpbm
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PnmKind {
    PbmAscii,
    PgmAscii,
    PpmAscii,
    PbmBinary,
    PgmBinary,
    PpmBinary,
}

impl PnmKind {
    fn from_magic(magic: &[u8]) -> Option<Self> {
        match magic {
            b"P1" => Some(Self::PbmAscii),
            b"P2" => Some(Self::PgmAscii),
            b"P3" => Some(Self::PpmAscii),
            b"P4" => Some(Self::PbmBinary),
            b"P5" => Some(Self::PgmBinary),
            b"P6" => Some(Self::PpmBinary),
            _ => None,
        }
    }

    fn is_bitmap(self) -> bool {
        matches!(self, Self::PbmAscii | Self::PbmBinary)
    }

    fn channels(self) -> usize {
        match self {
            Self::PpmAscii | Self::PpmBinary => 3,
            _ => 1,
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn read_number(&mut self, what: &str) -> RasterResult<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(RasterError::CorruptImage(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RasterError::CorruptImage(format!("{what} out of range")))
    }

    /// A single '0' or '1' in a P1 body; digits need not be separated.
    fn read_bit(&mut self) -> RasterResult<u8> {
        self.skip_whitespace_and_comments();
        match self.bytes.get(self.pos) {
            Some(b'0') => {
                self.pos += 1;
                Ok(0)
            }
            Some(b'1') => {
                self.pos += 1;
                Ok(1)
            }
            Some(c) => Err(RasterError::CorruptImage(format!(
                "unexpected byte {c:#04x} in P1 body"
            ))),
            None => Err(RasterError::CorruptImage("truncated P1 body".into())),
        }
    }
}

fn rescale(value: usize, maxval: usize) -> u8 {
    if maxval == 255 {
        value as u8
    } else {
        ((value * 255 + maxval / 2) / maxval) as u8
    }
}

/// Decodes a Netpbm byte stream (P1–P6).
pub fn decode_pnm(bytes: &[u8]) -> RasterResult<Image> {
    let magic = bytes.get(..2).unwrap_or(bytes);
    let kind = PnmKind::from_magic(magic)
        .ok_or_else(|| RasterError::UnsupportedFormat("unrecognized magic number".into()))?;
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.read_number("width")?;
    let height = cur.read_number("height")?;
    if width == 0 || height == 0 || width > MAX_DIMENSION || height > MAX_DIMENSION {
        return Err(RasterError::CorruptImage(format!(
            "bad dimensions {width}x{height}"
        )));
    }
    let maxval = if kind.is_bitmap() {
        1
    } else {
        let m = cur.read_number("maxval")?;
        if m == 0 {
            return Err(RasterError::CorruptImage("maxval 0".into()));
        }
        if m > 255 {
            return Err(RasterError::UnsupportedFormat(format!(
                "maxval {m} (16-bit)"
            )));
        }
        m
    };
    let samples = width * height * kind.channels();

    let data = match kind {
        PnmKind::PgmBinary | PnmKind::PpmBinary | PnmKind::PbmBinary => {
            // Exactly one whitespace byte separates the header from the raster.
            match cur.bytes.get(cur.pos) {
                Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
                _ => {
                    return Err(RasterError::CorruptImage(
                        "missing header terminator".into(),
                    ))
                }
            }
            let body = &bytes[cur.pos..];
            if kind == PnmKind::PbmBinary {
                let stride = width.div_ceil(8);
                if body.len() < stride * height {
                    return Err(RasterError::CorruptImage(format!(
                        "expected {} payload bytes, found {}",
                        stride * height,
                        body.len()
                    )));
                }
                let mut data = Vec::with_capacity(width * height);
                for row in body.chunks_exact(stride).take(height) {
                    for col in 0..width {
                        data.push((row[col / 8] >> (7 - col % 8)) & 1);
                    }
                }
                data
            } else {
                if body.len() < samples {
                    return Err(RasterError::CorruptImage(format!(
                        "expected {samples} payload bytes, found {}",
                        body.len()
                    )));
                }
                let body = &body[..samples];
                if let Some(&v) = body.iter().find(|&&v| usize::from(v) > maxval) {
                    return Err(RasterError::CorruptImage(format!(
                        "sample {v} exceeds maxval {maxval}"
                    )));
                }
                body.iter()
                    .map(|&v| rescale(usize::from(v), maxval))
                    .collect()
            }
        }
        PnmKind::PbmAscii => (0..samples)
            .map(|_| cur.read_bit())
            .collect::<RasterResult<_>>()?,
        PnmKind::PgmAscii | PnmKind::PpmAscii => {
            let mut data = Vec::with_capacity(samples);
            for _ in 0..samples {
                let v = cur.read_number("sample")?;
                if v > maxval {
                    return Err(RasterError::CorruptImage(format!(
                        "sample {v} exceeds maxval {maxval}"
                    )));
                }
                data.push(rescale(v, maxval));
            }
            data
        }
    };

    Ok(match kind {
        PnmKind::PbmAscii | PnmKind::PbmBinary => {
            Image::Binary(BinaryRaster::new(width, height, data)?)
        }
        PnmKind::PgmAscii | PnmKind::PgmBinary => {
            Image::Gray(GrayRaster::new(width, height, data)?)
        }
        PnmKind::PpmAscii | PnmKind::PpmBinary => Image::Rgb(RgbRaster::new(width, height, data)?),
    })
}

pub fn encode_pgm(img: &GrayRaster) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// Plain (ASCII) PGM, mostly useful for fixtures and eyeballing small images.
pub fn encode_pgm_ascii(img: &GrayRaster) -> Vec<u8> {
    let mut out = format!("P2\n{} {}\n255\n", img.width, img.height);
    for row in img.data.chunks_exact(img.width) {
        let line: Vec<String> = row.iter().map(u8::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn encode_ppm(img: &RgbRaster) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// P4 bitmap: foreground (1) is written as a set bit, which PBM renders black.
pub fn encode_pbm(img: &BinaryRaster) -> Vec<u8> {
    let mut out = format!("P4\n{} {}\n", img.width, img.height).into_bytes();
    let stride = img.width.div_ceil(8);
    for row in img.data.chunks_exact(img.width) {
        let mut packed = vec![0u8; stride];
        for (col, &v) in row.iter().enumerate() {
            packed[col / 8] |= v << (7 - col % 8);
        }
        out.extend_from_slice(&packed);
    }
    out
}

/// Binary raster as an 8-bit PGM with 0 → 0 and 1 → 255.
pub fn encode_binary_pgm(img: &BinaryRaster) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| v * 255));
    out
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

fn decode_png(bytes: &[u8]) -> RasterResult<Image> {
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| RasterError::CorruptImage(format!("png header: {e}")))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| RasterError::CorruptImage(format!("png payload: {e}")))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let buf = &buf[..info.buffer_size()];
    match info.color_type {
        png::ColorType::Grayscale => Ok(Image::Gray(GrayRaster::new(width, height, buf.to_vec())?)),
        png::ColorType::GrayscaleAlpha => {
            let data = buf.chunks_exact(2).map(|p| p[0]).collect();
            Ok(Image::Gray(GrayRaster::new(width, height, data)?))
        }
        png::ColorType::Rgb => Ok(Image::Rgb(RgbRaster::new(width, height, buf.to_vec())?)),
        png::ColorType::Rgba => {
            let data = buf
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect();
            Ok(Image::Rgb(RgbRaster::new(width, height, data)?))
        }
        png::ColorType::Indexed => Err(RasterError::UnsupportedFormat("indexed png".into())),
    }
}

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Decodes an in-memory image, sniffing the format from its leading bytes.
pub fn decode_image(bytes: &[u8]) -> RasterResult<Image> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else {
        decode_pnm(bytes)
    }
}

pub fn load_image(path: impl AsRef<Path>) -> RasterResult<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => RasterError::FileNotFound(path.display().to_string()),
        _ => RasterError::Io(e),
    })?;
    decode_image(&bytes)
}

fn write_file(path: &Path, bytes: &[u8]) -> RasterResult<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(bytes)?;
    Ok(())
}

pub fn save_gray(img: &GrayRaster, path: impl AsRef<Path>) -> RasterResult<()> {
    write_file(path.as_ref(), &encode_pgm(img))
}

pub fn save_rgb(img: &RgbRaster, path: impl AsRef<Path>) -> RasterResult<()> {
    write_file(path.as_ref(), &encode_ppm(img))
}

/// Writes a PBM when the extension is `.pbm`, otherwise an 8-bit PGM (1 → 255).
pub fn save_binary(img: &BinaryRaster, path: impl AsRef<Path>) -> RasterResult<()> {
    let path = path.as_ref();
    let is_pbm = path
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("pbm"));
    let bytes = if is_pbm {
        encode_pbm(img)
    } else {
        encode_binary_pgm(img)
    };
    write_file(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_p5() {
        let bytes = b"P5\n2 2\n255\n\x00\x40\x80\xff";
        let img = decode_pnm(bytes).unwrap();
        assert_eq!(
            img,
            Image::Gray(GrayRaster::new(2, 2, vec![0, 64, 128, 255]).unwrap())
        );
    }

    #[test]
    fn decodes_p6() {
        let bytes = b"P6 1 1 255\n\xff\x00\x00";
        let img = decode_pnm(bytes).unwrap();
        assert_eq!(
            img,
            Image::Rgb(RgbRaster::new(1, 1, vec![255, 0, 0]).unwrap())
        );
    }

    #[test]
    fn decodes_ascii_with_comments() {
        let bytes = b"P2\n# made by hand\n3 1\n# max\n255\n0 17\n255\n";
        let img = decode_pnm(bytes).unwrap();
        assert_eq!(
            img,
            Image::Gray(GrayRaster::new(3, 1, vec![0, 17, 255]).unwrap())
        );
        let bytes = b"P1\n3 2\n101\n0 1 0\n";
        let img = decode_pnm(bytes).unwrap();
        assert_eq!(
            img,
            Image::Binary(BinaryRaster::new(3, 2, vec![1, 0, 1, 0, 1, 0]).unwrap())
        );
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let bytes = b"P5\n2 2\n255\n\x00\x40\x80";
        assert!(matches!(
            decode_pnm(bytes),
            Err(RasterError::CorruptImage(_))
        ));
        let bytes = b"P4\n9 2\n\x00\x00\x00";
        assert!(matches!(
            decode_pnm(bytes),
            Err(RasterError::CorruptImage(_))
        ));
    }

    #[test]
    fn unknown_magic_is_unsupported() {
        assert!(matches!(
            decode_image(b"GIF89a"),
            Err(RasterError::UnsupportedFormat(_))
        ));
        assert!(matches!(
            decode_image(b"P7\n"),
            Err(RasterError::UnsupportedFormat(_))
        ));
        assert!(matches!(
            decode_pnm(b"P5 1 1 65535\n\x00\x00"),
            Err(RasterError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn sample_above_maxval_is_corrupt() {
        assert!(matches!(
            decode_pnm(b"P2 1 1 15\n16\n"),
            Err(RasterError::CorruptImage(_))
        ));
    }

    #[test]
    fn lower_maxval_is_rescaled() {
        let img = decode_pnm(b"P2 3 1 15\n0 7 15\n").unwrap();
        assert_eq!(
            img,
            Image::Gray(GrayRaster::new(3, 1, vec![0, 119, 255]).unwrap())
        );
    }

    #[test]
    fn binary_pgm_maps_one_to_255() {
        let img = BinaryRaster::new(1, 2, vec![1, 0]).unwrap();
        let bytes = encode_binary_pgm(&img);
        assert!(bytes.ends_with(&[255, 0]));
    }

    #[test]
    fn pbm_sets_bit_for_foreground() {
        let img = BinaryRaster::new(10, 1, vec![1, 0, 0, 0, 0, 0, 0, 1, 1, 0]).unwrap();
        let bytes = encode_pbm(&img);
        assert!(bytes.ends_with(&[0b1000_0001, 0b1000_0000]));
    }

    #[test]
    fn grayscale_weights() {
        assert_eq!(luma(128, 128, 128), 128);
        assert_eq!(luma(255, 0, 0), 76);
        assert_eq!(luma(0, 255, 0), 150);
        assert_eq!(luma(0, 0, 255), 29);
        assert_eq!(luma(255, 255, 255), 255);
    }

    #[test]
    fn invalid_rasters_rejected() {
        assert!(GrayRaster::new(0, 1, vec![]).is_err());
        assert!(GrayRaster::new(2, 2, vec![0; 3]).is_err());
        assert!(BinaryRaster::new(1, 1, vec![2]).is_err());
        assert!(RgbRaster::new(1, 1, vec![0; 4]).is_err());
        assert!(GrayRaster::new(MAX_DIMENSION + 1, 1, vec![0; MAX_DIMENSION + 1]).is_err());
    }

    #[test]
    fn binary_source_maps_text_to_black() {
        let img = Image::Binary(BinaryRaster::new(2, 1, vec![1, 0]).unwrap());
        assert_eq!(img.into_gray().data(), &[0, 255]);
    }

    #[test]
    fn missing_file() {
        let err = load_image("/definitely/not/here.pgm").unwrap_err();
        assert!(matches!(err, RasterError::FileNotFound(_)));
    }

    #[test]
    fn png_gray_and_rgba() {
        let mut bytes = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut bytes, 2, 1);
            enc.set_color(png::ColorType::Rgba);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[255, 0, 0, 9, 1, 2, 3, 255]).unwrap();
        }
        let img = decode_image(&bytes).unwrap();
        assert_eq!(
            img,
            Image::Rgb(RgbRaster::new(2, 1, vec![255, 0, 0, 1, 2, 3]).unwrap())
        );

        let mut bytes = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut bytes, 1, 2);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[7, 200]).unwrap();
        }
        let img = decode_image(&bytes).unwrap();
        assert_eq!(
            img,
            Image::Gray(GrayRaster::new(1, 2, vec![7, 200]).unwrap())
        );
    }

    fn rgb_strategy() -> impl Strategy<Value = RgbRaster> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), w * h * 3)
                .prop_map(move |d| RgbRaster::new(w, h, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn gray_within_channel_range(img in rgb_strategy()) {
            let gray = to_grayscale(&img);
            prop_assert_eq!((gray.width(), gray.height()), (img.width(), img.height()));
            for (p, &g) in img.data().chunks_exact(3).zip(gray.data()) {
                let lo = p.iter().copied().min().unwrap();
                let hi = p.iter().copied().max().unwrap();
                prop_assert!(lo <= g && g <= hi);
            }
        }

        #[test]
        fn gray_fixed_under_rgb_embedding(data in proptest::collection::vec(any::<u8>(), 1..64)) {
            let n = data.len();
            let gray = GrayRaster::new(n, 1, data.clone()).unwrap();
            let rgb = RgbRaster::new(n, 1, data.iter().flat_map(|&v| [v, v, v]).collect()).unwrap();
            prop_assert_eq!(to_grayscale(&rgb), gray);
        }

        #[test]
        fn ascii_pgm_round_trip(data in proptest::collection::vec(any::<u8>(), 1..40), w in 1usize..5) {
            let h = data.len() / w;
            prop_assume!(h > 0);
            let img = GrayRaster::new(w, h, data[..w * h].to_vec()).unwrap();
            prop_assert_eq!(decode_pnm(&encode_pgm_ascii(&img)).unwrap(), Image::Gray(img));
        }
    }
}
