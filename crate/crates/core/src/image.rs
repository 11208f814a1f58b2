//! RGB images with channels in [0, 1] and their portable-pixmap encoding.
//!
//! Reading accepts P3 and P6 with maxval 255 and `#` comments in the header.
//! Writing always emits P6 as `P6\n<w> <h>\n255\n` followed by raw bytes.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported maxval {0} (only 255 is supported)")]
    UnsupportedMaxval(u64),
    #[error("truncated pixel data: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("bad sample `{0}` in P3 data")]
    BadSample(String),
    #[error("{0} unexpected bytes after pixel data")]
    TrailingData(usize),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    pixels: Vec<[f64; 3]>,
}

impl RgbImage {
    /// Image filled with one colour.
    pub fn filled(width: u32, height: u32, rgb: [f64; 3]) -> Self {
        RgbImage {
            width,
            height,
            pixels: vec![rgb; width as usize * height as usize],
        }
    }

    /// Builds an image from row-major pixels; channels are clamped to [0, 1].
    pub fn from_pixels(width: u32, height: u32, pixels: Vec<[f64; 3]>) -> Option<Self> {
        if pixels.len() != width as usize * height as usize {
            return None;
        }
        let pixels = pixels
            .into_iter()
            .map(|p| p.map(|c| if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) }))
            .collect();
        Some(RgbImage { width, height, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn get(&self, row: u32, col: u32) -> [f64; 3] {
        self.pixels[(row * self.width + col) as usize]
    }

    pub fn set(&mut self, row: u32, col: u32, rgb: [f64; 3]) {
        let i = (row * self.width + col) as usize;
        self.pixels[i] = rgb.map(|c| c.clamp(0.0, 1.0));
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.map(|c| (c * 255.0).round() as u8))
            .collect()
    }

    pub fn from_bytes(width: u32, height: u32, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != width as usize * height as usize * 3 {
            return None;
        }
        let pixels = bytes
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]].map(|b| f64::from(b) / 255.0))
            .collect();
        Some(RgbImage { width, height, pixels })
    }
}

/// Binary P6 encoding.
pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    encode_ppm_bytes(img.width, img.height, &img.to_bytes())
}

pub fn encode_ppm_bytes(width: u32, height: u32, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// ASCII P3 encoding, mostly useful for tests and hand inspection.
pub fn encode_ppm_ascii(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P3\n{} {}\n255\n", img.width, img.height);
    for row in img.to_bytes().chunks(3 * img.width.max(1) as usize) {
        let line: Vec<String> = row.iter().map(|b| b.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}

struct HeaderCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::Header(format!("expected {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::Header(format!("{what} out of range")))
    }
}

pub fn decode_ppm(data: &[u8]) -> Result<RgbImage, ImageError> {
    let binary = match data.get(..2) {
        Some(b"P6") => true,
        Some(b"P3") => false,
        _ => return Err(ImageError::Header("missing P3/P6 magic".into())),
    };
    let mut cur = HeaderCursor { data, pos: 2 };
    if !data.get(2).is_some_and(|c| c.is_ascii_whitespace() || *c == b'#') {
        return Err(ImageError::Header("missing whitespace after magic".into()));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 || width > u64::from(u32::MAX) || height > u64::from(u32::MAX) {
        return Err(ImageError::Header(format!("bad dimensions {width}x{height}")));
    }
    if maxval != 255 {
        return Err(ImageError::UnsupportedMaxval(maxval));
    }
    let expected = (width * height * 3) as usize;
    let (w, h) = (width as u32, height as u32);
    if binary {
        // exactly one whitespace byte separates maxval from the raster
        if !data.get(cur.pos).is_some_and(|c| c.is_ascii_whitespace()) {
            return Err(ImageError::Header("missing whitespace after maxval".into()));
        }
        let raster = &data[cur.pos + 1..];
        if raster.len() < expected {
            return Err(ImageError::Truncated {
                expected,
                found: raster.len(),
            });
        }
        if raster.len() > expected {
            return Err(ImageError::TrailingData(raster.len() - expected));
        }
        Ok(RgbImage::from_bytes(w, h, raster).expect("length checked"))
    } else {
        let text = std::str::from_utf8(&data[cur.pos..]).map_err(|_| ImageError::BadSample("non-UTF-8 data".into()))?;
        let mut bytes = Vec::with_capacity(expected);
        for tok in text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_ascii_whitespace)
        {
            let v: u16 = tok.parse().map_err(|_| ImageError::BadSample(tok.into()))?;
            if v > 255 {
                return Err(ImageError::BadSample(tok.into()));
            }
            bytes.push(v as u8);
        }
        if bytes.len() < expected {
            return Err(ImageError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(ImageError::TrailingData(bytes.len() - expected));
        }
        Ok(RgbImage::from_bytes(w, h, &bytes).expect("length checked"))
    }
}

pub fn read_image(path: &Path) -> Result<RgbImage, ImageError> {
    let data = fs::read(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_ppm(&data)
}

pub fn write_image(img: &RgbImage, path: &Path) -> Result<(), ImageError> {
    fs::write(path, encode_ppm(img)).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_white_pixel() {
        let img = decode_ppm(b"P6\n1 1\n255\n\xff\xff\xff").unwrap();
        assert_eq!(img.pixels(), &[[1.0, 1.0, 1.0]]);
    }

    #[test]
    fn writes_exact_p6() {
        let img = RgbImage::filled(2, 1, [1.0, 0.0, 0.0]);
        assert_eq!(encode_ppm(&img), b"P6\n2 1\n255\n\xff\x00\x00\xff\x00\x00".to_vec());
    }

    #[test]
    fn header_comments_accepted() {
        let img = decode_ppm(b"P3\n# made by hand\n2 1 # size\n255\n0 0 0\n255 255 255\n").unwrap();
        assert_eq!(img.get(0, 1), [1.0; 3]);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(
            decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0"),
            Err(ImageError::UnsupportedMaxval(65535))
        ));
        assert!(matches!(decode_ppm(b"P5\n1 1\n255\n\0"), Err(ImageError::Header(_))));
        assert!(matches!(decode_ppm(b""), Err(ImageError::Header(_))));
        assert!(matches!(
            decode_ppm(b"P6\n2 2\n255\n\0\0\0"),
            Err(ImageError::Truncated { expected: 12, found: 3 })
        ));
        assert!(matches!(
            decode_ppm(b"P3\n1 1\n255\n0 0\n"),
            Err(ImageError::Truncated { .. })
        ));
        assert!(matches!(
            decode_ppm(b"P3\n1 1\n255\n0 0 300\n"),
            Err(ImageError::BadSample(_))
        ));
        assert!(matches!(
            decode_ppm(b"P6\n1 1\n255\n\0\0\0\0"),
            Err(ImageError::TrailingData(1))
        ));
    }

    fn image() -> impl Strategy<Value = (u32, u32, Vec<u8>)> {
        (1u32..8, 1u32..8).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), (w * h * 3) as usize).prop_map(move |b| (w, h, b))
        })
    }

    proptest! {
        #[test]
        fn p3_and_p6_agree((w, h, bytes) in image()) {
            let img = RgbImage::from_bytes(w, h, &bytes).unwrap();
            let a = decode_ppm(&encode_ppm(&img)).unwrap();
            let b = decode_ppm(&encode_ppm_ascii(&img)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a, img);
        }

        #[test]
        fn byte_round_trip((w, h, bytes) in image()) {
            let file = encode_ppm_bytes(w, h, &bytes);
            prop_assert_eq!(encode_ppm(&decode_ppm(&file).unwrap()), file);
        }
    }
}
