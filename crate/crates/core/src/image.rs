//! Row-major 8-bit RGB images and binary PPM (P6) IO.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("pixel buffer has {got} bytes, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("not a binary PPM: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, PartialEq, Eq, Default)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Image({}x{})", self.width, self.height)
    }
}

impl Image {
    pub fn new(width: u32, height: u32, fill: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&fill);
        }
        Self { width, height, pixels }
    }

    /// An image with no pixels, used when rendering is disabled.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(ImageError::BufferSize { expected, got: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.pixels
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }

    /// Copies a sub-rectangle. Panics if it is out of bounds.
    pub fn crop(&self, x0: u32, y0: u32, width: u32, height: u32) -> Image {
        assert!(x0 + width <= self.width && y0 + height <= self.height, "crop out of bounds");
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in y0..y0 + height {
            let start = self.offset(x0, y);
            pixels.extend_from_slice(&self.pixels[start..start + width as usize * 3]);
        }
        Image { width, height, pixels }
    }

    /// Stacks `self` above `below`; both must have the same width.
    pub fn vconcat(&self, below: &Image) -> Image {
        assert_eq!(self.width, below.width, "vconcat needs equal widths");
        let mut pixels = Vec::with_capacity(self.pixels.len() + below.pixels.len());
        pixels.extend_from_slice(&self.pixels);
        pixels.extend_from_slice(&below.pixels);
        Image { width: self.width, height: self.height + below.height, pixels }
    }

    pub fn write_ppm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.pixels)
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() + 20);
        self.write_ppm(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_ppm(&mut w)?;
        w.flush()
    }

    pub fn read_ppm<R: Read>(r: R) -> Result<Image, ImageError> {
        let mut r = BufReader::new(r);
        let (width, height) = read_ppm_header(&mut r)?;
        let mut pixels = vec![0u8; width as usize * height as usize * 3];
        r.read_exact(&mut pixels)
            .map_err(|_| ImageError::Format("truncated pixel data".into()))?;
        Ok(Image { width, height, pixels })
    }

    pub fn load_ppm(path: impl AsRef<Path>) -> Result<Image, ImageError> {
        Image::read_ppm(std::fs::File::open(path)?)
    }
}

/// Reads only the header of a PPM file, returning (width, height).
pub fn ppm_dimensions(path: impl AsRef<Path>) -> Result<(u32, u32), ImageError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    read_ppm_header(&mut r)
}

fn read_token<R: BufRead>(r: &mut R) -> Result<String, ImageError> {
    let mut token = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(ImageError::Format("unexpected end of header".into()));
        }
        let c = byte[0] as char;
        if c == '#' && token.is_empty() {
            let mut comment = String::new();
            r.read_line(&mut comment)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            return Ok(token);
        }
        token.push(c);
    }
}

fn read_ppm_header<R: BufRead>(r: &mut R) -> Result<(u32, u32), ImageError> {
    let magic = read_token(r)?;
    if magic != "P6" {
        return Err(ImageError::Format(format!("magic `{magic}`")));
    }
    let mut num = || -> Result<u32, ImageError> {
        let t = read_token(r)?;
        t.parse().map_err(|_| ImageError::Format(format!("bad number `{t}`")))
    };
    let width = num()?;
    let height = num()?;
    let maxval = num()?;
    if maxval != 255 {
        return Err(ImageError::Format(format!("maxval {maxval} unsupported")));
    }
    Ok((width, height))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let img = Image::from_fn(5, 3, |x, y| [x as u8, y as u8, (x * y) as u8]);
        let bytes = img.to_ppm_bytes();
        assert!(bytes.starts_with(b"P6\n5 3\n255\n"));
        assert_eq!(Image::read_ppm(&bytes[..]).unwrap(), img);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let img = Image::read_ppm(&bytes[..]).unwrap();
        assert_eq!(img.get(1, 0), [4, 5, 6]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Image::read_ppm(&b"P3\n1 1\n255\n"[..]).is_err());
        assert!(Image::read_ppm(&b"P6\n2 2\n255\n\x00\x00"[..]).is_err());
        assert!(matches!(Image::from_raw(2, 2, vec![0; 5]), Err(ImageError::BufferSize { expected: 12, got: 5 })));
    }

    #[test]
    fn crop_and_concat() {
        let img = Image::from_fn(4, 4, |x, y| [x as u8, y as u8, 0]);
        let c = img.crop(1, 2, 2, 2);
        assert_eq!(c.get(0, 0), [1, 2, 0]);
        assert_eq!(c.get(1, 1), [2, 3, 0]);
        let v = c.vconcat(&c);
        assert_eq!(v.dimensions(), (2, 4));
        assert_eq!(v.get(1, 3), [2, 3, 0]);
    }
}
