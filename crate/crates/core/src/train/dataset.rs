//! Image datasets and the binary PPM (`P6`, maxval 255) codec.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// An 8-bit RGB image, pixels interleaved row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height * 3 {
            return Err(Error::Dataset(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// Copies the `size x size` window at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, size: usize) -> Result<Self> {
        if x0 + size > self.width || y0 + size > self.height {
            return Err(Error::Dataset(format!(
                "crop {size}x{size} at ({x0}, {y0}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(size * size * 3);
        for y in y0..y0 + size {
            let row = (y * self.width + x0) * 3;
            pixels.extend_from_slice(&self.pixels[row..row + size * 3]);
        }
        Self::new(size, size, pixels)
    }
}

/// Horizontal and vertical offsets of a centered `target` square.
pub fn center_crop_offsets(width: usize, height: usize, target: usize) -> Option<(usize, usize)> {
    (width >= target && height >= target).then(|| ((width - target) / 2, (height - target) / 2))
}

fn skip_ws_and_comments(data: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < data.len() && data[pos] == b'#' {
            while pos < data.len() && data[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn header_number(data: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    *pos = skip_ws_and_comments(data, *pos);
    let start = *pos;
    while *pos < data.len() && data[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Ppm(format!("missing {what}")));
    }
    if *pos - start > 9 {
        return Err(Error::Ppm(format!("{what} too large")));
    }
    let text = std::str::from_utf8(&data[start..*pos]).expect("ascii digits");
    Ok(text.parse().expect("at most nine digits"))
}

/// Decodes a single binary PPM image.
pub fn decode_ppm(data: &[u8]) -> Result<RgbImage> {
    if data.len() < 2 || &data[..2] != b"P6" {
        return Err(Error::Ppm("missing P6 magic".into()));
    }
    let mut pos = 2;
    if pos >= data.len() || !(data[pos].is_ascii_whitespace() || data[pos] == b'#') {
        return Err(Error::Ppm("magic not followed by whitespace".into()));
    }
    let width = header_number(data, &mut pos, "width")?;
    let height = header_number(data, &mut pos, "height")?;
    let maxval = header_number(data, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Ppm(format!("degenerate size {width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::Ppm(format!("maxval {maxval} unsupported (only 255)")));
    }
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(Error::Ppm("maxval not followed by a single whitespace byte".into()));
    }
    pos += 1;
    let need = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(3))
        .ok_or_else(|| Error::Ppm("image dimensions overflow".into()))?;
    let body = &data[pos..];
    if body.len() < need {
        return Err(Error::Ppm(format!("truncated raster: {} of {need} bytes", body.len())));
    }
    if body.len() > need {
        return Err(Error::Ppm(format!("{} trailing bytes after raster", body.len() - need)));
    }
    RgbImage::new(width, height, body.to_vec())
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Images sharing one size.
#[derive(Clone, Debug)]
pub struct Dataset {
    images: Vec<RgbImage>,
    pub split: Split,
}

impl Dataset {
    pub fn new(images: Vec<RgbImage>, split: Split) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::Dataset("dataset is empty".into()))?;
        let (w, h) = (first.width, first.height);
        if let Some(i) = images.iter().position(|im| (im.width, im.height) != (w, h)) {
            return Err(Error::Dataset(format!(
                "image {i} is {}x{}, expected {w}x{h}",
                images[i].width, images[i].height
            )));
        }
        Ok(Self { images, split })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn width(&self) -> usize {
        self.images[0].width
    }

    pub fn height(&self) -> usize {
        self.images[0].height
    }

    pub fn images(&self) -> &[RgbImage] {
        &self.images
    }

    /// `(N, 3, H, W)` tensor with values in `[0, 255]`.
    pub fn batch(&self, indices: &[usize]) -> Tensor4 {
        let (w, h) = (self.width(), self.height());
        let mut t = Tensor4::zeros([indices.len(), 3, h, w]);
        for (n, &i) in indices.iter().enumerate() {
            let px = &self.images[i].pixels;
            let item = t.item_mut(n);
            for c in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        item[(c * h + y) * w + x] = f64::from(px[(y * w + x) * 3 + c]);
                    }
                }
            }
        }
        t
    }
}

/// Reads every `.ppm` file in `dir` in filename order, center-cropping to a
/// `crop` square when given. Per-file failures are reported together.
pub fn load_dataset(dir: &Path, crop: Option<usize>, split: Split) -> Result<Dataset> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_ppm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
        if path.is_file() && is_ppm {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if paths.is_empty() {
        return Err(Error::Dataset(format!("no .ppm files in {}", dir.display())));
    }
    let mut images = Vec::with_capacity(paths.len());
    let mut failures = Vec::new();
    for path in &paths {
        let decoded = fs::read(path)
            .map_err(|e| Error::io(path, e))
            .and_then(|b| decode_ppm(&b));
        let cropped = decoded.and_then(|im| match crop {
            None => Ok(im),
            Some(t) => match center_crop_offsets(im.width, im.height, t) {
                Some((x0, y0)) => im.crop(x0, y0, t),
                None => Err(Error::Dataset(format!(
                    "{}x{} is smaller than crop {t}",
                    im.width, im.height
                ))),
            },
        });
        match cropped {
            Ok(im) => images.push(im),
            Err(e) => failures.push(format!("{}: {e}", path.display())),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Dataset(failures.join("; ")));
    }
    Dataset::new(images, split)
}

/// Smooth per-channel gradients and a low-frequency ripple plus pixel noise.
pub fn synthetic_dataset(count: usize, side: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(count);
    for _ in 0..count {
        let mut pixels = vec![0u8; side * side * 3];
        let params: Vec<[f64; 5]> = (0..3)
            .map(|_| {
                [
                    rng.random_range(40.0..215.0),
                    rng.random_range(-90.0..90.0),
                    rng.random_range(-90.0..90.0),
                    rng.random_range(0.0..30.0),
                    rng.random_range(0.5..2.5),
                ]
            })
            .collect();
        for y in 0..side {
            for x in 0..side {
                let (u, v) = (x as f64 / side as f64 - 0.5, y as f64 / side as f64 - 0.5);
                for (c, p) in params.iter().enumerate() {
                    let ripple = p[3] * (std::f64::consts::TAU * p[4] * (u + v)).sin();
                    let noise = rng.random_range(-6.0..6.0);
                    let val = p[0] + p[1] * u + p[2] * v + ripple + noise;
                    pixels[(y * side + x) * 3 + c] = val.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        images.push(RgbImage::new(side, side, pixels)?);
    }
    Dataset::new(images, Split::Train)
}
