//! Planar float images and their 8-bit PGM/PPM and raw-f32 encodings.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Channel-planar image with values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels * height * width != data.len() {
            return Err(Error::config(format!(
                "{channels}x{height}x{width} image needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Image {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn clamp01(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::usage(format!(
                "crop {height}x{width} at ({top}, {left}) outside {}x{}",
                self.height, self.width
            )));
        }
        Ok(Image::from_fn(self.channels, height, width, |c, y, x| {
            self.get(c, top + y, left + x)
        }))
    }

    /// Mirror-pads (without repeating the edge pixel) so both sides are at least `min`.
    pub fn reflect_pad_to(&self, min: usize) -> Image {
        let (h, w) = (self.height.max(min), self.width.max(min));
        if (h, w) == (self.height, self.width) {
            return self.clone();
        }
        Image::from_fn(self.channels, h, w, |c, y, x| {
            self.get(
                c,
                reflect_index(y as isize, self.height),
                reflect_index(x as isize, self.width),
            )
        })
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, self.channels, self.height, self.width], self.data.clone()).expect("extents agree")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Image> {
        let [n, c, h, w] = t.shape();
        if n != 1 {
            return Err(Error::config(format!("expected a single image, got batch of {n}")));
        }
        Image::new(c, h, w, t.data().to_vec())
    }

    /// ITU-R 601 luma for 3-channel images; the plane itself for grayscale.
    pub fn luma(&self) -> Vec<f32> {
        if self.channels == 1 {
            return self.data.clone();
        }
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        r.iter()
            .zip(g)
            .zip(b)
            .map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect()
    }

    pub fn mean(&self) -> f32 {
        (self.data.iter().map(|v| *v as f64).sum::<f64>() / self.data.len().max(1) as f64) as f32
    }
}

/// Index into `0..len` mirrored about the edges, period `2·(len − 1)`.
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    (if m < len as isize { m } else { period - m }) as usize
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes as binary PGM (1 channel) or PPM (3 channels), 8 bits per sample.
pub fn encode_pnm(image: &Image) -> Result<Vec<u8>> {
    let magic = match image.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::config(format!("PNM encodes 1 or 3 channels, not {c}"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width, image.height).into_bytes();
    let plane = image.height * image.width;
    out.reserve(plane * image.channels);
    for i in 0..plane {
        for c in 0..image.channels {
            out.push(to_byte(image.data[c * plane + i]));
        }
    }
    Ok(out)
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut token = |bytes: &[u8]| -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("PNM", "truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match token(bytes)?.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::format("PNM", format!("unsupported magic {other:?}"))),
    };
    let num = |s: String| {
        s.parse::<usize>()
            .map_err(|_| Error::format("PNM", format!("bad number {s:?}")))
    };
    let width = num(token(bytes)?)?;
    let height = num(token(bytes)?)?;
    let maxval = num(token(bytes)?)?;
    if maxval != 255 {
        return Err(Error::format(
            "PNM",
            format!("only 8-bit maxval 255 is supported, got {maxval}"),
        ));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let plane = width * height;
    let need = plane * channels;
    if bytes.len() < start + need {
        return Err(Error::format(
            "PNM",
            format!("raster needs {need} bytes, found {}", bytes.len().saturating_sub(start)),
        ));
    }
    let raster = &bytes[start..start + need];
    let mut data = vec![0.0; need];
    for i in 0..plane {
        for c in 0..channels {
            data[c * plane + i] = raster[i * channels + c] as f32 / 255.0;
        }
    }
    Image::new(channels, height, width, data)
}

pub fn read_pnm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

pub fn write_pnm(path: &Path, image: &Image) -> Result<()> {
    let bytes = encode_pnm(image)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Raw tensor dump: four little-endian `u32` extents, then `f32` values.
pub fn encode_raw(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * t.len());
    for e in t.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 16 {
        return Err(Error::format("raw tensor", "missing extents header"));
    }
    let mut shape = [0usize; 4];
    for (i, e) in shape.iter_mut().enumerate() {
        *e = u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes")) as usize;
    }
    let n: usize = shape.iter().product();
    let payload = &bytes[16..];
    if payload.len() != 4 * n {
        return Err(Error::format(
            "raw tensor",
            format!("{shape:?} needs {} payload bytes, got {}", 4 * n, payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Tensor::new(shape, data)
}

pub fn write_raw(path: &Path, t: &Tensor) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_raw(t)).map_err(|e| Error::io(path, e))
}

pub fn read_raw(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes)
}
