use crate::error::check_dim;
use crate::{Error, Result};

const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Row-major grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image sides must be positive"));
        }
        check_dim("image pixels", width * height, pixels.len())?;
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    /// Interprets a `[height, width]` shape.
    pub fn from_shape(shape: &[usize], pixels: Vec<f64>) -> Result<Self> {
        match shape {
            [h, w] => Image::new(*w, *h, pixels),
            _ => Err(Error::invalid(format!(
                "expected a 2-d image shape, got {shape:?}"
            ))),
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Image {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Copy with every pixel clamped to `[0, 1]`.
    pub fn clamped(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }
}

/// Summed-area table with a zero border row and column.
struct Integral {
    w: usize,
    data: Vec<f64>,
}

impl Integral {
    fn new(width: usize, height: usize, f: impl Fn(usize) -> f64) -> Self {
        let w = width + 1;
        let mut data = vec![0.0; w * (height + 1)];
        for r in 0..height {
            let mut row_sum = 0.0;
            for c in 0..width {
                row_sum += f(r * width + c);
                data[(r + 1) * w + c + 1] = data[r * w + c + 1] + row_sum;
            }
        }
        Integral { w, data }
    }

    #[inline]
    fn rect(&self, r0: usize, c0: usize, r1: usize, c1: usize) -> f64 {
        let w = self.w;
        self.data[r1 * w + c1] - self.data[r0 * w + c1] - self.data[r1 * w + c0] + self.data[r0 * w + c0]
    }
}

/// Mean SSIM over all positions of a uniform `window x window` box
/// (reduced to the full side along any axis shorter than the window), with
/// population statistics and the unit-range constants `C1 = 0.01^2`,
/// `C2 = 0.03^2`.
pub fn ssim(a: &Image, b: &Image, window: usize) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::invalid(format!(
            "ssim shape mismatch: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    if window == 0 {
        return Err(Error::invalid("ssim window must be positive"));
    }
    if let Some(v) = a.pixels.iter().chain(&b.pixels).find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("ssim pixel {v} outside [0, 1]")));
    }
    let (w, h) = (a.width, a.height);
    let wx = window.min(w);
    let wy = window.min(h);
    let (pa, pb) = (&a.pixels, &b.pixels);
    let sa = Integral::new(w, h, |i| pa[i]);
    let sb = Integral::new(w, h, |i| pb[i]);
    let saa = Integral::new(w, h, |i| pa[i] * pa[i]);
    let sbb = Integral::new(w, h, |i| pb[i] * pb[i]);
    let sab = Integral::new(w, h, |i| pa[i] * pb[i]);
    let n = (wx * wy) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=h - wy {
        for c in 0..=w - wx {
            let (r1, c1) = (r + wy, c + wx);
            let ma = sa.rect(r, c, r1, c1) / n;
            let mb = sb.rect(r, c, r1, c1) / n;
            let va = (saa.rect(r, c, r1, c1) / n - ma * ma).max(0.0);
            let vb = (sbb.rect(r, c, r1, c1) / n - mb * mb).max(0.0);
            let cov = sab.rect(r, c, r1, c1) / n - ma * mb;
            total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
                / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}
