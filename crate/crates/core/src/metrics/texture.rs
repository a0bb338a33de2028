use serde::{Deserialize, Serialize};

use super::Image;
use crate::{Error, Result};

/// A smoothed, normalized histogram. Every bin is strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub mass: Vec<f64>,
    /// Value range covered by the bins, `lo` to `hi`.
    pub lo: f64,
    pub hi: f64,
}

impl Histogram {
    /// `(count_k / total + smoothing) / (1 + K smoothing)`.
    pub fn from_counts(counts: &[usize], smoothing: f64, lo: f64, hi: f64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::invalid("histogram needs at least one bin"));
        }
        if !(smoothing > 0.0) {
            return Err(Error::invalid("histogram smoothing must be positive"));
        }
        let total: usize = counts.iter().sum();
        let k = counts.len() as f64;
        let norm = 1.0 + k * smoothing;
        let mass = counts
            .iter()
            .map(|&c| {
                let f = if total == 0 { 0.0 } else { c as f64 / total as f64 };
                (f + smoothing) / norm
            })
            .collect();
        Ok(Histogram { mass, lo, hi })
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m > self.mass[best] {
                best = i;
            }
        }
        best
    }
}

/// `sum p ln(p / q)`.
pub fn kl_divergence(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.bins() != q.bins() {
        return Err(Error::invalid(format!(
            "histogram bin mismatch: {} vs {}",
            p.bins(),
            q.bins()
        )));
    }
    let mut kl = 0.0;
    for (&a, &b) in p.mass.iter().zip(&q.mass) {
        if a > 0.0 {
            if !(b > 0.0) {
                return Err(Error::invalid("kl divergence needs a smoothed reference histogram"));
            }
            kl += a * (a / b).ln();
        }
    }
    Ok(kl.max(0.0))
}

/// Neighbour offsets clockwise from the top-left; the first one is the most
/// significant bit.
const NEIGHBOURS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
];

/// 8-bit codes of the interior pixels, row-major; bit set iff the
/// neighbour is `>=` the centre.
pub fn lbp_codes(img: &Image) -> Result<Vec<u8>> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::invalid(format!(
            "local binary patterns need sides >= 3, got {h}x{w}"
        )));
    }
    let mut codes = Vec::with_capacity((w - 2) * (h - 2));
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let centre = img.get(r, c);
            let mut code = 0u8;
            for (dr, dc) in NEIGHBOURS {
                let v = img.get((r as isize + dr) as usize, (c as isize + dc) as usize);
                code = (code << 1) | (v >= centre) as u8;
            }
            codes.push(code);
        }
    }
    Ok(codes)
}

pub fn lbp_histogram(img: &Image, bins: usize, smoothing: f64) -> Result<Histogram> {
    if bins == 0 || 256 % bins != 0 {
        return Err(Error::invalid("lbp bins must divide 256"));
    }
    let mut counts = vec![0usize; bins];
    for code in lbp_codes(img)? {
        counts[code as usize * bins / 256] += 1;
    }
    Histogram::from_counts(&counts, smoothing, 0.0, 256.0)
}

/// One level of the orthonormal 2-d Haar transform, each band of size
/// `height/2 x width/2`. For a block `[a b; c d]`: `LH = (a+b-c-d)/2`
/// (horizontal edges), `HL = (a-b+c-d)/2` (vertical edges),
/// `HH = (a-b-c+d)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarBands {
    pub width: usize,
    pub height: usize,
    pub ll: Vec<f64>,
    pub lh: Vec<f64>,
    pub hl: Vec<f64>,
    pub hh: Vec<f64>,
}

/// Separable evaluation: a horizontal analysis pass, then a vertical one.
pub fn haar_dwt(img: &Image) -> Result<HaarBands> {
    let (w, h) = (img.width(), img.height());
    if w % 2 != 0 || h % 2 != 0 {
        return Err(Error::invalid(format!(
            "haar transform needs even sides, got {h}x{w}"
        )));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (hw, hh) = (w / 2, h / 2);
    // horizontal pass: low and high halves per row
    let mut low = vec![0.0; h * hw];
    let mut high = vec![0.0; h * hw];
    for r in 0..h {
        for c in 0..hw {
            let a = img.get(r, 2 * c);
            let b = img.get(r, 2 * c + 1);
            low[r * hw + c] = (a + b) * s;
            high[r * hw + c] = (a - b) * s;
        }
    }
    let n = hw * hh;
    let mut bands = HaarBands {
        width: hw,
        height: hh,
        ll: vec![0.0; n],
        lh: vec![0.0; n],
        hl: vec![0.0; n],
        hh: vec![0.0; n],
    };
    for r in 0..hh {
        for c in 0..hw {
            let (top, bot) = (2 * r * hw + c, (2 * r + 1) * hw + c);
            let i = r * hw + c;
            bands.ll[i] = (low[top] + low[bot]) * s;
            bands.lh[i] = (low[top] - low[bot]) * s;
            bands.hl[i] = (high[top] + high[bot]) * s;
            bands.hh[i] = (high[top] - high[bot]) * s;
        }
    }
    Ok(bands)
}

fn band_histogram(coeffs: &[f64], bins: usize, clip: f64, smoothing: f64) -> Result<Histogram> {
    let mut counts = vec![0usize; bins];
    for &v in coeffs {
        let u = (v.clamp(-clip, clip) + clip) / (2.0 * clip);
        let idx = ((u * bins as f64).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Histogram::from_counts(&counts, smoothing, -clip, clip)
}

/// Histograms of the LH, HL and HH detail bands, in that order, with
/// `bins` uniform bins over `[-clip, clip]` (values outside are clipped).
pub fn dwt_band_histograms(
    img: &Image,
    bins: usize,
    clip: f64,
    smoothing: f64,
) -> Result<[Histogram; 3]> {
    if bins == 0 || !(clip > 0.0) {
        return Err(Error::invalid("dwt histograms need bins > 0 and clip > 0"));
    }
    let b = haar_dwt(img)?;
    Ok([
        band_histogram(&b.lh, bins, clip, smoothing)?,
        band_histogram(&b.hl, bins, clip, smoothing)?,
        band_histogram(&b.hh, bins, clip, smoothing)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::DEFAULT_SMOOTHING;
    use crate::numerics::RngState;
    use proptest::prelude::*;

    fn hist(p: &[f64]) -> Histogram {
        Histogram {
            mass: p.to_vec(),
            lo: 0.0,
            hi: 1.0,
        }
    }

    #[test]
    fn kl_cases() {
        let a = hist(&[0.75, 0.25]);
        let b = hist(&[0.5, 0.5]);
        assert_eq!(kl_divergence(&a, &a).unwrap(), 0.0);
        let fwd = kl_divergence(&a, &b).unwrap();
        let rev = kl_divergence(&b, &a).unwrap();
        assert!((fwd - (0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln())).abs() < 1e-15);
        assert!((fwd - 0.13081).abs() < 1e-5);
        assert!((rev - 0.14384).abs() < 1e-5);
        assert!(kl_divergence(&a, &hist(&[1.0])).is_err());
    }

    #[test]
    fn smoothed_histogram_is_normalized_and_positive() {
        let h = Histogram::from_counts(&[3, 0, 1, 0], DEFAULT_SMOOTHING, 0.0, 4.0).unwrap();
        assert!((h.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(h.mass.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn lbp_constant_image_is_all_ones() {
        let img = Image::filled(6, 6, 0.4);
        assert!(lbp_codes(&img).unwrap().iter().all(|&c| c == 255));
        let h = lbp_histogram(&img, 256, DEFAULT_SMOOTHING).unwrap();
        assert_eq!(h.argmax(), 255);
        assert!(h.mass[255] > 0.999);
    }

    #[test]
    fn lbp_peak_pixel_codes_zero() {
        let mut px = vec![0.1; 9];
        px[4] = 0.9;
        let img = Image::new(3, 3, px).unwrap();
        assert_eq!(lbp_codes(&img).unwrap(), vec![0]);
    }

    #[test]
    fn lbp_fixed_image_matches_enumeration() {
        #[rustfmt::skip]
        let px = vec![
            1.0, 2.0, 3.0, 4.0,
            5.0, 6.0, 7.0, 8.0,
            9.0, 8.0, 7.0, 6.0,
            5.0, 4.0, 3.0, 2.0,
        ];
        let img = Image::new(4, 4, px).unwrap();
        // (1,1)=6: TL1 T2 TR3 R7 BR7 B8 BL9 L5 -> 00011110 = 30
        // (1,2)=7: TL2 T3 TR4 R8 BR6 B7 BL8 L6 -> 00010110 = 22
        // (2,1)=8: TL5 T6 TR7 R7 BR3 B4 BL5 L9 -> 00000001 = 1
        // (2,2)=7: TL6 T7 TR8 R6 BR2 B3 BL4 L8 -> 01100001 = 97
        assert_eq!(lbp_codes(&img).unwrap(), vec![30, 22, 1, 97]);
        let h = lbp_histogram(&img, 256, DEFAULT_SMOOTHING).unwrap();
        let expected = (0.25 + DEFAULT_SMOOTHING) / (1.0 + 256.0 * DEFAULT_SMOOTHING);
        for code in [30, 22, 1, 97] {
            assert!((h.mass[code] - expected).abs() < 1e-15);
        }
        assert!(lbp_codes(&Image::filled(2, 5, 0.0)).is_err());
    }

    #[test]
    fn dwt_constant_image_has_zero_details() {
        let img = Image::filled(8, 8, 0.7);
        let b = haar_dwt(&img).unwrap();
        assert!(b.lh.iter().chain(&b.hl).chain(&b.hh).all(|v| v.abs() < 1e-15));
        for h in dwt_band_histograms(&img, 16, 1.0, DEFAULT_SMOOTHING).unwrap() {
            assert_eq!(h.argmax(), 8);
            assert!(h.mass[8] > 0.9999);
        }
    }

    #[test]
    fn dwt_vertical_step_lands_in_hl() {
        // left half 0, right half 1 on a 2x2 block: HL = (0 - 1 + 0 - 1) / 2
        let img = Image::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let b = haar_dwt(&img).unwrap();
        assert!((b.hl[0] + 1.0).abs() < 1e-15);
        assert!(b.lh[0].abs() < 1e-15 && b.hh[0].abs() < 1e-15);
        // 6x6 with the step inside a block column
        let px: Vec<f64> = (0..36).map(|i| if i % 6 >= 3 { 1.0 } else { 0.0 }).collect();
        let img = Image::new(6, 6, px).unwrap();
        let [lh, hl, hh] = dwt_band_histograms(&img, 16, 1.0, DEFAULT_SMOOTHING).unwrap();
        assert_eq!(lh.argmax(), 8);
        assert_eq!(hh.argmax(), 8);
        assert!(hl.mass[0] > 0.3, "HL mass at -1: {}", hl.mass[0]);
    }

    #[test]
    fn dwt_matches_direct_block_arithmetic() {
        let mut rng = RngState::new(8);
        let px: Vec<f64> = (0..16).map(|_| rng.uniform()).collect();
        let img = Image::new(4, 4, px).unwrap();
        let bands = haar_dwt(&img).unwrap();
        for br in 0..2 {
            for bc in 0..2 {
                let a = img.get(2 * br, 2 * bc);
                let b = img.get(2 * br, 2 * bc + 1);
                let c = img.get(2 * br + 1, 2 * bc);
                let d = img.get(2 * br + 1, 2 * bc + 1);
                let i = br * 2 + bc;
                assert!((bands.ll[i] - (a + b + c + d) / 2.0).abs() < 1e-12);
                assert!((bands.lh[i] - (a + b - c - d) / 2.0).abs() < 1e-12);
                assert!((bands.hl[i] - (a - b + c - d) / 2.0).abs() < 1e-12);
                assert!((bands.hh[i] - (a - b - c + d) / 2.0).abs() < 1e-12);
            }
        }
        assert!(haar_dwt(&Image::filled(5, 4, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn kl_nonnegative_and_zero_only_on_equal(
            a in proptest::collection::vec(0usize..20, 6),
            b in proptest::collection::vec(0usize..20, 6),
        ) {
            let p = Histogram::from_counts(&a, DEFAULT_SMOOTHING, 0.0, 1.0).unwrap();
            let q = Histogram::from_counts(&b, DEFAULT_SMOOTHING, 0.0, 1.0).unwrap();
            let d = kl_divergence(&p, &q).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
            if p != q {
                prop_assert!(d > 0.0);
            }
        }

        #[test]
        fn lbp_shift_invariant(seed in 0u64..200, shift in -3.0f64..3.0) {
            let mut rng = RngState::new(seed);
            let px: Vec<f64> = (0..49).map(|_| (rng.uniform() * 8.0).floor() / 8.0).collect();
            let a = Image::new(7, 7, px.clone()).unwrap();
            let b = Image::new(7, 7, px.iter().map(|v| v + shift.round()).collect()).unwrap();
            prop_assert_eq!(lbp_codes(&a).unwrap(), lbp_codes(&b).unwrap());
        }
    }
}
