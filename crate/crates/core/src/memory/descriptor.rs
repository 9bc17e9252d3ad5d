use serde::{Deserialize, Serialize};

pub const HSV_BINS: usize = 16;

/// HSV pixel: hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
pub type Hsv = [f64; 3];

/// Per-channel HSV histograms, each normalized to unit mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsvHistogram {
    pub h: [f64; HSV_BINS],
    pub s: [f64; HSV_BINS],
    pub v: [f64; HSV_BINS],
}

fn bin(x: f64, span: f64) -> usize {
    let b = (x / span * HSV_BINS as f64).floor();
    (b.max(0.0) as usize).min(HSV_BINS - 1)
}

impl HsvHistogram {
    /// Histogram of a pixel block. An empty block yields uniform channels.
    pub fn from_pixels(pixels: &[Hsv]) -> Self {
        if pixels.is_empty() {
            let u = [1.0 / HSV_BINS as f64; HSV_BINS];
            return Self { h: u, s: u, v: u };
        }
        let mut h = [0.0; HSV_BINS];
        let mut s = [0.0; HSV_BINS];
        let mut v = [0.0; HSV_BINS];
        let w = 1.0 / pixels.len() as f64;
        for p in pixels {
            h[bin(p[0].rem_euclid(360.0), 360.0)] += w;
            s[bin(p[1], 1.0)] += w;
            v[bin(p[2], 1.0)] += w;
        }
        Self { h, s, v }
    }

    pub fn channels(&self) -> [&[f64; HSV_BINS]; 3] {
        [&self.h, &self.s, &self.v]
    }

    /// Histogram intersection averaged over the three channels, in `[0, 1]`.
    pub fn intersection(&self, other: &Self) -> f64 {
        let per: f64 = self
            .channels()
            .iter()
            .zip(other.channels())
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| x.min(*y)).sum::<f64>())
            .sum();
        per / 3.0
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channels_sum_to_one() {
        let px: Vec<Hsv> = (0..97)
            .map(|i| [i as f64 * 7.3, (i % 10) as f64 / 10.0, 1.0])
            .collect();
        let h = HsvHistogram::from_pixels(&px);
        for ch in h.channels() {
            assert!((ch.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(ch.iter().all(|b| *b >= 0.0));
        }
    }

    #[test]
    fn intersection_bounds() {
        let a = HsvHistogram::from_pixels(&[[10.0, 0.1, 0.1]]);
        let b = HsvHistogram::from_pixels(&[[200.0, 0.9, 0.9]]);
        assert_eq!(a.intersection(&a), 1.0);
        assert_eq!(a.intersection(&b), 0.0);
    }
}
