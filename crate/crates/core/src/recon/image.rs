//! Rebuild an image from per-pixel colour candidates.

use std::io;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Colour written for pixels nothing was recovered for.
pub const SENTINEL: [u8; 3] = [0xff, 0x00, 0xff];

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct PixelCandidate {
    pub rgb: [u8; 3],
    pub count: u64,
}

/// How two colours are compared when scoring a candidate against its
/// neighbours.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distance {
    /// Sum of squared channel differences.
    #[default]
    SquaredDifference,
    /// Sum of squared channel products. Not a distance; kept for
    /// comparison only.
    LiteralProduct,
}

impl Distance {
    pub fn eval(self, a: [u8; 3], b: [u8; 3]) -> u64 {
        a.iter()
            .zip(&b)
            .map(|(x, y)| {
                let (x, y) = (*x as i64, *y as i64);
                let t = match self {
                    Distance::SquaredDifference => x - y,
                    Distance::LiteralProduct => x * y,
                };
                (t * t) as u64
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn from_rgb(width: usize, height: usize, bytes: &[u8]) -> Self {
        assert_eq!(bytes.len(), width * height * 3);
        Self {
            width,
            height,
            pixels: bytes.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        }
    }

    pub fn to_rgb(&self) -> Vec<u8> {
        self.pixels.concat()
    }

    /// Binary PPM (P6).
    pub fn write_ppm<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.to_rgb())
    }

    /// Fraction of pixels identical to `truth`.
    pub fn exact_rate(&self, truth: &Image) -> f64 {
        let same = self.pixels.iter().zip(&truth.pixels).filter(|(a, b)| a == b).count();
        same as f64 / truth.pixels.len().max(1) as f64
    }

    pub fn psnr(&self, truth: &Image) -> f64 {
        let n = (truth.pixels.len() * 3).max(1) as f64;
        let mse: f64 = self
            .pixels
            .iter()
            .zip(&truth.pixels)
            .map(|(a, b)| Distance::SquaredDifference.eval(*a, *b) as f64)
            .sum::<f64>()
            / n;
        if mse == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (255.0f64 * 255.0 / mse).log10()
        }
    }
}

fn neighbours(i: usize, width: usize, height: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (i % width, i / width);
    [
        (x > 0).then(|| i - 1),
        (x + 1 < width).then(|| i + 1),
        (y > 0).then(|| i - width),
        (y + 1 < height).then(|| i + width),
    ]
    .into_iter()
    .flatten()
}

/// Start from each pixel's most frequent candidate, then make one raster
/// pass choosing, per pixel, the candidate with the smallest total
/// distance to the current choices of its four neighbours. Neighbours with
/// no candidate do not vote. Ties keep the more frequent candidate.
pub fn image_reconstruct(candidates: &[Vec<PixelCandidate>], width: usize, height: usize, distance: Distance) -> Image {
    assert_eq!(candidates.len(), width * height);
    let mut best: Vec<Option<[u8; 3]>> = candidates
        .iter()
        .map(|c| {
            c.iter()
                .max_by(|a, b| a.count.cmp(&b.count).then(b.rgb.cmp(&a.rgb)))
                .map(|p| p.rgb)
        })
        .collect();
    for i in 0..candidates.len() {
        if candidates[i].len() < 2 {
            continue;
        }
        let mut order: Vec<&PixelCandidate> = candidates[i].iter().collect();
        order.sort_by(|a, b| b.count.cmp(&a.count).then(a.rgb.cmp(&b.rgb)));
        let score = |c: [u8; 3]| -> u64 {
            neighbours(i, width, height)
                .filter_map(|n| best[n])
                .map(|nb| distance.eval(c, nb))
                .sum()
        };
        let mut pick = order[0].rgb;
        let mut pick_score = score(pick);
        for c in &order[1..] {
            let s = score(c.rgb);
            if s < pick_score {
                pick = c.rgb;
                pick_score = s;
            }
        }
        best[i] = Some(pick);
    }
    Image {
        width,
        height,
        pixels: best.into_iter().map(|b| b.unwrap_or(SENTINEL)).collect(),
    }
}

/// Baseline: a uniformly random candidate per pixel.
pub fn random_choice<R: Rng>(candidates: &[Vec<PixelCandidate>], width: usize, height: usize, rng: &mut R) -> Image {
    Image {
        width,
        height,
        pixels: candidates
            .iter()
            .map(|c| {
                if c.is_empty() {
                    SENTINEL
                } else {
                    c[rng.gen_range(0..c.len())].rgb
                }
            })
            .collect(),
    }
}
