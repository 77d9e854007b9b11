//! Square greyscale images: a synthetic stroke-digit generator and rotation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

/// Labelled images stored one flattened row-major image per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSet {
    pub side: usize,
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl ImageSet {
    pub fn new(side: usize, x: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if x.cols() != side * side {
            return Err(Error::Shape(format!("{} pixels per row, expected {side}x{side}", x.cols())));
        }
        if x.rows() != labels.len() {
            return Err(Error::Shape(format!("{} images but {} labels", x.rows(), labels.len())));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Input(format!("label {l} outside 0..{num_classes}")));
        }
        Ok(ImageSet {
            side,
            x,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> ImageSet {
        ImageSet {
            side: self.side,
            x: self.x.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// First `n` rows (all when `n` exceeds the size).
    pub fn head(&self, n: usize) -> ImageSet {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSplits {
    pub train: ImageSet,
    pub test: ImageSet,
}

fn ring(cx: f64, cy: f64, rx: f64, ry: f64, k: usize) -> Vec<(f64, f64)> {
    (0..=k)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

/// Polylines of each digit in the unit square, `y` pointing down.
fn digit_strokes(d: usize) -> Vec<Vec<(f64, f64)>> {
    match d {
        0 => vec![ring(0.5, 0.5, 0.32, 0.48, 16)],
        1 => vec![vec![(0.32, 0.18), (0.52, 0.0), (0.52, 1.0)]],
        2 => vec![vec![(0.15, 0.2), (0.5, 0.0), (0.85, 0.2), (0.85, 0.4), (0.15, 1.0), (0.85, 1.0)]],
        3 => vec![vec![(0.15, 0.0), (0.85, 0.0), (0.5, 0.42), (0.85, 0.68), (0.55, 1.0), (0.15, 0.9)]],
        4 => vec![vec![(0.7, 1.0), (0.7, 0.0), (0.1, 0.65), (0.9, 0.65)]],
        5 => vec![vec![(0.85, 0.0), (0.2, 0.0), (0.15, 0.45), (0.7, 0.45), (0.85, 0.7), (0.6, 1.0), (0.15, 0.95)]],
        6 => vec![vec![(0.75, 0.0), (0.25, 0.45), (0.15, 0.8), (0.5, 1.0), (0.85, 0.8), (0.7, 0.55), (0.2, 0.62)]],
        7 => vec![vec![(0.1, 0.0), (0.9, 0.0), (0.4, 1.0)]],
        8 => vec![ring(0.5, 0.24, 0.24, 0.24, 12), ring(0.5, 0.72, 0.3, 0.28, 12)],
        9 => vec![ring(0.5, 0.28, 0.27, 0.28, 12), vec![(0.77, 0.28), (0.62, 1.0)]],
        _ => unreachable!("digits are 0..10"),
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let s = if len2 > 0.0 { ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    ((wx - s * vx).powi(2) + (wy - s * vy).powi(2)).sqrt()
}

/// Hand-drawn-looking digits: each sample jitters scale, shear, position and
/// stroke width of a fixed template, then adds pixel noise. Values lie in
/// `[0, 1]`, labels cycle through `0..10`.
pub fn synthetic_digits(n: usize, side: usize, seed: u64) -> Result<ImageSet> {
    if side < 8 {
        return Err(Error::Config(format!("image side {side} is too small for digits")));
    }
    let mut data = Vec::with_capacity(n * side * side);
    let mut labels = Vec::with_capacity(n);
    let box_size = side as f64 * 20.0 / 28.0;
    for i in 0..n {
        let mut g = rng::named_stream(seed, "digits", &[i as u64]);
        let label = i % 10;
        let u = |g: &mut rng::StreamRng, lo: f64, hi: f64| lo + (hi - lo) * rand::Rng::random::<f64>(g);
        let scale = u(&mut g, 0.75, 1.0) * box_size;
        let aspect = u(&mut g, 0.8, 1.1);
        let shear = u(&mut g, -0.25, 0.25);
        let c = (side as f64 - 1.0) / 2.0;
        let (cx, cy) = (c + u(&mut g, -2.0, 2.0) * side as f64 / 28.0, c + u(&mut g, -2.0, 2.0) * side as f64 / 28.0);
        let width = u(&mut g, 0.8, 1.4) * side as f64 / 28.0;
        let strokes: Vec<Vec<(f64, f64)>> = digit_strokes(label)
            .into_iter()
            .map(|line| {
                line.into_iter()
                    .map(|(x, y)| {
                        let (x, y) = (x - 0.5, y - 0.5);
                        (cx + scale * aspect * (x + shear * y), cy + scale * y)
                    })
                    .collect()
            })
            .collect();
        for r in 0..side {
            for col in 0..side {
                let p = (col as f64, r as f64);
                let d = strokes
                    .iter()
                    .flat_map(|line| line.windows(2).map(move |w| segment_distance(p, w[0], w[1])))
                    .fold(f64::INFINITY, f64::min);
                let ink = (1.0 - (d - width).max(0.0)).clamp(0.0, 1.0);
                let noise = 0.05 * rng::standard_normal(&mut g);
                data.push((ink + noise).clamp(0.0, 1.0));
            }
        }
        labels.push(label);
    }
    ImageSet::new(side, Matrix::from_vec(n, side * side, data)?, labels, 10)
}

/// Synthetic train/test splits drawn from disjoint seed streams.
pub fn synthetic_digit_splits(train: usize, test: usize, side: usize, seed: u64) -> Result<ImageSplits> {
    Ok(ImageSplits {
        train: synthetic_digits(train, side, rng::derive_seed(seed, "train", &[]))?,
        test: synthetic_digits(test, side, rng::derive_seed(seed, "test", &[]))?,
    })
}

fn snap(v: f64) -> f64 {
    for target in [-1.0, 0.0, 1.0] {
        if (v - target).abs() < 1e-12 {
            return target;
        }
    }
    v
}

/// Counter-clockwise rotation (as displayed, rows pointing down) about the
/// centre `((n-1)/2, (n-1)/2)` with bilinear interpolation; pixels sampled
/// from outside the grid read as 0.
pub fn rotate_image(image: &[f64], side: usize, degrees: f64) -> Result<Vec<f64>> {
    if image.len() != side * side {
        return Err(Error::Shape(format!("{} pixels is not a {side}x{side} grid", image.len())));
    }
    if !(0.0..360.0).contains(&degrees) {
        return Err(Error::Input(format!("angle {degrees} outside [0, 360)")));
    }
    if degrees == 0.0 {
        return Ok(image.to_vec());
    }
    let rad = degrees.to_radians();
    let (s, c) = (snap(rad.sin()), snap(rad.cos()));
    let centre = (side as f64 - 1.0) / 2.0;
    let at = |r: isize, col: isize| -> f64 {
        if r < 0 || col < 0 || r as usize >= side || col as usize >= side {
            0.0
        } else {
            image[r as usize * side + col as usize]
        }
    };
    let mut out = vec![0.0; side * side];
    for r in 0..side {
        for col in 0..side {
            let (dx, dy) = (col as f64 - centre, r as f64 - centre);
            let sx = centre + c * dx - s * dy;
            let sy = centre + s * dx + c * dy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let mut v = (1.0 - fx) * (1.0 - fy) * at(y0, x0);
            if fx > 0.0 {
                v += fx * (1.0 - fy) * at(y0, x0 + 1);
            }
            if fy > 0.0 {
                v += (1.0 - fx) * fy * at(y0 + 1, x0);
            }
            if fx > 0.0 && fy > 0.0 {
                v += fx * fy * at(y0 + 1, x0 + 1);
            }
            out[r * side + col] = v;
        }
    }
    Ok(out)
}

/// Rotates every image of the set.
pub fn rotate_set(set: &ImageSet, degrees: f64) -> Result<ImageSet> {
    let mut data = Vec::with_capacity(set.x.data().len());
    for i in 0..set.len() {
        data.extend(rotate_image(set.x.row(i), set.side, degrees)?);
    }
    ImageSet::new(set.side, Matrix::from_vec(set.len(), set.x.cols(), data)?, set.labels.clone(), set.num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_turn_flips_both_axes() {
        let side = 6;
        let img: Vec<f64> = (0..36).map(|v| v as f64 / 35.0).collect();
        let out = rotate_image(&img, side, 180.0).unwrap();
        for r in 0..side {
            for c in 0..side {
                assert_eq!(out[r * side + c], img[(side - 1 - r) * side + (side - 1 - c)]);
            }
        }
    }

    #[test]
    fn quarter_turn_on_two_by_two() {
        // [a b; c d] turned a quarter counter-clockwise is [b d; a c].
        let out = rotate_image(&[1.0, 2.0, 3.0, 4.0], 2, 90.0).unwrap();
        assert_eq!(out, vec![2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn range_preserved_and_shape_checked() {
        let set = synthetic_digits(4, 28, 1).unwrap();
        let out = rotate_image(set.x.row(3), 28, 33.0).unwrap();
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(matches!(rotate_image(&[0.0; 5], 2, 10.0), Err(Error::Shape(_))));
    }

    #[test]
    fn digits_are_deterministic_and_distinct() {
        let a = synthetic_digits(20, 28, 5).unwrap();
        assert_eq!(a, synthetic_digits(20, 28, 5).unwrap());
        assert_ne!(a.x.row(0), a.x.row(10));
        assert!(a.x.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
