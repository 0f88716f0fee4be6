use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Complex64;

/// Square `4 D^2`-QAM with odd-integer levels `+-1, +-3, .., +-(2D - 1)`
/// on each axis and a per-axis Gray labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QamConstellation {
    #[serde(rename = "D")]
    pub d: usize,
}

impl QamConstellation {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 || !d.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "D = {d}: Gray labelling needs D to be a power of two"
            )));
        }
        Ok(Self { d })
    }

    pub fn levels_per_axis(&self) -> usize {
        2 * self.d
    }

    pub fn max_level(&self) -> i32 {
        2 * self.d as i32 - 1
    }

    pub fn size(&self) -> usize {
        4 * self.d * self.d
    }

    pub fn bits_per_axis(&self) -> u32 {
        self.levels_per_axis().trailing_zeros()
    }

    pub fn bits_per_symbol(&self) -> u32 {
        2 * self.bits_per_axis()
    }

    /// Odd level for axis index `k` in `0..2D`.
    pub fn level(&self, k: usize) -> i32 {
        2 * k as i32 - self.max_level()
    }

    pub fn index(&self, level: i32) -> usize {
        ((level + self.max_level()) / 2) as usize
    }

    pub fn gray(&self, level: i32) -> u32 {
        let k = self.index(level) as u32;
        k ^ (k >> 1)
    }

    pub fn points(&self) -> Vec<Complex64> {
        let n = self.levels_per_axis();
        (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .map(|(a, b)| Complex64::new(self.level(a) as f64, self.level(b) as f64))
            .collect()
    }

    pub fn random_symbol<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let n = self.levels_per_axis();
        Complex64::new(self.level(rng.random_range(0..n)) as f64, self.level(rng.random_range(0..n)) as f64)
    }

    /// Bit errors between two constellation points.
    pub fn bit_errors(&self, sent: Complex64, got: Complex64) -> u32 {
        let axis = |a: f64, b: f64| (self.gray(a as i32) ^ self.gray(b as i32)).count_ones();
        axis(sent.re, got.re) + axis(sent.im, got.im)
    }

    /// Decision thresholds (even integers) between adjacent levels.
    pub fn boundaries(&self) -> Vec<f64> {
        (1..self.levels_per_axis()).map(|k| (self.level(k) - 1) as f64).collect()
    }
}

/// Nearest odd integer clipped to `[-max_level, max_level]`. Exact midpoints
/// go to the level closer to zero, and `0` goes to `+1`.
pub fn dec_axis(v: f64, max_level: i32) -> i32 {
    let top = max_level as f64;
    if !(v.abs() < top) {
        return if v.is_nan() { 1 } else { max_level * v.signum() as i32 };
    }
    let f = (v - 1.0) / 2.0;
    let lo = 2.0 * f.floor() + 1.0;
    let hi = lo + 2.0;
    let (dl, dh) = (v - lo, hi - v);
    let pick = if dl < dh {
        lo
    } else if dh < dl {
        hi
    } else if lo.abs() < hi.abs() {
        lo
    } else if hi.abs() < lo.abs() {
        hi
    } else {
        1.0
    };
    (pick as i32).clamp(-max_level, max_level)
}

/// `dec(r / beta)` for one received sample.
pub fn detect(r: Complex64, beta: f64, c: &QamConstellation) -> Complex64 {
    let v = r / beta;
    let m = c.max_level();
    Complex64::new(dec_axis(v.re, m) as f64, dec_axis(v.im, m) as f64)
}
