use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Banding configuration: `bands` bands of `rows` signature components each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LshParams {
    /// Jaccard similarity at or above which a pair counts as a duplicate.
    pub threshold: f64,
    pub bands: usize,
    pub rows: usize,
    /// Signature length.
    pub num_perm: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Lsh40,
    Lsh80,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Lsh40 => "lsh40",
            Preset::Lsh80 => "lsh80",
        }
    }

    pub fn params(self) -> LshParams {
        match self {
            Preset::Lsh40 => LshParams::new(0.4, 32, 4, 128).expect("preset"),
            Preset::Lsh80 => LshParams::new(0.8, 9, 13, 128).expect("preset"),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lsh40" => Ok(Preset::Lsh40),
            "lsh80" => Ok(Preset::Lsh80),
            other => Err(Error::config(format!(
                "unknown LSH preset {other:?} (lsh40|lsh80)"
            ))),
        }
    }
}

impl LshParams {
    pub fn new(threshold: f64, bands: usize, rows: usize, num_perm: usize) -> Result<Self> {
        if bands == 0 || rows == 0 {
            return Err(Error::config("bands and rows must be at least 1"));
        }
        if bands * rows > num_perm {
            return Err(Error::config(format!(
                "bands × rows = {} exceeds signature size {num_perm}",
                bands * rows
            )));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::config(format!(
                "threshold {threshold} outside [0, 1]"
            )));
        }
        Ok(LshParams {
            threshold,
            bands,
            rows,
            num_perm,
        })
    }

    /// Probability that a pair with Jaccard similarity `s` shares at least
    /// one band: `1 - (1 - s^r)^b`.
    pub fn collision_probability(&self, s: f64) -> f64 {
        collision_probability(s, self.bands, self.rows)
    }

    /// Expected false-positive and false-negative rates under a uniform
    /// similarity prior: the area under the collision curve below the
    /// threshold, and the area above the curve beyond it.
    pub fn theoretical_rates(&self) -> TheoreticalRates {
        let t = self.threshold;
        let fp = simpson(|s| self.collision_probability(s), 0.0, t);
        let fn_ = simpson(|s| 1.0 - self.collision_probability(s), t, 1.0);
        TheoreticalRates {
            false_positive: fp,
            false_negative: fn_,
        }
    }
}

pub fn collision_probability(s: f64, bands: usize, rows: usize) -> f64 {
    let s = s.clamp(0.0, 1.0);
    1.0 - (1.0 - s.powi(rows as i32)).powi(bands as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalRates {
    pub false_positive: f64,
    pub false_negative: f64,
}

/// Composite Simpson rule; the integrands here are polynomials of degree
/// at most `b·r ≤ 128`, smooth enough that 4096 panels is far below 1e-4.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const PANELS: usize = 4096;
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / PANELS as f64;
    let mut sum = f(a) + f(b);
    for i in 1..PANELS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}
