//! Built-in nonlinear forcings `f(u)` with their regularity metadata.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PhysicalGrid;
use crate::spectral::SpectralField;

/// The forcing catalogue. Every entry is globally Lipschitz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Nonlinearity {
    Zero,
    Linear(f64),
    Sin(f64),
    /// `c·u / (1 + u²)`
    SmoothSat(f64),
}

impl Nonlinearity {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Linear(c) => c * u,
            Nonlinearity::Sin(c) => c * u.sin(),
            Nonlinearity::SmoothSat(c) => c * u / (1.0 + u * u),
        }
    }

    /// A valid global Lipschitz constant.
    pub fn lipschitz_const(&self) -> f64 {
        match *self {
            Nonlinearity::Zero => 0.0,
            // |d/du (u/(1+u²))| = |1-u²|/(1+u²)² <= 1, attained at u = 0
            Nonlinearity::Linear(c) | Nonlinearity::Sin(c) | Nonlinearity::SmoothSat(c) => c.abs(),
        }
    }

    /// Bounded with bounded first and second derivatives.
    pub fn is_cb2(&self) -> bool {
        !matches!(self, Nonlinearity::Linear(_))
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Nonlinearity::Zero => true,
            Nonlinearity::Linear(c) | Nonlinearity::Sin(c) | Nonlinearity::SmoothSat(c) => c == 0.0,
        }
    }

    /// `Π_n f(u)`: pointwise evaluation on a grid with at least
    /// `dealias_level · (2n+1)` points per axis.
    pub fn apply(&self, field: &SpectralField, dealias_level: f64) -> Result<SpectralField> {
        let grid = PhysicalGrid::new(field.lattice(), dealias_level)?;
        self.apply_on(&grid, field)
    }

    /// Same as [`Nonlinearity::apply`] with a prepared grid.
    pub fn apply_on(&self, grid: &PhysicalGrid, field: &SpectralField) -> Result<SpectralField> {
        field.require_scalar()?;
        match *self {
            Nonlinearity::Zero => Ok(SpectralField::scalar_zeros(field.lattice())),
            Nonlinearity::Linear(c) => Ok(field.scaled(c)),
            _ => {
                let mut values = grid.to_physical(field, 0)?;
                for v in &mut values {
                    *v = self.eval(*v);
                }
                grid.from_physical(&values)
            }
        }
    }

    /// Largest `|f(a) - f(b)| / |a - b|` over `samples` pseudo-random pairs in
    /// `[-range, range]`.
    pub fn lipschitz_check(&self, samples: usize, range: f64, seed: u64) -> f64 {
        let mut state = seed.wrapping_mul(0x2545_F491_4F6C_DD1D) | 1;
        let mut uniform = move || {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            let x = state.wrapping_mul(0x2545_F491_4F6C_DD1D);
            (x >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut worst = 0.0f64;
        for i in 0..samples {
            let a = range * (2.0 * uniform() - 1.0);
            // alternate wide and close pairs so the local slope is probed too
            let b = if i % 2 == 0 {
                range * (2.0 * uniform() - 1.0)
            } else {
                let h = 1e-4 * (0.5 + uniform());
                if uniform() < 0.5 {
                    a + h
                } else {
                    a - h
                }
            };
            if a != b {
                worst = worst.max((self.eval(a) - self.eval(b)).abs() / (a - b).abs());
            }
        }
        worst
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Zero => write!(f, "zero"),
            Nonlinearity::Linear(c) => write!(f, "linear:{c}"),
            Nonlinearity::Sin(c) => write!(f, "sin:{c}"),
            Nonlinearity::SmoothSat(c) => write!(f, "smoothsat:{c}"),
        }
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "zero" {
            return Ok(Nonlinearity::Zero);
        }
        let (name, coeff) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("unknown nonlinearity {s:?}")))?;
        let c: f64 = coeff
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad coefficient in nonlinearity {s:?}")))?;
        if !c.is_finite() {
            return Err(Error::Config(format!("non-finite coefficient in {s:?}")));
        }
        match name.trim() {
            "linear" => Ok(Nonlinearity::Linear(c)),
            "sin" => Ok(Nonlinearity::Sin(c)),
            "smoothsat" => Ok(Nonlinearity::SmoothSat(c)),
            other => Err(Error::Config(format!("unknown nonlinearity {other:?}"))),
        }
    }
}

impl TryFrom<String> for Nonlinearity {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Nonlinearity> for String {
    fn from(f: Nonlinearity) -> String {
        f.to_string()
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;
    use std::sync::Arc;

    use num_complex::Complex64;

    use super::*;
    use crate::spectral::Lattice;

    fn band_limited(lattice: &Arc<Lattice>, radius: f64, amp: f64, seed: u64) -> SpectralField {
        let mut s = seed | 1;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut f = SpectralField::scalar_zeros(lattice);
        for idx in 0..lattice.len() {
            let neg = lattice.neg_index(idx);
            if neg < idx || lattice.norm_sq(idx).sqrt() > radius {
                continue;
            }
            let decay = amp / (1.0 + lattice.norm_sq(idx));
            let c = if neg == idx {
                Complex64::new(decay * next(), 0.0)
            } else {
                Complex64::new(decay * next(), decay * next())
            };
            f.set_pair(&lattice.mode(idx).to_vec(), c).unwrap();
        }
        f
    }

    #[test]
    fn parse_and_display() {
        for s in ["zero", "linear:2", "sin:1.5", "smoothsat:-0.5"] {
            let f: Nonlinearity = s.parse().unwrap();
            assert_eq!(f.to_string().parse::<Nonlinearity>().unwrap(), f);
        }
        assert!("cubic:1".parse::<Nonlinearity>().is_err());
        assert!("sin".parse::<Nonlinearity>().is_err());
        assert!("sin:abc".parse::<Nonlinearity>().is_err());
        let json = serde_json::to_string(&Nonlinearity::Sin(0.5)).unwrap();
        assert_eq!(json, "\"sin:0.5\"");
    }

    #[test]
    fn metadata() {
        assert!(Nonlinearity::Zero.is_cb2());
        assert!(Nonlinearity::Sin(1.0).is_cb2());
        assert!(Nonlinearity::SmoothSat(1.0).is_cb2());
        assert!(!Nonlinearity::Linear(1.0).is_cb2());
    }

    #[test]
    fn apply_examples() {
        let l = Lattice::new(2, 6).unwrap();
        let u = band_limited(&l, 4.0, 1.0, 3);
        assert!(Nonlinearity::Zero.apply(&u, 2.0).unwrap().is_zero());
        let e = SpectralField::cosine_mode(&l, &[1, 2], 1.0).unwrap();
        assert_eq!(Nonlinearity::Linear(3.0).apply(&e, 2.0).unwrap(), e.scaled(3.0));
        let c = SpectralField::constant(&l, FRAC_PI_2);
        let out = Nonlinearity::Sin(1.0).apply(&c, 2.0).unwrap();
        assert!(out.sub(&SpectralField::constant(&l, 1.0)).unwrap().l2_norm() < 1e-14);
        assert!(Nonlinearity::Sin(1.0).apply(&u, 0.5).is_err());
        assert!(Nonlinearity::Sin(1.0).apply(&u.gradient().unwrap(), 2.0).is_err());
    }

    #[test]
    fn lipschitz_sampling() {
        assert_eq!(Nonlinearity::Zero.lipschitz_check(1000, 10.0, 1), 0.0);
        let lin = Nonlinearity::Linear(-2.5).lipschitz_check(1000, 10.0, 1);
        assert!((lin - 2.5).abs() < 1e-9);
        for f in [Nonlinearity::Sin(1.7), Nonlinearity::SmoothSat(0.9)] {
            let observed = f.lipschitz_check(5000, 6.0, 7);
            assert!(observed <= f.lipschitz_const() * (1.0 + 1e-9), "{f}: {observed}");
            assert!(observed > 0.9 * f.lipschitz_const());
        }
    }

    #[test]
    fn linear_growth_bound() {
        let l = Lattice::new(2, 8).unwrap();
        for f in [Nonlinearity::Sin(2.0), Nonlinearity::SmoothSat(1.5), Nonlinearity::Linear(0.7)] {
            let cst = 2.0 * f.eval(0.0).abs().max(f.lipschitz_const());
            for seed in 1..6 {
                let u = band_limited(&l, 8.0, 3.0 * seed as f64, seed);
                let fu = f.apply(&u, 2.0).unwrap();
                assert!(fu.l2_norm() <= cst * (1.0 + u.l2_norm()));
            }
        }
    }

    #[test]
    fn lipschitz_in_l2_with_small_aliasing() {
        let l = Lattice::new(2, 8).unwrap();
        let f = Nonlinearity::Sin(1.0);
        for seed in 1..6 {
            let u = band_limited(&l, 4.0, 1.0, seed);
            let w = band_limited(&l, 4.0, 1.0, seed + 100);
            let du = f.apply(&u, 2.0).unwrap().sub(&f.apply(&w, 2.0).unwrap()).unwrap();
            assert!(du.l2_norm() <= f.lipschitz_const() * u.sub(&w).unwrap().l2_norm() * (1.0 + 1e-6));
        }
        // aliasing: 2x and 4x oversampling agree on the ball
        let u = band_limited(&l, 4.0, 1.0, 42);
        let two = f.apply(&u, 2.0).unwrap();
        let four = f.apply(&u, 4.0).unwrap();
        let rel = two.sub(&four).unwrap().l2_norm() / four.l2_norm();
        assert!(rel < 1e-6, "aliasing residual {rel}");
    }
}
