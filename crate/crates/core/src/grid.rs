//! Uniform physical grids on T^d with FFT transforms to and from a mode ball.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::spectral::{Lattice, SpectralField};

/// A `g^d` grid (`x = m/g`) attached to a lattice ball, with planned FFTs.
pub struct PhysicalGrid {
    lattice: Arc<Lattice>,
    g: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    slots: Vec<usize>,
}

impl std::fmt::Debug for PhysicalGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhysicalGrid")
            .field("d", &self.lattice.dim())
            .field("n", &self.lattice.radius())
            .field("g", &self.g)
            .finish()
    }
}

impl PhysicalGrid {
    /// Grid with at least `dealias_level · (2n + 1)` points per axis, rounded
    /// up to a 2·3·5-smooth size.
    pub fn new(lattice: &Arc<Lattice>, dealias_level: f64) -> Result<PhysicalGrid> {
        if !(dealias_level >= 1.0) || !dealias_level.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dealias level must be >= 1, got {dealias_level}"
            )));
        }
        let min = (dealias_level * (2 * lattice.radius() + 1) as f64).ceil() as usize;
        PhysicalGrid::with_size(lattice, smooth_size(min))
    }

    pub fn with_size(lattice: &Arc<Lattice>, g: usize) -> Result<PhysicalGrid> {
        if g < 2 * lattice.radius() + 1 {
            return Err(Error::InvalidArgument(format!(
                "grid of {g} points cannot resolve |j| <= {}",
                lattice.radius()
            )));
        }
        let mut planner = FftPlanner::new();
        let d = lattice.dim();
        let slots = lattice
            .modes()
            .map(|j| {
                j.iter().fold(0usize, |acc, &c| {
                    acc * g + (c as i64).rem_euclid(g as i64) as usize
                })
            })
            .collect();
        debug_assert!(d >= 2);
        Ok(PhysicalGrid {
            lattice: Arc::clone(lattice),
            g,
            forward: planner.plan_fft_forward(g),
            inverse: planner.plan_fft_inverse(g),
            slots,
        })
    }

    pub fn points_per_axis(&self) -> usize {
        self.g
    }

    pub fn len(&self) -> usize {
        self.g.pow(self.lattice.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    /// Samples one component of `field` at the grid points.
    pub fn to_physical(&self, field: &SpectralField, component: usize) -> Result<Vec<f64>> {
        if !field.lattice().same_as(&self.lattice) {
            return Err(Error::LatticeMismatch {
                expected_d: self.lattice.dim(),
                expected_n: self.lattice.radius(),
                got_d: field.lattice().dim(),
                got_n: field.lattice().radius(),
            });
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len()];
        for (slot, c) in self.slots.iter().zip(field.component(component)) {
            buf[*slot] = *c;
        }
        self.transform(&mut buf, &self.inverse);
        Ok(buf.into_iter().map(|z| z.re).collect())
    }

    /// Discrete Fourier coefficients of grid values, truncated to the ball.
    pub fn from_physical(&self, values: &[f64]) -> Result<SpectralField> {
        if values.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} grid values, got {}",
                self.len(),
                values.len()
            )));
        }
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        let norm = 1.0 / self.len() as f64;
        let mut out = SpectralField::scalar_zeros(&self.lattice);
        for (o, slot) in out.coeffs_mut().iter_mut().zip(&self.slots) {
            *o = buf[*slot] * norm;
        }
        // the grid transform of real data is conjugate symmetric up to rounding
        symmetrize(&mut out);
        Ok(out)
    }

    /// Applies a 1-D transform along every axis of the row-major buffer.
    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let g = self.g;
        let d = self.lattice.dim();
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // last axis is contiguous
        for row in buf.chunks_mut(g) {
            plan.process_with_scratch(row, &mut scratch);
        }
        let mut line = vec![Complex64::new(0.0, 0.0); g];
        for axis in 0..d - 1 {
            let stride = g.pow((d - 1 - axis) as u32);
            let block = stride * g;
            for start in (0..buf.len()).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for (r, l) in line.iter_mut().enumerate() {
                        *l = buf[base + r * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (r, l) in line.iter().enumerate() {
                        buf[base + r * stride] = *l;
                    }
                }
            }
        }
    }
}

fn symmetrize(field: &mut SpectralField) {
    let lattice = Arc::clone(field.lattice());
    let coeffs = field.coeffs_mut();
    for idx in 0..lattice.len() {
        let neg = lattice.neg_index(idx);
        if neg > idx {
            let avg = (coeffs[idx] + coeffs[neg].conj()) * 0.5;
            coeffs[idx] = avg;
            coeffs[neg] = avg.conj();
        } else if neg == idx {
            coeffs[idx].im = 0.0;
        }
    }
}

/// Smallest integer `>= min` whose only prime factors are 2, 3 and 5.
pub(crate) fn smooth_size(min: usize) -> usize {
    let mut g = min.max(1);
    loop {
        let mut r = g;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return g;
        }
        g += 1;
    }
}
