//! Truncated Fourier fields on the torus T^d = [0,1)^d.
//!
//! Modes are `e_j(x) = exp(2πi j·x)` for `j ∈ Z^d` with Euclidean `|j| <= n`.
//! A real field stores every mode of the ball (both `j` and `-j`) and keeps
//! `coeff(-j) = conj(coeff(j))`. The Laplacian acts as `-4π²|j|²` while the
//! Sobolev weight is `(1 + |j|²)^s` with no 2π inside.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;
pub const FOUR_PI_SQ: f64 = 4.0 * PI * PI;

pub(crate) const NO_MODE: u32 = u32::MAX;

/// The Euclidean ball of lattice modes `{j ∈ Z^d : |j| <= n}`.
#[derive(Debug)]
pub struct Lattice {
    d: usize,
    n: usize,
    modes: Vec<[i32; 3]>,
    norm_sq: Vec<f64>,
    neg: Vec<u32>,
    lookup: Vec<u32>,
}

impl Lattice {
    pub fn new(d: usize, n: usize) -> Result<Arc<Lattice>> {
        if d != 2 && d != 3 {
            return Err(Error::InvalidLattice(format!("dimension must be 2 or 3, got {d}")));
        }
        if n == 0 {
            return Err(Error::InvalidLattice("truncation radius must be >= 1".into()));
        }
        let side = 2 * n + 1;
        let box_len = side.pow(d as u32);
        if box_len > 1 << 26 {
            return Err(Error::InvalidLattice(format!(
                "truncation n={n} too large for d={d}"
            )));
        }
        let ni = n as i32;
        let r2 = (n * n) as i64;
        let mut modes = Vec::new();
        let mut lookup = vec![NO_MODE; box_len];
        let third = if d == 3 { -ni..=ni } else { 0..=0 };
        for j0 in -ni..=ni {
            for j1 in -ni..=ni {
                for j2 in third.clone() {
                    let m = [j0, j1, j2];
                    let sq: i64 = m.iter().map(|&c| (c as i64) * (c as i64)).sum();
                    if sq <= r2 {
                        lookup[box_index(&m[..d], n)] = modes.len() as u32;
                        modes.push(m);
                    }
                }
            }
        }
        let norm_sq = modes
            .iter()
            .map(|m| m.iter().map(|&c| (c * c) as f64).sum())
            .collect();
        let neg = modes
            .iter()
            .map(|m| {
                let nm = [-m[0], -m[1], -m[2]];
                lookup[box_index(&nm[..d], n)]
            })
            .collect();
        Ok(Arc::new(Lattice {
            d,
            n,
            modes,
            norm_sq,
            neg,
            lookup,
        }))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> usize {
        self.n
    }

    /// Number of modes in the ball.
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn mode(&self, idx: usize) -> &[i32] {
        &self.modes[idx][..self.d]
    }

    pub fn modes(&self) -> impl Iterator<Item = &[i32]> + '_ {
        self.modes.iter().map(move |m| &m[..self.d])
    }

    /// `|j|²` of mode `idx`.
    pub fn norm_sq(&self, idx: usize) -> f64 {
        self.norm_sq[idx]
    }

    pub fn norms_sq(&self) -> &[f64] {
        &self.norm_sq
    }

    /// Index of `-j` for the mode at `idx`.
    pub fn neg_index(&self, idx: usize) -> usize {
        self.neg[idx] as usize
    }

    pub fn index_of(&self, j: &[i32]) -> Option<usize> {
        if j.len() != self.d {
            return None;
        }
        let ni = self.n as i32;
        if j.iter().any(|&c| c < -ni || c > ni) {
            return None;
        }
        match self.lookup[box_index(j, self.n)] {
            NO_MODE => None,
            i => Some(i as usize),
        }
    }

    pub fn same_as(&self, other: &Lattice) -> bool {
        self.d == other.d && self.n == other.n
    }

    /// For every mode `j`, the index of `j + k`, or `NO_MODE` when it leaves the ball.
    pub(crate) fn shift_table(&self, k: &[i32]) -> Vec<u32> {
        let mut shifted = [0i32; 3];
        self.modes
            .iter()
            .map(|m| {
                for a in 0..self.d {
                    shifted[a] = m[a] + k[a];
                }
                self.index_of(&shifted[..self.d])
                    .map_or(NO_MODE, |i| i as u32)
            })
            .collect()
    }

    fn check_same(&self, other: &Lattice) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::LatticeMismatch {
                expected_d: self.d,
                expected_n: self.n,
                got_d: other.d,
                got_n: other.n,
            })
        }
    }
}

fn box_index(j: &[i32], n: usize) -> usize {
    let side = 2 * n + 1;
    j.iter()
        .fold(0usize, |acc, &c| acc * side + (c + n as i32) as usize)
}

/// A real scalar (1 component) or vector (d components) field stored by its
/// Fourier coefficients over a [`Lattice`] ball. Coefficients are component-major.
#[derive(Clone, Debug)]
pub struct SpectralField {
    lattice: Arc<Lattice>,
    components: usize,
    coeffs: Vec<Complex64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.lattice.same_as(&other.lattice)
            && self.components == other.components
            && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(lattice: &Arc<Lattice>, components: usize) -> Result<SpectralField> {
        if components != 1 && components != lattice.d {
            return Err(Error::InvalidArgument(format!(
                "a field has 1 or d={} components, got {components}",
                lattice.d
            )));
        }
        Ok(SpectralField {
            lattice: Arc::clone(lattice),
            components,
            coeffs: vec![Complex64::new(0.0, 0.0); components * lattice.len()],
        })
    }

    pub fn scalar_zeros(lattice: &Arc<Lattice>) -> SpectralField {
        SpectralField {
            lattice: Arc::clone(lattice),
            components: 1,
            coeffs: vec![Complex64::new(0.0, 0.0); lattice.len()],
        }
    }

    /// Wraps raw coefficients, rejecting data that does not describe a real field.
    pub fn from_coeffs(
        lattice: &Arc<Lattice>,
        components: usize,
        coeffs: Vec<Complex64>,
    ) -> Result<SpectralField> {
        let mut f = SpectralField::zeros(lattice, components)?;
        if coeffs.len() != f.coeffs.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                f.coeffs.len(),
                coeffs.len()
            )));
        }
        f.coeffs = coeffs;
        let scale = f.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if f.conjugate_symmetry_defect() > 1e-12 * scale.max(1e-300) {
            return Err(Error::InvalidArgument(
                "coefficients violate conjugate symmetry (field is not real)".into(),
            ));
        }
        Ok(f)
    }

    /// `amplitude · cos(2π j·x)`.
    pub fn cosine_mode(lattice: &Arc<Lattice>, j: &[i32], amplitude: f64) -> Result<SpectralField> {
        let mut f = SpectralField::scalar_zeros(lattice);
        if j.iter().all(|&c| c == 0) {
            f.set_pair(j, Complex64::new(amplitude, 0.0))?;
        } else {
            f.set_pair(j, Complex64::new(amplitude / 2.0, 0.0))?;
        }
        Ok(f)
    }

    /// Scalar constant field.
    pub fn constant(lattice: &Arc<Lattice>, value: f64) -> SpectralField {
        let mut f = SpectralField::scalar_zeros(lattice);
        let zero = lattice.index_of(&vec![0; lattice.d]).expect("0 is in every ball");
        f.coeffs[zero] = Complex64::new(value, 0.0);
        f
    }

    /// Sets `û(j) = c` and `û(-j) = conj(c)` on the first component.
    pub fn set_pair(&mut self, j: &[i32], c: Complex64) -> Result<()> {
        self.set_component_pair(0, j, c)
    }

    pub fn set_component_pair(&mut self, component: usize, j: &[i32], c: Complex64) -> Result<()> {
        if component >= self.components {
            return Err(Error::InvalidArgument(format!("no component {component}")));
        }
        let idx = self
            .lattice
            .index_of(j)
            .ok_or_else(|| Error::InvalidArgument(format!("mode {j:?} outside the ball")))?;
        let neg = self.lattice.neg_index(idx);
        let base = component * self.lattice.len();
        if idx == neg {
            if c.im != 0.0 {
                return Err(Error::InvalidArgument(
                    "the zero mode of a real field must be real".into(),
                ));
            }
            self.coeffs[base + idx] = c;
        } else {
            self.coeffs[base + idx] = c;
            self.coeffs[base + neg] = c.conj();
        }
        Ok(())
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn is_scalar(&self) -> bool {
        self.components == 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let len = self.lattice.len();
        &self.coeffs[c * len..(c + 1) * len]
    }

    pub fn get(&self, component: usize, j: &[i32]) -> Option<Complex64> {
        let idx = self.lattice.index_of(j)?;
        (component < self.components).then(|| self.coeffs[component * self.lattice.len() + idx])
    }

    /// Largest `|coeff(j) - conj(coeff(-j))|` over all modes.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let len = self.lattice.len();
        let mut worst = 0.0f64;
        for c in 0..self.components {
            let comp = &self.coeffs[c * len..(c + 1) * len];
            for (i, z) in comp.iter().enumerate() {
                let zn = comp[self.lattice.neg_index(i)];
                worst = worst.max((z - zn.conj()).norm());
            }
        }
        worst
    }

    fn check_compatible(&self, other: &SpectralField) -> Result<()> {
        self.lattice.check_same(&other.lattice)?;
        if self.components != other.components {
            return Err(Error::ComponentMismatch {
                expected: if self.components == 1 { "scalar" } else { "vector" },
                got: other.components,
            });
        }
        Ok(())
    }

    pub(crate) fn require_scalar(&self) -> Result<()> {
        if self.components == 1 {
            Ok(())
        } else {
            Err(Error::ComponentMismatch {
                expected: "scalar",
                got: self.components,
            })
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &SpectralField) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * alpha;
        }
        Ok(())
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn scaled(&self, alpha: f64) -> SpectralField {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn scale(&mut self, alpha: f64) {
        for c in &mut self.coeffs {
            *c *= alpha;
        }
    }

    /// Real L² pairing `⟨u, w⟩ = Σ û(j) conj(ŵ(j))`.
    pub fn inner(&self, other: &SpectralField) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// Applies a radial Fourier multiplier `m(|j|²)` to every component.
    pub(crate) fn map_radial(&self, multiplier: impl Fn(f64) -> f64) -> SpectralField {
        let weights: Vec<f64> = self.lattice.norm_sq.iter().map(|&q| multiplier(q)).collect();
        self.apply_weights(&weights)
    }

    pub(crate) fn apply_weights(&self, weights: &[f64]) -> SpectralField {
        let mut out = self.clone();
        out.apply_weights_in_place(weights);
        out
    }

    pub(crate) fn apply_weights_in_place(&mut self, weights: &[f64]) {
        let len = self.lattice.len();
        for comp in self.coeffs.chunks_mut(len) {
            for (z, w) in comp.iter_mut().zip(weights) {
                *z *= *w;
            }
        }
    }

    /// `Σ_j (1+|j|²)^s |û(j)|²`, summed over components.
    pub fn sobolev_norm_sq(&self, s: f64) -> f64 {
        let len = self.lattice.len();
        let mut total = 0.0;
        for comp in self.coeffs.chunks(len) {
            for (z, q) in comp.iter().zip(&self.lattice.norm_sq) {
                let m = z.norm_sqr();
                if m != 0.0 {
                    total += sobolev_weight(*q, s) * m;
                }
            }
        }
        total
    }

    /// `‖u‖_{H^s} = (Σ_j (1+|j|²)^s |û(j)|²)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.sobolev_norm_sq(s).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm(0.0)
    }

    pub fn laplacian(&self) -> SpectralField {
        self.map_radial(|q| -FOUR_PI_SQ * q)
    }

    /// Zeroes every mode with `|j| > m`.
    pub fn project(&self, m: usize) -> Result<SpectralField> {
        if m > self.lattice.n {
            return Err(Error::InvalidArgument(format!(
                "projection radius {m} exceeds lattice radius {}",
                self.lattice.n
            )));
        }
        let m2 = (m * m) as f64;
        Ok(self.map_radial(|q| if q <= m2 { 1.0 } else { 0.0 }))
    }

    /// Heat semigroup `e^{κtΔ}`: multiplies mode `j` by `exp(-4π²κt|j|²)`.
    pub fn heat_multiply(&self, kappa: f64, t: f64) -> Result<SpectralField> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("heat time must be >= 0, got {t}")));
        }
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidArgument(format!("diffusivity must be >= 0, got {kappa}")));
        }
        Ok(self.map_radial(|q| (-FOUR_PI_SQ * kappa * t * q).exp()))
    }

    /// Gradient of a scalar field; component `i` at mode `j` is `2πi j_i û(j)`.
    pub fn gradient(&self) -> Result<SpectralField> {
        self.require_scalar()?;
        let d = self.lattice.d;
        let len = self.lattice.len();
        let mut out = SpectralField::zeros(&self.lattice, d)?;
        for i in 0..d {
            let dst = &mut out.coeffs[i * len..(i + 1) * len];
            for (idx, (o, z)) in dst.iter_mut().zip(&self.coeffs).enumerate() {
                let ji = self.lattice.modes[idx][i] as f64;
                *o = Complex64::new(0.0, TWO_PI * ji) * z;
            }
        }
        Ok(out)
    }

    /// Largest `|j|` carrying a nonzero coefficient, `None` for the zero field.
    pub fn support_radius(&self) -> Option<f64> {
        let len = self.lattice.len();
        let mut best: Option<f64> = None;
        for comp in self.coeffs.chunks(len) {
            for (z, q) in comp.iter().zip(&self.lattice.norm_sq) {
                if z.re != 0.0 || z.im != 0.0 {
                    best = Some(best.map_or(*q, |b| b.max(*q)));
                }
            }
        }
        best.map(f64::sqrt)
    }

    /// Copies this field onto another ball of the same dimension. Modes absent
    /// from the target are dropped; modes new to the target are zero.
    pub fn resample(&self, target: &Arc<Lattice>) -> Result<SpectralField> {
        if target.d != self.lattice.d {
            return Err(Error::LatticeMismatch {
                expected_d: target.d,
                expected_n: target.n,
                got_d: self.lattice.d,
                got_n: self.lattice.n,
            });
        }
        let mut out = SpectralField::zeros(target, self.components)?;
        let (src_len, dst_len) = (self.lattice.len(), target.len());
        for (idx, m) in self.lattice.modes.iter().enumerate() {
            if let Some(t) = target.index_of(&m[..target.d]) {
                for c in 0..self.components {
                    out.coeffs[c * dst_len + t] = self.coeffs[c * src_len + idx];
                }
            }
        }
        Ok(out)
    }

    /// Point evaluation by direct summation (test oracle; O(#modes)).
    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let d = self.lattice.d;
        let len = self.lattice.len();
        let mut out = vec![0.0; self.components];
        for (idx, m) in self.lattice.modes.iter().enumerate() {
            let phase: f64 = (0..d).map(|a| m[a] as f64 * x[a]).sum::<f64>() * TWO_PI;
            let e = Complex64::new(phase.cos(), phase.sin());
            for (c, o) in out.iter_mut().enumerate() {
                *o += (self.coeffs[c * len + idx] * e).re;
            }
        }
        out
    }

    /// Samples one component on the uniform grid `x = m/g` by direct
    /// summation. Row-major with the first axis slowest.
    pub fn sample_grid_direct(&self, component: usize, g: usize) -> Vec<f64> {
        let d = self.lattice.d;
        let total = g.pow(d as u32);
        let len = self.lattice.len();
        let comp = &self.coeffs[component * len..(component + 1) * len];
        let table: Vec<Complex64> = (0..g)
            .map(|r| Complex64::from_polar(1.0, TWO_PI * r as f64 / g as f64))
            .collect();
        let mut out = vec![0.0; total];
        for (p, o) in out.iter_mut().enumerate() {
            let pt = unflatten(p, g, d);
            let mut acc = 0.0;
            for (idx, m) in self.lattice.modes.iter().enumerate() {
                let r: i64 = (0..d).map(|a| m[a] as i64 * pt[a] as i64).sum();
                acc += (comp[idx] * table[r.rem_euclid(g as i64) as usize]).re;
            }
            *o = acc;
        }
        out
    }

    /// Discrete Fourier coefficients of grid samples, restricted to the ball
    /// (direct summation; test oracle).
    pub fn from_grid_direct(lattice: &Arc<Lattice>, g: usize, values: &[f64]) -> Result<SpectralField> {
        let d = lattice.d;
        let total = g.pow(d as u32);
        if values.len() != total {
            return Err(Error::InvalidArgument(format!(
                "expected {total} grid values, got {}",
                values.len()
            )));
        }
        let table: Vec<Complex64> = (0..g)
            .map(|r| Complex64::from_polar(1.0, -TWO_PI * r as f64 / g as f64))
            .collect();
        let mut f = SpectralField::scalar_zeros(lattice);
        let norm = 1.0 / total as f64;
        for (idx, m) in lattice.modes.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (p, v) in values.iter().enumerate() {
                let pt = unflatten(p, g, d);
                let r: i64 = (0..d).map(|a| m[a] as i64 * pt[a] as i64).sum();
                acc += table[r.rem_euclid(g as i64) as usize] * *v;
            }
            f.coeffs[idx] = acc * norm;
        }
        Ok(f)
    }

    pub fn to_snapshot(&self) -> FieldSnapshot {
        let len = self.lattice.len();
        let modes = self
            .lattice
            .modes()
            .enumerate()
            .map(|(idx, j)| ModeEntry {
                j: j.to_vec(),
                re: (0..self.components).map(|c| self.coeffs[c * len + idx].re).collect(),
                im: (0..self.components).map(|c| self.coeffs[c * len + idx].im).collect(),
            })
            .collect();
        FieldSnapshot {
            d: self.lattice.d,
            n: self.lattice.n,
            components: self.components,
            modes,
        }
    }

    pub fn from_snapshot(snapshot: &FieldSnapshot) -> Result<SpectralField> {
        let lattice = Lattice::new(snapshot.d, snapshot.n)?;
        let mut f = SpectralField::zeros(&lattice, snapshot.components)?;
        let len = lattice.len();
        for entry in &snapshot.modes {
            let idx = lattice.index_of(&entry.j).ok_or_else(|| {
                Error::InvalidArgument(format!("snapshot mode {:?} outside the ball", entry.j))
            })?;
            if entry.re.len() != snapshot.components || entry.im.len() != snapshot.components {
                return Err(Error::InvalidArgument(format!(
                    "snapshot mode {:?} has the wrong number of components",
                    entry.j
                )));
            }
            for c in 0..snapshot.components {
                f.coeffs[c * len + idx] = Complex64::new(entry.re[c], entry.im[c]);
            }
        }
        SpectralField::from_coeffs(&lattice, snapshot.components, f.coeffs)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_snapshot())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<SpectralField> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let snapshot: FieldSnapshot = serde_json::from_str(&text)?;
        SpectralField::from_snapshot(&snapshot)
    }
}

/// `(1 + |j|²)^s`, with the common orders special-cased.
pub(crate) fn sobolev_weight(norm_sq: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else if s == 1.0 {
        1.0 + norm_sq
    } else if s == -1.0 {
        1.0 / (1.0 + norm_sq)
    } else {
        (1.0 + norm_sq).powf(s)
    }
}

pub(crate) fn unflatten(mut p: usize, g: usize, d: usize) -> [usize; 3] {
    let mut out = [0usize; 3];
    for a in (0..d).rev() {
        out[a] = p % g;
        p /= g;
    }
    out
}

/// Maximum over saved snapshots of `‖·‖_{H^s}`.
pub fn sup_time_norm(series: &[(f64, SpectralField)], s: f64) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("sup_time_norm of an empty series".into()));
    }
    Ok(series
        .iter()
        .map(|(_, f)| f.sobolev_norm(s))
        .fold(0.0, f64::max))
}

/// On-disk form of a field: `{d, n, components, modes: [{j, re, im}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub d: usize,
    pub n: usize,
    pub components: usize,
    pub modes: Vec<ModeEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeEntry {
    pub j: Vec<i32>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(d: usize, n: usize) -> Arc<Lattice> {
        Lattice::new(d, n).unwrap()
    }

    /// Deterministic pseudo-random real field with every mode populated.
    fn random_field(lattice: &Arc<Lattice>, seed: u64) -> SpectralField {
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut f = SpectralField::scalar_zeros(lattice);
        for idx in 0..lattice.len() {
            let neg = lattice.neg_index(idx);
            if neg < idx {
                continue;
            }
            let j = lattice.mode(idx).to_vec();
            let c = if neg == idx {
                Complex64::new(next(), 0.0)
            } else {
                Complex64::new(next(), next())
            };
            f.set_pair(&j, c).unwrap();
        }
        f
    }

    #[test]
    fn lattice_is_symmetric_ball() {
        for (d, n) in [(2, 1), (2, 5), (3, 3)] {
            let l = lat(d, n);
            for idx in 0..l.len() {
                let j = l.mode(idx);
                let q: i32 = j.iter().map(|c| c * c).sum();
                assert!(q as usize <= n * n);
                let neg: Vec<i32> = j.iter().map(|c| -c).collect();
                assert_eq!(l.index_of(&neg), Some(l.neg_index(idx)));
            }
            assert!(l.index_of(&vec![0; d]).is_some());
        }
        // boundary ties are included: (3,4) has |j| = 5
        assert!(lat(2, 5).index_of(&[3, 4]).is_some());
        assert!(lat(2, 5).index_of(&[4, 4]).is_none());
        assert_eq!(lat(2, 1).len(), 5);
    }

    #[test]
    fn lattice_rejects_bad_input() {
        assert!(Lattice::new(1, 4).is_err());
        assert!(Lattice::new(4, 4).is_err());
        assert!(Lattice::new(2, 0).is_err());
    }

    #[test]
    fn sobolev_norm_examples() {
        let l = lat(2, 3);
        let one = SpectralField::constant(&l, 1.0);
        for s in [-2.0, -0.4, 0.0, 1.0, 2.5] {
            assert!((one.sobolev_norm(s) - 1.0).abs() < 1e-15);
        }
        // û(±j) = 1/2, |j|² = 1, s = 1: (2 · 2 · 1/4)^{1/2} = 1
        let cosine = SpectralField::cosine_mode(&l, &[1, 0], 1.0).unwrap();
        let direct: f64 = [0.25f64, 0.25].iter().map(|m| (1.0 + 1.0) * m).sum();
        assert!((cosine.sobolev_norm(1.0) - direct.sqrt()).abs() < 1e-15);
        assert!((cosine.sobolev_norm(1.0) - 1.0).abs() < 1e-15);
        assert_eq!(SpectralField::scalar_zeros(&l).sobolev_norm(0.7), 0.0);
    }

    #[test]
    fn laplacian_eigenvalues() {
        let l = lat(2, 3);
        assert!(SpectralField::constant(&l, 3.0).laplacian().is_zero());
        let c = Complex64::new(0.3, -0.2);
        let mut u = SpectralField::scalar_zeros(&l);
        u.set_pair(&[0, 1], c).unwrap();
        let lap = u.laplacian();
        let got = lap.get(0, &[0, 1]).unwrap();
        assert!((got - c * (-FOUR_PI_SQ)).norm() < 1e-13);
        let w = random_field(&l, 4);
        let lhs = u.add(&w).unwrap().laplacian();
        let rhs = lap.add(&w.laplacian()).unwrap();
        assert!(lhs.sub(&rhs).unwrap().l2_norm() < 1e-10);
    }

    #[test]
    fn projection_examples() {
        let l = lat(2, 6);
        let u = random_field(&l, 9);
        assert_eq!(u.project(6).unwrap(), u);
        let high = SpectralField::cosine_mode(&l, &[3, 3], 1.0).unwrap();
        assert!(high.project(4).unwrap().is_zero());
        assert!(u.project(7).is_err());

        let p = u.project(3).unwrap();
        assert_eq!(p.project(3).unwrap(), p);
        let w = random_field(&l, 10);
        let lhs = p.inner(&w).unwrap();
        let rhs = u.inner(&w.project(3).unwrap()).unwrap();
        // direct pairing oracle: sum over modes |j| <= 3 only
        let mut oracle = 0.0;
        for idx in 0..l.len() {
            if l.norm_sq(idx) <= 9.0 {
                oracle += (u.coeffs()[idx] * w.coeffs()[idx].conj()).re;
            }
        }
        assert!((lhs - oracle).abs() < 1e-12);
        assert!((rhs - oracle).abs() < 1e-12);
    }

    #[test]
    fn heat_multiplier() {
        let l = lat(2, 4);
        let u = random_field(&l, 2);
        assert_eq!(u.heat_multiply(0.3, 0.0).unwrap(), u);
        let h = u.heat_multiply(0.3, 5.0).unwrap();
        let zero = l.index_of(&[0, 0]).unwrap();
        assert_eq!(h.coeffs()[zero], u.coeffs()[zero]);
        assert!(u.heat_multiply(0.3, -1.0).is_err());
    }

    #[test]
    fn heat_smoothing_constant_is_stable() {
        // sup_j (1+|j|²)^{1/2} e^{-4π²κt|j|²} ≤ C (κt)^{-1/2} on a t grid
        let l = lat(2, 64);
        let kappa = 0.5;
        let ratios: Vec<f64> = (1..=40)
            .map(|i| 1e-4 * 1.25f64.powi(i))
            .map(|t| {
                let sup = l
                    .norms_sq()
                    .iter()
                    .map(|&q| (1.0 + q).sqrt() * (-FOUR_PI_SQ * kappa * t * q).exp())
                    .fold(0.0, f64::max);
                sup * (kappa * t).sqrt()
            })
            .collect();
        let c = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(c < 1.0, "fitted smoothing constant {c}");
        assert!(ratios.iter().all(|r| *r <= c));
    }

    #[test]
    fn gradient_against_finite_differences() {
        let l = lat(2, 4);
        let u = SpectralField::cosine_mode(&l, &[2, 1], 1.0).unwrap();
        let g = u.gradient().unwrap();
        assert!(g.conjugate_symmetry_defect() < 1e-15);
        let h = 1e-5;
        for x in [[0.1, 0.2], [0.37, 0.81], [0.9, 0.05]] {
            let val = g.evaluate(&x);
            for a in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[a] += h;
                xm[a] -= h;
                let fd = (u.evaluate(&xp)[0] - u.evaluate(&xm)[0]) / (2.0 * h);
                assert!((val[a] - fd).abs() < 1e-6, "axis {a}: {} vs {fd}", val[a]);
            }
            // closed form: -2π j sin(2π j·x)
            let phase = TWO_PI * (2.0 * x[0] + x[1]);
            assert!((val[0] + TWO_PI * 2.0 * phase.sin()).abs() < 1e-10);
        }
        assert!(SpectralField::constant(&l, 2.0).gradient().unwrap().is_zero());
        assert!(g.gradient().is_err());
    }

    #[test]
    fn gradient_parseval() {
        let l = lat(2, 5);
        let u = random_field(&l, 5);
        let g = u.gradient().unwrap();
        let oracle: f64 = (0..l.len())
            .map(|i| FOUR_PI_SQ * l.norm_sq(i) * u.coeffs()[i].norm_sqr())
            .sum();
        assert!((g.sobolev_norm_sq(0.0) - oracle).abs() < 1e-10 * oracle);
    }

    #[test]
    fn direct_transform_round_trip_and_quadrature() {
        for (d, n) in [(2, 4), (3, 2)] {
            let l = lat(d, n);
            let u = random_field(&l, 77);
            let g = 2 * n + 1;
            let samples = u.sample_grid_direct(0, g);
            let back = SpectralField::from_grid_direct(&l, g, &samples).unwrap();
            let err = back.sub(&u).unwrap().l2_norm() / u.l2_norm();
            assert!(err < 1e-10, "round trip error {err}");
            // L² norm by physical quadrature
            let quad: f64 = samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64;
            assert!((quad.sqrt() - u.l2_norm()).abs() < 1e-10 * u.l2_norm());
        }
    }

    #[test]
    fn sup_time_norm_examples() {
        let l = lat(2, 2);
        assert!(sup_time_norm(&[], 0.0).is_err());
        let one = SpectralField::constant(&l, 1.0);
        let two = SpectralField::constant(&l, 2.0);
        assert_eq!(sup_time_norm(&[(0.0, one.clone())], 0.0).unwrap(), 1.0);
        let zero = SpectralField::scalar_zeros(&l);
        assert_eq!(sup_time_norm(&[(0.0, zero.clone()), (1.0, zero)], 1.0).unwrap(), 0.0);
        assert_eq!(sup_time_norm(&[(0.0, one), (1.0, two)], 0.0).unwrap(), 2.0);
    }

    #[test]
    fn snapshot_round_trip() {
        let l = lat(3, 2);
        let u = random_field(&l, 3);
        let back = SpectralField::from_snapshot(&u.to_snapshot()).unwrap();
        assert_eq!(back, u);
        let mut bad = u.to_snapshot();
        bad.modes[0].im[0] += 1.0;
        assert!(SpectralField::from_snapshot(&bad).is_err());
    }

    #[test]
    fn resample_between_balls() {
        let small = lat(2, 3);
        let big = lat(2, 6);
        let u = random_field(&small, 8);
        let up = u.resample(&big).unwrap();
        assert_eq!(up.resample(&small).unwrap(), u);
        assert!((up.l2_norm() - u.l2_norm()).abs() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn operations_preserve_conjugate_symmetry(seed in 1u64..10_000, m in 0usize..6) {
                let l = lat(2, 6);
                let u = random_field(&l, seed);
                prop_assert!(u.laplacian().conjugate_symmetry_defect() < 1e-12);
                prop_assert!(u.project(m).unwrap().conjugate_symmetry_defect() < 1e-12);
                prop_assert!(u.heat_multiply(0.1, 0.01).unwrap().conjugate_symmetry_defect() < 1e-12);
                prop_assert!(u.gradient().unwrap().conjugate_symmetry_defect() < 1e-12);
            }

            #[test]
            fn projection_contracts_every_sobolev_norm(seed in 1u64..10_000, m in 0usize..6, s in -3.0f64..3.0) {
                let l = lat(2, 6);
                let u = random_field(&l, seed);
                prop_assert!(u.project(m).unwrap().sobolev_norm(s) <= u.sobolev_norm(s) * (1.0 + 1e-15));
            }
        }
    }
}
