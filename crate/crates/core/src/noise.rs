//! Divergence-free transport noise on T^d.
//!
//! For a symmetric support `K ⊂ Z^d \ {0}` with amplitudes `θ_k`, the noise is
//! built from real channels: for every `k` in the half-lattice `K₊` and every
//! frame vector `a_{k,i} ⊥ k`, a cosine channel `√2 θ_k a_{k,i} cos(2πk·x)`
//! and a sine channel `√2 θ_k a_{k,i} sin(2πk·x)`. Their covariance is
//! `Q(x) = Σ_{k∈K} θ_k² (I - k⊗k/|k|²) cos(2πk·x)`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Lattice, SpectralField, NO_MODE, TWO_PI};

/// Support `K` and amplitudes `θ`, normalised so that `Σ θ_k² = d/(d-1) · κ`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    d: usize,
    kappa: f64,
    modes: BTreeMap<[i32; 3], f64>,
}

impl NoiseSpec {
    /// Builds a spec from explicit `(k, θ_k)` pairs. The amplitudes give the
    /// shape; they are rescaled to the normalisation for `kappa`.
    pub fn explicit(d: usize, kappa: f64, entries: &[(Vec<i32>, f64)]) -> Result<NoiseSpec> {
        if d != 2 && d != 3 {
            return Err(Error::InvalidNoise(format!("dimension must be 2 or 3, got {d}")));
        }
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidNoise(format!("kappa must be >= 0, got {kappa}")));
        }
        if entries.is_empty() {
            return Err(Error::InvalidNoise("empty support".into()));
        }
        let mut modes = BTreeMap::new();
        for (k, theta) in entries {
            if k.len() != d {
                return Err(Error::InvalidNoise(format!("mode {k:?} is not {d}-dimensional")));
            }
            if k.iter().all(|&c| c == 0) {
                return Err(Error::InvalidNoise("zero vector in support".into()));
            }
            if !(*theta >= 0.0) || !theta.is_finite() {
                return Err(Error::InvalidNoise(format!("amplitude for {k:?} must be >= 0")));
            }
            let mut key = [0i32; 3];
            key[..d].copy_from_slice(k);
            if modes.insert(key, *theta).is_some() {
                return Err(Error::InvalidNoise(format!("mode {k:?} listed twice")));
            }
        }
        for (k, theta) in &modes {
            let neg = [-k[0], -k[1], -k[2]];
            match modes.get(&neg) {
                Some(t) if (t - theta).abs() <= 1e-12 * theta.max(*t) => {}
                Some(_) => {
                    return Err(Error::InvalidNoise(format!(
                        "asymmetric support: θ differs between {:?} and its negative",
                        &k[..d]
                    )))
                }
                None => {
                    return Err(Error::InvalidNoise(format!(
                        "asymmetric support: {:?} present without its negative",
                        &k[..d]
                    )))
                }
            }
        }
        let target = d as f64 / (d as f64 - 1.0) * kappa;
        let sum: f64 = modes.values().map(|t| t * t).sum();
        let factor = if target == 0.0 {
            0.0
        } else if sum == 0.0 {
            return Err(Error::InvalidNoise(
                "all amplitudes are zero but kappa > 0".into(),
            ));
        } else {
            (target / sum).sqrt()
        };
        for t in modes.values_mut() {
            *t *= factor;
        }
        Ok(NoiseSpec { d, kappa, modes })
    }

    /// θ uniform on the shell `{0 < |k| <= shell}`.
    pub fn uniform_shell(d: usize, kappa: f64, shell: usize) -> Result<NoiseSpec> {
        if shell == 0 {
            return Err(Error::InvalidNoise(
                "shell radius 0 has no nonzero modes".into(),
            ));
        }
        let lattice = Lattice::new(d, shell).map_err(|e| Error::InvalidNoise(e.to_string()))?;
        let entries: Vec<(Vec<i32>, f64)> = lattice
            .modes()
            .filter(|k| k.iter().any(|&c| c != 0))
            .map(|k| (k.to_vec(), 1.0))
            .collect();
        NoiseSpec::explicit(d, kappa, &entries)
    }

    pub fn from_file(file: &NoiseSpecFile) -> Result<NoiseSpec> {
        match file.mode.as_str() {
            "uniform-shell" => {
                let shell = file.shell.ok_or_else(|| {
                    Error::Config("uniform-shell noise needs N".into())
                })?;
                NoiseSpec::uniform_shell(file.d, file.kappa, shell)
            }
            "explicit" => {
                let theta = file.theta.as_ref().ok_or_else(|| {
                    Error::Config("explicit noise needs a theta list".into())
                })?;
                let entries: Vec<(Vec<i32>, f64)> =
                    theta.iter().map(|e| (e.k.clone(), e.theta)).collect();
                NoiseSpec::explicit(file.d, file.kappa, &entries)
            }
            other => Err(Error::Config(format!("unknown noise mode {other:?}"))),
        }
    }

    pub fn to_file(&self) -> NoiseSpecFile {
        NoiseSpecFile {
            d: self.d,
            kappa: self.kappa,
            mode: "explicit".into(),
            shell: None,
            theta: Some(
                self.support()
                    .map(|(k, theta)| ThetaEntry {
                        k: k.to_vec(),
                        theta,
                    })
                    .collect(),
            ),
        }
    }

    /// Same support with every amplitude set to zero.
    pub fn silenced(&self) -> NoiseSpec {
        NoiseSpec {
            d: self.d,
            kappa: 0.0,
            modes: self.modes.keys().map(|k| (*k, 0.0)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// The nominal κ used in the normalisation.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// `(k, θ_k)` over the whole support, in lexicographic order of `k`.
    pub fn support(&self) -> impl Iterator<Item = (&[i32], f64)> + '_ {
        self.modes.iter().map(move |(k, t)| (&k[..self.d], *t))
    }

    pub fn theta_sq_sum(&self) -> f64 {
        self.modes.values().map(|t| t * t).sum()
    }

    /// `‖θ‖²_{ℓ∞}`, the sup of the covariance Fourier coefficients.
    pub fn theta_sup_sq(&self) -> f64 {
        self.modes.values().map(|t| t * t).fold(0.0, f64::max)
    }

    /// Largest Euclidean `|k|` in the support.
    pub fn max_norm(&self) -> f64 {
        self.modes
            .keys()
            .map(|k| ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt())
            .fold(0.0, f64::max)
    }

    /// Largest `|k_i|` over the support.
    pub fn max_coord(&self) -> usize {
        self.modes
            .keys()
            .flat_map(|k| k.iter().map(|c| c.unsigned_abs() as usize))
            .max()
            .unwrap_or(0)
    }

    /// Whether support and amplitudes are invariant under coordinate
    /// permutations and sign flips.
    pub fn is_lattice_symmetric(&self) -> bool {
        let perms: &[[usize; 3]] = if self.d == 2 {
            &[[0, 1, 2], [1, 0, 2]]
        } else {
            &[[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]]
        };
        for (k, theta) in &self.modes {
            for p in perms {
                for signs in 0..(1u32 << self.d) {
                    let mut img = [0i32; 3];
                    for a in 0..self.d {
                        let s = if signs >> a & 1 == 1 { -1 } else { 1 };
                        img[a] = s * k[p[a]];
                    }
                    match self.modes.get(&img) {
                        Some(t) if (t - theta).abs() <= 1e-12 * theta.max(*t) => {}
                        _ => return false,
                    }
                }
            }
        }
        true
    }
}

/// JSON form: `{d, kappa, mode: "uniform-shell"|"explicit", N?, theta?: [{k, theta}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpecFile {
    pub d: usize,
    pub kappa: f64,
    pub mode: String,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub shell: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<ThetaEntry>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaEntry {
    pub k: Vec<i32>,
    pub theta: f64,
}

/// Cosine or sine part of a real channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trig {
    Cos,
    Sin,
}

/// One real noise channel `√2 θ_k a_{k,i} cos|sin(2πk·x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Channel {
    pub half: usize,
    pub frame: usize,
    pub trig: Trig,
    /// Stable identifier derived from `(k, i, trig)`; keys the Brownian motion.
    pub id: u64,
}

#[derive(Clone, Debug)]
pub struct HalfMode {
    pub k: [i32; 3],
    pub theta: f64,
    /// Orthonormal basis of `k^⊥`, `d - 1` vectors (unused coordinates zero).
    pub frames: Vec<[f64; 3]>,
}

/// The constructed channel family for a [`NoiseSpec`].
#[derive(Clone, Debug)]
pub struct NoiseBasis {
    spec: NoiseSpec,
    half: Vec<HalfMode>,
    channels: Vec<Channel>,
}

const ID_OFFSET: i64 = 1 << 15;

pub fn channel_id(k: &[i32], frame: usize, trig: Trig) -> u64 {
    let mut id = 0u64;
    for a in 0..3 {
        let c = k.get(a).copied().unwrap_or(0) as i64 + ID_OFFSET;
        id = (id << 16) | (c as u64 & 0xFFFF);
    }
    (id << 8) | ((frame as u64) << 1) | matches!(trig, Trig::Sin) as u64
}

fn in_upper_half(k: &[i32]) -> bool {
    k.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
}

/// Orthonormal frame of `k^⊥`. In d=2 this is `k^⊥/|k|` with
/// `k^⊥ = (k₂, -k₁)`; in d=3 the coordinate axis least aligned with `k` is
/// orthogonalised against `k` and completed by a cross product.
pub fn frame_for(k: &[i32]) -> Vec<[f64; 3]> {
    let kf: Vec<f64> = k.iter().map(|&c| c as f64).collect();
    let norm = kf.iter().map(|c| c * c).sum::<f64>().sqrt();
    if k.len() == 2 {
        return vec![[kf[1] / norm, -kf[0] / norm, 0.0]];
    }
    let unit = [kf[0] / norm, kf[1] / norm, kf[2] / norm];
    let axis = (0..3)
        .min_by(|&a, &b| unit[a].abs().partial_cmp(&unit[b].abs()).unwrap())
        .unwrap();
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let proj = unit[axis];
    let mut a1 = [e[0] - proj * unit[0], e[1] - proj * unit[1], e[2] - proj * unit[2]];
    let n1 = (a1[0] * a1[0] + a1[1] * a1[1] + a1[2] * a1[2]).sqrt();
    for c in &mut a1 {
        *c /= n1;
    }
    let a2 = [
        unit[1] * a1[2] - unit[2] * a1[1],
        unit[2] * a1[0] - unit[0] * a1[2],
        unit[0] * a1[1] - unit[1] * a1[0],
    ];
    vec![a1, a2]
}

impl NoiseBasis {
    pub fn new(spec: NoiseSpec) -> Result<NoiseBasis> {
        if spec.is_empty() {
            return Err(Error::InvalidNoise("empty support".into()));
        }
        let d = spec.d;
        let mut half = Vec::new();
        let mut channels = Vec::new();
        for (k, theta) in spec.support() {
            if k.iter().all(|&c| c == 0) {
                return Err(Error::InvalidNoise("zero vector in support".into()));
            }
            let neg: Vec<i32> = k.iter().map(|c| -c).collect();
            if !spec.support().any(|(q, _)| q == neg.as_slice()) {
                return Err(Error::InvalidNoise(format!("asymmetric support at {k:?}")));
            }
            if !in_upper_half(k) {
                continue;
            }
            let mut key = [0i32; 3];
            key[..d].copy_from_slice(k);
            let frames = frame_for(k);
            let h = half.len();
            for frame in 0..d - 1 {
                for trig in [Trig::Cos, Trig::Sin] {
                    channels.push(Channel {
                        half: h,
                        frame,
                        trig,
                        id: channel_id(k, frame, trig),
                    });
                }
            }
            half.push(HalfMode {
                k: key,
                theta,
                frames,
            });
        }
        Ok(NoiseBasis {
            spec,
            half,
            channels,
        })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.d
    }

    pub fn half_modes(&self) -> &[HalfMode] {
        &self.half
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel_ids(&self) -> Vec<u64> {
        self.channels.iter().map(|c| c.id).collect()
    }

    /// Evaluates the vector field of one channel at `x`.
    pub fn channel_field(&self, channel: usize, x: &[f64]) -> [f64; 3] {
        let ch = self.channels[channel];
        let h = &self.half[ch.half];
        let phase: f64 = TWO_PI * (0..self.spec.d).map(|a| h.k[a] as f64 * x[a]).sum::<f64>();
        let wave = match ch.trig {
            Trig::Cos => phase.cos(),
            Trig::Sin => phase.sin(),
        };
        let amp = SQRT_2 * h.theta * wave;
        let a = h.frames[ch.frame];
        [amp * a[0], amp * a[1], amp * a[2]]
    }

    /// `Q(x)` assembled from the channel frames:
    /// `Σ_{k∈K₊} 2θ_k² (Σ_i a_{k,i}⊗a_{k,i}) cos(2πk·x)`.
    pub fn covariance_at(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let d = self.spec.d;
        let mut q = vec![vec![0.0; d]; d];
        for h in &self.half {
            let phase: f64 = TWO_PI * (0..d).map(|a| h.k[a] as f64 * x[a]).sum::<f64>();
            let w = 2.0 * h.theta * h.theta * phase.cos();
            accumulate_frames(&mut q, &h.frames, w);
        }
        q
    }

    /// `Q(0)₁₁ / 2`, the diffusivity the Itô correction actually produces.
    pub fn kappa_eff(&self) -> f64 {
        self.covariance_at(&vec![0.0; self.spec.d])[0][0] / 2.0
    }

    /// Norms of `Q` by tensor-grid quadrature with `level` points per axis.
    pub fn covariance_norms(&self, level: usize) -> Result<CovarianceReport> {
        let d = self.spec.d;
        let required = 2 * self.spec.max_coord() + 1;
        if level < required {
            return Err(Error::InsufficientQuadrature { level, required });
        }
        let cos_table: Vec<f64> = (0..level)
            .map(|r| (2.0 * PI * r as f64 / level as f64).cos())
            .collect();
        let projectors: Vec<(Vec<Vec<f64>>, [i32; 3], f64)> = self
            .half
            .iter()
            .map(|h| {
                let mut p = vec![vec![0.0; d]; d];
                accumulate_frames(&mut p, &h.frames, 1.0);
                (p, h.k, 2.0 * h.theta * h.theta)
            })
            .collect();
        let total = level.pow(d as u32);
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        let mut q = vec![vec![0.0; d]; d];
        for p in 0..total {
            let pt = crate::spectral::unflatten(p, level, d);
            for row in q.iter_mut() {
                row.iter_mut().for_each(|v| *v = 0.0);
            }
            for (proj, k, w) in &projectors {
                let r: i64 = (0..d).map(|a| k[a] as i64 * pt[a] as i64).sum();
                let c = w * cos_table[r.rem_euclid(level as i64) as usize];
                for (qa, pa) in q.iter_mut().zip(proj) {
                    for (qab, pab) in qa.iter_mut().zip(pa) {
                        *qab += c * pab;
                    }
                }
            }
            let frob_sq: f64 = q.iter().flatten().map(|v| v * v).sum();
            l1 += frob_sq.sqrt();
            l2 += frob_sq;
        }
        let vol = 1.0 / total as f64;
        let q0 = self.covariance_at(&vec![0.0; d]);
        let theta4: f64 = self.spec.modes.values().map(|t| t.powi(4)).sum();
        Ok(CovarianceReport {
            d,
            kappa_eff: q0[0][0] / 2.0,
            q0,
            l1_norm: l1 * vol,
            l2_norm: (l2 * vol).sqrt(),
            l2_closed_form: ((d as f64 - 1.0) * theta4).sqrt(),
            fourier_sup: self.spec.theta_sup_sq(),
            quadrature_level: level,
        })
    }

    /// Quadrature level used by the studies: comfortably above the minimum.
    pub fn default_quadrature_level(&self) -> usize {
        let min = 2 * self.spec.max_coord() + 1;
        if self.spec.d == 2 {
            min.max(8 * self.spec.max_coord() + 1).max(64)
        } else {
            min.max(4 * self.spec.max_coord() + 1).max(24)
        }
    }
}

fn accumulate_frames(q: &mut [Vec<f64>], frames: &[[f64; 3]], w: f64) {
    for a in frames {
        for (r, row) in q.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v += w * a[r] * a[c];
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub d: usize,
    #[serde(rename = "Q0")]
    pub q0: Vec<Vec<f64>>,
    pub kappa_eff: f64,
    /// `∫ |Q(x)|_F dx`.
    pub l1_norm: f64,
    pub l2_norm: f64,
    /// `((d-1) Σ θ_k⁴)^{1/2}`.
    pub l2_closed_form: f64,
    pub fourier_sup: f64,
    pub quadrature_level: usize,
}

impl CovarianceReport {
    /// Largest off-diagonal entry and largest diagonal spread of `Q(0)`,
    /// relative to its trace.
    pub fn isotropy_defect(&self) -> f64 {
        let trace: f64 = (0..self.d).map(|i| self.q0[i][i]).sum();
        if trace == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.d {
            for j in 0..self.d {
                if i != j {
                    worst = worst.max(self.q0[i][j].abs());
                }
            }
            worst = worst.max((self.q0[i][i] - self.q0[0][0]).abs());
        }
        worst / trace
    }
}

/// Transport operators `u ↦ Π_n(σ_ch·∇u)` of a basis acting on one lattice ball.
#[derive(Debug)]
pub struct TransportOperator {
    basis: Arc<NoiseBasis>,
    lattice: Arc<Lattice>,
    plus: Vec<Vec<u32>>,
    minus: Vec<Vec<u32>>,
    modes: Vec<[f64; 3]>,
    // one index from each pair {j, -j}; the output is rebuilt by mirroring
    upper: Vec<u32>,
    neg: Vec<u32>,
}

impl TransportOperator {
    pub fn new(basis: &Arc<NoiseBasis>, lattice: &Arc<Lattice>) -> Result<TransportOperator> {
        if basis.dim() != lattice.dim() {
            return Err(Error::InvalidArgument(format!(
                "noise dimension {} does not match lattice dimension {}",
                basis.dim(),
                lattice.dim()
            )));
        }
        let d = lattice.dim();
        let mut plus = Vec::with_capacity(basis.half.len());
        let mut minus = Vec::with_capacity(basis.half.len());
        for h in &basis.half {
            let k = &h.k[..d];
            let neg: Vec<i32> = k.iter().map(|c| -c).collect();
            plus.push(lattice.shift_table(k));
            minus.push(lattice.shift_table(&neg));
        }
        let modes = lattice
            .modes()
            .map(|j| {
                let mut m = [0.0; 3];
                for (a, c) in j.iter().enumerate() {
                    m[a] = TWO_PI * *c as f64;
                }
                m
            })
            .collect();
        let neg: Vec<u32> = (0..lattice.len()).map(|i| lattice.neg_index(i) as u32).collect();
        let upper = (0..lattice.len() as u32)
            .filter(|&i| neg[i as usize] > i)
            .collect();
        Ok(TransportOperator {
            basis: Arc::clone(basis),
            lattice: Arc::clone(lattice),
            plus,
            minus,
            modes,
            upper,
            neg,
        })
    }

    pub fn basis(&self) -> &Arc<NoiseBasis> {
        &self.basis
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn num_channels(&self) -> usize {
        self.basis.channels.len()
    }

    fn check_input(&self, u: &SpectralField) -> Result<()> {
        u.require_scalar()?;
        if !u.lattice().same_as(&self.lattice) {
            return Err(Error::LatticeMismatch {
                expected_d: self.lattice.dim(),
                expected_n: self.lattice.radius(),
                got_d: u.lattice().dim(),
                got_n: u.lattice().radius(),
            });
        }
        Ok(())
    }

    /// Adds `(coeff at j+k) += plus_w·g(j)·û(j)` and `(j-k) += minus_w·g(j)·û(j)`
    /// with `g(j) = 2π a·j`, for `j` in one half of the ball only.
    ///
    /// The weights always satisfy `-plus_w = conj(minus_w)`, so the input at
    /// `-j` contributes the conjugate mirror of what `j` contributes and
    /// [`Self::fold`] recovers the full sum.
    fn scatter(
        &self,
        half: usize,
        frame: usize,
        plus_w: Complex64,
        minus_w: Complex64,
        u: &[Complex64],
        out: &mut [Complex64],
    ) {
        let a = self.basis.half[half].frames[frame];
        let plus = &self.plus[half];
        let minus = &self.minus[half];
        for &idx in &self.upper {
            let idx = idx as usize;
            let z = u[idx];
            if z.re == 0.0 && z.im == 0.0 {
                continue;
            }
            let m = &self.modes[idx];
            let g = a[0] * m[0] + a[1] * m[1] + a[2] * m[2];
            if g == 0.0 {
                continue;
            }
            let val = z * g;
            let p = plus[idx];
            if p != NO_MODE {
                out[p as usize] += plus_w * val;
            }
            let q = minus[idx];
            if q != NO_MODE {
                out[q as usize] += minus_w * val;
            }
        }
    }

    /// `out[j] += half[j] + conj(half[-j])`.
    fn fold(&self, half: &[Complex64], out: &mut [Complex64]) {
        for (idx, o) in out.iter_mut().enumerate() {
            *o += half[idx] + half[self.neg[idx] as usize].conj();
        }
    }

    fn weights(&self, half: usize, trig: Trig, scale: f64) -> (Complex64, Complex64) {
        let c = SQRT_2 * self.basis.half[half].theta / 2.0 * scale;
        match trig {
            // cos = (e_k + e_{-k})/2, times a·∇ = 2πi a·j
            Trig::Cos => (Complex64::new(0.0, c), Complex64::new(0.0, c)),
            // sin = (e_k - e_{-k})/(2i)
            Trig::Sin => (Complex64::new(c, 0.0), Complex64::new(-c, 0.0)),
        }
    }

    /// `Π_n(σ_ch·∇u)` for one channel.
    pub fn apply_channel(&self, channel: usize, u: &SpectralField) -> Result<SpectralField> {
        self.check_input(u)?;
        let ch = *self
            .basis
            .channels
            .get(channel)
            .ok_or_else(|| Error::InvalidArgument(format!("no channel {channel}")))?;
        let mut half = vec![Complex64::new(0.0, 0.0); self.lattice.len()];
        let (pw, mw) = self.weights(ch.half, ch.trig, 1.0);
        self.scatter(ch.half, ch.frame, pw, mw, u.coeffs(), &mut half);
        let mut out = SpectralField::scalar_zeros(&self.lattice);
        self.fold(&half, out.coeffs_mut());
        Ok(out)
    }

    /// `Σ_ch w_ch Π_n(σ_ch·∇u)` with one weight per channel (in channel order).
    pub fn apply_combined(&self, u: &SpectralField, weights: &[f64]) -> Result<SpectralField> {
        let mut out = SpectralField::scalar_zeros(&self.lattice);
        self.accumulate_combined(u, weights, 1.0, &mut out)?;
        Ok(out)
    }

    /// `out += scale · Σ_ch w_ch Π_n(σ_ch·∇u)`.
    pub fn accumulate_combined(
        &self,
        u: &SpectralField,
        weights: &[f64],
        scale: f64,
        out: &mut SpectralField,
    ) -> Result<()> {
        self.check_input(u)?;
        self.check_input(out)?;
        if weights.len() != self.basis.channels.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} channel weights, got {}",
                self.basis.channels.len(),
                weights.len()
            )));
        }
        let d = self.lattice.dim();
        // channels come in (frame, cos/sin) blocks of 2(d-1) per half mode
        let per_half = 2 * (d - 1);
        let mut acc = vec![Complex64::new(0.0, 0.0); self.lattice.len()];
        for half in 0..self.basis.half.len() {
            for frame in 0..d - 1 {
                let base = half * per_half + 2 * frame;
                let (bc, bs) = (weights[base], weights[base + 1]);
                if bc == 0.0 && bs == 0.0 {
                    continue;
                }
                let c = SQRT_2 * self.basis.half[half].theta / 2.0 * scale;
                if c == 0.0 {
                    continue;
                }
                let plus_w = Complex64::new(bs * c, bc * c);
                let minus_w = Complex64::new(-bs * c, bc * c);
                self.scatter(half, frame, plus_w, minus_w, u.coeffs(), &mut acc);
            }
        }
        self.fold(&acc, out.coeffs_mut());
        Ok(())
    }

    /// `½ Σ_ch σ_ch·∇(σ_ch·∇u)`, valid when the support of `u` keeps clear of
    /// the ball boundary by twice the largest noise mode.
    pub fn ito_correction(&self, u: &SpectralField) -> Result<SpectralField> {
        self.check_input(u)?;
        let limit = self.lattice.radius() as f64 - 2.0 * self.basis.spec.max_norm();
        let mut out = SpectralField::scalar_zeros(&self.lattice);
        let Some(support) = u.support_radius() else {
            return Ok(out);
        };
        if support > limit + 1e-12 {
            return Err(Error::SupportTooWide { support, limit });
        }
        for ch in 0..self.basis.channels.len() {
            let once = self.apply_channel(ch, u)?;
            let twice = self.apply_channel(ch, &once)?;
            out.axpy(0.5, &twice)?;
        }
        Ok(out)
    }

    /// `Σ_ch ‖Π_n(σ_ch·∇u)‖²_{L²}`, the quadratic variation rate of the noise.
    pub fn quadratic_variation(&self, u: &SpectralField) -> Result<f64> {
        let mut total = 0.0;
        for ch in 0..self.basis.channels.len() {
            total += self.apply_channel(ch, u)?.sobolev_norm_sq(0.0);
        }
        Ok(total)
    }
}

/// Uniform-shell specs `θ_k² = d/(d-1)·κ / #{0<|k|<=N}` for each shell `N`.
pub fn make_scaling_family(d: usize, kappa: f64, shells: &[usize]) -> Result<Vec<NoiseSpec>> {
    if shells.is_empty() {
        return Err(Error::InvalidNoise("no shells given".into()));
    }
    if shells.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidNoise(format!(
            "shells must be strictly increasing, got {shells:?}"
        )));
    }
    shells
        .iter()
        .map(|&n| NoiseSpec::uniform_shell(d, kappa, n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(spec: NoiseSpec) -> Arc<NoiseBasis> {
        Arc::new(NoiseBasis::new(spec).unwrap())
    }

    /// Direct evaluation of `Σ_{k∈K} θ_k² (I - k⊗k/|k|²) cos(2πk·x)`.
    fn covariance_formula(spec: &NoiseSpec, x: &[f64]) -> Vec<Vec<f64>> {
        let d = spec.dim();
        let mut q = vec![vec![0.0; d]; d];
        for (k, theta) in spec.support() {
            let k2: f64 = k.iter().map(|&c| (c * c) as f64).sum();
            let phase: f64 = TWO_PI * (0..d).map(|a| k[a] as f64 * x[a]).sum::<f64>();
            for (r, row) in q.iter_mut().enumerate() {
                for (c, v) in row.iter_mut().enumerate() {
                    let id = if r == c { 1.0 } else { 0.0 };
                    *v += theta * theta * (id - k[r] as f64 * k[c] as f64 / k2) * phase.cos();
                }
            }
        }
        q
    }

    fn random_interior_field(lattice: &Arc<Lattice>, radius: f64, seed: u64) -> SpectralField {
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
    fn two_dimensional_frames() {
        assert_eq!(frame_for(&[1, 0]), vec![[0.0, -1.0, 0.0]]);
        let b = basis(NoiseSpec::uniform_shell(2, 1.0, 2).unwrap());
        for h in b.half_modes() {
            let a = h.frames[0];
            let norm = (h.k[0] as f64).hypot(h.k[1] as f64);
            assert_eq!(a, [h.k[1] as f64 / norm, -h.k[0] as f64 / norm, 0.0]);
        }
    }

    #[test]
    fn three_dimensional_frames_are_orthonormal() {
        let b = basis(NoiseSpec::uniform_shell(3, 1.0, 2).unwrap());
        for h in b.half_modes() {
            let k = [h.k[0] as f64, h.k[1] as f64, h.k[2] as f64];
            for (i, a) in h.frames.iter().enumerate() {
                let dot_k: f64 = (0..3).map(|c| a[c] * k[c]).sum();
                assert!(dot_k.abs() < 1e-14);
                for (j, b) in h.frames.iter().enumerate() {
                    let dot: f64 = (0..3).map(|c| a[c] * b[c]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-14);
                }
            }
        }
        let f = frame_for(&[1, 0, 0]);
        assert_eq!(f.len(), 2);
    }

    #[test]
    fn channel_count_and_normalisation() {
        let spec = NoiseSpec::uniform_shell(2, 1.0, 1).unwrap();
        assert_eq!(spec.len(), 4);
        for (_, theta) in spec.support() {
            assert!((theta * theta - 0.5).abs() < 1e-15);
        }
        let b = basis(spec);
        assert_eq!(b.channels().len(), 2 * 1 * 2);
        let b3 = basis(NoiseSpec::uniform_shell(3, 0.7, 2).unwrap());
        assert_eq!(b3.channels().len(), b3.half_modes().len() * 2 * 2);
        let sum = b3.spec().theta_sq_sum();
        assert!((sum - 1.5 * 0.7).abs() < 1e-14);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(NoiseSpec::explicit(2, 1.0, &[]).is_err());
        assert!(NoiseSpec::explicit(2, 1.0, &[(vec![0, 0], 1.0)]).is_err());
        assert!(NoiseSpec::explicit(2, 1.0, &[(vec![1, 0], 1.0)]).is_err());
        assert!(NoiseSpec::explicit(2, 1.0, &[(vec![1, 0], 1.0), (vec![-1, 0], 2.0)]).is_err());
        assert!(NoiseSpec::uniform_shell(2, 1.0, 0).is_err());
        let lopsided =
            NoiseSpec::explicit(2, 1.0, &[(vec![1, 0], 1.0), (vec![-1, 0], 1.0)]).unwrap();
        assert!(!lopsided.is_lattice_symmetric());
        assert!(NoiseSpec::uniform_shell(3, 1.0, 3).unwrap().is_lattice_symmetric());
    }

    #[test]
    fn covariance_matches_projection_formula() {
        for spec in [
            NoiseSpec::uniform_shell(2, 1.0, 1).unwrap(),
            NoiseSpec::uniform_shell(2, 0.3, 3).unwrap(),
            NoiseSpec::uniform_shell(3, 0.5, 2).unwrap(),
        ] {
            let b = basis(spec.clone());
            for x in [[0.0, 0.0, 0.0], [0.13, 0.71, 0.4], [0.5, 0.25, 0.9]] {
                let got = b.covariance_at(&x[..spec.dim()]);
                let want = covariance_formula(&spec, &x[..spec.dim()]);
                for (gr, wr) in got.iter().zip(&want) {
                    for (g, w) in gr.iter().zip(wr) {
                        assert!((g - w).abs() < 1e-13);
                    }
                }
            }
            // Q(x) = Q(-x)
            let q1 = b.covariance_at(&[0.3, 0.17, 0.6][..spec.dim()]);
            let q2 = b.covariance_at(&[-0.3, -0.17, -0.6][..spec.dim()]);
            assert_eq!(q1, q2);
            // trace Q(0) = (d-1) Σθ²
            let q0 = b.covariance_at(&vec![0.0; spec.dim()]);
            let trace: f64 = (0..spec.dim()).map(|i| q0[i][i]).sum();
            let want = (spec.dim() as f64 - 1.0) * spec.theta_sq_sum();
            assert!((trace - want).abs() < 1e-13);
        }
    }

    #[test]
    fn covariance_from_channels_outer_product() {
        // Q(x - y) = Σ_ch σ_ch(x) ⊗ σ_ch(y)
        let b = basis(NoiseSpec::uniform_shell(2, 1.0, 2).unwrap());
        let x = [0.21, 0.63];
        let y = [0.7, 0.05];
        let mut sum = [[0.0; 2]; 2];
        for ch in 0..b.channels().len() {
            let sx = b.channel_field(ch, &x);
            let sy = b.channel_field(ch, &y);
            for r in 0..2 {
                for c in 0..2 {
                    sum[r][c] += sx[r] * sy[c];
                }
            }
        }
        let q = b.covariance_at(&[x[0] - y[0], x[1] - y[1]]);
        for r in 0..2 {
            for c in 0..2 {
                assert!((sum[r][c] - q[r][c]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn unit_shell_covariance_values() {
        let b = basis(NoiseSpec::uniform_shell(2, 1.0, 1).unwrap());
        let q0 = b.covariance_at(&[0.0, 0.0]);
        assert!((q0[0][0] - 1.0).abs() < 1e-15 && (q0[1][1] - 1.0).abs() < 1e-15);
        assert!(q0[0][1].abs() < 1e-15);
        assert!((b.kappa_eff() - 0.5).abs() < 1e-15);
        let report = b.covariance_norms(16).unwrap();
        // (d-1) Σθ⁴ = 4 · 1/4 = 1
        assert!((report.l2_norm - 1.0).abs() < 1e-12);
        assert!((report.l2_closed_form - 1.0).abs() < 1e-15);
        assert!(report.l1_norm <= report.l2_norm);
        assert!((report.fourier_sup - 0.5).abs() < 1e-15);
        assert!(b.covariance_norms(2).is_err());
    }

    #[test]
    fn silent_noise_has_zero_norms() {
        let b = basis(NoiseSpec::uniform_shell(2, 1.0, 2).unwrap().silenced());
        let r = b.covariance_norms(32).unwrap();
        assert_eq!(r.l1_norm, 0.0);
        assert_eq!(r.l2_norm, 0.0);
        assert_eq!(r.fourier_sup, 0.0);
        assert_eq!(r.kappa_eff, 0.0);
    }

    #[test]
    fn scaling_family_properties() {
        let family = make_scaling_family(2, 1.0, &[1, 2, 4]).unwrap();
        assert_eq!(family[0].len(), 4);
        let mut last_l1 = f64::INFINITY;
        let k0 = basis(family[0].clone()).kappa_eff();
        for spec in family {
            let b = basis(spec);
            let r = b.covariance_norms(b.default_quadrature_level()).unwrap();
            assert!(r.l1_norm < last_l1);
            last_l1 = r.l1_norm;
            assert!((r.kappa_eff - k0).abs() < 1e-10);
        }
        assert!(make_scaling_family(2, 1.0, &[2, 2]).is_err());
        assert!(make_scaling_family(2, 1.0, &[0, 1]).is_err());
    }

    #[test]
    fn transport_of_constants_and_orthogonal_modes_vanishes() {
        let l = Lattice::new(2, 6).unwrap();
        let b = basis(NoiseSpec::uniform_shell(2, 1.0, 1).unwrap());
        let op = TransportOperator::new(&b, &l).unwrap();
        let c = SpectralField::constant(&l, 2.0);
        for ch in 0..op.num_channels() {
            assert!(op.apply_channel(ch, &c).unwrap().is_zero());
        }
        // k = (1,0) has frame (0,-1); a·j = 0 for j = (2,0)
        let u = SpectralField::cosine_mode(&l, &[2, 0], 1.0).unwrap();
        let idx = b
            .channels()
            .iter()
            .position(|ch| b.half_modes()[ch.half].k[..2] == [1, 0])
            .unwrap();
        assert!(op.apply_channel(idx, &u).unwrap().is_zero());
        let grad = c.gradient().unwrap();
        assert!(op.apply_channel(0, &grad).is_err());
    }

    #[test]
    fn transport_matches_physical_product() {
        let l = Lattice::new(2, 5).unwrap();
        let b = basis(NoiseSpec::uniform_shell(2, 1.0, 2).unwrap());
        let op = TransportOperator::new(&b, &l).unwrap();
        let u = random_interior_field(&l, 3.0, 11);
        let grad = u.gradient().unwrap();
        let g = 2 * l.radius() + 1 + 2 * 2 + 4;
        for ch in 0..b.channels().len() {
            // sample σ(x)·∇u(x) on a fine grid, transform, truncate
            let total = g * g;
            let values: Vec<f64> = (0..total)
                .map(|p| {
                    let x = [(p / g) as f64 / g as f64, (p % g) as f64 / g as f64];
                    let s = b.channel_field(ch, &x);
                    let gu = grad.evaluate(&x);
                    s[0] * gu[0] + s[1] * gu[1]
                })
                .collect();
            let oracle = SpectralField::from_grid_direct(&l, g, &values).unwrap();
            let got = op.apply_channel(ch, &u).unwrap();
            let err = got.sub(&oracle).unwrap().l2_norm();
            assert!(err < 1e-10 * (1.0 + oracle.l2_norm()), "channel {ch}: {err}");
            assert!(got.conjugate_symmetry_defect() < 1e-12);
        }
    }

    #[test]
    fn transport_is_skew() {
        let l = Lattice::new(2, 8).unwrap();
        let b = basis(NoiseSpec::uniform_shell(2, 1.0, 2).unwrap());
        let op = TransportOperator::new(&b, &l).unwrap();
        let u = random_interior_field(&l, 6.0, 3);
        for ch in 0..b.channels().len() {
            let tu = op.apply_channel(ch, &u).unwrap();
            let pairing = tu.inner(&u).unwrap();
            assert!(pairing.abs() < 1e-10 * tu.l2_norm() * u.l2_norm());
        }
    }

    #[test]
    fn combined_is_weighted_sum_of_channels() {
        let l = Lattice::new(3, 4).unwrap();
        let b = basis(NoiseSpec::uniform_shell(3, 0.4, 1).unwrap());
        let op = TransportOperator::new(&b, &l).unwrap();
        let u = random_interior_field(&l, 3.0, 5);
        let w: Vec<f64> = (0..op.num_channels()).map(|i| (i as f64 * 0.37).sin()).collect();
        let combined = op.apply_combined(&u, &w).unwrap();
        let mut manual = SpectralField::scalar_zeros(&l);
        for (ch, wi) in w.iter().enumerate() {
            manual.axpy(*wi, &op.apply_channel(ch, &u).unwrap()).unwrap();
        }
        assert!(combined.sub(&manual).unwrap().l2_norm() < 1e-12);
        assert!(op.apply_combined(&u, &w[1..]).is_err());
    }

    #[test]
    fn ito_correction_is_emergent_laplacian() {
        for (d, n, shell, radius) in [(2usize, 10usize, 2usize, 5.0), (3, 6, 1, 3.5)] {
            let l = Lattice::new(d, n).unwrap();
            let b = basis(NoiseSpec::uniform_shell(d, 0.8, shell).unwrap());
            let op = TransportOperator::new(&b, &l).unwrap();
            let u = random_interior_field(&l, radius, 21);
            let corr = op.ito_correction(&u).unwrap();
            let want = u.laplacian().scaled(b.kappa_eff());
            let err = corr.sub(&want).unwrap().l2_norm() / want.l2_norm();
            assert!(err < 1e-8, "relative error {err}");
            assert!(op.ito_correction(&SpectralField::constant(&l, 1.0)).unwrap().is_zero());
        }
        let l = Lattice::new(2, 6).unwrap();
        let b = basis(NoiseSpec::uniform_shell(2, 1.0, 2).unwrap());
        let op = TransportOperator::new(&b, &l).unwrap();
        let wide = SpectralField::cosine_mode(&l, &[4, 0], 1.0).unwrap();
        assert!(matches!(op.ito_correction(&wide), Err(Error::SupportTooWide { .. })));
    }

    #[test]
    fn quadratic_variation_identity() {
        let l = Lattice::new(2, 12).unwrap();
        let b = basis(NoiseSpec::uniform_shell(2, 1.3, 3).unwrap());
        let op = TransportOperator::new(&b, &l).unwrap();
        let u = random_interior_field(&l, 8.0, 17);
        let lhs = op.quadratic_variation(&u).unwrap();
        let rhs = 2.0 * b.kappa_eff() * u.gradient().unwrap().sobolev_norm_sq(0.0);
        assert!((lhs - rhs).abs() < 1e-8 * rhs);
        let full = random_interior_field(&l, 12.0, 17);
        let lhs = op.quadratic_variation(&full).unwrap();
        let rhs = 2.0 * b.kappa_eff() * full.gradient().unwrap().sobolev_norm_sq(0.0);
        assert!(lhs <= rhs);
    }

    #[test]
    fn channel_ids_are_distinct() {
        let b = basis(NoiseSpec::uniform_shell(3, 1.0, 3).unwrap());
        let mut ids = b.channel_ids();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), b.channels().len());
        // ids depend only on (k, i, trig), so nested shells share them
        let small = basis(NoiseSpec::uniform_shell(3, 1.0, 1).unwrap());
        for id in small.channel_ids() {
            assert!(b.channel_ids().contains(&id));
        }
    }

    #[test]
    fn spec_file_round_trip() {
        let json = r#"{"d":2,"kappa":0.5,"mode":"uniform-shell","N":2}"#;
        let file: NoiseSpecFile = serde_json::from_str(json).unwrap();
        let spec = NoiseSpec::from_file(&file).unwrap();
        assert_eq!(spec, NoiseSpec::uniform_shell(2, 0.5, 2).unwrap());
        let again = NoiseSpec::from_file(&spec.to_file()).unwrap();
        assert_eq!(again.len(), spec.len());
        for ((k1, t1), (k2, t2)) in again.support().zip(spec.support()) {
            assert_eq!(k1, k2);
            assert!((t1 - t2).abs() < 1e-15);
        }
    }
}
