//! Run configuration files (TOML or JSON) and initial data.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::brownian::BrownianDriver;
use crate::dynamics::{uniform_save_times, GalerkinState, Integrator, Model, ModelSpec, Scheme};
use crate::error::{Error, Result};
use crate::noise::{NoiseBasis, NoiseSpec, NoiseSpecFile};
use crate::nonlinearity::Nonlinearity;
use crate::spectral::{FieldSnapshot, Lattice, SpectralField};

/// Initial displacement and velocity.
///
/// Text forms: `single-mode:j1,j2[,j3]` (optionally `...:amplitude`, default
/// 1) for `u = A cos(2πj·x)`, `random-h1:A` for a random smooth `u` with
/// `‖u‖_{H¹} = A`, and anything else is a path to a state snapshot. The
/// velocity starts at zero except for snapshot files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitSpec {
    SingleMode { j: Vec<i32>, amplitude: f64 },
    RandomH1 { amplitude: f64 },
    File(PathBuf),
}

impl InitSpec {
    pub fn single_mode(j: &[i32], amplitude: f64) -> InitSpec {
        InitSpec::SingleMode {
            j: j.to_vec(),
            amplitude,
        }
    }

    pub fn build(&self, lattice: &Arc<Lattice>, seed: u64) -> Result<GalerkinState> {
        match self {
            InitSpec::SingleMode { j, amplitude } => {
                if j.len() != lattice.dim() {
                    return Err(Error::Config(format!(
                        "initial mode {j:?} is not {}-dimensional",
                        lattice.dim()
                    )));
                }
                let u = SpectralField::cosine_mode(lattice, j, *amplitude)?;
                GalerkinState::new(0.0, u, SpectralField::scalar_zeros(lattice))
            }
            InitSpec::RandomH1 { amplitude } => {
                let u = random_h1_field(lattice, *amplitude, seed);
                GalerkinState::new(0.0, u, SpectralField::scalar_zeros(lattice))
            }
            InitSpec::File(path) => load_state(path)?.resample(lattice),
        }
    }
}

/// Random field with coefficients `∝ N(0,1)·(1+|j|²)^{-3/2}`, scaled to the
/// requested `H¹` norm.
pub fn random_h1_field(lattice: &Arc<Lattice>, amplitude: f64, seed: u64) -> SpectralField {
    // a fixed stream distinct from the noise streams
    let normals = BrownianDriver::new(seed, 1.0).expect("unit dt is valid");
    let stream = u64::MAX;
    let mut u = SpectralField::scalar_zeros(lattice);
    for idx in 0..lattice.len() {
        let j = lattice.mode(idx);
        // draws are keyed by the mode itself, so nested balls share coefficients
        let Some(&lead) = j.iter().find(|&&c| c != 0) else {
            continue;
        };
        if lead < 0 {
            continue;
        }
        let key = j.iter().fold(0u64, |acc, &c| (acc << 20) | (c + (1 << 19)) as u64);
        let decay = (1.0 + lattice.norm_sq(idx)).powf(-1.5);
        let re = normals.standard_normal(stream, 2 * key);
        let im = normals.standard_normal(stream, 2 * key + 1);
        u.set_pair(j, Complex64::new(re, im) * decay)
            .expect("mode is in the ball");
    }
    let norm = u.sobolev_norm(1.0);
    if norm > 0.0 {
        u.scale(amplitude / norm);
    }
    u
}

impl fmt::Display for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitSpec::SingleMode { j, amplitude } => {
                let js: Vec<String> = j.iter().map(|c| c.to_string()).collect();
                write!(f, "single-mode:{}:{amplitude}", js.join(","))
            }
            InitSpec::RandomH1 { amplitude } => write!(f, "random-h1:{amplitude}"),
            InitSpec::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl FromStr for InitSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<InitSpec> {
        let bad = || Error::Config(format!("cannot parse initial data {s:?}"));
        if let Some(rest) = s.strip_prefix("single-mode:") {
            let (modes, amp) = match rest.split_once(':') {
                Some((m, a)) => (m, a.trim().parse::<f64>().map_err(|_| bad())?),
                None => (rest, 1.0),
            };
            let j = modes
                .split(',')
                .map(|c| c.trim().parse::<i32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad())?;
            if !amp.is_finite() {
                return Err(bad());
            }
            Ok(InitSpec::SingleMode { j, amplitude: amp })
        } else if let Some(rest) = s.strip_prefix("random-h1:") {
            let amplitude: f64 = rest.trim().parse().map_err(|_| bad())?;
            if !(amplitude >= 0.0) || !amplitude.is_finite() {
                return Err(bad());
            }
            Ok(InitSpec::RandomH1 { amplitude })
        } else if s.is_empty() {
            Err(bad())
        } else {
            Ok(InitSpec::File(PathBuf::from(s)))
        }
    }
}

impl TryFrom<String> for InitSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<InitSpec> {
        s.parse()
    }
}

impl From<InitSpec> for String {
    fn from(i: InitSpec) -> String {
        i.to_string()
    }
}

/// `{t, u, v}` snapshot file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub t: f64,
    pub u: FieldSnapshot,
    pub v: FieldSnapshot,
}

impl StateSnapshot {
    pub fn from_state(state: &GalerkinState) -> StateSnapshot {
        StateSnapshot {
            t: state.t,
            u: state.u.to_snapshot(),
            v: state.v.to_snapshot(),
        }
    }

    pub fn to_state(&self) -> Result<GalerkinState> {
        GalerkinState::new(
            self.t,
            SpectralField::from_snapshot(&self.u)?,
            SpectralField::from_snapshot(&self.v)?,
        )
    }
}

pub fn save_state(path: &Path, state: &GalerkinState) -> Result<()> {
    crate::diagnostics::write_json(path, &StateSnapshot::from_state(state))
}

/// Reads a state snapshot, or a bare field snapshot taken as `u` with `v = 0`.
pub fn load_state(path: &Path) -> Result<GalerkinState> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum AnySnapshot {
        State(StateSnapshot),
        Field(FieldSnapshot),
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match serde_json::from_str::<AnySnapshot>(&text)? {
        AnySnapshot::State(s) => s.to_state(),
        AnySnapshot::Field(f) => {
            let u = SpectralField::from_snapshot(&f)?;
            let v = SpectralField::scalar_zeros(u.lattice());
            GalerkinState::new(0.0, u, v)
        }
    }
}

fn default_nonlinearity() -> Nonlinearity {
    Nonlinearity::Zero
}

fn default_save_count() -> usize {
    65
}

/// Reads any config type from JSON (`.json`) or TOML (anything else).
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// One simulation run.
///
/// For `SWE1`/`SWE2`, `kappa` is the nominal noise strength (a uniform unit
/// shell unless `noise` is given) and the damping of `SWE2` is the measured
/// `kappa_eff`. For `DAMPED_WAVE`, `kappa` is the damping coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: Model,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    pub d: usize,
    pub n: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "default_nonlinearity")]
    pub f: Nonlinearity,
    #[serde(default)]
    pub seed: u64,
    /// Explicit save times; when absent, `save_count` uniform times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save_times: Option<Vec<f64>>,
    #[serde(default = "default_save_count")]
    pub save_count: usize,
    pub init: InitSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpecFile>,
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<SimConfig> {
        load_config(path)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme.unwrap_or_else(|| Scheme::default_for(self.model))
    }

    pub fn lattice(&self) -> Result<Arc<Lattice>> {
        Lattice::new(self.d, self.n)
    }

    pub fn noise_basis(&self) -> Result<Option<Arc<NoiseBasis>>> {
        if !self.model.is_stochastic() {
            return Ok(None);
        }
        let spec = match &self.noise {
            Some(file) => {
                if file.d != self.d {
                    return Err(Error::Config(format!(
                        "noise is {}-dimensional but the run is {}-dimensional",
                        file.d, self.d
                    )));
                }
                NoiseSpec::from_file(file)?
            }
            None => NoiseSpec::uniform_shell(self.d, self.kappa, 1)?,
        };
        Ok(Some(Arc::new(NoiseBasis::new(spec)?)))
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let basis = self.noise_basis()?;
        match self.model {
            Model::Swe1 => ModelSpec::swe1(basis.expect("stochastic"), self.f),
            Model::Swe2 => ModelSpec::swe2(basis.expect("stochastic"), self.f),
            Model::Wave => Ok(ModelSpec::wave(self.f)),
            Model::DampedWave => ModelSpec::damped_wave(self.f, self.kappa),
        }
    }

    pub fn integrator(&self) -> Result<Integrator> {
        Integrator::new(self.model_spec()?, self.scheme(), self.dt, &self.lattice()?)
    }

    pub fn initial_state(&self) -> Result<GalerkinState> {
        self.init.build(&self.lattice()?, self.seed)
    }

    pub fn resolved_save_times(&self) -> Result<Vec<f64>> {
        match &self.save_times {
            Some(t) => Ok(t.clone()),
            None if self.t_final == 0.0 => Ok(vec![0.0]),
            None => uniform_save_times(self.t_final, self.dt, self.save_count),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOML: &str = r#"
model = "SWE2"
d = 2
n = 8
dt = 1e-3
T = 0.1
kappa = 0.5
f = "sin:1"
seed = 7
init = "single-mode:1,0:0.5"
"#;

    #[test]
    fn parses_toml_and_json() {
        let c: SimConfig = toml::from_str(TOML).unwrap();
        assert_eq!(c.model, Model::Swe2);
        assert_eq!(c.scheme(), Scheme::ExpEuler);
        assert_eq!(c.init, InitSpec::single_mode(&[1, 0], 0.5));
        assert_eq!(c.resolved_save_times().unwrap().len(), 65);
        let json = serde_json::to_string(&c).unwrap();
        let back: SimConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        let spec = c.model_spec().unwrap();
        assert!((spec.kappa - 0.25).abs() < 1e-12);
        assert!(toml::from_str::<SimConfig>(&format!("{TOML}\nbogus = 1")).is_err());
    }

    #[test]
    fn init_forms() {
        assert_eq!("single-mode:1,2".parse::<InitSpec>().unwrap(), InitSpec::single_mode(&[1, 2], 1.0));
        assert_eq!(
            "random-h1:0.3".parse::<InitSpec>().unwrap(),
            InitSpec::RandomH1 { amplitude: 0.3 }
        );
        assert!("single-mode:a,b".parse::<InitSpec>().is_err());
        assert!("random-h1:-1".parse::<InitSpec>().is_err());
        let l = Lattice::new(2, 6).unwrap();
        let s = InitSpec::RandomH1 { amplitude: 0.3 }.build(&l, 4).unwrap();
        assert!((s.u.sobolev_norm(1.0) - 0.3).abs() < 1e-12);
        assert_eq!(s, InitSpec::RandomH1 { amplitude: 0.3 }.build(&l, 4).unwrap());
        assert_ne!(s, InitSpec::RandomH1 { amplitude: 0.3 }.build(&l, 5).unwrap());
        assert!(InitSpec::single_mode(&[1, 0, 0], 1.0).build(&l, 0).is_err());
    }

    #[test]
    fn random_fields_nest_across_truncations() {
        let small = Lattice::new(2, 4).unwrap();
        let big = Lattice::new(2, 9).unwrap();
        let a = random_h1_field(&small, 1.0, 3);
        let b = random_h1_field(&big, 1.0, 3).resample(&small).unwrap();
        // equal up to the normalisation
        let ratio = a.l2_norm() / b.l2_norm();
        assert!(a.sub(&b.scaled(ratio)).unwrap().l2_norm() < 1e-12);
        assert!(a.conjugate_symmetry_defect() < 1e-15);
    }

    #[test]
    fn snapshot_files() {
        let dir = tempfile::tempdir().unwrap();
        let l = Lattice::new(2, 4).unwrap();
        let mut s = InitSpec::RandomH1 { amplitude: 1.0 }.build(&l, 1).unwrap();
        s.v = s.u.scaled(-2.0);
        s.t = 0.25;
        let path = dir.path().join("state.json");
        save_state(&path, &s).unwrap();
        assert_eq!(load_state(&path).unwrap(), s);
        let field_path = dir.path().join("u.json");
        s.u.save_json(&field_path).unwrap();
        let loaded = InitSpec::File(field_path).build(&Lattice::new(2, 6).unwrap(), 0).unwrap();
        assert_eq!(loaded.u.resample(&l).unwrap(), s.u);
        assert!(loaded.v.is_zero());
        assert!(load_state(&dir.path().join("missing.json")).is_err());
    }
}
