use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::lhs::latin_hypercube;
use super::Dataset;
use crate::error::{Result, SageError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// One parameter, `y = sin(πx) + sin(2πx) + 0.5 sin(16πx)` sampled uniformly.
    AppendixA,
    /// Chained outputs and their scores: `y1 ~ Σx`, `y2 ~ 2·y1`, `y3 ~ x0`.
    AppendixE,
    /// Two active singles plus one planted multiplicative pair.
    AdditiveInteraction,
    /// Targets independent of every parameter.
    NoiseOnly,
    /// One strong single and a few weak ones.
    DominantSingle,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::AppendixA,
        Scenario::AppendixE,
        Scenario::AdditiveInteraction,
        Scenario::NoiseOnly,
        Scenario::DominantSingle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::AppendixA => "appendix_a",
            Scenario::AppendixE => "appendix_e",
            Scenario::AdditiveInteraction => "additive_interaction",
            Scenario::NoiseOnly => "noise_only",
            Scenario::DominantSingle => "dominant_single",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = SageError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == norm)
            .ok_or_else(|| SageError::input(format!("unknown scenario '{s}'")))
    }
}

/// Noise standard deviations of the chained-output scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppendixENoise {
    pub y1: f64,
    /// Large relative to the `y1` signal, so the `y2` score is hard to read off `x`.
    pub y2: f64,
    /// Small, so the `y3` score stays easy.
    pub y3: f64,
}

impl Default for AppendixENoise {
    fn default() -> Self {
        AppendixENoise {
            y1: 0.05,
            y2: 0.2,
            y3: 0.02,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Overrides the scenario's default noise standard deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
    #[serde(default)]
    pub appendix_e: AppendixENoise,
}

/// Ground truth that accompanies a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub scenario: Scenario,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub parameter_names: Vec<String>,
    pub target_names: Vec<String>,
    pub formula: String,
    pub active_singles: Vec<usize>,
    pub active_pairs: Vec<[usize; 2]>,
    pub noise_sd: f64,
    /// R² an exact predictor of the noise-free signal attains on these rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_r2: Option<f64>,
    /// Held-out R² a working emulator is expected to reach.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2_threshold: Option<f64>,
}

pub fn synth_generate(scenario: Scenario, n: usize, d: usize, seed: u64) -> Result<(Dataset, SynthManifest)> {
    synth_generate_with(scenario, n, d, seed, &SynthOptions::default())
}

fn names(prefix: &str, d: usize) -> Vec<String> {
    (0..d).map(|i| format!("{prefix}{i}")).collect()
}

fn noise(sd: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sd).map_err(|e| SageError::input(format!("invalid noise scale {sd}: {e}")))
}

fn population_var(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
}

/// R² of the noise-free signal as a predictor of the noisy target.
fn oracle_r2(signal: &[f64], y: &[f64]) -> f64 {
    let ss_res: f64 = signal.iter().zip(y).map(|(s, v)| (v - s).powi(2)).sum();
    1.0 - ss_res / (population_var(y) * y.len() as f64)
}

/// `appendix_a` curve without the high-frequency term.
pub(crate) fn appendix_a_signal(x: f64) -> f64 {
    (PI * x).sin() + (2.0 * PI * x).sin()
}

fn appendix_a_full(x: f64) -> f64 {
    appendix_a_signal(x) + 0.5 * (16.0 * PI * x).sin()
}

pub fn synth_generate_with(
    scenario: Scenario,
    n: usize,
    d: usize,
    seed: u64,
    opts: &SynthOptions,
) -> Result<(Dataset, SynthManifest)> {
    if n == 0 {
        return Err(SageError::input("synthetic datasets need at least one row"));
    }
    if d == 0 {
        return Err(SageError::input("synthetic datasets need at least one parameter"));
    }
    if let Some(sd) = opts.noise_sd {
        if !(sd.is_finite() && sd >= 0.0) {
            return Err(SageError::input(format!("noise_sd must be nonnegative, got {sd}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pnames = names("x", d);
    let mut manifest = SynthManifest {
        scenario,
        n,
        d,
        seed,
        parameter_names: pnames.clone(),
        target_names: Vec::new(),
        formula: String::new(),
        active_singles: Vec::new(),
        active_pairs: Vec::new(),
        noise_sd: 0.0,
        oracle_r2: None,
        r2_threshold: None,
    };

    let (x, tnames, targets) = match scenario {
        Scenario::AppendixA => {
            if d != 1 {
                return Err(SageError::input(format!("appendix_a has exactly one parameter, got d = {d}")));
            }
            let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = xs.iter().map(|&v| appendix_a_full(v)).collect();
            let s: Vec<f64> = xs.iter().map(|&v| appendix_a_signal(v)).collect();
            manifest.formula = "y = sin(pi x0) + sin(2 pi x0) + 0.5 sin(16 pi x0); signal omits the last term".into();
            manifest.active_singles = vec![0];
            (
                DMatrix::from_vec(n, 1, xs),
                vec!["y".to_string(), "signal".to_string()],
                vec![y, s],
            )
        }
        Scenario::AdditiveInteraction => {
            if d < 4 {
                return Err(SageError::input(format!("additive_interaction needs d >= 4, got {d}")));
            }
            let sd = opts.noise_sd.unwrap_or(0.1);
            let x = latin_hypercube(n, d, &mut rng);
            let eps = noise(sd)?;
            let signal: Vec<f64> = (0..n)
                .map(|i| {
                    2.0 * (PI * x[(i, 0)]).sin() + x[(i, 1)].powi(2) + 4.0 * (x[(i, 2)] - 0.5) * (x[(i, 3)] - 0.5)
                })
                .collect();
            let y: Vec<f64> = signal.iter().map(|s| s + eps.sample(&mut rng)).collect();
            manifest.formula = "y = 2 sin(pi x0) + x1^2 + 4 (x2 - 1/2)(x3 - 1/2) + N(0, sd^2)".into();
            manifest.active_singles = vec![0, 1];
            manifest.active_pairs = vec![[2, 3]];
            manifest.noise_sd = sd;
            manifest.oracle_r2 = Some(oracle_r2(&signal, &y));
            manifest.r2_threshold = Some(0.8);
            (x, vec!["y".to_string()], vec![y])
        }
        Scenario::NoiseOnly => {
            let sd = opts.noise_sd.unwrap_or(1.0);
            let x = latin_hypercube(n, d, &mut rng);
            let eps = noise(sd)?;
            let y: Vec<f64> = (0..n).map(|_| eps.sample(&mut rng)).collect();
            manifest.formula = "y = N(0, sd^2)".into();
            manifest.noise_sd = sd;
            (x, vec!["y".to_string()], vec![y])
        }
        Scenario::DominantSingle => {
            let sd = opts.noise_sd.unwrap_or(0.2);
            let x = latin_hypercube(n, d, &mut rng);
            let eps = noise(sd)?;
            let weak = d.min(7);
            let signal: Vec<f64> = (0..n)
                .map(|i| 2.0 * (PI * x[(i, 0)]).cos() + (1..weak).map(|j| 0.2 * (PI * x[(i, j)]).cos()).sum::<f64>())
                .collect();
            let y: Vec<f64> = signal.iter().map(|s| s + eps.sample(&mut rng)).collect();
            manifest.formula = "y = 2 cos(pi x0) + sum_{j=1}^{min(d,7)-1} 0.2 cos(pi xj) + N(0, sd^2)".into();
            manifest.active_singles = (0..weak).collect();
            manifest.noise_sd = sd;
            manifest.oracle_r2 = Some(oracle_r2(&signal, &y));
            (x, vec!["y".to_string()], vec![y])
        }
        Scenario::AppendixE => {
            let nz = opts.appendix_e;
            let x = latin_hypercube(n, d, &mut rng);
            let (e1, e2, e3) = (noise(nz.y1)?, noise(nz.y2)?, noise(nz.y3)?);
            let obs2 = d as f64;
            let mut cols = vec![Vec::with_capacity(n); 5];
            for i in 0..n {
                let y1 = (0..d).map(|j| x[(i, j)]).sum::<f64>() + e1.sample(&mut rng);
                let y2 = 2.0 * y1 + e2.sample(&mut rng);
                let y3 = x[(i, 0)] + e3.sample(&mut rng);
                cols[0].push(y1);
                cols[1].push(y2);
                cols[2].push((y2 - obs2).powi(2));
                cols[3].push(y3);
                cols[4].push((y3 - 0.5).powi(2));
            }
            manifest.formula = "y1 = sum_j xj + e1; y2 = 2 y1 + e2; y2_score = (y2 - d)^2; \
                                y3 = x0 + e3; y3_score = (y3 - 0.5)^2"
                .into();
            manifest.active_singles = (0..d).collect();
            manifest.noise_sd = nz.y2;
            (
                x,
                ["y1", "y2", "y2_score", "y3", "y3_score"].map(String::from).to_vec(),
                cols,
            )
        }
    };

    manifest.target_names = tnames.clone();
    let t = DMatrix::from_fn(n, targets.len(), |i, j| targets[j][i]);
    let ds = Dataset::new(pnames, tnames, x, t, None, None)?;
    Ok((ds, manifest))
}
