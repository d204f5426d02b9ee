//! Synthetic opcode corpora drawn from per-family Markov chains.

use std::fmt::Write as _;
use std::path::Path;

use op2vec_core::corpus::{SyntheticFamilySpec, SyntheticGenerator};
use op2vec_core::rng::{derive_indexed, derive_seed, rng_from_seed};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::manifest::{Manifest, SampleEntry, SAMPLE_EXTENSION};

/// Mnemonics used as the preset's chain states.
pub const PRESET_SYMBOLS: [&str; 20] = [
    "mov", "push", "call", "pop", "cmp", "jz", "lea", "test", "jmp", "add", "jnz", "retn", "xor", "and", "sub",
    "inc", "dec", "or", "shl", "nop",
];

pub const PRESET_NAMES: [&str; 7] = ["adload", "bho", "ceeinject", "delfinject", "fakerean", "onlinegames", "renos"];

/// Parameters of the built-in corpus: seven families over the twenty preset
/// mnemonics. Each family has a main chain with its own symbol weights and
/// low-rank pairwise affinities, plus a minority variant derived from the
/// next family's main chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Preset {
    pub samples: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
    /// Standard deviation of the log symbol weights.
    pub weight_spread: f64,
    /// Scale of the rank-two part of the log affinities; the second factor
    /// gets half of it.
    pub affinity_strength: f64,
    /// Standard deviation of the unstructured part of the log affinities.
    pub affinity_noise: f64,
    /// Fraction of each family's samples drawn from its variant chain.
    pub variant_share: f64,
    /// Weight of fresh parameters in a variant; the rest is copied from the
    /// neighbouring family, so smaller values make the two harder to tell apart.
    pub variant_divergence: f64,
}

impl Default for Preset {
    fn default() -> Self {
        Self {
            samples: 200,
            min_len: 1000,
            max_len: 20_000,
            seed: 7,
            weight_spread: 1.0,
            affinity_strength: 1.4,
            affinity_noise: 0.3,
            variant_share: 0.2,
            variant_divergence: 0.4,
        }
    }
}

/// Log symbol weights and log pairwise affinities of one chain.
struct ChainParams {
    weights: Vec<f64>,
    affinity: Vec<Vec<f64>>,
}

impl ChainParams {
    fn draw(preset: &Preset, m: usize, rng: &mut op2vec_core::rng::Rng) -> Self {
        let mut normal = || -> f64 { rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng) };
        let weights = (0..m).map(|_| preset.weight_spread * normal()).collect();
        let a: Vec<f64> = (0..m).map(|_| normal()).collect();
        let b: Vec<f64> = (0..m).map(|_| normal()).collect();
        let s = preset.affinity_strength;
        let affinity = (0..m)
            .map(|i| {
                (0..m).map(|j| s * a[i] * a[j] + 0.5 * s * b[i] * b[j] + preset.affinity_noise * normal()).collect()
            })
            .collect();
        Self { weights, affinity }
    }

    fn blend(&self, fresh: &Self, d: f64) -> Self {
        let mix = |a: &f64, b: &f64| (1.0 - d) * a + d * b;
        Self {
            weights: self.weights.iter().zip(&fresh.weights).map(|(a, b)| mix(a, b)).collect(),
            affinity: self
                .affinity
                .iter()
                .zip(&fresh.affinity)
                .map(|(ra, rb)| ra.iter().zip(rb).map(|(a, b)| mix(a, b)).collect())
                .collect(),
        }
    }

    fn transitions(&self) -> Vec<Vec<f64>> {
        self.affinity
            .iter()
            .map(|row| {
                let raw: Vec<f64> = row.iter().zip(&self.weights).map(|(a, w)| (a + w).exp()).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / total).collect()
            })
            .collect()
    }
}

impl Preset {
    /// Two chain specs per family, main then variant, sharing the family name.
    pub fn families(&self) -> Vec<SyntheticFamilySpec> {
        let m = PRESET_SYMBOLS.len();
        let k = PRESET_NAMES.len();
        let mut rng = rng_from_seed(derive_seed(self.seed, "preset"));
        let main: Vec<ChainParams> = (0..k).map(|_| ChainParams::draw(self, m, &mut rng)).collect();
        let variants: Vec<ChainParams> = (0..k)
            .map(|f| main[(f + 1) % k].blend(&ChainParams::draw(self, m, &mut rng), self.variant_divergence))
            .collect();
        let variant_samples = (self.samples as f64 * self.variant_share).round() as usize;
        let family_seed = derive_seed(self.seed, "family");
        let spec = |f: usize, chain: &ChainParams, samples: usize, stream: u64| SyntheticFamilySpec {
            name: PRESET_NAMES[f].to_owned(),
            symbols: PRESET_SYMBOLS.iter().map(|s| (*s).to_owned()).collect(),
            initial: vec![1.0 / m as f64; m],
            transitions: chain.transitions(),
            samples,
            min_len: self.min_len,
            max_len: self.max_len,
            seed: derive_indexed(family_seed, stream),
        };
        (0..k)
            .flat_map(|f| {
                [
                    spec(f, &main[f], self.samples - variant_samples, 2 * f as u64),
                    spec(f, &variants[f], variant_samples, 2 * f as u64 + 1),
                ]
            })
            .filter(|s| s.samples > 0)
            .collect()
    }
}

/// Contents of a synthetic-corpus config file: a preset, explicit families, or both.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub families: Vec<SyntheticFamilySpec>,
}

impl SynthConfig {
    pub fn specs(&self) -> AppResult<Vec<SyntheticFamilySpec>> {
        let mut specs = self.preset.as_ref().map(Preset::families).unwrap_or_default();
        specs.extend(self.families.iter().cloned());
        if specs.is_empty() {
            return Err(AppError::Usage("synthetic config defines no families".into()));
        }
        for s in &specs {
            s.validate()?;
        }
        Ok(specs)
    }
}

/// Writes every sample as `<out>/<family>/<family>-<index>.opcodes` (one
/// mnemonic per line) plus `<out>/manifest.toml`, returning the manifest.
pub fn write_corpus(specs: &[SyntheticFamilySpec], out: &Path) -> AppResult<Manifest> {
    let families = family_names(specs);
    let mut manifest = Manifest { families: families.clone(), samples: Vec::new() };
    let mut index = vec![0usize; families.len()];
    let mut text = String::new();
    for (f, codes) in SyntheticGenerator::new(specs)? {
        let spec = &specs[f];
        let family = families.iter().position(|n| *n == spec.name).expect("names come from the specs");
        text.clear();
        for &c in &codes {
            let _ = writeln!(text, "{}", spec.symbols[c]);
        }
        let path = out.join(&spec.name).join(format!("{}-{:04}.{SAMPLE_EXTENSION}", spec.name, index[family]));
        index[family] += 1;
        crate::io::write_atomic(&path, text.as_bytes())?;
        manifest.samples.push(SampleEntry { family: spec.name.clone(), path });
    }
    manifest.save(&out.join("manifest.toml"))?;
    Ok(manifest)
}

/// Distinct family names in order of first appearance; specs sharing a name
/// are variants of one family.
pub fn family_names(specs: &[SyntheticFamilySpec]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for s in specs {
        if !names.contains(&s.name) {
            names.push(s.name.clone());
        }
    }
    names
}
