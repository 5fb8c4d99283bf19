use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use phasefield::geometry::{ManifoldSpec, TorusGrid, TrigScalar, TrigVector};
use phasefield::potential::PotentialSpec;
use phasefield::solver::MIN_SEPARATION;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Configs shipped with the binary, addressable by name.
pub const BUNDLED: &[(&str, &str)] = &[("t2-two-slabs", include_str!("../configs/t2-two-slabs.json"))];

fn schema() -> u32 {
    CONFIG_SCHEMA_VERSION
}

fn six() -> usize {
    6
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema")]
    pub schema_version: u32,
    pub name: String,
    pub manifold: ManifoldSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    /// strictly decreasing
    pub epsilons: Vec<f64>,
    pub seed: SeedSpec,
    #[serde(default)]
    pub battery: BatterySpec,
    #[serde(default)]
    pub mask: Option<MaskSpec>,
    #[serde(default = "six")]
    pub ell_max: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub hypotheses: Hypotheses,
    #[serde(default)]
    pub extension: ExtensionSpec,
    /// second manifold for the formula checks
    #[serde(default)]
    pub conformal_check: Option<ConformalCheck>,
    /// epsilon of the route-agreement runs; the middle of the sweep if unset
    #[serde(default)]
    pub variation_epsilon: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Slab seed: transitions at `positions` along `axis`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    #[serde(default)]
    pub axis: usize,
    pub positions: Vec<f64>,
    #[serde(default = "one")]
    pub first_sign: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomBattery {
    pub count: usize,
    pub kmax: i32,
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatterySpec {
    #[serde(default)]
    pub fields: Vec<TrigVector>,
    #[serde(default)]
    pub random: Option<RandomBattery>,
}

impl Default for BatterySpec {
    fn default() -> Self {
        BatterySpec {
            fields: vec![],
            random: Some(RandomBattery {
                count: 10,
                kmax: 2,
                amplitude: 0.2,
                seed: 1000,
            }),
        }
    }
}

impl BatterySpec {
    pub fn fields(&self, dim: usize) -> Vec<TrigVector> {
        let mut out = self.fields.clone();
        if let Some(r) = &self.random {
            out.extend((0..r.count as u64).map(|j| TrigVector::random(dim, r.kmax, r.amplitude, r.seed + j)));
        }
        out
    }
}

/// Coordinate box `lo ≤ x < hi`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub newton: f64,
    pub residual: f64,
    pub energy: f64,
    pub bilinear: f64,
    pub fd: f64,
    pub fd_step: f64,
    pub metric_order: f64,
    pub pairing: f64,
    pub defect: f64,
    pub semicontinuity: f64,
    pub weight_equivalence: f64,
    pub extension: f64,
    pub limit_variation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            newton: 1e-11,
            residual: 1e-10,
            energy: 0.03,
            bilinear: 1e-6,
            fd: 1e-4,
            fd_step: 0.01,
            metric_order: 1.9,
            pairing: 0.02,
            defect: 0.05,
            semicontinuity: 0.1,
            weight_equivalence: 1e-10,
            extension: 1e-3,
            limit_variation: 0.05,
        }
    }
}

/// Recorded bounds of the convergence hypothesis: `u` bounded by `c0`,
/// energies bounded by `e0`, Morse indices bounded by `p`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hypotheses {
    pub c0: f64,
    pub e0: Option<f64>,
    pub p: Option<usize>,
}

impl Default for Hypotheses {
    fn default() -> Self {
        Hypotheses { c0: 1.0, e0: None, p: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtensionSpec {
    pub delta: f64,
    pub inner: f64,
    pub outer: f64,
    /// amplitude `cos(2π k s / |Γ|)` along each component
    pub wavenumber: i32,
}

impl Default for ExtensionSpec {
    fn default() -> Self {
        ExtensionSpec {
            delta: 0.2,
            inner: 0.08,
            outer: 0.18,
            wavenumber: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConformalCheck {
    pub phi: TrigScalar,
    /// seed transitions for the conformal solution
    pub positions: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A file path, or the name of a bundled config.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            if let Some((_, text)) = BUNDLED.iter().find(|(n, _)| Path::new(n) == path) {
                return Self::from_json(text);
            }
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        Ok(TorusGrid::new(&self.manifold.lengths, &self.manifold.counts)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            bail!("unsupported config schema version {}", self.schema_version);
        }
        let grid = self.grid()?;
        let h = grid.max_spacing();
        if self.epsilons.is_empty() {
            bail!("at least one epsilon is required");
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            bail!("epsilons must be strictly decreasing");
        }
        for &e in &self.epsilons {
            if !(e >= 4.0 * h) {
                bail!("epsilon {e} is below 4 grid spacings ({})", 4.0 * h);
            }
        }
        if self.seed.axis >= grid.dim {
            bail!("seed axis {} out of range", self.seed.axis);
        }
        let l = grid.lengths[self.seed.axis];
        if self.seed.positions.iter().any(|&p| !(0.0..l).contains(&p)) {
            bail!("seed positions must lie in [0, {l})");
        }
        let emax = self.epsilons[0];
        let k = self.seed.positions.len();
        for j in 0..k {
            let next = if j + 1 < k { self.seed.positions[j + 1] } else { self.seed.positions[0] + l };
            if next - self.seed.positions[j] < MIN_SEPARATION * emax {
                bail!("seed transitions closer than {MIN_SEPARATION} epsilon");
            }
        }
        if !(1..=phasefield::spectrum::MAX_EIGENVALUES).contains(&self.ell_max) {
            bail!("ell_max must be between 1 and {}", phasefield::spectrum::MAX_EIGENVALUES);
        }
        if let Some(m) = &self.mask {
            if m.lo.len() != grid.dim || m.hi.len() != grid.dim || m.lo.iter().zip(&m.hi).any(|(a, b)| a >= b) {
                bail!("mask bounds must be per axis with lo < hi");
            }
        }
        if let Some(v) = self.variation_epsilon {
            if !self.epsilons.contains(&v) {
                bail!("variation_epsilon must be one of the epsilons");
            }
        }
        let x = &self.extension;
        if !(0.0 < x.inner && x.inner < x.outer && x.outer <= x.delta) {
            bail!("extension radii must satisfy 0 < inner < outer <= delta");
        }
        Ok(())
    }

    pub fn validate_battery(&self) -> Result<Vec<TrigVector>> {
        let fields = self.battery.fields(self.manifold.lengths.len());
        if fields.is_empty() {
            bail!("the vector-field battery is empty");
        }
        for f in &fields {
            f.check_dim(self.manifold.lengths.len())?;
        }
        Ok(fields)
    }

    pub fn variation_epsilon(&self) -> f64 {
        self.variation_epsilon.unwrap_or(self.epsilons[self.epsilons.len() / 2])
    }
}
