//! Seeded synthetic tabular data: independent columns from five univariate
//! families plus dependent columns composed from random subsets of them.

use rand_distr::{Beta, Distribution, Gumbel, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probdist::RngStream;
use crate::tensor::DenseTensor;

pub const NORMAL_MU: (f64, f64) = (-2.0, 2.0);
pub const NORMAL_SIGMA: (f64, f64) = (0.5, 2.0);
pub const UNIFORM_ENDPOINTS: (f64, f64) = (-3.0, 3.0);
pub const BETA_SHAPE: (f64, f64) = (0.5, 5.0);
pub const LOC_RANGE: (f64, f64) = (-2.0, 2.0);
pub const SCALE_RANGE: (f64, f64) = (0.5, 2.0);
pub const MIN_SOURCES: usize = 2;
pub const MAX_SOURCES: usize = 5;
/// Weights are drawn from `U(-1, 1)` and redrawn while `|w|` is below this.
pub const MIN_ABS_WEIGHT: f64 = 0.05;
/// Attempts at a non-degenerate column before giving up.
pub const MAX_COLUMN_ATTEMPTS: usize = 32;
const MIN_VARIANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n_points: usize,
    pub total_dim: usize,
    pub independent_dim: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    /// Half the columns independent (rounded up to at least one).
    pub fn new(n_points: usize, total_dim: usize, seed: u64) -> Result<Self> {
        let spec = Self {
            n_points,
            total_dim,
            independent_dim: (total_dim / 2).max(1),
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn desk(seed: u64) -> Self {
        Self::new(2000, 30, seed).expect("valid")
    }

    pub fn large_scale(seed: u64) -> Self {
        Self::new(50_000, 300, seed).expect("valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 1 {
            return Err(Error::InvalidArgument("n_points must be at least 1".into()));
        }
        if self.independent_dim < 1 || self.independent_dim > self.total_dim {
            return Err(Error::InvalidArgument(format!(
                "independent_dim {} outside [1, {}]",
                self.independent_dim, self.total_dim
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Normal { mu: f64, sigma: f64 },
    Uniform { low: f64, high: f64 },
    Beta { alpha: f64, beta: f64 },
    Logistic { loc: f64, scale: f64 },
    Gumbel { loc: f64, scale: f64 },
}

impl Family {
    /// A family chosen uniformly with parameters drawn from the documented ranges.
    pub fn random(rng: &mut RngStream) -> Self {
        let pick = rng.below(5);
        let mut draw = |(lo, hi): (f64, f64)| rng.uniform(lo, hi);
        match pick {
            0 => Family::Normal {
                mu: draw(NORMAL_MU),
                sigma: draw(NORMAL_SIGMA),
            },
            1 => {
                let (a, b) = (draw(UNIFORM_ENDPOINTS), draw(UNIFORM_ENDPOINTS));
                Family::Uniform {
                    low: a.min(b),
                    high: a.max(b),
                }
            }
            2 => Family::Beta {
                alpha: draw(BETA_SHAPE),
                beta: draw(BETA_SHAPE),
            },
            3 => Family::Logistic {
                loc: draw(LOC_RANGE),
                scale: draw(SCALE_RANGE),
            },
            _ => Family::Gumbel {
                loc: draw(LOC_RANGE),
                scale: draw(SCALE_RANGE),
            },
        }
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
        let bad = |e: &dyn std::fmt::Display| Error::InvalidArgument(format!("{self:?}: {e}"));
        Ok(match *self {
            Family::Normal { mu, sigma } => {
                let d = Normal::new(mu, sigma).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Family::Uniform { low, high } => {
                let d = Uniform::new_inclusive(low, high).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Family::Beta { alpha, beta } => {
                let d = Beta::new(alpha, beta).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Family::Logistic { loc, scale } => {
                if !(scale > 0.0) {
                    return Err(bad(&"scale must be positive"));
                }
                (0..n)
                    .map(|_| {
                        let u = rng.open01();
                        loc + scale * (u / (1.0 - u)).ln()
                    })
                    .collect()
            }
            Family::Gumbel { loc, scale } => {
                let d = Gumbel::new(loc, scale).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComposeOp {
    WeightedMultiplication,
    AffineAddition,
    Activation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependentRecipe {
    pub sources: Vec<usize>,
    pub op: ComposeOp,
    pub weights: Vec<f64>,
    pub offset: f64,
}

impl DependentRecipe {
    pub fn random(independent_dim: usize, rng: &mut RngStream) -> Self {
        let max = MAX_SOURCES.min(independent_dim);
        let min = MIN_SOURCES.min(max);
        let count = min + rng.below(max - min + 1);
        let mut pool: Vec<usize> = (0..independent_dim).collect();
        rng.shuffle(&mut pool);
        let mut sources = pool[..count].to_vec();
        sources.sort_unstable();
        let op = match rng.below(3) {
            0 => ComposeOp::WeightedMultiplication,
            1 => ComposeOp::AffineAddition,
            _ => ComposeOp::Activation,
        };
        let weights = (0..count)
            .map(|_| loop {
                let w = rng.uniform(-1.0, 1.0);
                if w.abs() >= MIN_ABS_WEIGHT {
                    break w;
                }
            })
            .collect();
        Self {
            sources,
            op,
            weights,
            offset: rng.uniform(-1.0, 1.0),
        }
    }

    fn apply(&self, row: &[f64]) -> f64 {
        let terms = self.sources.iter().zip(&self.weights);
        match self.op {
            ComposeOp::WeightedMultiplication => terms.map(|(&j, w)| w * row[j]).product(),
            ComposeOp::AffineAddition => self.offset + terms.map(|(&j, w)| w * row[j]).sum::<f64>(),
            ComposeOp::Activation => (self.offset + terms.map(|(&j, w)| w * row[j]).sum::<f64>()).tanh(),
        }
    }
}

/// Draws every independent column; returns the N×d_ind block and its families.
pub fn sample_independent(spec: &GeneratorSpec, rng: &mut RngStream) -> Result<(DenseTensor, Vec<Family>)> {
    spec.validate()?;
    let (n, k) = (spec.n_points, spec.independent_dim);
    let mut families = Vec::with_capacity(k);
    let mut columns = Vec::with_capacity(k);
    for j in 0..k {
        let mut attempt = 0;
        loop {
            let family = Family::random(rng);
            let col = family.sample(n, rng)?;
            if n == 1 || variance(&col) > MIN_VARIANCE {
                families.push(family);
                columns.push(col);
                break;
            }
            attempt += 1;
            log::warn!("independent column {j} degenerate, redrawing (attempt {attempt})");
            if attempt >= MAX_COLUMN_ATTEMPTS {
                return Err(Error::Dataset(format!("column {j} stayed degenerate")));
            }
        }
    }
    Ok((columns_to_matrix(n, &columns)?, families))
}

/// Evaluates each recipe on every row of `independents`.
pub fn compose_dependent(independents: &DenseTensor, recipes: &[DependentRecipe]) -> Result<DenseTensor> {
    let k = independents.cols();
    for (i, r) in recipes.iter().enumerate() {
        if r.sources.is_empty() || r.sources.len() != r.weights.len() {
            return Err(Error::InvalidArgument(format!("recipe {i}: sources and weights disagree")));
        }
        if let Some(&bad) = r.sources.iter().find(|&&j| j >= k) {
            return Err(Error::InvalidArgument(format!(
                "recipe {i} references column {bad} of {k}"
            )));
        }
    }
    let n = independents.rows();
    let mut data = Vec::with_capacity(n * recipes.len());
    for r in 0..n {
        let row = independents.row(r);
        data.extend(recipes.iter().map(|rec| rec.apply(row)));
    }
    DenseTensor::matrix(n, recipes.len(), data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: GeneratorSpec,
    pub independent: Vec<Family>,
    pub dependent: Vec<DependentRecipe>,
    /// Per-column statistics removed by standardization (population variance).
    pub scaling: Vec<ColumnScaling>,
    pub standardized: bool,
}

#[derive(Clone, Debug)]
pub struct GeneratedData {
    pub data: DenseTensor,
    /// Unstandardized independent block, kept for replay checks.
    pub raw_independent: DenseTensor,
    pub manifest: Manifest,
}

/// Generates, composes and standardizes a dataset. Same spec, same bits.
pub fn generate_dataset(spec: &GeneratorSpec) -> Result<GeneratedData> {
    spec.validate()?;
    let mut rng = RngStream::new(spec.seed);
    let (independent, families) = sample_independent(spec, &mut rng)?;
    let n_dep = spec.total_dim - spec.independent_dim;
    let mut recipes = Vec::with_capacity(n_dep);
    let mut dep_columns = Vec::with_capacity(n_dep);
    for j in 0..n_dep {
        let mut attempt = 0;
        loop {
            let recipe = DependentRecipe::random(spec.independent_dim, &mut rng);
            let col = compose_dependent(&independent, std::slice::from_ref(&recipe))?.into_data();
            if spec.n_points == 1 || variance(&col) > MIN_VARIANCE {
                recipes.push(recipe);
                dep_columns.push(col);
                break;
            }
            attempt += 1;
            log::warn!("dependent column {j} degenerate, fresh recipe (attempt {attempt})");
            if attempt >= MAX_COLUMN_ATTEMPTS {
                return Err(Error::Dataset(format!("dependent column {j} stayed degenerate")));
            }
        }
    }

    let n = spec.n_points;
    let mut columns: Vec<Vec<f64>> = (0..spec.independent_dim)
        .map(|j| (0..n).map(|r| independent.row(r)[j]).collect())
        .collect();
    columns.extend(dep_columns);
    let mut scaling = Vec::with_capacity(columns.len());
    for col in &mut columns {
        scaling.push(standardize(col));
    }
    Ok(GeneratedData {
        data: columns_to_matrix(n, &columns)?,
        raw_independent: independent,
        manifest: Manifest {
            spec: spec.clone(),
            independent: families,
            dependent: recipes,
            scaling,
            standardized: true,
        },
    })
}

fn mean(col: &[f64]) -> f64 {
    col.iter().sum::<f64>() / col.len() as f64
}

fn variance(col: &[f64]) -> f64 {
    let m = mean(col);
    col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / col.len() as f64
}

/// Centers and scales in place; a constant column is only centered.
fn standardize(col: &mut [f64]) -> ColumnScaling {
    let m = mean(col);
    let var = variance(col);
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    for v in col.iter_mut() {
        *v = (*v - m) / std;
    }
    // One more centering pass absorbs the rounding left by the first.
    let residual = mean(col);
    for v in col.iter_mut() {
        *v -= residual;
    }
    ColumnScaling { mean: m, std }
}

fn columns_to_matrix(n: usize, columns: &[Vec<f64>]) -> Result<DenseTensor> {
    let d = columns.len();
    let mut data = vec![0.0; n * d];
    for (j, col) in columns.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            data[r * d + j] = *v;
        }
    }
    DenseTensor::matrix(n, d, data)
}
