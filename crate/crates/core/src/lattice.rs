//! The four stationary beta-gamma models and their random environments.
//!
//! | model | f¹               | f²                   | (a₁, a₂, a₃)   | bulk (Y¹, Y²) |
//! |-------|------------------|----------------------|----------------|---------------|
//! | IG    | e^{-β/x}         | e^{-β/x}             | (θ-μ, -θ, -μ)  | (X, X)        |
//! | G     | e^{-βx}          | (1-1/x)^{μ-1}        | (μ+θ, -θ, μ)   | (X, 1)        |
//! | B     | (1-x)^{β-1}      | (1-1/x)^{μ-1}        | (μ+θ, -θ, μ)   | (X, 1-X)      |
//! | IB    | (1-1/x)^{β-1}    | (x/(1+x))^{β+μ}      | (θ-μ, -θ, -μ)  | (X, X-1)      |
//!
//! South weights R¹ ~ m_{f¹}(a₁), west weights R² ~ m_{f²}(a₂), bulk X ~ m_{f¹}(a₃).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coupling::CoupledSampler;
use crate::error::{Error, Result};
use crate::mellin::{softplus, KernelKind, MellinFamily};
use crate::rng::{open_uniform, stream, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    IG,
    G,
    B,
    IB,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::IG, ModelKind::G, ModelKind::B, ModelKind::IB];

    /// Mid-domain defaults (μ, θ).
    pub fn default_params(self) -> (f64, f64) {
        match self {
            ModelKind::IG | ModelKind::IB => (2.0, 1.0),
            ModelKind::G | ModelKind::B => (1.0, 0.5),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::IG => "ig",
            ModelKind::G => "g",
            ModelKind::B => "b",
            ModelKind::IB => "ib",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ig" => Ok(ModelKind::IG),
            "g" => Ok(ModelKind::G),
            "b" => Ok(ModelKind::B),
            "ib" => Ok(ModelKind::IB),
            _ => Err(Error::Validation(format!(
                "unknown model '{s}' (expected ig, g, b or ib)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub mu: f64,
    pub theta: f64,
    pub beta: f64,
    pub f1: MellinFamily,
    pub f2: MellinFamily,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

pub fn make_model(kind: ModelKind, mu: f64, theta: f64, beta: f64) -> Result<ModelSpec> {
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "{kind} model requires {name} > 0, got {v}"
            )))
        }
    };
    positive("mu", mu)?;
    positive("theta", theta)?;
    positive("beta", beta)?;
    if matches!(kind, ModelKind::IG | ModelKind::IB) && theta >= mu {
        return Err(Error::Validation(format!(
            "{kind} model requires mu > theta > 0, got mu={mu}, theta={theta}"
        )));
    }
    let (f1, f2, a1) = match kind {
        ModelKind::IG => (
            MellinFamily::new(KernelKind::ExpDecayInv, beta)?,
            MellinFamily::new(KernelKind::ExpDecayInv, beta)?,
            theta - mu,
        ),
        ModelKind::G => (
            MellinFamily::new(KernelKind::ExpDecay, beta)?,
            MellinFamily::new(KernelKind::BetaInvKernel, mu)?,
            mu + theta,
        ),
        ModelKind::B => (
            MellinFamily::new(KernelKind::BetaKernel, beta)?,
            MellinFamily::new(KernelKind::BetaInvKernel, mu)?,
            mu + theta,
        ),
        ModelKind::IB => (
            MellinFamily::new(KernelKind::BetaInvKernel, beta)?,
            MellinFamily::new(KernelKind::BetaPrimeKernel, beta + mu)?,
            theta - mu,
        ),
    };
    let a2 = -theta;
    // a₃ = ±μ up to one rounding; taking the sum keeps a₁ + a₂ = a₃ exact
    let a3 = a1 + a2;
    f1.check_domain(a1)?;
    f2.check_domain(a2)?;
    f1.check_domain(a3)?;
    Ok(ModelSpec {
        kind,
        mu,
        theta,
        beta,
        f1,
        f2,
        a1,
        a2,
        a3,
    })
}

impl ModelSpec {
    pub fn with_defaults(kind: ModelKind) -> Self {
        let (mu, theta) = kind.default_params();
        make_model(kind, mu, theta, 1.0).expect("default parameters are valid")
    }
}

/// (m, n) = round(N ψ₁^{f²}(a₂) + γ N^{2/3}, N ψ₁^{f¹}(a₁) + γ N^{2/3}), each at least 1.
pub fn characteristic_shape(spec: &ModelSpec, big_n: usize, gamma_offset: f64) -> (usize, usize) {
    let nn = big_n as f64;
    let shift = gamma_offset * nn.powf(2.0 / 3.0);
    let var2 = spec
        .f2
        .psi(1, spec.a2)
        .expect("a2 lies in the domain of f2");
    let var1 = spec
        .f1
        .psi(1, spec.a1)
        .expect("a1 lies in the domain of f1");
    let m = (nn * var2 + shift).round().max(1.0) as usize;
    let n = (nn * var1 + shift).round().max(1.0) as usize;
    (m, n)
}

/// Log-weights of one environment on the (m, n) box.
///
/// `south[i-1]` = ln R¹_{i,0}, `west[j-1]` = ln R²_{0,j}, and the bulk arrays are
/// row-major in i: `bulk1[(i-1) n + (j-1)]` = ln Y¹_{(i,j)}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub model: ModelSpec,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub replica: u64,
    pub south: Vec<f64>,
    pub west: Vec<f64>,
    pub bulk1: Vec<f64>,
    pub bulk2: Vec<f64>,
    pub south_uniforms: Vec<f64>,
}

impl Environment {
    #[inline]
    pub fn bulk_index(&self, i: usize, j: usize) -> usize {
        (i - 1) * self.n + (j - 1)
    }

    /// ln Y¹ at bulk site (i, j), 1 ≤ i ≤ m, 1 ≤ j ≤ n.
    #[inline]
    pub fn y1(&self, i: usize, j: usize) -> f64 {
        self.bulk1[self.bulk_index(i, j)]
    }

    #[inline]
    pub fn y2(&self, i: usize, j: usize) -> f64 {
        self.bulk2[self.bulk_index(i, j)]
    }

    /// ln of the weight of the horizontal edge entering (i, j), i ≥ 1.
    #[inline]
    pub fn horizontal(&self, i: usize, j: usize) -> f64 {
        if j == 0 {
            self.south[i - 1]
        } else {
            self.y1(i, j)
        }
    }

    /// ln of the weight of the vertical edge entering (i, j), j ≥ 1.
    #[inline]
    pub fn vertical(&self, i: usize, j: usize) -> f64 {
        if i == 0 {
            self.west[j - 1]
        } else {
            self.y2(i, j)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cells = self.m * self.n;
        if self.south.len() != self.m
            || self.west.len() != self.n
            || self.bulk1.len() != cells
            || self.bulk2.len() != cells
        {
            return Err(Error::Validation(format!(
                "environment arrays do not match extents ({}, {})",
                self.m, self.n
            )));
        }
        if self.south_uniforms.len() > self.m {
            return Err(Error::Validation(
                "more retained uniforms than south edges".into(),
            ));
        }
        let all = self
            .south
            .iter()
            .chain(&self.west)
            .chain(&self.bulk1)
            .chain(&self.bulk2);
        if let Some(v) = all.into_iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite log-weight {v}")));
        }
        if self.south_uniforms.iter().any(|&u| !(u > 0.0 && u < 1.0)) {
            return Err(Error::Validation(
                "retained uniforms must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Environment = serde_json::from_str(text)?;
        env.validate()?;
        Ok(env)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Environment::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Samplers for the three laws of a model, built once and reused.
#[derive(Debug, Clone)]
pub struct EnvironmentSampler {
    spec: ModelSpec,
    south: CoupledSampler,
    west: CoupledSampler,
    bulk: CoupledSampler,
    r_max: Option<usize>,
}

impl EnvironmentSampler {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        Ok(EnvironmentSampler {
            spec: *spec,
            south: CoupledSampler::new(spec.f1, spec.a1)?,
            west: CoupledSampler::new(spec.f2, spec.a2)?,
            bulk: CoupledSampler::new(spec.f1, spec.a3)?,
            r_max: None,
        })
    }

    /// Keep at most `r_max` south uniforms (default: all m).
    pub fn with_r_max(mut self, r_max: usize) -> Self {
        self.r_max = Some(r_max);
        self
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn south_sampler(&self) -> &CoupledSampler {
        &self.south
    }

    pub fn west_sampler(&self) -> &CoupledSampler {
        &self.west
    }

    pub fn bulk_sampler(&self) -> &CoupledSampler {
        &self.bulk
    }

    pub fn sample(&self, m: usize, n: usize, seed: u64, replica: u64) -> Result<Environment> {
        let mut rng = stream(seed, replica, Role::South);
        let eta: Vec<f64> = (0..m).map(|_| open_uniform(&mut rng)).collect();
        let south = eta
            .iter()
            .map(|&u| self.south.log_quantile(u))
            .collect::<Result<Vec<_>>>()?;
        let mut rng = stream(seed, replica, Role::West);
        let west = (0..n)
            .map(|_| self.west.log_quantile(open_uniform(&mut rng)))
            .collect::<Result<Vec<_>>>()?;

        let mut rng = stream(seed, replica, Role::Bulk);
        let f1 = self.spec.f1;
        let mut bulk1 = Vec::with_capacity(m * n);
        let mut bulk2 = Vec::with_capacity(m * n);
        for _ in 0..m * n {
            let z = self.bulk.quantile_z_fast(open_uniform(&mut rng));
            let ly1 = f1.log_x(z);
            let ly2 = match self.spec.kind {
                ModelKind::IG => ly1,
                ModelKind::G => 0.0,
                // logit coordinate: ln(1 - x) = -softplus(z)
                ModelKind::B => -softplus(z),
                // z = ln(x - 1)
                ModelKind::IB => z,
            };
            bulk1.push(ly1);
            bulk2.push(ly2);
        }
        let keep = self.r_max.unwrap_or(m).min(m);
        let mut south_uniforms = eta;
        south_uniforms.truncate(keep);
        Ok(Environment {
            model: self.spec,
            m,
            n,
            seed,
            replica,
            south,
            west,
            bulk1,
            bulk2,
            south_uniforms,
        })
    }
}

pub fn sample_environment(spec: &ModelSpec, m: usize, n: usize, seed: u64) -> Result<Environment> {
    EnvironmentSampler::new(spec)?.sample(m, n, seed, 0)
}

/// Replaces ln R¹_{i,0}, i ≤ r, by ln H^{f¹}(a₁', η_i).
pub fn perturb_boundary(
    env: &Environment,
    spec: &ModelSpec,
    a1_prime: f64,
    r: usize,
) -> Result<Environment> {
    let sampler = CoupledSampler::new(spec.f1, a1_prime)?;
    perturb_boundary_with(env, &sampler, r)
}

/// [`perturb_boundary`] with a prebuilt sampler for m_{f¹}(a₁').
pub fn perturb_boundary_with(
    env: &Environment,
    sampler: &CoupledSampler,
    r: usize,
) -> Result<Environment> {
    if r > env.south_uniforms.len() {
        return Err(Error::State(format!(
            "cannot re-couple {r} south edges: only {} uniforms retained",
            env.south_uniforms.len()
        )));
    }
    let mut out = env.clone();
    for (i, &u) in env.south_uniforms.iter().take(r).enumerate() {
        out.south[i] = sampler.log_quantile(u)?;
    }
    Ok(out)
}
