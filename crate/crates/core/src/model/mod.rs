//! The nonlinear elliptic system: operators, reactions, the parameter term,
//! hypothesis checks and the built-in problem catalog.

mod block;
mod catalog;
mod discretization;
mod field;
mod hypotheses;
mod reaction;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::mesh_fem::FemError;

pub use block::BlockTridiagonal;
pub use catalog::{builtin_problem, catalog_names, AlphaParam};
pub use discretization::{Discretization, Loads, CONE_FLOOR};
pub use field::FEField;
pub use hypotheses::{check_hypotheses, default_samples, HypothesisReport, HypothesisVerdict, T_LEVELS};
pub use reaction::{
    constant, Coefficient, CooperativeProduct, DegenerateProduct, Difference, PowerSource,
    Reaction, ScalarPower, SourceMultiple, Sum, ZeroReaction,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("invalid structural constants: {0}")]
    InvalidConstants(String),
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("bad parameters: {0}")]
    BadParameters(String),
    #[error("field shape {got_m}×{got_n} does not match {m}×{n}")]
    ShapeMismatch {
        m: usize,
        n: usize,
        got_m: usize,
        got_n: usize,
    },
    #[error("negative coefficient {value} at component {component}, node {node}")]
    NegativeCoefficient {
        component: usize,
        node: usize,
        value: f64,
    },
    #[error("coefficient {value} at component {component}, node {node} is below the cone floor")]
    NotInOpenCone {
        component: usize,
        node: usize,
        value: f64,
    },
    #[error("non-finite nonlinearity sample at x = {x}")]
    NonFinite { x: f64 },
    #[error("denominator {value} at direction {index} is not positive")]
    DegenerateDenominator { index: usize, value: f64 },
}

/// Exponents and the superlinearity constant of the system.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StructuralConstants {
    pub q: f64,
    pub gamma0: f64,
    pub gamma: f64,
    pub theta: f64,
}

/// Which list of structural hypotheses the checker applies.
#[derive(Debug, Clone, PartialEq)]
pub enum HypothesisClass {
    /// Growth `|t|^{γ0} + |t|^γ`, cooperativity, θ-superlinearity and
    /// degeneracy on the boundary of the cone.
    Standard,
    /// Per-component growth `t_k^{γ_k}(1 + |t|)^{γ-γ_k}` for reactions that
    /// do not vanish when a cross coordinate vanishes.
    PerComponent { gamma_k: Vec<f64> },
}

/// An `m`-component system `-(σ_k u_k')' + c_k u_k = f^k(x, u) + λ g^k(x, u)`
/// on `(0, 1)` with homogeneous Dirichlet data.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    /// Catalog parameters, kept so the problem can be rebuilt.
    pub params: serde_json::Value,
    pub sigma: Vec<Coefficient>,
    pub c: Vec<Coefficient>,
    pub reaction: Arc<dyn Reaction>,
    pub source: PowerSource,
    /// `(a_0, a_1)` bounds on the coefficients of `g`.
    pub a_bounds: (f64, f64),
    pub constants: StructuralConstants,
    pub class: HypothesisClass,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("m", &self.m())
            .field("reaction", &self.reaction.describe())
            .field("constants", &self.constants)
            .finish()
    }
}

impl ProblemSpec {
    /// A system with `σ_k ≡ 1`, `c_k ≡ 0`.
    pub fn new(
        name: impl Into<String>,
        reaction: Arc<dyn Reaction>,
        source: PowerSource,
        a_bounds: (f64, f64),
        constants: StructuralConstants,
        class: HypothesisClass,
    ) -> Result<Self, ModelError> {
        let m = reaction.components();
        if source.coeffs.len() != m {
            return Err(ModelError::BadParameters(format!(
                "parameter term has {} components, reaction has {m}",
                source.coeffs.len()
            )));
        }
        let spec = ProblemSpec {
            name: name.into(),
            params: serde_json::Value::Null,
            sigma: (0..m).map(|_| constant(1.0)).collect(),
            c: (0..m).map(|_| constant(0.0)).collect(),
            reaction,
            source,
            a_bounds,
            constants,
            class,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn m(&self) -> usize {
        self.reaction.components()
    }

    pub fn q(&self) -> f64 {
        self.constants.q
    }

    /// `f ≡ 0`, `g(t) = a t`: the linear eigenvalue problem, allowed only as a
    /// diagnostic.
    pub fn is_linear_diagnostic(&self) -> bool {
        self.constants.q == 1.0 && self.reaction.is_zero()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let StructuralConstants {
            q,
            gamma0,
            gamma,
            theta,
        } = self.constants;
        let (a0, a1) = self.a_bounds;
        if !(a0 > 0.0 && a0 <= a1) {
            return Err(ModelError::InvalidConstants(format!(
                "need 0 < a_0 <= a_1, got ({a0}, {a1})"
            )));
        }
        if self.sigma.len() != self.m() || self.c.len() != self.m() {
            return Err(ModelError::BadParameters("operator coefficient count".into()));
        }
        if self.is_linear_diagnostic() {
            return Ok(());
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(ModelError::InvalidConstants(format!("q = {q} outside (0, 1)")));
        }
        if !(1.0 < theta && theta < gamma0 && gamma0 <= gamma) {
            return Err(ModelError::InvalidConstants(format!(
                "need 1 < theta < gamma0 <= gamma, got theta = {theta}, gamma0 = {gamma0}, gamma = {gamma}"
            )));
        }
        Ok(())
    }

    pub fn with_operator(mut self, k: usize, sigma: Coefficient, c: Coefficient) -> Self {
        self.sigma[k] = sigma;
        self.c[k] = c;
        self
    }

    /// The same system with the reaction replaced (operator and `g` kept).
    pub fn with_reaction(&self, name: impl Into<String>, reaction: Arc<dyn Reaction>) -> Self {
        let mut s = self.clone();
        s.name = name.into();
        s.reaction = reaction;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_validated() {
        let r: Arc<dyn Reaction> = Arc::new(ScalarPower::new(2.0));
        let good = StructuralConstants {
            q: 0.5,
            gamma0: 2.0,
            gamma: 2.0,
            theta: 1.5,
        };
        let class = HypothesisClass::Standard;
        let g = || PowerSource::uniform(1, 0.5);
        assert!(ProblemSpec::new("s", r.clone(), g(), (1.0, 1.0), good, class.clone()).is_ok());
        let bad_theta = StructuralConstants { theta: 2.0, ..good };
        assert!(ProblemSpec::new("s", r.clone(), g(), (1.0, 1.0), bad_theta, class.clone()).is_err());
        let bad_q = StructuralConstants { q: 1.2, ..good };
        assert!(ProblemSpec::new("s", r, g(), (1.0, 1.0), bad_q, class.clone()).is_err());
        let lin = ProblemSpec::new(
            "lin",
            Arc::new(ZeroReaction { m: 1 }),
            PowerSource::uniform(1, 1.0),
            (1.0, 1.0),
            StructuralConstants { q: 1.0, ..good },
            class,
        )
        .unwrap();
        assert!(lin.is_linear_diagnostic());
    }
}
