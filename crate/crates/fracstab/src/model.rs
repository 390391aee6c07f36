//! System specification and the closed-loop transformation.
//!
//! A spec describes an implicit system (I - K) x' = A x + kernel(t) * g(t, x,
//! c1, c2), where c1/c2 are Caputo-derivative estimates of orders alpha1 and
//! alpha2 fed back through g's d-variables. Closing the loop inverts I - K
//! once; everything downstream evaluates the explicit right-hand side.
//!
//! Specs are immutable after load, so a ClosedLoopSystem can be shared freely
//! across concurrent simulations.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Expr, ExprError, VarEnv};
use crate::fracderiv::{caputo_power_rule, CaputoOrder};
use crate::matrix::{self, Mat, MatrixError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("spec document rejected: {detail}")]
    Schema { detail: String },
    #[error("field {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("field {field}: expected {expected} entries, got {got}")]
    Dimension { field: String, expected: usize, got: usize },
    #[error("field {field}: {source}")]
    BadExpr { field: String, source: ExprError },
    #[error("field {field} references unknown variable `{name}`")]
    UnknownVariable { field: String, name: String },
    #[error("I - K is singular; the implicit loop cannot be made explicit")]
    SingularLoop(#[source] MatrixError),
    #[error("delay kernel evaluation failed: {0}")]
    KernelEval(#[source] ExprError),
    #[error("g component {index} evaluation failed: {source}")]
    ComponentEval { index: usize, source: ExprError },
}

/// Simulation defaults carried by the spec document; the integrator may
/// override them per run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub t_end: f64,
    pub dt: f64,
    pub divergence_cap: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    n: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "feedback_K")]
    feedback_k: Option<Vec<Vec<f64>>>,
    alpha1: f64,
    alpha2: f64,
    delay_kernel: String,
    g: Vec<String>,
    x0: Vec<f64>,
    label: String,
    sim: SimBlock,
}

/// Validated system description. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    n: usize,
    a: Mat,
    feedback_k: Option<Mat>,
    alpha1: CaputoOrder,
    alpha2: CaputoOrder,
    delay_kernel: Expr,
    g: Vec<Expr>,
    x0: Vec<f64>,
    label: String,
    sim: SimBlock,
}

impl SystemSpec {
    #[allow(clippy::too_many_arguments)] // validated constructor mirrors the document schema
    pub fn new(
        n: usize,
        a: Mat,
        feedback_k: Option<Mat>,
        alpha1: CaputoOrder,
        alpha2: CaputoOrder,
        delay_kernel: Expr,
        g: Vec<Expr>,
        x0: Vec<f64>,
        label: String,
        sim: SimBlock,
    ) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::Invalid {
                field: "n".into(),
                reason: "dimension must be at least 1".into(),
            });
        }
        if a.dim() != n {
            return Err(ModelError::Dimension {
                field: "A".into(),
                expected: n,
                got: a.dim(),
            });
        }
        if let Some(k) = &feedback_k {
            if k.dim() != n {
                return Err(ModelError::Dimension {
                    field: "feedback_K".into(),
                    expected: n,
                    got: k.dim(),
                });
            }
        }
        if g.len() != n {
            return Err(ModelError::Dimension {
                field: "g".into(),
                expected: n,
                got: g.len(),
            });
        }
        if x0.len() != n {
            return Err(ModelError::Dimension {
                field: "x0".into(),
                expected: n,
                got: x0.len(),
            });
        }
        if let Some(i) = x0.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::Invalid {
                field: format!("x0[{i}]"),
                reason: "entry is not finite".into(),
            });
        }
        check_vars(&delay_kernel, "delay_kernel", &["t".to_string()].into_iter().collect())?;
        let allowed = allowed_state_vars(n);
        for (i, gi) in g.iter().enumerate() {
            check_vars(gi, &format!("g[{i}]"), &allowed)?;
        }
        for (name, value) in [
            ("sim.t_end", sim.t_end),
            ("sim.dt", sim.dt),
            ("sim.divergence_cap", sim.divergence_cap),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::Invalid {
                    field: name.into(),
                    reason: format!("must be positive and finite, got {value}"),
                });
            }
        }
        Ok(SystemSpec {
            n,
            a,
            feedback_k,
            alpha1,
            alpha2,
            delay_kernel,
            g,
            x0,
            label,
            sim,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn feedback_k(&self) -> Option<&Mat> {
        self.feedback_k.as_ref()
    }

    pub fn alpha1(&self) -> CaputoOrder {
        self.alpha1
    }

    pub fn alpha2(&self) -> CaputoOrder {
        self.alpha2
    }

    pub fn delay_kernel(&self) -> &Expr {
        &self.delay_kernel
    }

    pub fn g(&self) -> &[Expr] {
        &self.g
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn sim(&self) -> SimBlock {
        self.sim
    }

    /// True when any g component reads a d-variable, i.e. the integrator must
    /// maintain Caputo history.
    pub fn uses_derivative_feedback(&self) -> bool {
        self.g.iter().any(|gi| {
            expr::free_vars(gi)
                .iter()
                .any(|v| v.starts_with("d1_") || v.starts_with("d2_"))
        })
    }
}

fn allowed_state_vars(n: usize) -> BTreeSet<String> {
    let mut vars = BTreeSet::new();
    vars.insert("t".to_string());
    for i in 1..=n {
        vars.insert(format!("x{i}"));
        vars.insert(format!("d1_{i}"));
        vars.insert(format!("d2_{i}"));
    }
    vars
}

fn check_vars(e: &Expr, field: &str, allowed: &BTreeSet<String>) -> Result<(), ModelError> {
    for name in expr::free_vars(e) {
        if !allowed.contains(&name) {
            return Err(ModelError::UnknownVariable {
                field: field.to_string(),
                name,
            });
        }
    }
    Ok(())
}

/// Explicit form of the loop: x' = M_inv (A x + kernel(t) g), with
/// M_inv = (I - K)^{-1} (identity when feedback is absent).
#[derive(Debug, Clone)]
pub struct ClosedLoopSystem {
    base: SystemSpec,
    m_inv: Mat,
    m_inv_a: Mat,
}

impl ClosedLoopSystem {
    pub fn base(&self) -> &SystemSpec {
        &self.base
    }

    pub fn m_inv(&self) -> &Mat {
        &self.m_inv
    }

    pub fn m_inv_a(&self) -> &Mat {
        &self.m_inv_a
    }

    /// Right-hand side M_inv (A x + kernel(t) g(t, x, c1, c2)).
    ///
    /// c1/c2 are the current Caputo-derivative estimates; pass zeros when g
    /// has no d-variables.
    pub fn rhs(
        &self,
        t: f64,
        x: &[f64],
        c1: &[f64],
        c2: &[f64],
    ) -> Result<Vec<f64>, ModelError> {
        let n = self.base.n;
        assert!(
            x.len() == n && c1.len() == n && c2.len() == n,
            "state and derivative estimates must have length {n}"
        );
        let env = VarEnv::for_state(t, x, c1, c2);
        let kernel = expr::eval(&self.base.delay_kernel, &env).map_err(ModelError::KernelEval)?;
        let mut forced = self.base.a.mul_vec(x);
        for (i, gi) in self.base.g.iter().enumerate() {
            let gv = expr::eval(gi, &env)
                .map_err(|source| ModelError::ComponentEval { index: i, source })?;
            forced[i] += kernel * gv;
        }
        Ok(self.m_inv.mul_vec(&forced))
    }
}

/// Inverts I - K and precomputes M_inv A. Open-loop specs pass through with
/// M_inv = I exactly.
pub fn close_loop(spec: SystemSpec) -> Result<ClosedLoopSystem, ModelError> {
    let (m_inv, m_inv_a) = match &spec.feedback_k {
        None => (Mat::identity(spec.n), spec.a.clone()),
        Some(k) => {
            let m = Mat::identity(spec.n).sub(k);
            let m_inv = matrix::invert(&m).map_err(ModelError::SingularLoop)?;
            let m_inv_a = m_inv.mul(&spec.a);
            (m_inv, m_inv_a)
        }
    };
    Ok(ClosedLoopSystem {
        base: spec,
        m_inv,
        m_inv_a,
    })
}

pub fn load_spec(doc: &str) -> Result<SystemSpec, ModelError> {
    let raw: SpecDoc = serde_json::from_str(doc).map_err(|e| ModelError::Schema {
        detail: e.to_string(),
    })?;
    let a = Mat::from_rows(&raw.a).map_err(|e| ModelError::Invalid {
        field: "A".into(),
        reason: e.to_string(),
    })?;
    let feedback_k = match raw.feedback_k {
        None => None,
        Some(rows) => Some(Mat::from_rows(&rows).map_err(|e| ModelError::Invalid {
            field: "feedback_K".into(),
            reason: e.to_string(),
        })?),
    };
    let alpha1 = CaputoOrder::new(raw.alpha1).map_err(|e| ModelError::Invalid {
        field: "alpha1".into(),
        reason: e.to_string(),
    })?;
    let alpha2 = CaputoOrder::new(raw.alpha2).map_err(|e| ModelError::Invalid {
        field: "alpha2".into(),
        reason: e.to_string(),
    })?;
    let delay_kernel = expr::parse(&raw.delay_kernel).map_err(|source| ModelError::BadExpr {
        field: "delay_kernel".into(),
        source,
    })?;
    let g = raw
        .g
        .iter()
        .enumerate()
        .map(|(i, text)| {
            expr::parse(text).map_err(|source| ModelError::BadExpr {
                field: format!("g[{i}]"),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    SystemSpec::new(
        raw.n,
        a,
        feedback_k,
        alpha1,
        alpha2,
        delay_kernel,
        g,
        raw.x0,
        raw.label,
        raw.sim,
    )
}

/// Pretty-printed document that `load_spec` accepts; round-trips exactly
/// (shortest-round-trip floats, minimal-paren expression texts).
pub fn serialize_spec(spec: &SystemSpec) -> String {
    let doc = SpecDoc {
        n: spec.n,
        a: spec.a.rows(),
        feedback_k: spec.feedback_k.as_ref().map(Mat::rows),
        alpha1: spec.alpha1.alpha(),
        alpha2: spec.alpha2.alpha(),
        delay_kernel: expr::serialize(&spec.delay_kernel),
        g: spec.g.iter().map(expr::serialize).collect(),
        x0: spec.x0.clone(),
        label: spec.label.clone(),
        sim: spec.sim,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("spec document serializes");
    text.push('\n');
    text
}

/// Which side of the feedback loop a catalog entry models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopForm {
    Open,
    Closed,
}

/// Gain coefficients on the nonlinear terms: unit coefficients as printed in
/// the source system, or the exact power-rule constants they stand for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainForm {
    AsPrinted,
    PowerRuleExact,
}

/// Built-in three-state benchmark: first-order linear part with an unstable
/// 2x2 block, delayed gain t - 1, and signed-power nonlinearities of orders
/// 4/3 and 2/5 driven by alpha1 = 2/3, alpha2 = 3/5.
pub fn builtin_example(loop_form: LoopForm, gain_form: GainForm) -> SystemSpec {
    let a = Mat::from_rows(&[
        vec![-15.0, 15.0, 0.0],
        vec![110.0, -1.0, 0.0],
        vec![0.0, 0.0, -1.0],
    ])
    .expect("catalog A is well-formed");
    let feedback_k = match loop_form {
        LoopForm::Open => None,
        LoopForm::Closed => Some(
            Mat::from_rows(&[
                vec![1.0, 15.0, 0.0],
                vec![110.0, 0.0, 0.0],
                vec![0.0, 0.0, -3.0],
            ])
            .expect("catalog K is well-formed"),
        ),
    };
    let alpha1 = CaputoOrder::new(2.0 / 3.0).expect("catalog alpha1 valid");
    let alpha2 = CaputoOrder::new(3.0 / 5.0).expect("catalog alpha2 valid");
    // The raw system multiplies g by 1/(t-1), exactly cancelling the kernel;
    // the catalog stores the cancelled product so t = 1 is regular, keeping
    // the kernel itself for gain-bound estimation.
    let (g2, g3) = match gain_form {
        GainForm::AsPrinted => (
            "x2 * spow(x1, 4/3)".to_string(),
            "x1 * spow(x2, 2/5)".to_string(),
        ),
        GainForm::PowerRuleExact => {
            let (c2, _) = caputo_power_rule(alpha1, 2.0).expect("power rule at beta 2");
            let (c3, _) = caputo_power_rule(alpha2, 1.0).expect("power rule at beta 1");
            (
                format!("{c2} * x2 * spow(x1, 4/3)"),
                format!("{c3} * x1 * spow(x2, 2/5)"),
            )
        }
    };
    let g = ["0".to_string(), g2, g3]
        .iter()
        .map(|text| expr::parse(text).expect("catalog g parses"))
        .collect();
    let label = format!(
        "{} loop, {} gain coefficients",
        match loop_form {
            LoopForm::Open => "open",
            LoopForm::Closed => "closed",
        },
        match gain_form {
            GainForm::AsPrinted => "unit",
            GainForm::PowerRuleExact => "power-rule",
        }
    );
    SystemSpec::new(
        3,
        a,
        feedback_k,
        alpha1,
        alpha2,
        expr::parse("t - 1").expect("catalog kernel parses"),
        g,
        vec![0.5, 0.5, 0.5],
        label,
        SimBlock {
            t_end: 40.0,
            dt: 1e-3,
            divergence_cap: 1e6,
        },
    )
    .expect("catalog spec is valid")
}

/// All four catalog entries, open/closed x printed/exact.
pub fn catalog() -> Vec<SystemSpec> {
    vec![
        builtin_example(LoopForm::Open, GainForm::AsPrinted),
        builtin_example(LoopForm::Open, GainForm::PowerRuleExact),
        builtin_example(LoopForm::Closed, GainForm::AsPrinted),
        builtin_example(LoopForm::Closed, GainForm::PowerRuleExact),
    ]
}
