//! Second-order linear boundary value problems on `(-R, R)`, manufactured
//! solutions, and Gevrey envelopes `|f^(n)| <= M C^n (n!)^s`.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result, RfmError};
use crate::expr::Expr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub half_width: f64,
}

impl Domain {
    pub fn new(half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return arg_err(format!("half-width must be positive, got {half_width}"));
        }
        Ok(Self { half_width })
    }

    pub fn contains(&self, x: f64) -> bool {
        x.abs() <= self.half_width
    }

    pub fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(RfmError::Domain {
                x,
                half_width: self.half_width,
            })
        }
    }
}

/// A coefficient or source term together with a bound on its supremum.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub expr: Expr,
    pub sup: f64,
}

impl ScalarField {
    pub fn new(expr: Expr, domain: Domain) -> Self {
        let sup = expr.sup_bound(domain.half_width);
        Self { expr, sup }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            expr: Expr::Const(c),
            sup: c.abs(),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.expr.eval(x)
    }
}

/// `B u = g1 u' + g2 u = g`, index 0 at `-R` and index 1 at `+R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryOperator {
    pub g1: [f64; 2],
    pub g2: [f64; 2],
    pub g: [f64; 2],
}

impl BoundaryOperator {
    pub fn dirichlet() -> Self {
        Self {
            g1: [0.0; 2],
            g2: [1.0; 2],
            g: [0.0; 2],
        }
    }

    pub fn neumann() -> Self {
        Self {
            g1: [1.0; 2],
            g2: [0.0; 2],
            g: [0.0; 2],
        }
    }

    /// `sqrt(g1(-R)^2 + g1(R)^2)`.
    pub fn g1_norm(&self) -> f64 {
        self.g1[0].hypot(self.g1[1])
    }

    pub fn g2_norm(&self) -> f64 {
        self.g2[0].hypot(self.g2[1])
    }
}

/// The operator part of a problem: `a u'' + b u' + c u` with boundary
/// coefficients, before any data is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    pub domain: Domain,
    pub a: ScalarField,
    pub b: ScalarField,
    pub c: ScalarField,
    pub boundary: BoundaryOperator,
    pub gamma: f64,
}

impl OperatorSpec {
    pub fn constant_coefficients(half_width: f64, a: f64, b: f64, c: f64) -> Result<Self> {
        Ok(Self {
            domain: Domain::new(half_width)?,
            a: ScalarField::constant(a),
            b: ScalarField::constant(b),
            c: ScalarField::constant(c),
            boundary: BoundaryOperator::dirichlet(),
            gamma: 1.0,
        })
    }

    /// `a(x) v'' + b(x) v' + c(x) v` from the three values `(v, v', v'')`.
    pub fn apply_at(&self, x: f64, v: [f64; 3]) -> f64 {
        self.a.value(x) * v[2] + self.b.value(x) * v[1] + self.c.value(x) * v[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeProblem {
    pub op: OperatorSpec,
    pub f: ScalarField,
    /// Exact solution when the problem was manufactured.
    pub exact: Option<ManufacturedSolution>,
}

impl PdeProblem {
    pub fn domain(&self) -> Domain {
        self.op.domain
    }

    pub fn half_width(&self) -> f64 {
        self.op.domain.half_width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedSolution {
    pub expr: Expr,
    /// Highest derivative order reported at the origin.
    pub max_order: usize,
}

impl ManufacturedSolution {
    pub fn new(expr: Expr) -> Self {
        Self { expr, max_order: 64 }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(Self::new(Expr::parse(s)?))
    }

    pub fn value(&self, x: f64, order: usize) -> f64 {
        self.expr.deriv(x, order)
    }

    /// `u^(n)(0)` for `n = 0..=order`.
    pub fn maclaurin_derivatives(&self, order: usize) -> Result<Vec<f64>> {
        if order > self.max_order {
            return arg_err(format!(
                "derivative order {order} exceeds the available {}",
                self.max_order
            ));
        }
        let d = self.expr.derivs(0.0, order);
        if let Some(n) = d.iter().position(|v| !v.is_finite()) {
            return arg_err(format!("derivative of order {n} at the origin is undefined"));
        }
        Ok(d)
    }

    pub fn envelope(&self, domain: Domain) -> Option<GevreyEnvelope> {
        self.expr.envelope(domain.half_width)
    }
}

/// `L u (x)` for an explicit `u`.
pub fn apply_l(op: &OperatorSpec, u: &ManufacturedSolution, x: f64) -> Result<f64> {
    op.domain.check(x)?;
    let d = u.expr.derivs(x, 2);
    Ok(op.apply_at(x, [d[0], d[1], d[2]]))
}

/// Problem whose exact solution is `u`: `f = L u`, `g = B u` at both ends.
pub fn make_manufactured(op: &OperatorSpec, u: ManufacturedSolution) -> PdeProblem {
    let d1 = u.expr.derivative();
    let d2 = d1.derivative();
    let f =
        op.a.expr
            .clone()
            .mul(d2)
            .add(op.b.expr.clone().mul(d1))
            .add(op.c.expr.clone().mul(u.expr.clone()));
    let mut op = op.clone();
    let r = op.domain.half_width;
    for (side, x) in [-r, r].into_iter().enumerate() {
        let d = u.expr.derivs(x, 1);
        op.boundary.g[side] = op.boundary.g1[side] * d[1] + op.boundary.g2[side] * d[0];
    }
    let f = ScalarField::new(f, op.domain);
    PdeProblem { op, f, exact: Some(u) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevreyEnvelope {
    pub m: f64,
    pub c: f64,
    pub s: f64,
}

impl GevreyEnvelope {
    pub fn new(m: f64, c: f64, s: f64) -> Self {
        Self { m, c, s }
    }

    /// `M C^n (n!)^s`.
    pub fn bound(&self, n: usize) -> f64 {
        let ln_fact = statrs::function::factorial::ln_factorial(n as u64);
        let cn = if n == 0 { 1.0 } else { self.c.powi(n as i32) };
        self.m * cn * (self.s * ln_fact).exp()
    }

    pub fn scale(&self, a: f64) -> Self {
        Self::new(a.abs() * self.m, self.c, self.s)
    }

    pub fn sum(&self, o: &Self) -> Self {
        Self::new(self.m + o.m, self.c.max(o.c), self.s.max(o.s))
    }

    pub fn product(&self, o: &Self) -> Self {
        Self::new(self.m * o.m, self.c + o.c, self.s.max(o.s))
    }

    pub fn derivative(&self) -> Self {
        Self::new(self.m * self.c, 2f64.powf(self.s) * self.c, self.s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrimitiveKind {
    Cos {
        w: f64,
    },
    Sin {
        w: f64,
    },
    Exp {
        w: f64,
    },
    Monomial {
        k: u32,
    },
    /// Band-limited with spectrum in `[-band, band]`; `m` is the supplied
    /// `L1` mass of the Fourier transform (normalized).
    Bandlimited {
        m: f64,
        band: f64,
    },
}

impl PrimitiveKind {
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        let need = |n: usize| -> Result<()> {
            if params.len() == n {
                Ok(())
            } else {
                arg_err(format!("`{name}` takes {n} parameter(s), got {}", params.len()))
            }
        };
        match name {
            "cos" => need(1).map(|_| Self::Cos { w: params[0] }),
            "sin" => need(1).map(|_| Self::Sin { w: params[0] }),
            "exp" => need(1).map(|_| Self::Exp { w: params[0] }),
            "monomial" => {
                need(1)?;
                if params[0] < 0.0 || params[0].fract() != 0.0 {
                    return arg_err("monomial degree must be a non-negative integer");
                }
                Ok(Self::Monomial { k: params[0] as u32 })
            }
            "bandlimited" => need(2).map(|_| Self::Bandlimited {
                m: params[0],
                band: params[1],
            }),
            other => arg_err(format!("unknown primitive `{other}`")),
        }
    }
}

pub fn envelope_primitive(kind: PrimitiveKind, domain: Domain) -> GevreyEnvelope {
    let r = domain.half_width;
    match kind {
        PrimitiveKind::Cos { w } | PrimitiveKind::Sin { w } => GevreyEnvelope::new(1.0, w.abs(), 0.0),
        PrimitiveKind::Exp { w } => GevreyEnvelope::new((w.abs() * r).exp(), w.abs(), 0.0),
        PrimitiveKind::Monomial { k: 0 } => GevreyEnvelope::new(1.0, 0.0, 0.0),
        PrimitiveKind::Monomial { k } => GevreyEnvelope::new(r.powi(k as i32), k as f64 / r, 0.0),
        PrimitiveKind::Bandlimited { m, band } => GevreyEnvelope::new(m, band, 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvelopeOp {
    Scale(f64),
    Sum,
    Product,
    Derivative,
}

pub fn envelope_combine(op: EnvelopeOp, e1: &GevreyEnvelope, e2: Option<&GevreyEnvelope>) -> Result<GevreyEnvelope> {
    let second = || e2.ok_or_else(|| RfmError::Argument(format!("{op:?} needs two envelopes")));
    Ok(match op {
        EnvelopeOp::Scale(a) => e1.scale(a),
        EnvelopeOp::Sum => e1.sum(second()?),
        EnvelopeOp::Product => e1.product(second()?),
        EnvelopeOp::Derivative => e1.derivative(),
    })
}
