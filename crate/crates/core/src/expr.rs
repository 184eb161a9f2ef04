//! Expression language for metrics and conformal factors.
//!
//! Expressions are trees over the complex coordinates, conjugation, |·|²,
//! field arithmetic, real exp/log/sin/cos/sqrt of real subexpressions, and
//! real powers. The same tree supports plain complex evaluation (used by
//! finite-difference oracles) and jet evaluation through a compiled
//! instruction list with reusable per-thread workspaces.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jets::poly::{self, CPoly, Poly};
use crate::jets::table::Lane;
use crate::jets::JetContext;
use crate::C64;

/// A real scalar field of z supplying local quadratic Taylor data, used for
/// conformal factors that exist only as grid samples (recovered factors,
/// Yamabe minimizers). Orders beyond two are never needed: every pipeline
/// quantity takes at most one unbarred and one barred z-derivative of the
/// metric.
pub trait FieldJetSource: Send + Sync + fmt::Debug {
    fn dims(&self) -> usize;
    /// Field value at z (grid_idx is the grid point when evaluating on-grid).
    fn value(&self, z: &[C64], grid_idx: Option<usize>) -> f64;
    /// Value, gradient and Hessian with respect to the 2n real coordinates
    /// (x1, y1, …, xn, yn). `hess` is row-major symmetric (2n × 2n).
    fn taylor2(&self, z: &[C64], grid_idx: Option<usize>, grad: &mut [f64], hess: &mut [f64])
        -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// z_i (0-based)
    Z(usize),
    /// v_i
    V(usize),
    /// Re z_i, Im z_i
    X(usize),
    Y(usize),
    /// Re v_i, Im v_i
    P(usize),
    Q(usize),
    /// Grid-backed real field by registry slot.
    Field(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Conj(Box<Expr>),
    Abs2(Box<Expr>),
    Re(Box<Expr>),
    Im(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Sqrt(Box<Expr>),
    PowI(Box<Expr>, i32),
    PowF(Box<Expr>, f64),
}

impl Expr {
    pub fn add(self, o: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(o))
    }
    pub fn sub(self, o: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(o))
    }
    pub fn mul(self, o: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(o))
    }
    pub fn div(self, o: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(o))
    }
    pub fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
    pub fn conj(self) -> Expr {
        Expr::Conj(Box::new(self))
    }
    pub fn abs2(self) -> Expr {
        Expr::Abs2(Box::new(self))
    }
    pub fn re(self) -> Expr {
        Expr::Re(Box::new(self))
    }
    pub fn exp(self) -> Expr {
        Expr::Exp(Box::new(self))
    }
    pub fn powi(self, k: i32) -> Expr {
        Expr::PowI(Box::new(self), k)
    }
    pub fn scaled(self, s: f64) -> Expr {
        Expr::Const(s).mul(self)
    }

    /// Largest coordinate index mentioned, plus one.
    pub fn min_dims(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Field(_) => 0,
            Expr::Z(i) | Expr::V(i) | Expr::X(i) | Expr::Y(i) | Expr::P(i) | Expr::Q(i) => i + 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.min_dims().max(b.min_dims())
            }
            Expr::Neg(a)
            | Expr::Conj(a)
            | Expr::Abs2(a)
            | Expr::Re(a)
            | Expr::Im(a)
            | Expr::Exp(a)
            | Expr::Log(a)
            | Expr::Sin(a)
            | Expr::Cos(a)
            | Expr::Sqrt(a)
            | Expr::PowI(a, _)
            | Expr::PowF(a, _) => a.min_dims(),
        }
    }

    pub fn uses_field(&self) -> bool {
        match self {
            Expr::Field(_) => true,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.uses_field() || b.uses_field()
            }
            Expr::Neg(a)
            | Expr::Conj(a)
            | Expr::Abs2(a)
            | Expr::Re(a)
            | Expr::Im(a)
            | Expr::Exp(a)
            | Expr::Log(a)
            | Expr::Sin(a)
            | Expr::Cos(a)
            | Expr::Sqrt(a)
            | Expr::PowI(a, _)
            | Expr::PowF(a, _) => a.uses_field(),
            _ => false,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Z(i) => write!(f, "z{}", i + 1),
            Expr::V(i) => write!(f, "v{}", i + 1),
            Expr::X(i) => write!(f, "x{}", i + 1),
            Expr::Y(i) => write!(f, "y{}", i + 1),
            Expr::P(i) => write!(f, "p{}", i + 1),
            Expr::Q(i) => write!(f, "q{}", i + 1),
            Expr::Field(i) => write!(f, "field#{i}"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Conj(a) => write!(f, "conj({a})"),
            Expr::Abs2(a) => write!(f, "abs2({a})"),
            Expr::Re(a) => write!(f, "re({a})"),
            Expr::Im(a) => write!(f, "im({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Log(a) => write!(f, "log({a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
            Expr::PowI(a, k) => write!(f, "({a} ^ {k})"),
            Expr::PowF(a, x) => write!(f, "({a} ^ {x})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Real,
    Complex,
}

/// Infer real/complex; real-analytic functions require real arguments.
pub fn kind_of(e: &Expr) -> Result<Kind> {
    use Kind::*;
    Ok(match e {
        Expr::Const(_) | Expr::X(_) | Expr::Y(_) | Expr::P(_) | Expr::Q(_) | Expr::Field(_) => {
            Real
        }
        Expr::Z(_) | Expr::V(_) => Complex,
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            if kind_of(a)? == Real && kind_of(b)? == Real {
                Real
            } else {
                Complex
            }
        }
        Expr::Neg(a) | Expr::Conj(a) | Expr::PowI(a, _) => kind_of(a)?,
        Expr::Abs2(a) | Expr::Re(a) | Expr::Im(a) => {
            kind_of(a)?;
            Real
        }
        Expr::Exp(a) | Expr::Log(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Sqrt(a)
        | Expr::PowF(a, _) => {
            if kind_of(a)? != Real {
                return Err(Error::Config(format!(
                    "real-analytic function applied to complex subexpression: {e}"
                )));
            }
            Real
        }
    })
}

// ---------------------------------------------------------------------------
// Plain complex evaluation (used by finite-difference oracles and sampling).
// ---------------------------------------------------------------------------

pub fn eval_complex(
    e: &Expr,
    z: &[C64],
    v: &[C64],
    fields: &[Arc<dyn FieldJetSource>],
    grid_idx: Option<usize>,
) -> Result<C64> {
    let c = |re: f64| C64::new(re, 0.0);
    Ok(match e {
        Expr::Const(x) => c(*x),
        Expr::Z(i) => z[*i],
        Expr::V(i) => v[*i],
        Expr::X(i) => c(z[*i].re),
        Expr::Y(i) => c(z[*i].im),
        Expr::P(i) => c(v[*i].re),
        Expr::Q(i) => c(v[*i].im),
        Expr::Field(i) => c(fields[*i].value(z, grid_idx)),
        Expr::Add(a, b) => {
            eval_complex(a, z, v, fields, grid_idx)? + eval_complex(b, z, v, fields, grid_idx)?
        }
        Expr::Sub(a, b) => {
            eval_complex(a, z, v, fields, grid_idx)? - eval_complex(b, z, v, fields, grid_idx)?
        }
        Expr::Mul(a, b) => {
            eval_complex(a, z, v, fields, grid_idx)? * eval_complex(b, z, v, fields, grid_idx)?
        }
        Expr::Div(a, b) => {
            let den = eval_complex(b, z, v, fields, grid_idx)?;
            if den.norm() < 1e-250 {
                return Err(Error::Singularity {
                    subexpr: b.to_string(),
                });
            }
            eval_complex(a, z, v, fields, grid_idx)? / den
        }
        Expr::Neg(a) => -eval_complex(a, z, v, fields, grid_idx)?,
        Expr::Conj(a) => eval_complex(a, z, v, fields, grid_idx)?.conj(),
        Expr::Abs2(a) => c(eval_complex(a, z, v, fields, grid_idx)?.norm_sqr()),
        Expr::Re(a) => c(eval_complex(a, z, v, fields, grid_idx)?.re),
        Expr::Im(a) => c(eval_complex(a, z, v, fields, grid_idx)?.im),
        Expr::Exp(a) => c(eval_complex(a, z, v, fields, grid_idx)?.re.exp()),
        Expr::Log(a) => {
            let x = eval_complex(a, z, v, fields, grid_idx)?.re;
            if x <= 0.0 {
                return Err(Error::Singularity {
                    subexpr: e.to_string(),
                });
            }
            c(x.ln())
        }
        Expr::Sin(a) => c(eval_complex(a, z, v, fields, grid_idx)?.re.sin()),
        Expr::Cos(a) => c(eval_complex(a, z, v, fields, grid_idx)?.re.cos()),
        Expr::Sqrt(a) => {
            let x = eval_complex(a, z, v, fields, grid_idx)?.re;
            if x < 0.0 {
                return Err(Error::Singularity {
                    subexpr: e.to_string(),
                });
            }
            c(x.sqrt())
        }
        Expr::PowI(a, k) => {
            let x = eval_complex(a, z, v, fields, grid_idx)?;
            if *k < 0 && x.norm() < 1e-250 {
                return Err(Error::Singularity {
                    subexpr: a.to_string(),
                });
            }
            x.powi(*k)
        }
        Expr::PowF(a, alpha) => {
            let x = eval_complex(a, z, v, fields, grid_idx)?.re;
            if x <= 0.0 {
                return Err(Error::Singularity {
                    subexpr: e.to_string(),
                });
            }
            c(x.powf(*alpha))
        }
    })
}

// ---------------------------------------------------------------------------
// Compiled jet evaluation.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum SlotShape {
    RScalar,
    CScalar,
    RPoly(Lane),
    CPoly(Lane),
}

#[derive(Debug, Clone)]
enum Instr {
    ConstR(u32, f64),
    VarReal(u32, Lane, u8 /* slot-in-lane */, u8 /* which: 0=x,1=y of coord */, u8 /* coord */),
    VarZ(u32, u8),
    VarV(u32, u8),
    Field(u32, u32),
    Add(u32, u32, u32),
    Sub(u32, u32, u32),
    Mul(u32, u32, u32),
    Div(u32, u32, u32, u32 /* name id */),
    Neg(u32, u32),
    Conj(u32, u32),
    Abs2(u32, u32),
    Re(u32, u32),
    Im(u32, u32),
    Compose(u32, u32, ComposeKind, u32 /* name id */),
}

#[derive(Debug, Clone, Copy)]
enum ComposeKind {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    PowF(f64),
}

#[derive(Debug)]
enum Value {
    RS(f64),
    CS(C64),
    R(Poly),
    C(CPoly),
}

/// Jet evaluator for one expression against one jet context.
pub struct JetEvaluator {
    ctx: Arc<JetContext>,
    instrs: Vec<Instr>,
    shapes: Vec<SlotShape>,
    names: Vec<String>,
    out: u32,
    fields: Vec<Arc<dyn FieldJetSource>>,
    pub out_kind: Kind,
}

impl fmt::Debug for JetEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JetEvaluator({} instrs)", self.instrs.len())
    }
}

/// Per-thread buffers for repeated evaluation.
pub struct JetWorkspace {
    values: Vec<Value>,
    scratch_a: Vec<f64>,
    scratch_b: Vec<f64>,
    field_grad: Vec<f64>,
    field_hess: Vec<f64>,
}

struct Compiler<'a> {
    ctx: &'a JetContext,
    instrs: Vec<Instr>,
    shapes: Vec<SlotShape>,
    names: Vec<String>,
}

impl<'a> Compiler<'a> {
    fn name_id(&mut self, e: &Expr) -> u32 {
        let mut s = e.to_string();
        if s.len() > 120 {
            s.truncate(120);
            s.push('…');
        }
        self.names.push(s);
        (self.names.len() - 1) as u32
    }

    fn push(&mut self, shape: SlotShape) -> u32 {
        self.shapes.push(shape);
        (self.shapes.len() - 1) as u32
    }

    fn shape(&self, slot: u32) -> &SlotShape {
        &self.shapes[slot as usize]
    }

    fn lane_of(&self, slot: u32) -> Option<Lane> {
        match self.shape(slot) {
            SlotShape::RScalar | SlotShape::CScalar => None,
            SlotShape::RPoly(l) | SlotShape::CPoly(l) => Some(*l),
        }
    }

    fn is_complex(&self, slot: u32) -> bool {
        matches!(self.shape(slot), SlotShape::CScalar | SlotShape::CPoly(_))
    }

    fn join_shape(&self, a: u32, b: u32, complex: bool) -> SlotShape {
        let lane = match (self.lane_of(a), self.lane_of(b)) {
            (None, None) => None,
            (Some(l), None) | (None, Some(l)) => Some(l),
            (Some(l1), Some(l2)) => Some(l1.join(l2)),
        };
        match (lane, complex) {
            (None, false) => SlotShape::RScalar,
            (None, true) => SlotShape::CScalar,
            (Some(l), false) => SlotShape::RPoly(l),
            (Some(l), true) => SlotShape::CPoly(l),
        }
    }

    fn compile(&mut self, e: &Expr) -> Result<u32> {
        let n = self.ctx.n;
        let dim_check = |i: usize| -> Result<()> {
            if i >= n {
                return Err(Error::Config(format!(
                    "coordinate index {} exceeds dims {n}",
                    i + 1
                )));
            }
            Ok(())
        };
        Ok(match e {
            Expr::Const(c) => {
                let s = self.push(SlotShape::RScalar);
                self.instrs.push(Instr::ConstR(s, *c));
                s
            }
            Expr::X(i) => {
                dim_check(*i)?;
                let s = self.push(SlotShape::RPoly(Lane::Z));
                self.instrs.push(Instr::VarReal(s, Lane::Z, 2 * *i as u8, 0, *i as u8));
                s
            }
            Expr::Y(i) => {
                dim_check(*i)?;
                let s = self.push(SlotShape::RPoly(Lane::Z));
                self.instrs
                    .push(Instr::VarReal(s, Lane::Z, (2 * *i + 1) as u8, 1, *i as u8));
                s
            }
            Expr::P(i) => {
                dim_check(*i)?;
                let s = self.push(SlotShape::RPoly(Lane::V));
                self.instrs.push(Instr::VarReal(s, Lane::V, 2 * *i as u8, 0, *i as u8));
                s
            }
            Expr::Q(i) => {
                dim_check(*i)?;
                let s = self.push(SlotShape::RPoly(Lane::V));
                self.instrs
                    .push(Instr::VarReal(s, Lane::V, (2 * *i + 1) as u8, 1, *i as u8));
                s
            }
            Expr::Z(i) => {
                dim_check(*i)?;
                let s = self.push(SlotShape::CPoly(Lane::Z));
                self.instrs.push(Instr::VarZ(s, *i as u8));
                s
            }
            Expr::V(i) => {
                dim_check(*i)?;
                let s = self.push(SlotShape::CPoly(Lane::V));
                self.instrs.push(Instr::VarV(s, *i as u8));
                s
            }
            Expr::Field(fi) => {
                let s = self.push(SlotShape::RPoly(Lane::Z));
                self.instrs.push(Instr::Field(s, *fi as u32));
                s
            }
            Expr::Add(a, b) => {
                let (sa, sb) = (self.compile(a)?, self.compile(b)?);
                let complex = self.is_complex(sa) || self.is_complex(sb);
                let out = self.push(self.join_shape(sa, sb, complex));
                self.instrs.push(Instr::Add(out, sa, sb));
                out
            }
            Expr::Sub(a, b) => {
                let (sa, sb) = (self.compile(a)?, self.compile(b)?);
                let complex = self.is_complex(sa) || self.is_complex(sb);
                let out = self.push(self.join_shape(sa, sb, complex));
                self.instrs.push(Instr::Sub(out, sa, sb));
                out
            }
            Expr::Mul(a, b) => {
                let (sa, sb) = (self.compile(a)?, self.compile(b)?);
                let complex = self.is_complex(sa) || self.is_complex(sb);
                let out = self.push(self.join_shape(sa, sb, complex));
                self.instrs.push(Instr::Mul(out, sa, sb));
                out
            }
            Expr::Div(a, b) => {
                let (sa, sb) = (self.compile(a)?, self.compile(b)?);
                let complex = self.is_complex(sa) || self.is_complex(sb);
                let nid = self.name_id(b);
                let out = self.push(self.join_shape(sa, sb, complex));
                self.instrs.push(Instr::Div(out, sa, sb, nid));
                out
            }
            Expr::Neg(a) => {
                let sa = self.compile(a)?;
                let out = self.push(self.shape(sa).clone());
                self.instrs.push(Instr::Neg(out, sa));
                out
            }
            Expr::Conj(a) => {
                let sa = self.compile(a)?;
                let out = self.push(self.shape(sa).clone());
                self.instrs.push(Instr::Conj(out, sa));
                out
            }
            Expr::Abs2(a) => {
                let sa = self.compile(a)?;
                let shape = match self.lane_of(sa) {
                    None => SlotShape::RScalar,
                    Some(l) => SlotShape::RPoly(l),
                };
                let out = self.push(shape);
                self.instrs.push(Instr::Abs2(out, sa));
                out
            }
            Expr::Re(a) => {
                let sa = self.compile(a)?;
                let shape = match self.lane_of(sa) {
                    None => SlotShape::RScalar,
                    Some(l) => SlotShape::RPoly(l),
                };
                let out = self.push(shape);
                self.instrs.push(Instr::Re(out, sa));
                out
            }
            Expr::Im(a) => {
                let sa = self.compile(a)?;
                let shape = match self.lane_of(sa) {
                    None => SlotShape::RScalar,
                    Some(l) => SlotShape::RPoly(l),
                };
                let out = self.push(shape);
                self.instrs.push(Instr::Im(out, sa));
                out
            }
            Expr::Exp(a) => self.compose(e, a, ComposeKind::Exp)?,
            Expr::Log(a) => self.compose(e, a, ComposeKind::Log)?,
            Expr::Sin(a) => self.compose(e, a, ComposeKind::Sin)?,
            Expr::Cos(a) => self.compose(e, a, ComposeKind::Cos)?,
            Expr::Sqrt(a) => self.compose(e, a, ComposeKind::Sqrt)?,
            Expr::PowI(a, k) => {
                // Desugared to repeated multiplication.
                if *k == 0 {
                    return self.compile(&Expr::Const(1.0));
                }
                let mag = k.unsigned_abs();
                let sa = self.compile(a)?;
                let complex = self.is_complex(sa);
                let mut acc = sa;
                for _ in 1..mag {
                    let out = self.push(self.join_shape(acc, sa, complex));
                    self.instrs.push(Instr::Mul(out, acc, sa));
                    acc = out;
                }
                if *k < 0 {
                    let one = self.compile(&Expr::Const(1.0))?;
                    let nid = self.name_id(a);
                    let out = self.push(self.join_shape(one, acc, complex));
                    self.instrs.push(Instr::Div(out, one, acc, nid));
                    acc = out;
                }
                acc
            }
            Expr::PowF(a, alpha) => {
                if alpha.fract() == 0.0 && alpha.abs() <= 16.0 {
                    return self.compile(&Expr::PowI(a.clone(), *alpha as i32));
                }
                self.compose(e, a, ComposeKind::PowF(*alpha))?
            }
        })
    }

    fn compose(&mut self, whole: &Expr, a: &Expr, kind: ComposeKind) -> Result<u32> {
        if kind_of(a)? != Kind::Real {
            return Err(Error::Config(format!(
                "real-analytic function applied to complex subexpression: {whole}"
            )));
        }
        let sa = self.compile(a)?;
        let nid = self.name_id(whole);
        let shape = match self.lane_of(sa) {
            None => SlotShape::RScalar,
            Some(l) => SlotShape::RPoly(l),
        };
        let out = self.push(shape);
        self.instrs.push(Instr::Compose(out, sa, kind, nid));
        Ok(out)
    }
}

impl JetEvaluator {
    pub fn new(
        ctx: Arc<JetContext>,
        expr: &Expr,
        fields: Vec<Arc<dyn FieldJetSource>>,
    ) -> Result<Self> {
        let out_kind = kind_of(expr)?;
        let mut c = Compiler {
            ctx: &ctx,
            instrs: Vec::new(),
            shapes: Vec::new(),
            names: Vec::new(),
        };
        let out = c.compile(expr)?;
        Ok(Self {
            instrs: c.instrs,
            shapes: c.shapes,
            names: c.names,
            out,
            ctx,
            fields,
            out_kind,
        })
    }

    pub fn ctx(&self) -> &Arc<JetContext> {
        &self.ctx
    }

    pub fn make_workspace(&self) -> JetWorkspace {
        let ts = &self.ctx.ts;
        let values = self
            .shapes
            .iter()
            .map(|s| match s {
                SlotShape::RScalar => Value::RS(0.0),
                SlotShape::CScalar => Value::CS(C64::new(0.0, 0.0)),
                SlotShape::RPoly(l) => Value::R(Poly::zero(ts, *l)),
                SlotShape::CPoly(l) => Value::C(CPoly {
                    re: Poly::zero(ts, *l),
                    im: Poly::zero(ts, *l),
                }),
            })
            .collect();
        let full = ts.tf.len();
        let n2 = 2 * self.ctx.n;
        JetWorkspace {
            values,
            scratch_a: vec![0.0; full],
            scratch_b: vec![0.0; full],
            field_grad: vec![0.0; n2],
            field_hess: vec![0.0; n2 * n2],
        }
    }

    /// Evaluate the jet at (z, v). The result is the slot of the final value;
    /// read through [`Self::result_real`] or [`Self::result_complex`].
    pub fn eval(
        &self,
        ws: &mut JetWorkspace,
        z: &[C64],
        v: &[C64],
        grid_idx: Option<usize>,
    ) -> Result<()> {
        let ts = &self.ctx.ts;
        let order = self.ctx.order;
        for ins in &self.instrs {
            match *ins {
                Instr::ConstR(s, c) => ws.values[s as usize] = Value::RS(c),
                Instr::VarReal(s, lane, slot, which, coord) => {
                    let val = match (lane, which) {
                        (Lane::Z, 0) => z[coord as usize].re,
                        (Lane::Z, _) => z[coord as usize].im,
                        (Lane::V, 0) => v[coord as usize].re,
                        (Lane::V, _) => v[coord as usize].im,
                        _ => unreachable!(),
                    };
                    if let Value::R(p) = &mut ws.values[s as usize] {
                        set_variable(ts, p, slot as usize, val);
                    }
                }
                Instr::VarZ(s, coord) => {
                    if let Value::C(p) = &mut ws.values[s as usize] {
                        set_variable(ts, &mut p.re, 2 * coord as usize, z[coord as usize].re);
                        set_variable(ts, &mut p.im, 2 * coord as usize + 1, z[coord as usize].im);
                    }
                }
                Instr::VarV(s, coord) => {
                    if let Value::C(p) = &mut ws.values[s as usize] {
                        set_variable(ts, &mut p.re, 2 * coord as usize, v[coord as usize].re);
                        set_variable(ts, &mut p.im, 2 * coord as usize + 1, v[coord as usize].im);
                    }
                }
                Instr::Field(s, fi) => {
                    let f = &self.fields[fi as usize];
                    let val =
                        f.taylor2(z, grid_idx, &mut ws.field_grad, &mut ws.field_hess);
                    if let Value::R(p) = &mut ws.values[s as usize] {
                        set_field_quadratic(ts, p, val, &ws.field_grad, &ws.field_hess);
                    }
                }
                Instr::Add(o, a, b) => self.binary(ws, o, a, b, BinOp::Add)?,
                Instr::Sub(o, a, b) => self.binary(ws, o, a, b, BinOp::Sub)?,
                Instr::Mul(o, a, b) => self.binary(ws, o, a, b, BinOp::Mul)?,
                Instr::Div(o, a, b, nid) => {
                    self.check_denominator(ws, b, nid)?;
                    self.binary(ws, o, a, b, BinOp::Div)?
                }
                Instr::Neg(o, a) => {
                    let out = unary_copy(&ws.values[a as usize]);
                    ws.values[o as usize] = negate(out);
                }
                Instr::Conj(o, a) => {
                    let out = unary_copy(&ws.values[a as usize]);
                    ws.values[o as usize] = conj_value(out);
                }
                Instr::Abs2(o, a) => {
                    let v = abs2_value(ts, &ws.values[a as usize], &mut ws.scratch_a);
                    ws.values[o as usize] = v;
                }
                Instr::Re(o, a) => {
                    ws.values[o as usize] = match &ws.values[a as usize] {
                        Value::RS(x) => Value::RS(*x),
                        Value::CS(x) => Value::RS(x.re),
                        Value::R(p) => Value::R(p.clone()),
                        Value::C(p) => Value::R(p.re.clone()),
                    }
                }
                Instr::Im(o, a) => {
                    ws.values[o as usize] = match &ws.values[a as usize] {
                        Value::RS(_) => Value::RS(0.0),
                        Value::CS(x) => Value::RS(x.im),
                        Value::R(p) => {
                            let mut q = p.clone();
                            q.coeffs.fill(0.0);
                            Value::R(q)
                        }
                        Value::C(p) => Value::R(p.im.clone()),
                    }
                }
                Instr::Compose(o, a, kind, nid) => {
                    let v = match &ws.values[a as usize] {
                        Value::RS(x) => Value::RS(self.apply_scalar(kind, *x, nid)?),
                        Value::R(p) => {
                            let series = self.series_for(kind, p.value(), order, nid)?;
                            Value::R(poly::compose(ts, p, &series))
                        }
                        _ => unreachable!("type checker rejects complex arguments"),
                    };
                    ws.values[o as usize] = v;
                }
            }
        }
        Ok(())
    }

    fn apply_scalar(&self, kind: ComposeKind, x: f64, nid: u32) -> Result<f64> {
        let sing = || Error::Singularity {
            subexpr: self.names[nid as usize].clone(),
        };
        Ok(match kind {
            ComposeKind::Exp => x.exp(),
            ComposeKind::Log => {
                if x <= 0.0 {
                    return Err(sing());
                }
                x.ln()
            }
            ComposeKind::Sin => x.sin(),
            ComposeKind::Cos => x.cos(),
            ComposeKind::Sqrt => {
                if x < 0.0 {
                    return Err(sing());
                }
                x.sqrt()
            }
            ComposeKind::PowF(a) => {
                if x <= 0.0 {
                    return Err(sing());
                }
                x.powf(a)
            }
        })
    }

    fn series_for(&self, kind: ComposeKind, c0: f64, order: usize, nid: u32) -> Result<Vec<f64>> {
        let sing = || Error::Singularity {
            subexpr: self.names[nid as usize].clone(),
        };
        Ok(match kind {
            ComposeKind::Exp => poly::exp_series(c0, order),
            ComposeKind::Log => {
                if c0 <= 0.0 {
                    return Err(sing());
                }
                poly::ln_series(c0, order)
            }
            ComposeKind::Sin => poly::sin_series(c0, order),
            ComposeKind::Cos => poly::cos_series(c0, order),
            ComposeKind::Sqrt => {
                if c0 <= 0.0 {
                    return Err(sing());
                }
                poly::sqrt_series(c0, order)
            }
            ComposeKind::PowF(a) => {
                if c0 <= 0.0 {
                    return Err(sing());
                }
                poly::powf_series(c0, a, order)
            }
        })
    }

    fn check_denominator(&self, ws: &JetWorkspace, b: u32, nid: u32) -> Result<()> {
        let mag = match &ws.values[b as usize] {
            Value::RS(x) => x.abs(),
            Value::CS(x) => x.norm(),
            Value::R(p) => p.value().abs(),
            Value::C(p) => C64::new(p.re.value(), p.im.value()).norm(),
        };
        if mag < 1e-250 {
            return Err(Error::Singularity {
                subexpr: self.names[nid as usize].clone(),
            });
        }
        Ok(())
    }

    fn binary(&self, ws: &mut JetWorkspace, o: u32, a: u32, b: u32, op: BinOp) -> Result<()> {
        // Values are taken out to satisfy the borrow checker; slots are SSA
        // so o never aliases a or b, but a may equal b (x·x from powers).
        let ts = &self.ctx.ts;
        let va = std::mem::replace(&mut ws.values[a as usize], Value::RS(0.0));
        let out = if a == b {
            binary_value(ts, &va, &va, op)
        } else {
            let vb = std::mem::replace(&mut ws.values[b as usize], Value::RS(0.0));
            let out = binary_value(ts, &va, &vb, op);
            ws.values[b as usize] = vb;
            out
        };
        ws.values[a as usize] = va;
        ws.values[o as usize] = out;
        Ok(())
    }

    pub fn result_real(&self, ws: &JetWorkspace) -> Poly {
        match &ws.values[self.out as usize] {
            Value::R(p) => p.clone(),
            Value::RS(x) => Poly::constant(&self.ctx.ts, Lane::Z, *x),
            _ => panic!("expression is not real-valued"),
        }
    }

    pub fn result_complex(&self, ws: &JetWorkspace) -> CPoly {
        match &ws.values[self.out as usize] {
            Value::C(p) => p.clone(),
            Value::R(p) => CPoly {
                re: p.clone(),
                im: Poly::zero(&self.ctx.ts, p.lane),
            },
            Value::RS(x) => CPoly {
                re: Poly::constant(&self.ctx.ts, Lane::Z, *x),
                im: Poly::zero(&self.ctx.ts, Lane::Z),
            },
            Value::CS(x) => CPoly {
                re: Poly::constant(&self.ctx.ts, Lane::Z, x.re),
                im: Poly::constant(&self.ctx.ts, Lane::Z, x.im),
            },
        }
    }
}

fn set_variable(ts: &crate::jets::TableSet, p: &mut Poly, slot: usize, value: f64) {
    p.coeffs.fill(0.0);
    p.coeffs[0] = value;
    let table = ts.table(p.lane);
    let mut e = vec![0u8; table.nvars];
    e[slot] = 1;
    let idx = table.index_of(&e).unwrap();
    p.coeffs[idx as usize] = 1.0;
}

/// Writes the local quadratic model of a grid field into a z-lane poly.
fn set_field_quadratic(
    ts: &crate::jets::TableSet,
    p: &mut Poly,
    val: f64,
    grad: &[f64],
    hess: &[f64],
) {
    p.coeffs.fill(0.0);
    p.coeffs[0] = val;
    let table = ts.table(p.lane);
    let m = grad.len();
    let mut e = vec![0u8; table.nvars];
    for i in 0..m {
        e.fill(0);
        e[i] = 1;
        if let Some(idx) = table.index_of(&e) {
            p.coeffs[idx as usize] = grad[i];
        }
    }
    for i in 0..m {
        for j in i..m {
            e.fill(0);
            e[i] += 1;
            e[j] += 1;
            if let Some(idx) = table.index_of(&e) {
                // Taylor coefficient: h_ii/2 on the diagonal, h_ij off it.
                p.coeffs[idx as usize] = if i == j { hess[i * m + j] / 2.0 } else { hess[i * m + j] };
            }
        }
    }
}

#[derive(Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

fn unary_copy(v: &Value) -> Value {
    match v {
        Value::RS(x) => Value::RS(*x),
        Value::CS(x) => Value::CS(*x),
        Value::R(p) => Value::R(p.clone()),
        Value::C(p) => Value::C(p.clone()),
    }
}

fn negate(v: Value) -> Value {
    match v {
        Value::RS(x) => Value::RS(-x),
        Value::CS(x) => Value::CS(-x),
        Value::R(mut p) => {
            for c in &mut p.coeffs {
                *c = -*c;
            }
            Value::R(p)
        }
        Value::C(mut p) => {
            for c in &mut p.re.coeffs {
                *c = -*c;
            }
            for c in &mut p.im.coeffs {
                *c = -*c;
            }
            Value::C(p)
        }
    }
}

fn conj_value(v: Value) -> Value {
    match v {
        Value::CS(x) => Value::CS(x.conj()),
        Value::C(mut p) => {
            for c in &mut p.im.coeffs {
                *c = -*c;
            }
            Value::C(p)
        }
        other => other,
    }
}

fn abs2_value(ts: &crate::jets::TableSet, v: &Value, scratch: &mut [f64]) -> Value {
    match v {
        Value::RS(x) => Value::RS(x * x),
        Value::CS(x) => Value::RS(x.norm_sqr()),
        Value::R(p) => Value::R(poly::mul(ts, p, p)),
        Value::C(p) => {
            let mut out = poly::mul(ts, &p.re, &p.re);
            let im2 = poly::mul(ts, &p.im, &p.im);
            let _ = scratch;
            for (o, &c) in out.coeffs.iter_mut().zip(&im2.coeffs) {
                *o += c;
            }
            Value::R(out)
        }
    }
}

fn to_cpoly(ts: &crate::jets::TableSet, v: &Value, lane_hint: Lane) -> CPoly {
    match v {
        Value::RS(x) => CPoly {
            re: Poly::constant(ts, lane_hint, *x),
            im: Poly::zero(ts, lane_hint),
        },
        Value::CS(x) => CPoly {
            re: Poly::constant(ts, lane_hint, x.re),
            im: Poly::constant(ts, lane_hint, x.im),
        },
        Value::R(p) => CPoly {
            re: p.clone(),
            im: Poly::zero(ts, p.lane),
        },
        Value::C(p) => p.clone(),
    }
}

fn binary_value(ts: &crate::jets::TableSet, a: &Value, b: &Value, op: BinOp) -> Value {
    use Value::*;
    // Scalar-scalar fast paths.
    if let (RS(x), RS(y)) = (a, b) {
        return RS(match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => x / y,
        });
    }
    let ca = matches!(a, CS(_) | C(_));
    let cb = matches!(b, CS(_) | C(_));
    if ca || cb {
        // Complex path; scalars fold against polynomials cheaply.
        match (a, b, op) {
            (CS(x), CS(y), op) => {
                return CS(match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                })
            }
            (C(p), CS(s), BinOp::Mul) | (CS(s), C(p), BinOp::Mul) => {
                let re = poly::sub(ts, &poly::scale(&p.re, s.re), &poly::scale(&p.im, s.im));
                let im = poly::add(ts, &poly::scale(&p.re, s.im), &poly::scale(&p.im, s.re));
                return C(CPoly { re, im });
            }
            (C(p), RS(s), BinOp::Mul) | (RS(s), C(p), BinOp::Mul) => {
                return C(CPoly {
                    re: poly::scale(&p.re, *s),
                    im: poly::scale(&p.im, *s),
                });
            }
            (C(p), RS(s), BinOp::Div) => {
                return C(CPoly {
                    re: poly::scale(&p.re, 1.0 / *s),
                    im: poly::scale(&p.im, 1.0 / *s),
                });
            }
            _ => {}
        }
        let lane = lane_of_value(a).or(lane_of_value(b)).unwrap_or(Lane::Z);
        let pa = to_cpoly(ts, a, lane);
        let pb = to_cpoly(ts, b, lane);
        return C(cpoly_binary(ts, &pa, &pb, op));
    }
    // Real path with scalar folding.
    match (a, b, op) {
        (R(p), RS(s), BinOp::Add) | (RS(s), R(p), BinOp::Add) => {
            return R(poly::add_scalar(p, *s))
        }
        (R(p), RS(s), BinOp::Sub) => return R(poly::add_scalar(p, -*s)),
        (RS(s), R(p), BinOp::Sub) => {
            let neg = poly::scale(p, -1.0);
            return R(poly::add_scalar(&neg, *s));
        }
        (R(p), RS(s), BinOp::Mul) | (RS(s), R(p), BinOp::Mul) => return R(poly::scale(p, *s)),
        (R(p), RS(s), BinOp::Div) => return R(poly::scale(p, 1.0 / *s)),
        (RS(s), R(p), BinOp::Div) => {
            let num = Poly::constant(ts, p.lane, *s);
            return R(poly::div(ts, &num, p));
        }
        (R(pa), R(pb), op) => {
            return R(match op {
                BinOp::Add => poly::add(ts, pa, pb),
                BinOp::Sub => poly::sub(ts, pa, pb),
                BinOp::Mul => poly::mul(ts, pa, pb),
                BinOp::Div => poly::div(ts, pa, pb),
            })
        }
        _ => unreachable!(),
    }
}

fn lane_of_value(v: &Value) -> Option<Lane> {
    match v {
        Value::R(p) => Some(p.lane),
        Value::C(p) => Some(p.re.lane),
        _ => None,
    }
}

fn cpoly_binary(ts: &crate::jets::TableSet, a: &CPoly, b: &CPoly, op: BinOp) -> CPoly {
    match op {
        BinOp::Add => CPoly {
            re: poly::add(ts, &a.re, &b.re),
            im: poly::add(ts, &a.im, &b.im),
        },
        BinOp::Sub => CPoly {
            re: poly::sub(ts, &a.re, &b.re),
            im: poly::sub(ts, &a.im, &b.im),
        },
        BinOp::Mul => {
            let rr = poly::mul(ts, &a.re, &b.re);
            let ii = poly::mul(ts, &a.im, &b.im);
            let ri = poly::mul(ts, &a.re, &b.im);
            let ir = poly::mul(ts, &a.im, &b.re);
            CPoly {
                re: poly::sub(ts, &rr, &ii),
                im: poly::add(ts, &ri, &ir),
            }
        }
        BinOp::Div => {
            // a / b = a·conj(b) / |b|²
            let den = {
                let rr = poly::mul(ts, &b.re, &b.re);
                let ii = poly::mul(ts, &b.im, &b.im);
                poly::add(ts, &rr, &ii)
            };
            let num = cpoly_binary(
                ts,
                a,
                &CPoly {
                    re: b.re.clone(),
                    im: poly::scale(&b.im, -1.0),
                },
                BinOp::Mul,
            );
            CPoly {
                re: poly::div(ts, &num.re, &den),
                im: poly::div(ts, &num.im, &den),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parser.
// ---------------------------------------------------------------------------

/// Parse the textual expression grammar: `+ - * / ^`, parentheses, function
/// calls, numeric literals, `pi`, and coordinate identifiers `z1, v1, x1,
/// y1, p1, q1, …` (1-based).
pub fn parse(src: &str) -> Result<Expr> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(Error::Parse {
            at: p.pos,
            msg: "unexpected trailing input".into(),
        });
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = acc.add(self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = acc.sub(self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = acc.mul(self.factor()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    acc = acc.div(self.factor()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(self.factor()?.neg());
        }
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let sign = if self.peek() == Some(b'-') {
                self.pos += 1;
                -1.0
            } else {
                1.0
            };
            let num = self.number()? * sign;
            if num.fract() == 0.0 && num.abs() <= 64.0 {
                return Ok(Expr::PowI(Box::new(base), num as i32));
            }
            return Ok(Expr::PowF(Box::new(base), num));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.bump() != Some(b')') {
                    return Err(Error::Parse {
                        at: self.pos,
                        msg: "expected ')'".into(),
                    });
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::Const(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            other => Err(Error::Parse {
                at: self.pos,
                msg: format!("unexpected input {:?}", other.map(|c| c as char)),
            }),
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < self.src.len() && (self.src[self.pos] | 32) == b'e' {
            self.pos += 1;
            if self.pos < self.src.len() && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
            {
                self.pos += 1;
            }
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(Error::Parse {
                at: start,
                msg: "invalid numeric literal".into(),
            })
    }

    fn ident(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if word == "pi" {
            return Ok(Expr::Const(std::f64::consts::PI));
        }
        const FUNCTIONS: [&str; 9] = [
            "exp", "log", "sin", "cos", "sqrt", "abs2", "conj", "re", "im",
        ];
        // Coordinate identifiers: letter + 1-based index.
        let (head, digits): (String, String) = word
            .chars()
            .partition(|c| c.is_ascii_alphabetic() || *c == '_');
        if !digits.is_empty() && !FUNCTIONS.contains(&word) {
            let idx: usize = digits.parse().map_err(|_| Error::Parse {
                at: start,
                msg: format!("bad coordinate index in '{word}'"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    at: start,
                    msg: "coordinate indices are 1-based".into(),
                });
            }
            let i = idx - 1;
            let e = match head.as_str() {
                "z" => Expr::Z(i),
                "v" => Expr::V(i),
                "x" => Expr::X(i),
                "y" => Expr::Y(i),
                "p" => Expr::P(i),
                "q" => Expr::Q(i),
                _ => {
                    return Err(Error::Parse {
                        at: start,
                        msg: format!("unknown identifier '{word}'"),
                    })
                }
            };
            return Ok(e);
        }
        // Function call.
        if self.bump() != Some(b'(') {
            return Err(Error::Parse {
                at: self.pos,
                msg: format!("expected '(' after function '{word}'"),
            });
        }
        let arg = self.expr()?;
        if self.bump() != Some(b')') {
            return Err(Error::Parse {
                at: self.pos,
                msg: "expected ')'".into(),
            });
        }
        let b = Box::new(arg);
        Ok(match word {
            "exp" => Expr::Exp(b),
            "log" => Expr::Log(b),
            "sin" => Expr::Sin(b),
            "cos" => Expr::Cos(b),
            "sqrt" => Expr::Sqrt(b),
            "abs2" => Expr::Abs2(b),
            "conj" => Expr::Conj(b),
            "re" => Expr::Re(b),
            "im" => Expr::Im(b),
            _ => {
                return Err(Error::Parse {
                    at: start,
                    msg: format!("unknown function '{word}'"),
                })
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::WirtingerIndex;
    use crate::jets::WirtingerJet;
    use approx::assert_relative_eq;

    fn zv(z: [(f64, f64); 2], v: [(f64, f64); 2]) -> (Vec<C64>, Vec<C64>) {
        (
            z.iter().map(|&(a, b)| C64::new(a, b)).collect(),
            v.iter().map(|&(a, b)| C64::new(a, b)).collect(),
        )
    }

    #[test]
    fn parse_and_eval_round_trip() {
        let e = parse("exp(0.1*sin(2*pi*x1)) * (abs2(v1) + abs2(v2))").unwrap();
        let (z, v) = zv([(0.25, 0.0), (0.0, 0.0)], [(1.0, 0.0), (0.0, 2.0)]);
        let got = eval_complex(&e, &z, &v, &[], None).unwrap();
        let expect = (0.1f64 * (2.0 * std::f64::consts::PI * 0.25).sin()).exp() * 5.0;
        assert_relative_eq!(got.re, expect, epsilon = 1e-14);
        assert_relative_eq!(got.im, 0.0);
    }

    #[test]
    fn parse_rejects_unknown_names() {
        assert!(parse("foo(x1)").is_err());
        assert!(parse("w3").is_err());
        assert!(parse("x1 +").is_err());
    }

    #[test]
    fn power_desugars_to_integer_multiplication() {
        let e = parse("abs2(v1)^2").unwrap();
        let (z, v) = zv([(0.0, 0.0), (0.0, 0.0)], [(1.0, 1.0), (0.0, 0.0)]);
        let got = eval_complex(&e, &z, &v, &[], None).unwrap();
        assert_relative_eq!(got.re, 4.0);
    }

    #[test]
    fn kind_inference() {
        assert_eq!(kind_of(&parse("abs2(v1)").unwrap()).unwrap(), Kind::Real);
        assert_eq!(kind_of(&parse("v1*conj(v2)").unwrap()).unwrap(), Kind::Complex);
        assert!(kind_of(&parse("exp(v1)").unwrap()).is_err());
    }

    #[test]
    fn jet_matches_plain_eval_and_first_derivative() {
        // The spec's worked first-derivative value: G = e^{0.1 sin(2π x1)}(|v1|²+|v2|²)
        // at x1 = 0, v = (1,0): ∂_{z1} G = 0.1·π.
        let e = parse("exp(0.1*sin(2*pi*x1)) * (abs2(v1) + abs2(v2))").unwrap();
        let ctx = JetContext::shared(2, 4);
        let ev = JetEvaluator::new(ctx.clone(), &e, vec![]).unwrap();
        let mut ws = ev.make_workspace();
        let (z, v) = zv([(0.0, 0.0), (0.0, 0.0)], [(1.0, 0.0), (0.0, 0.0)]);
        ev.eval(&mut ws, &z, &v, None).unwrap();
        let jet = WirtingerJet::from_real(&ctx, &ev.result_real(&ws));
        assert_relative_eq!(jet.value().re, 1.0, epsilon = 1e-14);
        let dz = jet.partial(&WirtingerIndex::new(2).z(0)).unwrap();
        assert_relative_eq!(dz.re, 0.1 * std::f64::consts::PI, epsilon = 1e-12);
        assert_relative_eq!(dz.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn division_singularity_names_subexpression() {
        let e = parse("abs2(v1)/x1").unwrap();
        let ctx = JetContext::shared(2, 2);
        let ev = JetEvaluator::new(ctx, &e, vec![]).unwrap();
        let mut ws = ev.make_workspace();
        let (z, v) = zv([(0.0, 0.0), (0.0, 0.0)], [(1.0, 0.0), (0.0, 0.0)]);
        let err = ev.eval(&mut ws, &z, &v, None).unwrap_err();
        match err {
            Error::Singularity { subexpr } => assert_eq!(subexpr, "x1"),
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn complex_division_in_jets_matches_plain() {
        let e = parse("v1/(v2 + z1)").unwrap();
        let ctx = JetContext::shared(2, 3);
        let ev = JetEvaluator::new(ctx.clone(), &e, vec![]).unwrap();
        let mut ws = ev.make_workspace();
        let (z, v) = zv([(0.3, -0.2), (0.0, 0.0)], [(1.0, 0.5), (0.7, 0.1)]);
        ev.eval(&mut ws, &z, &v, None).unwrap();
        let out = ev.result_complex(&ws);
        let got = C64::new(out.re.value(), out.im.value());
        let want = eval_complex(&e, &z, &v, &[], None).unwrap();
        assert_relative_eq!(got.re, want.re, epsilon = 1e-13);
        assert_relative_eq!(got.im, want.im, epsilon = 1e-13);
    }
}
