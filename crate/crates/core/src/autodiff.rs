//! Reverse-mode automatic differentiation and the scalar abstraction that
//! lets the geometry pipeline run on plain `f64` or on tape variables.
//!
//! The tape is a Wengert list with precomputed local partials: every
//! recorded node stores up to two parent indices and the corresponding
//! d(node)/d(parent) weights, so the backward sweep is a single reverse loop
//! with no op dispatch. Constants never touch the tape — a [`Var`] without a
//! tape reference is a plain number, which keeps voxels outside the computed
//! region (exact zeros) free of graph nodes.
//!
//! Discrete choices made by the pipeline (nearest-segment selection, the
//! inside/outside bit, active radius clamps) are taken on primal values via
//! [`Real::value`] and held fixed by the gradient; that is the subgradient
//! convention the finite-difference checker below is calibrated against.

use crate::error::Error;
use crate::fit::{GenericParams, VesselParams};
use crate::Result;
use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar that the whole forward pipeline is generic over.
///
/// Implemented by `f64` (plain evaluation) and by [`Var`] (taped evaluation).
/// Branching code must decide on [`Real::value`] so both instantiations take
/// identical paths.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Primal value, for branching and diagnostics.
    fn value(self) -> f64;
    /// Lift a constant. Never allocates a tape node.
    fn constant(c: f64) -> Self;
    fn sqrt(self) -> Self;
    /// Numerically stable logistic function.
    fn sigmoid(self) -> Self;
    /// `max(self, c)` where an active clamp cuts the gradient to zero.
    fn clamp_min(self, c: f64) -> Self;
    fn zero() -> Self {
        Self::constant(0.0)
    }
}

pub fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Real for f64 {
    fn value(self) -> f64 {
        self
    }
    fn constant(c: f64) -> Self {
        c
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sigmoid(self) -> Self {
        sigmoid_f64(self)
    }
    fn clamp_min(self, c: f64) -> Self {
        if self < c {
            c
        } else {
            self
        }
    }
}

/// One recorded operation: up to two parents with precomputed partials.
#[derive(Clone, Copy)]
struct Node {
    w: [f64; 2],
    p: [u32; 2],
}

/// Gradient tape. Cleared and refilled every optimizer iteration.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        // Node 0 is a sink for absent parents so backward needs no branching.
        let tape = Tape {
            nodes: RefCell::new(Vec::new()),
        };
        tape.nodes.borrow_mut().push(Node {
            w: [0.0, 0.0],
            p: [0, 0],
        });
        tape
    }

    /// Drop all recorded nodes but keep the allocation.
    pub fn clear(&self) {
        let mut nodes = self.nodes.borrow_mut();
        nodes.truncate(1);
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 1
    }

    fn push(&self, w: [f64; 2], p: [u32; 2]) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        nodes.push(Node { w, p });
        idx
    }

    /// New independent variable.
    pub fn leaf(&self, val: f64) -> Var<'_> {
        let idx = self.push([0.0, 0.0], [0, 0]);
        Var {
            tape: Some(self),
            idx,
            val,
        }
    }

    /// Reverse sweep from `out`. Adjoints of all nodes, 1.0 seeded at `out`.
    ///
    /// If `out` is a constant (never touched the tape) every adjoint is zero.
    pub fn backward(&self, out: Var<'_>) -> Adjoints {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0f64; nodes.len()];
        let Some(seed) = out.tape_index() else {
            return Adjoints(adj);
        };
        adj[seed as usize] = 1.0;
        for i in (1..nodes.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = nodes[i];
            adj[n.p[0] as usize] += a * n.w[0];
            adj[n.p[1] as usize] += a * n.w[1];
        }
        Adjoints(adj)
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Result of a backward sweep; query with the variables you kept around.
pub struct Adjoints(Vec<f64>);

impl Adjoints {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        match v.tape_index() {
            Some(i) => self.0[i as usize],
            None => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }
}

/// Taped scalar. `Copy`, so geometry code can treat it exactly like `f64`.
///
/// A `Var` without a tape reference is a constant; arithmetic between
/// constants stays off the tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.val)
    }
}

impl<'t> Var<'t> {
    fn tape_index(self) -> Option<u32> {
        self.tape.map(|_| self.idx)
    }

    fn unary(self, val: f64, dv: f64) -> Var<'t> {
        match self.tape {
            Some(t) => {
                let idx = t.push([dv, 0.0], [self.idx, 0]);
                Var {
                    tape: Some(t),
                    idx,
                    val,
                }
            }
            None => Var {
                tape: None,
                idx: 0,
                val,
            },
        }
    }

    fn binary(self, rhs: Var<'t>, val: f64, da: f64, db: f64) -> Var<'t> {
        match (self.tape, rhs.tape) {
            (Some(t), Some(t2)) => {
                debug_assert!(std::ptr::eq(t, t2), "variables from different tapes");
                let idx = t.push([da, db], [self.idx, rhs.idx]);
                Var {
                    tape: Some(t),
                    idx,
                    val,
                }
            }
            (Some(_), None) => self.unary(val, da),
            (None, Some(_)) => rhs.unary(val, db),
            (None, None) => Var {
                tape: None,
                idx: 0,
                val,
            },
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let inv = 1.0 / rhs.val;
        self.binary(rhs, self.val * inv, inv, -self.val * inv * inv)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.unary(self.val + c, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.unary(self.val - c, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.unary(self.val * c, c)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        self.unary(self.val / c, 1.0 / c)
    }
}

impl<'t> Real for Var<'t> {
    fn value(self) -> f64 {
        self.val
    }

    fn constant(c: f64) -> Self {
        Var {
            tape: None,
            idx: 0,
            val: c,
        }
    }

    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        // Subgradient 0 at the origin keeps zero-length differences from
        // poisoning the backward pass with infinities.
        let dv = if r > 0.0 { 0.5 / r } else { 0.0 };
        self.unary(r, dv)
    }

    fn sigmoid(self) -> Self {
        let s = sigmoid_f64(self.val);
        self.unary(s, s * (1.0 - s))
    }

    fn clamp_min(self, c: f64) -> Self {
        if self.val < c {
            Var::constant(c)
        } else {
            self
        }
    }
}

/// Loss evaluated generically so the taped and plain paths cannot drift apart.
pub trait ParamLoss {
    fn eval<T: Real>(&self, params: &GenericParams<T>) -> Result<T>;
}

/// Gradient of a scalar loss with respect to every parameter entry.
///
/// Shapes mirror [`VesselParams`]: one 3-vector per centerline control point,
/// one scalar per radius control point, one row of `P` values per adjustment
/// control point.
#[derive(Debug, Clone)]
pub struct ParamGradient {
    pub centerline: Vec<[f64; 3]>,
    pub radius: Vec<f64>,
    pub adjustments: Vec<Vec<f64>>,
}

impl ParamGradient {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for c in &self.centerline {
            out.extend_from_slice(c);
        }
        out.extend_from_slice(&self.radius);
        for row in &self.adjustments {
            out.extend_from_slice(row);
        }
        out
    }

    pub fn from_flat(shape: &VesselParams, flat: &[f64]) -> Self {
        let nc = shape.centerline_cp.len();
        let nr = shape.radius_cp.len();
        let p = shape.p;
        let mut it = flat.iter().copied();
        let centerline = (0..nc)
            .map(|_| {
                let x = it.next().unwrap();
                let y = it.next().unwrap();
                let z = it.next().unwrap();
                [x, y, z]
            })
            .collect();
        let radius = (0..nr).map(|_| it.next().unwrap()).collect();
        let adjustments = (0..shape.adjustment_cp.len())
            .map(|_| (0..p).map(|_| it.next().unwrap()).collect())
            .collect();
        assert!(it.next().is_none(), "flat gradient length mismatch");
        ParamGradient {
            centerline,
            radius,
            adjustments,
        }
    }
}

/// Evaluate `loss` on a fresh tape and return `(value, gradient)`.
///
/// Single-threaded and bitwise deterministic: identical inputs produce
/// identical gradients.
pub fn gradient<L: ParamLoss>(params: &VesselParams, loss: &L) -> Result<(f64, ParamGradient)> {
    let tape = Tape::new();
    let lifted = params.lift(&tape);
    let out = loss.eval(&lifted)?;
    if !out.value().is_finite() {
        return Err(Error::NumericFailure {
            stage: "forward",
            detail: format!("loss value {} is not finite", out.value()),
        });
    }
    let adj = tape.backward(out);
    let mut flat = Vec::with_capacity(params.dof());
    lifted.for_each_leaf(|v| flat.push(adj.wrt(v)));
    if let Some(bad) = flat.iter().position(|g| !g.is_finite()) {
        return Err(Error::NumericFailure {
            stage: "backward",
            detail: format!(
                "gradient entry {} ({}) is not finite",
                bad,
                params.coord_label(bad)
            ),
        });
    }
    Ok((out.value(), ParamGradient::from_flat(params, &flat)))
}

/// Verdict for one coordinate of a finite-difference comparison.
#[derive(Debug, Clone)]
pub struct FdCoord {
    pub index: usize,
    pub label: String,
    pub analytic: f64,
    pub fd: f64,
    pub error: f64,
}

/// Outcome of [`finite_difference_check`].
///
/// `flagged` holds coordinates that failed at step `h` but behaved like a
/// nearest-element switch: shrinking the step to `h/4` either brought them
/// within tolerance or cut the error consistently. They are not failures.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub n_coords: usize,
    pub n_pass: usize,
    pub flagged: Vec<FdCoord>,
    pub failures: Vec<FdCoord>,
    pub max_rel_error: f64,
}

impl FdReport {
    /// Fraction of coordinates that are either within tolerance or flagged.
    pub fn pass_fraction(&self) -> f64 {
        (self.n_coords - self.failures.len()) as f64 / self.n_coords.max(1) as f64
    }
}

fn within(err: f64, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> bool {
    err <= abs_tol || err <= rel_tol * a.abs().max(b.abs())
}

/// Central finite differences of `loss` against the analytic gradient.
pub fn finite_difference_check<L: ParamLoss>(
    params: &VesselParams,
    loss: &L,
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<FdReport> {
    if h <= 0.0 {
        return Err(Error::InvalidArgument(format!("step h={h} must be > 0")));
    }
    let (_, grad) = gradient(params, loss)?;
    let analytic = grad.flat();
    let base = params.flatten();

    let eval_at = |flat: &[f64]| -> Result<f64> {
        let p = params.with_flat(flat);
        loss.eval(&p.as_generic())
    };
    let central = |i: usize, step: f64| -> Result<f64> {
        let mut fwd = base.clone();
        fwd[i] += step;
        let mut bwd = base.clone();
        bwd[i] -= step;
        Ok((eval_at(&fwd)? - eval_at(&bwd)?) / (2.0 * step))
    };

    let mut report = FdReport {
        n_coords: base.len(),
        n_pass: 0,
        flagged: Vec::new(),
        failures: Vec::new(),
        max_rel_error: 0.0,
    };
    for i in 0..base.len() {
        let g = analytic[i];
        let fd = central(i, h)?;
        let err = (fd - g).abs();
        let rel = err / g.abs().max(fd.abs()).max(1e-12);
        report.max_rel_error = report.max_rel_error.max(rel);
        if within(err, g, fd, rel_tol, abs_tol) {
            report.n_pass += 1;
            continue;
        }
        // Failure at h: re-check at h/4. A discrete switch inside the bracket
        // shows up as an error that collapses (or at least shrinks
        // sign-consistently) when the bracket shrinks.
        let fd4 = central(i, h / 4.0)?;
        let err4 = (fd4 - g).abs();
        let coord = FdCoord {
            index: i,
            label: params.coord_label(i),
            analytic: g,
            fd,
            error: err,
        };
        if within(err4, g, fd4, rel_tol, abs_tol) || err4 <= 0.5 * err {
            report.flagged.push(coord);
        } else {
            report.failures.push(coord);
        }
    }
    Ok(report)
}
