//! Plant models: dynamics `x_{t+1} = f(x_t, u_t, w_t)`, output
//! `y_t = h(x_t, v_t)`, axis-aligned domain boxes, and trajectory rollout.

use alloc::vec;
use alloc::vec::Vec;

use crate::dual::Real;
use crate::rng::Rng;

/// State, output, input, and process-noise dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub nw: usize,
}

/// The plant maps, generic over the scalar so the same code is evaluated in
/// `f64` and differentiated with duals.
pub trait Plant {
    fn dims(&self) -> Dims;
    fn f<T: Real>(&self, x: &[T], u: &[T], w: &[T], out: &mut [T]);
    fn h<T: Real>(&self, x: &[T], v: &[T], out: &mut [T]);
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelError {
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    BadBox {
        index: usize,
    },
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected dimension {expected}, got {got}"),
            ModelError::BadBox { index } => {
                write!(f, "box lower bound exceeds upper bound at component {index}")
            }
        }
    }
}

/// Axis-aligned box; entries may be infinite.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, ModelError> {
        if lo.len() != hi.len() {
            return Err(ModelError::DimensionMismatch {
                what: "box bounds",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (i, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if l > h {
                return Err(ModelError::BadBox { index: i });
            }
        }
        Ok(AxisBox { lo, hi })
    }

    pub fn unbounded(dim: usize) -> Self {
        AxisBox {
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        AxisBox {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.iter().all(|l| l.is_finite()) && self.hi.iter().all(|h| h.is_finite())
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&l, &h))| v >= l && v <= h)
    }

    /// Clamp `z` into the box componentwise.
    pub fn project(&self, z: &mut [f64]) {
        for (v, (&l, &h)) in z.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            if *v < l {
                *v = l;
            } else if *v > h {
                *v = h;
            }
        }
    }

    /// Uniform sample; unbounded components fall back to `center ± radius`.
    pub fn sample_around(&self, center: &[f64], radius: f64, rng: &mut Rng) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let (lo, hi) = if self.lo[i].is_finite() && self.hi[i].is_finite() {
                (self.lo[i], self.hi[i])
            } else {
                let c = center.get(i).copied().unwrap_or(0.0);
                (
                    if self.lo[i].is_finite() { self.lo[i].max(c - radius) } else { c - radius },
                    if self.hi[i].is_finite() { self.hi[i].min(c + radius) } else { c + radius },
                )
            };
            out.push(rng.next_uniform(lo, hi));
        }
        out
    }

    /// Concatenation of boxes, e.g. the decision-space box `X × W^M × V^M`.
    pub fn product(parts: &[(&AxisBox, usize)]) -> AxisBox {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for &(b, reps) in parts {
            for _ in 0..reps {
                lo.extend_from_slice(&b.lo);
                hi.extend_from_slice(&b.hi);
            }
        }
        AxisBox { lo, hi }
    }
}

/// A plant together with its domain boxes.
#[derive(Clone, Debug)]
pub struct SystemModel<P: Plant> {
    pub plant: P,
    pub x_box: AxisBox,
    pub w_box: AxisBox,
    pub v_box: AxisBox,
    pub u_box: AxisBox,
}

impl<P: Plant> SystemModel<P> {
    /// Model with all domains unbounded.
    pub fn unconstrained(plant: P) -> Self {
        let d = plant.dims();
        SystemModel {
            x_box: AxisBox::unbounded(d.n),
            w_box: AxisBox::unbounded(d.nw),
            v_box: AxisBox::unbounded(d.m),
            u_box: AxisBox::unbounded(d.p),
            plant,
        }
    }

    pub fn dims(&self) -> Dims {
        self.plant.dims()
    }

    fn check_dim(&self, what: &'static str, expected: usize, got: usize) -> Result<(), ModelError> {
        if expected != got {
            Err(ModelError::DimensionMismatch {
                what,
                expected,
                got,
            })
        } else {
            Ok(())
        }
    }

    /// One step of the dynamics.
    pub fn step(&self, x: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>, ModelError> {
        let d = self.dims();
        self.check_dim("state", d.n, x.len())?;
        self.check_dim("input", d.p, u.len())?;
        self.check_dim("process noise", d.nw, w.len())?;
        let mut out = vec![0.0; d.n];
        self.plant.f(x, u, w, &mut out);
        Ok(out)
    }

    pub fn output(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>, ModelError> {
        let d = self.dims();
        self.check_dim("state", d.n, x.len())?;
        self.check_dim("measurement noise", d.m, v.len())?;
        let mut out = vec![0.0; d.m];
        self.plant.h(x, v, &mut out);
        Ok(out)
    }

    /// Roll the model forward `t_max` steps. `inputs`, `w`, and `v` must hold
    /// at least `t_max` entries each; outputs are produced for
    /// `t = 0..t_max-1` (the horizon-end output is never consumed by a
    /// window).
    pub fn simulate(
        &self,
        x0: &[f64],
        inputs: &[Vec<f64>],
        w: &[Vec<f64>],
        v: &[Vec<f64>],
        t_max: usize,
    ) -> Result<Trajectory, ModelError> {
        let d = self.dims();
        self.check_dim("initial state", d.n, x0.len())?;
        if inputs.len() < t_max || w.len() < t_max || v.len() < t_max {
            return Err(ModelError::DimensionMismatch {
                what: "noise/input sequence length",
                expected: t_max,
                got: inputs.len().min(w.len()).min(v.len()),
            });
        }
        let mut states = Vec::with_capacity(t_max + 1);
        let mut outputs = Vec::with_capacity(t_max);
        states.push(x0.to_vec());
        for t in 0..t_max {
            outputs.push(self.output(&states[t], &v[t])?);
            let next = self.step(&states[t], &inputs[t], &w[t])?;
            states.push(next);
        }
        Ok(Trajectory {
            states,
            outputs,
            inputs: inputs[..t_max].to_vec(),
            w: w[..t_max].to_vec(),
            v: v[..t_max].to_vec(),
        })
    }
}

/// A simulated rollout: `t_max + 1` states, `t_max` outputs/inputs/noises.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn t_max(&self) -> usize {
        self.states.len() - 1
    }
}
