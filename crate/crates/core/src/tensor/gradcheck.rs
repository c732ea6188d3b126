//! Central-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Debug)]
pub struct FdOptions {
    /// Central-difference step, within `[1e-6, 1e-4]`.
    pub h: f64,
    pub tol: f64,
    /// Check a seeded random subset of this many elements per input instead
    /// of every element.
    pub max_elements_per_input: Option<usize>,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            max_elements_per_input: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FdReport {
    pub max_rel_err: f64,
    /// (input index, element index) of the largest error.
    pub worst: Option<(usize, usize)>,
    pub per_input: Vec<f64>,
    pub elements_checked: usize,
    pub tol: f64,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

fn evaluate<F>(f: &F, inputs: &[Tensor], grad: bool) -> Result<(Graph, Vec<Var>, Var)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = if grad { Graph::new() } else { Graph::inference() };
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let root = f(&mut g, &vars)?;
    let v = g.value(root);
    if v.len() != 1 {
        return Err(Error::config(format!(
            "gradient check needs a scalar function, got shape {:?}",
            v.shape()
        )));
    }
    if !v.item().is_finite() {
        return Err(Error::Numeric(format!(
            "function value {} is not finite",
            v.item()
        )));
    }
    Ok((g, vars, root))
}

/// Compares the tape gradient of scalar `f` with respect to every input
/// against central differences.
pub fn finite_diff_check<F>(f: F, inputs: &[Tensor], opts: &FdOptions) -> Result<FdReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(1e-6..=1e-4).contains(&opts.h) {
        return Err(Error::Usage(format!(
            "finite-difference step {} outside [1e-6, 1e-4]",
            opts.h
        )));
    }
    let (g, vars, root) = evaluate(&f, inputs, true)?;
    let grads = g.backward(root)?;
    let tape: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get_or_zeros(v, t))
        .collect();
    drop(g);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut report = FdReport {
        max_rel_err: 0.0,
        worst: None,
        per_input: vec![0.0; inputs.len()],
        elements_checked: 0,
        tol: opts.tol,
    };
    for (i, input) in inputs.iter().enumerate() {
        let elems: Vec<usize> = match opts.max_elements_per_input {
            Some(k) if k < input.len() => {
                let mut v = sample(&mut rng, input.len(), k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..input.len()).collect(),
        };
        for e in elems {
            let x0 = input.data()[e];
            work[i].data_mut()[e] = x0 + opts.h;
            let (gp, _, rp) = evaluate(&f, &work, false)?;
            let fp = gp.value(rp).item();
            work[i].data_mut()[e] = x0 - opts.h;
            let (gm, _, rm) = evaluate(&f, &work, false)?;
            let fm = gm.value(rm).item();
            work[i].data_mut()[e] = x0;

            let numeric = (fp - fm) / (2.0 * opts.h);
            let err = rel_err(numeric, tape[i].data()[e]);
            report.elements_checked += 1;
            report.per_input[i] = report.per_input[i].max(err);
            if report.worst.is_none() || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((i, e));
            }
        }
    }
    Ok(report)
}
