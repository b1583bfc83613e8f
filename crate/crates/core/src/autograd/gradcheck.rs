//! Central-difference validation of analytic gradients.
//!
//! The error reported is `max |analytic − numeric| / max(1, |analytic|)`
//! over every scalar input. Non-scalar outputs are reduced with a fixed
//! pseudo-random projection so that every output element contributes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, Error, Result};
use crate::tensor::Tensor;

use super::params::{Graph, ParamId, ParamStore};
use super::tape::{Tape, Var};

fn projection(shape: &[usize]) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
    Tensor::uniform(shape, 1.0, &mut rng)
}

fn scalarize(tape: &mut Tape, out: Var) -> Result<Var> {
    if tape.value(out).numel() == 1 {
        Ok(out)
    } else {
        let w = projection(tape.value(out).shape());
        tape.sum_product(out, w)
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(config_err!("grad_check epsilon {epsilon} outside [1e-7, 1e-3]"));
    }
    Ok(())
}

fn relative_error(analytic: f64, numeric: f64) -> Result<f64> {
    if !analytic.is_finite() || !numeric.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite gradient during check (analytic {analytic}, numeric {numeric})"
        )));
    }
    Ok((analytic - numeric).abs() / analytic.abs().max(1.0))
}

/// Checks `op` with respect to every element of every input.
pub fn grad_check<F>(op: F, inputs: &[Tensor], epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    check_epsilon(epsilon)?;
    for t in inputs {
        t.ensure_finite("grad_check input")?;
    }
    let eval = |inputs: &[Tensor], track: bool| -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars = inputs
            .iter()
            .map(|t| tape.leaf(t.clone(), track))
            .collect::<Result<Vec<_>>>()?;
        let out = op(&mut tape, &vars)?;
        let root = scalarize(&mut tape, out)?;
        Ok((tape, vars, root))
    };
    let (tape, vars, root) = eval(inputs, true)?;
    let grads = tape.backward(root)?;

    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let zeros = vec![0.0; inputs[k].numel()];
        let analytic = grads.get(*var).unwrap_or(&zeros).to_vec();
        for i in 0..inputs[k].numel() {
            let orig = inputs[k].data()[i];
            probe[k].data_mut()[i] = orig + epsilon;
            let (t1, _, r1) = eval(&probe, false)?;
            probe[k].data_mut()[i] = orig - epsilon;
            let (t2, _, r2) = eval(&probe, false)?;
            probe[k].data_mut()[i] = orig;
            let numeric = (t1.value(r1).item() - t2.value(r2).item()) / (2.0 * epsilon);
            worst = worst.max(relative_error(analytic[i], numeric)?);
        }
    }
    Ok(worst)
}

/// Checks a parameterised computation with respect to the given parameters
/// (all parameters when `ids` is `None`).
pub fn grad_check_params<F>(
    store: &ParamStore,
    ids: Option<&[ParamId]>,
    op: F,
    epsilon: f64,
) -> Result<f64>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    check_epsilon(epsilon)?;
    let all: Vec<ParamId> = store.ids().collect();
    let ids = ids.unwrap_or(&all);

    let eval = |store: &ParamStore, track: bool| -> Result<f64> {
        let mut g = Graph::new(store, track);
        let out = op(&mut g)?;
        let root = scalarize(&mut g.tape, out)?;
        Ok(g.tape.value(root).item())
    };

    let mut g = Graph::new(store, true);
    let out = op(&mut g)?;
    let root = scalarize(&mut g.tape, out)?;
    let grads = g.tape.backward(root)?;

    let mut probe = store.clone();
    let mut worst: f64 = 0.0;
    for &id in ids {
        let n = store.get(id).tensor.numel();
        let zeros = vec![0.0; n];
        let analytic = g.param_grad(&grads, id).unwrap_or(&zeros).to_vec();
        for i in 0..n {
            let orig = store.get(id).tensor.data()[i];
            probe.tensor_mut(id).data_mut()[i] = orig + epsilon;
            let up = eval(&probe, false)?;
            probe.tensor_mut(id).data_mut()[i] = orig - epsilon;
            let down = eval(&probe, false)?;
            probe.tensor_mut(id).data_mut()[i] = orig;
            worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * epsilon))?);
        }
    }
    Ok(worst)
}
