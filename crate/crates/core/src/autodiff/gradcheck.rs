use super::params::ParameterSet;
use super::tape::{Tape, Var};
use crate::error::{contract, precondition, Result};

/// Gradients below this magnitude are compared in absolute terms.
pub const ABS_FLOOR: f64 = 1e-4;

/// Compares analytic gradients against central differences
/// `(f(θ+h) − f(θ−h)) / 2h` over every scalar of `params`.
///
/// `loss` builds a scalar on the tape from the bound parameter vars. Returns
/// the largest `|analytic − numeric| / max(|analytic|, |numeric|, ABS_FLOOR)`.
pub fn finite_difference_check<F>(params: &ParameterSet, h: f64, mut loss: F) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(precondition(format!("finite-difference step must be positive, got {h}")));
    }
    let mut eval = |ps: &ParameterSet| -> Result<(f64, Tape, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let bound = ps.bind(&mut tape);
        let out = loss(&mut tape, &bound)?;
        if !tape.value(out).is_scalar() {
            return Err(contract("finite-difference target must be scalar"));
        }
        Ok((tape.value(out).data()[0], tape, bound, out))
    };

    let (_, mut tape, bound, out) = eval(params)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = bound
        .iter()
        .map(|&v| tape.grad(v).expect("leaf requires grad").data().to_vec())
        .collect();

    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (pi, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = probe.get(pi).value.data()[j];
            probe.get_mut(pi).value.data_mut()[j] = orig + h;
            let plus = eval(&probe)?.0;
            probe.get_mut(pi).value.data_mut()[j] = orig - h;
            let minus = eval(&probe)?.0;
            probe.get_mut(pi).value.data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(ABS_FLOOR);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn quadratic_is_exact() {
        let mut ps = ParameterSet::new();
        ps.push("a", Tensor::new(vec![3], vec![0.7, -1.3, 2.1]).unwrap());
        let err = finite_difference_check(&ps, 1e-5, |tape, vars| {
            let sq = tape.mul(vars[0], vars[0])?;
            let scaled = tape.scale(sq, 1.5);
            Ok(tape.sum(scaled))
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn zero_step_is_rejected() {
        let mut ps = ParameterSet::new();
        ps.push("a", Tensor::scalar(1.0));
        let r = finite_difference_check(&ps, 0.0, |tape, vars| Ok(tape.sum(vars[0])));
        assert!(r.is_err());
    }

    #[test]
    fn non_scalar_target_is_rejected() {
        let mut ps = ParameterSet::new();
        ps.push("a", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let r = finite_difference_check(&ps, 1e-5, |_, vars| Ok(vars[0]));
        assert!(r.is_err());
    }
}
