use super::{Grads, NumArray, ParamId, ParamSet, Real, Rng};
use crate::error::{arg_err, Error, Result};

/// Largest relative error between analytic gradients and central differences,
/// `|a - fd| / max(|a|, |fd|, 1e-12)`, over up to `coords_per_param` sampled
/// coordinates of every parameter tensor.
///
/// The loss must be a pure function of the parameters (any noise frozen); this is
/// checked by evaluating it twice at the base point.
pub fn grad_check<T, F>(
    params: &ParamSet<T>,
    loss: F,
    eps: f64,
    coords_per_param: usize,
    rng: &mut Rng,
) -> Result<f64>
where
    T: Real,
    F: Fn(&ParamSet<T>) -> Result<(T, Grads<T>)>,
{
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(arg_err!("grad_check eps {eps} outside [1e-6, 1e-3]"));
    }
    let (base, grads) = loss(params)?;
    let (again, _) = loss(params)?;
    if !same_value(base, again) {
        return Err(Error::Contract(format!(
            "loss is not deterministic: {base} then {again}"
        )));
    }

    let mut work = params.clone();
    let mut worst = 0.0f64;
    for id in params.ids() {
        let n = params.get(id).len();
        let coords: Vec<usize> = if n <= coords_per_param {
            (0..n).collect()
        } else {
            (0..coords_per_param).map(|_| rng.below(n)).collect()
        };
        for k in coords {
            let analytic = analytic_at(&grads, id, k);
            let fd = central_difference(&mut work, id, k, eps, &loss)?;
            let denom = analytic.abs().max(fd.abs()).max(1e-12);
            let rel = (analytic - fd).abs() / denom;
            if rel > worst {
                log::debug!(
                    "grad_check {}[{k}]: analytic {analytic:e} fd {fd:e} rel {rel:e}",
                    params.name(id)
                );
            }
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn analytic_at<T: Real>(grads: &Grads<T>, id: ParamId, k: usize) -> f64 {
    grads.get(id).map_or(0.0, |g: &NumArray<T>| g.data()[k].f())
}

fn central_difference<T, F>(
    work: &mut ParamSet<T>,
    id: ParamId,
    k: usize,
    eps: f64,
    loss: &F,
) -> Result<f64>
where
    T: Real,
    F: Fn(&ParamSet<T>) -> Result<(T, Grads<T>)>,
{
    let orig = work.get(id).data()[k];
    work.get_mut(id).data_mut()[k] = T::c(orig.f() + eps);
    let plus = loss(work)?.0.f();
    work.get_mut(id).data_mut()[k] = T::c(orig.f() - eps);
    let minus = loss(work)?.0.f();
    work.get_mut(id).data_mut()[k] = orig;
    Ok((plus - minus) / (2.0 * eps))
}

fn same_value<T: Real>(a: T, b: T) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Graph;

    #[test]
    fn quadratic_is_exact() {
        let mut rng = Rng::new(8);
        let mut ps = ParamSet::<f64>::new();
        ps.add("p", NumArray::from_fn(&[7], |_| rng.uniform_range(-2.0, 2.0)));
        let err = grad_check(
            &ps,
            |ps| {
                let mut g = Graph::new(ps);
                let p = g.param(ParamId(0));
                let sq = g.square(p);
                let s = g.sum(sq);
                let half = g.scale(s, 0.5);
                Ok((g.value(half).item(), g.backward(half)))
            },
            1e-5,
            10,
            &mut rng,
        )
        .unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn nondeterministic_loss_is_rejected() {
        let ps = {
            let mut ps = ParamSet::<f64>::new();
            ps.add("p", NumArray::full(&[1], 1.0));
            ps
        };
        let counter = std::cell::Cell::new(0.0);
        let res = grad_check(
            &ps,
            |ps| {
                counter.set(counter.get() + 1.0);
                let mut g = Graph::new(ps);
                let p = g.param(ParamId(0));
                let s = g.sum(p);
                let grads = g.backward(s);
                Ok((g.value(s).item() + counter.get(), grads))
            },
            1e-5,
            1,
            &mut Rng::new(0),
        );
        assert!(matches!(res, Err(Error::Contract(_))));
    }

    #[test]
    fn eps_out_of_range_is_rejected() {
        let ps = ParamSet::<f64>::new();
        let res = grad_check(&ps, |_| unreachable!(), 0.1, 1, &mut Rng::new(0));
        assert!(res.is_err());
    }
}
