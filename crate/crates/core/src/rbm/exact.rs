//! Exhaustive-enumeration oracles for tiny models. These go through the
//! energy function only, never through the conditionals, so tests can use
//! them to check the sampling and training code independently.

use ndarray::{Array1, Array2, ArrayView2};

use super::{Gradient, Rbm, RbmError, Result, VisibleKind};

/// Largest number of enumerated binary units.
pub const ENUMERATION_LIMIT: usize = 20;

/// Binary vector whose component `i` is bit `i` of `index`.
pub fn binary_config(index: usize, len: usize) -> Array1<f64> {
    Array1::from_shape_fn(len, |i| ((index >> i) & 1) as f64)
}

fn check_budget(units: usize) -> Result<()> {
    if units > ENUMERATION_LIMIT {
        return Err(RbmError::TooLarge {
            units,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Partition function `Z`. Bernoulli models enumerate every `(v, h)`;
/// Gaussian models enumerate `h` and integrate `v` in closed form:
/// `Z = (2π)^{m/2} Σ_h exp(cᵀh + ½|b + Wh|² − ½|b|²)`.
pub fn exact_partition(rbm: &Rbm) -> Result<f64> {
    let (m, n) = (rbm.visible_units(), rbm.hidden_units());
    match rbm.visible_kind() {
        VisibleKind::Bernoulli => {
            check_budget(m + n)?;
            let mut z = 0.0;
            for vi in 0..1usize << m {
                let v = binary_config(vi, m);
                for hi in 0..1usize << n {
                    let h = binary_config(hi, n);
                    z += (-rbm.energy(v.view(), h.view())?).exp();
                }
            }
            Ok(z)
        }
        VisibleKind::Gaussian => {
            check_budget(n)?;
            let b = rbm.visible_bias();
            let bb = b.dot(b);
            let mut sum = 0.0;
            for hi in 0..1usize << n {
                let h = binary_config(hi, n);
                let a = b + &rbm.weights().dot(&h);
                sum += (rbm.hidden_bias().dot(&h) + 0.5 * a.dot(&a) - 0.5 * bb).exp();
            }
            Ok((2.0 * std::f64::consts::PI).powf(m as f64 / 2.0) * sum)
        }
    }
}

fn require_bernoulli(rbm: &Rbm) -> Result<()> {
    check_budget(rbm.visible_units() + rbm.hidden_units())?;
    if rbm.visible_kind() != VisibleKind::Bernoulli {
        return Err(RbmError::InvalidConfig(
            "enumeration over visible states needs Bernoulli visible units".into(),
        ));
    }
    Ok(())
}

/// Joint probabilities `p(v, h)`, indexed `[v_index][h_index]`.
pub fn joint_table(rbm: &Rbm) -> Result<Array2<f64>> {
    require_bernoulli(rbm)?;
    let (m, n) = (rbm.visible_units(), rbm.hidden_units());
    let z = exact_partition(rbm)?;
    let mut table = Array2::zeros((1 << m, 1 << n));
    for vi in 0..1usize << m {
        let v = binary_config(vi, m);
        for hi in 0..1usize << n {
            let h = binary_config(hi, n);
            table[[vi, hi]] = (-rbm.energy(v.view(), h.view())?).exp() / z;
        }
    }
    Ok(table)
}

/// Marginal `p(v)` indexed by the visible configuration number.
pub fn visible_marginal(rbm: &Rbm) -> Result<Vec<f64>> {
    Ok(joint_table(rbm)?
        .rows()
        .into_iter()
        .map(|r| r.sum())
        .collect())
}

/// Exact gradient of the mean log-likelihood of binary `data` with respect to
/// `(W, b, c)`: data expectations minus model expectations, both computed by
/// enumeration.
pub fn log_likelihood_gradient(rbm: &Rbm, data: ArrayView2<f64>) -> Result<Gradient> {
    require_bernoulli(rbm)?;
    let (m, n) = (rbm.visible_units(), rbm.hidden_units());
    let hidden: Vec<Array1<f64>> = (0..1usize << n).map(|i| binary_config(i, n)).collect();

    // Positive phase: E[h | v] by enumerating h for each data vector.
    let mut weights = Array2::<f64>::zeros((m, n));
    let mut visible_bias = Array1::<f64>::zeros(m);
    let mut hidden_bias = Array1::<f64>::zeros(n);
    for v in data.rows() {
        let mut norm = 0.0;
        let mut eh = Array1::<f64>::zeros(n);
        for h in &hidden {
            let w = (-rbm.energy(v, h.view())?).exp();
            norm += w;
            eh.scaled_add(w, h);
        }
        eh /= norm;
        for i in 0..m {
            for j in 0..n {
                weights[[i, j]] += v[i] * eh[j];
            }
        }
        visible_bias += &v;
        hidden_bias += &eh;
    }
    let count = data.nrows() as f64;
    weights /= count;
    visible_bias /= count;
    hidden_bias /= count;
    let hidden_mean = hidden_bias.clone();

    // Negative phase over the full joint.
    let joint = joint_table(rbm)?;
    for vi in 0..1usize << m {
        let v = binary_config(vi, m);
        for (hi, h) in hidden.iter().enumerate() {
            let p = joint[[vi, hi]];
            for i in 0..m {
                for j in 0..n {
                    weights[[i, j]] -= p * v[i] * h[j];
                }
            }
            visible_bias.scaled_add(-p, &v);
            hidden_bias.scaled_add(-p, h);
        }
    }
    Ok(Gradient {
        weights,
        visible_bias,
        hidden_bias,
        hidden_mean,
    })
}
