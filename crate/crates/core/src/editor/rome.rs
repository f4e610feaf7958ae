use crate::editor::{compute_delta, estimate_key, DeltaOutcome, EditPlan, FactRecord, WeightDelta};
use crate::error::{Error, Result};
use crate::model::{ModelBundle, Vocab};
use crate::numerics::{dot, solve_spd, Tensor};

/// Rank-one update of a value projection `W` (`d_ffn × d_model`, values read
/// as `v = Wᵀk`) so that `k_star` maps exactly to `v_star`:
///
/// `W' = W + (C⁻¹k*)(v* − Wᵀk*)ᵀ / (k*ᵀC⁻¹k*)`
pub fn apply_rome(w: &Tensor, k_star: &[f64], v_star: &[f64], covariance: &Tensor) -> Result<Tensor> {
    let (f, d) = (w.rows(), w.cols());
    if k_star.len() != f || v_star.len() != d || covariance.shape() != [f, f] {
        return Err(Error::DimensionMismatch(format!(
            "W {:?}, key {}, value {}, covariance {:?}",
            w.shape(),
            k_star.len(),
            v_star.len(),
            covariance.shape()
        )));
    }
    let c_inv_k = solve_spd(covariance, &Tensor::vector(k_star.to_vec()))?.into_data();
    let denom = dot(k_star, &c_inv_k);
    if !(denom > 1e-12) {
        return Err(Error::DegenerateKey(denom));
    }
    let current = Tensor::matrix(1, f, k_star.to_vec())?.matmul(w)?.into_data();
    let resid: Vec<f64> = v_star.iter().zip(&current).map(|(v, c)| (v - c) / denom).collect();
    let mut out = w.clone();
    for i in 0..f {
        let u = c_inv_k[i];
        for (o, r) in out.row_mut(i).iter_mut().zip(&resid) {
            *o += u * r;
        }
    }
    Ok(out)
}

/// Single-record, single-layer edit at `plan.layer`.
pub fn edit_rome(
    model: &ModelBundle,
    vocab: &Vocab,
    record: &FactRecord,
    plan: &EditPlan,
    covariance: &Tensor,
    master_seed: u64,
) -> Result<(WeightDelta, DeltaOutcome)> {
    let outcome = compute_delta(model, vocab, record, plan, master_seed)?;
    let key = estimate_key(model, vocab, record, plan)?;
    let w = model.value_projection(plan.layer)?;
    let updated = apply_rome(w, &key, &outcome.target_value(), covariance)?;
    let mut delta = WeightDelta::zeros(&model.config, &[plan.layer]);
    delta.add(plan.layer, &updated.sub(w)?)?;
    Ok((delta, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn zero_residual_leaves_w_unchanged() {
        let w = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let k = [0.5, -1.0];
        let v = Tensor::matrix(1, 2, k.to_vec()).unwrap().matmul(&w).unwrap().into_data();
        assert_eq!(apply_rome(&w, &k, &v, &Tensor::identity(2)).unwrap(), w);
    }

    #[test]
    fn hand_case_identity() {
        let w = Tensor::identity(2);
        let out = apply_rome(&w, &[1.0, 0.0], &[0.0, 1.0], &Tensor::identity(2)).unwrap();
        // row convention; its transpose [[0,0],[1,1]] is the column form
        assert_eq!(out.data(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(out.transpose().data(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_key_is_degenerate() {
        let err = apply_rome(&Tensor::identity(2), &[0.0, 0.0], &[1.0, 0.0], &Tensor::identity(2)).unwrap_err();
        assert!(matches!(err, Error::DegenerateKey(_)));
    }

    #[test]
    fn random_exactness() {
        let mut rng = RngStream::new(5, 0);
        for (f, d) in [(3, 2), (8, 5), (16, 16)] {
            let w = Tensor::matrix(f, d, (0..f * d).map(|_| rng.next_normal()).collect()).unwrap();
            let k: Vec<f64> = (0..f).map(|_| rng.next_normal()).collect();
            let v: Vec<f64> = (0..d).map(|_| rng.next_normal()).collect();
            let m = Tensor::matrix(f, f, (0..f * f).map(|_| rng.next_normal()).collect()).unwrap();
            let c = m.transpose().matmul(&m).unwrap().add(&Tensor::identity(f)).unwrap();
            let out = apply_rome(&w, &k, &v, &c).unwrap();
            let got = Tensor::matrix(1, f, k.clone()).unwrap().matmul(&out).unwrap();
            for (a, b) in got.data().iter().zip(&v) {
                assert!((a - b).abs() <= 1e-8);
            }
        }
    }
}
