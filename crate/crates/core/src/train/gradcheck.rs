//! Central finite-difference checks for analytic gradients.

use crate::error::Result;
use crate::models::WeightBank;
use crate::tensor::{Scalar, Tensor};

/// Central differences of `f` at `x` with step `h`.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest absolute difference relative to the largest magnitude of either vector.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// `Σ upstream ⊙ output` accumulated in f64.
pub fn projected_output<T: Scalar>(output: &Tensor<T>, upstream: &Tensor<T>) -> f64 {
    output
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&o, &u)| o.as_f64() * u.as_f64())
        .sum()
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// Relative error of every parameter gradient of `bank`, plus one entry named
/// `input` for the input gradient, against central differences of the
/// projected output. Differences are always taken on the 64-bit evaluation of
/// the same weights and input, so 32-bit gradients are measured against a
/// reference free of 32-bit rounding.
pub fn check_model<T: Scalar>(
    bank: &WeightBank<T>,
    input: &Tensor<T>,
    upstream: &Tensor<T>,
    h: f64,
) -> Result<Vec<(String, f64)>> {
    let trace = bank.forward_trace(input)?;
    let (grads, grad_input) = bank.backward(&trace, upstream)?;
    let (bank64, input64, upstream64) = (bank.cast::<f64>(), input.cast::<f64>(), upstream.cast::<f64>());
    let mut report = Vec::new();
    for (idx, param) in bank.params().iter().enumerate() {
        let x = to_f64(param.value.values());
        let numeric = numeric_gradient(
            |v| {
                let mut probe = bank64.clone();
                probe.params_mut()[idx].value.values_mut().copy_from_slice(v);
                probe
                    .forward(&input64)
                    .map(|out| projected_output(&out, &upstream64))
                    .unwrap_or(f64::NAN)
            },
            &x,
            h,
        );
        let analytic = to_f64(grads.params()[idx].value.values());
        report.push((param.name.clone(), relative_error(&analytic, &numeric)));
    }
    let numeric = numeric_gradient(
        |v| {
            let probe = Tensor::new(input.shape(), v.to_vec()).expect("same length");
            bank64
                .forward(&probe)
                .map(|out| projected_output(&out, &upstream64))
                .unwrap_or(f64::NAN)
        },
        &to_f64(input.data()),
        h,
    );
    report.push(("input".into(), relative_error(&to_f64(grad_input.data()), &numeric)));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let g = numeric_gradient(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, 5.0], 1e-4);
        assert!(relative_error(&g, &[4.0, 3.0]) < 1e-8);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
    }
}
