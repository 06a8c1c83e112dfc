use super::standardize::squared_distance;

/// Normalized Gaussian weights for squared distances `distances[d]` with
/// bandwidth `eta(d)`.
///
/// Exponents are shifted by their minimum before exponentiation, which the
/// normalization cancels; the closest point therefore always keeps weight
/// one before normalizing and the sum cannot underflow. Exactly tied points
/// share their weight equally, which is also the `eta -> 0` limit. If the
/// inputs are not finite the weights fall back to nearest neighbor, lowest
/// index first.
pub(crate) fn normalized_weights(distances: &[f64], eta: impl Fn(usize) -> f64) -> Vec<f64> {
    normalized_weights_with(distances, eta, |w| w.iter().sum())
}

/// [`normalized_weights`] with the normalizing total computed by `total`.
pub(crate) fn normalized_weights_with(
    distances: &[f64],
    eta: impl Fn(usize) -> f64,
    total: impl Fn(&[f64]) -> f64,
) -> Vec<f64> {
    let scaled: Vec<f64> = distances
        .iter()
        .enumerate()
        .map(|(d, l)| l / eta(d))
        .collect();
    let min = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = scaled.iter().map(|s| (min - s).exp()).collect();
    let total = total(&w);
    if total.is_finite() && total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    } else {
        let nearest = distances
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (d, &l)| if l < best.1 { (d, l) } else { best })
            .0;
        w.iter_mut().for_each(|x| *x = 0.0);
        if let Some(x) = w.get_mut(nearest) {
            *x = 1.0;
        }
    }
    w
}

/// Normalized weights of the standardized training vectors relative to the
/// standardized test vector.
pub fn compute_weights(eta: f64, test_std: &[f64], train_std: &[Vec<f64>]) -> Vec<f64> {
    let distances: Vec<f64> = train_std
        .iter()
        .map(|r| squared_distance(r, test_std))
        .collect();
    normalized_weights(&distances, |_| eta)
}
