use super::tensor::Tensor2;

/// Compares `analytic` gradients of `f` against central differences.
///
/// Returns the maximum over all coordinates of
/// `|g_fd - g_an| / max(1, |g_fd|, |g_an|)`. `f` must be deterministic, so
/// any dropout masks it uses have to be frozen by the caller.
pub fn fd_check<F>(mut f: F, params: &[Tensor2], analytic: &[Tensor2], step: f64) -> f64
where
    F: FnMut(&[Tensor2]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient table misaligned");
    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for (p, g) in params.iter().zip(analytic) {
        assert_eq!(p.shape(), g.shape(), "gradient shape misaligned");
    }
    for t in 0..params.len() {
        for i in 0..params[t].len() {
            let base = params[t].data()[i];
            probe[t].data_mut()[i] = base + step;
            let up = f(&probe);
            probe[t].data_mut()[i] = base - step;
            let down = f(&probe);
            probe[t].data_mut()[i] = base;
            let fd = (up - down) / (2.0 * step);
            let an = analytic[t].data()[i];
            let err = (fd - an).abs() / 1f64.max(fd.abs()).max(an.abs());
            worst = worst.max(err);
        }
    }
    worst
}
