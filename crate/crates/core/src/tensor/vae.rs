//! Variational building blocks: the Gaussian KL term and the
//! reparameterization trick, composed from tape primitives so gradients
//! flow through both.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Tensor, TensorError, Var};

/// Log-variances are clamped to this range before use so that `exp` stays
/// well inside f64 range and sampled noise cannot blow up.
pub const LOGVAR_MIN: f64 = -20.0;
pub const LOGVAR_MAX: f64 = 20.0;

/// KL(q || N(0, I)) for a diagonal Gaussian q = N(mu, exp(logvar)), summed
/// over all entries:
///
/// ```text
/// 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)
/// ```
pub fn gaussian_kl(mu: &Var, logvar: &Var) -> Result<Var, TensorError> {
    if mu.shape() != logvar.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "gaussian_kl",
            lhs: mu.shape(),
            rhs: logvar.shape(),
        });
    }
    let lv = logvar.clamp(LOGVAR_MIN, LOGVAR_MAX);
    let mu_sq = mu.mul(mu)?;
    let inner = mu_sq.add(&lv.exp())?.shift(-1.0).sub(&lv)?;
    Ok(inner.sum().scale(0.5))
}

/// Draws z = mu + exp(logvar / 2) * eps with eps ~ N(0, I), recorded on the
/// tape so gradients reach `mu` and `logvar` but not the noise.
pub fn reparameterize<R: Rng>(
    mu: &Var,
    logvar: &Var,
    rng: &mut R,
) -> Result<Var, TensorError> {
    if mu.shape() != logvar.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "reparameterize",
            lhs: mu.shape(),
            rhs: logvar.shape(),
        });
    }
    let (rows, cols) = mu.shape();
    let mut eps = Tensor::zeros(rows, cols);
    for v in eps.data_mut() {
        *v = rng.sample(StandardNormal);
    }
    let std = logvar.clamp(LOGVAR_MIN, LOGVAR_MAX).scale(0.5).exp();
    // the noise enters as a leaf, so no gradient flows into the draw itself
    let eps = mu.tape().leaf(eps);
    mu.add(&std.mul(&eps)?)
}
