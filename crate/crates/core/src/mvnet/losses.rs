//! Reconstruction and adversarial objectives with their gradients.
//!
//! All values are batch means over row samples. The common subspace `Z`
//! enters the open-state losses as a fixed input.

use super::{MvnetError, ViewNets};
use crate::numeric::{clamped_ln, Matrix, Mlp, MlpParams};

#[derive(Debug, Clone)]
pub struct AeEval {
    pub loss: f64,
    /// The `‖x − G(E(x))‖²` part of `loss`.
    pub reconstruction: f64,
    pub encoder: MlpParams,
    pub generator: MlpParams,
}

/// Closed-state loss: mean over the batch of `‖x − G(E(x))‖²`.
pub fn ae_loss_closed(nets: &ViewNets, x: &Matrix) -> Result<AeEval, MvnetError> {
    let b = x.rows() as f64;
    let (z, enc_cache) = nets.encoder.forward(x)?;
    let (x_hat, gen_cache) = nets.generator.forward(&z)?;
    let residual = x_hat.sub(x)?;
    let loss = residual.frobenius_sq() / b;
    let (generator, dz) = nets
        .generator
        .backward(&gen_cache, &residual.scale(2.0 / b))?;
    let (encoder, _) = nets.encoder.backward(&enc_cache, &dz)?;
    Ok(AeEval {
        loss,
        reconstruction: loss,
        encoder,
        generator,
    })
}

/// Open-state loss:
/// `‖X − G(Zⁱ)‖² + λ(‖X − G(Z)‖² + ‖Zⁱ − Z‖²)` with `Zⁱ = E(X)`, batch mean.
pub fn ae_loss_open(
    nets: &ViewNets,
    x: &Matrix,
    z_common: &Matrix,
    view_weight: f64,
) -> Result<AeEval, MvnetError> {
    let b = x.rows() as f64;
    let (z_view, enc_cache) = nets.encoder.forward(x)?;
    let (x_hat, hat_cache) = nets.generator.forward(&z_view)?;
    let (x_tilde, tilde_cache) = nets.generator.forward(z_common)?;
    let r_hat = x_hat.sub(x)?;
    let r_tilde = x_tilde.sub(x)?;
    let r_z = z_view.sub(z_common)?;
    let loss =
        (r_hat.frobenius_sq() + view_weight * (r_tilde.frobenius_sq() + r_z.frobenius_sq())) / b;

    let (mut generator, dz_hat) = nets.generator.backward(&hat_cache, &r_hat.scale(2.0 / b))?;
    let (g_tilde, _) = nets
        .generator
        .backward(&tilde_cache, &r_tilde.scale(2.0 * view_weight / b))?;
    generator.add_scaled(&g_tilde, 1.0);
    let mut dz = dz_hat;
    dz.add_assign(&r_z.scale(2.0 * view_weight / b))?;
    let (encoder, _) = nets.encoder.backward(&enc_cache, &dz)?;
    Ok(AeEval {
        loss,
        reconstruction: r_hat.frobenius_sq() / b,
        encoder,
        generator,
    })
}

#[derive(Debug, Clone)]
pub struct DiscEval {
    /// `E[ln D(x)] + E[ln(1 − D(x_fake))]`, to be maximized.
    pub objective: f64,
    /// Gradient of `objective` in the discriminator parameters.
    pub grad: MlpParams,
}

pub fn discriminator_objective(
    disc: &Mlp,
    real: &Matrix,
    fake: &Matrix,
) -> Result<DiscEval, MvnetError> {
    let (p_real, real_cache) = disc.forward(real)?;
    let (p_fake, fake_cache) = disc.forward(fake)?;
    let br = real.rows() as f64;
    let bf = fake.rows() as f64;
    let mut objective = 0.0;
    let d_real: Vec<f64> = p_real
        .as_slice()
        .iter()
        .map(|&p| {
            let (v, d) = clamped_ln(p);
            objective += v / br;
            d / br
        })
        .collect();
    let d_fake: Vec<f64> = p_fake
        .as_slice()
        .iter()
        .map(|&p| {
            let (v, d) = clamped_ln(1.0 - p);
            objective += v / bf;
            -d / bf
        })
        .collect();
    let (mut grad, _) = disc.backward(&real_cache, &Matrix::column(&d_real))?;
    let (g_fake, _) = disc.backward(&fake_cache, &Matrix::column(&d_fake))?;
    grad.add_scaled(&g_fake, 1.0);
    Ok(DiscEval { objective, grad })
}

#[derive(Debug, Clone)]
pub struct GenEval {
    /// `E[ln(1 − D(G(z)))]`, to be minimized.
    pub objective: f64,
    /// Gradient of `objective` in the generator parameters.
    pub grad: MlpParams,
}

/// Generator objective for latent rows `z` (either `E(x)` or the common `Z`).
/// Only the generator receives gradient.
pub fn generator_objective(generator: &Mlp, disc: &Mlp, z: &Matrix) -> Result<GenEval, MvnetError> {
    let (fake, gen_cache) = generator.forward(z)?;
    let (p_fake, disc_cache) = disc.forward(&fake)?;
    let b = z.rows() as f64;
    let mut objective = 0.0;
    let d_p: Vec<f64> = p_fake
        .as_slice()
        .iter()
        .map(|&p| {
            let (v, d) = clamped_ln(1.0 - p);
            objective += v / b;
            -d / b
        })
        .collect();
    let (_, d_fake) = disc.backward(&disc_cache, &Matrix::column(&d_p))?;
    let (grad, _) = generator.backward(&gen_cache, &d_fake)?;
    Ok(GenEval { objective, grad })
}

#[derive(Debug, Clone)]
pub struct AdvEval {
    pub discriminator: DiscEval,
    pub generator: GenEval,
}

/// Both adversarial objectives for view `nets` at the current parameters.
/// With `z_common` absent the fakes are reconstructions `G(E(x))`; with it
/// present they are generated from the common subspace, `G(Z)`.
pub fn adv_losses(
    nets: &ViewNets,
    x: &Matrix,
    z_common: Option<&Matrix>,
) -> Result<AdvEval, MvnetError> {
    let z = match z_common {
        Some(z) => z.clone(),
        None => nets.encoder.predict(x)?,
    };
    let fake = nets.generator.predict(&z)?;
    Ok(AdvEval {
        discriminator: discriminator_objective(&nets.discriminator, x, &fake)?,
        generator: generator_objective(&nets.generator, &nets.discriminator, &z)?,
    })
}
