//! Adversarial, reconstruction and gradient-penalty terms.
//!
//! Discriminator outputs are raw scores. The base and SN variants read them as
//! logits, so `log D = -softplus(-s)` and `log(1 - D) = -softplus(s)` stay finite
//! for any score.

use tch::Tensor;

use crate::config::{AdversarialForm, GpMode};
use crate::error::{Error, Result};

/// Scalar terms of one evaluation of a loss.
#[derive(Debug)]
pub struct LossTerms {
    pub gen_loss: Tensor,
    pub disc_loss: Tensor,
    /// Adversarial (or Earth-mover) term.
    pub l_a: Tensor,
    /// Mean absolute reconstruction error.
    pub l_r: Tensor,
}

fn mean(t: &Tensor) -> Tensor {
    t.mean(t.kind())
}

/// `mean |fake - real|` over batch, channels and cells.
pub fn l1(fake: &Tensor, real: &Tensor) -> Tensor {
    mean(&(fake - real).abs())
}

/// Binary cross-entropy with label 1 on real pairs and 0 on generated pairs,
/// averaged over patches and then over the two label classes.
pub fn bce_discriminator(real_scores: &Tensor, fake_scores: &Tensor) -> Tensor {
    (mean(&(-real_scores).softplus()) + mean(&fake_scores.softplus())) * 0.5
}

/// Generator adversarial term of the base and SN variants.
pub fn bce_generator(fake_scores: &Tensor, form: AdversarialForm) -> Tensor {
    match form {
        AdversarialForm::NonSaturating => mean(&(-fake_scores).softplus()),
        AdversarialForm::Saturating => -mean(&fake_scores.softplus()),
    }
}

/// Earth-mover estimate `E[D(real)] - E[D(fake)]`.
pub fn earth_mover(real_scores: &Tensor, fake_scores: &Tensor) -> Tensor {
    mean(real_scores) - mean(fake_scores)
}

fn check_pair(real: &Tensor, fake: &Tensor, what: &str) -> Result<()> {
    if real.size() != fake.size() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", real.size(), fake.size())));
    }
    Ok(())
}

/// Base and SN losses from one set of scores.
pub fn loss_base(
    real_scores: &Tensor,
    fake_scores: &Tensor,
    real: &Tensor,
    fake: &Tensor,
    lambda_r: f64,
    form: AdversarialForm,
) -> Result<LossTerms> {
    check_pair(real_scores, fake_scores, "scores")?;
    check_pair(real, fake, "fields")?;
    let disc_loss = bce_discriminator(real_scores, fake_scores);
    let l_r = l1(fake, real);
    let gen_loss = bce_generator(fake_scores, form) + &l_r * lambda_r;
    Ok(LossTerms {
        gen_loss,
        l_a: disc_loss.shallow_clone(),
        disc_loss,
        l_r,
    })
}

/// Wasserstein losses without the gradient penalty.
pub fn loss_wasserstein(
    real_scores: &Tensor,
    fake_scores: &Tensor,
    real: &Tensor,
    fake: &Tensor,
    lambda_r: f64,
) -> Result<LossTerms> {
    check_pair(real_scores, fake_scores, "scores")?;
    check_pair(real, fake, "fields")?;
    let l_a = earth_mover(real_scores, fake_scores);
    let l_r = l1(fake, real);
    let gen_loss = -mean(fake_scores) + &l_r * lambda_r;
    Ok(LossTerms {
        gen_loss,
        disc_loss: -&l_a,
        l_a,
        l_r,
    })
}

/// `eps * real + (1 - eps) * fake` with one `eps` per batch element.
pub fn mix(real: &Tensor, fake: &Tensor, eps: &[f64]) -> Result<Tensor> {
    check_pair(real, fake, "mixing")?;
    let size = real.size();
    if size.is_empty() || size[0] as usize != eps.len() {
        return Err(Error::Shape(format!("{} mixing weights for batch {size:?}", eps.len())));
    }
    let mut shape = vec![1i64; size.len()];
    shape[0] = size[0];
    let e = Tensor::from_slice(eps)
        .to_kind(real.kind())
        .to_device(real.device())
        .view(shape.as_slice());
    Ok(&e * real + (1.0 - &e) * fake)
}

/// Penalty tensor (differentiable in the critic parameters) and the mean
/// gradient norm on the mixed samples.
#[derive(Debug)]
pub struct GradientPenalty {
    pub penalty: Tensor,
    pub mean_norm: f64,
}

/// Gradient of each batch element's mean score with respect to its own input.
fn score_gradient<F>(critic: &F, condition: &Tensor, x: &Tensor) -> Result<Tensor>
where
    F: Fn(&Tensor, &Tensor) -> Result<Tensor>,
{
    let scores = critic(condition, x)?;
    let b = scores.size()[0];
    let per_sample = scores.reshape([b, -1]).mean_dim(1, false, scores.kind());
    let total = per_sample.sum(scores.kind());
    let g = Tensor::run_backward(&[&total], &[x], true, true).remove(0);
    if !bool::try_from(g.isfinite().all())? {
        return Err(Error::NonFinite {
            what: "critic gradient".into(),
            step: 0,
            last_checkpoint: None,
        });
    }
    Ok(g)
}

/// `mean_b (||grad_x mean D(I_b, x)|| - 1)^2` at `x = eps_b O_b + (1 - eps_b) O_hat_b`.
pub fn gradient_penalty<F>(
    critic: F,
    condition: &Tensor,
    real: &Tensor,
    fake: &Tensor,
    eps: &[f64],
    mode: GpMode,
) -> Result<GradientPenalty>
where
    F: Fn(&Tensor, &Tensor) -> Result<Tensor>,
{
    let mixed = mix(real, &fake.detach(), eps)?.detach();
    let b = mixed.size()[0];
    let norms = match mode {
        GpMode::Batched => {
            let x = mixed.set_requires_grad(true);
            let g = score_gradient(&critic, condition, &x)?;
            g.reshape([b, -1]).norm_scalaropt_dim(2, [1], false)
        }
        GpMode::PerSample => {
            let mut norms = Vec::with_capacity(b as usize);
            for k in 0..b {
                let x = mixed.narrow(0, k, 1).detach().set_requires_grad(true);
                let g = score_gradient(&critic, &condition.narrow(0, k, 1), &x)?;
                norms.push(g.norm());
            }
            Tensor::stack(&norms, 0)
        }
    };
    let mean_norm = f64::try_from(norms.mean(norms.kind()).detach())?;
    let penalty = mean(&(norms - 1.0).square());
    Ok(GradientPenalty { penalty, mean_norm })
}
