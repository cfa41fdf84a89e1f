"""Gaussian posterior, reparameterized sampling and the two loss terms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor

LOG_VAR_MIN = -30.0
LOG_VAR_MAX = 30.0


@dataclass(frozen=True)
class GaussianParams:
    mu: Tensor
    log_var: Tensor

    def __post_init__(self):
        if self.mu.shape != self.log_var.shape:
            raise ShapeError(f"mu {self.mu.shape} and log_var {self.log_var.shape} differ")


@dataclass(frozen=True)
class LatentSample:
    z: Tensor
    noise: np.ndarray


@dataclass(frozen=True)
class LossBreakdown:
    reconstruction: float
    kl: float
    total: float


def reparameterize(g: GaussianParams, rng: np.random.Generator | None = None, noise=None) -> LatentSample:
    """z = mu + exp(log_var / 2) * eps with eps ~ N(0, I).

    ``noise`` replaces the draw (``0`` gives the posterior mean). Gradients
    flow through mu and log_var only.
    """
    shape = g.mu.shape
    if noise is None:
        eps = rng.standard_normal(shape)
    else:
        eps = np.broadcast_to(np.asarray(noise, dtype=np.float64), shape).copy()
    std = T.exp(T.scale(g.log_var, 0.5))
    z = T.add(g.mu, T.multiply(std, Tensor(eps)))
    return LatentSample(z=z, noise=eps)


def kl_standard_normal(g: GaussianParams) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, I)) summed over latent dims, averaged over the batch."""
    mu, lv = g.mu, g.log_var
    inner = T.subtract(T.subtract(T.add_scalar(lv, 1.0), T.square(mu)), T.exp(lv))
    per_sample = T.scale(T.tsum(inner, axis=-1), -0.5)
    return T.mean(per_sample)


def reconstruction_loss(x, x_hat: Tensor, mode: str = "squared", unit: float = 1.0) -> Tensor:
    """Batch mean of the per-sample squared error (``mode="squared"``) or Euclidean norm.

    Residuals are multiplied by ``unit`` first, so the loss can be measured
    in physical units while the networks work on normalized coordinates.
    """
    x = T.as_tensor(x)
    if x.shape != x_hat.shape:
        raise ShapeError(f"target {x.shape} and reconstruction {x_hat.shape} differ")
    diff = T.subtract(x, x_hat)
    if unit != 1.0:
        diff = T.scale(diff, unit)
    per_sample = T.tsum(T.square(diff), axis=-1)
    if mode == "euclidean":
        # offset keeps the gradient finite at a perfect reconstruction
        per_sample = T.sqrt(T.add_scalar(per_sample, 1e-12))
    elif mode != "squared":
        raise ValueError(f"unknown reconstruction mode {mode!r}")
    return T.mean(per_sample)


def elbo_terms(
    x_in,
    x_target,
    encoder,
    decoder,
    rng: np.random.Generator | None = None,
    handedness=None,
    beta: float = 1.0,
    samples: int = 1,
    recon_mode: str = "squared",
    noise=None,
    unit: float = 1.0,
):
    """Encode ``x_in``, sample, decode to the target modality and score.

    Returns ``(total, reconstruction, kl)`` as tensors so the caller can
    differentiate ``total``. With ``samples > 1`` the reconstruction term is
    averaged over that many independent draws.
    """
    g = encoder.encode(x_in, handedness)
    recon = None
    for _ in range(samples):
        z = reparameterize(g, rng, noise).z
        r = reconstruction_loss(x_target, decoder.decode(z), recon_mode, unit)
        recon = r if recon is None else T.add(recon, r)
    if samples > 1:
        recon = T.scale(recon, 1.0 / samples)
    kl = kl_standard_normal(g)
    total = T.add(recon, T.scale(kl, beta)) if beta != 1.0 else T.add(recon, kl)
    return total, recon, kl


def elbo_loss(x_in, x_target, encoder, decoder, rng=None, **kwargs) -> LossBreakdown:
    """Negative cross-modal bound as plain numbers (forward only; see ``elbo_terms`` for training)."""
    total, recon, kl = elbo_terms(x_in, x_target, encoder, decoder, rng, **kwargs)
    return LossBreakdown(reconstruction=recon.item(), kl=kl.item(), total=total.item())
