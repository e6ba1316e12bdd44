"""Convolutional variational autoencoder over 64x64 RGB images.

The encoder maps an image to a Gaussian over an 8x-downsampled latent
(4 channels at 1/8 resolution), the decoder maps latents back to
pixels.  The training loss is L1 plus a structural-similarity term plus
a lightly weighted KL.  Setting ``quantum=True`` swaps the first
encoder block for a quantum-corrected residual block; the rest of the
model is unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ansatz import AnsatzKind, AnsatzSpec
from .layers import (
    Conv2d,
    Downsample,
    GroupNorm,
    Module,
    QResBlock,
    ResBlock,
    Upsample,
)
from .optim import Adam
from .tensor import Tensor, conv2d


@dataclass(frozen=True)
class VAEConfig:
    image_size: int = 64
    in_channels: int = 3
    latent_channels: int = 4
    base_channels: int = 32
    kl_weight: float = 1e-6
    ssim_weight: float = 1.0
    learning_rate: float = 1e-3
    quantum: bool = False
    q_qubits: int = 4
    q_layers: int = 2
    q_kind: AnsatzKind = AnsatzKind.ESE2

    def __post_init__(self):
        if self.image_size % 8:
            raise ValueError("image_size must be divisible by 8")
        if self.base_channels < 4 or self.base_channels % 4:
            raise ValueError("base_channels must be a multiple of 4, >= 4")
        if self.kl_weight < 0 or self.ssim_weight < 0:
            raise ValueError("loss weights must be >= 0")

    @property
    def latent_size(self) -> int:
        return self.image_size // 8

    def ansatz_spec(self) -> AnsatzSpec:
        return AnsatzSpec(self.q_kind, self.q_qubits, self.q_layers)


class VAE(Module):
    """Encoder/decoder pair; construction is deterministic in the seed."""

    def __init__(self, config: VAEConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.config = config
        c, c2 = config.base_channels, 2 * config.base_channels

        self.enc_stem = Conv2d(config.in_channels, c, rng)
        if config.quantum:
            self.enc_block1 = QResBlock(c, c, rng, config.ansatz_spec())
        else:
            self.enc_block1 = ResBlock(c, c, rng)
        self.enc_down1 = Downsample(c, rng)
        self.enc_block2 = ResBlock(c, c2, rng)
        self.enc_down2 = Downsample(c2, rng)
        self.enc_block3 = ResBlock(c2, c2, rng)
        self.enc_down3 = Downsample(c2, rng)
        self.enc_norm = GroupNorm(c2)
        self.enc_mu = Conv2d(c2, config.latent_channels, rng, kernel=1)
        self.enc_logvar = Conv2d(c2, config.latent_channels, rng, kernel=1)

        self.dec_stem = Conv2d(config.latent_channels, c2, rng)
        self.dec_block1 = ResBlock(c2, c2, rng)
        self.dec_up1 = Upsample(c2, rng)
        self.dec_block2 = ResBlock(c2, c, rng)
        self.dec_up2 = Upsample(c, rng)
        self.dec_block3 = ResBlock(c, c, rng)
        self.dec_up3 = Upsample(c, rng)
        self.dec_norm = GroupNorm(c)
        self.dec_out = Conv2d(c, config.in_channels, rng)

    def encode(self, x: Tensor) -> tuple[Tensor, Tensor]:
        h = self.enc_stem(x)
        h = self.enc_block1(h)
        h = self.enc_down1(h)
        h = self.enc_block2(h)
        h = self.enc_down2(h)
        h = self.enc_block3(h)
        h = self.enc_down3(h)
        h = self.enc_norm(h).silu()
        return self.enc_mu(h), self.enc_logvar(h)

    def decode(self, z: Tensor) -> Tensor:
        h = self.dec_stem(z)
        h = self.dec_block1(h)
        h = self.dec_up1(h)
        h = self.dec_block2(h)
        h = self.dec_up2(h)
        h = self.dec_block3(h)
        h = self.dec_up3(h)
        h = self.dec_norm(h).silu()
        return self.dec_out(h).sigmoid()

    @staticmethod
    def reparameterize(mu: Tensor, logvar: Tensor,
                       rng: np.random.Generator) -> Tensor:
        eps = Tensor(rng.standard_normal(mu.shape))
        return mu + (logvar * 0.5).exp() * eps

    def forward(self, x: Tensor, rng: np.random.Generator):
        mu, logvar = self.encode(x)
        z = self.reparameterize(mu, logvar, rng)
        return self.decode(z), mu, logvar


def windowed_ssim(x: Tensor, y: Tensor, window: int = 8, stride: int = 4,
                  data_range: float = 1.0) -> Tensor:
    """Mean SSIM over overlapping windows, differentiable end to end.

    Window statistics come from a uniform depthwise convolution, so the
    result participates in the autodiff graph of both inputs.
    """
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    n, c, h, w = x.shape
    if h < window or w < window:
        raise ValueError(f"images smaller than the {window}px window")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    kernel = Tensor(np.full((1, 1, window, window), 1.0 / window ** 2))

    def wmean(t: Tensor) -> Tensor:
        flat = t.reshape(n * c, 1, h, w)
        return conv2d(flat, kernel, stride=stride, padding=0)

    mu_x = wmean(x)
    mu_y = wmean(y)
    xx = wmean(x * x) - mu_x * mu_x
    yy = wmean(y * y) - mu_y * mu_y
    xy = wmean(x * y) - mu_x * mu_y
    numer = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    denom = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return (numer / denom).mean()


def vae_loss(recon: Tensor, x: Tensor, mu: Tensor, logvar: Tensor,
             config: VAEConfig) -> tuple[Tensor, dict]:
    """Total loss and a float breakdown of its parts."""
    l1 = (recon - x).abs().mean()
    ssim_val = windowed_ssim(recon, x)
    ssim_term = 1.0 - ssim_val
    # KL(q || N(0, I)) summed over latent dims, averaged over the batch
    kl_map = (mu * mu + logvar.exp() - logvar - 1.0) * 0.5
    kl = kl_map.sum(axis=(1, 2, 3)).mean()
    total = l1 + config.ssim_weight * ssim_term + config.kl_weight * kl
    parts = {
        "l1": l1.item(),
        "ssim": ssim_val.item(),
        "kl": kl.item(),
        "total": total.item(),
    }
    return total, parts


def vae_train_step(model: VAE, optimizer: Adam, batch: np.ndarray,
                   rng: np.random.Generator) -> dict:
    """One optimization step on a (N, C, H, W) image batch in [0, 1]."""
    x = Tensor(batch)
    recon, mu, logvar = model(x, rng)
    loss, parts = vae_loss(recon, x, mu, logvar, model.config)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return parts


def encode_dataset(model: VAE, images: np.ndarray,
                   batch_size: int = 16) -> np.ndarray:
    """Posterior means for every image, as plain (N, C, h, w) numpy."""
    outs = []
    for lo in range(0, images.shape[0], batch_size):
        mu, _ = model.encode(Tensor(images[lo:lo + batch_size]))
        outs.append(mu.data)
    return np.concatenate(outs, axis=0)
