"""The three-term training objective: adversarial D/G losses plus the
mutual-information term that ties projected codes back to the sampled ones.

All losses are softplus-form and stay finite for logits anywhere in +-1e4.
The MI term assumes a factorized unit-variance Gaussian posterior over the
projected code, which reduces the information bound to an L2 reconstruction
of the sampled code (the additive 0.5*D*log(2*pi) constant is dropped).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class LossReport:
    """Per-step loss summary. total_* are derived, never stored independently."""

    d_adv_loss: float
    g_adv_loss: float
    mi_loss: float
    lam: float

    @property
    def total_g(self) -> float:
        return self.g_adv_loss + self.lam * self.mi_loss

    @property
    def total_d(self) -> float:
        return self.d_adv_loss + self.lam * self.mi_loss

    def as_dict(self) -> dict:
        return {
            "d_adv_loss": self.d_adv_loss,
            "g_adv_loss": self.g_adv_loss,
            "mi_loss": self.mi_loss,
            "lambda": self.lam,
            "total_g": self.total_g,
            "total_d": self.total_d,
        }


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(x)


def _check_nonempty(x: torch.Tensor, name: str) -> None:
    if x.numel() == 0:
        raise ValueError(f"{name}: empty batch")


def adv_loss_discriminator(real_logits, fake_logits) -> torch.Tensor:
    """-E[log sigmoid(real)] - E[log(1 - sigmoid(fake))], softplus form."""
    real = _as_tensor(real_logits)
    fake = _as_tensor(fake_logits)
    _check_nonempty(real, "adv_loss_discriminator(real)")
    _check_nonempty(fake, "adv_loss_discriminator(fake)")
    return F.softplus(-real).mean() + F.softplus(fake).mean()


def adv_loss_generator(fake_logits, saturating: bool = False) -> torch.Tensor:
    """Non-saturating generator loss -E[log sigmoid(fake)] by default.

    ``saturating=True`` selects the literal minimax form E[log(1 - sigmoid(fake))]
    for fidelity experiments.
    """
    fake = _as_tensor(fake_logits)
    _check_nonempty(fake, "adv_loss_generator")
    if saturating:
        return -F.softplus(fake).mean()
    return F.softplus(-fake).mean()


def mi_loss(t, t_proj) -> torch.Tensor:
    """0.5 * mean over the batch of ||t_proj - t||^2.

    Equals the negative Gaussian log-density of t_proj under N(t, I), summed
    over code dimensions and averaged over the batch, minus the constant
    0.5*D*log(2*pi). Inputs are (batch, ...) with identical shapes.
    """
    t = _as_tensor(t)
    t_proj = _as_tensor(t_proj)
    if t.shape != t_proj.shape:
        raise ValueError(f"mi_loss: shape mismatch {tuple(t.shape)} vs {tuple(t_proj.shape)}")
    _check_nonempty(t, "mi_loss")
    diff = (t_proj - t).reshape(t.shape[0], -1)
    return 0.5 * (diff * diff).sum(dim=1).mean()
