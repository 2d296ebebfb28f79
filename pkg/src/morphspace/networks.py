"""Progressive image networks conditioned on a shared transformation space.

The generator injects a per-layer code pair (t_k, z_k) through an affine
style stage (adaptive instance normalization) at every resolution it covers,
starting from a learned 4x4 constant. The discriminator shares one trunk
between an adversarial score head and K per-layer projection heads that map
an image back to code space; the score head hangs only off the 4x4 trunk
output, so information-style losses on the projections never touch it.

Both networks grow one resolution stage at a time. While a freshly added
stage fades in, outputs are blended with the previous stage through
fade_alpha in [0, 1]; at alpha = 0 the new parameters are exactly inert.

Implementation notes:
  * all trainable layers use runtime weight scaling (equalized learning
    rate), weights drawn N(0, 1) from a numpy stream keyed by (seed, net,
    stage) so construction order and torch's global RNG do not matter;
  * style affine layers start at weight 0 with bias (1, 0), i.e. identity
    modulation;
  * minibatch stddev is appended ahead of the score head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


@dataclass(frozen=True)
class NetConfig:
    """Shapes shared by the generator and discriminator.

    Settings:
        k_layers: number of code-injected layers (4x4 up to 4*2^(k-1)).
        t_dim / z_dim: per-layer transformation / nuisance code width.
        base_channels: channels at 4x4; halves per stage down to min_channels.
        max_resolution: final stage resolution (power of two).
    """

    k_layers: int = 5
    t_dim: int = 4
    z_dim: int = 32
    base_channels: int = 128
    max_resolution: int = 64
    img_channels: int = 3
    min_channels: int = 4

    def __post_init__(self):
        if self.max_resolution < 4 or self.max_resolution & (self.max_resolution - 1):
            raise ValueError("max_resolution must be a power of two >= 4")
        if not 1 <= self.k_layers <= self.num_stages:
            raise ValueError(f"k_layers must be in [1, {self.num_stages}] for max_resolution {self.max_resolution}")
        for name in ("t_dim", "z_dim", "base_channels", "img_channels", "min_channels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def num_stages(self) -> int:
        return int(math.log2(self.max_resolution // 4)) + 1

    def resolution(self, stage: int) -> int:
        return 4 << stage

    def channels(self, stage: int) -> int:
        return max(self.base_channels >> stage, self.min_channels)


def _param_rng(seed: int, net_tag: int, stage: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, net_tag, stage]))


def _randn(rng, *shape) -> torch.Tensor:
    return torch.from_numpy(rng.standard_normal(shape).astype(np.float32))


class EqualizedConv2d(nn.Module):
    def __init__(self, in_ch, out_ch, kernel, rng, gain=math.sqrt(2.0), padding=None):
        super().__init__()
        self.weight = nn.Parameter(_randn(rng, out_ch, in_ch, kernel, kernel))
        self.bias = nn.Parameter(torch.zeros(out_ch))
        self.scale = gain / math.sqrt(in_ch * kernel * kernel)
        self.padding = kernel // 2 if padding is None else padding

    def forward(self, x):
        return F.conv2d(x, self.weight * self.scale, self.bias, padding=self.padding)


class EqualizedLinear(nn.Module):
    def __init__(self, in_dim, out_dim, rng, gain=math.sqrt(2.0)):
        super().__init__()
        self.weight = nn.Parameter(_randn(rng, out_dim, in_dim))
        self.bias = nn.Parameter(torch.zeros(out_dim))
        self.scale = gain / math.sqrt(in_dim)

    def forward(self, x):
        return F.linear(x, self.weight * self.scale, self.bias)


def adain(features: torch.Tensor, scale: torch.Tensor, bias: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """Renormalize each channel's spatial statistics to (bias, |scale|).

    features: (B, C, H, W); scale and bias: (B, C) or (C,).
    """
    if features.ndim != 4:
        raise ValueError(f"adain expects (B, C, H, W), got {tuple(features.shape)}")
    if scale.ndim == 1:
        scale = scale.unsqueeze(0)
    if bias.ndim == 1:
        bias = bias.unsqueeze(0)
    if scale.shape[-1] != features.shape[1] or bias.shape[-1] != features.shape[1]:
        raise ValueError("scale/bias channel count does not match features")
    mu = features.mean(dim=(2, 3), keepdim=True)
    var = features.var(dim=(2, 3), unbiased=False, keepdim=True)
    normalized = (features - mu) / torch.sqrt(var + eps)
    return normalized * scale[:, :, None, None] + bias[:, :, None, None]


class StyleAffine(nn.Module):
    """Maps a concatenated (t_k, z_k) pair to per-channel (scale, bias).

    Starts as the identity modulation: zero weights, bias fixed at
    scale 1 / shift 0, so an untrained network ignores its codes.
    """

    def __init__(self, in_dim, channels, rng):
        super().__init__()
        self.channels = channels
        self.fc = EqualizedLinear(in_dim, 2 * channels, rng, gain=1.0)
        with torch.no_grad():
            self.fc.weight.zero_()
            self.fc.bias.copy_(torch.cat([torch.ones(channels), torch.zeros(channels)]))

    def forward(self, tz):
        out = self.fc(tz)
        return out[:, : self.channels], out[:, self.channels :]


class MinibatchStddev(nn.Module):
    def forward(self, x):
        std = torch.sqrt(x.var(dim=0, unbiased=False) + 1e-8).mean()
        feat = std.expand(x.shape[0], 1, x.shape[2], x.shape[3])
        return torch.cat([x, feat], dim=1)


class Generator(nn.Module):
    def __init__(self, config: NetConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.seed = int(seed)
        self.stage = 0
        self.fade_alpha = 1.0
        rng = _param_rng(self.seed, 0, 0)
        c0 = config.channels(0)
        self.const = nn.Parameter(_randn(rng, 1, c0, 4, 4))
        self.blocks = nn.ModuleList([EqualizedConv2d(c0, c0, 3, rng)])
        self.affines = nn.ModuleList([StyleAffine(config.t_dim + config.z_dim, c0, rng)])
        self.to_images = nn.ModuleList([EqualizedConv2d(c0, config.img_channels, 1, rng, gain=1.0)])

    @property
    def resolution(self) -> int:
        return self.config.resolution(self.stage)

    @property
    def active_layers(self) -> int:
        return min(self.config.k_layers, self.stage + 1)

    def grow(self, new_stage: int) -> None:
        if new_stage != self.stage + 1:
            raise ValueError(f"can only grow from stage {self.stage} to {self.stage + 1}, got {new_stage}")
        if new_stage >= self.config.num_stages:
            raise ValueError(f"stage {new_stage} exceeds configured maximum {self.config.num_stages - 1}")
        rng = _param_rng(self.seed, 0, new_stage)
        c_in, c_out = self.config.channels(new_stage - 1), self.config.channels(new_stage)
        self.blocks.append(EqualizedConv2d(c_in, c_out, 3, rng))
        if new_stage < self.config.k_layers:
            self.affines.append(StyleAffine(self.config.t_dim + self.config.z_dim, c_out, rng))
        self.to_images.append(EqualizedConv2d(c_out, self.config.img_channels, 1, rng, gain=1.0))
        self.stage = new_stage

    def _check_codes(self, z, t):
        cfg = self.config
        if z.ndim != 3 or z.shape[1] != cfg.k_layers or z.shape[2] != cfg.z_dim:
            raise ValueError(f"z must be (B, {cfg.k_layers}, {cfg.z_dim}), got {tuple(z.shape)}")
        if t.ndim != 3 or t.shape[1] != cfg.k_layers or t.shape[2] != cfg.t_dim:
            raise ValueError(f"t must be (B, {cfg.k_layers}, {cfg.t_dim}), got {tuple(t.shape)}")
        if z.shape[0] != t.shape[0]:
            raise ValueError("z and t batch sizes differ")

    def style_scale_bias(self, layer_index: int, t_k: torch.Tensor, z_k: torch.Tensor):
        """(scale, bias) produced for 0-based conditioned layer layer_index."""
        if not 0 <= layer_index < len(self.affines):
            raise ValueError(f"no affine stage for layer {layer_index}")
        return self.affines[layer_index](torch.cat([t_k, z_k], dim=1))

    def _run(self, z, t):
        self._check_codes(z, t)
        x = self.const.expand(z.shape[0], -1, -1, -1)
        feats = []
        prev_rgb = None
        for s in range(self.stage + 1):
            if s > 0:
                x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = F.leaky_relu(self.blocks[s](x), 0.2)
            if s < self.config.k_layers:
                scale, bias = self.affines[s](torch.cat([t[:, s], z[:, s]], dim=1))
                x = adain(x, scale, bias)
                feats.append(x)
            if self.stage > 0 and s == self.stage - 1:
                prev_rgb = self.to_images[s](x)
        rgb = self.to_images[self.stage](x)
        alpha = float(self.fade_alpha)
        if self.stage > 0 and alpha < 1.0:
            rgb = (1.0 - alpha) * F.interpolate(prev_rgb, scale_factor=2, mode="nearest") + alpha * rgb
        return torch.tanh(rgb), feats

    def forward(self, z, t):
        return self._run(z, t)[0]

    def intermediate_features(self, z, t):
        """Post-modulation activations of every conditioned layer."""
        return self._run(z, t)[1]


class ProjectionHead(nn.Module):
    """Two convolutions and a fully-connected readout to code space."""

    def __init__(self, channels, t_dim, rng):
        super().__init__()
        self.conv1 = EqualizedConv2d(channels, channels, 3, rng)
        self.conv2 = EqualizedConv2d(channels, channels, 3, rng)
        self.fc = EqualizedLinear(channels, t_dim, rng, gain=1.0)

    def forward(self, x):
        h = F.leaky_relu(self.conv1(x), 0.2)
        h = F.leaky_relu(self.conv2(h), 0.2)
        return torch.tanh(self.fc(h.mean(dim=(2, 3))))


class AdversarialHead(nn.Module):
    def __init__(self, channels, rng):
        super().__init__()
        self.mbstd = MinibatchStddev()
        self.conv = EqualizedConv2d(channels + 1, channels, 3, rng)
        self.fc1 = EqualizedLinear(channels * 16, channels, rng)
        self.fc2 = EqualizedLinear(channels, 1, rng, gain=1.0)

    def forward(self, x):
        h = F.leaky_relu(self.conv(self.mbstd(x)), 0.2)
        h = F.leaky_relu(self.fc1(h.flatten(1)), 0.2)
        return self.fc2(h).squeeze(1)


class Discriminator(nn.Module):
    """Shared trunk with an adversarial score head and K projection heads.

    Projection head k reads the trunk activation at resolution 4*2^k, i.e.
    the same resolution where the generator injects code layer k. Heads for
    resolutions beyond the current stage return zeros until their stage
    exists.
    """

    def __init__(self, config: NetConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.seed = int(seed)
        self.stage = 0
        self.fade_alpha = 1.0
        rng = _param_rng(self.seed, 1, 0)
        c0 = config.channels(0)
        self.from_images = nn.ModuleList([EqualizedConv2d(config.img_channels, c0, 1, rng)])
        self.blocks = nn.ModuleList([nn.Identity()])  # stage 0 has no downsampling block
        self.adv_head = AdversarialHead(c0, rng)
        self.proj_heads = nn.ModuleList([ProjectionHead(c0, config.t_dim, rng)])

    @property
    def resolution(self) -> int:
        return self.config.resolution(self.stage)

    @property
    def active_layers(self) -> int:
        return min(self.config.k_layers, self.stage + 1)

    def grow(self, new_stage: int) -> None:
        if new_stage != self.stage + 1:
            raise ValueError(f"can only grow from stage {self.stage} to {self.stage + 1}, got {new_stage}")
        if new_stage >= self.config.num_stages:
            raise ValueError(f"stage {new_stage} exceeds configured maximum {self.config.num_stages - 1}")
        rng = _param_rng(self.seed, 1, new_stage)
        c_hi, c_lo = self.config.channels(new_stage), self.config.channels(new_stage - 1)
        self.from_images.append(EqualizedConv2d(self.config.img_channels, c_hi, 1, rng))
        self.blocks.append(
            nn.Sequential(
                EqualizedConv2d(c_hi, c_hi, 3, rng),
                nn.LeakyReLU(0.2),
                EqualizedConv2d(c_hi, c_lo, 3, rng),
                nn.LeakyReLU(0.2),
                nn.AvgPool2d(2),
            )
        )
        if new_stage < self.config.k_layers:
            self.proj_heads.append(ProjectionHead(c_hi, self.config.t_dim, rng))
        self.stage = new_stage

    def forward(self, x):
        """Returns (score logits (B,), code projections (B, K, t_dim))."""
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.img_channels:
            raise ValueError(f"expected (B, {cfg.img_channels}, R, R) images, got {tuple(x.shape)}")
        if x.shape[2] != self.resolution or x.shape[3] != self.resolution:
            raise ValueError(f"discriminator runs at {self.resolution}x{self.resolution}, got {tuple(x.shape[2:])}")
        alpha = float(self.fade_alpha)
        h = F.leaky_relu(self.from_images[self.stage](x), 0.2)
        acts = {self.stage: h}
        for b in range(self.stage, 0, -1):
            h = self.blocks[b](h)
            if b == self.stage and alpha < 1.0:
                skip = F.leaky_relu(self.from_images[b - 1](F.avg_pool2d(x, 2)), 0.2)
                h = (1.0 - alpha) * skip + alpha * h
            acts[b - 1] = h
        logits = self.adv_head(acts[0])
        proj = []
        for k in range(cfg.k_layers):
            if k <= self.stage:
                p = self.proj_heads[k](acts[k])
                if k == self.stage and self.stage > 0 and alpha < 1.0:
                    p = alpha * p
            else:
                p = x.new_zeros(x.shape[0], cfg.t_dim)
            proj.append(p)
        return logits, torch.stack(proj, dim=1)

    def adv_score(self, x) -> torch.Tensor:
        return self.forward(x)[0]

    def project(self, x) -> torch.Tensor:
        return self.forward(x)[1]


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
