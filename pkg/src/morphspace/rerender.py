"""Rerendering real images through generator feature statistics.

A small multi-level encoder-decoder reconstructs a real image while its
encoder features are whitened (decorrelated) and then recolored with the
statistics of generator features for the matching code. Once trained for
reconstruction, shifting the code shifts the recoloring statistics, which
drags the real image along the learned transformation. A guided filter keeps
fine structure from the source image.

Whitening/coloring matrices are treated as constants during backprop (only
the means pass gradients), which keeps reconstruction training stable.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .checkpoint import ContainerError, pack_container, unpack_container
from .codes import sample_latent_batch
from .metrics import ConvEmbedder

EIG_EPS = 1e-5


def _moments(feat2d: torch.Tensor, eps: float):
    """Mean, covariance eigendecomposition of a (C, N) feature matrix."""
    c, n = feat2d.shape
    if n < 2:
        raise ValueError(f"need at least 2 spatial positions for channel statistics, got {n}")
    mu = feat2d.mean(dim=1, keepdim=True)
    xc = (feat2d - mu).double()
    cov = xc @ xc.T / (n - 1)
    vals, vecs = torch.linalg.eigh(cov)
    vals = vals.clamp(min=eps)
    return mu, vals, vecs


def _per_sample(fn, feat, *rest):
    x = feat if feat.ndim == 4 else feat.unsqueeze(0)
    others = [r if r.ndim == 4 else r.unsqueeze(0) for r in rest]
    out = torch.stack([fn(x[i], *[o[min(i, o.shape[0] - 1)] for o in others]) for i in range(x.shape[0])])
    return out if feat.ndim == 4 else out[0]


def whitening(feat: torch.Tensor, eps: float = EIG_EPS) -> torch.Tensor:
    """Decorrelate channels: output has near zero mean and identity covariance.

    feat: (C, H, W) or (B, C, H, W). Covariance eigenvalues are clamped at
    eps before the inverse square root, so constant maps come out near zero
    rather than blowing up.
    """

    def one(x):
        c, h, w = x.shape
        flat = x.reshape(c, h * w)
        mu, vals, vecs = _moments(flat, eps)
        w_mat = (vecs @ torch.diag(vals.rsqrt()) @ vecs.T).to(x.dtype).detach()
        return (w_mat @ (flat - mu)).reshape(c, h, w)

    return _per_sample(one, feat)


def coloring(white: torch.Tensor, style: torch.Tensor, eps: float = EIG_EPS) -> torch.Tensor:
    """Give whitened features the channel statistics of a style feature map."""

    def one(x, s):
        c, h, w = x.shape
        if s.shape[0] != c:
            raise ValueError(f"style has {s.shape[0]} channels, content has {c}")
        flat = x.reshape(c, h * w)
        mu_s, vals, vecs = _moments(s.reshape(c, -1), eps)
        c_half = (vecs @ torch.diag(vals.sqrt()) @ vecs.T).to(x.dtype).detach()
        return (c_half @ flat + mu_s).reshape(c, h, w)

    return _per_sample(one, white, style)


def _box_filter(x: np.ndarray, radius: int) -> np.ndarray:
    """Windowed mean with edge-clamped windows, via an integral image."""
    h, w = x.shape
    integral = np.zeros((h + 1, w + 1), dtype=np.float64)
    integral[1:, 1:] = np.cumsum(np.cumsum(x, axis=0), axis=1)
    y0 = np.clip(np.arange(h) - radius, 0, None)
    y1 = np.clip(np.arange(h) + radius + 1, None, h)
    x0 = np.clip(np.arange(w) - radius, 0, None)
    x1 = np.clip(np.arange(w) + radius + 1, None, w)
    sums = integral[np.ix_(y1, x1)] - integral[np.ix_(y0, x1)] - integral[np.ix_(y1, x0)] + integral[np.ix_(y0, x0)]
    counts = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    return sums / counts


def guided_smooth(image: np.ndarray, guide: np.ndarray = None, radius: int = 4, eps: float = 1e-3) -> np.ndarray:
    """Edge-preserving smoothing of a (3, H, W) image under a scalar guide.

    Defaults to guiding by the image's own luminance. Output dtype float32.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError(f"expected (C, H, W), got {img.shape}")
    if guide is None:
        guide = (0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2] + 1.0) / 2.0
    g = np.asarray(guide, dtype=np.float64)
    if g.shape != img.shape[1:]:
        raise ValueError(f"guide shape {g.shape} does not match image {img.shape[1:]}")
    mean_g = _box_filter(g, radius)
    var_g = _box_filter(g * g, radius) - mean_g**2
    out = np.empty_like(img)
    for c in range(img.shape[0]):
        p = img[c]
        mean_p = _box_filter(p, radius)
        cov_gp = _box_filter(g * p, radius) - mean_g * mean_p
        a = cov_gp / (var_g + eps)
        b = mean_p - a * mean_g
        out[c] = _box_filter(a, radius) * g + _box_filter(b, radius)
    return out.astype(np.float32)


@dataclass(frozen=True)
class RerenderConfig:
    """Shapes and training knobs for the rerenderer.

    gen_channels lists the channel width of each generator feature level
    being consumed (one entry per conditioned layer).
    """

    resolution: int = 16
    base_channels: int = 24
    gen_channels: tuple = (64, 32, 16)
    seed: int = 5
    steps: int = 400
    batch: int = 8
    lr: float = 1e-3
    feature_l1_weight: float = 0.5
    smooth_radius: int = 4
    smooth_eps: float = 1e-3
    eig_eps: float = EIG_EPS

    def __post_init__(self):
        if self.resolution < 8 or self.resolution & (self.resolution - 1):
            raise ValueError("resolution must be a power of two >= 8")
        if self.base_channels < 4 or not self.gen_channels:
            raise ValueError("bad channel configuration")
        object.__setattr__(self, "gen_channels", tuple(int(c) for c in self.gen_channels))


def _conv(in_ch, out_ch, rng, stride=1):
    conv = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1)
    with torch.no_grad():
        w = rng.standard_normal(conv.weight.shape) * math.sqrt(2.0 / (in_ch * 9))
        conv.weight.copy_(torch.from_numpy(w.astype(np.float32)))
        conv.bias.zero_()
    return conv


class Rerenderer(nn.Module):
    """Three-level encoder-decoder with statistics transfer at each level."""

    def __init__(self, config: RerenderConfig):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5E4E]))
        c = config.base_channels
        self.enc1 = _conv(3, c, rng)
        self.enc2 = _conv(c, 2 * c, rng, stride=2)
        self.enc3 = _conv(2 * c, 4 * c, rng, stride=2)
        total = sum(config.gen_channels)
        self.adapt1 = _conv(total, c, rng)
        self.adapt2 = _conv(total, 2 * c, rng)
        self.adapt3 = _conv(total, 4 * c, rng)
        self.dec3 = _conv(4 * c, 2 * c, rng)
        self.dec2 = _conv(4 * c, c, rng)
        self.dec1 = _conv(2 * c, c, rng)
        self.out = _conv(c, 3, rng)

    def encode(self, image: torch.Tensor):
        h1 = F.leaky_relu(self.enc1(image), 0.2)
        h2 = F.leaky_relu(self.enc2(h1), 0.2)
        h3 = F.leaky_relu(self.enc3(h2), 0.2)
        return h1, h2, h3

    def style_features(self, gen_feats):
        """Adapt a list of generator feature maps to the three levels."""
        r = self.config.resolution
        ups = [F.interpolate(f if f.ndim == 4 else f.unsqueeze(0), size=(r, r), mode="nearest") for f in gen_feats]
        stack = torch.cat(ups, dim=1)
        if stack.shape[1] != sum(self.config.gen_channels):
            raise ValueError(
                f"generator features have {stack.shape[1]} channels, expected {sum(self.config.gen_channels)}"
            )
        s1 = F.leaky_relu(self.adapt1(stack), 0.2)
        s2 = F.leaky_relu(self.adapt2(F.avg_pool2d(stack, 2)), 0.2)
        s3 = F.leaky_relu(self.adapt3(F.avg_pool2d(stack, 4)), 0.2)
        return s1, s2, s3

    def decode(self, y1, y2, y3):
        h = F.leaky_relu(self.dec3(y3), 0.2)
        h = F.interpolate(h, scale_factor=2, mode="nearest")
        h = F.leaky_relu(self.dec2(torch.cat([h, y2], dim=1)), 0.2)
        h = F.interpolate(h, scale_factor=2, mode="nearest")
        h = F.leaky_relu(self.dec1(torch.cat([h, y1], dim=1)), 0.2)
        return torch.tanh(self.out(h))

    def forward(self, image: torch.Tensor, gen_feats):
        """Reconstruction with statistics transfer; no output smoothing."""
        if image.ndim == 3:
            image = image.unsqueeze(0)
        if image.shape[-1] != self.config.resolution:
            raise ValueError(f"rerenderer runs at {self.config.resolution}, got {tuple(image.shape[-2:])}")
        h1, h2, h3 = self.encode(image)
        s1, s2, s3 = self.style_features(gen_feats)
        eps = self.config.eig_eps
        y1 = coloring(whitening(h1, eps), s1, eps)
        y2 = coloring(whitening(h2, eps), s2, eps)
        y3 = coloring(whitening(h3, eps), s3, eps)
        return self.decode(y1, y2, y3)


def rerender_image(rr: Rerenderer, image: np.ndarray, gen_feats) -> np.ndarray:
    """Full pipeline for one image: transfer, decode, guided smoothing."""
    x = torch.from_numpy(np.asarray(image, dtype=np.float32)[None].copy())
    with torch.no_grad():
        raw = rr(x, [f.detach() for f in gen_feats])[0].numpy()
    return guided_smooth(raw, guide=None, radius=rr.config.smooth_radius, eps=rr.config.smooth_eps)


class RerenderDiverged(RuntimeError):
    pass


def features_for_images(g, d, images: torch.Tensor, rng) -> list:
    """Generator features at each image's own projected code."""
    with torch.no_grad():
        proj = d.project(images)
        z = torch.from_numpy(
            sample_latent_batch(rng, images.shape[0], g.config.k_layers, g.config.z_dim, dtype=np.float32)
        )
        return [f.detach() for f in g.intermediate_features(z, proj)]


def train_rerenderer(g, d, dataset, config: RerenderConfig, log_every: int = 50, log_fn=None):
    """Reconstruction training of the rerenderer against a frozen generator.

    Loss: pixel L1 plus feature_l1_weight * L1 in the feature space of a
    fixed randomly initialized embedder. Returns (rerenderer, history) where
    history is the list of per-step losses.
    """
    rr = Rerenderer(config)
    opt = torch.optim.Adam(rr.parameters(), lr=config.lr)
    embedder = ConvEmbedder(resolution=config.resolution)
    emb_w = [w for w in embedder._weights]

    def emb_maps(x):
        h = x
        for w in emb_w:
            h = F.leaky_relu(F.conv2d(h, w, stride=2, padding=1), 0.2)
        return h

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7E57]))
    history = []
    pool = dataset.train_indices
    for step in range(config.steps):
        picks = rng.integers(0, len(pool), size=config.batch)
        real = torch.from_numpy(dataset.batch(pool[picks], config.resolution))
        feats = features_for_images(g, d, real, rng)
        recon = rr(real, feats)
        pixel_l1 = (recon - real).abs().mean()
        feat_l1 = (emb_maps(recon) - emb_maps(real)).abs().mean()
        loss = pixel_l1 + config.feature_l1_weight * feat_l1
        if not torch.isfinite(loss):
            raise RerenderDiverged(f"non-finite loss at step {step}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        history.append(float(loss.detach()))
        if log_fn is not None and (step % log_every == 0 or step == config.steps - 1):
            log_fn(step, history[-1])
    return rr, history


RERENDER_KIND = "rerenderer"


def rerenderer_to_bytes(rr: Rerenderer) -> bytes:
    manifest = {"kind": RERENDER_KIND, "format_version": 1, "config": _config_flat(rr.config)}
    blocks = {f"param/{name}": p.detach().numpy().astype(np.float32) for name, p in rr.named_parameters()}
    return pack_container(manifest, blocks)


def rerenderer_from_bytes(raw: bytes) -> Rerenderer:
    manifest, blocks = unpack_container(raw)
    if manifest.get("kind") != RERENDER_KIND:
        raise ContainerError(f"not a rerenderer checkpoint (kind={manifest.get('kind')!r})")
    flat = dict(manifest["config"])
    flat["gen_channels"] = tuple(int(v) for v in flat["gen_channels"])
    config = RerenderConfig(**flat)
    rr = Rerenderer(config)
    with torch.no_grad():
        for name, p in rr.named_parameters():
            key = f"param/{name}"
            if key not in blocks:
                raise ContainerError(f"checkpoint missing parameter {name}")
            p.copy_(torch.from_numpy(blocks[key].copy()))
    return rr


def save_rerenderer(rr: Rerenderer, path) -> None:
    with open(path, "wb") as fh:
        fh.write(rerenderer_to_bytes(rr))


def load_rerenderer(path) -> Rerenderer:
    with open(path, "rb") as fh:
        return rerenderer_from_bytes(fh.read())


def _config_flat(config: RerenderConfig) -> dict:
    flat = asdict(config)
    flat["gen_channels"] = list(config.gen_channels)
    return flat
