"""Fréchet distance between image-feature distributions plus the analytic
factor oracles (luminance, hue, blob count) used to validate the synthetic
image domain.

The default embedder is a small fixed-seed convolutional network, not an
Inception model, so absolute distances are not comparable to published
Inception-based numbers; a plug-in interface accepts externally computed
feature files for that. Distances computed from the small pair-protocol
sample sizes are statistically fragile and should be read as coarse signals.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np
import torch
from scipy import ndimage

# Luminance weights (ITU-R BT.601) and an orthonormal basis of the
# luminance-neutral chroma plane. The synthetic renderer injects hue along
# this basis, which makes the hue oracle an exact projection for renders.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def _chroma_basis():
    w = LUMA_WEIGHTS
    u1 = np.array([1.0, 0.0, 0.0]) - (w[0] / (w @ w)) * w
    e1 = u1 / np.linalg.norm(u1)
    u2 = np.cross(w, e1)
    e2 = u2 / np.linalg.norm(u2)
    return e1, e2


CHROMA_E1, CHROMA_E2 = _chroma_basis()

STATS_MAGIC = b"MSFS"
STATS_FORMAT_VERSION = 1


class MatrixSqrtError(RuntimeError):
    """Raised when the covariance square root cannot be computed reliably."""


@dataclass(frozen=True)
class FeatureStats:
    """First two moments of a feature distribution."""

    mean: np.ndarray
    cov: np.ndarray
    count: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError(f"inconsistent stats shapes: mean {mean.shape}, cov {cov.shape}")
        if self.count < 2:
            raise ValueError("FeatureStats needs at least 2 samples")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


class StatsAccumulator:
    """Single-pass mean/covariance over a stream of feature vectors.

    Uses the pairwise (Chan et al.) update so that batch-split accumulation
    matches whole-batch accumulation to ~1e-8. Covariance is the unbiased
    sample covariance (ddof=1).
    """

    def __init__(self):
        self._n = 0
        self._mean = None
        self._m2 = None

    def update(self, features) -> "StatsAccumulator":
        x = np.asarray(features, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError(f"expected a nonempty (n, dim) batch, got shape {x.shape}")
        if self._mean is not None and x.shape[1] != self._mean.size:
            raise ValueError(f"feature dimension changed mid-stream: {self._mean.size} -> {x.shape[1]}")
        n_b = x.shape[0]
        mean_b = x.mean(axis=0)
        dev = x - mean_b
        m2_b = dev.T @ dev
        if self._mean is None:
            self._n, self._mean, self._m2 = n_b, mean_b, m2_b
        else:
            n = self._n + n_b
            delta = mean_b - self._mean
            self._m2 = self._m2 + m2_b + np.outer(delta, delta) * (self._n * n_b / n)
            self._mean = self._mean + delta * (n_b / n)
            self._n = n
        return self

    def finalize(self) -> FeatureStats:
        if self._n < 2:
            raise ValueError("need at least 2 samples to estimate covariance")
        cov = self._m2 / (self._n - 1)
        cov = (cov + cov.T) / 2.0
        return FeatureStats(self._mean.copy(), cov, self._n)


def accumulate_stats(features) -> FeatureStats:
    """Stats over an iterable of vectors or batches."""
    acc = StatsAccumulator()
    arr = np.asarray(features) if not hasattr(features, "__next__") else None
    if arr is not None and arr.ndim == 2:
        acc.update(arr)
    else:
        for item in features:
            acc.update(np.asarray(item))
    return acc.finalize()


def sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Negative eigenvalues from roundoff are clamped to zero. Raises
    MatrixSqrtError with a conditioning report when the decomposition fails
    or the residual is out of tolerance.
    """
    sym = (mat + mat.T) / 2.0
    if not np.all(np.isfinite(sym)):
        raise MatrixSqrtError("matrix contains non-finite entries")
    try:
        vals, vecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise MatrixSqrtError(f"eigendecomposition failed: {exc}") from exc
    vals = np.clip(vals, 0.0, None)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    residual = np.linalg.norm(root @ root - sym)
    scale = max(np.linalg.norm(sym), 1e-30)
    if residual / scale > 1e-6:
        cond = vals.max() / max(vals[vals > 0].min(), 1e-30) if np.any(vals > 0) else np.inf
        raise MatrixSqrtError(
            f"matrix square root residual {residual / scale:.3e} out of tolerance "
            f"(eigenvalue range [{vals.min():.3e}, {vals.max():.3e}], cond~{cond:.3e})"
        )
    return root


def frechet_distance(a: FeatureStats, b: FeatureStats, eps: float = 1e-6) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    Both covariances are regularized by eps*I before use, which keeps the
    identity case exactly zero.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    eye = np.eye(a.dim)
    cov_a = a.cov + eps * eye
    cov_b = b.cov + eps * eye
    root_a = sqrtm_psd(cov_a)
    inner = root_a @ cov_b @ root_a
    root_inner = sqrtm_psd(inner)
    diff = a.mean - b.mean
    fd = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(root_inner))
    return max(fd, 0.0)


class ConvEmbedder:
    """Small convolutional embedder with weights generated from a fixed seed.

    The weights are a deterministic function of the seed (numpy PCG64
    stream), so features are reproducible without shipping a weights file.
    """

    def __init__(self, seed: int = 2161, resolution: int = 32, feature_dim: int = 64):
        self.seed = seed
        self.resolution = resolution
        self.feature_dim = feature_dim
        rng = np.random.default_rng(np.random.SeedSequence([seed]))
        chans = [3, 16, 32, feature_dim]
        self._weights = []
        for c_in, c_out in zip(chans[:-1], chans[1:]):
            w = rng.standard_normal((c_out, c_in, 3, 3)) * np.sqrt(2.0 / (c_in * 9))
            self._weights.append(torch.from_numpy(w.astype(np.float32)))

    def feature_maps(self, images) -> torch.Tensor:
        """Final conv activation, (B, feature_dim, R/8, R/8)."""
        x = torch.as_tensor(np.asarray(images, dtype=np.float32))
        if x.ndim == 3:
            x = x[None]
        if x.shape[-1] != self.resolution or x.shape[-2] != self.resolution:
            raise ValueError(f"embedder expects {self.resolution}x{self.resolution} images, got {tuple(x.shape)}")
        with torch.no_grad():
            for w in self._weights:
                x = torch.nn.functional.conv2d(x, w, stride=2, padding=1)
                x = torch.nn.functional.leaky_relu(x, 0.2)
        return x

    def embed(self, images) -> np.ndarray:
        """(B, feature_dim) pooled features."""
        return self.feature_maps(images).mean(dim=(2, 3)).numpy()


def embed_images(embedder, images) -> np.ndarray:
    """Deterministic feature vectors from a pluggable embedder."""
    return np.asarray(embedder.embed(images))


def _to_unit_interval(images) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != 3:
        raise ValueError(f"expected (B, 3, H, W) images, got shape {x.shape}")
    return (x + 1.0) / 2.0


def luminance_series(images) -> np.ndarray:
    """Mean luminance per image on the [-1, 1] pixel scale."""
    x01 = _to_unit_interval(images)
    y01 = np.tensordot(LUMA_WEIGHTS, x01, axes=(0, 1))  # (B, H, W)
    return 2.0 * y01.mean(axis=(1, 2)) - 1.0


def hue_series(images) -> np.ndarray:
    """Estimated hue angle in [0, 2*pi) from the mean chroma vector."""
    x01 = _to_unit_interval(images)
    y01 = np.tensordot(LUMA_WEIGHTS, x01, axes=(0, 1))
    chroma = x01 - y01[:, None, :, :]
    mean_chroma = chroma.mean(axis=(2, 3))  # (B, 3)
    c1 = mean_chroma @ CHROMA_E1
    c2 = mean_chroma @ CHROMA_E2
    return np.mod(np.arctan2(c2, c1), 2.0 * np.pi)


def blob_count_series(images, band_fraction: float = 0.42, min_area_fraction: float = 0.0015) -> np.ndarray:
    """Connected bright blobs in the top image band.

    Background is removed with a per-row median; the threshold self-calibrates
    against the image's estimated brightness. Intended for renders with
    brightness above ~0.25.
    """
    x01 = _to_unit_interval(images)
    y01 = np.tensordot(LUMA_WEIGHTS, x01, axes=(0, 1))
    b_est = np.clip(y01.mean(axis=(1, 2)) / 0.5, 0.05, None)
    counts = np.zeros(x01.shape[0], dtype=np.int64)
    h = y01.shape[1]
    band_rows = max(int(round(h * band_fraction)), 2)
    min_area = max(int(round(min_area_fraction * y01.shape[1] * y01.shape[2])), 2)
    for i in range(y01.shape[0]):
        band = y01[i, :band_rows]
        residual = band - np.median(band, axis=1, keepdims=True)
        mask = residual > 0.10 * b_est[i]
        labels, n = ndimage.label(mask)
        sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=range(1, n + 1))
        counts[i] = int(np.sum(np.asarray(sizes) >= min_area))
    return counts


_ORACLES = {
    "luminance": luminance_series,
    "hue": hue_series,
    "blob_count": blob_count_series,
}


def factor_response(images, oracle: str) -> np.ndarray:
    """Per-image analytic factor estimate for the synthetic domain."""
    if oracle not in _ORACLES:
        raise ValueError(f"unknown oracle {oracle!r}; available: {sorted(_ORACLES)}")
    return _ORACLES[oracle](images)


def save_stats(stats: FeatureStats, path) -> None:
    """Binary block: magic, version, dim, count, mean, covariance, CRC32."""
    payload = bytearray()
    payload += STATS_MAGIC
    payload += struct.pack("<IIQ", STATS_FORMAT_VERSION, stats.dim, stats.count)
    payload += stats.mean.astype("<f8").tobytes()
    payload += np.ascontiguousarray(stats.cov, dtype="<f8").tobytes()
    payload += struct.pack("<I", zlib.crc32(bytes(payload)))
    with open(path, "wb") as fh:
        fh.write(bytes(payload))


def load_stats(path) -> FeatureStats:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 24 or raw[:4] != STATS_MAGIC:
        raise ValueError("not a feature-stats file")
    body, crc = raw[:-4], struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(body) != crc:
        raise ValueError("feature-stats file failed checksum")
    version, dim, count = struct.unpack("<IIQ", body[4:20])
    if version != STATS_FORMAT_VERSION:
        raise ValueError(f"unsupported stats format_version {version}")
    off = 20
    mean = np.frombuffer(body, dtype="<f8", count=dim, offset=off).copy()
    off += dim * 8
    cov = np.frombuffer(body, dtype="<f8", count=dim * dim, offset=off).reshape(dim, dim).copy()
    return FeatureStats(mean, cov, int(count))
