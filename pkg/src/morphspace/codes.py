"""Multi-scale code types and the vector arithmetic behind all editing ops.

Codes are stored per layer as a (K, dim) array. Layer k of a transformation
code conditions generator layer k; the flattened view only exists at the
concatenation boundary of the discriminator's projection output.

Arithmetic is carried out in float64 so that identities like
``apply(t, between(t, t2), 1) == t2`` hold bit-exactly for sampled codes;
a ``dtype`` switch is available where 32-bit behaviour is wanted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_T_DIM = 4
DEFAULT_Z_DIM = 32
DEFAULT_K = 5

DIRECTION_FORMAT_VERSION = 1


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _validate_layers(arr: np.ndarray, what: str) -> None:
    if arr.ndim != 2:
        raise ValueError(f"{what} must be a (K, dim) array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{what} needs K >= 1 and dim >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite entries")


class _LayeredCode:
    """Shared behaviour of per-layer code vectors. Immutable."""

    __slots__ = ("_array",)

    def __init__(self, layers):
        arr = np.array(layers)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        _validate_layers(arr, type(self).__name__)
        self._array = _freeze(arr)

    @property
    def array(self) -> np.ndarray:
        """(K, dim) read-only view."""
        return self._array

    @property
    def layers(self) -> list[np.ndarray]:
        return [self._array[k] for k in range(self.k)]

    @property
    def k(self) -> int:
        return self._array.shape[0]

    @property
    def dim(self) -> int:
        return self._array.shape[1]

    @property
    def flat(self) -> np.ndarray:
        """Flattened view [t_1^T, ..., t_K^T]^T of length K*dim."""
        return self._array.reshape(-1)

    @property
    def dtype(self):
        return self._array.dtype

    def layer(self, k: int) -> np.ndarray:
        """1-based layer access."""
        if not 1 <= k <= self.k:
            raise IndexError(f"layer index {k} outside [1..{self.k}]")
        return self._array[k - 1]

    def astype(self, dtype):
        return type(self)(self._array.astype(dtype))

    def __eq__(self, other):
        return (
            type(self) is type(other)
            and self._array.shape == other._array.shape
            and np.array_equal(self._array, other._array)
        )

    def __repr__(self):
        return f"{type(self).__name__}(K={self.k}, dim={self.dim}, dtype={self._array.dtype})"


class TransformationCode(_LayeredCode):
    """Multi-scale transformation code t = [t_1 .. t_K]."""


class LatentCode(_LayeredCode):
    """Multi-scale latent code z = [z_1 .. z_K]."""


def _full_mask(k: int) -> frozenset[int]:
    return frozenset(range(1, k + 1))


@dataclass(frozen=True)
class TransformationDirection:
    """Difference vector in transformation space, with an optional layer mask.

    ``delta`` has the same (K, t_dim) shape as the codes it applies to.
    ``layer_mask`` holds 1-based layer indices the direction acts on.
    """

    delta: np.ndarray
    layer_mask: frozenset[int] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        arr = np.asarray(self.delta)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        arr = _freeze(arr.copy())
        _validate_layers(arr, "TransformationDirection.delta")
        object.__setattr__(self, "delta", arr)
        mask = self.layer_mask
        if mask is None:
            mask = _full_mask(arr.shape[0])
        else:
            mask = frozenset(int(i) for i in mask)
            for i in mask:
                if not 1 <= i <= arr.shape[0]:
                    raise ValueError(f"layer_mask index {i} outside [1..{arr.shape[0]}]")
        object.__setattr__(self, "layer_mask", mask)

    @property
    def k(self) -> int:
        return self.delta.shape[0]

    @property
    def dim(self) -> int:
        return self.delta.shape[1]

    def norm(self) -> float:
        return float(np.linalg.norm(self.delta[sorted(i - 1 for i in self.layer_mask)]))

    def negated(self) -> "TransformationDirection":
        return TransformationDirection(-self.delta, self.layer_mask)

    def with_mask(self, layers) -> "TransformationDirection":
        return TransformationDirection(self.delta, frozenset(layers))


def sample_latent(rng, k: int = DEFAULT_K, z_dim: int = DEFAULT_Z_DIM, dtype=np.float64) -> LatentCode:
    """Sample z with every component i.i.d. standard normal."""
    arr = sample_latent_batch(rng, 1, k, z_dim, dtype=dtype)[0]
    return LatentCode(arr)


def sample_transformation(rng, k: int = DEFAULT_K, t_dim: int = DEFAULT_T_DIM, dtype=np.float64) -> TransformationCode:
    """Sample t with every component i.i.d. uniform on (-1, 1)."""
    arr = sample_transformation_batch(rng, 1, k, t_dim, dtype=dtype)[0]
    return TransformationCode(arr)


def sample_latent_batch(rng, batch: int, k: int, z_dim: int, dtype=np.float64) -> np.ndarray:
    """(batch, K, z_dim) array of i.i.d. N(0, 1) samples."""
    if k < 1 or z_dim < 1 or batch < 1:
        raise ValueError(f"batch, K and z_dim must be positive, got {batch}, {k}, {z_dim}")
    rng = _as_rng(rng)
    return rng.standard_normal((batch, k, z_dim)).astype(dtype, copy=False)


def sample_transformation_batch(rng, batch: int, k: int, t_dim: int, dtype=np.float64) -> np.ndarray:
    """(batch, K, t_dim) array of i.i.d. U(-1, 1) samples."""
    if k < 1 or t_dim < 1 or batch < 1:
        raise ValueError(f"batch, K and t_dim must be positive, got {batch}, {k}, {t_dim}")
    rng = _as_rng(rng)
    return rng.uniform(-1.0, 1.0, size=(batch, k, t_dim)).astype(dtype, copy=False)


def codes_from_seed(seed: int, k: int, z_dim: int, t_dim: int) -> tuple[LatentCode, TransformationCode]:
    """Derive a (z, t) pair from one integer seed; z is drawn first, then t.

    This is the single source of truth for seed-addressed synthesis, shared
    by the CLI and the HTTP service so replays are bit-identical.
    """
    rng = np.random.default_rng(int(seed))
    z = sample_latent(rng, k, z_dim)
    t = sample_transformation(rng, k, t_dim)
    return z, t


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def direction_between(t_a: TransformationCode, t_b: TransformationCode) -> TransformationDirection:
    """Direction from t_a to t_b: delta = t_b - t_a, full layer mask."""
    _check_same_shape(t_a.array, t_b.array, "direction_between")
    delta = t_b.array.astype(np.float64) - t_a.array.astype(np.float64)
    return TransformationDirection(delta.astype(t_a.dtype, copy=False))


def apply_direction(t: TransformationCode, d: TransformationDirection, gamma: float) -> TransformationCode:
    """t + gamma * d on masked layers; unmasked layers pass through untouched.

    gamma is unbounded: results may leave the sampling support, which is an
    experiment rather than an error.
    """
    _check_same_shape(t.array, d.delta, "apply_direction")
    if gamma == 0.0:
        return TransformationCode(t.array)
    out = t.array.astype(np.float64).copy()
    idx = sorted(i - 1 for i in d.layer_mask)
    out[idx] = out[idx] + float(gamma) * d.delta[idx].astype(np.float64)
    return TransformationCode(out.astype(t.dtype, copy=False))


def compose_directions(ds, weights) -> TransformationDirection:
    """Weighted sum of directions; the mask is the union of the inputs' masks."""
    ds = list(ds)
    weights = list(weights)
    if not ds:
        raise ValueError("compose_directions: empty direction list")
    if len(ds) != len(weights):
        raise ValueError(f"compose_directions: {len(ds)} directions vs {len(weights)} weights")
    shape = ds[0].delta.shape
    for d in ds[1:]:
        _check_same_shape(ds[0].delta, d.delta, "compose_directions")
    total = np.zeros(shape, dtype=np.float64)
    mask: frozenset[int] = frozenset()
    for d, w in zip(ds, weights):
        idx = sorted(i - 1 for i in d.layer_mask)
        total[idx] += float(w) * d.delta[idx].astype(np.float64)
        mask = mask | d.layer_mask
    return TransformationDirection(total.astype(ds[0].delta.dtype, copy=False), mask)


def direction_to_dict(d: TransformationDirection) -> dict:
    """JSON-compatible document; floats are emitted at full precision."""
    return {
        "format_version": DIRECTION_FORMAT_VERSION,
        "K": d.k,
        "t_dim": d.dim,
        "layer_mask": sorted(d.layer_mask),
        "delta": [[float(v) for v in row] for row in np.asarray(d.delta, dtype=np.float64)],
    }


def direction_from_dict(doc: dict) -> TransformationDirection:
    version = doc.get("format_version")
    if version != DIRECTION_FORMAT_VERSION:
        raise ValueError(f"unsupported direction format_version {version!r}")
    delta = np.array(doc["delta"], dtype=np.float64)
    if delta.shape != (int(doc["K"]), int(doc["t_dim"])):
        raise ValueError(
            f"direction document inconsistent: delta shape {delta.shape} "
            f"vs declared ({doc['K']}, {doc['t_dim']})"
        )
    return TransformationDirection(delta, frozenset(int(i) for i in doc["layer_mask"]))


def save_direction(d: TransformationDirection, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(direction_to_dict(d), fh, indent=2)
        fh.write("\n")


def load_direction(path) -> TransformationDirection:
    with open(path, "r", encoding="utf-8") as fh:
        return direction_from_dict(json.load(fh))
