"""Image datasets: a synthetic scene renderer with known generative factors,
a folder loader for real images, and factor-matched pair queries.

Synthetic scenes are built so the factor oracles in metrics.py are exact:
  * brightness multiplies the whole unit-scale image, so mean luminance on
    the [0, 1] scale is 0.5 * brightness (within +-0.04 from scene content);
  * hue tints along a luminance-neutral chroma basis, so the angle of the
    mean chroma vector recovers the hue factor exactly;
  * cloud blobs are disjoint bright bumps in the top band, so a
    connected-component count recovers object_count.

Every image is a pure function of (factors, seed, resolution).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image

from .metrics import CHROMA_E1, CHROMA_E2

FACTOR_NAMES = ("brightness", "hue", "object_count", "object_size", "object_x", "object_y")

# Chroma tint amplitude. Kept small enough that no channel leaves [0, 1]
# before the brightness multiply, so the analytic decomposition never clips.
TINT_AMPLITUDE = 0.12
SHAPE_DEPTH = 0.20
CLOUD_HEIGHT = 0.22


@dataclass(frozen=True)
class SyntheticConfig:
    """Ranges for independently sampled scene factors."""

    n_samples: int = 2000
    brightness_range: tuple = (0.1, 1.0)
    hue_range: tuple = (0.0, 2.0 * math.pi)
    count_range: tuple = (0, 3)
    size_range: tuple = (0.08, 0.18)
    x_range: tuple = (0.35, 0.65)
    y_range: tuple = (0.52, 0.72)

    def validate(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        for name in ("brightness_range", "hue_range", "count_range", "size_range", "x_range", "y_range"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ValueError(f"{name} is reversed: {lo} > {hi}")
        if not (0.0 <= self.brightness_range[0] and self.brightness_range[1] <= 1.0):
            raise ValueError("brightness_range must lie in [0, 1]")
        if not (0 <= self.count_range[0] and self.count_range[1] <= 4):
            raise ValueError("count_range must lie in [0, 4]")
        return self


@dataclass(frozen=True)
class DatasetSpec:
    """What to load: an image folder or a synthetic factor dataset."""

    kind: str = "synthetic"
    path: str = ""
    resolution: int = 64
    holdout: float = 0.10
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)

    def validate(self):
        if self.kind not in ("synthetic", "folder"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.resolution < 4 or self.resolution & (self.resolution - 1):
            raise ValueError("dataset resolution must be a power of two >= 4")
        if not 0.0 <= self.holdout < 1.0:
            raise ValueError("holdout fraction must be in [0, 1)")
        if self.kind == "folder" and not self.path:
            raise ValueError("folder dataset needs a path")
        if self.kind == "synthetic":
            self.synthetic.validate()
        return self


def render_scene(factors: dict, seed: int, resolution: int = 64) -> np.ndarray:
    """Render one scene to a float32 (3, R, R) image in [-1, 1].

    Scene layout: vertical background gradient, up to 4 bright cloud blobs in
    the top band, one dark disk lower down, a global luminance-neutral hue
    tint, then a global brightness multiply.
    """
    r = int(resolution)
    if r < 4:
        raise ValueError("resolution must be at least 4")
    b = float(factors["brightness"])
    hue = float(factors["hue"])
    count = int(factors["object_count"])
    size = float(factors["object_size"])
    obj_x = float(factors.get("object_x", 0.5))
    obj_y = float(factors.get("object_y", 0.62))
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"brightness out of range: {b}")
    if not 0 <= count <= 4:
        raise ValueError(f"object_count out of range: {count}")

    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0x5CE11E]))
    ys, xs = np.mgrid[0:r, 0:r].astype(np.float64) / (r - 1)

    gray = 0.35 + 0.30 * ys
    soft = max(0.75 / 64.0, 1.0 / r)

    # Cloud blobs: jittered slots on a fixed grid keep them disjoint, so the
    # connected-component count always equals the factor.
    slots = rng.permutation(5)[:count]
    for slot in np.sort(slots):
        cx = (slot + 0.5) / 5.0 + rng.uniform(-0.012, 0.012)
        cy = 0.16 + rng.uniform(-0.04, 0.04)
        rad = 0.042 + rng.uniform(-0.005, 0.005)
        dist = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
        bump = 1.0 / (1.0 + np.exp((dist - rad) / soft))
        gray = gray + CLOUD_HEIGHT * bump

    dist = np.sqrt((xs - obj_x) ** 2 + (ys - obj_y) ** 2)
    disk = 1.0 / (1.0 + np.exp((dist - size / 2.0) / soft))
    gray = gray - SHAPE_DEPTH * disk
    gray = np.clip(gray, 0.02, 0.98)

    tint = TINT_AMPLITUDE * (math.cos(hue) * CHROMA_E1 + math.sin(hue) * CHROMA_E2)
    rgb = gray[None, :, :] + tint[:, None, None]
    rgb = rgb * b
    return (2.0 * rgb - 1.0).astype(np.float32)


def _downscale(image: np.ndarray, resolution: int) -> np.ndarray:
    """Block-mean downscale by a power-of-two factor."""
    c, h, w = image.shape
    if resolution == h:
        return image
    if resolution > h or h % resolution:
        raise ValueError(f"cannot resample {h}x{w} to {resolution} (need an integer power-of-two factor)")
    f = h // resolution
    return image.reshape(c, resolution, f, resolution, f).mean(axis=(2, 4), dtype=np.float32)


def _holdout_split(keys, holdout: float):
    """Deterministic split by key hash; stable under re-ordering of inputs."""
    ranked = sorted(range(len(keys)), key=lambda i: (hashlib.md5(keys[i].encode()).hexdigest(), keys[i]))
    n_test = int(math.floor(holdout * len(keys)))
    test = sorted(ranked[:n_test])
    train = sorted(ranked[n_test:])
    return np.array(train, dtype=np.int64), np.array(test, dtype=np.int64)


class ImageDataset:
    """Common access layer: images by index at any power-of-two resolution
    up to the base resolution, plus a deterministic train/holdout split."""

    def __init__(self, keys, base_resolution, holdout, factors=None, skipped=0):
        if not keys:
            raise ValueError("dataset is empty")
        self.keys = list(keys)
        self.base_resolution = int(base_resolution)
        self.factors = factors
        self.skipped = skipped
        self.train_indices, self.test_indices = _holdout_split(self.keys, holdout)
        if len(self.train_indices) == 0:
            raise ValueError("holdout fraction leaves no training samples")
        self._cache = {}

    def __len__(self):
        return len(self.keys)

    def _load_base(self, index: int) -> np.ndarray:
        raise NotImplementedError

    def image(self, index: int, resolution: int = None) -> np.ndarray:
        res = self.base_resolution if resolution is None else int(resolution)
        key = (index, res)
        if key not in self._cache:
            base = self._cache.get((index, self.base_resolution))
            if base is None:
                base = self._load_base(index)
                self._cache[(index, self.base_resolution)] = base
            self._cache[key] = _downscale(base, res)
        return self._cache[key]

    def batch(self, indices, resolution: int = None) -> np.ndarray:
        return np.stack([self.image(int(i), resolution) for i in indices])

    def factor_array(self, name: str) -> np.ndarray:
        if self.factors is None:
            raise ValueError("dataset has no factor annotations")
        if name not in self.factors:
            raise KeyError(f"unknown factor {name!r}; available: {sorted(self.factors)}")
        return self.factors[name]

    def factors_of(self, index: int) -> dict:
        return {name: self.factors[name][index] for name in self.factors}


class SyntheticDataset(ImageDataset):
    def __init__(self, config: SyntheticConfig, seed: int, resolution: int, holdout: float):
        config.validate()
        self.config = config
        self.seed = int(seed)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0xDA7A]))
        n = config.n_samples
        factors = {
            "brightness": rng.uniform(*config.brightness_range, size=n),
            "hue": rng.uniform(*config.hue_range, size=n),
            "object_count": rng.integers(config.count_range[0], config.count_range[1] + 1, size=n).astype(np.float64),
            "object_size": rng.uniform(*config.size_range, size=n),
            "object_x": rng.uniform(*config.x_range, size=n),
            "object_y": rng.uniform(*config.y_range, size=n),
        }
        self._scene_seeds = rng.integers(0, 2**32, size=n, dtype=np.uint64)
        keys = [f"scene_{i:06d}" for i in range(n)]
        super().__init__(keys, resolution, holdout, factors=factors)

    def _load_base(self, index: int) -> np.ndarray:
        return render_scene(self.factors_of(index), int(self._scene_seeds[index]), self.base_resolution)


class FolderDataset(ImageDataset):
    """Images from a directory. Files that fail a header check are skipped
    and counted; decoding is lazy and cached."""

    EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".webp")

    def __init__(self, path: str, resolution: int, holdout: float):
        if not os.path.isdir(path):
            raise FileNotFoundError(f"dataset folder not found: {path}")
        self.path = path
        names, skipped = [], 0
        for name in sorted(os.listdir(path)):
            if not name.lower().endswith(self.EXTENSIONS):
                continue
            try:
                with Image.open(os.path.join(path, name)) as im:
                    im.verify()
                names.append(name)
            except Exception:
                skipped += 1
        if not names:
            raise ValueError(f"no decodable images in {path} ({skipped} skipped)")
        super().__init__(names, resolution, holdout, skipped=skipped)

    def _load_base(self, index: int) -> np.ndarray:
        with Image.open(os.path.join(self.path, self.keys[index])) as im:
            return image_to_array(im, self.base_resolution)


def image_to_array(im: Image.Image, resolution: int) -> np.ndarray:
    """Center-crop to square, resize, and map to float32 (3, R, R) in [-1, 1]."""
    im = im.convert("RGB")
    w, h = im.size
    side = min(w, h)
    left, top = (w - side) // 2, (h - side) // 2
    im = im.crop((left, top, left + side, top + side))
    if side != resolution:
        im = im.resize((resolution, resolution), Image.BOX if side > resolution else Image.BILINEAR)
    arr = np.asarray(im, dtype=np.float32) / 255.0
    return (2.0 * arr - 1.0).transpose(2, 0, 1).copy()


def array_to_image(arr: np.ndarray) -> Image.Image:
    """Inverse of image_to_array up to 8-bit quantization."""
    x = np.asarray(arr, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValueError(f"expected (3, H, W), got {x.shape}")
    u8 = np.clip((x + 1.0) * 127.5, 0.0, 255.0).round().astype(np.uint8)
    return Image.fromarray(u8.transpose(1, 2, 0))


def load_dataset(spec: DatasetSpec, seed: int = 0) -> ImageDataset:
    spec.validate()
    if spec.kind == "synthetic":
        return SyntheticDataset(spec.synthetic, seed, spec.resolution, spec.holdout)
    return FolderDataset(spec.path, spec.resolution, spec.holdout)


def generate_synthetic(config: SyntheticConfig, seed: int, resolution: int = 64, holdout: float = 0.10) -> SyntheticDataset:
    return SyntheticDataset(config, seed, resolution, holdout)


def export_synthetic(dataset: SyntheticDataset, out_dir: str) -> int:
    """Write PNGs plus a factors.json sidecar; returns the number written."""
    os.makedirs(out_dir, exist_ok=True)
    sidecar = {}
    for i, key in enumerate(dataset.keys):
        array_to_image(dataset.image(i)).save(os.path.join(out_dir, key + ".png"))
        sidecar[key + ".png"] = {k: float(v) for k, v in dataset.factors_of(i).items()}
    with open(os.path.join(out_dir, "factors.json"), "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
    return len(dataset.keys)


# Per-factor scales used to normalize "everything else stayed put" distances.
_FACTOR_SCALES = {
    "brightness": 1.0,
    "hue": 2.0 * math.pi,
    "object_count": 4.0,
    "object_size": 0.15,
    "object_x": 0.4,
    "object_y": 0.3,
}

# Documented matching-quality bound for paired_factor_query: the normalized
# off-factor distance of every returned pair is below this value.
PAIR_DISTANCE_THRESHOLD = 0.25


def _off_factor_distance(factors, i, j, skip):
    total = 0.0
    for name, scale in _FACTOR_SCALES.items():
        if name == skip or name not in factors:
            continue
        d = factors[name][i] - factors[name][j]
        if name == "hue":
            d = math.remainder(d, 2.0 * math.pi)
        total += (d / scale) ** 2
    return math.sqrt(total)


def paired_factor_query(dataset: ImageDataset, factor: str, delta: float, n_pairs: int = 10, indices=None):
    """Pairs (i, j) with factor[j] - factor[i] ~= delta and all other factors
    nearly equal. Greedy nearest-neighbour matching without reuse; raises if
    the pool cannot supply n_pairs within PAIR_DISTANCE_THRESHOLD.
    """
    values = dataset.factor_array(factor)
    pool = np.asarray(indices if indices is not None else dataset.test_indices, dtype=np.int64)
    if pool.size < 2:
        raise ValueError("candidate pool too small for pairing")
    scale = _FACTOR_SCALES.get(factor, 1.0)
    delta_tol = max(0.05 * scale, 0.1 * abs(delta))

    names = [n for n in _FACTOR_SCALES if dataset.factors and n in dataset.factors and n != factor]
    others = np.stack([dataset.factors[n][pool] / _FACTOR_SCALES[n] for n in names], axis=1)
    hue_col = names.index("hue") if "hue" in names else None

    pairs, used = [], set()
    order = np.argsort(values[pool], kind="stable")
    for a_pos in order:
        a_pos = int(a_pos)
        if len(pairs) >= n_pairs:
            break
        if a_pos in used:
            continue
        i = int(pool[a_pos])
        target = values[i] + delta
        ok = np.abs(values[pool] - target) <= delta_tol
        ok[a_pos] = False
        diff = others - others[a_pos]
        if hue_col is not None:
            wrapped = np.remainder(diff[:, hue_col] * (2.0 * math.pi) + math.pi, 2.0 * math.pi) - math.pi
            diff[:, hue_col] = wrapped / (2.0 * math.pi)
        dist = np.sqrt((diff**2).sum(axis=1))
        dist[~ok] = np.inf
        for b_pos in used:
            dist[b_pos] = np.inf
        b_pos = int(np.argmin(dist))
        if not np.isfinite(dist[b_pos]) or dist[b_pos] > PAIR_DISTANCE_THRESHOLD:
            continue
        j = int(pool[b_pos])
        pairs.append((i, j))
        used.add(int(a_pos))
        used.add(b_pos)
    if len(pairs) < n_pairs:
        raise ValueError(
            f"could only match {len(pairs)} of {n_pairs} pairs for {factor!r} delta={delta} "
            f"within distance {PAIR_DISTANCE_THRESHOLD}; enlarge the pool or relax delta"
        )
    return pairs


_PAIR_RANGE_FIELDS = {
    "brightness": "brightness_range",
    "hue": "hue_range",
    "object_size": "size_range",
    "object_x": "x_range",
    "object_y": "y_range",
}


def render_factor_pairs(config: SyntheticConfig, factor: str, delta: float, n_pairs: int = 10,
                        seed: int = 0, resolution: int = 64):
    """Pairs of scenes identical except for one factor shifted by delta.

    Unlike paired_factor_query, which approximately matches existing samples,
    this re-renders each scene twice with the same jitter seed, so the named
    factor really is the only thing that changes. Returns a list of
    (image_a, image_b) arrays with factor(b) = factor(a) + delta.
    """
    config.validate()
    if factor not in _PAIR_RANGE_FIELDS:
        raise ValueError(f"cannot render controlled pairs for factor {factor!r}")
    lo, hi = getattr(config, _PAIR_RANGE_FIELDS[factor])
    if abs(delta) > hi - lo:
        raise ValueError(f"delta {delta} exceeds the {factor!r} range width {hi - lo}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0xFAC7]))
    pairs = []
    for _ in range(n_pairs):
        factors = {
            "brightness": float(rng.uniform(*config.brightness_range)),
            "hue": float(rng.uniform(*config.hue_range)),
            "object_count": int(rng.integers(config.count_range[0], config.count_range[1] + 1)),
            "object_size": float(rng.uniform(*config.size_range)),
            "object_x": float(rng.uniform(*config.x_range)),
            "object_y": float(rng.uniform(*config.y_range)),
        }
        base = float(rng.uniform(lo, hi - delta)) if delta >= 0 else float(rng.uniform(lo - delta, hi))
        scene_seed = int(rng.integers(0, 2**32))
        a = render_scene(dict(factors, **{factor: base}), scene_seed, resolution)
        b = render_scene(dict(factors, **{factor: base + delta}), scene_seed, resolution)
        pairs.append((a, b))
    return pairs
