"""Extracting transformation directions from image pairs and re-deploying
them on generated images.

The discriminator's projection heads map any image (real or synthesized)
into the shared code space; the difference of two projections is a direction
that can be scaled, layer-masked, composed with other directions, and added
to a sampled code before generation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
import torch

from .codes import (
    LatentCode,
    TransformationCode,
    TransformationDirection,
    apply_direction,
    compose_directions,
    direction_between,
    direction_from_dict,
    direction_to_dict,
)


def _code_batch(code, like: str):
    arr = np.asarray(code.array if hasattr(code, "array") else code, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"{like} code must be (k, dim), got {arr.shape}")
    return torch.from_numpy(arr[None].copy())


def _single_image(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected a (3, H, W) image, got {arr.shape}")
    return arr


def generate_image(g, z: LatentCode, t: TransformationCode) -> np.ndarray:
    """Decode one (z, t) pair to a float32 (3, R, R) image in [-1, 1]."""
    with torch.no_grad():
        img = g(_code_batch(z, "z"), _code_batch(t, "t"))
    return img[0].numpy()


def project_image(d, image) -> TransformationCode:
    """Recover the code-space position of one image."""
    x = torch.from_numpy(_single_image(image)[None].copy())
    if x.shape[2] != d.resolution:
        raise ValueError(f"image is {tuple(x.shape[2:])} but the model runs at {d.resolution}x{d.resolution}")
    with torch.no_grad():
        proj = d.project(x)
    return TransformationCode(proj[0].numpy().astype(np.float64))


@dataclass(frozen=True)
class ExtractionResult:
    """A direction plus the projections and provenance it came from."""

    direction: TransformationDirection
    t_source: TransformationCode
    t_target: TransformationCode
    model_hash: str = ""
    stage: int = -1

    def scaled(self, gamma: float) -> TransformationDirection:
        return TransformationDirection(self.direction.delta * gamma, self.direction.layer_mask)


def extract_transformation(d, image_a, image_b, model_hash: str = "") -> ExtractionResult:
    """Direction from image_a to image_b in the shared code space."""
    t_a = project_image(d, image_a)
    t_b = project_image(d, image_b)
    return ExtractionResult(
        direction=direction_between(t_a, t_b),
        t_source=t_a,
        t_target=t_b,
        model_hash=model_hash,
        stage=d.stage,
    )


def extract_mean_direction(d, pairs, model_hash: str = "") -> TransformationDirection:
    """Average direction over (image_a, image_b) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one image pair")
    results = [extract_transformation(d, a, b, model_hash) for a, b in pairs]
    return compose_directions([r.direction for r in results], [1.0 / len(results)] * len(results))


def transform_sequence(g, z: LatentCode, t: TransformationCode, direction: TransformationDirection, gammas):
    """Images for t + gamma * direction at each gamma.

    Samples are decoded one at a time so the gamma = 0 entry is bit-identical
    to generate_image(g, z, t).
    """
    out = []
    for gamma in gammas:
        shifted = apply_direction(t, direction, float(gamma))
        out.append(generate_image(g, z, shifted))
    return out


def layerwise_manipulate(g, z, t, direction: TransformationDirection, layers, gamma: float) -> np.ndarray:
    """Apply the direction only at the given 1-based layers."""
    return generate_image(g, z, apply_direction(t, direction.with_mask(layers), gamma))


def compose_and_apply(g, z, t, directions, weights, gamma: float = 1.0) -> np.ndarray:
    """Weighted blend of several directions applied in one shot."""
    return generate_image(g, z, apply_direction(t, compose_directions(directions, weights), gamma))


def extraction_to_dict(result: ExtractionResult) -> dict:
    doc = direction_to_dict(result.direction)
    doc["provenance"] = {
        "t_source": [list(map(float, row)) for row in result.t_source.array],
        "t_target": [list(map(float, row)) for row in result.t_target.array],
        "model_hash": result.model_hash,
        "stage": result.stage,
    }
    return doc


def extraction_from_dict(doc: dict) -> ExtractionResult:
    direction = direction_from_dict(doc)
    prov = doc.get("provenance", {})
    t_source = TransformationCode(np.asarray(prov["t_source"], dtype=np.float64))
    t_target = TransformationCode(np.asarray(prov["t_target"], dtype=np.float64))
    return ExtractionResult(
        direction=direction,
        t_source=t_source,
        t_target=t_target,
        model_hash=prov.get("model_hash", ""),
        stage=int(prov.get("stage", -1)),
    )


def direction_id(direction: TransformationDirection) -> str:
    """Stable content hash usable as a registry key."""
    doc = direction_to_dict(direction)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
