"""A loaded model plus the deterministic code plumbing shared by the CLI and
the HTTP service, so the two front ends produce identical bytes for the same
request."""

from __future__ import annotations

import hashlib
import io

import numpy as np

from .codes import LatentCode, TransformationCode, codes_from_seed
from .data import array_to_image, image_to_array
from .training import TrainState


def png_bytes(image: np.ndarray) -> bytes:
    """Deterministic PNG encoding of a (3, H, W) float image in [-1, 1]."""
    buf = io.BytesIO()
    array_to_image(image).save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def png_to_array(raw: bytes, resolution: int) -> np.ndarray:
    from PIL import Image

    with Image.open(io.BytesIO(raw)) as im:
        im.load()
        return image_to_array(im, resolution)


class ModelSession:
    """Inference wrapper around a training checkpoint."""

    def __init__(self, state: TrainState, model_hash: str = ""):
        self.state = state
        self.g = state.g
        self.d = state.d
        self.config = state.config
        self.model_hash = model_hash
        self.g.fade_alpha = 1.0
        self.d.fade_alpha = 1.0
        for p in self.g.parameters():
            p.requires_grad_(False)
        for p in self.d.parameters():
            p.requires_grad_(False)

    @classmethod
    def from_checkpoint(cls, path) -> "ModelSession":
        with open(path, "rb") as fh:
            raw = fh.read()
        from .training import state_from_bytes

        return cls(state_from_bytes(raw), hashlib.sha256(raw).hexdigest()[:16])

    @property
    def resolution(self) -> int:
        return self.g.resolution

    @property
    def k_layers(self) -> int:
        return self.config.k_layers

    def base_codes(self, seed: int) -> tuple[LatentCode, TransformationCode]:
        """The (z, t) pair every front end derives from a sample seed."""
        return codes_from_seed(int(seed), self.config.k_layers, self.config.z_dim, self.config.t_dim)

    def generate(self, z, t) -> np.ndarray:
        from .transform import generate_image

        return generate_image(self.g, z, t)

    def project(self, image) -> TransformationCode:
        from .transform import project_image

        return project_image(self.d, image)

    def ingest(self, png: bytes) -> np.ndarray:
        return png_to_array(png, self.resolution)

    def check_direction(self, direction) -> None:
        if direction.k != self.k_layers or direction.dim != self.config.t_dim:
            raise ValueError(
                f"direction shape ({direction.k}, {direction.dim}) does not match "
                f"model codes ({self.k_layers}, {self.config.t_dim})"
            )


def load_session(path) -> ModelSession:
    return ModelSession.from_checkpoint(path)
