"""HTTP service exposing a trained model for interactive use.

Images travel as base64 PNG strings inside JSON. Extracted and composed
directions live in an in-memory registry keyed by a content hash so clients
can refer to them by id. Validation failures return 400 with a field-level
message list; unknown direction ids return 404.
"""

from __future__ import annotations

import base64
import binascii
import os
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import __version__
from .codes import apply_direction, compose_directions, direction_from_dict, direction_to_dict
from .recipes import apply_recipe, make_recipe
from .session import ModelSession, png_bytes
from .transform import direction_id as compute_direction_id
from .transform import extract_transformation


class ApiError(Exception):
    def __init__(self, status: int, field: str, message: str):
        super().__init__(message)
        self.status = status
        self.field = field
        self.message = message


def _bad(field: str, message: str) -> ApiError:
    return ApiError(400, field, message)


class ProjectRequest(BaseModel):
    image: str


class GenerateRequest(BaseModel):
    seed: int


class ExtractRequest(BaseModel):
    image_a: str
    image_b: str


class ApplyRequest(BaseModel):
    seed: int
    gammas: list[float] = [1.0]
    direction_id: Optional[str] = None
    direction: Optional[dict] = None
    directions: Optional[list[dict]] = None
    weights: Optional[list[float]] = None
    layers: Optional[list[int]] = None


class ComposeRequest(BaseModel):
    direction_ids: Optional[list[str]] = None
    directions: Optional[list[dict]] = None
    weights: list[float]
    seed: Optional[int] = None
    gammas: Optional[list[float]] = None


class RerenderRequest(BaseModel):
    image: str
    direction_id: Optional[str] = None
    direction: Optional[dict] = None
    gamma: float = 1.0


def create_app(session: ModelSession, rerenderer=None, ui_dir=None) -> FastAPI:
    app = FastAPI(title="morphspace", version=__version__)
    registry: dict[str, dict] = {}

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"errors": [{"field": exc.field, "message": exc.message}]})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        errors = [
            {"field": ".".join(str(p) for p in err["loc"] if p != "body"), "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"errors": errors})

    def decode_image(b64: str, field: str) -> np.ndarray:
        try:
            raw = base64.b64decode(b64, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise _bad(field, f"invalid base64: {exc}")
        try:
            return session.ingest(raw)
        except Exception as exc:
            raise _bad(field, f"undecodable image: {exc}")

    def encode_image(arr: np.ndarray) -> str:
        return base64.b64encode(png_bytes(arr)).decode()

    def register(direction) -> str:
        did = compute_direction_id(direction)
        registry[did] = direction_to_dict(direction)
        return did

    def direction_doc_from(doc: dict, field: str):
        try:
            direction = direction_from_dict(doc)
            session.check_direction(direction)
            return direction
        except (ValueError, KeyError, TypeError) as exc:
            raise _bad(field, f"invalid direction document: {exc}")

    def resolve_single(body) -> "TransformationDirection":
        if body.direction_id is not None:
            if body.direction_id not in registry:
                raise ApiError(404, "direction_id", f"unknown direction_id {body.direction_id!r}")
            return direction_from_dict(registry[body.direction_id])
        if body.direction is not None:
            return direction_doc_from(body.direction, "direction")
        if body.directions:
            parts = [direction_doc_from(d, f"directions[{i}]") for i, d in enumerate(body.directions)]
            weights = body.weights or [1.0] * len(parts)
            if len(weights) != len(parts):
                raise _bad("weights", f"expected {len(parts)} weights, got {len(weights)}")
            return compose_directions(parts, weights)
        raise _bad("direction", "provide direction_id, direction, or directions")

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "version": __version__,
            "model_hash": session.model_hash,
            "resolution": session.resolution,
            "stage": session.g.stage,
            "k_layers": session.k_layers,
            "t_dim": session.config.t_dim,
            "z_dim": session.config.z_dim,
            "rerenderer": rerenderer is not None,
        }

    @app.post("/project")
    def project(body: ProjectRequest):
        code = session.project(decode_image(body.image, "image"))
        return {"code": code.array.tolist(), "k_layers": code.k, "t_dim": code.dim}

    @app.post("/generate")
    def generate(body: GenerateRequest):
        z, t = session.base_codes(body.seed)
        image = session.generate(z, t)
        return {"image": encode_image(image), "code": t.array.tolist(), "seed": body.seed,
                "resolution": session.resolution}

    @app.post("/extract")
    def extract(body: ExtractRequest):
        a = decode_image(body.image_a, "image_a")
        b = decode_image(body.image_b, "image_b")
        result = extract_transformation(session.d, a, b, model_hash=session.model_hash)
        did = register(result.direction)
        return {
            "direction_id": did,
            "direction": direction_to_dict(result.direction),
            "norm": result.direction.norm(),
            "t_source": result.t_source.array.tolist(),
            "t_target": result.t_target.array.tolist(),
        }

    @app.get("/directions")
    def directions():
        return {
            "directions": [
                {
                    "direction_id": did,
                    "norm": float(np.linalg.norm(np.asarray(doc["delta"]))),
                    "layer_mask": doc["layer_mask"],
                    "k_layers": doc["K"],
                    "t_dim": doc["t_dim"],
                }
                for did, doc in sorted(registry.items())
            ]
        }

    @app.post("/apply")
    def apply(body: ApplyRequest):
        direction = resolve_single(body)
        if body.layers is not None:
            try:
                direction = direction.with_mask(body.layers)
            except ValueError as exc:
                raise _bad("layers", str(exc))
        try:
            session.check_direction(direction)
        except ValueError as exc:
            raise _bad("direction", str(exc))
        if not body.gammas:
            raise _bad("gammas", "gamma sweep is empty")
        z, t = session.base_codes(body.seed)
        images = []
        for gamma in body.gammas:
            shifted = apply_direction(t, direction, float(gamma))
            images.append(encode_image(session.generate(z, shifted)))
        return {"images": images, "gammas": [float(g) for g in body.gammas], "seed": body.seed}

    @app.post("/compose")
    def compose(body: ComposeRequest):
        parts = []
        if body.direction_ids:
            for did in body.direction_ids:
                if did not in registry:
                    raise ApiError(404, "direction_ids", f"unknown direction_id {did!r}")
                parts.append(direction_from_dict(registry[did]))
        if body.directions:
            parts += [direction_doc_from(d, f"directions[{i}]") for i, d in enumerate(body.directions)]
        if not parts:
            raise _bad("directions", "nothing to compose")
        if len(body.weights) != len(parts):
            raise _bad("weights", f"expected {len(parts)} weights, got {len(body.weights)}")
        composed = compose_directions(parts, body.weights)
        did = register(composed)
        out = {"direction_id": did, "direction": direction_to_dict(composed), "norm": composed.norm()}
        if body.seed is not None and body.gammas:
            z, t = session.base_codes(body.seed)
            out["images"] = [
                encode_image(session.generate(z, apply_direction(t, composed, float(g)))) for g in body.gammas
            ]
            out["gammas"] = [float(g) for g in body.gammas]
        return out

    @app.post("/rerender")
    def rerender(body: RerenderRequest):
        if rerenderer is None:
            raise _bad("rerenderer", "no rerenderer loaded on this server")
        from .rerender import features_for_images, rerender_image
        import torch

        image = decode_image(body.image, "image")
        direction = resolve_single(body)
        session.check_direction(direction)
        t = session.project(image)
        shifted = apply_direction(t, direction, float(body.gamma))
        z, _ = session.base_codes(0)
        zt = torch.from_numpy(z.array.astype(np.float32)[None])
        tt = torch.from_numpy(shifted.array.astype(np.float32)[None])
        feats = [f.detach() for f in session.g.intermediate_features(zt, tt)]
        out = rerender_image(rerenderer, image, feats)
        return {"image": encode_image(out), "gamma": float(body.gamma)}

    @app.post("/recipe")
    def recipe_endpoint(body: ApplyRequest):
        """Build the canonical recipe document for an /apply request."""
        direction = resolve_single(body)
        doc = make_recipe(
            seed=body.seed,
            directions=[direction],
            weights=[1.0],
            gammas=body.gammas,
            layers=body.layers,
            model_hash=session.model_hash,
        )
        return {"recipe": doc}

    @app.post("/replay")
    def replay(body: dict):
        try:
            rendered = apply_recipe(session, body.get("recipe", body))
        except ValueError as exc:
            raise _bad("recipe", str(exc))
        return {"images": [encode_image(img) for _, img in rendered], "gammas": [g for g, _ in rendered]}

    if ui_dir and os.path.isdir(ui_dir):
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
