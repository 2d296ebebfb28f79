"""Edit recipes: a JSON description of a reproducible manipulation.

A recipe pins the sample seed, the direction documents with blend weights,
an optional layer mask, and the gamma sweep. Replaying the same recipe
through the CLI or the HTTP service yields byte-identical PNGs because both
run this module against the same checkpoint.
"""

from __future__ import annotations

from .codes import apply_direction, compose_directions, direction_from_dict, direction_to_dict

RECIPE_KIND = "edit-recipe"
RECIPE_VERSION = 1


def make_recipe(seed, directions, weights=None, gammas=(1.0,), layers=None, model_hash="") -> dict:
    directions = list(directions)
    if weights is None:
        weights = [1.0] * len(directions)
    doc = {
        "format_version": RECIPE_VERSION,
        "kind": RECIPE_KIND,
        "model_hash": model_hash,
        "seed": int(seed),
        "gammas": [float(g) for g in gammas],
        "weights": [float(w) for w in weights],
        "directions": [direction_to_dict(d) for d in directions],
    }
    if layers is not None:
        doc["layers"] = sorted(int(v) for v in layers)
    return doc


def validate_recipe(doc: dict) -> dict:
    if not isinstance(doc, dict):
        raise ValueError("recipe must be a JSON object")
    if doc.get("kind") != RECIPE_KIND:
        raise ValueError(f"not an edit recipe (kind={doc.get('kind')!r})")
    if int(doc.get("format_version", -1)) != RECIPE_VERSION:
        raise ValueError(f"unsupported recipe format_version {doc.get('format_version')!r}")
    for key in ("seed", "gammas", "directions"):
        if key not in doc:
            raise ValueError(f"recipe is missing {key!r}")
    if not doc["directions"]:
        raise ValueError("recipe has no directions")
    weights = doc.get("weights", [1.0] * len(doc["directions"]))
    if len(weights) != len(doc["directions"]):
        raise ValueError("recipe weights and directions differ in length")
    return doc


def recipe_direction(doc: dict):
    """The single blended, layer-masked direction a recipe describes."""
    validate_recipe(doc)
    directions = [direction_from_dict(d) for d in doc["directions"]]
    weights = doc.get("weights", [1.0] * len(directions))
    direction = compose_directions(directions, weights) if len(directions) > 1 else directions[0]
    if len(directions) == 1 and weights[0] != 1.0:
        direction = compose_directions(directions, weights)
    if "layers" in doc and doc["layers"] is not None:
        direction = direction.with_mask(doc["layers"])
    return direction


def apply_recipe(session, doc: dict):
    """Returns [(gamma, image array)] for the recipe's gamma sweep."""
    validate_recipe(doc)
    if doc.get("model_hash") and session.model_hash and doc["model_hash"] != session.model_hash:
        raise ValueError(
            f"recipe was made for model {doc['model_hash']} but the loaded model is {session.model_hash}"
        )
    direction = recipe_direction(doc)
    session.check_direction(direction)
    z, t = session.base_codes(doc["seed"])
    out = []
    for gamma in doc["gammas"]:
        shifted = apply_direction(t, direction, float(gamma))
        out.append((float(gamma), session.generate(z, shifted)))
    return out
