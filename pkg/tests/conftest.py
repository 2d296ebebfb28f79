import hashlib
import os

import pytest
import torch

torch.set_num_threads(1)

ARTIFACTS = os.path.join(os.path.dirname(__file__), "_artifacts")


def _cache_dir(tag: str, key: str) -> str:
    path = os.path.join(ARTIFACTS, f"{tag}_{key}")
    os.makedirs(path, exist_ok=True)
    return path


@pytest.fixture(scope="session")
def toy_config():
    from morphspace.training import acceptance_profile

    return acceptance_profile()


@pytest.fixture(scope="session")
def toy_checkpoint_path(toy_config):
    """Train the small end-to-end model once and reuse it across runs."""
    from morphspace.training import config_to_text, run_training

    key = hashlib.sha256(config_to_text(toy_config).encode()).hexdigest()[:12]
    out_dir = _cache_dir("toy", key)
    final = os.path.join(out_dir, "checkpoint_final.bin")
    if not os.path.exists(final):
        result = run_training(toy_config, out_dir)
        with open(os.path.join(out_dir, "train_seconds.txt"), "w") as fh:
            fh.write(f"{result['seconds']:.1f}\n")
    return final


@pytest.fixture(scope="session")
def toy_session(toy_checkpoint_path):
    from morphspace.session import ModelSession

    return ModelSession.from_checkpoint(toy_checkpoint_path)


@pytest.fixture(scope="session")
def toy_dataset(toy_config):
    from morphspace.data import load_dataset

    return load_dataset(toy_config.dataset, seed=toy_config.seed)


@pytest.fixture(scope="session")
def toy_rerenderer(toy_session, toy_dataset, toy_checkpoint_path):
    """Rerenderer trained against the cached toy model, also cached."""
    from morphspace.rerender import (
        RerenderConfig,
        load_rerenderer,
        save_rerenderer,
        train_rerenderer,
    )

    cfg = toy_session.config
    rc = RerenderConfig(
        resolution=toy_session.resolution,
        gen_channels=tuple(cfg.net_config.channels(s) for s in range(toy_session.g.active_layers)),
        steps=500,
        seed=5,
    )
    key = hashlib.sha256((repr(rc) + toy_session.model_hash).encode()).hexdigest()[:12]
    path = os.path.join(_cache_dir("rerender", key), "rerenderer.bin")
    history_path = path + ".history"
    if not os.path.exists(path):
        rr, history = train_rerenderer(toy_session.g, toy_session.d, toy_dataset, rc)
        save_rerenderer(rr, path)
        with open(history_path, "w") as fh:
            fh.write("\n".join(f"{v:.8f}" for v in history))
    with open(history_path) as fh:
        history = [float(line) for line in fh.read().split()]
    return load_rerenderer(path), history
