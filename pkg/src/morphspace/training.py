"""Progressive adversarial training with a shared transformation space.

Each step draws one batch of (z, t) codes, updates the discriminator on
real/fake score loss plus the code-recovery (mutual information) term, then
updates the generator on its adversarial loss plus the same code-recovery
term, 1:1. The code term reaches the trunk and projection heads but, by
construction of the graph, never the score head.

Resolution schedule: stages 4x4, 8x8, ... up to max_resolution, each with an
image budget; the first fade_fraction of a stage's budget linearly fades the
new layers in. Learning rate is interpolated per stage (0.001 at 4x4 up to
0.002 at the final stage by default). Adam runs with beta1=0, beta2=0.99.

All stochastic choices (batch indices, z, t) come from one numpy generator
stored in the state and serialized in checkpoints, so an interrupted run
resumed from disk reproduces the uninterrupted run exactly.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .checkpoint import ContainerError, load_container, pack_container, save_container, unpack_container
from .codes import sample_latent_batch, sample_transformation_batch
from .data import DatasetSpec, SyntheticConfig, load_dataset
from .networks import Discriminator, Generator, NetConfig
from .objectives import LossReport, adv_loss_discriminator, adv_loss_generator, mi_loss

STATE_KIND = "train-state"
STATE_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; message carries the diagnostic snapshot."""


@dataclass(frozen=True)
class TrainConfig:
    """Everything needed to reproduce a run, including the dataset recipe."""

    k_layers: int = 5
    t_dim: int = 4
    z_dim: int = 32
    base_channels: int = 128
    max_resolution: int = 64
    images_per_stage: tuple = (40000, 40000, 60000, 80000, 100000)
    batch_per_stage: tuple = (32, 32, 32, 32, 32)
    fade_fraction: float = 0.5
    lr_start: float = 0.001
    lr_end: float = 0.002
    adam_beta1: float = 0.0
    adam_beta2: float = 0.99
    adam_eps: float = 1e-8
    lam: float = 1.0
    saturating_g: bool = False
    r1_gamma: float = 0.0
    seed: int = 0
    checkpoint_every: int = 0
    dataset: DatasetSpec = field(default_factory=DatasetSpec)

    def __post_init__(self):
        net = self.net_config  # validates architecture fields
        for name in ("images_per_stage", "batch_per_stage"):
            value = getattr(self, name)
            if isinstance(value, int):
                value = (value,) * net.num_stages
            value = tuple(int(v) for v in value)
            if len(value) != net.num_stages:
                raise ValueError(f"{name} needs {net.num_stages} entries for max_resolution {self.max_resolution}")
            if any(v < 1 for v in value):
                raise ValueError(f"{name} entries must be positive")
            object.__setattr__(self, name, value)
        if not 0.0 < self.fade_fraction <= 1.0:
            raise ValueError("fade_fraction must be in (0, 1]")
        for name in ("lr_start", "lr_end", "adam_eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ValueError("adam betas must be in [0, 1)")
        if self.lam < 0 or self.r1_gamma < 0:
            raise ValueError("lam and r1_gamma must be nonnegative")
        if self.dataset.resolution < self.max_resolution:
            raise ValueError("dataset resolution is below the final stage resolution")
        self.dataset.validate()

    @property
    def net_config(self) -> NetConfig:
        return NetConfig(
            k_layers=self.k_layers,
            t_dim=self.t_dim,
            z_dim=self.z_dim,
            base_channels=self.base_channels,
            max_resolution=self.max_resolution,
        )

    @property
    def num_stages(self) -> int:
        return self.net_config.num_stages

    def lr_for_stage(self, stage: int) -> float:
        if self.num_stages == 1:
            return self.lr_start
        frac = stage / (self.num_stages - 1)
        return self.lr_start + (self.lr_end - self.lr_start) * frac

    def total_images(self) -> int:
        return int(sum(self.images_per_stage))


# Flat key <-> nested dataclass plumbing for config files and manifests.

def _flatten(obj, prefix=""):
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        key = prefix + f.name
        if dataclasses.is_dataclass(value):
            out.update(_flatten(value, key + "."))
        elif isinstance(value, tuple):
            out[key] = ", ".join(repr(v) for v in value)
        elif isinstance(value, bool):
            out[key] = "true" if value else "false"
        elif isinstance(value, float):
            out[key] = repr(value)
        else:
            out[key] = str(value)
    return out


def _parse_scalar(text, example):
    text = text.strip()
    if isinstance(example, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(example, int):
        return int(text)
    if isinstance(example, float):
        return float(text)
    return text


def _assemble(cls, flat, prefix=""):
    kwargs = {}
    defaults = cls()
    for f in dataclasses.fields(cls):
        key = prefix + f.name
        default = getattr(defaults, f.name)
        if dataclasses.is_dataclass(default):
            kwargs[f.name] = _assemble(type(default), flat, key + ".")
        elif key in flat:
            raw = flat.pop(key)
            if isinstance(default, tuple):
                example = default[0] if default else 0
                parts = [p for p in str(raw).split(",") if p.strip()]
                kwargs[f.name] = tuple(_parse_scalar(p, example) for p in parts)
            else:
                kwargs[f.name] = _parse_scalar(str(raw), default)
    return cls(**kwargs)


def config_to_text(config: TrainConfig) -> str:
    lines = ["# training configuration"]
    lines += [f"{k} = {v}" for k, v in sorted(_flatten(config).items())]
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> TrainConfig:
    flat = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if key in flat:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        flat[key] = value.strip()
    config = _assemble(TrainConfig, flat)
    if flat:
        raise ValueError(f"unknown config keys: {sorted(flat)}")
    return config


def config_to_flat(config: TrainConfig) -> dict:
    return _flatten(config)


def config_from_flat(flat: dict) -> TrainConfig:
    flat = dict(flat)
    config = _assemble(TrainConfig, flat)
    if flat:
        raise ValueError(f"unknown config keys: {sorted(flat)}")
    return config


class TrainState:
    """Networks, optimizers, schedule cursor, and the run's RNG."""

    def __init__(self, config: TrainConfig, g, d, opt_g, opt_d, rng, step=0, images_in_stage=0):
        self.config = config
        self.g = g
        self.d = d
        self.opt_g = opt_g
        self.opt_d = opt_d
        self.rng = rng
        self.step = int(step)
        self.images_in_stage = int(images_in_stage)

    @property
    def stage(self) -> int:
        return self.g.stage

    @property
    def fade_alpha(self) -> float:
        if self.stage == 0:
            return 1.0
        fade_images = self.config.fade_fraction * self.config.images_per_stage[self.stage]
        return min(1.0, self.images_in_stage / fade_images)

    @property
    def resolution(self) -> int:
        return self.g.resolution

    def done(self) -> bool:
        cfg = self.config
        return self.stage == cfg.num_stages - 1 and self.images_in_stage >= cfg.images_per_stage[self.stage]

    def clone(self) -> "TrainState":
        """Independent deep copy via the serialization path."""
        return state_from_bytes(state_to_bytes(self))


def _make_optimizer(net, config: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(
        net.parameters(),
        lr=config.lr_for_stage(net.stage),
        betas=(config.adam_beta1, config.adam_beta2),
        eps=config.adam_eps,
    )


def init_state(config: TrainConfig) -> TrainState:
    g = Generator(config.net_config, seed=config.seed)
    d = Discriminator(config.net_config, seed=config.seed + 1)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7EA1]))
    return TrainState(config, g, d, _make_optimizer(g, config), _make_optimizer(d, config), rng)


def _grow_state(state: TrainState) -> None:
    cfg = state.config
    new_stage = state.stage + 1
    for net, opt in ((state.g, state.opt_g), (state.d, state.opt_d)):
        known = {id(p) for group in opt.param_groups for p in group["params"]}
        net.grow(new_stage)
        fresh = [p for p in net.parameters() if id(p) not in known]
        opt.add_param_group({"params": fresh})
        for group in opt.param_groups:
            group["lr"] = cfg.lr_for_stage(new_stage)
    state.images_in_stage = 0


def advance_schedule(state: TrainState) -> None:
    """Grow to the next stage when the current image budget is spent."""
    cfg = state.config
    if state.stage + 1 < cfg.num_stages and state.images_in_stage >= cfg.images_per_stage[state.stage]:
        _grow_state(state)


def _diagnostic(state: TrainState, losses: dict) -> str:
    parts = [f"step={state.step}", f"stage={state.stage}", f"alpha={state.fade_alpha:.4f}",
             f"lr={state.config.lr_for_stage(state.stage):.6f}"]
    parts += [f"{k}={v:.6g}" for k, v in losses.items()]
    return ", ".join(parts)


def train_step(state: TrainState, real_batch, lam: float = None) -> LossReport:
    """One discriminator update followed by one generator update."""
    cfg = state.config
    lam = cfg.lam if lam is None else float(lam)
    g, d = state.g, state.d

    real = torch.as_tensor(np.asarray(real_batch, dtype=np.float32))
    if real.ndim != 4 or real.shape[2] != state.resolution:
        raise ValueError(f"expected a (B, 3, {state.resolution}, {state.resolution}) batch, got {tuple(real.shape)}")
    batch = real.shape[0]

    alpha = state.fade_alpha
    g.fade_alpha = alpha
    d.fade_alpha = alpha

    z = torch.from_numpy(sample_latent_batch(state.rng, batch, cfg.k_layers, cfg.z_dim, dtype=np.float32))
    t = torch.from_numpy(sample_transformation_batch(state.rng, batch, cfg.k_layers, cfg.t_dim, dtype=np.float32))
    active = d.active_layers

    # Discriminator update. Fakes are detached, so only d receives gradients;
    # the code-recovery term touches trunk and projection heads, while the
    # score head sits on a branch the code loss never crosses.
    with torch.no_grad():
        fake = g(z, t)
    if cfg.r1_gamma > 0:
        real.requires_grad_(True)
    real_logits, _ = d(real)
    fake_logits, fake_proj = d(fake)
    d_adv = adv_loss_discriminator(real_logits, fake_logits)
    mi_d = mi_loss(t[:, :active], fake_proj[:, :active])
    d_total = d_adv + lam * mi_d
    if cfg.r1_gamma > 0:
        grad = torch.autograd.grad(real_logits.sum(), real, create_graph=True)[0]
        d_total = d_total + (cfg.r1_gamma / 2.0) * grad.pow(2).sum(dim=(1, 2, 3)).mean()
    state.opt_d.zero_grad(set_to_none=True)
    state.opt_g.zero_grad(set_to_none=True)
    d_total.backward()
    state.opt_d.step()

    # Generator update against the freshly updated discriminator.
    fake2 = g(z, t)
    fake2_logits, fake2_proj = d(fake2)
    g_adv = adv_loss_generator(fake2_logits, saturating=cfg.saturating_g)
    mi_g = mi_loss(t[:, :active], fake2_proj[:, :active])
    g_total = g_adv + lam * mi_g
    state.opt_g.zero_grad(set_to_none=True)
    state.opt_d.zero_grad(set_to_none=True)
    g_total.backward()
    state.opt_g.step()

    losses = {
        "d_adv": float(d_adv.detach()),
        "g_adv": float(g_adv.detach()),
        "mi": float(mi_g.detach()),
    }
    if not all(math.isfinite(v) for v in losses.values()):
        raise TrainingDiverged("non-finite loss: " + _diagnostic(state, losses))

    state.step += 1
    state.images_in_stage += batch
    return LossReport(d_adv_loss=losses["d_adv"], g_adv_loss=losses["g_adv"], mi_loss=losses["mi"], lam=lam)


def iterate_training(state: TrainState, dataset):
    """Yields (state, report) per step until the schedule is exhausted."""
    cfg = state.config
    train_pool = dataset.train_indices
    while not state.done():
        advance_schedule(state)
        batch_size = cfg.batch_per_stage[state.stage]
        picks = state.rng.integers(0, len(train_pool), size=batch_size)
        batch = dataset.batch(train_pool[picks], state.resolution)
        yield state, train_step(state, batch)


def run_training(config: TrainConfig, out_dir, dataset=None, log_every: int = 25, log_fn=None):
    """Full run: builds the dataset, trains, writes metrics and checkpoints.

    Returns a dict with the final state and file paths. Raises
    TrainingDiverged if any loss goes non-finite.
    """
    os.makedirs(out_dir, exist_ok=True)
    if dataset is None:
        dataset = load_dataset(config.dataset, seed=config.seed)
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(config_to_text(config))

    state = init_state(config)
    metrics_path = os.path.join(out_dir, "metrics.tsv")
    final_path = os.path.join(out_dir, "checkpoint_final.bin")
    start = time.time()
    with open(metrics_path, "w") as metrics:
        metrics.write("step\tstage\tfade_alpha\tlr\td_adv\tg_adv\tmi\ttotal_g\n")
        for state, report in iterate_training(state, dataset):
            if state.step % log_every == 0 or state.done():
                lr = config.lr_for_stage(state.stage)
                metrics.write(
                    f"{state.step}\t{state.stage}\t{state.fade_alpha:.4f}\t{lr:.6f}\t"
                    f"{report.d_adv_loss:.5f}\t{report.g_adv_loss:.5f}\t{report.mi_loss:.5f}\t{report.total_g:.5f}\n"
                )
                metrics.flush()
                if log_fn is not None:
                    log_fn(state, report)
            if config.checkpoint_every and state.step % config.checkpoint_every == 0:
                save_state(state, os.path.join(out_dir, f"checkpoint_{state.step:07d}.bin"))
    save_state(state, final_path)
    return {
        "state": state,
        "checkpoint": final_path,
        "metrics": metrics_path,
        "seconds": time.time() - start,
    }


# State serialization.

def _adam_blocks(prefix, net, opt):
    blocks = {}
    by_param = {id(p): name for name, p in net.named_parameters()}
    for group in opt.param_groups:
        for p in group["params"]:
            st = opt.state.get(p)
            if not st:
                continue
            name = by_param[id(p)]
            blocks[f"{prefix}/{name}/step"] = np.array([float(st["step"])], dtype=np.float64)
            blocks[f"{prefix}/{name}/exp_avg"] = st["exp_avg"].detach().numpy().astype(np.float32)
            blocks[f"{prefix}/{name}/exp_avg_sq"] = st["exp_avg_sq"].detach().numpy().astype(np.float32)
    return blocks


def _restore_adam(prefix, net, opt, blocks):
    by_name = dict(net.named_parameters())
    for name, p in by_name.items():
        key = f"{prefix}/{name}/step"
        if key not in blocks:
            continue
        opt.state[p] = {
            "step": torch.tensor(float(blocks[key][0])),
            "exp_avg": torch.from_numpy(blocks[f"{prefix}/{name}/exp_avg"].copy()),
            "exp_avg_sq": torch.from_numpy(blocks[f"{prefix}/{name}/exp_avg_sq"].copy()),
        }


def state_to_bytes(state: TrainState) -> bytes:
    manifest = {
        "kind": STATE_KIND,
        "format_version": STATE_VERSION,
        "config": config_to_flat(state.config),
        "stage": state.stage,
        "step": state.step,
        "images_in_stage": state.images_in_stage,
    }
    blocks = {}
    for tag, net in (("g", state.g), ("d", state.d)):
        for name, p in net.named_parameters():
            blocks[f"param/{tag}/{name}"] = p.detach().numpy().astype(np.float32)
    blocks.update(_adam_blocks("opt/g", state.g, state.opt_g))
    blocks.update(_adam_blocks("opt/d", state.d, state.opt_d))
    rng_json = json.dumps(state.rng.bit_generator.state, sort_keys=True, separators=(",", ":"))
    blocks["rng/state"] = np.frombuffer(rng_json.encode(), dtype=np.uint8)
    return pack_container(manifest, blocks)


def state_from_bytes(raw: bytes) -> TrainState:
    manifest, blocks = unpack_container(raw)
    if manifest.get("kind") != STATE_KIND:
        raise ContainerError(f"not a training checkpoint (kind={manifest.get('kind')!r})")
    config = config_from_flat(manifest["config"])
    state = init_state(config)
    for _ in range(int(manifest["stage"])):
        _grow_state(state)
    state.step = int(manifest["step"])
    state.images_in_stage = int(manifest["images_in_stage"])

    for tag, net in (("g", state.g), ("d", state.d)):
        expected = {f"param/{tag}/{name}" for name, _ in net.named_parameters()}
        present = {k for k in blocks if k.startswith(f"param/{tag}/")}
        if expected != present:
            missing, extra = expected - present, present - expected
            raise ContainerError(f"checkpoint parameter mismatch (missing {sorted(missing)[:3]}, extra {sorted(extra)[:3]})")
        with torch.no_grad():
            for name, p in net.named_parameters():
                saved = blocks[f"param/{tag}/{name}"]
                if tuple(saved.shape) != tuple(p.shape):
                    raise ContainerError(f"shape mismatch for {name}: {saved.shape} vs {tuple(p.shape)}")
                p.copy_(torch.from_numpy(saved.copy()))

    _restore_adam("opt/g", state.g, state.opt_g, blocks)
    _restore_adam("opt/d", state.d, state.opt_d, blocks)
    rng_state = json.loads(bytes(blocks["rng/state"]).decode())
    state.rng.bit_generator.state = rng_state
    return state


def save_state(state: TrainState, path) -> None:
    with open(path, "wb") as fh:
        fh.write(state_to_bytes(state))


def load_state(path) -> TrainState:
    with open(path, "rb") as fh:
        return state_from_bytes(fh.read())


def toy_profile() -> TrainConfig:
    """Small 32x32 smoke-test schedule (about 20k images shown)."""
    return TrainConfig(
        k_layers=4,
        t_dim=4,
        z_dim=16,
        base_channels=64,
        max_resolution=32,
        images_per_stage=(4000, 4000, 5000, 7000),
        batch_per_stage=(16, 16, 16, 16),
        lam=1.0,
        seed=7,
        dataset=DatasetSpec(kind="synthetic", resolution=32, synthetic=SyntheticConfig(n_samples=1024)),
    )


def acceptance_profile(seed: int = 11) -> TrainConfig:
    """16x16 profile sized for single-core CPU training of the factor scenes.

    Brightness and hue are the dominant factors; hue is restricted to an arc
    so directions in hue form one consistent family. z is kept small so the
    nuisance code cannot absorb the factors the recovery loss should pull
    into t, and the long final stage is what tightens the code heads.
    """
    return TrainConfig(
        k_layers=3,
        t_dim=4,
        z_dim=8,
        base_channels=64,
        max_resolution=16,
        images_per_stage=(16000, 24000, 240000),
        batch_per_stage=(16, 16, 16),
        lam=1.0,
        seed=seed,
        dataset=DatasetSpec(
            kind="synthetic",
            resolution=16,
            holdout=0.12,
            synthetic=SyntheticConfig(
                n_samples=4096,
                brightness_range=(0.25, 1.0),
                hue_range=(0.9, 2.5),
                count_range=(0, 2),
                size_range=(0.10, 0.16),
                x_range=(0.4, 0.6),
                y_range=(0.55, 0.68),
            ),
        ),
    )
