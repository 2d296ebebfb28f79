"""Command-line front end.

Subcommands cover the full workflow: synthesize a factor dataset, train,
evaluate distances, extract/apply/compose directions, train and run the
rerenderer, replay recipes, and serve the HTTP API. Runtime failures print a
single `error: ...` line on stderr and exit 1; usage errors exit 2.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np


def _parse_floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _parse_ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _save_png(image, path):
    from .session import png_bytes

    with open(path, "wb") as fh:
        fh.write(png_bytes(image))


def _load_image(path, resolution):
    from PIL import Image

    from .data import image_to_array

    with Image.open(path) as im:
        return image_to_array(im, resolution)


def _session(path):
    from .session import ModelSession

    return ModelSession.from_checkpoint(path)


def cmd_synth_data(args):
    from .data import SyntheticConfig, export_synthetic, generate_synthetic

    config = SyntheticConfig(n_samples=args.num_samples)
    ds = generate_synthetic(config, seed=args.seed, resolution=args.resolution)
    n = export_synthetic(ds, args.out)
    print(f"wrote {n} images to {args.out}")


def cmd_train(args):
    from .training import acceptance_profile, parse_config_text, run_training, toy_profile

    if args.config:
        with open(args.config) as fh:
            config = parse_config_text(fh.read())
    elif args.profile == "toy":
        config = toy_profile()
    elif args.profile == "acceptance":
        config = acceptance_profile()
    else:
        raise ValueError("pass --config FILE or --profile toy|acceptance")
    if args.seed is not None:
        import dataclasses

        config = dataclasses.replace(config, seed=args.seed)
    result = run_training(config, args.out, log_fn=_train_logger if args.verbose else None)
    print(f"finished at step {result['state'].step} in {result['seconds']:.1f}s; checkpoint: {result['checkpoint']}")


def _train_logger(state, report):
    print(
        f"step {state.step} stage {state.stage} alpha {state.fade_alpha:.3f} "
        f"d_adv {report.d_adv_loss:.4f} g_adv {report.g_adv_loss:.4f} mi {report.mi_loss:.4f}",
        flush=True,
    )


def cmd_eval_fd(args):
    from .metrics import ConvEmbedder, accumulate_stats, frechet_distance, load_stats, save_stats

    if args.stats_a and args.stats_b:
        fd = frechet_distance(load_stats(args.stats_a), load_stats(args.stats_b))
        print(f"{fd:.6f}")
        return

    from .codes import sample_latent_batch, sample_transformation_batch
    from .data import DatasetSpec, load_dataset

    session = _session(args.model)
    embedder = ConvEmbedder(resolution=session.resolution)
    rng = np.random.default_rng(args.seed)

    import torch

    cfg = session.config
    fake_feats = []
    remaining = args.num_samples
    while remaining > 0:
        b = min(32, remaining)
        z = torch.from_numpy(sample_latent_batch(rng, b, cfg.k_layers, cfg.z_dim, dtype=np.float32))
        t = torch.from_numpy(sample_transformation_batch(rng, b, cfg.k_layers, cfg.t_dim, dtype=np.float32))
        with torch.no_grad():
            fake = session.g(z, t).numpy()
        fake_feats.append(embedder.embed(fake))
        remaining -= b
    stats_fake = accumulate_stats(np.concatenate(fake_feats))

    if args.data == "synthetic":
        dataset = load_dataset(cfg.dataset, seed=cfg.seed)
    else:
        dataset = load_dataset(DatasetSpec(kind="folder", path=args.data, resolution=session.resolution), seed=cfg.seed)
    pool = dataset.test_indices if len(dataset.test_indices) >= 2 else dataset.train_indices
    picks = rng.choice(pool, size=min(args.num_samples, len(pool)), replace=False)
    real_feats = [embedder.embed(dataset.batch(picks[i : i + 32], session.resolution)) for i in range(0, len(picks), 32)]
    stats_real = accumulate_stats(np.concatenate(real_feats))

    if args.save_stats:
        save_stats(stats_fake, args.save_stats + ".fake.bin")
        save_stats(stats_real, args.save_stats + ".real.bin")
    print(f"{frechet_distance(stats_fake, stats_real):.6f}")


def cmd_extract(args):
    from .codes import save_direction
    from .transform import extract_transformation, extraction_to_dict

    session = _session(args.model)
    a = _load_image(args.image_a, session.resolution)
    b = _load_image(args.image_b, session.resolution)
    result = extract_transformation(session.d, a, b, model_hash=session.model_hash)
    if args.provenance:
        with open(args.out, "w") as fh:
            json.dump(extraction_to_dict(result), fh, indent=2)
            fh.write("\n")
    else:
        save_direction(result.direction, args.out)
    print(f"wrote direction (norm {result.direction.norm():.4f}) to {args.out}")


def _resolve_directions(args, session):
    from .codes import compose_directions, load_direction

    directions = [load_direction(p) for p in args.direction]
    for d in directions:
        session.check_direction(d)
    if len(directions) == 1 and not args.weights:
        return directions[0]
    weights = _parse_floats(args.weights) if args.weights else [1.0] * len(directions)
    if len(weights) != len(directions):
        raise ValueError(f"got {len(directions)} directions but {len(weights)} weights")
    return compose_directions(directions, weights)


def cmd_apply(args):
    from .recipes import apply_recipe, make_recipe

    session = _session(args.model)
    if args.recipe:
        doc = _load_json(args.recipe)
        doc = doc.get("recipe", doc)
    else:
        if not args.direction:
            raise ValueError("pass --direction FILE (repeatable) or --recipe FILE")
        direction = _resolve_directions(args, session)
        doc = make_recipe(
            seed=args.seed,
            directions=[direction],
            gammas=_parse_floats(args.gammas),
            layers=_parse_ints(args.layers) if args.layers else None,
            model_hash=session.model_hash,
        )
    rendered = apply_recipe(session, doc)
    os.makedirs(args.out_dir, exist_ok=True)
    for i, (gamma, image) in enumerate(rendered):
        path = os.path.join(args.out_dir, f"edit_{i:02d}_gamma_{gamma:+.3f}.png")
        _save_png(image, path)
        print(f"wrote {path}")


def cmd_compose(args):
    from .codes import save_direction

    session = _session(args.model)
    direction = _resolve_directions(args, session)
    save_direction(direction, args.out)
    print(f"wrote composed direction (norm {direction.norm():.4f}) to {args.out}")


def cmd_layerwise(args):
    from .codes import load_direction
    from .transform import layerwise_manipulate

    session = _session(args.model)
    direction = load_direction(args.direction)
    session.check_direction(direction)
    z, t = session.base_codes(args.seed)
    layers = _parse_ints(args.layers)
    image = layerwise_manipulate(session.g, z, t, direction, layers, args.gamma)
    _save_png(image, args.out)
    print(f"wrote {args.out}")


def cmd_rerender_train(args):
    from .data import load_dataset
    from .rerender import RerenderConfig, save_rerenderer, train_rerenderer

    session = _session(args.model)
    cfg = session.config
    dataset = load_dataset(cfg.dataset, seed=cfg.seed)
    gen_channels = tuple(cfg.net_config.channels(s) for s in range(session.g.active_layers))
    rc = RerenderConfig(
        resolution=session.resolution,
        gen_channels=gen_channels,
        steps=args.steps,
        seed=args.seed,
    )
    rr, history = train_rerenderer(
        session.g, session.d, dataset, rc,
        log_fn=(lambda step, loss: print(f"step {step} loss {loss:.4f}", flush=True)) if args.verbose else None,
    )
    save_rerenderer(rr, args.out)
    print(f"trained {args.steps} steps (loss {history[0]:.4f} -> {history[-1]:.4f}); wrote {args.out}")


def cmd_rerender(args):
    import torch

    from .codes import apply_direction, load_direction
    from .rerender import load_rerenderer, rerender_image

    session = _session(args.model)
    rr = load_rerenderer(args.rerenderer)
    image = _load_image(args.image, session.resolution)
    t = session.project(image)
    if args.direction:
        direction = load_direction(args.direction)
        session.check_direction(direction)
        t = apply_direction(t, direction, args.gamma)
    z, _ = session.base_codes(args.seed)
    zt = torch.from_numpy(z.array.astype(np.float32)[None])
    tt = torch.from_numpy(t.array.astype(np.float32)[None])
    feats = [f.detach() for f in session.g.intermediate_features(zt, tt)]
    _save_png(rerender_image(rr, image, feats), args.out)
    print(f"wrote {args.out}")


def cmd_serve(args):
    import uvicorn

    from .rerender import load_rerenderer
    from .service import create_app

    session = _session(args.model)
    rerenderer = load_rerenderer(args.rerenderer) if args.rerenderer else None
    ui_dir = args.ui_dir
    if ui_dir is None:
        candidate = os.path.join(os.getcwd(), "frontend", "dist")
        ui_dir = candidate if os.path.isdir(candidate) else None
    app = create_app(session, rerenderer=rerenderer, ui_dir=ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morphspace", description="transformation-space GAN toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="render a synthetic factor dataset to a folder")
    p.add_argument("--out", required=True)
    p.add_argument("--num-samples", type=int, default=512)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth_data)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="config file (key = value lines)")
    p.add_argument("--profile", choices=["toy", "acceptance"], help="built-in config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval-fd", help="Fréchet distance between model samples and data")
    p.add_argument("--model")
    p.add_argument("--data", default="synthetic", help="image folder or 'synthetic'")
    p.add_argument("--num-samples", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--save-stats", help="prefix for writing feature stats files")
    p.add_argument("--stats-a", help="precomputed stats file (skips the model)")
    p.add_argument("--stats-b", help="precomputed stats file")
    p.set_defaults(fn=cmd_eval_fd)

    p = sub.add_parser("extract", help="direction between two images")
    p.add_argument("--model", required=True)
    p.add_argument("--image-a", required=True)
    p.add_argument("--image-b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--provenance", action="store_true", help="include projections in the output document")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("apply", help="apply direction(s) to a seeded sample")
    p.add_argument("--model", required=True)
    p.add_argument("--direction", action="append", default=[], help="direction file (repeatable)")
    p.add_argument("--weights", help="comma-separated blend weights")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gammas", default="1.0", help="comma-separated strengths")
    p.add_argument("--layers", help="restrict to 1-based layers, e.g. 1,2")
    p.add_argument("--recipe", help="replay a recipe JSON instead of flags")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_apply)

    p = sub.add_parser("compose", help="blend directions into one file")
    p.add_argument("--model", required=True)
    p.add_argument("--direction", action="append", required=True)
    p.add_argument("--weights")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_compose)

    p = sub.add_parser("layerwise", help="apply a direction at selected layers only")
    p.add_argument("--model", required=True)
    p.add_argument("--direction", required=True)
    p.add_argument("--layers", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_layerwise)

    p = sub.add_parser("rerender-train", help="train the rerenderer against a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--seed", type=int, default=5)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_rerender_train)

    p = sub.add_parser("rerender", help="rerender a real image, optionally shifted")
    p.add_argument("--model", required=True)
    p.add_argument("--rerenderer", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--direction")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_rerender)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--model", required=True)
    p.add_argument("--rerenderer")
    p.add_argument("--ui-dir", help="static UI directory (defaults to ./frontend/dist if present)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # single-line, machine-parseable failure
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
