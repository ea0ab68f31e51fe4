"""Command-line pipeline: synth, train, render, export, lumi-render, eval, bench.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Every run writes a
manifest (resolved configuration + build info) into its output directory, and
no subcommand ever writes into its input directories.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from dataclasses import asdict, fields as dc_fields, is_dataclass
from pathlib import Path


def _set_thread_cap(n: int) -> None:
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _build_info() -> dict:
    import lumifield
    info = {"version": lumifield.__version__}
    try:
        rev = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                             text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        info["build_hash"] = rev.stdout.strip() if rev.returncode == 0 else "unknown"
    except Exception:
        info["build_hash"] = "unknown"
    return info


def _write_manifest(out_dir, command: str, config: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, "config": config, "build": _build_info()}
    (out / "manifest.json").write_text(json.dumps(doc, indent=1, default=str))


def _parse_scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _load_config_file(path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        out = {}
        for ln in text.splitlines():
            ln = ln.split("#", 1)[0].strip()
            if not ln:
                continue
            if "=" not in ln:
                raise ValueError(f"config line {ln!r} is not key=value")
            k, v = ln.split("=", 1)
            out[k.strip()] = _parse_scalar(v.strip())
        return out


def _apply_config(cfg, overrides: dict):
    """Set dataclass fields from a flat dict, rejecting unknown keys."""
    from dataclasses import replace
    known = {f.name for f in dc_fields(cfg)}
    sub = {f.name: f for f in dc_fields(cfg)}
    updates = {}
    for key, val in overrides.items():
        head = key.split(".", 1)[0]
        if head not in known:
            raise KeyError(f"unknown config key {key!r}")
        if "." in key:
            child = getattr(cfg, head)
            updates.setdefault(head, dict())[key.split(".", 1)[1]] = val
        else:
            updates[head] = val
    final = {}
    for key, val in updates.items():
        cur = getattr(cfg, key)
        if isinstance(val, dict) and is_dataclass(cur):
            sub_known = {f.name for f in dc_fields(cur)}
            for k in val:
                if k not in sub_known:
                    raise KeyError(f"unknown config key {key}.{k!r}")
            final[key] = replace(cur, **val)
        else:
            final[key] = val
    return replace(cfg, **final)


def _config_to_dict(cfg) -> dict:
    d = asdict(cfg)
    return d


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> int:
    from .scene_io import SynthSpec, generate_synthetic, write_scene

    spec = SynthSpec(shape=args.shape, layout=args.layout, n_views=args.views,
                     width=args.size, height=args.size, seed=args.seed,
                     specular=args.specular, noise=args.noise)
    scene, _ = generate_synthetic(spec)
    write_scene(scene, args.out)
    _write_manifest(args.out, "synth", _config_to_dict(spec))
    print(f"wrote {len(scene.views)}-view scene to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .scene_io import load_scene
    from .trainer import TrainConfig, train

    cfg = TrainConfig.desk() if args.desk else TrainConfig()
    overrides = {}
    if args.config:
        overrides.update(_load_config_file(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise KeyError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = _parse_scalar(v.strip())
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = _apply_config(cfg, overrides)
    scene = load_scene(args.scene)
    if args.holdout is not None:
        from .scene_io import Scene
        keep = [v for i, v in enumerate(scene.views) if i != args.holdout]
        scene = Scene(name=scene.name, views=keep)
    _write_manifest(args.out, "train", _config_to_dict(cfg))
    res = train(scene, cfg, args.out, resume_from=args.resume,
                log_every=args.log_every)
    print(f"final checkpoint: {res.checkpoint}")
    return 0 if not res.aborted else 2


def cmd_render(args) -> int:
    from . import imgio
    from .fields import load_fields
    from .render import render_neural
    from .scene_io import load_scene

    sdf, rad = load_fields(args.checkpoint)
    scene = load_scene(args.scene)
    views = _pick_views(args.views, len(scene.views))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in views:
        rgb, alpha, depth = render_neural(sdf, rad, scene.views[i].camera)
        imgio.write_png_color(out / f"render_{i:03d}.png", rgb, alpha=alpha)
        imgio.write_pfm(out / f"depth_{i:03d}.pfm", depth.astype("float32"))
    _write_manifest(args.out, "render", {"checkpoint": args.checkpoint,
                                         "scene": args.scene, "views": views})
    print(f"rendered {len(views)} views to {out}")
    return 0


def _pick_views(spec: str, n: int):
    if not spec or spec == "all":
        return list(range(n))
    return [int(v) for v in spec.split(",")]


def cmd_export(args) -> int:
    from .exporter import export_bundle, generate_texture_cameras
    from .fields import load_fields
    from .scene_io import load_scene
    from .geometry import Camera, perspective

    sdf, rad = load_fields(args.checkpoint)
    scene = load_scene(args.scene)
    base = [v.camera for v in scene.views]
    if args.tex_views:
        base = [base[i] for i in _pick_views(args.tex_views, len(base))]
    if args.tex_size:
        base = [Camera(view=c.view,
                       proj=c.proj, width=args.tex_size, height=args.tex_size)
                for c in base]
    cams = generate_texture_cameras(base, level=args.tex_level) \
        if args.tex_level > 1 else base
    bundle = export_bundle(sdf, rad, cams, args.out, resolution=args.resolution,
                           iso=args.iso, checkpoint=args.checkpoint)
    _write_manifest(args.out, "export", {
        "checkpoint": args.checkpoint, "scene": args.scene,
        "resolution": args.resolution, "iso": args.iso,
        "tex_level": args.tex_level, "n_textures": len(bundle.cameras)})
    print(f"bundle with {len(bundle.cameras)} textures at {args.out}")
    return 0


def cmd_lumi_render(args) -> int:
    import numpy as np
    from . import imgio
    from .exporter import load_bundle
    from .geometry import Camera
    from .lumigraph import BundleSampler, render_view

    bundle = load_bundle(args.bundle)
    sampler = BundleSampler(bundle)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cams = []
    if args.camera_path:
        doc = json.loads(Path(args.camera_path).read_text())
        proto = bundle.cameras[0]
        for entry in doc:
            view = entry["view"] if isinstance(entry, dict) else entry
            cams.append(Camera(view=np.asarray(view, dtype=float).reshape(4, 4),
                               proj=proto.proj,
                               width=args.width or proto.width,
                               height=args.height or proto.height))
    else:
        cams = bundle.cameras
    for i, cam in enumerate(cams):
        img = render_view(bundle, cam, width=args.width or cam.width,
                          height=args.height or cam.height, sampler=sampler,
                          debug=args.debug)
        imgio.write_png_color(out / f"frame_{i:03d}.png", img[..., :3],
                              alpha=img[..., 3])
    _write_manifest(args.out, "lumi-render",
                    {"bundle": args.bundle, "frames": len(cams)})
    print(f"rendered {len(cams)} frames to {out}")
    return 0


def cmd_eval(args) -> int:
    from .evaluate import chamfer_one_directional, evaluate_views
    from .fields import load_fields
    from .render import render_neural
    from .scene_io import load_scene

    sdf, rad = load_fields(args.checkpoint)
    scene = load_scene(args.scene)
    views = _pick_views(args.views, len(scene.views))
    t0 = time.time()
    preds = [render_neural(sdf, rad, scene.views[i].camera)[0] for i in views]
    report = evaluate_views(preds, [scene.views[i] for i in views])
    report.timings["render_seconds"] = time.time() - t0
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.save(out)
    _write_manifest(out.parent, "eval", {"checkpoint": args.checkpoint,
                                         "scene": args.scene, "views": views})
    print(report.to_json())
    return 0


def cmd_bench(args) -> int:
    import numpy as np
    from .fields import load_fields
    from .render import render_neural
    from .scene_io import load_scene

    results = {}
    ckpt = Path(args.checkpoint)
    results["model_size_mb"] = ckpt.stat().st_size / (1024 * 1024)
    sdf, rad = load_fields(ckpt)
    scene = load_scene(args.scene)
    cam = scene.views[0].camera
    t0 = time.time()
    render_neural(sdf, rad, cam)
    results["neural_seconds_per_frame"] = time.time() - t0
    results["neural_frame_size"] = [cam.width, cam.height]

    if args.bundle:
        from .exporter import load_bundle
        from .lumigraph import BundleSampler, rasterize, render_view
        bundle = load_bundle(args.bundle)
        sampler = BundleSampler(bundle)
        w = h = args.size
        proto = bundle.cameras[0]
        from .geometry import Camera
        cam = Camera(view=proto.view, proj=proto.proj, width=w, height=h)
        render_view(bundle, cam, width=w, height=h, sampler=sampler)  # warm-up
        n_frames = args.frames
        t0 = time.time()
        for k in range(n_frames):
            render_view(bundle, bundle.cameras[k % len(bundle.cameras)],
                        width=w, height=h, sampler=sampler)
        dt = (time.time() - t0) / n_frames
        results["lumigraph_fps"] = 1.0 / dt
        results["lumigraph_frame_size"] = [w, h]
        results["lumigraph_n_textures"] = len(bundle.cameras)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.json").write_text(json.dumps(results, indent=1))
    _write_manifest(args.out, "bench", {"checkpoint": str(ckpt),
                                        "bundle": args.bundle})
    print(json.dumps(results, indent=1))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


class UsageError(ValueError):
    pass


def build_parser() -> _Parser:
    p = _Parser(prog="lumifield", description=__doc__)
    p.add_argument("--threads", type=int, default=0,
                   help="cap worker/BLAS threads")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic scene")
    s.add_argument("--shape", default="sphere", choices=["sphere", "torus", "box"])
    s.add_argument("--layout", default="ring", choices=["ring", "grid"])
    s.add_argument("--views", type=int, default=16)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--specular", type=float, default=0.7)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(fn=cmd_synth)

    t = sub.add_parser("train", help="fit the fields to a scene")
    t.add_argument("-c", "--config", help="JSON or key=value config file")
    t.add_argument("--set", action="append", metavar="KEY=VALUE")
    t.add_argument("--desk", action="store_true", default=True,
                   help="start from desk-scale defaults (default)")
    t.add_argument("--paper-scale", dest="desk", action="store_false",
                   help="start from full paper-scale defaults")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--holdout", type=int, default=None,
                   help="exclude this view index from training")
    t.add_argument("--resume")
    t.add_argument("--log-every", type=int, default=0)
    t.add_argument("-s", "--scene", required=True)
    t.add_argument("-o", "--out", required=True)
    t.set_defaults(fn=cmd_train)

    r = sub.add_parser("render", help="sphere-traced neural renders")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--scene", required=True)
    r.add_argument("--views", default="all")
    r.add_argument("-o", "--out", required=True)
    r.set_defaults(fn=cmd_render)

    e = sub.add_parser("export", help="mesh + projective texture bundle")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--scene", required=True)
    e.add_argument("--resolution", type=int, default=256)
    e.add_argument("--iso", type=float, default=0.005)
    e.add_argument("--tex-level", type=int, default=1, choices=[1, 2, 3])
    e.add_argument("--tex-views", default="",
                   help="subset of scene views to use as texture cameras")
    e.add_argument("--tex-size", type=int, default=0)
    e.add_argument("-o", "--out", required=True)
    e.set_defaults(fn=cmd_export)

    l = sub.add_parser("lumi-render", help="CPU lumigraph rendering of a bundle")
    l.add_argument("--bundle", required=True)
    l.add_argument("--camera-path", help="JSON list of view matrices")
    l.add_argument("--width", type=int, default=0)
    l.add_argument("--height", type=int, default=0)
    l.add_argument("--debug", action="store_true")
    l.add_argument("-o", "--out", required=True)
    l.set_defaults(fn=cmd_lumi_render)

    v = sub.add_parser("eval", help="masked PSNR report")
    v.add_argument("--checkpoint", required=True)
    v.add_argument("--scene", required=True)
    v.add_argument("--views", default="all")
    v.add_argument("-o", "--out", default="eval_report.json")
    v.set_defaults(fn=cmd_eval)

    b = sub.add_parser("bench", help="timing and model-size report")
    b.add_argument("--checkpoint", required=True)
    b.add_argument("--scene", required=True)
    b.add_argument("--bundle", default="")
    b.add_argument("--size", type=int, default=512)
    b.add_argument("--frames", type=int, default=10)
    b.add_argument("-o", "--out", required=True)
    b.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if args.threads > 0:
        _set_thread_cap(args.threads)
    try:
        return args.fn(args)
    except (KeyError, ValueError, FileNotFoundError) as e:
        if isinstance(e, UsageError):
            print(f"error: {e}", file=sys.stderr)
            return 1
        print(f"error [{type(e).__module__}.{type(e).__name__}]: {e}",
              file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - surface module-qualified failures
        print(f"error [{type(e).__module__}.{type(e).__name__}]: {e}",
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
