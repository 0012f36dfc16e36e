"""Command-line entry point: ``hashsphere <subcommand> [flags]``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import re
import sys

import numpy as np

from . import geodesic
from .baseline_grids import match_table_cap
from .gradcheck import gradient_check
from .io import (
    CheckpointError, HDRFormatError, ensure_dir, load_checkpoint, load_hdr, save_checkpoint,
    save_pfm, write_loss_log, write_results_csv,
)
from .models import ENCODERS, Encoder, make_encoder
from .tasks.envmap import PROCEDURAL, envmap_lookup, procedural_envmap, texel_directions
from .tasks.synthetic import SyntheticField5D
from .tasks.training import (
    TrainConfig, TrainingError, envmap_mlp_config, joint_mlp_config, metrics_from_predictions,
    train_envmap, train_joint,
)
from .nn import NonFiniteError
from .hashing import ConfigError

ENVMAP_ENCODERS = ("hashsphere", "grid2d", "grid3d")


class UsageError(Exception):
    pass


def power_of_two_int(text: str) -> int:
    """Accepts ``16384``, ``2^14`` or ``2**14``."""
    m = re.fullmatch(r"\s*(\d+)\s*(?:(?:\^|\*\*)\s*(\d+))?\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    base, exp = int(m.group(1)), m.group(2)
    value = base ** int(exp) if exp is not None else base
    if value < 1 or value & (value - 1):
        raise argparse.ArgumentTypeError(f"not a power of two: {text!r}")
    return value


def _add_model_flags(p, *, levels=8, base_resolution=8, table_cap=2**14, steps=512, lr=0.01,
                     batch_size=2**14, encoders=ENVMAP_ENCODERS, encoder="hashsphere"):
    p.add_argument("--encoder", choices=encoders, default=encoder, help="input encoding")
    p.add_argument("--levels", type=int, default=levels, help="number of levels L")
    p.add_argument("--features", type=int, default=2, help="features per level F")
    p.add_argument("--table-cap", type=power_of_two_int, default=table_cap, help="per-level table cap T")
    p.add_argument("--base-resolution", type=int, default=base_resolution, help="grid base resolution N0")
    p.add_argument("--per-level-scale", type=float, default=2.0, help="grid per-level scale b")
    p.add_argument("--dir-level-cap", type=int, default=4, help="joint directional depth cap L_d")
    p.add_argument("--hidden-layers", type=int, default=2, help="MLP hidden layers")
    p.add_argument("--hidden-width", type=int, default=16, help="MLP hidden width")
    p.add_argument("--steps", type=int, default=steps, help="Adam steps")
    p.add_argument("--lr", type=float, default=lr, help="Adam learning rate")
    p.add_argument("--batch-size", type=int, default=batch_size, help="samples per step")
    p.add_argument("--weight-decay", type=float, default=0.0, help="L2 regularization strength")
    p.add_argument("--seed", type=int, default=0, help="random seed")


def _add_target_flags(p):
    p.add_argument("--input", help="lat-long HDR image (.hdr or .pfm)")
    p.add_argument("--procedural", choices=sorted(PROCEDURAL), help="built-in procedural map")
    p.add_argument("--width", type=int, default=512, help="procedural map width")
    p.add_argument("--height", type=int, default=256, help="procedural map height")
    p.add_argument("--map-seed", type=int, default=7, help="procedural map seed")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="hashsphere", description=__doc__.splitlines()[0], formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-envmap", help="fit an encoding + MLP to an environment map", formatter_class=fmt)
    _add_model_flags(p)
    _add_target_flags(p)
    p.add_argument("--out-dir", default="runs/envmap", help="directory for checkpoint, CSV and loss log")

    p = sub.add_parser("fit-joint", help="fit the joint encoding to a synthetic 5D field", formatter_class=fmt)
    _add_model_flags(p, base_resolution=16, table_cap=2**16, steps=4096, lr=0.005, batch_size=2**12,
                     encoders=("hashgridsphere",), encoder="hashgridsphere")
    p.add_argument("--lobes", type=int, default=4, help="lobes in the synthetic field")
    p.add_argument("--field-seed", type=int, default=0, help="synthetic field seed")
    p.add_argument("--constant", type=float, default=None, help="fit a constant field in (0, 1) instead")
    p.add_argument("--out-dir", default="runs/joint", help="directory for checkpoint, CSV and loss log")

    p = sub.add_parser("eval", help="evaluate an environment-map checkpoint", formatter_class=fmt)
    p.add_argument("checkpoint", help="checkpoint file")
    _add_target_flags(p)
    p.add_argument("--dump-pfm", default=None, help="write the predicted lat-long map as PFM")

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients", formatter_class=fmt)
    p.add_argument("--encoder", choices=ENCODERS + ("all",), default="all", help="encoder to check")
    p.add_argument("--levels", type=int, default=3, help="number of levels")
    p.add_argument("--hidden-width", type=int, default=8, help="MLP hidden width")
    p.add_argument("--table-cap", type=power_of_two_int, default=64, help="small T so hashed levels appear")
    p.add_argument("--probes", type=int, default=100, help="random parameters probed per encoder")
    p.add_argument("--tolerance", type=float, default=1e-4, help="pass threshold on max relative error")
    p.add_argument("--seed", type=int, default=0, help="random seed")

    p = sub.add_parser("export-grid", help="write the geodesic grid of one level as OBJ", formatter_class=fmt)
    p.add_argument("--level", type=int, default=2, help="subdivision level (0-8)")
    p.add_argument("--output", default="-", help="OBJ path, '-' for stdout")

    p = sub.add_parser("sweep", help="envmap fits over a grid of T and L values", formatter_class=fmt)
    _add_model_flags(p)
    _add_target_flags(p)
    p.set_defaults(procedural=None)
    p.add_argument("--encoders", nargs="+", choices=ENVMAP_ENCODERS, default=list(ENVMAP_ENCODERS),
                   help="encoders to sweep")
    p.add_argument("--table-caps", nargs="+", type=power_of_two_int, default=[2**14, 2**16, 2**18],
                   help="T values")
    p.add_argument("--levels-list", nargs="+", type=int, default=[8, 10], help="L values")
    p.add_argument("--match-memory", action="store_true",
                   help="shrink baseline T so encoding memory matches the hash-sphere")
    p.add_argument("--output", default="runs/sweep.csv", help="CSV path")
    return parser


# -- helpers ----------------------------------------------------------------


def _load_target(args):
    if args.input and args.procedural:
        raise UsageError("give either --input or --procedural, not both")
    if args.input:
        if not os.path.isfile(args.input):
            raise UsageError(f"input file not found: {args.input}")
        return load_hdr(args.input), {"input": args.input}
    if args.procedural:
        env = procedural_envmap(args.procedural, args.width, args.height, args.map_seed)
        return env, {"procedural": args.procedural, "map_seed": args.map_seed,
                     "width": args.width, "height": args.height}
    raise UsageError("one of --input or --procedural is required")


def _encoder(args, kind=None, levels=None, table_cap=None) -> Encoder:
    return make_encoder(kind or args.encoder, levels=levels or args.levels, features=args.features,
                        table_cap=table_cap or args.table_cap, base_resolution=args.base_resolution,
                        per_level_scale=args.per_level_scale, dir_level_cap=args.dir_level_cap)


def _train_config(args) -> TrainConfig:
    return TrainConfig(steps=args.steps, lr=args.lr, batch_size=args.batch_size, seed=args.seed,
                       weight_decay=args.weight_decay)


def _print(report) -> None:
    print(f"encoder={report.encoder} initial_rel_l2={report.initial_rel_l2:.6g} "
          f"final_rel_l2={report.final_rel_l2:.6g} psnr={report.final_psnr:.4f} "
          f"final_loss={report.loss_curve[-1] if report.loss_curve else float('nan'):.6g} "
          f"encoding_bytes={report.encoding_bytes} mlp_bytes={report.mlp_bytes} "
          f"memory_bytes={report.memory_bytes} seconds={report.wall_seconds:.2f}")


def _write_run(out_dir, report, model, meta) -> None:
    ensure_dir(out_dir)
    save_checkpoint(model, os.path.join(out_dir, "model.ckpt"), meta)
    write_results_csv([report], os.path.join(out_dir, "results.csv"))
    write_loss_log(report, os.path.join(out_dir, "loss.jsonl"))


# -- subcommands ------------------------------------------------------------


def cmd_fit_envmap(args) -> int:
    env, source = _load_target(args)
    enc = _encoder(args)
    mlp_cfg = envmap_mlp_config(enc, args.hidden_layers, args.hidden_width)
    report, model = train_envmap(env, enc, mlp_cfg, _train_config(args), return_model=True)
    _print(report)
    meta = {"task": "envmap", "seed": args.seed, "steps": args.steps, **source}
    _write_run(args.out_dir, report, model, meta)
    return 0


def cmd_fit_joint(args) -> int:
    enc = _encoder(args)
    mlp_cfg = joint_mlp_config(enc, args.hidden_layers, args.hidden_width)
    if args.constant is not None:
        if not 0.0 < args.constant < 1.0:
            raise UsageError("--constant must lie in (0, 1)")
        value = args.constant
        target = lambda x, d: np.full(len(np.reshape(d, (-1, 3))), value)  # noqa: E731
        source = {"constant": value}
    else:
        target = SyntheticField5D.random(args.lobes, args.field_seed)
        source = {"lobes": args.lobes, "field_seed": args.field_seed}
    report, model = train_joint(target, enc, mlp_cfg, _train_config(args), return_model=True)
    _print(report)
    print(f"train_error={report.train_error:.6g} novel_error={report.novel_error:.6g}")
    _write_run(args.out_dir, report, model, {"task": "joint", "seed": args.seed, "steps": args.steps, **source})
    return 0


def cmd_eval(args) -> int:
    if not os.path.isfile(args.checkpoint):
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    model, meta = load_checkpoint(args.checkpoint)
    if model.encoder.kind == "hashgridsphere":
        raise UsageError("eval supports environment-map checkpoints only")
    if not args.input and not args.procedural and "procedural" in meta:
        args.procedural = meta["procedural"]
        args.map_seed = meta.get("map_seed", args.map_seed)
        args.width = meta.get("width", args.width)
        args.height = meta.get("height", args.height)
    env, _ = _load_target(args)
    dirs = texel_directions(env.height, env.width)
    pred = model.predict(dirs)
    m = metrics_from_predictions(pred, envmap_lookup(env, dirs))
    print(f"rel_l2={m['rel_l2']:.6g} psnr={m['psnr']:.4f}")
    if args.dump_pfm:
        save_pfm(args.dump_pfm, pred.reshape(env.height, env.width, 3))
    return 0


def cmd_gradcheck(args) -> int:
    kinds = ENCODERS if args.encoder == "all" else (args.encoder,)
    worst = 0.0
    for kind in kinds:
        res = gradient_check(kind, levels=args.levels, hidden_width=args.hidden_width,
                             table_cap=args.table_cap, probes=args.probes, seed=args.seed)
        print(f"{kind}: max relative error {res.max_rel_error:.3e} over {res.probes} probes")
        worst = max(worst, res.max_rel_error)
    ok = worst < args.tolerance
    print(f"max relative error {worst:.3e} ({'PASS' if ok else 'FAIL'} at {args.tolerance:g})")
    return 0 if ok else 1


def cmd_export_grid(args) -> int:
    if not 0 <= args.level <= geodesic.MAX_DENSE_LEVEL:
        raise UsageError(f"--level must be in [0, {geodesic.MAX_DENSE_LEVEL}]")
    text = geodesic.export_obj(args.level)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="ascii") as fh:
            fh.write(text)
    return 0


def cmd_sweep(args) -> int:
    if not args.input and not args.procedural:
        args.procedural = "noise"
    env, _ = _load_target(args)
    reports = []
    for kind in args.encoders:
        for cap in args.table_caps:
            for levels in args.levels_list:
                enc = _encoder(args, kind, levels, cap)
                if args.match_memory and kind != "hashsphere":
                    target_rows = sum(_encoder(args, "hashsphere", levels, cap).table_rows())
                    enc = Encoder(kind, match_table_cap(enc.config, target_rows))
                mlp_cfg = envmap_mlp_config(enc, args.hidden_layers, args.hidden_width)
                report = train_envmap(env, enc, mlp_cfg, _train_config(args))
                _print(report)
                reports.append(report)
    out_dir = os.path.dirname(args.output)
    if out_dir:
        ensure_dir(out_dir)
    write_results_csv(reports, args.output)
    return 0


COMMANDS = {
    "fit-envmap": cmd_fit_envmap,
    "fit-joint": cmd_fit_joint,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "export-grid": cmd_export_grid,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"hashsphere {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (HDRFormatError, CheckpointError, TrainingError, NonFiniteError, OSError, ValueError) as exc:
        print(f"hashsphere {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
