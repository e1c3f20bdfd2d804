"""Operator surface: `hyperfield {gen-data, train, eval, gradcheck}`.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import (CheckpointError, SpecMismatchError, load_checkpoint,
                         save_checkpoint)
from .config import ConfigError, RunConfig, dump_config, load_config
from .dataset import DatasetError, read_dataset, write_dataset
from .evaluate import (analytic_grid, compare_regimes, contour_svg, curve_svg,
                       extract_contour, iou, rasterize, regime_table_csv,
                       trajectory_report)
from .gradcheck import TOLERANCE, run_suite
from .hypernet import init_field, predict_weights
from .shapes import (DatasetManifest, ShapeGenerationError, UnknownFamilyError,
                     family_dim, generate_dataset)
from .tasknet import DivergenceError, NumericalError, TaskNetSpec
from .trainer import (CSV_HEADER, STREAM_EVAL, STREAM_INIT, derive_rng,
                      fast_finetune, train_ablation_recon,
                      train_baseline_precomputed, train_field)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _out_dir(cfg: RunConfig) -> Path:
    d = Path(os.environ.get("HNF_OUT_DIR", cfg.out_dir))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_resolved_config(cfg: RunConfig, out: Path):
    (out / "resolved_config.txt").write_text(dump_config(cfg), encoding="utf-8")


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    for key, val in _config_overrides(args):
        setattr(cfg, key, val)
    out_path = Path(args.out) if args.out else Path(cfg.dataset)
    if out_path.exists() and not args.force:
        print(f"error: {out_path} exists (use --force to overwrite)",
              file=sys.stderr)
        return EXIT_VALIDATION
    for fam in cfg.families:
        if family_dim(fam) != cfg.dim:
            print(f"error: family {fam!r} is {family_dim(fam)}D but dim={cfg.dim}",
                  file=sys.stderr)
            return EXIT_VALIDATION
    manifest = DatasetManifest(
        seed=cfg.seed, dim=cfg.dim, num_shapes=cfg.num_shapes,
        cond_points=cfg.cond_points, pool_size=cfg.pool_size,
        family_mix=list(cfg.families))
    samples = generate_dataset(manifest)
    write_dataset(manifest, samples, out_path)
    print(f"wrote {out_path}: {manifest.num_shapes} shapes, dim={manifest.dim}, "
          f"M={manifest.cond_points}, P={manifest.pool_size}, "
          f"families={','.join(manifest.family_mix)}, seed={manifest.seed}")
    return EXIT_OK


def _train_ours(field, samples, cfg, state, out, log_path, stop_at=None):
    ckpt_path = out / "checkpoint.hnf"
    mode = "a" if state is not None and state.iteration > 0 else "w"
    with open(log_path, mode, encoding="utf-8", newline="") as log_file:
        if mode == "w":
            log_file.write(CSV_HEADER)
        tc = cfg.train_config()
        last = tc.iterations if stop_at is None else min(stop_at, tc.iterations)
        while True:
            start_it = state.iteration if state else 0
            step = cfg.checkpoint_every if cfg.checkpoint_every > 0 else last
            next_stop = min(last, start_it + step)
            field, logs, state, _ = train_field(
                field, samples, tc, state=state, log_file=log_file,
                max_iterations=next_stop)
            save_checkpoint(ckpt_path, field, state, cfg)
            if state.iteration >= last:
                break
    return field, state


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    for key, val in _config_overrides(args):
        setattr(cfg, key, val)
    manifest, samples = read_dataset(cfg.dataset)
    if manifest.dim != cfg.task_dims[0]:
        print(f"error: dataset dim {manifest.dim} != task input dim "
              f"{cfg.task_dims[0]}", file=sys.stderr)
        return EXIT_VALIDATION
    out = _out_dir(cfg)
    _write_resolved_config(cfg, out)
    spec = TaskNetSpec(tuple(cfg.task_dims))
    tc = cfg.train_config()

    if args.resume:
        field, state, _ = load_checkpoint(args.resume,
                                          expect_task_dims=cfg.task_dims)
    else:
        field = init_field(spec, cfg.hypernet_config(),
                           derive_rng(cfg.seed, STREAM_INIT))
        state = None

    log_path = out / "train_log.csv"
    try:
        if args.regime == "ours":
            field, state = _train_ours(field, samples, cfg, state, out, log_path,
                                       stop_at=args.max_iterations)
        elif args.regime == "baseline":
            field, logs, report = train_baseline_precomputed(field, samples, tc)
            from .trainer import TrainState, AdamState
            state = TrainState(iteration=tc.iterations,
                               adam=AdamState.fresh(field.params))
            with open(log_path, "w", encoding="utf-8", newline="") as f:
                f.write(CSV_HEADER)
                for rec in logs:
                    f.write(rec.csv_row())
            (out / "baseline_cost_report.csv").write_text(
                "phase,inner_steps,iterations,wallclock_s\n"
                f"precompute,{report.phase1_inner_steps},0,"
                f"{report.phase1_wallclock_s:.3f}\n"
                f"regression,0,{report.phase2_iterations},"
                f"{report.phase2_wallclock_s:.3f}\n", encoding="utf-8")
            print(f"baseline phase-1: {report.phase1_inner_steps} oracle steps "
                  f"({report.phase1_wallclock_s:.1f}s); phase-2: "
                  f"{report.phase2_iterations} iterations "
                  f"({report.phase2_wallclock_s:.1f}s)")
            save_checkpoint(out / "checkpoint.hnf", field, state, cfg)
        elif args.regime == "recon":
            with open(log_path, "w", encoding="utf-8", newline="") as f:
                f.write(CSV_HEADER)
                field, logs = train_ablation_recon(field, samples, tc, log_file=f)
            from .trainer import TrainState, AdamState
            state = TrainState(iteration=tc.iterations,
                               adam=AdamState.fresh(field.params))
            save_checkpoint(out / "checkpoint.hnf", field, state, cfg)
        else:
            print(f"error: unknown regime {args.regime!r}", file=sys.stderr)
            return EXIT_VALIDATION
    except (NumericalError, DivergenceError) as e:
        save_checkpoint(out / "checkpoint_on_error.hnf", field,
                        state if state is not None else _fresh_state(field), cfg)
        print(f"numerical failure: {e} (step={getattr(e, 'step', None)})",
              file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"trained regime={args.regime}; checkpoint at {out / 'checkpoint.hnf'}")
    return EXIT_OK


def _fresh_state(field):
    from .trainer import AdamState, TrainState
    return TrainState(iteration=0, adam=AdamState.fresh(field.params))


def cmd_eval(args) -> int:
    field, state, cfg = load_checkpoint(args.checkpoint)
    dataset_path = args.dataset or cfg.dataset
    manifest, samples = read_dataset(dataset_path)
    if manifest.dim != field.spec.input_dim:
        print(f"error: dataset dim {manifest.dim} != checkpoint input dim "
              f"{field.spec.input_dim}", file=sys.stderr)
        return EXIT_VALIDATION
    out = _out_dir(cfg) / "eval"
    out.mkdir(parents=True, exist_ok=True)
    R = cfg.eval_resolution
    fft_steps = cfg.fft_steps if args.fft is None else args.fft
    t_list = ([int(t) for t in args.t_list.split(",")] if args.t_list
              else cfg.resolved_t_list())

    iou_rows = ["shape_id,family,iou,iou_fft\n"]
    for i, s in enumerate(samples):
        truth = analytic_grid(s, R)
        w = predict_weights(field, s.cond_points, field.T)
        iou_plain = iou(rasterize(w, R), truth)
        if fft_steps > 0:
            rng = derive_rng(cfg.seed, STREAM_EVAL, i)
            w_fft = fast_finetune(w, s, fft_steps, cfg.fft_eta, rng,
                                  batch_size=cfg.inner_batch)
            iou_tuned = iou(rasterize(w_fft, R), truth)
        else:
            iou_tuned = iou_plain
        iou_rows.append(f"{s.shape_id},{s.family},{iou_plain!r},{iou_tuned!r}\n")

        rep = trajectory_report(field, s, t_list, R)
        (out / f"trajectory_{s.shape_id:03d}.csv").write_text(
            rep.csv(), encoding="utf-8")
        ts = [e[0] for e in rep.entries]
        ious = [e[1] for e in rep.entries]
        (out / f"trajectory_{s.shape_id:03d}.svg").write_text(
            curve_svg(ts, ious), encoding="utf-8")
        if field.spec.input_dim == 2:
            segs = extract_contour(rasterize(w, R))
            (out / f"contour_{s.shape_id:03d}.svg").write_text(
                contour_svg(segs), encoding="utf-8")
    (out / "iou_table.csv").write_text("".join(iou_rows), encoding="utf-8")
    print(f"eval reports written to {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = run_suite(inject_fault=args.inject_fault)
    failed = []
    for name, err in results.items():
        status = "ok" if err < TOLERANCE else "FAIL"
        print(f"{name:20s} max-rel-error {err:.3e}  {status}")
        if err >= TOLERANCE:
            failed.append(name)
    if failed:
        print(f"gradcheck failed for: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _config_overrides(args):
    out = []
    for item in (args.set or []):
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        from .config import _FIELDS, _parse_value
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        out.append((key, _parse_value(key, raw)))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hyperfield",
        description="Weight-trajectory hypernetwork experiments on occupancy "
                    "shape fitting")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic shape dataset")
    g.add_argument("--config", help="run config file (key = value lines)")
    g.add_argument("--out", help="output dataset path (default: config dataset)")
    g.add_argument("--force", action="store_true", help="overwrite existing file")
    g.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key")
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train a weight field")
    t.add_argument("--config", required=True)
    t.add_argument("--regime", choices=("ours", "baseline", "recon"),
                   default="ours")
    t.add_argument("--resume", help="checkpoint to resume from")
    t.add_argument("--max-iterations", type=int, default=None,
                   help="stop this invocation early (config and schedule are "
                        "unchanged; resume later to finish the run)")
    t.add_argument("--set", action="append", metavar="KEY=VALUE")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", help="dataset path (default: from checkpoint)")
    e.add_argument("--fft", type=int, default=None,
                   help="fast fine-tune steps (default: from config)")
    e.add_argument("--t-list", help="comma-separated timesteps for trajectories")
    e.set_defaults(fn=cmd_eval, set=None)

    c = sub.add_parser("gradcheck", help="gradient-check every primitive")
    c.add_argument("--inject-fault", metavar="PRIMITIVE",
                   help="corrupt one primitive's backward rule (negative test)")
    c.set_defaults(fn=cmd_gradcheck, set=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, UnknownFamilyError, SpecMismatchError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, DivergenceError, ShapeGenerationError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DatasetError, CheckpointError, OSError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
