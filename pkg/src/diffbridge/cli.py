"""Command-line surface: gen, train, migrate, sweep, label, verify.

Every command reads an optional JSON config (defaults apply otherwise),
applies flag overrides, writes its outputs under one run directory
(frames/, labels/, checkpoints/) and finishes with a manifest.json that
lists every emitted file exactly once.

Exit codes: 0 success, 1 usage/config error, 2 numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attention import Priority
from .bridge import NonFiniteStateError, depth_migrate, migrate
from .config import RunConfig, RunManifest
from .denoiser import AnalyticFieldEpsilon, AnalyticGmmEpsilon, load_checkpoint, save_checkpoint
from .domains import GaussianMixture, gmm_log_density, sample_domain, save_pgm
from .softlabel import (
    DegenerateEndpointsError,
    calibrate_depth,
    highpass_magnitude,
    soft_label,
)
from .train import TrainingDivergedError, train_denoiser
from .verify import run_all

_ROLE_SEEDS = {
    "source-samples": 1,
    "target-samples": 2,
    "train-source": 3,
    "train-target": 4,
    "migrate": 5,
    "sweep": 6,
    "label": 7,
}


def _role_seed(seed: int, role: str) -> int:
    return int(np.random.SeedSequence([seed, _ROLE_SEEDS[role]]).generate_state(1)[0])


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; this tool uses 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="diffbridge", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the global seed")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("--steps", type=int, help="override bridge sub-steps per unit time")
    common.add_argument(
        "--depth-grid",
        help="override the sweep depth grid, comma-separated values in [0,1]",
    )
    common.add_argument("--cutoff", type=float, help="override the high-pass cutoff")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="emit source/target domain samples")
    sub.add_parser("train", parents=[common], help="train per-domain denoisers")
    sub.add_parser("migrate", parents=[common], help="run full-depth domain migration")
    sub.add_parser("sweep", parents=[common], help="depth sweep with soft labels")
    label_p = sub.add_parser("label", parents=[common], help="calibrate depths to target labels")
    label_p.add_argument(
        "--targets", help="comma-separated target labels in [0,1]", default=None
    )
    sub.add_parser("verify", parents=[common], help="run the built-in oracle suite")
    return parser


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    depth_grid = None
    if args.depth_grid is not None:
        depth_grid = tuple(float(v) for v in args.depth_grid.split(","))
    return cfg.with_overrides(
        seed=args.seed,
        out=args.out,
        steps=args.steps,
        depth_grid=depth_grid,
        cutoff=args.cutoff,
    )


def _prepare_dirs(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    for sub in ("frames", "labels", "checkpoints"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    return out


def _write_points_csv(path, points: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id"] + [f"c{d}" for d in range(points.shape[1])])
        for i, row in enumerate(points):
            writer.writerow([i] + [repr(float(v)) for v in row])


def _build_models(cfg: RunConfig, pair, schedule):
    if cfg.models.kind == "analytic":
        if isinstance(pair.source, GaussianMixture):
            return (
                AnalyticGmmEpsilon(pair.source, schedule),
                AnalyticGmmEpsilon(pair.target, schedule),
            )
        return (
            AnalyticFieldEpsilon(pair.source.mode_variances, schedule),
            AnalyticFieldEpsilon(pair.target.mode_variances, schedule),
        )
    if cfg.models.kind == "checkpoint":
        if not cfg.models.source or not cfg.models.target:
            raise ValueError("checkpoint models need both source and target paths")
        return load_checkpoint(cfg.models.source), load_checkpoint(cfg.models.target)
    raise ValueError(f"unknown models kind {cfg.models.kind!r}")


def _is_image_pair(pair) -> bool:
    return len(pair.shape) == 2


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen(cfg: RunConfig) -> int:
    out = _prepare_dirs(cfg)
    manifest = RunManifest(cfg, "gen")
    pair = cfg.domains.build(cfg.seed)
    for role, domain in (("source", pair.source), ("target", pair.target)):
        samples = sample_domain(domain, cfg.gen_count, _role_seed(cfg.seed, f"{role}-samples"))
        if _is_image_pair(pair):
            for i, x in enumerate(samples):
                path = out / "frames" / f"{role}_{i:03d}.pgm"
                save_pgm(x, path)
                manifest.add(path, kind=f"{role}-sample", sample_id=i)
        else:
            path = out / "frames" / f"{role}.csv"
            _write_points_csv(path, samples)
            manifest.add(path, kind=f"{role}-samples", count=int(len(samples)))
    manifest.note("sample_count", cfg.gen_count)
    manifest.finish(out)
    print(f"gen: wrote {2 * cfg.gen_count} samples under {out}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    out = _prepare_dirs(cfg)
    manifest = RunManifest(cfg, "train")
    pair = cfg.domains.build(cfg.seed)
    schedule = cfg.schedule.build()
    # Hybrid rule at training time: the source model serves forward legs,
    # the target model reverse legs.
    roles = (
        ("source", pair.source, Priority.GLOBAL_FIRST, "train-source"),
        ("target", pair.target, Priority.LOCAL_FIRST, "train-target"),
    )
    for role, domain, priority, seed_role in roles:
        data = sample_domain(domain, cfg.train.samples, _role_seed(cfg.seed, seed_role))
        train_cfg = cfg.train.build(schedule, priority, _role_seed(cfg.seed, seed_role))
        model, losses = train_denoiser(data, train_cfg)
        ckpt = out / "checkpoints" / f"{role}.ckpt"
        save_checkpoint(model, ckpt)
        manifest.add(ckpt, kind=f"{role}-checkpoint", final_loss=losses[-1])
        loss_csv = out / "checkpoints" / f"{role}_loss.csv"
        with open(loss_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss"])
            for e, loss in enumerate(losses):
                writer.writerow([e, repr(loss)])
        manifest.add(loss_csv, kind=f"{role}-loss-history", epochs=len(losses))
        print(f"train[{role}]: loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    manifest.finish(out)
    return 0


def cmd_migrate(cfg: RunConfig) -> int:
    out = _prepare_dirs(cfg)
    manifest = RunManifest(cfg, "migrate")
    pair = cfg.domains.build(cfg.seed)
    schedule = cfg.schedule.build()
    model_src, model_tgt = _build_models(cfg, pair, schedule)
    bridge_cfg = cfg.bridge.build(schedule)
    sources = sample_domain(pair.source, cfg.gen_count, _role_seed(cfg.seed, "migrate"))
    migrated = np.stack(
        [migrate(x, model_src, model_tgt, bridge_cfg).migrated for x in sources]
    )
    if _is_image_pair(pair):
        for i, (src, mig) in enumerate(zip(sources, migrated)):
            sp = out / "frames" / f"source_{i:03d}.pgm"
            mp = out / "frames" / f"migrated_{i:03d}.pgm"
            save_pgm(src, sp)
            save_pgm(np.clip(mig, -1.0, 1.0), mp)
            manifest.add(sp, kind="source-sample", sample_id=i)
            manifest.add(mp, kind="migrated-sample", sample_id=i)
        spec = cfg.highpass()
        manifest.note(
            "highpass_magnitude_mean",
            {
                "source": float(np.mean([highpass_magnitude(x, spec) for x in sources])),
                "migrated": float(np.mean([highpass_magnitude(x, spec) for x in migrated])),
            },
        )
    else:
        sp = out / "frames" / "source.csv"
        mp = out / "frames" / "migrated.csv"
        _write_points_csv(sp, sources)
        _write_points_csv(mp, migrated)
        manifest.add(sp, kind="source-samples", count=int(len(sources)))
        manifest.add(mp, kind="migrated-samples", count=int(len(migrated)))
        gain = gmm_log_density(pair.target, migrated) - gmm_log_density(pair.target, sources)
        manifest.note(
            "target_log_density_gain",
            {"mean": float(gain.mean()), "fraction_improved": float(np.mean(gain > 0))},
        )
    manifest.finish(out)
    print(f"migrate: {cfg.gen_count} samples migrated under {out}")
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    out = _prepare_dirs(cfg)
    manifest = RunManifest(cfg, "sweep")
    pair = cfg.domains.build(cfg.seed)
    schedule = cfg.schedule.build()
    model_src, model_tgt = _build_models(cfg, pair, schedule)
    bridge_cfg = cfg.bridge.build(schedule)
    sources = sample_domain(pair.source, cfg.sweep_count, _role_seed(cfg.seed, "sweep"))
    image_pair = _is_image_pair(pair)
    spec = cfg.highpass()

    label_rows = []
    if image_pair:
        for i, x in enumerate(sources):
            sp = out / "frames" / f"sample{i:03d}_source.pgm"
            save_pgm(x, sp)
            manifest.add(sp, kind="source-sample", sample_id=i)
            # Per-sample endpoints: the full-depth migration of this sample.
            endpoint = migrate(x, model_src, model_tgt, bridge_cfg).migrated
            a_s = highpass_magnitude(x, spec)
            a_t = highpass_magnitude(endpoint, spec)
            for depth in cfg.sweep_depths:
                traj = depth_migrate(x, model_src, model_tgt, bridge_cfg, float(depth))
                frame = out / "frames" / f"sample{i:03d}_d{traj.depth:.4f}.pgm"
                save_pgm(np.clip(traj.migrated, -1.0, 1.0), frame)
                a_i = highpass_magnitude(traj.migrated, spec)
                label = soft_label(a_s, a_i, a_t)
                label_rows.append(
                    [i, repr(traj.depth), repr(label.raw), repr(label.value),
                     repr(a_s), repr(a_i), repr(a_t)]
                )
                manifest.add(
                    frame, kind="sweep-frame", sample_id=i,
                    depth=traj.depth, soft_label=label.value,
                )
        labels_path = out / "labels" / "labels.csv"
        with open(labels_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["sample_id", "depth_snapped", "raw_label", "clamped_label",
                 "A_s", "A_i", "A_t"]
            )
            writer.writerows(label_rows)
        manifest.add(labels_path, kind="labels", rows=len(label_rows))
    else:
        # Point domains have no spectral labels; emit per-depth coordinates.
        for depth in cfg.sweep_depths:
            trajs = [
                depth_migrate(x, model_src, model_tgt, bridge_cfg, float(depth))
                for x in sources
            ]
            snapped = trajs[0].depth
            path = out / "frames" / f"depth_{snapped:.4f}.csv"
            _write_points_csv(path, np.stack([t.migrated for t in trajs]))
            manifest.add(path, kind="sweep-frame", depth=snapped, count=len(trajs))
        manifest.note("labels", "point domains carry no spectral labels")
    manifest.finish(out)
    print(f"sweep: {cfg.sweep_count} samples x {len(cfg.sweep_depths)} depths under {out}")
    return 0


def cmd_label(cfg: RunConfig, targets=None) -> int:
    out = _prepare_dirs(cfg)
    manifest = RunManifest(cfg, "label")
    pair = cfg.domains.build(cfg.seed)
    if not _is_image_pair(pair):
        raise ValueError("label calibration needs an image domain pair")
    schedule = cfg.schedule.build()
    model_src, model_tgt = _build_models(cfg, pair, schedule)
    bridge_cfg = cfg.bridge.build(schedule)
    spec = cfg.highpass()
    targets = tuple(targets) if targets is not None else cfg.label_targets
    sources = sample_domain(pair.source, cfg.label_count, _role_seed(cfg.seed, "label"))

    rows = []
    for i, x in enumerate(sources):
        endpoint = migrate(x, model_src, model_tgt, bridge_cfg).migrated
        for target in targets:
            depth, label = calibrate_depth(
                float(target), x, model_src, model_tgt, bridge_cfg,
                cfg.sweep_depths, spec, x_target_ref=endpoint,
            )
            traj = depth_migrate(x, model_src, model_tgt, bridge_cfg, depth)
            frame = out / "frames" / f"sample{i:03d}_target{target:.2f}_d{depth:.4f}.pgm"
            save_pgm(np.clip(traj.migrated, -1.0, 1.0), frame)
            manifest.add(
                frame, kind="calibrated-frame", sample_id=i,
                target_label=float(target), achieved_label=label.value,
                raw_label=label.raw, depth=depth,
            )
            rows.append([i, repr(float(target)), repr(depth), repr(label.value), repr(label.raw)])
    labels_path = out / "labels" / "calibrated.csv"
    with open(labels_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "target_label", "depth", "achieved_label", "raw_label"])
        writer.writerows(rows)
    manifest.add(labels_path, kind="labels", rows=len(rows))
    manifest.finish(out)
    print(f"label: calibrated {len(rows)} frames under {out}")
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    results = run_all(schedule=cfg.schedule.build(), seed=cfg.seed)
    for result in results:
        print(result.line())
    failed = [r for r in results if not r.passed]
    print(f"verify: {len(results) - len(failed)}/{len(results)} checks passed")
    return 3 if failed else 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _load_config(args)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "migrate":
            return cmd_migrate(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "label":
            targets = None
            if getattr(args, "targets", None):
                targets = tuple(float(v) for v in args.targets.split(","))
            return cmd_label(cfg, targets)
        if args.command == "verify":
            return cmd_verify(cfg)
        parser.error(f"unknown command {args.command!r}")
    except (NonFiniteStateError, TrainingDivergedError, DegenerateEndpointsError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
