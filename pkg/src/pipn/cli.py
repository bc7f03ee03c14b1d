"""Command-line pipeline: dataset generation, training, sweeps, reports.

    pipn gen-data --config cfg.json --out data/
    pipn train    --config cfg.json --data data/ --out runs/base
    pipn sweep    --config cfg.json --data data/ --axis batch_size \
                  --values 1,2,4 --out runs/sweep
    pipn report   --run runs/base

Every run directory receives the fully resolved config; rerunning from it
in single-threaded mode reproduces the outputs byte for byte.  History
CSVs carry only deterministic columns (epoch, loss, sensor weight); wall
times go to a separate timing CSV.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from pipn import dataio
from pipn.checkpoint import load_checkpoint, save_checkpoint
from pipn.config import (
    ExperimentConfig,
    config_to_dict,
    load_config,
    save_config,
)
from pipn.geometry import (
    DomainSpec,
    enumerate_domains,
    parse_filter,
    place_sensors,
    sample_point_cloud,
)
from pipn.oracle import Material, solve_domain
from pipn.training import (
    AdamState,
    GeometrySample,
    HistoryRow,
    TrainConfig,
    evaluate,
    train,
)
from pipn.model import build_pipn

logger = logging.getLogger("pipn")

HISTORY_NAME = "history.csv"
TIMING_NAME = "timing.csv"
REPORT_NAME = "report.json"
ERRORS_NAME = "errors.csv"
CHECKPOINT_DIR = "checkpoints"
FINAL_CHECKPOINT = "final.bin"


_thread_limiter = None  # keeps the threadpoolctl controller alive for the process


def _limit_threads(n: int | None) -> None:
    global _thread_limiter
    if n is None:
        return
    try:
        from threadpoolctl import threadpool_limits

        _thread_limiter = threadpool_limits(limits=int(n))
    except ImportError:
        logger.warning("threadpoolctl not installed; --threads ignored")


def _cloud_seed(root_seed: int, spec: DomainSpec) -> int:
    ss = np.random.SeedSequence(
        entropy=(
            int(root_seed),
            11,
            spec.n_poly,
            int(round(spec.side_length * 10)),
            int(round(spec.orientation_deg)),
        )
    )
    return int(ss.generate_state(1)[0])


def generate_geometry(config: ExperimentConfig, spec: DomainSpec) -> GeometrySample:
    """Sample the cloud, run the oracle, and attach sensor readings."""
    ds = config.dataset
    cloud = sample_point_cloud(
        spec,
        n_points=ds.n_points,
        n_outer_bdry=ds.n_outer_boundary,
        n_cavity_bdry=ds.n_cavity_boundary,
        seed=_cloud_seed(config.seed, spec),
    )
    sensor_indices = place_sensors(cloud, ds.n_sensors)
    mat = Material(nu=ds.nu, alpha=ds.alpha)
    cloud, sensors, _ = solve_domain(
        spec, ds.oracle.n_ring, ds.oracle.n_layers, mat, cloud, sensor_indices
    )
    return GeometrySample(cloud=cloud, sensors=sensors)


def _generate_or_error(config_and_spec):
    config, spec = config_and_spec
    try:
        return generate_geometry(config, spec)
    except Exception as exc:  # noqa: BLE001 - recorded per geometry in the manifest
        return exc


def cmd_gen_data(config: ExperimentConfig, out_dir: Path, workers: int | None = None) -> Path:
    """Write one dataset file per selected geometry plus a manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs = enumerate_domains(parse_filter(config.dataset.filter_expr))
    if not specs:
        raise SystemExit(f"filter {config.dataset.filter_expr!r} selects no geometries")
    logger.info("generating %d geometries into %s", len(specs), out_dir)
    oracle_meta = {
        "n_ring": config.dataset.oracle.n_ring,
        "n_layers": config.dataset.oracle.n_layers,
        "nu": config.dataset.nu,
        "alpha": config.dataset.alpha,
    }
    generated, failures = [], []

    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_generate_or_error, [(config, s) for s in specs]))
        outcomes = zip(specs, results)
    else:
        outcomes = ((spec, _generate_or_error((config, spec))) for spec in specs)

    for spec, result in outcomes:
        if isinstance(result, Exception):
            logger.error("geometry %s failed: %s", spec.label, result)
            failures.append({"label": spec.label, "reason": str(result)})
            continue
        filename = spec.label + ".json"
        dataio.write_geometry_file(out_dir / filename, result, oracle_meta)
        generated.append({"label": spec.label, "file": filename})
        logger.info("wrote %s", filename)
    dataio.write_manifest(out_dir, generated, failures, config_to_dict(config))
    return out_dir


class _HistoryWriter:
    """Streams history rows as they arrive; wall times go to a separate
    file so the history CSV itself is bitwise reproducible."""

    def __init__(self, run_dir: Path):
        self._history = (run_dir / HISTORY_NAME).open("w", newline="")
        self._timing = (run_dir / TIMING_NAME).open("w", newline="")
        self._history_csv = csv.writer(self._history)
        self._timing_csv = csv.writer(self._timing)
        self._history_csv.writerow(["epoch", "loss", "omega_sensor"])
        self._timing_csv.writerow(["epoch", "seconds"])

    def write(self, row: HistoryRow) -> None:
        self._history_csv.writerow([row.epoch, repr(row.loss), repr(row.omega_sensor)])
        self._timing_csv.writerow([row.epoch, f"{row.seconds:.3f}"])
        self._history.flush()
        self._timing.flush()

    def close(self) -> None:
        self._history.close()
        self._timing.close()


def _write_report(run_dir: Path, dataset, labels, report) -> None:
    u_min, u_mean, u_max = report.u_stats
    v_min, v_mean, v_max = report.v_stats
    summary = {
        "relative_l2_u": {"min": u_min, "mean": u_mean, "max": u_max},
        "relative_l2_v": {"min": v_min, "mean": v_mean, "max": v_max},
        "n_geometries": len(dataset),
    }
    (run_dir / REPORT_NAME).write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    with (run_dir / ERRORS_NAME).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["geometry", "rel_l2_u", "rel_l2_v", "degenerate"])
        for label, g in zip(labels, report.per_geometry):
            writer.writerow([label, repr(g.err_u), repr(g.err_v), int(g.degenerate)])


def cmd_train(
    config: ExperimentConfig,
    data_dir: Path,
    out_dir: Path,
    resume: Path | None = None,
) -> Path:
    """Train against an existing dataset; emit history, checkpoints, report."""
    data_dir, run_dir = Path(data_dir), Path(out_dir)
    if not (data_dir / dataio.MANIFEST_NAME).exists():
        raise SystemExit(f"no dataset manifest in {data_dir}; run gen-data first")
    dataset = dataio.load_dataset(data_dir)
    labels = [s.cloud.spec.label for s in dataset]
    run_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir = run_dir / CHECKPOINT_DIR
    ckpt_dir.mkdir(exist_ok=True)
    save_config(run_dir / "config.json", config)

    train_cfg = config.resolved_train()
    mat = Material(nu=config.dataset.nu, alpha=config.dataset.alpha)
    if resume is not None:
        model, adam_state, start_epoch, ckpt_seed = load_checkpoint(resume)
        if ckpt_seed != config.seed:
            logger.warning("checkpoint seed %d differs from config seed %d", ckpt_seed, config.seed)
        logger.info("resuming from %s at epoch %d", resume, start_epoch)
    else:
        model = build_pipn(train_cfg.arch(), seed=train_cfg.seed)
        adam_state = AdamState.for_params(model.params)
        start_epoch = 0

    every = max(1, int(config.checkpoint_every))
    writer = _HistoryWriter(run_dir)

    def on_epoch(mdl, state, row: HistoryRow):
        writer.write(row)
        if (row.epoch + 1) % every == 0:
            save_checkpoint(
                ckpt_dir / f"epoch_{row.epoch + 1:06d}.bin", mdl, state, row.epoch + 1, config.seed
            )
        if (row.epoch + 1) % 50 == 0 or row.epoch == 0:
            logger.info("epoch %d  loss %.6e  omega_sensor %.3f", row.epoch, row.loss, row.omega_sensor)

    try:
        model, history = train(
            dataset,
            train_cfg,
            mat=mat,
            model=model,
            adam_state=adam_state,
            start_epoch=start_epoch,
            on_epoch=on_epoch,
        )
    except FloatingPointError as exc:
        writer.close()
        raise SystemExit(
            f"training aborted ({exc}); last periodic checkpoint kept in {ckpt_dir}"
        ) from exc
    writer.close()
    save_checkpoint(
        run_dir / FINAL_CHECKPOINT, model, adam_state, len(history) + start_epoch, config.seed
    )
    report = evaluate(model, dataset)
    _write_report(run_dir, dataset, labels, report)
    u_stats, v_stats = report.u_stats, report.v_stats
    logger.info("relative L2 u: min %.4e mean %.4e max %.4e", *u_stats)
    logger.info("relative L2 v: min %.4e mean %.4e max %.4e", *v_stats)
    return run_dir


_SWEEP_AXES = ("batch_size", "network_size", "pooling", "schedule")


def _apply_axis(train_cfg: TrainConfig, axis: str, value: str) -> TrainConfig:
    if axis == "batch_size":
        return replace(train_cfg, batch_size=int(value))
    if axis == "network_size":
        return replace(train_cfg, n_s=float(value))
    if axis == "pooling":
        return replace(train_cfg, pooling=value)
    if axis == "schedule":
        return replace(train_cfg, schedule=replace(train_cfg.schedule, kind=value))
    raise SystemExit(f"unknown sweep axis {axis!r}; choose from {_SWEEP_AXES}")


def cmd_sweep(
    config: ExperimentConfig,
    data_dir: Path,
    axis: str,
    values: list[str],
    out_dir: Path,
) -> Path:
    """One training run per value; rows of (value, errors, final loss, time)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        sub = out_dir / f"{axis}={value}"
        sub_config = replace(config, train=_apply_axis(config.train, axis, value))
        try:
            run_dir = cmd_train(sub_config, data_dir, sub)
            report = json.loads((run_dir / REPORT_NAME).read_text())
            with (run_dir / HISTORY_NAME).open() as fh:
                last = list(csv.DictReader(fh))[-1]
            with (run_dir / TIMING_NAME).open() as fh:
                seconds = list(csv.DictReader(fh))[-1]["seconds"]
            rows.append(
                [
                    value,
                    repr(report["relative_l2_u"]["mean"]),
                    repr(report["relative_l2_v"]["mean"]),
                    last["loss"],
                    seconds,
                    "",
                ]
            )
        except Exception as exc:  # noqa: BLE001 - sweep rows record failures
            logger.error("sweep value %s failed: %s", value, exc)
            rows.append([value, "", "", "", "", str(exc)])
    with (out_dir / "sweep.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([axis, "avg_rel_l2_u", "avg_rel_l2_v", "final_loss", "seconds", "error"])
        writer.writerows(rows)
    return out_dir


def cmd_report(
    run_dir: Path,
    data_dir: Path | None = None,
    geometries: list[str] | None = None,
) -> Path:
    """Emit plot-ready CSVs: the loss curve and per-point error maps.

    Error maps need the dataset directory (``--data``); without it only
    the loss curve is produced.
    """
    run_dir = Path(run_dir)
    missing = [
        name
        for name in (HISTORY_NAME, "config.json", FINAL_CHECKPOINT)
        if not (run_dir / name).exists()
    ]
    if missing:
        raise SystemExit(f"run directory {run_dir} is missing: {', '.join(missing)}")

    with (run_dir / HISTORY_NAME).open() as fh:
        history_rows = list(csv.DictReader(fh))
    with (run_dir / "loss_curve.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for row in history_rows:
            writer.writerow([row["epoch"], row["loss"]])

    if data_dir is not None:
        model, _, _, _ = load_checkpoint(run_dir / FINAL_CHECKPOINT)
        wanted = set(geometries) if geometries else None
        for sample in dataio.load_dataset(data_dir):
            label = sample.cloud.spec.label
            if wanted is not None and label not in wanted:
                continue
            pred = model.predict(sample.cloud)
            with (run_dir / f"error_map_{label}.csv").open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["x", "y", "abs_err_u", "abs_err_v"])
                for (x, y), pu, pv, ru, rv in zip(
                    sample.cloud.coords, pred[:, 0], pred[:, 1], sample.cloud.ref_u, sample.cloud.ref_v
                ):
                    writer.writerow([repr(x), repr(y), repr(abs(pu - ru)), repr(abs(pv - rv))])
    logger.info("report written to %s", run_dir)
    return run_dir


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="pipn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="experiment config JSON")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="BLAS thread cap (1 = bitwise-reproducible)")

    p_gen = sub.add_parser("gen-data", help="generate per-geometry dataset files")
    common(p_gen)
    p_gen.add_argument("--out", type=Path, required=True)
    p_gen.add_argument("--filter", help="override the dataset filter expression")
    p_gen.add_argument("--workers", type=int, help="generate geometries in parallel")

    p_train = sub.add_parser("train", help="train on an existing dataset")
    common(p_train)
    p_train.add_argument("--data", type=Path, required=True)
    p_train.add_argument("--out", type=Path, required=True)
    p_train.add_argument("--resume", type=Path, help="checkpoint to continue from")

    p_sweep = sub.add_parser("sweep", help="one training per axis value")
    common(p_sweep)
    p_sweep.add_argument("--data", type=Path, required=True)
    p_sweep.add_argument("--out", type=Path, required=True)
    p_sweep.add_argument("--axis", required=True, choices=_SWEEP_AXES)
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values")

    p_report = sub.add_parser("report", help="emit plot-ready CSVs for a run")
    p_report.add_argument("--run", type=Path, required=True)
    p_report.add_argument("--data", type=Path, help="dataset dir for per-point error maps")
    p_report.add_argument("--geometry", action="append", help="restrict error maps to labels")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    if args.command == "report":
        cmd_report(args.run, data_dir=args.data, geometries=args.geometry)
        return 0

    config = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    _limit_threads(args.threads if args.threads is not None else config.threads)

    if args.command == "gen-data":
        if args.filter:
            config = replace(config, dataset=replace(config.dataset, filter_expr=args.filter))
        cmd_gen_data(config, args.out, workers=args.workers)
    elif args.command == "train":
        cmd_train(config, args.data, args.out, resume=args.resume)
    elif args.command == "sweep":
        cmd_sweep(config, args.data, args.axis, args.values.split(","), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
