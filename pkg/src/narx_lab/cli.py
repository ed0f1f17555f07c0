"""Command-line pipeline: simulate -> corrupt -> embed -> train/sweep ->
evaluate -> report.

Each subcommand reads the experiment config, verifies the hashes of the
artifacts it consumes against the output directory's manifest, and
writes its own artifacts plus updated manifest entries.

Exit codes: 0 ok, 2 config error, 3 data error, 4 divergence.
"""

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import artifacts as art
from .config import ExperimentConfig
from .dataset import EmbeddingSpec
from .errors import ConfigError, DataError, DivergenceError, ShapeError
from .evaluation import evaluate, predict_mpo
from .network import train
from .noise import apply_noise
from .oscillator import generate_excitation, simulate
from .sweep import (
    ExperimentData,
    SweepResult,
    build_cell_dataset,
    emit_heatmap,
    run_grid,
)

CLEAN_X = "forcing.csv"
CLEAN_Y = "displacement.csv"
NOISY_X = "forcing.noisy.csv"
NOISY_Y = "displacement.noisy.csv"
DATASET_CSV = "dataset.csv"
DATASET_JSON = "dataset.json"
MODEL_JSON = "model.json"
TRACE_JSON = "trace.json"
EVAL_NOISY_JSON = "eval_report.noisy.json"
EVAL_CLEAN_JSON = "eval_report.clean.json"
PREDICTION_CSV = "prediction.csv"
OVERLAY_ROWS = 250


def _out_dir(config: ExperimentConfig) -> Path:
    out = os.environ.get("NARX_LAB_OUT") or config.out_dir
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_series(out: Path, manifest: art.Manifest, *names: str):
    manifest.verify(*names)
    return tuple(art.read_series_csv(out / name) for name in names)


def cmd_simulate(config: ExperimentConfig) -> int:
    out = _out_dir(config)
    excitation = generate_excitation(config.excitation)
    x, y = simulate(config.oscillator, excitation, config.simulation)
    art.write_series_csv(out / CLEAN_X, x)
    art.write_series_csv(out / CLEAN_Y, y)
    art.Manifest(out).record(CLEAN_X, CLEAN_Y)
    print(f"[simulate] wrote {len(x)} samples to {out / CLEAN_X} and {out / CLEAN_Y}")
    return 0


def cmd_corrupt(config: ExperimentConfig) -> int:
    out = _out_dir(config)
    manifest = art.Manifest(out)
    x, y = _load_series(out, manifest, CLEAN_X, CLEAN_Y)
    xn, yn = apply_noise(x, y, config.noise)
    art.write_series_csv(out / NOISY_X, xn)
    art.write_series_csv(out / NOISY_Y, yn)
    manifest.record(NOISY_X, NOISY_Y)
    print(
        f"[corrupt] trial {config.noise.trial.number} at fraction "
        f"{config.noise.fraction} -> {out / NOISY_X}, {out / NOISY_Y}"
    )
    return 0


def cmd_embed(config: ExperimentConfig) -> int:
    out = _out_dir(config)
    manifest = art.Manifest(out)
    x, y, xn, yn = _load_series(out, manifest, CLEAN_X, CLEAN_Y, NOISY_X, NOISY_Y)
    data = ExperimentData(x, y, xn, yn)
    ds = build_cell_dataset(data, config.embedding)
    art.write_dataset(out / DATASET_CSV, out / DATASET_JSON, ds)
    manifest.record(DATASET_CSV, DATASET_JSON)
    print(f"[embed] {ds.n_rows} rows, partition {ds.partition}")
    return 0


def cmd_train(config: ExperimentConfig) -> int:
    out = _out_dir(config)
    manifest = art.Manifest(out)
    manifest.verify(DATASET_CSV, DATASET_JSON)
    ds = art.read_dataset(out / DATASET_CSV, out / DATASET_JSON)
    model, trace = train(ds, (config.n_hidden, ds.embedding), config.train)
    art.write_json(out / MODEL_JSON, art.model_to_dict(model, config.train, trace))
    art.write_json(out / TRACE_JSON, art.trace_to_dict(trace))
    manifest.record(MODEL_JSON, TRACE_JSON)
    print(
        f"[train] best epoch {trace.best_epoch}/{trace.stopped_epoch}, "
        f"best val loss {trace.val_loss[trace.best_epoch - 1]:.6e}"
    )
    return 0


def cmd_evaluate(config: ExperimentConfig) -> int:
    out = _out_dir(config)
    manifest = art.Manifest(out)
    x, y, xn, yn = _load_series(out, manifest, CLEAN_X, CLEAN_Y, NOISY_X, NOISY_Y)
    manifest.verify(MODEL_JSON)
    model = art.model_from_dict(art.read_json(out / MODEL_JSON))
    data = ExperimentData(x, y, xn, yn)
    ds = build_cell_dataset(data, model.embedding)
    noisy_ref, clean_ref = evaluate(model, (x, y), (xn, yn), ds.partition, block="test")
    art.write_json(out / EVAL_NOISY_JSON, art.eval_report_to_dict(noisy_ref))
    art.write_json(out / EVAL_CLEAN_JSON, art.eval_report_to_dict(clean_ref))
    lo, hi = ds.partition.test
    t_start = model.embedding.n_lags + lo
    art.write_prediction_csv(
        out / PREDICTION_CSV,
        x.dt,
        t_start,
        y.values[t_start : t_start + len(noisy_ref.predicted_series)],
        yn.values[t_start : t_start + len(noisy_ref.predicted_series)],
        noisy_ref.predicted_series,
    )
    manifest.record(EVAL_NOISY_JSON, EVAL_CLEAN_JSON, PREDICTION_CSV)
    print(
        f"[evaluate] test MPO NMSE {noisy_ref.mpo_nmse:.4f}% (noisy ref) / "
        f"{clean_ref.mpo_nmse:.4f}% (clean ref), fit {clean_ref.fit_class}"
    )
    return 0


def _sweep_files(kind: str) -> tuple[str, str, str]:
    return (f"sweep_{kind}.csv", f"sweep_{kind}.json", f"model_{kind}.json")


def _retrain_selected(data: ExperimentData, result: SweepResult, config: ExperimentConfig):
    """Rebuild the winning cell's model deterministically from its seed."""
    row = result.selected
    embedding = EmbeddingSpec(n_lags=row.lags, n_leads=row.n_leads)
    ds = build_cell_dataset(data, embedding)
    cfg = replace(config.train, rng_seed=row.seed)
    model, trace = train(ds, (row.nodes, embedding), cfg)
    return model, trace, cfg


def cmd_sweep(config: ExperimentConfig, model_kind: str, jobs: int | None) -> int:
    out = _out_dir(config)
    manifest = art.Manifest(out)
    x, y, xn, yn = _load_series(out, manifest, CLEAN_X, CLEAN_Y, NOISY_X, NOISY_Y)
    data = ExperimentData(x, y, xn, yn)
    n_jobs = jobs if jobs is not None else (config.jobs or os.cpu_count() or 1)

    if model_kind == "st":
        grid = config.st_grid
    else:
        st_csv, st_json, _ = _sweep_files("st")
        manifest.verify(st_csv, st_json)
        summary = art.read_json(out / st_json)
        best_st = art.sweep_row_from_dict(summary["selected"])
        grid = config.resolve_mt_grid(best_st)

    print(f"[sweep:{model_kind}] {grid.n_cells} cells on {n_jobs} worker(s)")
    result = run_grid(data, grid, config.train, config.master_seed, jobs=n_jobs)
    model, trace, cfg = _retrain_selected(data, result, config)

    rows_csv, summary_json, model_json = _sweep_files(model_kind)
    art.write_sweep_rows_csv(out / rows_csv, result)
    art.write_json(
        out / summary_json,
        art.sweep_summary_to_dict(result, config.noise.trial.number, config.noise.fraction),
    )
    art.write_json(out / model_json, art.model_to_dict(model, cfg, trace))
    manifest.record(rows_csv, summary_json, model_json)
    sel = result.selected
    print(
        f"[sweep:{model_kind}] selected lags={sel.lags} nodes={sel.nodes} "
        f"leads={sel.n_leads} seed={sel.seed}: val MPO {sel.val_mpo_nmse:.3f}%, "
        f"test MPO {sel.test_mpo_nmse:.3f}% (noisy) / {sel.test_mpo_nmse_clean:.3f}% (clean)"
    )
    return 0


def _model_test_mpo(model, data: ExperimentData):
    """Free-run the model over its own test block; returns (t_range, values)."""
    ds = build_cell_dataset(data, model.embedding)
    lo, hi = ds.partition.test
    t_range = range(model.embedding.n_lags + lo, model.embedding.n_lags + hi)
    return t_range, predict_mpo(model, data.noisy_x, data.noisy_y, t_range)


def cmd_report(config: ExperimentConfig, input_dirs: list[str] | None) -> int:
    out = _out_dir(config)
    dirs = [Path(p) for p in (input_dirs or [out])]

    # one NMSE-vs-noise row per input directory (Fig. 5 style data)
    curve_rows = []
    for d in dirs:
        manifest = art.Manifest(d)
        st_csv, st_json, st_model_file = _sweep_files("st")
        mt_csv, mt_json, mt_model_file = _sweep_files("mt")
        names = (st_csv, st_json, st_model_file, mt_csv, mt_json, mt_model_file)
        missing = [n for n in names if not (d / n).exists()]
        if missing:
            raise DataError(f"{d}: missing sweep artifacts: {', '.join(missing)}")
        manifest.verify(*names)
        st = art.read_json(d / st_json)
        mt = art.read_json(d / mt_json)
        curve_rows.append(
            (
                st["trial"],
                st["noise_fraction"],
                art.sweep_row_from_dict(st["selected"]).test_mpo_nmse_clean,
                art.sweep_row_from_dict(mt["selected"]).test_mpo_nmse_clean,
            )
        )
    curve_rows.sort(key=lambda r: (r[0], r[1]))
    with open(out / "nmse_vs_noise.csv", "w", newline="") as f:
        f.write("trial,noise_fraction,st_nmse,mt_nmse\n")
        for trial, fraction, st_nmse, mt_nmse in curve_rows:
            f.write(
                f"{trial},{art.fmt_float(fraction)},{art.fmt_float(st_nmse)},"
                f"{art.fmt_float(mt_nmse)}\n"
            )

    # overlay and heatmaps from the primary directory
    primary = dirs[0]
    manifest = art.Manifest(primary)
    x, y, xn, yn = _load_series(primary, manifest, CLEAN_X, CLEAN_Y, NOISY_X, NOISY_Y)
    data = ExperimentData(x, y, xn, yn)
    st_model = art.model_from_dict(art.read_json(primary / "model_st.json"))
    mt_model = art.model_from_dict(art.read_json(primary / "model_mt.json"))

    st_range, st_mpo = _model_test_mpo(st_model, data)
    mt_range, mt_mpo = _model_test_mpo(mt_model, data)
    t_end = min(st_range.stop, mt_range.stop)
    if t_end - OVERLAY_ROWS < max(st_range.start, mt_range.start):
        raise DataError("test blocks are too short for a 250-point overlay")
    t_lo = t_end - OVERLAY_ROWS
    with open(out / "mpo_overlay.csv", "w", newline="") as f:
        f.write("time_s,truth_clean,truth_noisy,st_prediction,mt_prediction\n")
        for t in range(t_lo, t_end):
            f.write(
                f"{art.fmt_float(t * y.dt)},{art.fmt_float(y.values[t])},"
                f"{art.fmt_float(yn.values[t])},"
                f"{art.fmt_float(st_mpo.values[t - st_range.start])},"
                f"{art.fmt_float(mt_mpo.values[t - mt_range.start])}\n"
            )

    for kind in ("st", "mt"):
        rows_csv, summary_json, _ = _sweep_files(kind)
        rows = art.read_sweep_rows_csv(primary / rows_csv)
        summary = art.read_json(primary / summary_json)
        selected = art.sweep_row_from_dict(summary["selected"])
        result = SweepResult(
            rows=tuple(rows),
            selected=selected,
            grid=art.grid_from_dict(summary["grid"]),
            master_seed=summary["master_seed"],
            dataset_hash=summary["dataset_hash"],
            config_hash=summary["config_hash"],
        )
        nodes, restarts, grid = emit_heatmap(result, selected.lags, selected.n_leads)
        art.write_heatmap_csv(out / f"heatmap_{kind}.csv", nodes, restarts, grid)

    art.Manifest(out).record(
        "nmse_vs_noise.csv", "mpo_overlay.csv", "heatmap_st.csv", "heatmap_mt.csv"
    )
    print(f"[report] wrote nmse_vs_noise.csv ({len(curve_rows)} rows), mpo_overlay.csv, heatmaps")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="narx-lab",
        description="Duffing-oscillator NARX pipeline: simulate, corrupt, embed, "
        "train, sweep, evaluate, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "corrupt", "embed", "train", "evaluate", "sweep", "report"):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the experiment config JSON")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="PATH=VALUE",
            help="override a config field, e.g. --set noise.fraction=0.5",
        )
        if name == "sweep":
            p.add_argument("--model-kind", choices=("st", "mt"), default="st")
            p.add_argument("--jobs", type=int, default=None, help="worker pool width")
        if name == "report":
            p.add_argument(
                "--inputs",
                nargs="*",
                default=None,
                help="output directories of completed sweeps (default: this config's out_dir)",
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ExperimentConfig.load(Path(args.config), args.overrides)
        if args.command == "simulate":
            return cmd_simulate(config)
        if args.command == "corrupt":
            return cmd_corrupt(config)
        if args.command == "embed":
            return cmd_embed(config)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "evaluate":
            return cmd_evaluate(config)
        if args.command == "sweep":
            return cmd_sweep(config, args.model_kind, args.jobs)
        if args.command == "report":
            return cmd_report(config, args.inputs)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
