"""CSV/JSON artifact persistence and the output-directory manifest.

Numeric CSV fields are formatted with 17 significant digits so reruns of
the same config are byte-identical and parsing recovers the exact float.
JSON files are written with sorted keys and no timestamps for the same
reason. The manifest records a sha256 per artifact; consumers verify
hashes before reading so stale or tampered inputs are rejected.
"""

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .dataset import EmbeddingSpec, NarxDataset, Partition, ScalerStats
from .errors import DataError
from .evaluation import EvalReport
from .network import MlpModel, TrainConfig, TrainTrace
from .oscillator import TimeSeries
from .sweep import GridSpec, SweepResult, SweepRow

__all__ = [
    "fmt_float",
    "write_series_csv",
    "read_series_csv",
    "write_json",
    "read_json",
    "sha256_file",
    "Manifest",
    "model_to_dict",
    "model_from_dict",
    "write_dataset",
    "read_dataset",
    "trace_to_dict",
    "eval_report_to_dict",
    "write_prediction_csv",
    "write_sweep_rows_csv",
    "read_sweep_rows_csv",
    "sweep_summary_to_dict",
    "sweep_row_from_dict",
    "write_heatmap_csv",
]

DIVERGED_SENTINEL = "diverged"


def fmt_float(v: float) -> str:
    return format(float(v), ".17g")


def write_series_csv(path: Path, ts: TimeSeries) -> None:
    with open(path, "w", newline="") as f:
        f.write("time_s,value\n")
        for i, v in enumerate(ts.values):
            f.write(f"{fmt_float(i * ts.dt)},{fmt_float(v)}\n")


def read_series_csv(path: Path) -> TimeSeries:
    times: list[float] = []
    values: list[float] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["time_s", "value"]:
            raise DataError(f"{path}: expected header 'time_s,value', got {header}")
        for row in reader:
            times.append(float(row[0]))
            values.append(float(row[1]))
    if len(values) < 2:
        raise DataError(f"{path}: need at least 2 samples to recover dt")
    return TimeSeries(dt=times[1] - times[0], values=np.array(values))


def write_json(path: Path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: Path):
    with open(path) as f:
        return json.load(f)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Per-directory ledger of artifact hashes (manifest.json)."""

    FILENAME = "manifest.json"

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self.path = self.directory / self.FILENAME
        self.entries: dict[str, str] = {}
        if self.path.exists():
            self.entries = dict(read_json(self.path))

    def record(self, *names: str) -> None:
        for name in names:
            self.entries[name] = sha256_file(self.directory / name)
        write_json(self.path, self.entries)

    def verify(self, *names: str) -> None:
        """Raise DataError if any artifact is missing, unrecorded, or stale."""
        for name in names:
            target = self.directory / name
            if not target.exists():
                raise DataError(f"missing artifact: {target}")
            recorded = self.entries.get(name)
            if recorded is None:
                raise DataError(f"artifact {name} has no manifest entry; rerun its producer")
            actual = sha256_file(target)
            if actual != recorded:
                raise DataError(
                    f"stale artifact: {name} hash {actual[:12]}... does not match "
                    f"manifest {recorded[:12]}..."
                )


def _scaler_to_dict(scaler: ScalerStats) -> dict:
    return {
        "input_mean": scaler.input_mean.tolist(),
        "input_std": scaler.input_std.tolist(),
        "target_mean": scaler.target_mean.tolist(),
        "target_std": scaler.target_std.tolist(),
    }


def _scaler_from_dict(d: dict) -> ScalerStats:
    return ScalerStats(
        input_mean=np.array(d["input_mean"]),
        input_std=np.array(d["input_std"]),
        target_mean=np.array(d["target_mean"]),
        target_std=np.array(d["target_std"]),
    )


def trace_to_dict(trace: TrainTrace) -> dict:
    return {
        "best_epoch": trace.best_epoch,
        "stopped_epoch": trace.stopped_epoch,
        "best_val_loss": trace.val_loss[trace.best_epoch - 1],
        "final_train_loss": trace.train_loss[-1],
        "train_loss": list(trace.train_loss),
        "val_loss": list(trace.val_loss),
    }


def model_to_dict(model: MlpModel, config: TrainConfig | None = None, trace: TrainTrace | None = None) -> dict:
    doc = {
        "architecture": {
            "n_inputs": model.n_inputs,
            "n_hidden": model.n_hidden,
            "n_outputs": model.n_outputs,
        },
        "embedding": None
        if model.embedding is None
        else {"n_lags": model.embedding.n_lags, "n_leads": model.embedding.n_leads},
        "scaler": None if model.scaler is None else _scaler_to_dict(model.scaler),
        "weights": {
            "hidden_weights": model.hidden_weights.tolist(),
            "hidden_bias": model.hidden_bias.tolist(),
            "output_weights": model.output_weights.tolist(),
            "output_bias": model.output_bias.tolist(),
        },
    }
    if config is not None:
        doc["train_config"] = train_config_to_dict(config)
    if trace is not None:
        doc["trace_summary"] = {
            "best_epoch": trace.best_epoch,
            "stopped_epoch": trace.stopped_epoch,
            "best_val_loss": trace.val_loss[trace.best_epoch - 1],
        }
    return doc


def model_from_dict(doc: dict) -> MlpModel:
    w = doc["weights"]
    emb = doc.get("embedding")
    scaler = doc.get("scaler")
    return MlpModel(
        hidden_weights=np.array(w["hidden_weights"]),
        hidden_bias=np.array(w["hidden_bias"]),
        output_weights=np.array(w["output_weights"]),
        output_bias=np.array(w["output_bias"]),
        embedding=None if emb is None else EmbeddingSpec(emb["n_lags"], emb["n_leads"]),
        scaler=None if scaler is None else _scaler_from_dict(scaler),
    )


def train_config_to_dict(config: TrainConfig) -> dict:
    return {
        "learning_rate": config.learning_rate,
        "adam_beta1": config.adam_beta1,
        "adam_beta2": config.adam_beta2,
        "adam_epsilon": config.adam_epsilon,
        "max_epochs": config.max_epochs,
        "patience": config.patience,
        "batch_size": config.batch_size,
        "rng_seed": config.rng_seed,
        "loss_weights": None if config.loss_weights is None else list(config.loss_weights),
    }


def train_config_from_dict(d: dict) -> TrainConfig:
    weights = d.get("loss_weights")
    return TrainConfig(
        learning_rate=d.get("learning_rate", 1e-3),
        adam_beta1=d.get("adam_beta1", 0.9),
        adam_beta2=d.get("adam_beta2", 0.999),
        adam_epsilon=d.get("adam_epsilon", 1e-8),
        max_epochs=d.get("max_epochs", 5000),
        patience=d.get("patience", 100),
        batch_size=d.get("batch_size"),
        rng_seed=d.get("rng_seed", 0),
        loss_weights=None if weights is None else tuple(weights),
    )


def write_dataset(csv_path: Path, json_path: Path, ds: NarxDataset) -> None:
    """Rows as CSV plus a JSON sidecar with embedding/partition/scaler."""
    m = ds.embedding.n_lags
    n_out = ds.embedding.n_outputs
    header = (
        ["row_time"]
        + [f"u{j}" for j in range(2 * m)]
        + [f"t{j}" for j in range(n_out)]
    )
    with open(csv_path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for i in range(ds.n_rows):
            fields = [str(int(ds.row_times[i]))]
            fields += [fmt_float(v) for v in ds.inputs[i]]
            fields += [fmt_float(v) for v in ds.targets[i]]
            f.write(",".join(fields) + "\n")
    sidecar = {
        "embedding": {"n_lags": ds.embedding.n_lags, "n_leads": ds.embedding.n_leads},
        "partition": None
        if ds.partition is None
        else {
            "train": list(ds.partition.train),
            "val": list(ds.partition.val),
            "test": list(ds.partition.test),
        },
        "scaler": None if ds.scaler is None else _scaler_to_dict(ds.scaler),
    }
    write_json(json_path, sidecar)


def read_dataset(csv_path: Path, json_path: Path) -> NarxDataset:
    sidecar = read_json(json_path)
    emb = EmbeddingSpec(sidecar["embedding"]["n_lags"], sidecar["embedding"]["n_leads"])
    part = sidecar.get("partition")
    partition = (
        None
        if part is None
        else Partition(tuple(part["train"]), tuple(part["val"]), tuple(part["test"]))
    )
    scaler = None if sidecar.get("scaler") is None else _scaler_from_dict(sidecar["scaler"])

    n_in, n_out = emb.n_inputs, emb.n_outputs
    row_times, inputs, targets = [], [], []
    with open(csv_path, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        for row in reader:
            row_times.append(int(row[0]))
            inputs.append([float(v) for v in row[1 : 1 + n_in]])
            targets.append([float(v) for v in row[1 + n_in : 1 + n_in + n_out]])
    return NarxDataset(
        inputs=np.array(inputs),
        targets=np.array(targets),
        row_times=np.array(row_times),
        embedding=emb,
        partition=partition,
        scaler=scaler,
    )


def eval_report_to_dict(report: EvalReport) -> dict:
    return {
        "osa_nmse": report.osa_nmse,
        "mpo_nmse": DIVERGED_SENTINEL if report.diverged else report.mpo_nmse,
        "reference": report.reference,
        "partition": report.partition,
        "fit_class": report.fit_class,
        "diverged": report.diverged,
    }


def write_prediction_csv(
    path: Path,
    dt: float,
    t_start: int,
    truth_clean: np.ndarray,
    truth_noisy: np.ndarray,
    prediction: np.ndarray,
) -> None:
    with open(path, "w", newline="") as f:
        f.write("time_s,truth_clean,truth_noisy,prediction\n")
        for i in range(len(prediction)):
            t = (t_start + i) * dt
            f.write(
                f"{fmt_float(t)},{fmt_float(truth_clean[i])},"
                f"{fmt_float(truth_noisy[i])},{fmt_float(prediction[i])}\n"
            )


_SWEEP_COLUMNS = [
    "lags",
    "nodes",
    "n_leads",
    "restart",
    "seed",
    "val_osa_nmse",
    "val_mpo_nmse",
    "test_osa_nmse",
    "test_mpo_nmse",
    "test_osa_nmse_clean",
    "test_mpo_nmse_clean",
    "best_epoch",
    "diverged",
]


def write_sweep_rows_csv(path: Path, result: SweepResult) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(_SWEEP_COLUMNS) + "\n")
        for r in result.rows:
            fields = [
                str(r.lags),
                str(r.nodes),
                str(r.n_leads),
                str(r.restart),
                str(r.seed),
                fmt_float(r.val_osa_nmse),
                fmt_float(r.val_mpo_nmse),
                fmt_float(r.test_osa_nmse),
                fmt_float(r.test_mpo_nmse),
                fmt_float(r.test_osa_nmse_clean),
                fmt_float(r.test_mpo_nmse_clean),
                str(r.best_epoch),
                str(int(r.diverged)),
            ]
            f.write(",".join(fields) + "\n")


def read_sweep_rows_csv(path: Path) -> list[SweepRow]:
    rows: list[SweepRow] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != _SWEEP_COLUMNS:
            raise DataError(f"{path}: unexpected sweep CSV header")
        for row in reader:
            rows.append(
                SweepRow(
                    lags=int(row[0]),
                    nodes=int(row[1]),
                    n_leads=int(row[2]),
                    restart=int(row[3]),
                    seed=int(row[4]),
                    val_osa_nmse=float(row[5]),
                    val_mpo_nmse=float(row[6]),
                    test_osa_nmse=float(row[7]),
                    test_mpo_nmse=float(row[8]),
                    test_osa_nmse_clean=float(row[9]),
                    test_mpo_nmse_clean=float(row[10]),
                    best_epoch=int(row[11]),
                    diverged=bool(int(row[12])),
                )
            )
    return rows


def sweep_row_to_dict(row: SweepRow) -> dict:
    d = {}
    for name in _SWEEP_COLUMNS:
        v = getattr(row, name)
        if isinstance(v, float) and not math.isfinite(v):
            v = DIVERGED_SENTINEL
        d[name] = v
    return d


def sweep_row_from_dict(d: dict) -> SweepRow:
    def num(v):
        return math.inf if v == DIVERGED_SENTINEL else float(v)

    return SweepRow(
        lags=int(d["lags"]),
        nodes=int(d["nodes"]),
        n_leads=int(d["n_leads"]),
        restart=int(d["restart"]),
        seed=int(d["seed"]),
        val_osa_nmse=num(d["val_osa_nmse"]),
        val_mpo_nmse=num(d["val_mpo_nmse"]),
        test_osa_nmse=num(d["test_osa_nmse"]),
        test_mpo_nmse=num(d["test_mpo_nmse"]),
        test_osa_nmse_clean=num(d["test_osa_nmse_clean"]),
        test_mpo_nmse_clean=num(d["test_mpo_nmse_clean"]),
        best_epoch=int(d["best_epoch"]),
        diverged=bool(d["diverged"]),
    )


def sweep_summary_to_dict(result: SweepResult, trial: int, fraction: float) -> dict:
    return {
        "trial": trial,
        "noise_fraction": fraction,
        "grid": {
            "lags": list(result.grid.lags),
            "nodes": list(result.grid.nodes),
            "leads": list(result.grid.leads),
            "restarts": result.grid.restarts,
            "stage": result.grid.stage,
        },
        "master_seed": result.master_seed,
        "n_rows": len(result.rows),
        "n_diverged": sum(1 for r in result.rows if r.diverged),
        "selected": sweep_row_to_dict(result.selected),
        "dataset_hash": result.dataset_hash,
        "config_hash": result.config_hash,
    }


def grid_from_dict(d: dict) -> GridSpec:
    return GridSpec(
        lags=tuple(d["lags"]),
        nodes=tuple(d["nodes"]),
        leads=tuple(d.get("leads", ())),
        restarts=int(d.get("restarts", 10)),
        stage=d.get("stage", "coarse"),
    )


def write_heatmap_csv(
    path: Path, nodes: list[int], restarts: list[int], grid: list[list[float | None]]
) -> None:
    """Rectangular nodes x restart-seed grid of test MPO NMSE values."""
    with open(path, "w", newline="") as f:
        f.write("nodes," + ",".join(str(s) for s in restarts) + "\n")
        for n, row in zip(nodes, grid):
            cells = [DIVERGED_SENTINEL if v is None else fmt_float(v) for v in row]
            f.write(f"{n}," + ",".join(cells) + "\n")
