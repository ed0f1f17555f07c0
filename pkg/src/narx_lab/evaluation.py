"""One-step-ahead (OSA) and free-run (MPO) prediction plus NMSE scoring.

OSA feeds true lagged measurements into the network at every step; MPO
seeds the lag buffer with true values once and thereafter feeds the
model's own first output back as the displacement lags, while the
forcing stays exogenous. NMSE is reported in percent, normalized by the
population variance of the truth: 100 / (N * var) * sum((y - yhat)^2).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Partition, invert_scaler, scale_inputs
from .errors import ConfigError, DataError, ShapeError
from .network import MlpModel, forward
from .oscillator import TimeSeries

__all__ = [
    "EvalReport",
    "MpoResult",
    "nmse",
    "classify_fit",
    "predict_osa",
    "predict_mpo",
    "evaluate",
]

GOOD_THRESHOLD_PCT = 5.0
EXCELLENT_THRESHOLD_PCT = 1.0


def nmse(truth: np.ndarray, pred: np.ndarray) -> float:
    """Normalized mean square error in percent."""
    t = np.asarray(truth, dtype=np.float64).ravel()
    p = np.asarray(pred, dtype=np.float64).ravel()
    if t.size == 0 or t.size != p.size:
        raise ShapeError(f"need equal nonzero lengths, got {t.size} and {p.size}")
    var = float(np.var(t))
    if var == 0.0:
        raise DataError("NMSE is undefined for a constant truth series")
    return float(100.0 / (t.size * var) * np.sum((t - p) ** 2))


def classify_fit(mpo_nmse_pct: float) -> str:
    """excellent < 1% <= good < 5% <= poor; non-finite counts as poor."""
    if not math.isfinite(mpo_nmse_pct):
        return "poor"
    if mpo_nmse_pct < EXCELLENT_THRESHOLD_PCT:
        return "excellent"
    if mpo_nmse_pct < GOOD_THRESHOLD_PCT:
        return "good"
    return "poor"


@dataclass(frozen=True)
class EvalReport:
    osa_nmse: float
    mpo_nmse: float
    reference: str  # "noisy-targets" or "clean-targets"
    partition: str
    fit_class: str
    predicted_series: np.ndarray = field(repr=False)  # MPO predictions
    diverged: bool = False


@dataclass(frozen=True)
class MpoResult:
    values: np.ndarray
    diverged: bool = False


def _check_model_ready(model: MlpModel) -> None:
    if model.embedding is None or model.scaler is None:
        raise ConfigError("model carries no embedding/scaler; was it trained?")


def _check_range(t_range: range, n_lags: int, n_samples: int) -> None:
    if t_range.step != 1:
        raise ConfigError("prediction range must have step 1")
    if len(t_range) == 0:
        return
    if t_range.start < n_lags or t_range.stop > n_samples:
        raise ConfigError(
            f"range [{t_range.start}, {t_range.stop}) must lie within "
            f"[{n_lags}, {n_samples}] to leave room for {n_lags} lags"
        )


def _input_row(y_hist: np.ndarray, x: np.ndarray, t: int, offset: int, m: int) -> np.ndarray:
    """Raw input row [y_{t-1}..y_{t-m}, x_t..x_{t-m+1}]; y_hist is indexed
    at t - offset."""
    row = np.empty(2 * m)
    row[:m] = y_hist[t - offset - m : t - offset][::-1]
    row[m:] = x[t - m + 1 : t + 1][::-1]
    return row


def _predict_row(model: MlpModel, row: np.ndarray) -> float:
    """First-output prediction for one raw input row, in original units."""
    out = forward(model, scale_inputs(row, model.scaler))
    return float(invert_scaler(out[0], model.scaler, channel=0))


def predict_osa(model: MlpModel, x: TimeSeries, y: TimeSeries, t_range: range) -> np.ndarray:
    """One-step-ahead predictions of y over t_range from true lagged values.

    Rows are evaluated one at a time through the same code path as the
    free-run predictor, so the two agree bit-for-bit on a shared step.
    """
    _check_model_ready(model)
    m = model.embedding.n_lags
    _check_range(t_range, m, len(y))
    preds = np.empty(len(t_range))
    for i, t in enumerate(t_range):
        preds[i] = _predict_row(model, _input_row(y.values, x.values, t, 0, m))
    return preds


def predict_mpo(model: MlpModel, x: TimeSeries, y: TimeSeries, t_range: range) -> MpoResult:
    """Free-run predictions over t_range.

    The lag buffer starts from the true y values immediately before the
    range and is then fed from the model's first output only; the forcing
    is always taken from x. A non-finite prediction stops the run; the
    remaining values are recorded as NaN and the result is flagged.
    """
    _check_model_ready(model)
    m = model.embedding.n_lags
    _check_range(t_range, m, len(y))
    n_steps = len(t_range)
    if n_steps == 0:
        return MpoResult(values=np.empty(0))

    start = t_range.start
    hist = np.empty(m + n_steps)
    hist[:m] = y.values[start - m : start]
    offset = start - m  # hist[i] holds y at time offset + i
    for i, t in enumerate(range(start, t_range.stop)):
        y_hat = _predict_row(model, _input_row(hist, x.values, t, offset, m))
        if not math.isfinite(y_hat):
            hist[m + i :] = np.nan
            return MpoResult(values=hist[m:].copy(), diverged=True)
        hist[m + i] = y_hat
    return MpoResult(values=hist[m:].copy())


def evaluate(
    model: MlpModel,
    clean: tuple[TimeSeries, TimeSeries],
    noisy: tuple[TimeSeries, TimeSeries],
    partition: Partition,
    block: str = "test",
) -> tuple[EvalReport, EvalReport]:
    """Score the model on one partition block against both references.

    Predictions use the noisy (operationally available) series for lag
    initialization and forcing. Returns (noisy-reference report,
    clean-reference report); the two share the same predictions.
    """
    _check_model_ready(model)
    clean_x, clean_y = clean
    noisy_x, noisy_y = noisy
    if len(clean_y) != len(noisy_y) or len(clean_x) != len(noisy_x):
        raise ConfigError("clean and noisy series must have equal lengths")
    m = model.embedding.n_lags
    lo, hi = partition.block(block)
    t_range = range(m + lo, m + hi)  # row r of the windowed dataset sits at t = n_lags + r

    osa = predict_osa(model, noisy_x, noisy_y, t_range)
    mpo = predict_mpo(model, noisy_x, noisy_y, t_range)

    reports = []
    for reference, truth_y in (("noisy-targets", noisy_y), ("clean-targets", clean_y)):
        truth = truth_y.values[t_range.start : t_range.stop]
        osa_nmse = nmse(truth, osa)
        mpo_nmse = math.inf if mpo.diverged else nmse(truth, mpo.values)
        reports.append(
            EvalReport(
                osa_nmse=osa_nmse,
                mpo_nmse=mpo_nmse,
                reference=reference,
                partition=block,
                fit_class=classify_fit(mpo_nmse),
                predicted_series=mpo.values,
                diverged=mpo.diverged,
            )
        )
    return reports[0], reports[1]
