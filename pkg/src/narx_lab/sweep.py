"""Hyperparameter grid search over (lags, nodes, leads, restart) cells.

Every cell trains one network from a fresh seeded initialization and is
scored by OSA/MPO NMSE on the validation and test blocks. The winner is
the non-diverged cell with the lowest validation MPO NMSE. Cell seeds
are derived from (master seed, cell coordinates), so results never
depend on execution order and adding cells cannot perturb existing ones.
"""

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .dataset import EmbeddingSpec, NarxDataset, apply_scaler, build_windows, fit_scaler, split_2_1_1
from .errors import ConfigError, DataError, DivergenceError
from .evaluation import evaluate
from .network import TrainConfig, train
from .oscillator import TimeSeries

__all__ = [
    "GridSpec",
    "SweepRow",
    "SweepResult",
    "ExperimentData",
    "run_grid",
    "select_best",
    "mt_grid_from_st",
    "fine_grid_from_coarse",
    "emit_heatmap",
    "st_grid_table1",
    "mt_nodes_table2",
    "smoke_st_grid",
    "smoke_mt_grid",
    "reduced150_st_grid",
    "reduced150_mt_grid",
    "cell_seed",
]

# ST coarse search ranges per trial: (lags lo-hi, nodes lo-hi), 10 restarts.
_TABLE1_ST = {
    1: ((3, 15), (2, 30)),
    2: ((3, 10), (2, 20)),
    3: ((3, 20), (2, 30)),
}
_TABLE1_RESTARTS = 10
_TABLE1_NODES_150_MAX = 50  # 150% noise case extends trial 1 to 50 nodes

# MT node ranges by (trial, noise fraction); trials 1 and 3 share a column.
_TABLE2_MT_NODES = {
    (1, 0.01): (10, 50),
    (2, 0.01): (2, 15),
    (3, 0.01): (10, 50),
    (1, 0.1): (25, 50),
    (2, 0.1): (2, 15),
    (3, 0.1): (25, 50),
    (1, 0.3): (25, 60),
    (2, 0.3): (2, 20),
    (3, 0.3): (25, 60),
    (1, 0.5): (25, 60),
    (2, 0.5): (2, 20),
    (3, 0.5): (25, 60),
    (1, 1.0): (25, 70),
    (2, 1.0): (10, 30),
    (3, 1.0): (25, 70),
    (1, 1.5): (40, 80),
}

# fine-stage restart counts per trial for the lead-augmented search
_MT_FINE_RESTARTS = {1: 100, 2: 200, 3: 10}


@dataclass(frozen=True)
class GridSpec:
    """Search grid; leads is empty for a single-output (ST) sweep."""

    lags: tuple[int, ...]
    nodes: tuple[int, ...]
    leads: tuple[int, ...] = ()
    restarts: int = 10
    stage: str = "coarse"

    def __post_init__(self):
        object.__setattr__(self, "lags", tuple(int(v) for v in self.lags))
        object.__setattr__(self, "nodes", tuple(int(v) for v in self.nodes))
        object.__setattr__(self, "leads", tuple(int(v) for v in self.leads))
        if not self.lags or not self.nodes:
            raise ConfigError("lags and nodes sets must be non-empty")
        if self.restarts < 1:
            raise ConfigError(f"restarts must be >= 1, got {self.restarts}")
        if self.stage not in ("coarse", "fine"):
            raise ConfigError(f"stage must be 'coarse' or 'fine', got {self.stage!r}")

    @property
    def n_cells(self) -> int:
        return len(self.lags) * len(self.nodes) * max(1, len(self.leads)) * self.restarts


@dataclass(frozen=True)
class SweepRow:
    lags: int
    nodes: int
    n_leads: int
    restart: int
    seed: int
    val_osa_nmse: float
    val_mpo_nmse: float
    test_osa_nmse: float
    test_mpo_nmse: float
    test_osa_nmse_clean: float
    test_mpo_nmse_clean: float
    best_epoch: int
    diverged: bool


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    selected: SweepRow
    grid: GridSpec
    master_seed: int
    dataset_hash: str
    config_hash: str


@dataclass(frozen=True)
class ExperimentData:
    """Clean and corrupted series feeding one sweep."""

    clean_x: TimeSeries
    clean_y: TimeSeries
    noisy_x: TimeSeries
    noisy_y: TimeSeries

    def __post_init__(self):
        lengths = {len(self.clean_x), len(self.clean_y), len(self.noisy_x), len(self.noisy_y)}
        if len(lengths) != 1:
            raise ConfigError("all series must have equal length")

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for ts in (self.clean_x, self.clean_y, self.noisy_x, self.noisy_y):
            h.update(np.float64(ts.dt).tobytes())
            h.update(np.ascontiguousarray(ts.values).tobytes())
        return h.hexdigest()


def cell_seed(master_seed: int, lags: int, nodes: int, n_leads: int, restart: int) -> int:
    """Stable per-cell seed; adding cells never perturbs existing ones."""
    seq = np.random.SeedSequence([master_seed, lags, nodes, n_leads, restart])
    return int(seq.generate_state(1)[0])


def build_cell_dataset(data: ExperimentData, embedding: EmbeddingSpec) -> NarxDataset:
    """Window the noisy series, split 2:1:1, standardize on training rows."""
    ds = split_2_1_1(build_windows(data.noisy_x, data.noisy_y, embedding))
    return apply_scaler(ds, fit_scaler(ds))


def _run_cell(
    data: ExperimentData,
    train_config: TrainConfig,
    master_seed: int,
    lags: int,
    nodes: int,
    n_leads: int,
    restart: int,
) -> SweepRow:
    seed = cell_seed(master_seed, lags, nodes, n_leads, restart)
    embedding = EmbeddingSpec(n_lags=lags, n_leads=n_leads)
    ds = build_cell_dataset(data, embedding)
    cfg = replace(train_config, rng_seed=seed)

    # single-threaded BLAS keeps serial and pooled runs bit-identical
    with threadpool_limits(limits=1):
        try:
            model, trace = train(ds, (nodes, embedding), cfg)
        except DivergenceError:
            inf = float("inf")
            return SweepRow(lags, nodes, n_leads, restart, seed, inf, inf, inf, inf, inf, inf, 0, True)
        clean = (data.clean_x, data.clean_y)
        noisy = (data.noisy_x, data.noisy_y)
        val_noisy, _ = evaluate(model, clean, noisy, ds.partition, block="val")
        test_noisy, test_clean = evaluate(model, clean, noisy, ds.partition, block="test")

    diverged = val_noisy.diverged or test_noisy.diverged
    return SweepRow(
        lags=lags,
        nodes=nodes,
        n_leads=n_leads,
        restart=restart,
        seed=seed,
        val_osa_nmse=val_noisy.osa_nmse,
        val_mpo_nmse=val_noisy.mpo_nmse,
        test_osa_nmse=test_noisy.osa_nmse,
        test_mpo_nmse=test_noisy.mpo_nmse,
        test_osa_nmse_clean=test_clean.osa_nmse,
        test_mpo_nmse_clean=test_clean.mpo_nmse,
        best_epoch=trace.best_epoch,
        diverged=diverged,
    )


_POOL_CONTEXT: dict = {}


def _pool_init(data: ExperimentData, train_config: TrainConfig, master_seed: int) -> None:
    _POOL_CONTEXT["args"] = (data, train_config, master_seed)


def _pool_run(cell: tuple[int, int, int, int]) -> SweepRow:
    data, train_config, master_seed = _POOL_CONTEXT["args"]
    return _run_cell(data, train_config, master_seed, *cell)


def _grid_cells(grid: GridSpec) -> list[tuple[int, int, int, int]]:
    leads = grid.leads if grid.leads else (0,)
    return [
        (lags, nodes, lead, restart)
        for lags in sorted(grid.lags)
        for nodes in sorted(grid.nodes)
        for lead in sorted(leads)
        for restart in range(grid.restarts)
    ]


def run_grid(
    data: ExperimentData,
    grid: GridSpec,
    train_config: TrainConfig,
    master_seed: int,
    jobs: int = 1,
) -> SweepResult:
    """Train and score every cell of the grid; see module docstring."""
    cells = _grid_cells(grid)
    if jobs is None or jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}")
    if jobs == 1 or len(cells) == 1:
        rows = [_run_cell(data, train_config, master_seed, *cell) for cell in cells]
    else:
        with ProcessPoolExecutor(
            max_workers=min(jobs, len(cells)),
            initializer=_pool_init,
            initargs=(data, train_config, master_seed),
        ) as pool:
            rows = list(pool.map(_pool_run, cells, chunksize=1))

    rows.sort(key=lambda r: (r.lags, r.nodes, r.n_leads, r.restart))
    selected = select_best(rows)
    config_blob = json.dumps(
        {
            "grid": grid.__dict__,
            "train": {k: v for k, v in train_config.__dict__.items()},
            "master_seed": master_seed,
        },
        sort_keys=True,
        default=str,
    )
    return SweepResult(
        rows=tuple(rows),
        selected=selected,
        grid=grid,
        master_seed=master_seed,
        dataset_hash=data.fingerprint(),
        config_hash=hashlib.sha256(config_blob.encode()).hexdigest(),
    )


def select_best(rows) -> SweepRow:
    """Lowest validation MPO NMSE among non-diverged rows; deterministic
    tie-break on (fewer nodes, fewer lags, smaller seed)."""
    live = [r for r in rows if not r.diverged]
    if not live:
        raise DivergenceError("every cell of the sweep diverged")
    return min(live, key=lambda r: (r.val_mpo_nmse, r.nodes, r.lags, r.n_leads, r.seed))


def st_grid_table1(trial: int, noise_fraction: float) -> GridSpec:
    """Coarse single-output search ranges for the given trial."""
    if trial not in _TABLE1_ST:
        raise ConfigError(f"trial must be 1, 2 or 3, got {trial}")
    (lag_lo, lag_hi), (node_lo, node_hi) = _TABLE1_ST[trial]
    if trial == 1 and float(noise_fraction) == 1.5:
        node_hi = _TABLE1_NODES_150_MAX
    return GridSpec(
        lags=tuple(range(lag_lo, lag_hi + 1)),
        nodes=tuple(range(node_lo, node_hi + 1)),
        leads=(),
        restarts=_TABLE1_RESTARTS,
        stage="coarse",
    )


def mt_nodes_table2(trial: int, noise_fraction: float) -> tuple[int, ...]:
    """Lead-augmented node range for (trial, noise level)."""
    key = (trial, float(noise_fraction))
    if key not in _TABLE2_MT_NODES:
        raise ConfigError(
            f"no multi-output node range for trial {trial} at noise fraction "
            f"{noise_fraction} (not assessed)"
        )
    lo, hi = _TABLE2_MT_NODES[key]
    return tuple(range(lo, hi + 1))


def mt_grid_from_st(best_st: SweepRow, noise_fraction: float, trial: int) -> GridSpec:
    """Lead-augmented grid derived from the winning single-output cell:
    lags fixed to the winner's, leads = {m, m+1, m+2, m+3}, nodes from the
    per-noise-level table, fine-stage restart count per trial."""
    m = best_st.lags
    if trial not in _MT_FINE_RESTARTS:
        raise ConfigError(f"trial must be 1, 2 or 3, got {trial}")
    return GridSpec(
        lags=(m,),
        nodes=mt_nodes_table2(trial, noise_fraction),
        leads=(m, m + 1, m + 2, m + 3),
        restarts=_MT_FINE_RESTARTS[trial],
        stage="fine",
    )


def fine_grid_from_coarse(best: SweepRow, coarse: GridSpec, restarts: int | None = None) -> GridSpec:
    """Narrow the grid around the coarse winner: nodes +-2 and lags +-1,
    clamped to the coarse ranges; leads carry over unchanged."""
    lag_lo, lag_hi = min(coarse.lags), max(coarse.lags)
    node_lo, node_hi = min(coarse.nodes), max(coarse.nodes)
    lags = tuple(
        v for v in range(best.lags - 1, best.lags + 2) if lag_lo <= v <= lag_hi
    )
    nodes = tuple(
        v for v in range(best.nodes - 2, best.nodes + 3) if node_lo <= v <= node_hi
    )
    return GridSpec(
        lags=lags,
        nodes=nodes,
        leads=coarse.leads,
        restarts=coarse.restarts if restarts is None else restarts,
        stage="fine",
    )


def emit_heatmap(
    result: SweepResult, lags: int, n_leads: int
) -> tuple[list[int], list[int], list[list[float | None]]]:
    """Test MPO NMSE grid at fixed (lags, leads): rows are node counts,
    columns are restart indices; None marks a diverged cell."""
    matching = [r for r in result.rows if r.lags == lags and r.n_leads == n_leads]
    if not matching:
        raise DataError(f"no sweep rows match lags={lags}, n_leads={n_leads}")
    nodes = sorted({r.nodes for r in matching})
    restarts = sorted({r.restart for r in matching})
    lookup = {(r.nodes, r.restart): r for r in matching}
    grid: list[list[float | None]] = []
    for n in nodes:
        row: list[float | None] = []
        for s in restarts:
            r = lookup.get((n, s))
            if r is None or r.diverged:
                row.append(None)
            else:
                row.append(r.test_mpo_nmse)
        grid.append(row)
    return nodes, restarts, grid


def smoke_st_grid() -> GridSpec:
    """Desk-scale single-output grid for fast end-to-end runs."""
    return GridSpec(lags=(5, 10), nodes=(8, 16), leads=(), restarts=3, stage="coarse")


def smoke_mt_grid(st_lags: int) -> GridSpec:
    """Desk-scale lead-augmented grid; two leads keep the head trainable
    at smoke-sized hidden layers."""
    return GridSpec(lags=(st_lags,), nodes=(8, 16), leads=(2,), restarts=3, stage="coarse")


def reduced150_st_grid() -> GridSpec:
    """Reduced 150%-noise single-output grid: nodes 10..30 step 5."""
    return GridSpec(lags=(5, 10, 15), nodes=(10, 15, 20, 25, 30), leads=(), restarts=10)


def reduced150_mt_grid(st_lags: int) -> GridSpec:
    """Reduced 150%-noise lead-augmented grid: nodes 40..80 step 10."""
    return GridSpec(
        lags=(st_lags,),
        nodes=(40, 50, 60, 70, 80),
        leads=(st_lags, st_lags + 1, st_lags + 2, st_lags + 3),
        restarts=10,
        stage="fine",
    )
