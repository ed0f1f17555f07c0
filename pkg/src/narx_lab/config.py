"""Experiment configuration: one JSON document drives the whole pipeline.

The config is fully self-describing; rerunning the same file reproduces
every artifact byte-for-byte. Scalar fields can be overridden from the
command line with --set path.to.field=value.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from .artifacts import train_config_from_dict, train_config_to_dict
from .dataset import EmbeddingSpec
from .errors import ConfigError
from .network import TrainConfig
from .noise import NoiseSpec, NoiseTrial
from .oscillator import ExcitationSpec, OscillatorParams, SimulationSpec
from .sweep import (
    GridSpec,
    SweepRow,
    mt_grid_from_st,
    reduced150_mt_grid,
    reduced150_st_grid,
    smoke_mt_grid,
    smoke_st_grid,
)

__all__ = ["ExperimentConfig", "smoke_config", "reduced150_config", "apply_override"]


@dataclass
class ExperimentConfig:
    oscillator: OscillatorParams
    excitation: ExcitationSpec
    simulation: SimulationSpec
    noise: NoiseSpec
    embedding: EmbeddingSpec
    n_hidden: int
    train: TrainConfig
    st_grid: GridSpec
    mt_grid: dict = field(default_factory=lambda: {"kind": "table2"})
    out_dir: str = "out"
    master_seed: int = 0
    jobs: int | None = None

    def __post_init__(self):
        if self.n_hidden < 1:
            raise ConfigError(f"n_hidden must be >= 1, got {self.n_hidden}")
        if self.master_seed < 0:
            raise ConfigError(f"master_seed must be >= 0, got {self.master_seed}")
        kind = self.mt_grid.get("kind")
        if kind not in ("table2", "smoke", "reduced150", "explicit"):
            raise ConfigError(f"mt_grid.kind must be one of table2/smoke/reduced150/explicit, got {kind!r}")

    def resolve_mt_grid(self, best_st: SweepRow) -> GridSpec:
        """Concrete lead-augmented grid once the ST winner is known."""
        kind = self.mt_grid["kind"]
        if kind == "table2":
            return mt_grid_from_st(best_st, self.noise.fraction, self.noise.trial.number)
        if kind == "smoke":
            return smoke_mt_grid(best_st.lags)
        if kind == "reduced150":
            return reduced150_mt_grid(best_st.lags)
        m = best_st.lags
        offsets = self.mt_grid.get("lead_offsets", [0, 1, 2, 3])
        return GridSpec(
            lags=(m,),
            nodes=tuple(self.mt_grid["nodes"]),
            leads=tuple(m + int(o) for o in offsets),
            restarts=int(self.mt_grid.get("restarts", 10)),
            stage=self.mt_grid.get("stage", "fine"),
        )

    def to_dict(self) -> dict:
        return {
            "oscillator": {
                "mass": self.oscillator.mass,
                "damping": self.oscillator.damping,
                "stiffness": self.oscillator.stiffness,
                "cubic_stiffness": self.oscillator.cubic_stiffness,
            },
            "excitation": {
                "noise_scale": self.excitation.noise_scale,
                "cutoff_hz": self.excitation.cutoff_hz,
                "filter_order": self.excitation.filter_order,
                "sample_rate_hz": self.excitation.sample_rate_hz,
                "total_samples": self.excitation.total_samples,
                "rng_seed": self.excitation.rng_seed,
            },
            "simulation": {
                "discard_samples": self.simulation.discard_samples,
                "keep_samples": self.simulation.keep_samples,
                "initial_displacement": self.simulation.initial_displacement,
                "initial_velocity": self.simulation.initial_velocity,
            },
            "noise": {
                "trial": self.noise.trial.number,
                "fraction": self.noise.fraction,
                "rng_seed": self.noise.rng_seed,
            },
            "embedding": {"n_lags": self.embedding.n_lags, "n_leads": self.embedding.n_leads},
            "n_hidden": self.n_hidden,
            "train": train_config_to_dict(self.train),
            "st_grid": {
                "lags": list(self.st_grid.lags),
                "nodes": list(self.st_grid.nodes),
                "leads": list(self.st_grid.leads),
                "restarts": self.st_grid.restarts,
                "stage": self.st_grid.stage,
            },
            "mt_grid": self.mt_grid,
            "out_dir": self.out_dir,
            "master_seed": self.master_seed,
            "jobs": self.jobs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            return cls(
                oscillator=OscillatorParams(**d.get("oscillator", {})),
                excitation=ExcitationSpec(**d.get("excitation", {})),
                simulation=SimulationSpec(**d.get("simulation", {})),
                noise=NoiseSpec(
                    trial=NoiseTrial.from_number(d["noise"]["trial"]),
                    fraction=d["noise"]["fraction"],
                    rng_seed=d["noise"].get("rng_seed", 0),
                ),
                embedding=EmbeddingSpec(**d.get("embedding", {"n_lags": 10})),
                n_hidden=d.get("n_hidden", 16),
                train=train_config_from_dict(d.get("train", {})),
                st_grid=GridSpec(
                    lags=tuple(d["st_grid"]["lags"]),
                    nodes=tuple(d["st_grid"]["nodes"]),
                    leads=tuple(d["st_grid"].get("leads", ())),
                    restarts=int(d["st_grid"].get("restarts", 10)),
                    stage=d["st_grid"].get("stage", "coarse"),
                ),
                mt_grid=d.get("mt_grid", {"kind": "table2"}),
                out_dir=d.get("out_dir", "out"),
                master_seed=d.get("master_seed", 0),
                jobs=d.get("jobs"),
            )
        except KeyError as exc:
            raise ConfigError(f"config is missing required field: {exc}") from None
        except TypeError as exc:
            raise ConfigError(f"config field error: {exc}") from None

    @classmethod
    def load(cls, path: Path, overrides: list[str] | None = None) -> "ExperimentConfig":
        try:
            with open(path) as f:
                d = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        for item in overrides or []:
            apply_override(d, item)
        return cls.from_dict(d)

    def save(self, path: Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def apply_override(d: dict, item: str) -> None:
    """Apply one --set override of the form path.to.field=value.

    The value is parsed as JSON when possible, otherwise kept as a string.
    """
    if "=" not in item:
        raise ConfigError(f"--set expects path.to.field=value, got {item!r}")
    dotted, raw = item.split("=", 1)
    keys = dotted.split(".")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = d
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            node[key] = {}
        node = node[key]
    node[keys[-1]] = value


def smoke_config(out_dir: str = "out_smoke", master_seed: int = 1) -> ExperimentConfig:
    """Desk-scale end-to-end preset: trial 1 at 1% noise, smoke grids."""
    return ExperimentConfig(
        oscillator=OscillatorParams(),
        excitation=ExcitationSpec(rng_seed=42),
        simulation=SimulationSpec(),
        noise=NoiseSpec(trial=NoiseTrial.OUTPUT_ONLY, fraction=0.01, rng_seed=7),
        embedding=EmbeddingSpec(n_lags=10, n_leads=0),
        n_hidden=16,
        # patience stops these runs around 8k-14k epochs; the default cap
        # of 5000 would truncate them mid-descent
        train=TrainConfig(max_epochs=20_000),
        st_grid=smoke_st_grid(),
        mt_grid={"kind": "smoke"},
        out_dir=out_dir,
        master_seed=master_seed,
    )


def reduced150_config(out_dir: str = "out_150", master_seed: int = 1) -> ExperimentConfig:
    """Reduced-grid preset for the 150% noise comparison on trial 1."""
    return ExperimentConfig(
        oscillator=OscillatorParams(),
        excitation=ExcitationSpec(rng_seed=42),
        simulation=SimulationSpec(),
        noise=NoiseSpec(trial=NoiseTrial.OUTPUT_ONLY, fraction=1.5, rng_seed=7),
        embedding=EmbeddingSpec(n_lags=15, n_leads=0),
        n_hidden=20,
        train=TrainConfig(),
        st_grid=reduced150_st_grid(),
        mt_grid={"kind": "reduced150"},
        out_dir=out_dir,
        master_seed=master_seed,
    )
