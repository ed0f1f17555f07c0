import numpy as np
import pytest

from narx_lab.dataset import (
    EmbeddingSpec,
    NarxDataset,
    ScalerStats,
    apply_scaler,
    fit_scaler,
    split_2_1_1,
)
from narx_lab.noise import NoiseSpec, apply_noise
from narx_lab.oscillator import (
    ExcitationSpec,
    OscillatorParams,
    SimulationSpec,
    TimeSeries,
    generate_excitation,
    simulate,
)


@pytest.fixture(scope="session")
def default_sim():
    """Default-parameter simulation (4000 retained samples), shared across tests."""
    excitation = generate_excitation(ExcitationSpec(rng_seed=42))
    return simulate(OscillatorParams(), excitation, SimulationSpec())


@pytest.fixture(scope="session")
def short_sim():
    """Small, fast simulation for tests that train networks."""
    excitation = generate_excitation(ExcitationSpec(total_samples=1400, rng_seed=11))
    return simulate(
        OscillatorParams(), excitation, SimulationSpec(discard_samples=1000, keep_samples=400)
    )


def identity_scaler(n_inputs: int, n_outputs: int) -> ScalerStats:
    return ScalerStats(
        input_mean=np.zeros(n_inputs),
        input_std=np.ones(n_inputs),
        target_mean=np.zeros(n_outputs),
        target_std=np.ones(n_outputs),
    )


def synthetic_dataset(n_rows=240, n_lags=2, n_leads=0, seed=0, target_fn=None):
    """Partitioned + scaled dataset with random inputs; targets default to a
    fixed linear map of the inputs."""
    rng = np.random.default_rng(seed)
    spec = EmbeddingSpec(n_lags, n_leads)
    inputs = rng.normal(size=(n_rows, spec.n_inputs))
    if target_fn is None:
        w = rng.normal(size=(spec.n_inputs, spec.n_outputs))
        targets = inputs @ w + 0.5
    else:
        targets = target_fn(inputs)
    ds = NarxDataset(
        inputs=inputs,
        targets=np.atleast_2d(targets).reshape(n_rows, spec.n_outputs),
        row_times=np.arange(n_lags, n_lags + n_rows),
        embedding=spec,
    )
    ds = split_2_1_1(ds)
    return apply_scaler(ds, fit_scaler(ds))


def make_series(values, dt=0.002) -> TimeSeries:
    return TimeSeries(dt=dt, values=np.asarray(values, dtype=float))


@pytest.fixture(scope="session")
def noisy_short_sim(short_sim):
    x, y = short_sim
    return apply_noise(x, y, NoiseSpec(trial=3, fraction=0.1, rng_seed=5))
