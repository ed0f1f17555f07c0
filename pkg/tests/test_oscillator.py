import math

import numpy as np
import pytest

from narx_lab.errors import ConfigError
from narx_lab.oscillator import (
    ExcitationSpec,
    OscillatorParams,
    SimulationSpec,
    TimeSeries,
    butterworth_lowpass,
    duffing_acceleration,
    generate_excitation,
    integrate_states,
    simulate,
)

from conftest import make_series


def linear_sdof_response(params, force_amp, force_omega, t):
    """Closed-form displacement of the k3=0 oscillator under F*sin(w*t),
    zero initial conditions (homogeneous + particular solution)."""
    m, c, k = params.mass, params.damping, params.stiffness
    wn = math.sqrt(k / m)
    zeta = c / (2.0 * math.sqrt(k * m))
    wd = wn * math.sqrt(1.0 - zeta**2)
    amp = force_amp / math.sqrt((k - m * force_omega**2) ** 2 + (c * force_omega) ** 2)
    phase = math.atan2(c * force_omega, k - m * force_omega**2)
    a = amp * math.sin(phase)
    b = (zeta * wn * a - amp * force_omega * math.cos(phase)) / wd
    homogeneous = np.exp(-zeta * wn * t) * (a * np.cos(wd * t) + b * np.sin(wd * t))
    return homogeneous + amp * np.sin(force_omega * t - phase)


def simulate_linear_case(fs, duration=2.0, force_amp=10.0, force_hz=10.0):
    params = OscillatorParams(cubic_stiffness=0.0)
    n = int(duration * fs) + 1
    t = np.arange(n) / fs
    excitation = TimeSeries(dt=1.0 / fs, values=force_amp * np.sin(2 * math.pi * force_hz * t))
    _, y = simulate(params, excitation, SimulationSpec(discard_samples=0, keep_samples=n))
    return t, y.values, linear_sdof_response(params, force_amp, 2 * math.pi * force_hz, t)


class TestTypes:
    def test_default_params_match_reference_values(self):
        p = OscillatorParams()
        assert (p.mass, p.damping, p.stiffness, p.cubic_stiffness) == (1.0, 20.0, 1e4, 5e9)

    @pytest.mark.parametrize(
        "kwargs",
        [{"mass": 0.0}, {"mass": -1.0}, {"damping": -0.1}, {"stiffness": -5.0}],
    )
    def test_invalid_params_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            OscillatorParams(**kwargs)

    def test_excitation_defaults(self):
        spec = ExcitationSpec()
        assert spec.noise_scale == 10.0
        assert spec.cutoff_hz == 50.0
        assert spec.sample_rate_hz == 500.0

    def test_cutoff_must_stay_below_nyquist(self):
        with pytest.raises(ConfigError):
            ExcitationSpec(cutoff_hz=250.0)

    def test_time_series_rejects_bad_values(self):
        with pytest.raises(ConfigError):
            TimeSeries(dt=0.0, values=np.ones(3))
        with pytest.raises(ConfigError):
            TimeSeries(dt=0.1, values=np.array([]))
        with pytest.raises(ConfigError):
            TimeSeries(dt=0.1, values=np.array([1.0, np.nan]))


class TestExcitation:
    def test_zero_scale_gives_zero_series(self):
        series = generate_excitation(ExcitationSpec(noise_scale=0.0, total_samples=50))
        assert np.all(series.values == 0.0)
        assert len(series) == 50

    def test_seeded_generation_is_bit_identical(self):
        spec = ExcitationSpec(total_samples=500, rng_seed=123)
        a = generate_excitation(spec)
        b = generate_excitation(spec)
        assert np.array_equal(a.values, b.values)

    def test_unfiltered_std_matches_configured_scale(self):
        # law of large numbers on the raw draws (no filter)
        spec = ExcitationSpec(noise_scale=10.0, cutoff_hz=None, total_samples=100_000, rng_seed=9)
        series = generate_excitation(spec)
        assert abs(np.std(series.values) - 10.0) / 10.0 < 0.01


class TestButterworth:
    def test_dc_gain_is_unity(self):
        series = make_series(np.full(3000, 7.5))
        out = butterworth_lowpass(series, cutoff_hz=50.0, order=4)
        # ignore the startup transient
        assert np.allclose(out.values[-500:], 7.5, rtol=1e-9)

    @staticmethod
    def _steady_amplitude(values):
        # RMS over an integer number of periods recovers the amplitude
        # exactly; sampled peaks can fall between true peaks
        return math.sqrt(2.0 * np.mean(values**2))

    @pytest.mark.parametrize("order", [2, 4, 6])
    def test_half_power_at_cutoff(self, order):
        # analytic oracle: |H(f_c)| = 1/sqrt(2) for any Butterworth order
        fs, fc = 500.0, 50.0
        t = np.arange(20000) / fs
        series = make_series(np.sin(2 * math.pi * fc * t), dt=1 / fs)
        out = butterworth_lowpass(series, cutoff_hz=fc, order=order)
        ratio = self._steady_amplitude(out.values[5000:])
        assert abs(ratio - 1 / math.sqrt(2)) / (1 / math.sqrt(2)) < 0.02

    def test_attenuation_one_octave_above_cutoff(self):
        # analytic roll-off bound: order 4 gives >= 24 dB at 2x cutoff
        fs, fc = 500.0, 50.0
        t = np.arange(20000) / fs
        series = make_series(np.sin(2 * math.pi * 2 * fc * t), dt=1 / fs)
        out = butterworth_lowpass(series, cutoff_hz=fc, order=4)
        attenuation_db = -20.0 * math.log10(self._steady_amplitude(out.values[5000:]))
        assert attenuation_db >= 24.0

    def test_output_length_equals_input_length(self):
        series = make_series(np.random.default_rng(0).normal(size=777))
        assert len(butterworth_lowpass(series, 50.0, 4)) == 777

    def test_cutoff_at_nyquist_rejected(self):
        series = make_series(np.ones(10))
        with pytest.raises(ConfigError):
            butterworth_lowpass(series, cutoff_hz=250.0, order=4)


class TestAcceleration:
    def test_equilibrium(self):
        assert duffing_acceleration(OscillatorParams(), 0.0, 0.0, 0.0) == 0.0

    def test_direct_substitution_stiffness_terms(self):
        # k*y = 10, k3*y^3 = 5 at y = 1e-3 with default parameters
        assert duffing_acceleration(OscillatorParams(), 1e-3, 0.0, 0.0) == pytest.approx(-15.0)

    def test_damping_cancels_forcing(self):
        # c*ydot = 20 exactly cancels x = 20
        assert duffing_acceleration(OscillatorParams(), 0.0, 1.0, 20.0) == pytest.approx(0.0)


class TestSimulate:
    def test_zero_excitation_zero_ic_stays_at_rest(self):
        excitation = make_series(np.zeros(300))
        x, y = simulate(OscillatorParams(), excitation, SimulationSpec(discard_samples=0, keep_samples=300))
        assert np.all(y.values == 0.0)
        assert np.all(x.values == 0.0)

    def test_linear_case_matches_analytic_steady_state(self):
        _, computed, analytic = simulate_linear_case(fs=2000.0)
        # steady-state window only
        amp = np.abs(analytic[2000:]).max()
        err = np.abs(computed[2000:] - analytic[2000:]).max()
        assert err / amp < 1e-3

    def test_halving_dt_shrinks_error_by_order_four_margin(self):
        errors = []
        for fs in (500.0, 1000.0):
            _, computed, analytic = simulate_linear_case(fs=fs)
            errors.append(np.abs(computed - analytic).max())
        assert errors[0] / errors[1] >= 12.0

    def test_observed_convergence_order_at_least_3_5(self):
        errors = []
        for fs in (500.0, 1000.0, 2000.0):
            _, computed, analytic = simulate_linear_case(fs=fs)
            errors.append(np.abs(computed - analytic).max())
        order_1 = math.log2(errors[0] / errors[1])
        order_2 = math.log2(errors[1] / errors[2])
        assert min(order_1, order_2) >= 3.5

    def test_insufficient_excitation_length_rejected(self):
        excitation = make_series(np.zeros(100))
        with pytest.raises(ConfigError, match="at least"):
            simulate(OscillatorParams(), excitation, SimulationSpec(discard_samples=90, keep_samples=20))

    def test_determinism_bit_identical(self):
        spec = ExcitationSpec(total_samples=600, rng_seed=31)
        sim = SimulationSpec(discard_samples=100, keep_samples=500)
        a = simulate(OscillatorParams(), generate_excitation(spec), sim)
        b = simulate(OscillatorParams(), generate_excitation(spec), sim)
        assert np.array_equal(a[1].values, b[1].values)

    def test_retained_block_is_stationary(self, default_sim):
        # mean of the retained 4000 samples within 3 standard errors of zero
        _, y = default_sim
        sem = np.std(y.values) / math.sqrt(len(y))
        assert abs(np.mean(y.values)) <= 3.0 * sem

    def test_free_decay_energy_never_increases(self):
        params = OscillatorParams()
        n = 2000
        excitation = make_series(np.zeros(n))
        ys, vs = integrate_states(
            params, excitation, initial_displacement=5e-4, initial_velocity=0.05
        )
        energy = (
            0.5 * params.mass * vs**2
            + 0.5 * params.stiffness * ys**2
            + 0.25 * params.cubic_stiffness * ys**4
        )
        assert np.diff(energy).max() <= 1e-9 * energy[0]
