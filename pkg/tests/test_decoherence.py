import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qtraj import (
    DecoherenceModel,
    SlitLabel,
    alpha_magnitude,
    classical_density,
    coherence_degree,
    evaluate_wave,
    reduced_density_diagonal,
    screening_coefficients,
)
from qtraj.wavepacket import wave_density

from conftest import TAU_C, TAU_F, neutron_packets

H = 1 / math.sqrt(2)

phases = st.floats(-math.pi, math.pi)
weights = st.floats(0.01, 0.99)


@st.composite
def coefficients(draw):
    w = draw(weights)
    return math.sqrt(w) * np.exp(1j * draw(phases)), math.sqrt(1 - w) * np.exp(1j * draw(phases))


def test_model_validation():
    with pytest.raises(ValueError):
        DecoherenceModel(tau_c=-1.0)
    with pytest.raises(ValueError):
        DecoherenceModel(tau_s=0.0)
    with pytest.raises(ValueError):
        DecoherenceModel(c1=1.0, c2=0.1)
    with pytest.raises(ValueError):
        alpha_magnitude(DecoherenceModel(), -1.0)


def test_eta_from_fields():
    assert DecoherenceModel(tau_c=2.26e-2, tau_s=2.26e-3).eta == pytest.approx(0.1, rel=1e-15)
    assert DecoherenceModel(tau_c=0.0, tau_s=1.0).eta == math.inf


def test_slit_label_has_two_values():
    assert [int(s) for s in SlitLabel] == [1, 2]
    assert SlitLabel.SLIT1.other is SlitLabel.SLIT2


def test_alpha_magnitude_values():
    assert alpha_magnitude(DecoherenceModel(), 123.0) == 1.0
    m = DecoherenceModel(tau_c=TAU_C)
    assert alpha_magnitude(m, 0.0) == 1.0
    assert alpha_magnitude(m, TAU_C) == pytest.approx(0.367879441171442, abs=1e-15)
    zero = DecoherenceModel(tau_c=0.0)
    assert alpha_magnitude(zero, 0.0) == 1.0
    assert alpha_magnitude(zero, 1e-300) == 0.0


def test_coherence_degree_values():
    m = DecoherenceModel(tau_c=TAU_C)
    assert coherence_degree(m, 0.0) == 1.0
    assert coherence_degree(m, TAU_C) == pytest.approx(0.648054273663885, abs=1e-15)
    assert coherence_degree(DecoherenceModel(tau_c=0.0), 1e-9) == 0.0
    assert coherence_degree(DecoherenceModel(), 1.0) == 1.0


def test_coherence_degree_is_sech():
    rng = np.random.default_rng(4)
    tau = rng.uniform(1e-4, 1.0, 1000)
    t = rng.uniform(0, 20, 1000) * tau
    got = np.array([coherence_degree(DecoherenceModel(tau_c=c), s) for c, s in zip(tau, t)])
    assert np.max(np.abs(got - 1 / np.cosh(t / tau))) < 1e-12


def test_coherence_degree_strictly_decreasing():
    t = np.linspace(1e-4, 5, 2000) * TAU_C
    assert np.all(np.diff(coherence_degree(DecoherenceModel(tau_c=TAU_C), t)) < 0)


def test_screening_at_start_unchanged():
    m = DecoherenceModel(tau_s=1e-3, c1=0.6, c2=0.8j)
    c1, c2 = screening_coefficients(m, SlitLabel.SLIT2, 0.0)
    assert c1 == pytest.approx(0.6, abs=1e-15) and c2 == pytest.approx(0.8j, abs=1e-15)


def test_screening_long_time_leaves_traversed_phase():
    m = DecoherenceModel(tau_s=1e-3, c1=0.6 * np.exp(0.7j), c2=0.8)
    c1, c2 = screening_coefficients(m, SlitLabel.SLIT1, 1.0)
    assert c2 == 0.0
    assert c1 == pytest.approx(np.exp(0.7j), abs=1e-15)


def test_screening_reference_values():
    # Frozen from a 30-digit evaluation of exp(-1)/sqrt(2) and sqrt(1 - exp(-2)/2).
    m = DecoherenceModel(tau_s=1e-3)
    c1, c2 = screening_coefficients(m, SlitLabel.SLIT1, 1e-3)
    assert abs(c2) == pytest.approx(0.260130047511444, abs=1e-14)
    assert abs(c1) == pytest.approx(0.965573590350157, abs=1e-14)
    assert abs(c1) ** 2 + abs(c2) ** 2 == pytest.approx(1.0, abs=1e-15)


def test_screening_requires_traversed_weight():
    m = DecoherenceModel(tau_s=1e-3, c1=0.0, c2=1.0)
    with pytest.raises(ValueError):
        screening_coefficients(m, SlitLabel.SLIT1, 1e-3)


def test_screening_off_returns_original():
    m = DecoherenceModel(c1=0.6, c2=0.8)
    assert screening_coefficients(m, SlitLabel.SLIT1, 5.0) == (0.6, 0.8)


@given(coefficients(), st.floats(1e-6, 1.0), st.floats(0, 50), st.sampled_from(list(SlitLabel)))
def test_screening_preserves_norm(c, tau_s, ratio, slit):
    m = DecoherenceModel(tau_s=tau_s, c1=c[0], c2=c[1])
    c1, c2 = screening_coefficients(m, slit, ratio * tau_s)
    assert abs(abs(c1) ** 2 + abs(c2) ** 2 - 1) < 1e-12


def test_destructive_interference_point():
    p1, p2 = neutron_packets()
    m = DecoherenceModel(alpha_phase=math.pi)
    assert reduced_density_diagonal(m, p1, p2, 0.0, 1e-3) < 1e-12 * reduced_density_diagonal(m, p1, p2, 63e-6, 1e-3)


def test_incoherent_limit_is_classical(detector_grid):
    p1, p2 = neutron_packets()
    m = DecoherenceModel(tau_c=0.0, c1=0.6, c2=0.8j)
    rho = reduced_density_diagonal(m, p1, p2, detector_grid, TAU_F)
    expected = 0.36 * wave_density(p1, detector_grid, TAU_F) + 0.64 * wave_density(p2, detector_grid, TAU_F)
    assert np.max(np.abs(rho - expected)) < 1e-12 * np.max(expected)
    np.testing.assert_allclose(rho, classical_density(m, p1, p2, detector_grid, TAU_F), rtol=1e-14, atol=0)


@pytest.mark.parametrize("c", [(H, H), (0.6, 0.8 * np.exp(2.1j))])
def test_coherent_limit_is_pure_state(c, detector_grid):
    # Closer packets make the overlap, and hence the renormalization, non-trivial.
    p1, p2 = neutron_packets(separation=30e-6)
    m = DecoherenceModel(c1=c[0], c2=c[1])
    x = detector_grid / 5
    t = 2e-3
    pure = np.abs(c[0] * evaluate_wave(p1, x, t) + c[1] * evaluate_wave(p2, x, t)) ** 2
    fine = np.linspace(-2e-3, 2e-3, 400001)
    norm = np.trapezoid(np.abs(c[0] * evaluate_wave(p1, fine, t) + c[1] * evaluate_wave(p2, fine, t)) ** 2, fine)
    rho = reduced_density_diagonal(m, p1, p2, x, t)
    mask = pure > 1e-6 * pure.max()
    assert np.max(np.abs(rho[mask] / (pure[mask] / norm) - 1)) < 1e-10


@pytest.mark.parametrize("tau_c", [math.inf, TAU_C, 0.0])
def test_density_integrates_to_one(tau_c):
    p1, p2 = neutron_packets(separation=30e-6)
    x = np.linspace(-2e-3, 2e-3, 200001)
    rho = reduced_density_diagonal(DecoherenceModel(tau_c=tau_c), p1, p2, x, TAU_F)
    assert np.trapezoid(rho, x) == pytest.approx(1.0, abs=1e-10)


@given(coefficients(), st.floats(0, 1e-1), st.floats(0, 0.1), phases)
def test_density_non_negative(c, tau_c, t, phase):
    p1, p2 = neutron_packets()
    m = DecoherenceModel(tau_c=tau_c, c1=c[0], c2=c[1], alpha_phase=phase)
    x = np.linspace(-5e-4, 5e-4, 101)
    assert np.all(reduced_density_diagonal(m, p1, p2, x, t) >= 0)


def test_classical_density_cases():
    p1, p2 = neutron_packets()
    x = np.linspace(-3e-4, 3e-4, 11)
    single = DecoherenceModel(c1=1.0, c2=0.0)
    np.testing.assert_allclose(classical_density(single, p1, p2, x, TAU_F), wave_density(p1, x, TAU_F), rtol=1e-14)
    sym = DecoherenceModel()
    assert classical_density(sym, p1, p2, 0.0, TAU_F) == pytest.approx(0.5 * 2 * wave_density(p1, 0.0, TAU_F), rel=1e-14)
    fine = np.linspace(-2e-3, 2e-3, 100001)
    assert np.trapezoid(classical_density(sym, p1, p2, fine, TAU_F), fine) == pytest.approx(1.0, abs=1e-10)


def test_screened_density_uses_screened_weights():
    p1, p2 = neutron_packets()
    m = DecoherenceModel(tau_c=0.0, tau_s=1e-4)
    x = np.linspace(-3e-4, 3e-4, 21)
    rho = reduced_density_diagonal(m, p1, p2, x, 1.0, screening=SlitLabel.SLIT2)
    np.testing.assert_allclose(rho, wave_density(p2, x, 1.0), rtol=1e-12)
