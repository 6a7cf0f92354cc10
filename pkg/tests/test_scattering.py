import numpy as np
import pytest

from bcwfsim.errors import ConfigurationError, TransitionError
from bcwfsim.evolution import CrankNicolson
from bcwfsim.grid_potential import build_gaussian_packet, l2_norm
from bcwfsim.scattering import (ScatteringEvent, apply_event, apply_gradual, apply_model_a,
                                apply_model_b, energy_support, matched_momentum_shift,
                                mean_velocity, phase_aligned_distance, resolve_momentum)
from bcwfsim.spectral import project_energy


@pytest.fixture(scope="module")
def incident(grid, rtd):
    # well clear of the barriers, central energy 0.1 eV
    return build_gaussian_packet(grid, -100.0, 30.0, 0.1, potential=rtd)


@pytest.fixture(scope="module")
def free(grid):
    return build_gaussian_packet(grid, -50.0, 30.0, 0.2)


def test_event_validation():
    with pytest.raises(ConfigurationError) as err:
        ScatteringEvent(0.0, "C", E_gamma=0.1)
    assert err.value.key == "scattering.model"
    with pytest.raises(ConfigurationError):
        ScatteringEvent(0.0, "A")
    with pytest.raises(ConfigurationError):
        ScatteringEvent(0.0, "A", E_gamma=0.1, N_ts=0)
    with pytest.raises(ConfigurationError):
        ScatteringEvent(0.0, "A", kind="scatter", E_gamma=0.1)
    assert ScatteringEvent(0.0, "A", kind="emission", E_gamma=0.1).energy_shift == -0.1


def test_model_a_zero_shift_is_identity(incident, rtd_basis):
    out, rep = apply_model_a(incident, rtd_basis, ScatteringEvent(0.0, "A", E_gamma=0.0))
    assert np.max(np.abs(out - incident)) < 1e-6
    assert rep.leaked_probability == 0.0


def test_model_b_zero_momentum_is_identity(incident, grid):
    out, _ = apply_model_b(incident, grid, ScatteringEvent(0.0, "B", p_gamma=0.0))
    np.testing.assert_array_equal(out, incident)


@pytest.mark.parametrize("shift", [0.1, 0.172])
def test_model_a_moves_mean_energy(incident, rtd_basis, shift):
    out, rep = apply_model_a(incident, rtd_basis, ScatteringEvent(0.0, "A", E_gamma=shift))
    assert rep.leaked_probability < 1e-2
    gained = rep.post_mean_energy - rep.pre_mean_energy
    assert abs(gained - shift) <= max(0.02 * shift, 2 * rtd_basis.dE)
    # the report is recomputed from the output field
    assert rep.post_mean_energy == pytest.approx(project_energy(out, rtd_basis).folded_mean())
    assert l2_norm(out, rtd_basis.grid.dx) == pytest.approx(1.0, abs=1e-12)
    assert rep.negative_branch_weight < 1e-3


def test_model_a_emission(incident, rtd_basis):
    _, rep = apply_model_a(incident, rtd_basis,
                           ScatteringEvent(0.0, "A", kind="emission", E_gamma=0.05))
    assert rep.post_mean_energy - rep.pre_mean_energy == pytest.approx(-0.05, abs=2e-3)
    assert 0.0 < rep.leaked_probability < 1e-3


def test_emission_below_the_floor_fails(incident, rtd_basis):
    with pytest.raises(TransitionError, match="left the basis band"):
        apply_model_a(incident, rtd_basis, ScatteringEvent(0.0, "A", kind="emission", E_gamma=0.15))


def test_model_b_keeps_density_and_shifts_velocity(free, grid, flat_basis, constants):
    p = 0.1
    out, rep = apply_model_b(free, grid, ScatteringEvent(0.0, "B", p_gamma=p), basis=flat_basis)
    np.testing.assert_allclose(np.abs(out) ** 2, np.abs(free) ** 2, rtol=1e-13, atol=0)
    dv = mean_velocity(out, grid, constants) - mean_velocity(free, grid, constants)
    assert dv == pytest.approx(constants.hbar * p / constants.m_star, rel=1e-4)
    assert rep.p_gamma == p
    assert rep.leaked_probability < 1e-9


def test_model_b_energy_matched_momentum(free, grid, constants):
    ev = ScatteringEvent(0.0, "B", E_gamma=0.1)
    p = resolve_momentum(ev, free, grid=grid, constants=constants)
    # the spectral mean of a Gaussian sits slightly above k0^2 (width term)
    assert p == pytest.approx(matched_momentum_shift(0.2, 0.1, constants), rel=2e-3)
    assert p == pytest.approx(0.102929, rel=1e-4)


def test_apply_event_dispatch(incident, grid, rtd_basis):
    a, _ = apply_event(incident, ScatteringEvent(0.0, "A", E_gamma=0.1), grid, rtd_basis)
    b, _ = apply_model_a(incident, rtd_basis, ScatteringEvent(0.0, "A", E_gamma=0.1))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ConfigurationError):
        apply_event(incident, ScatteringEvent(0.0, "A", E_gamma=0.1), grid, None)


@pytest.mark.parametrize("model", ["A", "B"])
def test_gradual_single_step_is_instantaneous(incident, rtd, rtd_basis, model):
    ev = (ScatteringEvent(0.0, "A", E_gamma=0.1) if model == "A"
          else ScatteringEvent(0.0, "B", p_gamma=0.05))
    full, half = CrankNicolson(rtd, 0.1), CrankNicolson(rtd, 0.05)
    got, _ = apply_gradual(incident, ev, full, rtd_basis)
    mid, _ = apply_event(half.step(incident), ev, rtd.grid, rtd_basis)
    np.testing.assert_allclose(got, half.step(mid), atol=1e-13)


def test_gradual_momentum_kick_on_flat_potential(free, flat):
    # spreading the kick over N_ts dt = 2.5 fs only moves the packet by the
    # drift accumulated over that interval
    cn = CrankNicolson(flat, 0.05)
    one, _ = apply_gradual(free, ScatteringEvent(0.0, "B", p_gamma=0.1), cn)
    for _ in range(49):
        one = cn.step(one)
    spread, rep = apply_gradual(free, ScatteringEvent(0.0, "B", p_gamma=0.1, N_ts=50), cn)
    assert rep.p_gamma == pytest.approx(0.1)
    assert phase_aligned_distance(one, spread, flat.grid.dx) < 1e-2


def test_gradual_energy_shift_on_device(incident, rtd, rtd_basis):
    ev = ScatteringEvent(0.0, "A", E_gamma=0.1, N_ts=10)
    _, rep = apply_gradual(incident, ev, CrankNicolson(rtd, 0.1), rtd_basis)
    assert rep.post_mean_energy - rep.pre_mean_energy == pytest.approx(0.1, rel=0.02)


def test_model_b_broadens_energy_support(incident, grid, rtd_basis, constants):
    # the k-width is kept, so dE = hbar^2 k dk / m* grows by (k0 + p) / k0
    pre = energy_support(project_energy(incident, rtd_basis))
    out, _ = apply_model_b(incident, grid, ScatteringEvent(0.0, "B", p_gamma=0.1), rtd_basis)
    k0 = constants.wavenumber(0.1)
    ratio = energy_support(project_energy(out, rtd_basis)) / pre
    assert ratio == pytest.approx((k0 + 0.1) / k0, rel=0.05)


def test_phase_aligned_distance():
    a = np.array([1.0, 1j, 0.5])
    assert phase_aligned_distance(a, np.exp(0.7j) * a, 1.0) == pytest.approx(0.0, abs=1e-7)
    assert phase_aligned_distance(a, np.zeros(3), 2.0) == pytest.approx(np.sqrt(2 * 2.25))
    assert phase_aligned_distance(a, -a, 1.0) == pytest.approx(0.0, abs=1e-7)
