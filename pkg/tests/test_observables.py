import numpy as np
import pytest

from bcwfsim.errors import PopulationError
from bcwfsim.evolution import (CouplingParams, TwoChannelPropagator, TwoChannelState,
                               product_state)
from bcwfsim.experiments.observables import (PopulationSeries, level_populations,
                                             oscillation_period, presence_density,
                                             rabi_period_estimate, well_dipole)
from bcwfsim.grid_potential import QuadratureGrid, build_photon_states
from bcwfsim.spectral import box_eigenstates

X12_FROZEN = 2.453898      # nm, |<1|x|2>| of the two lowest well states


@pytest.fixture(scope="module")
def e_split(resonances):
    return 0.5 * (resonances[0] + resonances[1])


def _embed(grid, window, values):
    psi = np.zeros(grid.n_x, complex)
    psi[(grid.x >= window[0]) & (grid.x <= window[1])] = values
    return psi


def test_resonance_state_populates_lowest_level(rtd_basis, resonances, e_split):
    i = np.argmin(np.abs(rtd_basis.energies - resonances[0]))
    phi = rtd_basis.states[i].astype(complex)
    pops = level_populations(TwoChannelState(phi, np.zeros_like(phi)), rtd_basis, e_split)
    np.testing.assert_allclose(pops, (1.0, 0.0, 0.0, 0.0), atol=0.02)
    # the same field in the photon channel lands in B1
    pops = level_populations(TwoChannelState(np.zeros_like(phi), phi), rtd_basis, e_split)
    np.testing.assert_allclose(pops, (0.0, 0.0, 1.0, 0.0), atol=0.02)


def test_populations_sum_to_one_and_report_norm(grid, rtd, rtd_basis, e_split):
    _, f, _ = box_eigenstates(rtd, 2, window=(-10.0, 10.0))
    a = _embed(grid, (-10.0, 10.0), 0.6 * f[0])
    b = _embed(grid, (-10.0, 10.0), 0.8 * f[1])
    pops, n = level_populations(TwoChannelState(a, b), rtd_basis, e_split, with_norm=True)
    assert sum(pops) == pytest.approx(1.0, abs=1e-12)
    assert pops[0] > 0.3 and pops[3] > 0.55
    assert 0.8 < n < 1.0


def test_empty_active_region_raises(grid, rtd_basis, e_split):
    far = np.exp(-((grid.x + 150.0) / 5.0) ** 2).astype(complex)
    far[np.abs(grid.x) < 100] = 0.0
    with pytest.raises(PopulationError):
        level_populations(TwoChannelState(far, np.zeros_like(far)), rtd_basis, e_split)


def test_well_dipole_and_rabi_estimate(rtd, constants):
    x12 = well_dipole(rtd, constants=constants)
    assert x12 == pytest.approx(X12_FROZEN, rel=1e-5)
    assert rabi_period_estimate(0.025, x12, constants.hbar) == pytest.approx(33.707, rel=1e-4)


def test_seeded_well_rabi_period(grid, rtd, rtd_basis, resonances, e_split, constants):
    # the upper well state placed in channel A with an empty photon channel:
    # B1 swings between ~0 and ~1 at the two-level period
    coupling = CouplingParams.from_si(2.5e7, resonances[1] - resonances[0], constants,
                                      halfwidth=7.0)
    coupling = coupling.with_quadrature(QuadratureGrid.for_frequency(coupling.omega))
    _, f, _ = box_eigenstates(rtd, 2, window=(-10.0, 10.0))
    psi = _embed(grid, (-10.0, 10.0), f[1])
    state = TwoChannelState(psi, np.zeros_like(psi))
    prop = TwoChannelPropagator(rtd, coupling, 0.1, constants)
    series = PopulationSeries()
    for n in range(1000):
        if n % 5 == 0:
            pops, total = level_populations(state, rtd_basis, e_split, with_norm=True)
            series.append(n * 0.1, pops, total)
        state = prop.step(state)
    cols = series.as_array()
    assert cols.shape == (200, 6)
    b1 = cols[:, 3]
    assert b1.max() > 0.9 and b1[:5].min() < 0.1
    estimate = rabi_period_estimate(coupling.alpha, well_dipole(rtd), constants.hbar)
    assert oscillation_period(cols[:, 0], b1) == pytest.approx(estimate, rel=0.05)


def test_oscillation_period():
    t = np.linspace(0.0, 100.0, 2001)
    assert oscillation_period(t, 0.5 + 0.5 * np.sin(2 * np.pi * t / 12.5)) == pytest.approx(
        12.5, rel=1e-2)
    assert np.isnan(oscillation_period(t, np.full_like(t, 0.7)))
    # jitter inside the hysteresis band is not a crossing
    jitter = 0.5 + 0.05 * np.sin(2 * np.pi * t)
    assert np.isnan(oscillation_period(t, jitter))


def test_presence_density(grid):
    a = np.exp(-grid.x ** 2 / 50.0).astype(complex)
    b = 0.5j * a
    dens = presence_density(TwoChannelState(a, b, t=3.0))
    assert dens.t == 3.0
    np.testing.assert_allclose(dens.values, 1.25 * np.abs(a) ** 2)
    qgrid = QuadratureGrid.for_frequency(0.26)
    psi0, _ = build_photon_states(qgrid, 0.26)
    joint = product_state(a, psi0, qgrid)
    np.testing.assert_allclose(presence_density(joint).values, np.abs(a) ** 2,
                               rtol=1e-6, atol=1e-300)
