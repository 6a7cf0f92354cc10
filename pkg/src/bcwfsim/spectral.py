"""
Stationary-state toolkit for a 1D potential profile.

Scattering states are obtained with an exact transfer matrix over the
piecewise-constant slabs owned by each grid node (node ``i`` owns
``[x_i - dx/2, x_i + dx/2]``).  States carry signed energy labels: positive
for injection from the left, negative for injection from the right.  They are
delta-normalised in energy, ``<phi_E|phi_E'> = delta(E - E')``, so that
sums over a uniform energy grid reproduce continuum integrals.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal

from .errors import ConfigurationError, DomainError
from .grid_potential import DEFAULT_CONSTANTS

DIRECTIONS = ("from_left", "from_right")
LEAD_CHECK_NODES = 3


@dataclass(frozen=True, eq=False)
class ScatteringState:
    energy: float
    direction: str
    amplitudes: np.ndarray
    transmission: float
    reflection: float

    @property
    def signed_energy(self):
        return self.energy if self.direction == "from_left" else -self.energy


def _check_leads(potential):
    v = potential.values
    n = min(LEAD_CHECK_NODES, len(v) // 2)
    if np.ptp(v[:n]) > 0 or np.ptp(v[-n:]) > 0:
        raise ConfigurationError("potential must be flat in both lead regions",
                                 key="potential.kind")


def _kappa(energies, level, constants):
    return np.sqrt((2.0 * constants.m_star * (energies - level)).astype(complex)) / constants.hbar


class _HalfSlab:
    """Exact (psi, psi') propagation across half a slab, cached per level."""

    def __init__(self, energies, half, constants):
        self.energies = energies
        self.half = half
        self.constants = constants
        self._cache = {}

    def __call__(self, level):
        entry = self._cache.get(level)
        if entry is None:
            k = _kappa(self.energies, level, self.constants)
            kd = k * self.half
            cos = np.cos(kd)
            sin_over_k = self.half * np.sinc(kd / np.pi)
            entry = (cos, sin_over_k, -(k * k) * sin_over_k)
            self._cache[level] = entry
        return entry


def _sweep(values, x_first, x_last, dx, energies, constants, store):
    """Integrate from the right lead to the left lead for left injection.

    Returns (psi_nodes or None, A, B, k_left, k_right) where the solution is
    ``A e^{ik_L x} + B e^{-ik_L x}`` in the left lead and equals 1 at the
    last node (transmitted wave ``exp(i k_R (x - x_last))``).
    """
    n = len(values)
    k_left = _kappa(energies, values[0], constants)
    k_right = _kappa(energies, values[-1], constants)
    psi = np.ones(len(energies), dtype=complex)
    dpsi = 1j * k_right * psi
    nodes = np.empty((n, len(energies)), dtype=complex) if store else None
    if store:
        nodes[-1] = psi
    half = _HalfSlab(energies, -0.5 * dx, constants)
    for i in range(n - 1, 0, -1):
        for level in (values[i], values[i - 1]):
            c, s, ks = half(level)
            psi, dpsi = c * psi + s * dpsi, ks * psi + c * dpsi
        if store:
            nodes[i - 1] = psi
    ratio = dpsi / (1j * k_left)
    a = 0.5 * (psi + ratio) * np.exp(-1j * k_left * x_first)
    b = 0.5 * (psi - ratio) * np.exp(1j * k_left * x_first)
    return nodes, a, b, k_left, k_right


def _solve(potential, energies, direction, constants, store=True):
    """Vectorised scattering solutions; returns unit-incident nodes, T, R."""
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    if np.any(energies <= 0):
        raise DomainError("scattering energies must be positive")
    if direction not in DIRECTIONS:
        raise ConfigurationError(f"unknown direction {direction!r}")
    _check_leads(potential)
    grid = potential.grid
    values = potential.values
    x = grid.x
    if direction == "from_right":
        values = values[::-1]
        x = -x[::-1]
    if np.any(energies <= values[0]):
        raise DomainError("energy must exceed the incident lead level")
    nodes, a, b, k_in, k_out = _sweep(values, x[0], x[-1], grid.dx, energies, constants, store)
    propagating = (k_out.imag == 0) & (k_out.real > 0)
    transmission = np.where(propagating, (k_out.real / k_in.real) / np.abs(a) ** 2, 0.0)
    reflection = np.abs(b / a) ** 2
    if store:
        nodes = (nodes / a).T
        if direction == "from_right":
            nodes = nodes[:, ::-1]
    return nodes, transmission, reflection, k_in.real


def energy_normalisation(k_in, constants=DEFAULT_CONSTANTS):
    """Factor turning a unit-amplitude incident wave into a delta(E)-normalised state."""
    return 1.0 / np.sqrt(2.0 * np.pi * constants.hbar ** 2 * k_in / constants.m_star)


def solve_scattering_state(potential, energy, direction="from_left", constants=DEFAULT_CONSTANTS):
    """Scattering eigenstate at ``energy`` with unit-flux-normalised incidence.

    The returned amplitudes are delta(E)-normalised: unit incident amplitude
    scaled by ``(2 pi hbar^2 k / m*)**-1/2``.
    """
    nodes, t, r, k_in = _solve(potential, [energy], direction, constants)
    amps = nodes[0] * energy_normalisation(k_in[0], constants)
    return ScatteringState(float(energy), direction, amps, float(t[0]), float(r[0]))


def transmission_spectrum(potential, energies, direction="from_left", constants=DEFAULT_CONSTANTS):
    """Transmission and reflection probabilities on an energy grid.

    Returns
    -------
    energies, T, R : ndarray
    """
    energies = np.asarray(energies, dtype=float)
    _, t, r, _ = _solve(potential, energies, direction, constants, store=False)
    return energies, t, r


def direct_scattering_solution(potential, energy, constants=DEFAULT_CONSTANTS, rtol=1e-11):
    """Independent oracle: adaptive ODE integration of the stationary equation.

    Integrates psi'' = 2m*/hbar^2 (V - E) psi from the right lead to the left
    lead, segment by segment over runs of constant potential, with no use of
    the closed-form slab propagator.  Returns (T, R, unit-incident nodes).
    """
    _check_leads(potential)
    grid = potential.grid
    x, v = grid.x, potential.values
    hb, m = constants.hbar, constants.m_star
    k_l = np.sqrt(2 * m * (energy - v[0])) / hb
    k_r = np.sqrt(complex(2 * m * (energy - v[-1]))) / hb
    breaks = np.flatnonzero(np.diff(v)) + 1          # first node of each new segment
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [len(v)]])
    y = np.array([1.0 + 0j, 1j * k_r])
    nodes = np.empty(len(v), dtype=complex)
    nodes[-1] = 1.0
    for s, e in zip(starts[::-1], ends[::-1]):
        coef = 2 * m * (v[s] - energy) / hb ** 2

        def rhs(_, u, coef=coef):
            return [u[1], coef * u[0]]

        right = x[e - 1] + (0.5 * grid.dx if e < len(v) else 0.0)
        left = x[s] - (0.5 * grid.dx if s > 0 else 0.0)
        t_eval = x[s:e][::-1]
        if s > 0:
            t_eval = np.append(t_eval, left)
        sol = solve_ivp(rhs, (right, left), y, method="DOP853", t_eval=t_eval,
                        rtol=rtol, atol=rtol * 1e-2)
        nodes[s:e] = sol.y[0][:e - s][::-1]
        y = sol.y[:, -1]
    psi, dpsi = nodes[0], y[1]
    ratio = dpsi / (1j * k_l)
    a = 0.5 * (psi + ratio) * np.exp(-1j * k_l * x[0])
    b = 0.5 * (psi - ratio) * np.exp(1j * k_l * x[0])
    t = (k_r.real / k_l) / abs(a) ** 2 if k_r.imag == 0 else 0.0
    return float(t), float(abs(b / a) ** 2), nodes / a


def resonance_search(potential, window, tolerance=1e-4, constants=DEFAULT_CONSTANTS):
    """Locate local maxima of T(E) inside ``window`` to within ``tolerance``.

    A fine scan brackets each peak; the sign change of dT/dE is then refined
    by bisection.  Returns an empty list when T has no interior maximum.
    """
    lo, hi = float(window[0]), float(window[1])
    lo = max(lo, 1e-4)
    step = min(2.5e-4, (hi - lo) / 400.0)
    scan = np.arange(lo, hi + 0.5 * step, step)
    _, t, _ = transmission_spectrum(potential, scan, constants=constants)
    rel = 1e-10 * max(1.0, float(np.max(t)))
    peaks = np.flatnonzero((t[1:-1] - t[:-2] > rel) & (t[1:-1] - t[2:] > rel)) + 1
    h = 0.05 * tolerance

    def slope(e):
        _, tt, _ = transmission_spectrum(potential, [e - h, e + h], constants=constants)
        return tt[1] - tt[0]

    found = []
    for p in peaks:
        a, b = scan[p - 1], scan[p + 1]
        while b - a > tolerance:
            mid = 0.5 * (a + b)
            if slope(mid) > 0:
                a = mid
            else:
                b = mid
        found.append(0.5 * (a + b))
    return found


@dataclass(frozen=True, eq=False)
class EnergyBasis:
    """Both-branch scattering basis on a uniform |E| grid.

    ``states[i]`` is the delta-normalised state with signed energy
    ``energies[i]``; energies increase strictly from ``-e_max`` to ``e_max``.
    """

    potential: object
    energies: np.ndarray
    states: np.ndarray
    transmission: np.ndarray
    dE: float

    @property
    def grid(self):
        return self.potential.grid

    @property
    def abs_energies(self):
        return np.abs(self.energies)

    @property
    def e_min(self):
        return float(np.min(self.abs_energies))

    @property
    def e_max(self):
        return float(np.max(self.abs_energies))

    def state(self, index):
        e = float(self.energies[index])
        direction = "from_left" if e > 0 else "from_right"
        t = float(self.transmission[index])
        return ScatteringState(abs(e), direction, self.states[index], t, 1.0 - t)


def energy_grid(e_min=0.002, e_max=1.5, dE=1e-3):
    n = int(round((e_max - e_min) / dE)) + 1
    return e_min + dE * np.arange(n)


def build_energy_basis(potential, e_min=0.002, e_max=1.5, dE=1e-3, constants=DEFAULT_CONSTANTS):
    """Scattering basis for both injection sides on ``[e_min, e_max]``."""
    levels = energy_grid(e_min, e_max, dE)
    left, t_left, _, k_left = _solve(potential, levels, "from_left", constants)
    right, t_right, _, k_right = _solve(potential, levels, "from_right", constants)
    left *= energy_normalisation(k_left, constants)[:, None]
    right *= energy_normalisation(k_right, constants)[:, None]
    energies = np.concatenate([-levels[::-1], levels])
    states = np.concatenate([right[::-1], left])
    transmission = np.concatenate([t_right[::-1], t_left])
    return EnergyBasis(potential, energies, states, transmission, float(dE))


@dataclass(frozen=True, eq=False)
class SpectralCoefficients:
    energies: np.ndarray
    c: np.ndarray
    dE: float
    region: str = "whole_grid"

    @property
    def weights(self):
        return np.abs(self.c) ** 2

    def total(self):
        return float(np.sum(self.weights) * self.dE)

    def folded_mean(self):
        """Mean of |E| over the |c|^2 distribution."""
        w = self.weights
        return float(np.sum(np.abs(self.energies) * w) / np.sum(w))

    def folded_quantiles(self, probs):
        """Quantiles of |E| under the |c|^2 distribution (linear in the CDF)."""
        order = np.argsort(np.abs(self.energies), kind="stable")
        e = np.abs(self.energies)[order]
        w = self.weights[order]
        cdf = np.cumsum(w) / np.sum(w)
        return np.interp(probs, cdf, e)

    def negative_weight(self):
        w = self.weights
        return float(np.sum(w[self.energies < 0]) / np.sum(w))


def region_mask(grid, halfwidth):
    return np.abs(grid.x) <= halfwidth + 1e-9 * grid.dx


def _quadrature_weights(n, dx):
    w = np.full(n, dx)
    w[0] = w[-1] = 0.5 * dx
    return w


def project_energy(psi, basis, region="whole_grid", halfwidth=None):
    """c(E) = integral of psi(x) phi_E*(x) over the grid or the active region.

    ``region`` is ``"whole_grid"`` or ``"active"``; the active region is
    ``|x| <= halfwidth`` (default: the potential's L_x).
    """
    psi = np.asarray(psi)
    grid = basis.grid
    if psi.shape != (grid.n_x,):
        raise ConfigurationError("field and basis grids differ")
    if region == "whole_grid":
        w = _quadrature_weights(grid.n_x, grid.dx)
        c = np.conj(basis.states @ np.conj(w * psi))
    elif region == "active":
        if halfwidth is None:
            halfwidth = basis.potential.active_halfwidth
        if halfwidth is None:
            raise ConfigurationError("active region undefined for this potential")
        mask = region_mask(grid, halfwidth)
        w = _quadrature_weights(int(mask.sum()), grid.dx)
        c = np.conj(basis.states[:, mask] @ np.conj(w * psi[mask]))
    else:
        raise ConfigurationError(f"unknown projection region {region!r}")
    return SpectralCoefficients(basis.energies, c, basis.dE, region)


def synthesize(coefficients, basis):
    """psi(x) = sum_E c(E) phi_E(x) dE."""
    if coefficients.c.shape != basis.energies.shape or not np.allclose(
            coefficients.energies, basis.energies):
        raise ConfigurationError("coefficients are not defined on the basis energies")
    return (coefficients.c @ basis.states) * basis.dE


def finite_difference_hamiltonian(potential, constants=DEFAULT_CONSTANTS, mask=None):
    """(diagonal, off-diagonal) of the 3-point Hamiltonian with hard walls."""
    v = potential.values if mask is None else potential.values[mask]
    c = constants.kinetic_prefactor / potential.grid.dx ** 2
    return 2.0 * c + v, np.full(len(v) - 1, -c)


def box_eigenstates(potential, n_states, window=None, constants=DEFAULT_CONSTANTS):
    """Lowest eigenpairs of the finite-difference Hamiltonian in a closed box.

    ``window=(a, b)`` restricts the box to nodes with a <= x <= b; walls sit
    one cell outside the retained nodes.  Returns (energies, fields, x) with
    fields normalised to unit sum |psi|^2 dx.
    """
    x = potential.grid.x
    mask = np.ones(len(x), bool) if window is None else (x >= window[0]) & (x <= window[1])
    n = int(mask.sum())
    if n_states < 1 or n_states > n:
        raise DomainError(f"requested {n_states} states from a {n}-node box")
    diag, off = finite_difference_hamiltonian(potential, constants, mask)
    w, v = eigh_tridiagonal(diag, off, select="i", select_range=(0, n_states - 1))
    v = v.T / np.sqrt(potential.grid.dx)
    # fix sign so each state is positive where it first becomes appreciable
    for row in v:
        lead = row[np.argmax(np.abs(row) > 1e-3 * np.abs(row).max())]
        if lead < 0:
            row *= -1
    return w, v, x[mask]
