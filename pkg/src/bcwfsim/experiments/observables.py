"""Level populations, presence density and related run observables."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import PopulationError
from ..evolution import JointState2D, TwoChannelState
from ..grid_potential import DEFAULT_CONSTANTS
from ..spectral import box_eigenstates, project_energy


@dataclass
class PopulationSeries:
    t: list = field(default_factory=list)
    P_A1: list = field(default_factory=list)
    P_A2: list = field(default_factory=list)
    P_B1: list = field(default_factory=list)
    P_B2: list = field(default_factory=list)
    N: list = field(default_factory=list)

    def append(self, t, pops, n):
        self.t.append(t)
        for name, value in zip(("P_A1", "P_A2", "P_B1", "P_B2"), pops):
            getattr(self, name).append(value)
        self.N.append(n)

    def as_array(self):
        """Columns t, P_A1, P_A2, P_B1, P_B2, N."""
        return np.column_stack([self.t, self.P_A1, self.P_A2, self.P_B1, self.P_B2, self.N])


@dataclass(frozen=True, eq=False)
class PresenceDensity:
    t: float
    values: np.ndarray


def _split_weights(coefficients, e_split):
    w = coefficients.weights
    e = np.abs(coefficients.energies)
    low = float(np.sum(w[e < e_split]) * coefficients.dE)
    return low, float(np.sum(w[e >= e_split]) * coefficients.dE)


def level_populations(state, basis, e_split, halfwidth=None, with_norm=False):
    """(P_A1, P_A2, P_B1, P_B2) from active-region energy projections.

    Both signed branches are folded by |E| and split at ``e_split``; the four
    integrals are normalised jointly.  ``with_norm=True`` also returns the
    unnormalised total N.

    Raises
    ------
    PopulationError
        If all four integrals vanish (nothing inside the active region).
    """
    ca = project_energy(state.psi_A, basis, "active", halfwidth)
    cb = project_energy(state.psi_B, basis, "active", halfwidth)
    raw = np.array(_split_weights(ca, e_split) + _split_weights(cb, e_split))
    total = float(raw.sum())
    if not total > 0:
        raise PopulationError("no probability inside the active region")
    pops = tuple(float(v) for v in raw / total)
    return (pops, total) if with_norm else pops


def presence_density(state, dx=None):
    """|psi_A|^2 + |psi_B|^2, or the q-marginal of a joint state."""
    if isinstance(state, TwoChannelState):
        return PresenceDensity(state.t, np.abs(state.psi_A) ** 2 + np.abs(state.psi_B) ** 2)
    if isinstance(state, JointState2D):
        dens = np.sum(np.abs(state.amplitudes) ** 2, axis=1) * state.qgrid.dq
        return PresenceDensity(state.t, dens)
    return PresenceDensity(float("nan"), np.abs(np.asarray(state)) ** 2)


def well_dipole(potential, margin=3.0, constants=DEFAULT_CONSTANTS):
    """|<1|x|2>| (nm) between the two lowest box states of the device region.

    The box spans the active region plus ``margin`` nm on each side.
    """
    half = potential.active_halfwidth + margin
    _, f, xs = box_eigenstates(potential, 2, window=(-half, half), constants=constants)
    return float(abs(np.sum(f[0] * xs * f[1]) * potential.grid.dx))


def rabi_period_estimate(alpha, x12, hbar):
    """Two-level estimate 2 pi hbar / (2 |alpha x12|) in fs."""
    return 2.0 * np.pi * hbar / (2.0 * abs(alpha * x12))


def oscillation_period(t, signal, level=0.5, hysteresis=0.1):
    """Mean period from alternate crossings of ``level`` (with hysteresis).

    Returns NaN when fewer than two crossings occur.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(signal, dtype=float)
    state = None
    crossings = []
    for ti, si in zip(t, s):
        if si >= level + hysteresis and state != "high":
            if state is not None:
                crossings.append(ti)
            state = "high"
        elif si <= level - hysteresis and state != "low":
            if state is not None:
                crossings.append(ti)
            state = "low"
    if len(crossings) < 2:
        return float("nan")
    return float(2.0 * np.mean(np.diff(crossings)))
