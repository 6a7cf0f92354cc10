"""
Grids, potential profiles, initial wave packets and the unit system.

Units throughout the package are eV for energies, nm for lengths and fs for
times.  The photon quadrature ``q`` carries units of sqrt(eV) * fs so that the
single-mode field Hamiltonian reads ``-hbar**2/2 d2/dq2 + omega**2 q**2 / 2``
with unit mass.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import erfc

from .errors import ConfigurationError, DomainError

HBAR = 0.6582119569                       # eV fs
ELECTRON_MASS = 0.51099895000e6 / 299.792458 ** 2   # eV fs^2 / nm^2
#: Effective-mass ratio calibrated so the default RTD resonances sit at the
#: published 0.058 eV / 0.23 eV (see README, "Calibration").
M_STAR_RATIO = 0.040


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = HBAR
    m_star: float = M_STAR_RATIO * ELECTRON_MASS
    e_charge: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.m_star > 0 and self.e_charge > 0):
            raise ConfigurationError("physical constants must be strictly positive")

    @property
    def kinetic_prefactor(self):
        """hbar^2 / (2 m*) in eV nm^2."""
        return self.hbar ** 2 / (2.0 * self.m_star)

    def wavenumber(self, energy):
        """Free-particle wavenumber (1/nm) for a kinetic energy in eV."""
        return np.sqrt(2.0 * self.m_star * np.asarray(energy, dtype=float)) / self.hbar


DEFAULT_CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class SpatialGrid:
    x_min: float = -250.0
    x_max: float = 250.0
    n_x: int = 2001

    def __post_init__(self):
        if self.n_x < 3:
            raise ConfigurationError("n_x must be at least 3", key="grid.n_x")
        if not self.x_max > self.x_min:
            raise ConfigurationError("x_max must exceed x_min", key="grid.x_max_nm")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.n_x - 1)

    @cached_property
    def x(self):
        x = np.linspace(self.x_min, self.x_max, self.n_x)
        x.flags.writeable = False
        return x

    def index_of(self, position):
        """Index of the grid node nearest to ``position``."""
        return int(round((position - self.x_min) / self.dx))

    def snap(self, position):
        return self.x_min + self.index_of(position) * self.dx

    def refined(self, factor=2):
        """Grid with ``factor`` times finer spacing over the same interval."""
        return SpatialGrid(self.x_min, self.x_max, (self.n_x - 1) * factor + 1)


@dataclass(frozen=True)
class QuadratureGrid:
    q_max: float
    n_q: int = 128

    def __post_init__(self):
        if self.q_max <= 0:
            raise ConfigurationError("q_max must be positive", key="photon.q_extent")
        if self.n_q < 3:
            raise ConfigurationError("n_q must be at least 3", key="photon.n_q")

    @classmethod
    def for_frequency(cls, omega, hbar=HBAR, extent=8.0, n_q=128):
        """Symmetric grid spanning ``extent`` oscillator lengths sqrt(hbar/omega)."""
        return cls(extent * np.sqrt(hbar / omega), n_q)

    @property
    def q_min(self):
        return -self.q_max

    @property
    def dq(self):
        return 2.0 * self.q_max / (self.n_q - 1)

    @cached_property
    def q(self):
        q = np.linspace(-self.q_max, self.q_max, self.n_q)
        q.flags.writeable = False
        return q


@dataclass(frozen=True, eq=False)
class PotentialProfile:
    """Node-sampled potential energy (eV) on a :class:`SpatialGrid`.

    ``active_halfwidth`` is the half-length L_x of the device region
    (outer barrier edge for a double barrier); ``None`` for open profiles.
    """

    grid: SpatialGrid
    values: np.ndarray
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    active_halfwidth: float = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n_x,):
            raise ConfigurationError("potential must have one value per grid node")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("potential must be finite everywhere")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def is_flat(self):
        return np.ptp(self.values) == 0.0

    def with_values(self, values, kind="custom"):
        return PotentialProfile(self.grid, values, kind, dict(self.params), self.active_halfwidth)


def build_flat(grid, level=0.0):
    return PotentialProfile(grid, np.full(grid.n_x, float(level)), "flat", {"level": float(level)})


def build_custom(grid, values, active_halfwidth=None):
    return PotentialProfile(grid, values, "custom", {}, active_halfwidth)


def build_double_barrier(grid, well_width, barrier_thickness, barrier_height, min_lead=20.0):
    """Two rectangular barriers enclosing a well centred at x = 0.

    Barrier edges are snapped to the nearest grid node; a node belongs to a
    barrier when it lies between the snapped inner edge (inclusive) and the
    snapped outer edge (exclusive), so each barrier covers exactly
    ``round(barrier_thickness / dx)`` node cells and the profile is mirror
    symmetric on symmetric grids.
    """
    if well_width <= 0 or barrier_thickness <= 0:
        raise ConfigurationError("well width and barrier thickness must be positive",
                                 key="potential.well_width_nm")
    outer = 0.5 * well_width + barrier_thickness
    if outer + min_lead > min(-grid.x_min, grid.x_max):
        raise ConfigurationError(
            f"double barrier (outer edge {outer:g} nm) plus {min_lead:g} nm leads "
            f"does not fit in [{grid.x_min:g}, {grid.x_max:g}] nm",
            key="potential.well_width_nm")
    idx = np.arange(grid.n_x)
    r_in, r_out = grid.index_of(0.5 * well_width), grid.index_of(outer)
    l_in, l_out = grid.index_of(-0.5 * well_width), grid.index_of(-outer)
    if r_out <= r_in or l_in <= l_out:
        raise ConfigurationError("barrier thinner than one grid cell",
                                 key="potential.barrier_thickness_nm")
    barrier = ((idx >= r_in) & (idx < r_out)) | ((idx <= l_in) & (idx > l_out))
    values = np.where(barrier, float(barrier_height), 0.0)
    params = {"well_width": well_width, "barrier_thickness": barrier_thickness,
              "barrier_height": barrier_height}
    return PotentialProfile(grid, values, "double_barrier", params, outer)


def build_single_barrier(grid, thickness, height, center=0.0):
    """One rectangular barrier, used for spectrum validation."""
    idx = np.arange(grid.n_x)
    lo, hi = grid.index_of(center - 0.5 * thickness), grid.index_of(center + 0.5 * thickness)
    values = np.where((idx >= lo) & (idx < hi), float(height), 0.0)
    return PotentialProfile(grid, values, "custom",
                            {"barrier_thickness": thickness, "barrier_height": height},
                            0.5 * thickness + abs(center))


def l2_norm(field, dx):
    """Trapezoidal L2 norm of a sampled field."""
    return float(np.sqrt(np.trapezoid(np.abs(field) ** 2, dx=dx)))


def build_gaussian_packet(grid, x0, sigma, energy, direction="left_to_right",
                          potential=None, constants=DEFAULT_CONSTANTS):
    """Normalised Gaussian packet exp(-(x-x0)^2/(4 sigma^2)) exp(i k0 x).

    ``sigma`` is the rms width of |psi|^2; ``k0 = +-sqrt(2 m* E)/hbar``.
    """
    if sigma <= 0:
        raise ConfigurationError("sigma must be positive", key="packet.sigma_nm")
    if energy < 0:
        raise DomainError("central energy must be non-negative")
    if direction not in ("left_to_right", "right_to_left"):
        raise ConfigurationError(f"unknown direction {direction!r}", key="packet.direction")
    margin = 3.0 * sigma
    if x0 - margin < grid.x_min or x0 + margin > grid.x_max:
        raise ConfigurationError(
            f"packet at {x0:g} nm with sigma {sigma:g} nm overlaps the grid boundary",
            key="packet.x0_nm")
    if potential is not None and potential.active_halfwidth is not None:
        if abs(x0) - margin < potential.active_halfwidth:
            raise ConfigurationError(
                f"packet at {x0:g} nm with sigma {sigma:g} nm overlaps the barrier region",
                key="packet.x0_nm")
    k0 = float(constants.wavenumber(energy))
    if direction == "right_to_left":
        k0 = -k0
    x = grid.x
    psi = np.exp(-((x - x0) ** 2) / (4.0 * sigma ** 2) + 1j * k0 * x)
    return psi / l2_norm(psi, grid.dx)


def build_photon_states(qgrid, omega, hbar=HBAR, tail_tol=1e-12):
    """Zero- and one-photon oscillator eigenfunctions sampled on ``qgrid``."""
    if omega <= 0:
        raise DomainError("omega must be positive")
    q = qgrid.q
    scale = omega / hbar
    psi0 = (scale / np.pi) ** 0.25 * np.exp(-0.5 * scale * q ** 2)
    psi1 = np.sqrt(2.0 * scale) * q * psi0
    edge = float(np.abs(psi1[-1]) ** 2)
    # probability of the one-photon state beyond +-q_max
    s = np.sqrt(scale) * qgrid.q_max
    tail = erfc(s) + 2.0 * s * np.exp(-s * s) / np.sqrt(np.pi)
    if edge > tail_tol or tail > tail_tol:
        raise ConfigurationError(
            f"quadrature grid too narrow for omega={omega:g} rad/fs "
            f"(edge density {edge:.2e}, tail probability {tail:.2e})",
            key="photon.q_extent")
    psi0 = psi0 / l2_norm(psi0, qgrid.dq)
    psi1 = psi1 / l2_norm(psi1, qgrid.dq)
    return psi0.astype(complex), psi1.astype(complex)


def photon_hamiltonian(qgrid, omega, hbar=HBAR):
    """Dense sinc-DVR matrix of -hbar^2/2 d2/dq2 + omega^2 q^2/2 on ``qgrid``.

    The Colbert-Miller kinetic matrix is spectrally accurate, so sampled
    oscillator eigenfunctions are eigenvectors to near machine precision.
    """
    n = qgrid.n_q
    i = np.arange(n)
    diff = i[:, None] - i[None, :]
    with np.errstate(divide="ignore"):
        kin = np.where(diff == 0, np.pi ** 2 / 3.0,
                       2.0 * (-1.0) ** np.abs(diff) / np.where(diff == 0, 1, diff) ** 2)
    kin *= hbar ** 2 / (2.0 * qgrid.dq ** 2)
    return kin + np.diag(0.5 * omega ** 2 * qgrid.q ** 2)


def dipole_q(qgrid, psi0, psi1):
    """Quadrature matrix element <psi0| q |psi1>."""
    return float(np.real(np.trapezoid(np.conj(psi0) * qgrid.q * psi1, dx=qgrid.dq)))


def coupling_window(grid, halfwidth, taper=1.0):
    """Dipole coordinate x * w(x) restricted to the active region.

    ``w`` is 1 for |x| <= halfwidth and falls to 0 with a cos^2 taper of
    length ``taper``; outside the electron does not couple to the mode.
    """
    x = grid.x
    d = np.abs(x) - halfwidth
    w = np.ones_like(x)
    if taper > 0:
        ramp = (d > 0) & (d < taper)
        w[ramp] = np.cos(0.5 * np.pi * d[ramp] / taper) ** 2
        w[d >= taper] = 0.0
    else:
        w[d > 0] = 0.0
    return x * w
