"""
Time propagation for a single electron field, the two-channel
electron-photon model and the joint (x, q) wave function.

All spatial operators use the 3-point finite-difference Hamiltonian with hard
walls just outside the grid.  Crank-Nicolson steps are Cayley transforms of a
Hermitian matrix and therefore unitary up to round-off; every splitting is
symmetric, so stepping ``dt`` then ``-dt`` restores the initial state.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import eigh, lapack

from .errors import ConfigurationError, DomainError, SimulationError
from .grid_potential import (DEFAULT_CONSTANTS, QuadratureGrid, build_photon_states,
                             coupling_window, dipole_q, photon_hamiltonian)
from .spectral import finite_difference_hamiltonian

#: 2.5e7 eV/m expressed in eV/nm
EV_PER_M_TO_EV_PER_NM = 1e-9


def polynomial_cap(grid, width=40.0, strength=0.05, order=2):
    """Absorbing potential W(x) >= 0 (eV) rising as ``(d / width)**order``
    over the outer ``width`` nm on each side; zero in the interior."""
    if width <= 0 or strength < 0:
        raise ConfigurationError("CAP width must be positive and strength non-negative",
                                 key="run.cap_width_nm")
    x = grid.x
    d = np.maximum(np.maximum(grid.x_min + width - x, x - (grid.x_max - width)), 0.0)
    return strength * (d / width) ** order


class CrankNicolson:
    """Factorised Crank-Nicolson step for H = -hbar^2/2m d2/dx2 + V - iW.

    ``step`` accepts a field of shape (n_x,) or a stack (n_x, k) and
    advances every column by ``dt``.
    """

    def __init__(self, potential, dt, constants=DEFAULT_CONSTANTS, cap=None):
        if dt == 0:
            raise DomainError("dt must be non-zero")
        self.potential = potential
        self.dt = float(dt)
        self.constants = constants
        self.cap = cap
        diag, off = finite_difference_hamiltonian(potential, constants)
        diag = diag.astype(complex)
        if cap is not None:
            diag = diag - 1j * np.asarray(cap, dtype=float)
        self.diag, self.off = diag, off
        mu = 0.5j * self.dt / constants.hbar
        # right-hand side (1 - i H dt / 2 hbar)
        self._rd = 1.0 - mu * diag
        self._ro = -mu * off
        # left-hand side (1 + i H dt / 2 hbar), factorised once
        lo = (mu * off).astype(complex)
        dl, d, du, du2, ipiv, info = lapack.zgttrf(lo.copy(), 1.0 + mu * diag, lo.copy())
        if info != 0:
            raise SimulationError("singular Crank-Nicolson matrix")
        self._lu = (dl, d, du, du2, ipiv)

    def apply_hamiltonian(self, psi):
        out = self.diag[:, None] * psi if psi.ndim == 2 else self.diag * psi
        off = self.off[:, None] if psi.ndim == 2 else self.off
        out[:-1] += off * psi[1:]
        out[1:] += off * psi[:-1]
        return out

    def step(self, psi):
        psi = np.asarray(psi, dtype=complex)
        two_d = psi.ndim == 2
        rd = self._rd[:, None] if two_d else self._rd
        ro = self._ro[:, None] if two_d else self._ro
        rhs = rd * psi
        rhs[:-1] += ro * psi[1:]
        rhs[1:] += ro * psi[:-1]
        out, info = lapack.zgttrs(*self._lu, rhs)
        if info != 0:
            raise SimulationError("Crank-Nicolson back-substitution failed")
        return out


def step_1d(psi, potential, dt, constants=DEFAULT_CONSTANTS, cap=None):
    """One Crank-Nicolson step of the single-field Schroedinger equation."""
    return CrankNicolson(potential, dt, constants, cap).step(psi)


def expectation_energy(psi, propagator):
    """<psi|H|psi> / <psi|psi> with the propagator's Hermitian part."""
    h = propagator.apply_hamiltonian(psi)
    num = np.vdot(psi, h).real
    return float(num / np.vdot(psi, psi).real)


@dataclass
class TwoChannelState:
    """psi_A (zero-photon channel) and psi_B (one-photon channel) at time t."""

    psi_A: np.ndarray
    psi_B: np.ndarray
    t: float = 0.0

    def norms(self, dx):
        return (float(np.sum(np.abs(self.psi_A) ** 2) * dx),
                float(np.sum(np.abs(self.psi_B) ** 2) * dx))

    def norm(self, dx):
        return float(np.sqrt(sum(self.norms(dx))))

    def copy(self):
        return TwoChannelState(self.psi_A.copy(), self.psi_B.copy(), self.t)


@dataclass
class JointState2D:
    """Psi(x, q) on the tensor grid, axis 0 = x, axis 1 = q."""

    amplitudes: np.ndarray
    qgrid: QuadratureGrid
    t: float = 0.0

    def norm(self, dx):
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * dx * self.qgrid.dq))

    def copy(self):
        return JointState2D(self.amplitudes.copy(), self.qgrid, self.t)


@dataclass(frozen=True)
class CouplingParams:
    """Electron-photon coupling.

    alpha : eV/nm, two-channel coupling constant.
    omega : rad/fs, photon angular frequency.
    alpha_prime : eV/(nm q-unit), joint coupling, alpha / <psi0|q|psi1>.
    halfwidth, taper : nm, extent of the coupled region (see
        :func:`~bcwfsim.grid_potential.coupling_window`); ``None`` couples the
        whole grid.
    """

    alpha: float
    omega: float
    alpha_prime: float = None
    halfwidth: float = None
    taper: float = 1.0

    def __post_init__(self):
        if self.omega <= 0:
            raise ConfigurationError("photon frequency must be positive",
                                     key="photon.hbar_omega_eV")

    @classmethod
    def from_si(cls, alpha_ev_per_m, hbar_omega, constants=DEFAULT_CONSTANTS, **kw):
        return cls(alpha_ev_per_m * EV_PER_M_TO_EV_PER_NM, hbar_omega / constants.hbar, **kw)

    def hbar_omega(self, constants=DEFAULT_CONSTANTS):
        return self.omega * constants.hbar

    def with_quadrature(self, qgrid, constants=DEFAULT_CONSTANTS):
        """Copy with alpha_prime filled in from the sampled dipole element."""
        psi0, psi1 = build_photon_states(qgrid, self.omega, constants.hbar)
        return replace(self, alpha_prime=self.alpha / dipole_q(qgrid, psi0, psi1))

    def check_consistency(self, qgrid, constants=DEFAULT_CONSTANTS, tol=1e-8):
        if self.alpha_prime is None:
            return
        psi0, psi1 = build_photon_states(qgrid, self.omega, constants.hbar)
        implied = self.alpha_prime * dipole_q(qgrid, psi0, psi1)
        if abs(implied - self.alpha) > tol * max(1.0, abs(self.alpha)):
            raise ConfigurationError("alpha and alpha_prime are inconsistent",
                                     key="photon.alpha_eV_per_m")

    def dipole_coordinate(self, grid):
        if self.halfwidth is None:
            return np.array(grid.x, dtype=float)
        return coupling_window(grid, self.halfwidth, self.taper)


def _pair_unitary(a, b, g, tau):
    """Entries of exp(-i tau [[a, g], [g, b]]) for real a, b and array g."""
    m0, d = 0.5 * (a + b), 0.5 * (a - b)
    omega = np.sqrt(d * d + g * g)
    c, s = np.cos(omega * tau), np.sin(omega * tau) / omega
    ph = np.exp(-1j * m0 * tau)
    u_aa = ph * (c - 1j * s * d)
    u_bb = ph * (c + 1j * s * d)
    u_ab = ph * (-1j * s * g)
    return u_aa, u_ab, u_bb


class TwoChannelPropagator:
    """Strang splitting CN(dt/2) . exp(-i M(x) dt / hbar) . CN(dt/2).

    M(x) = [[hbar w / 2, alpha x_w], [alpha x_w, 3 hbar w / 2]] is applied
    exactly at every node.
    """

    def __init__(self, potential, coupling, dt, constants=DEFAULT_CONSTANTS, cap=None):
        self.potential = potential
        self.coupling = coupling
        self.dt = float(dt)
        self.constants = constants
        self.half = CrankNicolson(potential, 0.5 * dt, constants, cap)
        self.xw = coupling.dipole_coordinate(potential.grid)
        hw = coupling.hbar_omega(constants)
        self.levels = (0.5 * hw, 1.5 * hw)
        self._u = _pair_unitary(self.levels[0], self.levels[1], coupling.alpha * self.xw,
                                self.dt / constants.hbar)

    def step(self, state):
        pair = np.stack([state.psi_A, state.psi_B], axis=1)
        pair = self.half.step(pair)
        u_aa, u_ab, u_bb = self._u
        a, b = pair[:, 0], pair[:, 1]
        pair = np.stack([u_aa * a + u_ab * b, u_ab * a + u_bb * b], axis=1)
        pair = self.half.step(pair)
        return TwoChannelState(pair[:, 0], pair[:, 1], state.t + self.dt)

    def apply_hamiltonian(self, state):
        ga = self.coupling.alpha * self.xw
        ha = self.half.apply_hamiltonian(state.psi_A) + self.levels[0] * state.psi_A + ga * state.psi_B
        hb = self.half.apply_hamiltonian(state.psi_B) + self.levels[1] * state.psi_B + ga * state.psi_A
        return ha, hb

    def energy(self, state):
        """<H> of the coupled two-channel system divided by the total norm."""
        ha, hb = self.apply_hamiltonian(state)
        num = np.vdot(state.psi_A, ha).real + np.vdot(state.psi_B, hb).real
        den = np.vdot(state.psi_A, state.psi_A).real + np.vdot(state.psi_B, state.psi_B).real
        return float(num / den)


def step_two_channel(state, potential, coupling, dt, constants=DEFAULT_CONSTANTS, cap=None):
    return TwoChannelPropagator(potential, coupling, dt, constants, cap).step(state)


class JointPropagator2D:
    """Symmetric splitting for H = H_x + H_q + alpha' x_w q.

    Sequence: CN_x(dt/2), coupling phase(dt/2), exact H_q(dt), coupling
    phase(dt/2), CN_x(dt/2).  H_q is the sinc-DVR oscillator matrix, whose
    propagator is built once from its eigendecomposition.
    """

    def __init__(self, potential, coupling, qgrid, dt, constants=DEFAULT_CONSTANTS, cap=None):
        if coupling.alpha_prime is None:
            coupling = coupling.with_quadrature(qgrid, constants)
        self.potential = potential
        self.coupling = coupling
        self.qgrid = qgrid
        self.dt = float(dt)
        self.constants = constants
        self.half = CrankNicolson(potential, 0.5 * dt, constants, cap)
        hq = photon_hamiltonian(qgrid, coupling.omega, constants.hbar)
        lam, vec = eigh(hq)
        self.h_q = hq
        self.u_q_t = (vec * np.exp(-1j * lam * self.dt / constants.hbar)) @ vec.T
        self.u_q_t = self.u_q_t.T            # right-multiplication form
        xw = coupling.dipole_coordinate(potential.grid)
        self.rows = np.flatnonzero(xw != 0.0)
        self.xw = xw
        phase = -0.5 * self.dt / constants.hbar * coupling.alpha_prime
        self._p = np.exp(1j * phase * xw[self.rows, None] * qgrid.q[None, :])

    def step(self, state):
        psi = self.half.step(state.amplitudes)
        psi[self.rows] *= self._p
        psi = psi @ self.u_q_t
        psi[self.rows] *= self._p
        psi = self.half.step(psi)
        return JointState2D(psi, state.qgrid, state.t + self.dt)

    def energy(self, state):
        psi = state.amplitudes
        h = self.half.apply_hamiltonian(psi) + psi @ self.h_q.T
        h += self.coupling.alpha_prime * self.xw[:, None] * self.qgrid.q[None, :] * psi
        return float(np.vdot(psi, h).real / np.vdot(psi, psi).real)


def step_joint_2d(state, potential, coupling, dt, constants=DEFAULT_CONSTANTS, cap=None):
    return JointPropagator2D(potential, coupling, state.qgrid, dt, constants, cap).step(state)


def product_state(psi_x, psi_q, qgrid, t=0.0):
    return JointState2D(np.outer(psi_x, psi_q).astype(complex), qgrid, t)


def compose_joint(state, psi0, psi1, qgrid):
    """Psi(x, q) = psi_A(x) psi0(q) + psi_B(x) psi1(q)."""
    amp = np.outer(state.psi_A, psi0) + np.outer(state.psi_B, psi1)
    return JointState2D(amp, qgrid, state.t)


def project_channels(state, psi0, psi1, dx=None):
    """Project Psi(x, q) on the zero- and one-photon states.

    Returns (TwoChannelState, residual) where ``residual`` is the 2D L2 norm
    of Psi - psi_A psi0 - psi_B psi1; its square is the probability outside
    span{psi0, psi1}.  ``dx`` is needed only for the residual's x measure
    (defaults to 1, i.e. a per-node norm).
    """
    qgrid = state.qgrid
    psi = state.amplitudes
    if psi0.shape != (qgrid.n_q,) or psi1.shape != (qgrid.n_q,):
        raise ConfigurationError("photon states and quadrature grid differ")
    dq = qgrid.dq
    psi_a = psi @ np.conj(psi0) * dq
    psi_b = psi @ np.conj(psi1) * dq
    rest = psi - np.outer(psi_a, psi0) - np.outer(psi_b, psi1)
    measure = (1.0 if dx is None else dx) * dq
    residual = float(np.sqrt(np.sum(np.abs(rest) ** 2) * measure))
    return TwoChannelState(psi_a, psi_b, state.t), residual
