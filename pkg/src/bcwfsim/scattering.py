"""
Single-shot scattering transitions applied to a conditional wave function.

Model A shifts the energy-coefficient profile of the packet in the device
eigenbasis by the photon energy; Model B multiplies the packet by the plane
wave ``exp(i p_gamma x / hbar)``.  Model B momenta are given as wavenumbers
(hbar / nm), so the phase factor is ``exp(i p_gamma x)``.
"""

from dataclasses import dataclass

import numpy as np

from .bohmian import velocity_1d
from .errors import ConfigurationError, TransitionError
from .evolution import CrankNicolson
from .grid_potential import DEFAULT_CONSTANTS, l2_norm
from .spectral import SpectralCoefficients, project_energy, synthesize

MODELS = ("A", "B")
KINDS = ("absorption", "emission")
MAX_LEAKAGE = 0.2


@dataclass(frozen=True)
class ScatteringEvent:
    """A prescribed transition at time ``t_s`` (fs).

    ``E_gamma`` (eV) drives Model A; ``p_gamma`` (hbar/nm) drives Model B.
    When Model B is given only ``E_gamma``, the momentum is matched to the
    packet's central energy at the time of the event.
    """

    t_s: float
    model: str = "A"
    kind: str = "absorption"
    E_gamma: float = None
    p_gamma: float = None
    N_ts: int = 1

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigurationError(f"unknown model {self.model!r}", key="scattering.model")
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown kind {self.kind!r}", key="scattering.kind")
        if self.N_ts < 1:
            raise ConfigurationError("N_ts must be at least 1", key="scattering.N_ts")
        if self.E_gamma is not None and self.E_gamma < 0:
            raise ConfigurationError("E_gamma must be non-negative", key="scattering.E_gamma_eV")
        if self.model == "A" and self.E_gamma is None:
            raise ConfigurationError("model A needs E_gamma", key="scattering.E_gamma_eV")
        if self.model == "B" and self.p_gamma is None and self.E_gamma is None:
            raise ConfigurationError("model B needs p_gamma or E_gamma", key="scattering.p_gamma")

    @property
    def energy_shift(self):
        """Signed energy change: +E_gamma for absorption, -E_gamma for emission."""
        return self.E_gamma if self.kind == "absorption" else -self.E_gamma


@dataclass(frozen=True)
class TransitionReport:
    model: str
    pre_mean_energy: float
    post_mean_energy: float
    leaked_probability: float
    negative_branch_weight: float
    pre_negative_branch_weight: float = float("nan")
    p_gamma: float = float("nan")

    def as_row(self):
        return {"model": self.model,
                "pre_mean_energy_eV": self.pre_mean_energy,
                "post_mean_energy_eV": self.post_mean_energy,
                "leaked_probability": self.leaked_probability,
                "pre_negative_branch_weight": self.pre_negative_branch_weight,
                "negative_branch_weight": self.negative_branch_weight,
                "p_gamma_per_nm": self.p_gamma}


def negative_branch_weight(coefficients):
    """Fraction of sum |c|^2 dE carried by right-injected (E < 0) states."""
    return coefficients.negative_weight()


def matched_momentum_shift(energy, E_gamma, constants=DEFAULT_CONSTANTS):
    """Wavenumber change (1/nm) taking a free particle from E to E + E_gamma."""
    k = constants.wavenumber
    return float(k(energy + E_gamma) - k(energy))


def energy_support(coefficients, lo=0.01, hi=0.99):
    """Width of the central 98% of the folded-|E| distribution (eV)."""
    a, b = coefficients.folded_quantiles([lo, hi])
    return float(b - a)


def _shift_branches(coefficients, shift):
    """Shift a(|E|) by ``shift`` within each branch; returns (c', leaked)."""
    e = coefficients.energies
    c = coefficients.c
    out = np.zeros_like(c)
    lost = 0.0
    total = np.sum(np.abs(c) ** 2)
    for sel in (e > 0, e < 0):
        idx = np.flatnonzero(sel)
        levels = np.abs(e[idx])
        order = np.argsort(levels)
        idx, levels = idx[order], levels[order]
        src = levels - shift
        inside = (src >= levels[0]) & (src <= levels[-1])
        out[idx[inside]] = (np.interp(src[inside], levels, c[idx].real)
                            + 1j * np.interp(src[inside], levels, c[idx].imag))
        moved = levels + shift
        gone = (moved < levels[0] - 1e-12) | (moved > levels[-1] + 1e-12)
        lost += np.sum(np.abs(c[idx[gone]]) ** 2)
    leaked = float(lost / total) if total > 0 else 0.0
    return SpectralCoefficients(e, out, coefficients.dE, coefficients.region), leaked


def _energy_shift(psi, basis, shift):
    """Field after shifting its energy profile by ``shift``, plus bookkeeping."""
    pre = project_energy(psi, basis)
    if shift == 0.0:
        return np.array(psi, dtype=complex), pre, 0.0
    post, leaked = _shift_branches(pre, shift)
    if leaked > MAX_LEAKAGE:
        raise TransitionError(
            f"{100 * leaked:.1f}% of the packet left the basis band "
            f"[{basis.e_min:g}, {basis.e_max:g}] eV during the energy shift")
    # content outside the basis band (if any) is carried over unchanged
    out = psi + synthesize(post, basis) - synthesize(pre, basis)
    norm_in = l2_norm(psi, basis.grid.dx)
    out *= norm_in / l2_norm(out, basis.grid.dx)
    return out, pre, leaked


def apply_model_a(psi, basis, event):
    """Energy-shift transition in the device eigenbasis.

    The coefficient profile of each injection branch moves along |E| by
    ``event.energy_shift`` (linear interpolation); weight pushed past the
    basis band is dropped and reported, the result is renormalised to the
    input norm.

    Returns
    -------
    psi_out : ndarray
    report : TransitionReport

    Raises
    ------
    TransitionError
        If more than 20% of the weight leaves the basis band.
    """
    if event.model != "A":
        raise ConfigurationError("apply_model_a needs a model A event", key="scattering.model")
    out, pre, leaked = _energy_shift(np.asarray(psi, dtype=complex), basis, event.energy_shift)
    post = project_energy(out, basis)
    report = TransitionReport("A", pre.folded_mean(), post.folded_mean(), leaked,
                              post.negative_weight(), pre.negative_weight())
    return out, report


def resolve_momentum(event, psi, basis=None, grid=None, constants=DEFAULT_CONSTANTS):
    """Wavenumber kick for a Model B event (explicit or energy-matched)."""
    if event.p_gamma is not None:
        return float(event.p_gamma)
    if basis is not None:
        energy = project_energy(psi, basis).folded_mean()
    else:
        # free-particle mean kinetic energy from the spectral derivative
        k = 2 * np.pi * np.fft.fftfreq(grid.n_x, d=grid.dx)
        w = np.abs(np.fft.fft(psi)) ** 2
        energy = float(np.sum(constants.kinetic_prefactor * k ** 2 * w) / np.sum(w))
    sign = 1.0 if event.kind == "absorption" else -1.0
    target = max(energy + sign * event.E_gamma, 0.0)
    return float(constants.wavenumber(target) - constants.wavenumber(energy))


def apply_model_b(psi, grid, event, basis=None, constants=DEFAULT_CONSTANTS):
    """Momentum-shift transition: psi -> exp(i p_gamma x) psi.

    ``|psi|`` is untouched exactly; the guidance velocity shifts uniformly by
    ``hbar p_gamma / m*``.  Energy diagnostics in the report need ``basis``
    (NaN otherwise).
    """
    if event.model != "B":
        raise ConfigurationError("apply_model_b needs a model B event", key="scattering.model")
    psi = np.asarray(psi, dtype=complex)
    p = resolve_momentum(event, psi, basis, grid, constants)
    out = psi * np.exp(1j * p * grid.x)
    if basis is None:
        nan = float("nan")
        return out, TransitionReport("B", nan, nan, 0.0, nan, nan, p)
    pre, post = project_energy(psi, basis), project_energy(out, basis)
    band = post.total() / max(l2_norm(out, grid.dx) ** 2, 1e-300)
    leaked = float(min(max(1.0 - band, 0.0), 1.0))
    report = TransitionReport("B", pre.folded_mean(), post.folded_mean(), leaked,
                              post.negative_weight(), pre.negative_weight(), p)
    return out, report


def apply_event(psi, event, grid, basis=None, constants=DEFAULT_CONSTANTS):
    """Instantaneous transition by either model."""
    if event.model == "A":
        if basis is None:
            raise ConfigurationError("model A needs an energy basis", key="scattering.model")
        return apply_model_a(psi, basis, event)
    return apply_model_b(psi, grid, event, basis, constants)


def apply_gradual(psi, event, stepper, basis=None):
    """Spread the transition over ``N_ts`` simulation steps.

    Each step is split as half step, partial shift (E_gamma / N_ts or
    p_gamma / N_ts), half step, so the transition is centred on the interval
    and ``N_ts = 1`` is the instantaneous event at the middle of one step.

    Parameters
    ----------
    psi : ndarray
    event : ScatteringEvent
    stepper : CrankNicolson
        Full-step propagator; its potential, dt and CAP are reused.
    basis : EnergyBasis, optional
        Required for Model A.

    Returns
    -------
    psi_out : ndarray after ``N_ts`` full steps
    report : TransitionReport comparing the input with the output field
    """
    n = event.N_ts
    grid = stepper.potential.grid
    constants = stepper.constants
    half = CrankNicolson(stepper.potential, 0.5 * stepper.dt, constants, stepper.cap)
    psi = np.asarray(psi, dtype=complex)
    start = psi
    leaked = 0.0
    if event.model == "B":
        p = resolve_momentum(event, psi, basis, grid, constants) / n
        kick = np.exp(1j * p * grid.x)
    elif basis is None:
        raise ConfigurationError("model A needs an energy basis", key="scattering.model")
    for _ in range(n):
        psi = half.step(psi)
        if event.model == "A":
            psi, _, lk = _energy_shift(psi, basis, event.energy_shift / n)
            leaked += lk
        else:
            psi = psi * kick
        psi = half.step(psi)
    if basis is None:
        nan = float("nan")
        return psi, TransitionReport(event.model, nan, nan, leaked, nan, nan,
                                     p * n if event.model == "B" else nan)
    pre, post = project_energy(start, basis), project_energy(psi, basis)
    report = TransitionReport(event.model, pre.folded_mean(), post.folded_mean(),
                              min(leaked, 1.0), post.negative_weight(), pre.negative_weight(),
                              p * n if event.model == "B" else float("nan"))
    return psi, report


def phase_aligned_distance(a, b, dx):
    """min over global phases phi of || a - exp(i phi) b ||."""
    na = np.sum(np.abs(a) ** 2) * dx
    nb = np.sum(np.abs(b) ** 2) * dx
    ov = abs(np.vdot(a, b)) * dx
    return float(np.sqrt(max(na + nb - 2.0 * ov, 0.0)))


def mean_velocity(psi, grid, constants=DEFAULT_CONSTANTS):
    """<v> = integral J dx / integral |psi|^2 dx, from the phase gradient."""
    field = velocity_1d(psi, grid, constants, threshold=0.0)
    dens = np.abs(psi) ** 2
    v = np.nan_to_num(field.v)
    return float(np.sum(dens * v) / np.sum(dens))
