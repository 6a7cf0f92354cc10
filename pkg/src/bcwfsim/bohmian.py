"""
Bohmian trajectories: quantum-equilibrium sampling, guidance velocities,
trajectory integration, conditional wave-function slices and the
Ramo-Shockley ensemble current.

Velocities follow v = J / |psi|^2.  Two equivalent evaluations are provided:
the phase-gradient form, ``hbar/m * d arg(psi)/dx`` taken from the local
phase increment ``arcsin(Im(psi_i* (psi_i+1 - psi_i-1)) / 2|psi_i|^2) / dx``
(exact for plane waves, zero for real fields), and the
current-density form, ``hbar/m * Im(psi* d psi/dx) / |psi|^2`` with a
spectral derivative.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import DomainError
from .grid_potential import DEFAULT_CONSTANTS

NODE_THRESHOLD = 1e-12
SOURCES = ("from_phase_gradient", "from_current_density")


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Guidance velocity sampled on a grid axis; NaN marks regularised nodes."""

    v: np.ndarray
    source: str = "from_phase_gradient"

    @property
    def valid(self):
        return np.isfinite(self.v)


@dataclass
class TrajectoryEnsemble:
    """W Bohmian trajectories; row ``j`` is experiment ``j``.

    ``history`` collects ``(t, x, q)`` snapshots appended by :meth:`record`.
    """

    x: np.ndarray
    q: np.ndarray = None
    t: float = 0.0
    seed: int = 0
    vx: np.ndarray = None
    vq: np.ndarray = None
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim != 1 or len(self.x) < 1:
            raise DomainError("an ensemble needs at least one trajectory")
        if self.vx is None:
            self.vx = np.zeros_like(self.x)
        if self.q is not None:
            self.q = np.asarray(self.q, dtype=float)
            if self.vq is None:
                self.vq = np.zeros_like(self.q)

    @property
    def W(self):
        return len(self.x)

    @property
    def is_2d(self):
        return self.q is not None

    def record(self):
        self.history.append((self.t, self.x.copy(), None if self.q is None else self.q.copy()))

    def path_x(self):
        """Array (n_records, W) of recorded x positions."""
        return np.array([h[1] for h in self.history])

    def path_q(self):
        return np.array([h[2] for h in self.history])

    def times(self):
        return np.array([h[0] for h in self.history])


def _uniforms(seed, W, dims):
    # one counter-based stream; row j always holds experiment j's draws
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    return gen.random((W, dims))


def _cdf(density, step):
    cdf = cumulative_trapezoid(density, dx=step, initial=0.0)
    return cdf / cdf[-1]


def _inverse_cdf(cdf, axis, u):
    # first segment whose upper end reaches u; such a segment always rises,
    # so flat stretches of the CDF (zero density) are never sampled
    u = np.asarray(u, dtype=float)
    i = np.clip(np.searchsorted(cdf, u, side="left"), 1, len(cdf) - 1)
    lo, hi = cdf[i - 1], cdf[i]
    frac = np.clip((u - lo) / np.where(hi > lo, hi - lo, 1.0), 0.0, 1.0)
    return axis[i - 1] + frac * (axis[i] - axis[i - 1])


def sample_quantum_equilibrium(density, axes, W, seed=0):
    """Draw W positions distributed as ``density`` (inverse-CDF sampling).

    Parameters
    ----------
    density : ndarray
        |Psi|^2 on a 1D grid, or on an (n_x, n_q) tensor grid.
    axes : ndarray or (ndarray, ndarray)
        Node coordinates for each dimension.
    W : int
        Number of experiments.
    seed : int
        Philox key; identical seeds give identical ensembles.

    Returns
    -------
    ndarray (W,) for 1D, or a pair of arrays (x, q) for 2D.  In 2D, x is
    drawn from the marginal and q from the conditional at that x.
    """
    density = np.asarray(density, dtype=float)
    if W < 1:
        raise DomainError("W must be at least 1")
    if np.any(density < 0) or not np.any(density > 0):
        raise DomainError("density must be non-negative and not identically zero")
    if density.ndim == 1:
        axis = np.asarray(axes, dtype=float)
        u = _uniforms(seed, W, 1)[:, 0]
        return _inverse_cdf(_cdf(density, axis[1] - axis[0]), axis, u)
    x_axis, q_axis = (np.asarray(a, dtype=float) for a in axes)
    dx, dq = x_axis[1] - x_axis[0], q_axis[1] - q_axis[0]
    u = _uniforms(seed, W, 2)
    marginal = np.trapezoid(density, dx=dq, axis=1)
    xs = _inverse_cdf(_cdf(marginal, dx), x_axis, u[:, 0])
    # conditional density of q, linearly interpolated between x rows
    pos = np.clip((xs - x_axis[0]) / dx, 0, len(x_axis) - 1)
    i0 = np.minimum(pos.astype(int), len(x_axis) - 2)
    w = (pos - i0)[:, None]
    rows = (1 - w) * density[i0] + w * density[i0 + 1]
    qs = np.empty(W)
    for j in range(W):
        qs[j] = _inverse_cdf(_cdf(rows[j], dq), q_axis, u[j, 1])
    return xs, qs


def _phase_increment(minus, centre, plus, step):
    """Local phase gradient arcsin(Im(c* (p - m)) / 2|c|^2) / step.

    Exact for plane waves (``sin(k step)`` is inverted) and exactly zero for
    real fields, including across sign changes.
    """
    num = np.imag(np.conj(centre) * (plus - minus))
    den = 2.0 * np.abs(centre) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.clip(num / den, -1.0, 1.0)
    return np.arcsin(s) / step


def _phase_gradient(psi, step, axis):
    psi = np.moveaxis(psi, axis, 0)
    grad = np.empty(psi.shape)
    grad[1:-1] = _phase_increment(psi[:-2], psi[1:-1], psi[2:], step)
    with np.errstate(divide="ignore", invalid="ignore"):
        for i, j in ((0, 1), (-2, -1)):
            s = np.imag(np.conj(psi[i]) * psi[j]) / (np.abs(psi[i]) * np.abs(psi[j]))
            grad[i if i == 0 else -1] = np.arcsin(np.clip(s, -1.0, 1.0)) / step
    return np.moveaxis(grad, 0, axis)


def _spectral_derivative(psi, step, axis):
    n = psi.shape[axis]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=step)
    shape = [1] * psi.ndim
    shape[axis] = n
    return np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(psi, axis=axis), axis=axis)


def _velocity(psi, step, mass, hbar, source, threshold, axis=0):
    dens = np.abs(psi) ** 2
    if source == "from_phase_gradient":
        v = hbar / mass * _phase_gradient(psi, step, axis)
    elif source == "from_current_density":
        with np.errstate(divide="ignore", invalid="ignore"):
            v = hbar / mass * np.imag(np.conj(psi) * _spectral_derivative(psi, step, axis)) / dens
    else:
        raise ValueError(f"unknown velocity source {source!r}")
    v = np.where(dens >= threshold * dens.max(), v, np.nan)
    return VelocityField(v, source)


def velocity_1d(psi, grid, constants=DEFAULT_CONSTANTS, source="from_phase_gradient",
                threshold=NODE_THRESHOLD):
    """Guidance velocity (nm/fs) of a 1D field on ``grid``."""
    psi = np.asarray(psi, dtype=complex)
    if not np.any(psi):
        raise DomainError("field vanishes everywhere")
    return _velocity(psi, grid.dx, constants.m_star, constants.hbar, source, threshold)


def velocity_2d(amplitudes, grid, qgrid, constants=DEFAULT_CONSTANTS,
                source="from_phase_gradient", threshold=NODE_THRESHOLD):
    """(v_x, v_q) of Psi(x, q); the quadrature carries unit mass."""
    psi = np.asarray(amplitudes, dtype=complex)
    if not np.any(psi):
        raise DomainError("field vanishes everywhere")
    vx = _velocity(psi, grid.dx, constants.m_star, constants.hbar, source, threshold, axis=0)
    vq = _velocity(psi, qgrid.dq, 1.0, constants.hbar, source, threshold, axis=1)
    return vx, vq


def _interp_1d(values, origin, step, pos):
    s = (pos - origin) / step
    i = np.clip(np.floor(s).astype(int), 0, len(values) - 2)
    w = s - i
    return (1 - w) * values[i] + w * values[i + 1]


def _interp_2d(values, x_origin, dx, q_origin, dq, xs, qs):
    sx = (xs - x_origin) / dx
    sq = (qs - q_origin) / dq
    i = np.clip(np.floor(sx).astype(int), 0, values.shape[0] - 2)
    k = np.clip(np.floor(sq).astype(int), 0, values.shape[1] - 2)
    wx, wq = sx - i, sq - k
    return ((1 - wx) * (1 - wq) * values[i, k] + wx * (1 - wq) * values[i + 1, k]
            + (1 - wx) * wq * values[i, k + 1] + wx * wq * values[i + 1, k + 1])


class GuidanceField2D:
    """Lazy (v_x, v_q) of Psi(x, q) evaluated only around query points.

    ``accessor(I, K)`` returns Psi at broadcast integer index arrays.  The
    velocities at the four nodes surrounding each query point use the same
    phase-gradient stencil as :func:`velocity_2d` and are then bilinearly
    interpolated, so results equal the full-grid evaluation in the interior.
    """

    def __init__(self, accessor, grid, qgrid, density_max, constants=DEFAULT_CONSTANTS,
                 threshold=NODE_THRESHOLD):
        self.accessor = accessor
        self.grid = grid
        self.qgrid = qgrid
        self.cut = threshold * density_max
        self.constants = constants

    @classmethod
    def from_amplitudes(cls, amplitudes, grid, qgrid, constants=DEFAULT_CONSTANTS, **kw):
        amp = np.asarray(amplitudes)
        dmax = float(np.max(np.abs(amp) ** 2))
        return cls(lambda i, k: amp[i, k], grid, qgrid, dmax, constants, **kw)

    @classmethod
    def from_channels(cls, psi_a, psi_b, psi0, psi1, grid, qgrid,
                      constants=DEFAULT_CONSTANTS, **kw):
        """Psi = psi_A(x) psi0(q) + psi_B(x) psi1(q).

        The node threshold uses the cheap upper bound
        (max|psi_A| max|psi0| + max|psi_B| max|psi1|)^2 for max |Psi|^2.
        """
        bound = (np.max(np.abs(psi_a)) * np.max(np.abs(psi0))
                 + np.max(np.abs(psi_b)) * np.max(np.abs(psi1)))
        dmax = float(bound ** 2)

        def accessor(i, k):
            return psi_a[i] * psi0[k] + psi_b[i] * psi1[k]
        return cls(accessor, grid, qgrid, dmax, constants, **kw)

    def at(self, xs, qs):
        g, qg = self.grid, self.qgrid
        sx = (xs - g.x_min) / g.dx
        sq = (qs - qg.q_min) / qg.dq
        i = np.clip(np.floor(sx).astype(int), 1, g.n_x - 3)
        k = np.clip(np.floor(sq).astype(int), 1, qg.n_q - 3)
        wx, wq = (sx - i)[:, None, None], (sq - k)[:, None, None]
        # 4x4 patch of Psi around each point: rows i-1..i+2, columns k-1..k+2
        off = np.arange(-1, 3)
        patch = self.accessor((i[:, None] + off)[:, :, None], (k[:, None] + off)[:, None, :])
        core = patch[:, 1:3, 1:3]
        dens = np.abs(core) ** 2
        hb = self.constants.hbar
        vx = _phase_increment(patch[:, 0:2, 1:3], core, patch[:, 2:4, 1:3], g.dx)
        vq = _phase_increment(patch[:, 1:3, 0:2], core, patch[:, 1:3, 2:4], qg.dq)
        vx = np.where(dens >= self.cut, vx * hb / self.constants.m_star, np.nan)
        vq = np.where(dens >= self.cut, vq * hb, np.nan)

        def bilinear(v):
            return ((1 - wx) * (1 - wq) * v[:, 0:1, 0:1] + wx * (1 - wq) * v[:, 1:2, 0:1]
                    + (1 - wx) * wq * v[:, 0:1, 1:2] + wx * wq * v[:, 1:2, 1:2])[:, 0, 0]
        return bilinear(vx), bilinear(vq)


def _evaluate(fields, grid, qgrid, xs, qs=None):
    if qs is None:
        return _interp_1d(fields.v, grid.x_min, grid.dx, xs)
    if hasattr(fields, "at"):
        return fields.at(xs, qs)
    vx, vq = fields
    args = (grid.x_min, grid.dx, qgrid.q_min, qgrid.dq, xs, qs)
    return _interp_2d(vx.v, *args), _interp_2d(vq.v, *args)


def advance_trajectories(ens, fields_t, fields_next, dt, grid, qgrid=None):
    """Explicit-midpoint step of every trajectory.

    ``fields_t`` / ``fields_next`` describe the guidance at t and t + dt:
    a VelocityField (1D), a (v_x, v_q) pair of VelocityFields or a
    :class:`GuidanceField2D` (2D).  The midpoint velocity is linear in time,
    i.e. the mean of both fields at the predicted midpoint.  Where a
    velocity is undefined (near a node) the trajectory keeps its previous
    velocity.  Positions are clamped to the grid interior.
    """
    lo, hi = grid.x_min + grid.dx, grid.x_max - grid.dx
    if not ens.is_2d:
        k1 = _evaluate(fields_t, grid, qgrid, ens.x)
        k1 = np.where(np.isfinite(k1), k1, ens.vx)
        xm = np.clip(ens.x + 0.5 * dt * k1, lo, hi)
        k2 = 0.5 * (_evaluate(fields_t, grid, qgrid, xm) + _evaluate(fields_next, grid, qgrid, xm))
        k2 = np.where(np.isfinite(k2), k2, k1)
        ens.x = np.clip(ens.x + dt * k2, lo, hi)
        ens.vx = k2
    else:
        qlo, qhi = qgrid.q_min + qgrid.dq, qgrid.q_max - qgrid.dq
        kx, kq = _evaluate(fields_t, grid, qgrid, ens.x, ens.q)
        kx = np.where(np.isfinite(kx), kx, ens.vx)
        kq = np.where(np.isfinite(kq), kq, ens.vq)
        xm = np.clip(ens.x + 0.5 * dt * kx, lo, hi)
        qm = np.clip(ens.q + 0.5 * dt * kq, qlo, qhi)
        ax, aq = _evaluate(fields_t, grid, qgrid, xm, qm)
        bx, bq = _evaluate(fields_next, grid, qgrid, xm, qm)
        mx, mq = 0.5 * (ax + bx), 0.5 * (aq + bq)
        mx = np.where(np.isfinite(mx), mx, kx)
        mq = np.where(np.isfinite(mq), mq, kq)
        ens.x = np.clip(ens.x + dt * mx, lo, hi)
        ens.q = np.clip(ens.q + dt * mq, qlo, qhi)
        ens.vx, ens.vq = mx, mq
    ens.t += dt
    return ens


def slice_bcwf(amplitudes, qgrid, Q):
    """Conditional wave function psi(x) = Psi(x, Q), linear in q; unnormalised."""
    if not (qgrid.q_min <= Q <= qgrid.q_max):
        raise DomainError(f"Q = {Q:g} lies outside the quadrature grid")
    s = (Q - qgrid.q_min) / qgrid.dq
    k = min(int(np.floor(s)), qgrid.n_q - 2)
    w = s - k
    return (1 - w) * amplitudes[:, k] + w * amplitudes[:, k + 1]


def ramo_current(x, v, L, e_charge=1.0):
    """Per-experiment current I_j = (e / L) v_j if |x_j| <= L/2, else 0."""
    if L <= 0:
        raise DomainError("device length must be positive")
    x, v = np.asarray(x, dtype=float), np.asarray(v, dtype=float)
    inside = np.abs(x) <= 0.5 * L
    return np.where(inside, e_charge / L * v, 0.0)


def transport_positions(x, density_before, density_after, axis):
    """Quantile-preserving map of 1D positions across a sudden change of |psi|^2.

    Non-crossing 1D Bohmian flow keeps every trajectory at a fixed quantile of
    the density, so an instantaneous transition is continued by
    x -> F_after^{-1}(F_before(x)).  Identical densities give the identity.
    """
    x = np.asarray(x, dtype=float)
    step = axis[1] - axis[0]
    before = _cdf(np.asarray(density_before, dtype=float), step)
    after = _cdf(np.asarray(density_after, dtype=float), step)
    if np.allclose(before, after, rtol=0.0, atol=1e-13):
        return x.copy()
    return _inverse_cdf(after, axis, np.interp(x, axis, before))


def ks_statistic(samples, density, axis):
    """Kolmogorov-Smirnov distance between samples and a gridded density."""
    samples = np.sort(np.asarray(samples, dtype=float))
    cdf = _cdf(np.asarray(density, dtype=float), axis[1] - axis[0])
    f = np.interp(samples, axis, cdf)
    n = len(samples)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(n) / n
    return float(max(upper.max(), lower.max()))


def ks_bound(W, c=1.63):
    """1% critical value of the one-sample KS statistic (asymptotic)."""
    return c / np.sqrt(W)
