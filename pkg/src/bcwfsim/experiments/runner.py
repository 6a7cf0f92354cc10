"""
Scenario execution: propagation, scattering events, Bohmian ensembles and
observable extraction, written to a run directory.
"""

import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .. import bohmian as bm
from ..errors import ConfigurationError, SimulationError
from ..evolution import (CouplingParams, CrankNicolson, JointPropagator2D, JointState2D,
                         TwoChannelPropagator, TwoChannelState, expectation_energy,
                         polynomial_cap, product_state, project_channels)
from ..grid_potential import (DEFAULT_CONSTANTS, QuadratureGrid, SpatialGrid,
                              build_double_barrier, build_flat, build_gaussian_packet,
                              build_photon_states, l2_norm)
from ..scattering import (ScatteringEvent, TransitionError, _energy_shift, apply_event,
                          energy_support, resolve_momentum)
from ..spectral import build_energy_basis, project_energy, resonance_search, transmission_spectrum
from . import io
from .observables import (PopulationSeries, level_populations, rabi_period_estimate,
                          well_dipole)
from .scenario import validate_scenario


class StageError(SimulationError):
    """A run failed; ``stage`` names the pipeline step."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


@dataclass
class RunResult:
    spec: object
    out_dir: str
    resonances: list
    e_split: float
    populations: PopulationSeries = None
    diagnostics: np.ndarray = None
    equivariance: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    event_fields: list = field(default_factory=list)
    final_state: object = None
    ensemble: object = None
    summary: dict = field(default_factory=dict)


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


# ---------------------------------------------------------------------------
# set-up


@dataclass
class Setup:
    spec: object
    grid: SpatialGrid
    potential: object
    constants: object
    resonances: list
    e_split: float
    packet_energy: float
    basis: object = None
    coupling: CouplingParams = None
    qgrid: QuadratureGrid = None
    photon_states: tuple = None
    cap: np.ndarray = None


def _resolve(token, resonances, key):
    if not isinstance(token, str):
        return float(token)
    if len(resonances) < 2:
        raise ConfigurationError(f"token {token!r} needs two resonances, found "
                                 f"{len(resonances)}", key)
    e1, e2 = resonances[:2]
    return {"E1": e1, "E2": e2, "E2-E1": e2 - e1}[token]


def prepare(spec, constants=DEFAULT_CONSTANTS):
    """Build grid, potential, resonances, basis and photon sector for a spec."""
    with _Stage("configuration"):
        validate_scenario(spec)
        grid = SpatialGrid(spec.grid.x_min_nm, spec.grid.x_max_nm, spec.grid.n_x)
    with _Stage("potential"):
        p = spec.potential
        if p.kind == "flat":
            potential = build_flat(grid, p.level_eV)
        else:
            potential = build_double_barrier(grid, p.well_width_nm, p.barrier_thickness_nm,
                                             p.barrier_height_eV)
    with _Stage("resonances"):
        resonances = []
        top = float(np.max(potential.values))
        if top > 0:
            resonances = resonance_search(potential, (0.002, top), 1e-4, constants)
        e_split = 0.5 * (resonances[0] + resonances[1]) if len(resonances) >= 2 else float("nan")
        energy = _resolve(spec.packet.energy_eV, resonances, "packet.energy_eV")
    setup = Setup(spec, grid, potential, constants, resonances, e_split, energy)
    with _Stage("basis"):
        b = spec.basis
        setup.basis = build_energy_basis(potential, b.e_min_eV, b.e_max_eV, b.dE_eV, constants)
    if spec.photon.enabled:
        with _Stage("photon"):
            ph = spec.photon
            hw = _resolve(ph.hbar_omega_eV, resonances, "photon.hbar_omega_eV")
            half = ph.coupling_halfwidth_nm
            if half is None:
                half = potential.active_halfwidth
            if half is None:
                raise ConfigurationError("flat potentials need an explicit coupling region",
                                         "photon.coupling_halfwidth_nm")
            coupling = CouplingParams.from_si(ph.alpha_eV_per_m, hw, constants,
                                              halfwidth=half, taper=ph.coupling_taper_nm)
            qgrid = QuadratureGrid.for_frequency(coupling.omega, constants.hbar, ph.q_extent,
                                                 ph.n_q)
            setup.photon_states = build_photon_states(qgrid, coupling.omega, constants.hbar)
            setup.coupling = coupling.with_quadrature(qgrid, constants)
            setup.qgrid = qgrid
    if spec.run.cap:
        setup.cap = polynomial_cap(grid, spec.run.cap_width_nm, spec.run.cap_strength_eV)
    return setup


def _events(spec, resonances):
    out = []
    for ev in sorted(spec.events, key=lambda e: e.t_s_fs):
        eg = None if ev.E_gamma_eV is None else _resolve(ev.E_gamma_eV, resonances,
                                                          "scattering.E_gamma_eV")
        out.append(ScatteringEvent(ev.t_s_fs, ev.model, ev.kind, eg, ev.p_gamma, ev.N_ts))
    return out


# ---------------------------------------------------------------------------
# solver adapters


class _Solver1D:
    kind = "1d"

    def __init__(self, setup, psi):
        self.s = setup
        self.prop = CrankNicolson(setup.potential, setup.spec.run.dt_fs, setup.constants, setup.cap)
        self.state = psi

    def step(self):
        self.state = self.prop.step(self.state)

    def density_x(self):
        return np.abs(self.state) ** 2

    def channels(self):
        return TwoChannelState(self.state, np.zeros_like(self.state))

    def guidance(self, state=None):
        psi = self.state if state is None else state
        return bm.velocity_1d(psi, self.s.grid, self.s.constants)

    def energy(self):
        return expectation_energy(self.state, self.prop)

    def norms(self):
        return float(np.sum(np.abs(self.state) ** 2) * self.s.grid.dx), 0.0


class _SolverTwoChannel(_Solver1D):
    kind = "two_channel"

    def __init__(self, setup, psi):
        self.s = setup
        self.prop = TwoChannelPropagator(setup.potential, setup.coupling, setup.spec.run.dt_fs,
                                         setup.constants, setup.cap)
        self.state = TwoChannelState(psi, np.zeros_like(psi))

    def density_x(self):
        return np.abs(self.state.psi_A) ** 2 + np.abs(self.state.psi_B) ** 2

    def density_2d(self):
        p0, p1 = self.s.photon_states
        return np.abs(np.outer(self.state.psi_A, p0) + np.outer(self.state.psi_B, p1)) ** 2

    def channels(self):
        return self.state

    def guidance(self, state=None):
        st = self.state if state is None else state
        p0, p1 = self.s.photon_states
        return bm.GuidanceField2D.from_channels(st.psi_A, st.psi_B, p0, p1, self.s.grid,
                                                self.s.qgrid, self.s.constants)

    def joint_amplitudes(self):
        p0, p1 = self.s.photon_states
        return np.outer(self.state.psi_A, p0) + np.outer(self.state.psi_B, p1)

    def energy(self):
        return self.prop.energy(self.state)

    def norms(self):
        return self.state.norms(self.s.grid.dx)


class _SolverJoint(_SolverTwoChannel):
    kind = "joint_2d"

    def __init__(self, setup, psi):
        self.s = setup
        self.prop = JointPropagator2D(setup.potential, setup.coupling, setup.qgrid,
                                      setup.spec.run.dt_fs, setup.constants, setup.cap)
        self.state = product_state(psi, setup.photon_states[0], setup.qgrid)
        self.residual = 0.0

    def density_x(self):
        return np.sum(np.abs(self.state.amplitudes) ** 2, axis=1) * self.s.qgrid.dq

    def density_2d(self):
        return np.abs(self.state.amplitudes) ** 2

    def channels(self):
        p0, p1 = self.s.photon_states
        st, self.residual = project_channels(self.state, p0, p1, self.s.grid.dx)
        return st

    def guidance(self, state=None):
        st = self.state if state is None else state
        return bm.GuidanceField2D.from_amplitudes(st.amplitudes, self.s.grid, self.s.qgrid,
                                                  self.s.constants)

    def joint_amplitudes(self):
        return self.state.amplitudes

    def norms(self):
        st = self.channels()
        na, nb = st.norms(self.s.grid.dx)
        return na, nb


SOLVER_CLASSES = {"1d": _Solver1D, "two_channel": _SolverTwoChannel, "joint_2d": _SolverJoint}


# ---------------------------------------------------------------------------
# main pipeline


def _tag(t):
    return f"t{t:07.1f}fs"


def _device_length(setup):
    half = setup.potential.active_halfwidth
    if half is None:
        return setup.grid.x_max - setup.grid.x_min
    return 2.0 * half


def run_scenario(spec, out_dir, constants=DEFAULT_CONSTANTS, keep_fields=False):
    """Execute ``spec`` and write its outputs into ``out_dir``.

    Any failure is re-raised as :class:`StageError` naming the pipeline
    stage; a summary marked ``status = failed`` is left in ``out_dir``.
    """
    os.makedirs(out_dir, exist_ok=True)
    started = time.perf_counter()
    try:
        result = _run(spec, out_dir, constants, keep_fields, started)
    except StageError as exc:
        _write_failure(out_dir, spec, exc)
        raise
    except Exception as exc:            # pragma: no cover - defensive
        err = StageError("internal", exc)
        _write_failure(out_dir, spec, err)
        raise err from exc
    return result


def _write_failure(out_dir, spec, exc):
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"scenario = {spec.name}\nstatus = failed\nfailed_stage = {exc.stage}\n"
                 f"error = {exc.cause}\npartial_outputs = true\n")


def _run(spec, out_dir, constants, keep_fields, started):
    setup = prepare(spec, constants)
    grid, run = setup.grid, spec.run
    dt = run.dt_fs
    n_steps = int(round(run.t_end_fs / dt))
    obs_every = max(1, int(round(run.observe_every_fs / dt)))
    snap_every = max(1, int(round(run.snapshot_every_fs / dt)))
    with _Stage("initial_state"):
        pk = spec.packet
        psi0 = build_gaussian_packet(grid, pk.x0_nm, pk.sigma_nm, setup.packet_energy,
                                     pk.direction, setup.potential, constants)
        solver = SOLVER_CLASSES[run.solver](setup, psi0)
        events = _events(spec, setup.resonances)
    result = RunResult(spec, out_dir, setup.resonances, setup.e_split)
    two_d = run.solver != "1d"
    with _Stage("trajectories"):
        if two_d:
            xs, qs = bm.sample_quantum_equilibrium(solver.density_2d(),
                                                   (grid.x, setup.qgrid.q), run.W, run.seed)
            ens = bm.TrajectoryEnsemble(xs, qs, seed=run.seed)
        else:
            xs = bm.sample_quantum_equilibrium(solver.density_x(), grid.x, run.W, run.seed)
            ens = bm.TrajectoryEnsemble(xs, seed=run.seed)
        initial_ks = bm.ks_statistic(ens.x, solver.density_x(), grid.x)
    pops = PopulationSeries() if len(setup.resonances) >= 2 else None
    diag_rows = []
    traj_rows, current_rows, bcwf_rows = [], [], []
    n_out = min(run.trajectories_out, run.W)
    device_L = _device_length(setup)
    basis = setup.basis
    e0 = solver.energy()
    norm0 = sum(solver.norms())
    coeff_t0 = project_energy(psi0, basis).weights
    max_out_span = 0.0
    max_energy_drift = 0.0

    def observe(n):
        nonlocal max_out_span, max_energy_drift
        t = n * dt
        with _Stage("observables"):
            st = solver.channels()
            na, nb = solver.norms()
            energy = solver.energy()
            if setup.cap is None and not events:
                max_energy_drift = max(max_energy_drift, abs(energy - e0) / abs(e0))
            residual2 = getattr(solver, "residual", 0.0) ** 2
            max_out_span = max(max_out_span, residual2)
            diag_rows.append((t, na + nb, nb, energy, residual2))
            if pops is not None:
                try:
                    p, total = level_populations(st, basis, setup.e_split, with_norm=True)
                except SimulationError:
                    p, total = (float("nan"),) * 4, 0.0
                pops.append(t, p, total)
        for j in range(n_out):
            row = (t, j, ens.x[j]) + ((ens.q[j],) if two_d else ())
            traj_rows.append(row)
        current = bm.ramo_current(ens.x, ens.vx, device_L, constants.e_charge)
        for j in range(n_out):
            current_rows.append((t, j, current[j]))
        current_rows.append((t, -1, float(np.mean(current))))

    def snapshot(n):
        t = n * dt
        with _Stage("output"):
            dens = solver.density_x()
            io.write_columns(os.path.join(out_dir, f"presence_{_tag(t)}.csv"),
                             ["x_nm", "P_e"], [grid.x, dens])
            if run.solver == "joint_2d":
                io.write_joint_snapshot(os.path.join(out_dir, f"snapshot_{_tag(t)}.bin"),
                                        solver.state.amplitudes, t, grid.x_min, grid.dx,
                                        setup.qgrid.q_min, setup.qgrid.dq)
            else:
                st = solver.channels()
                io.write_columns(os.path.join(out_dir, f"snapshot_{_tag(t)}.csv"),
                                 ["x_nm", "re_psiA", "im_psiA", "re_psiB", "im_psiB"],
                                 [grid.x, st.psi_A.real, st.psi_A.imag,
                                  st.psi_B.real, st.psi_B.imag])
        with _Stage("trajectories"):
            ks = bm.ks_statistic(ens.x, dens, grid.x)
            result.equivariance.append((t, ks, 2 * bm.ks_bound(run.W)))
            if two_d:
                amp = solver.joint_amplitudes()
                q = float(np.clip(ens.q[0], setup.qgrid.q_min, setup.qgrid.q_max))
                cond = bm.slice_bcwf(amp, setup.qgrid, q)
                nrm = l2_norm(cond, grid.dx)
                if nrm > 0:
                    c = project_energy(cond / nrm, basis)
                    for e, w in zip(c.energies, c.weights):
                        bcwf_rows.append((t, q, e, w))

    # ---- time loop --------------------------------------------------------
    guide = solver.guidance()
    event_iter = iter(events)
    pending = next(event_iter, None)
    active = None                   # (event, remaining substeps, half propagator, p)
    observe(0)
    snapshot(0)
    ens.record()
    for n in range(n_steps):
        t = n * dt
        if pending is not None and active is None:
            start = int(round(pending.t_s / dt)) - (pending.N_ts // 2 if pending.N_ts > 1 else 0)
            if n >= start:
                if pending.N_ts == 1:
                    guide = _instant_event(solver, pending, setup, ens, result, coeff_t0,
                                           keep_fields)
                else:
                    active = _GradualEvent(pending, solver, setup)
                pending = next(event_iter, None) if active is None else pending
        if active is not None:
            guide = active.substep(solver, ens, guide)
            if active.done:
                active.finish(solver, setup, result, coeff_t0, keep_fields)
                active = None
                pending = next(event_iter, None)
        else:
            with _Stage("propagation"):
                solver.step()
            with _Stage("trajectories"):
                nxt = solver.guidance()
                bm.advance_trajectories(ens, guide, nxt, dt, grid, setup.qgrid)
                guide = nxt
        if (n + 1) % obs_every == 0:
            observe(n + 1)
            ens.record()
        if (n + 1) % snap_every == 0:
            snapshot(n + 1)
    if pending is not None or active is not None:
        raise StageError("scattering", ConfigurationError(
            "event did not complete before t_end", "scattering.t_s_fs"))

    # ---- outputs ----------------------------------------------------------
    with _Stage("output"):
        if pops is not None:
            io.write_columns(os.path.join(out_dir, "populations.csv"),
                             ["t_fs", "P_A1", "P_A2", "P_B1", "P_B2", "N_active"],
                             pops.as_array().T)
        result.populations = pops
        diag = np.array(diag_rows)
        result.diagnostics = diag
        io.write_columns(os.path.join(out_dir, "diagnostics.csv"),
                         ["t_fs", "norm", "norm_B", "energy_eV", "out_of_span"], diag.T)
        io.write_csv(os.path.join(out_dir, "trajectories.csv"),
                     ["t_fs", "experiment_id", "x_nm"] + (["q"] if two_d else []), traj_rows)
        io.write_csv(os.path.join(out_dir, "current.csv"),
                     ["t_fs", "experiment_id", "I_arb"], current_rows)
        io.write_csv(os.path.join(out_dir, "equivariance.csv"),
                     ["t_fs", "ks", "bound", "pass"],
                     [(t, k, b, int(k < b)) for t, k, b in result.equivariance])
        if bcwf_rows:
            io.write_csv(os.path.join(out_dir, "bcwf_spectra.csv"),
                         ["t_fs", "Q", "E_eV", "weight"], bcwf_rows)
        if not setup.potential.is_flat:
            e_lv = np.arange(basis.e_min, basis.e_max + 0.5 * basis.dE, basis.dE)
            _, tt, rr = transmission_spectrum(setup.potential, e_lv, constants=constants)
            io.write_columns(os.path.join(out_dir, "spectrum.csv"), ["E_eV", "T", "R"],
                             [e_lv, tt, rr])
        if result.reports:
            header = ["t_s_fs", "model", "kind", "E_gamma_eV", "p_gamma_per_nm",
                      "pre_mean_energy_eV", "post_mean_energy_eV", "leaked_probability",
                      "pre_negative_branch_weight", "negative_branch_weight",
                      "pre_support_eV", "post_support_eV"]
            io.write_csv(os.path.join(out_dir, "transition_report.csv"), header,
                         [r["row"] for r in result.reports])
            for k, rec in enumerate(result.reports):
                io.write_columns(os.path.join(out_dir, f"energy_distribution_{k}.csv"),
                                 ["E_eV", "weight_t0", "weight_pre", "weight_post"],
                                 [basis.energies, coeff_t0, rec["pre_weights"],
                                  rec["post_weights"]])
        result.final_state = solver.state
        result.ensemble = ens
        summary = {
            "scenario": spec.name,
            "status": "ok",
            "solver": run.solver,
            "potential": spec.potential.kind,
            "m_star_eV_fs2_nm2": constants.m_star,
            "resonances_eV": " ".join(f"{e:.6f}" for e in setup.resonances),
            "E_split_eV": setup.e_split,
            "packet_energy_eV": setup.packet_energy,
            "steps": n_steps,
            "dt_fs": dt,
            "t_end_fs": n_steps * dt,
            "W": run.W,
            "seed": run.seed,
            "norm_initial": norm0,
            "norm_final": sum(solver.norms()),
            "norm_drift": abs(sum(solver.norms()) - norm0),
            "energy_initial_eV": e0,
            "energy_final_eV": solver.energy(),
            "max_relative_energy_drift": max_energy_drift,
            "initial_ks": initial_ks,
            "max_ks": max(k for _, k, _ in result.equivariance),
            "ks_bound": 2 * bm.ks_bound(run.W),
            "basis_states": len(basis.energies),
        }
        if setup.coupling is not None:
            x12 = well_dipole(setup.potential, constants=constants) \
                if setup.potential.active_halfwidth else float("nan")
            summary.update({
                "hbar_omega_eV": setup.coupling.hbar_omega(constants),
                "alpha_eV_per_nm": setup.coupling.alpha,
                "alpha_prime": setup.coupling.alpha_prime,
                "coupling_halfwidth_nm": setup.coupling.halfwidth,
                "dipole_x12_nm": x12,
                "rabi_period_estimate_fs": rabi_period_estimate(setup.coupling.alpha, x12,
                                                                constants.hbar),
                "max_B_norm": float(np.max(diag[:, 2])),
            })
        if run.solver == "joint_2d":
            summary["max_out_of_span"] = max_out_span
        for k, rec in enumerate(result.reports):
            for key, value in zip(["t_s_fs", "model", "kind", "E_gamma_eV", "p_gamma_per_nm",
                                   "pre_mean_energy_eV", "post_mean_energy_eV",
                                   "leaked_probability", "pre_negative_branch_weight",
                                   "negative_branch_weight", "pre_support_eV",
                                   "post_support_eV"], rec["row"]):
                summary[f"event{k}.{key}"] = value
        summary["runtime_s"] = round(time.perf_counter() - started, 2)
        result.summary = summary
        with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
            for key, value in summary.items():
                fh.write(f"{key} = {io._fmt(value)}\n")
    return result


def _record_event(event, pre, post, report, setup, result, keep_fields, t):
    cp, cq = project_energy(pre, setup.basis), project_energy(post, setup.basis)
    p = report.p_gamma
    row = (t, event.model, event.kind,
           float("nan") if event.E_gamma is None else event.E_gamma,
           p, report.pre_mean_energy, report.post_mean_energy, report.leaked_probability,
           report.pre_negative_branch_weight, report.negative_branch_weight,
           energy_support(cp), energy_support(cq))
    result.reports.append({"report": report, "row": row, "pre_weights": cp.weights,
                           "post_weights": cq.weights})
    if keep_fields:
        result.event_fields.append((t, pre.copy(), post.copy()))


def _instant_event(solver, event, setup, ens, result, coeff_t0, keep_fields):
    grid = setup.grid
    pre = solver.state
    with _Stage("scattering"):
        post, report = apply_event(pre, event, grid, setup.basis, setup.constants)
    with _Stage("trajectories"):
        ens.x = bm.transport_positions(ens.x, np.abs(pre) ** 2, np.abs(post) ** 2, grid.x)
    solver.state = post
    _record_event(event, pre, post, report, setup, result, keep_fields, event.t_s)
    return solver.guidance()


class _GradualEvent:
    """Event spread over N_ts steps: half step, partial shift, half step."""

    def __init__(self, event, solver, setup):
        self.event = event
        self.remaining = event.N_ts
        self.start = solver.state.copy()
        self.half = CrankNicolson(setup.potential, 0.5 * setup.spec.run.dt_fs, setup.constants,
                                  setup.cap)
        self.setup = setup
        self.p = None
        if event.model == "B":
            self.p = resolve_momentum(event, solver.state, setup.basis, setup.grid,
                                      setup.constants) / event.N_ts
        self.leaked = 0.0

    @property
    def done(self):
        return self.remaining == 0

    def substep(self, solver, ens, guide):
        s = self.setup
        grid, hdt = s.grid, 0.5 * s.spec.run.dt_fs
        with _Stage("scattering"):
            mid = self.half.step(solver.state)
            if self.event.model == "A":
                shifted, _, lk = _energy_shift(mid, s.basis, self.event.energy_shift / self.event.N_ts)
                self.leaked += lk
            else:
                shifted = mid * np.exp(1j * self.p * grid.x)
            new = self.half.step(shifted)
        with _Stage("trajectories"):
            g_mid = solver.guidance(mid)
            bm.advance_trajectories(ens, guide, g_mid, hdt, grid)
            ens.x = bm.transport_positions(ens.x, np.abs(mid) ** 2, np.abs(shifted) ** 2, grid.x)
            g_shift = solver.guidance(shifted)
            g_new = solver.guidance(new)
            bm.advance_trajectories(ens, g_shift, g_new, hdt, grid)
        solver.state = new
        self.remaining -= 1
        return g_new

    def finish(self, solver, setup, result, coeff_t0, keep_fields):
        from ..scattering import TransitionReport
        pre, post = self.start, solver.state
        if self.leaked > 0.2:
            raise StageError("scattering", TransitionError(
                f"{100 * self.leaked:.1f}% of the packet left the basis band"))
        cp, cq = project_energy(pre, setup.basis), project_energy(post, setup.basis)
        report = TransitionReport(self.event.model, cp.folded_mean(), cq.folded_mean(),
                                  min(self.leaked, 1.0), cq.negative_weight(),
                                  cp.negative_weight(),
                                  float("nan") if self.p is None else self.p * self.event.N_ts)
        _record_event(self.event, pre, post, report, setup, result, keep_fields, self.event.t_s)


def with_seed(spec, seed):
    return replace(spec, run=replace(spec.run, seed=int(seed)))
