"""
Scenario description and the flat ``key = value`` scenario file format.

Each line holds one ``section.key = value`` pair; ``#`` starts a comment.
Numbers may be written in any Python float syntax.  A few values accept
symbolic tokens resolved at run time from the potential's resonances:
``packet.energy_eV`` accepts ``E1``/``E2`` and ``photon.hbar_omega_eV`` and
``scattering.E_gamma_eV`` accept ``E2-E1``.
"""

from dataclasses import dataclass, field, fields, replace

from ..errors import ConfigurationError
from ..scattering import KINDS, MODELS

SOLVERS = ("1d", "two_channel", "joint_2d")
POTENTIALS = ("flat", "double_barrier")
SYMBOLIC = ("E1", "E2", "E2-E1")


@dataclass(frozen=True)
class GridSpec:
    x_min_nm: float = -250.0
    x_max_nm: float = 250.0
    n_x: int = 2001


@dataclass(frozen=True)
class PotentialSpec:
    kind: str = "double_barrier"
    well_width_nm: float = 10.0
    barrier_thickness_nm: float = 2.0
    barrier_height_eV: float = 0.5
    level_eV: float = 0.0


@dataclass(frozen=True)
class PacketSpec:
    x0_nm: float = -100.0
    sigma_nm: float = 30.0
    energy_eV: object = "E2"
    direction: str = "left_to_right"


@dataclass(frozen=True)
class PhotonSpec:
    enabled: bool = False
    hbar_omega_eV: object = "E2-E1"
    alpha_eV_per_m: float = 2.5e7
    n_q: int = 128
    q_extent: float = 8.0
    coupling_halfwidth_nm: float = None
    coupling_taper_nm: float = 1.0


@dataclass(frozen=True)
class EventSpec:
    model: str = "A"
    kind: str = "absorption"
    t_s_fs: float = 150.0
    E_gamma_eV: object = None
    p_gamma: float = None
    N_ts: int = 1


@dataclass(frozen=True)
class BasisSpec:
    e_min_eV: float = 0.002
    e_max_eV: float = 1.5
    dE_eV: float = 1e-3


@dataclass(frozen=True)
class RunSpec:
    solver: str = "1d"
    t_end_fs: float = 400.0
    dt_fs: float = 0.1
    snapshot_every_fs: float = 50.0
    observe_every_fs: float = 1.0
    W: int = 2000
    seed: int = 0
    trajectories_out: int = 10
    cap: bool = False
    cap_width_nm: float = 40.0
    cap_strength_eV: float = 0.05


@dataclass(frozen=True)
class ScenarioSpec:
    name: str = "scenario"
    grid: GridSpec = field(default_factory=GridSpec)
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    packet: PacketSpec = field(default_factory=PacketSpec)
    photon: PhotonSpec = field(default_factory=PhotonSpec)
    events: tuple = ()
    basis: BasisSpec = field(default_factory=BasisSpec)
    run: RunSpec = field(default_factory=RunSpec)

    def with_run(self, **kw):
        return replace(self, run=replace(self.run, **kw))


SECTIONS = {
    "grid": GridSpec,
    "potential": PotentialSpec,
    "packet": PacketSpec,
    "photon": PhotonSpec,
    "scattering": EventSpec,
    "basis": BasisSpec,
    "run": RunSpec,
}
# fields whose values may be symbolic tokens
SYMBOLIC_KEYS = {"packet.energy_eV", "photon.hbar_omega_eV", "scattering.E_gamma_eV"}
FIELD_TYPES = {
    name: {f.name: f.type for f in fields(cls)} for name, cls in SECTIONS.items()
}


def _convert(raw, key, default, line):
    if key in SYMBOLIC_KEYS and raw in SYMBOLIC:
        return raw
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigurationError(f"expected a boolean, got {raw!r}", key, line)
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigurationError(f"expected an integer, got {raw!r}", key, line) from None
    if isinstance(default, str) and key not in SYMBOLIC_KEYS:
        return raw
    if raw.lower() in ("none", ""):
        return None
    try:
        return float(raw)
    except ValueError:
        raise ConfigurationError(f"expected a number, got {raw!r}", key, line) from None


def parse_scenario(text, name="scenario"):
    """Parse scenario text into a :class:`ScenarioSpec` (not yet validated).

    Errors name the offending key and line number.
    """
    values = {section: {} for section in SECTIONS}
    event_given = False
    event_off = False
    name_value = name
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"expected 'key = value', got {line!r}", None, lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        if key == "name":
            name_value = raw
            continue
        section, _, attr = key.partition(".")
        if section not in SECTIONS or not attr:
            raise ConfigurationError("unknown key", key, lineno)
        if section == "scattering" and attr == "model" and raw.lower() == "none":
            event_off = True
            continue
        defaults = SECTIONS[section]()
        if attr not in FIELD_TYPES[section]:
            raise ConfigurationError("unknown key", key, lineno)
        if attr in values[section]:
            raise ConfigurationError("key given twice", key, lineno)
        default = getattr(defaults, attr)
        if default is None:
            # optional numeric fields
            default = 0.0 if attr != "N_ts" else 1
        values[section][attr] = _convert(raw, key, default, lineno)
        if section == "scattering":
            event_given = True
    events = ()
    if event_given and not event_off:
        try:
            events = (EventSpec(**values["scattering"]),)
        except TypeError as exc:
            raise ConfigurationError(str(exc), "scattering") from None
    spec = ScenarioSpec(
        name=name_value,
        grid=GridSpec(**values["grid"]),
        potential=PotentialSpec(**values["potential"]),
        packet=PacketSpec(**values["packet"]),
        photon=PhotonSpec(**values["photon"]),
        events=events,
        basis=BasisSpec(**values["basis"]),
        run=RunSpec(**values["run"]),
    )
    return spec


def load_scenario(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stem = str(path).replace("\\", "/").rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return parse_scenario(text, name=stem)


def validate_scenario(spec):
    """Structural checks that need no numerics; raises ConfigurationError."""
    g, p, pk, ph, r = spec.grid, spec.potential, spec.packet, spec.photon, spec.run
    if g.n_x < 3:
        raise ConfigurationError("need at least 3 grid nodes", "grid.n_x")
    if not g.x_max_nm > g.x_min_nm:
        raise ConfigurationError("x_max must exceed x_min", "grid.x_max_nm")
    if p.kind not in POTENTIALS:
        raise ConfigurationError(f"unknown potential kind {p.kind!r}", "potential.kind")
    if pk.direction not in ("left_to_right", "right_to_left"):
        raise ConfigurationError(f"unknown direction {pk.direction!r}", "packet.direction")
    if pk.sigma_nm <= 0:
        raise ConfigurationError("sigma must be positive", "packet.sigma_nm")
    if isinstance(pk.energy_eV, str) and pk.energy_eV not in ("E1", "E2"):
        raise ConfigurationError(f"unknown energy token {pk.energy_eV!r}", "packet.energy_eV")
    if isinstance(pk.energy_eV, float) and pk.energy_eV < 0:
        raise ConfigurationError("packet energy must be non-negative", "packet.energy_eV")
    if r.solver not in SOLVERS:
        raise ConfigurationError(f"unknown solver {r.solver!r}", "run.solver")
    if r.dt_fs <= 0:
        raise ConfigurationError("dt must be positive", "run.dt_fs")
    if r.t_end_fs <= 0:
        raise ConfigurationError("t_end must be positive", "run.t_end_fs")
    if r.observe_every_fs < r.dt_fs or r.snapshot_every_fs < r.dt_fs:
        raise ConfigurationError("output cadence shorter than dt", "run.observe_every_fs")
    if r.W < 1:
        raise ConfigurationError("W must be at least 1", "run.W")
    if r.trajectories_out < 0:
        raise ConfigurationError("must be non-negative", "run.trajectories_out")
    if r.solver != "1d" and not ph.enabled:
        raise ConfigurationError(f"solver {r.solver!r} needs photon.enabled = true", "run.solver")
    if r.solver == "1d" and ph.enabled:
        raise ConfigurationError("the photon mode needs solver two_channel or joint_2d",
                                 "photon.enabled")
    if ph.enabled:
        if isinstance(ph.hbar_omega_eV, float) and ph.hbar_omega_eV <= 0:
            raise ConfigurationError("photon energy must be positive", "photon.hbar_omega_eV")
        if isinstance(ph.hbar_omega_eV, str) and ph.hbar_omega_eV != "E2-E1":
            raise ConfigurationError(f"unknown token {ph.hbar_omega_eV!r}",
                                     "photon.hbar_omega_eV")
        if ph.n_q < 3:
            raise ConfigurationError("need at least 3 quadrature nodes", "photon.n_q")
    b = spec.basis
    if not (0 < b.e_min_eV < b.e_max_eV) or b.dE_eV <= 0:
        raise ConfigurationError("need 0 < e_min < e_max and dE > 0", "basis.e_min_eV")
    for ev in spec.events:
        if r.solver != "1d":
            raise ConfigurationError("scattering events need solver 1d", "scattering.model")
        if ev.model not in MODELS:
            raise ConfigurationError(f"unknown model {ev.model!r}", "scattering.model")
        if ev.kind not in KINDS:
            raise ConfigurationError(f"unknown kind {ev.kind!r}", "scattering.kind")
        if not (0 <= ev.t_s_fs < r.t_end_fs):
            raise ConfigurationError(
                f"t_s = {ev.t_s_fs:g} fs must lie in [0, t_end = {r.t_end_fs:g} fs)",
                "scattering.t_s_fs")
        if ev.N_ts < 1:
            raise ConfigurationError("N_ts must be at least 1", "scattering.N_ts")
        if ev.model == "A" and ev.E_gamma_eV is None:
            raise ConfigurationError("model A needs E_gamma_eV", "scattering.E_gamma_eV")
        if ev.model == "B" and ev.E_gamma_eV is None and ev.p_gamma is None:
            raise ConfigurationError("model B needs p_gamma or E_gamma_eV", "scattering.p_gamma")
        if isinstance(ev.E_gamma_eV, str) and ev.E_gamma_eV != "E2-E1":
            raise ConfigurationError(f"unknown token {ev.E_gamma_eV!r}", "scattering.E_gamma_eV")
        if isinstance(ev.E_gamma_eV, float) and ev.E_gamma_eV < 0:
            raise ConfigurationError("E_gamma must be non-negative", "scattering.E_gamma_eV")
    return spec


def format_scenario(spec):
    """Render a spec back into the file format (round-trips through parse)."""
    lines = [f"name = {spec.name}"]
    blocks = [("grid", spec.grid), ("potential", spec.potential), ("packet", spec.packet),
              ("photon", spec.photon), ("basis", spec.basis), ("run", spec.run)]
    blocks += [("scattering", ev) for ev in spec.events]
    for section, obj in blocks:
        for f in fields(obj):
            value = getattr(obj, f.name)
            if value is None:
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{section}.{f.name} = {value}")
    return "\n".join(lines) + "\n"
