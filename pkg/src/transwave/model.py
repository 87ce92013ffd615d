"""Network model, per-unit bases and disturbance vocabulary.

All types are frozen dataclasses and safe to share between concurrent
readers.  Electromechanical quantities are expressed on the system bases
(`SystemBases`), electromagnetic line constants stay in SI units with an
explicit unit length (`Line.len_unit_em`).

Conventions:
    - bus ids are dense integers 0..n-1
    - coordinates are planar km (no geographic projection)
    - `Line.length` is always km; `l_per_len`/`c_per_len` are per
      `len_unit_em` ("m" or "km")
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum

from .errors import TopologyError


class DisturbanceKind(str, Enum):
    GENERATION_TRIP = "generation_trip"
    LOAD_SHED = "load_shed"
    LINE_TRIP = "line_trip"
    FAULT = "fault"


@dataclass(frozen=True)
class SystemBases:
    """System-wide per-unit bases.

    Attributes:
        s_base: apparent power base [MVA]
        v_base: line voltage base [kV]
        f_nominal: nominal frequency [Hz]

    `omega_s` (rad/s) and `z_base` (ohm) are always derived, never stored.
    """

    s_base: float
    v_base: float
    f_nominal: float

    def __post_init__(self):
        for name in ("s_base", "v_base", "f_nominal"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SystemBases.{name} must be strictly positive")

    @property
    def omega_s(self) -> float:
        return 2.0 * math.pi * self.f_nominal

    @property
    def z_base(self) -> float:
        return self.v_base ** 2 / self.s_base


@dataclass(frozen=True)
class Bus:
    """One network bus: optional aggregated generator plus a local load.

    gen_rating is the per-machine rating [MW]; `coherent_count` machines
    are lumped coherently, so the aggregated bus capacity is
    gen_rating * coherent_count.
    """

    id: int
    coord: tuple[float, float]
    gen_rating: float | None = None       # MW per machine, None = no generator
    inertia_h: float | None = None        # s, per machine on its own rating
    coherent_count: int = 1
    load_p: float = 0.0                   # MW
    emf_pu: float = 1.0

    @property
    def has_generator(self) -> bool:
        return self.gen_rating is not None

    def aggregated_inertia(self, s_base: float) -> float:
        """Bus inertia constant [s] on the system base (H * Coh * G / S_base)."""
        if self.gen_rating is None or self.inertia_h is None:
            raise ValueError(f"bus {self.id} has no generator inertia data")
        return self.inertia_h * self.coherent_count * self.gen_rating / s_base


@dataclass(frozen=True)
class Line:
    """Transmission line between two buses.

    r_per_len [ohm/km] feeds the electromechanical engine (magnitude of the
    series impedance, treated as pure reactance).  l_per_len [H] and
    c_per_len [F] per `len_unit_em` feed the electromagnetic engine.  The
    two are stored independently; the stock presets are not mutually
    consistent and are kept as published.
    """

    from_bus: int
    to_bus: int
    length: float                         # km
    r_per_len: float                      # ohm/km
    l_per_len: float                      # H per len_unit_em
    c_per_len: float                      # F per len_unit_em
    len_unit_em: str = "m"                # "m" or "km"

    def length_em_units(self) -> float:
        if self.len_unit_em == "m":
            return self.length * 1000.0
        if self.len_unit_em == "km":
            return self.length
        raise ValueError(f"unknown len_unit_em {self.len_unit_em!r}")


@dataclass(frozen=True)
class NetworkModel:
    bases: SystemBases
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    def neighbors(self, bus: int) -> list[int]:
        out = []
        for ln in self.lines:
            if ln.from_bus == bus:
                out.append(ln.to_bus)
            elif ln.to_bus == bus:
                out.append(ln.from_bus)
        return out

    def degree(self, bus: int) -> int:
        return len(self.neighbors(bus))


@dataclass(frozen=True)
class DisturbanceSpec:
    """A typed event applied to a bus or a line.

    magnitude is MW for generation_trip/load_shed and the fault resistance
    in ohm for fault; line_trip carries no magnitude.  Only faults have a
    duration; the other kinds are permanent.
    """

    kind: DisturbanceKind
    bus: int | None = None
    line: tuple[int, int] | None = None
    t_onset: float = 0.0
    magnitude: float = 0.0
    duration: float | None = None

    def __post_init__(self):
        if self.t_onset < 0:
            raise ValueError("t_onset must be >= 0")
        if self.magnitude < 0:
            raise ValueError("magnitude must be >= 0")
        if self.kind == DisturbanceKind.FAULT:
            if self.duration is None or not self.duration > 0:
                raise ValueError("fault duration must be > 0")
        if self.kind == DisturbanceKind.LINE_TRIP:
            if self.line is None:
                raise ValueError("line_trip needs a line target")
        elif self.bus is None:
            raise ValueError(f"{self.kind.value} needs a bus target")

    @property
    def t_clear(self) -> float | None:
        if self.duration is None:
            return None
        return self.t_onset + self.duration


DEFAULT_FAULT_RESISTANCE = 1.0    # ohm
DEFAULT_FAULT_DURATION = 0.1      # s


DEFAULT_BASES = SystemBases(s_base=100.0, v_base=500.0, f_nominal=60.0)


def build_ring(n_buses: int, line_km: float, bus_template: Bus,
               line_template: Line, bases: SystemBases = DEFAULT_BASES) -> NetworkModel:
    """Closed ring of identical buses, adjacent along-ring spacing line_km.

    Buses sit on a circle whose circumference is n_buses*line_km, so the
    along-ring (line) distance between neighbors equals line_km; chord
    distances are shorter, which only matters to the planar event locator.
    """
    if n_buses < 3:
        raise TopologyError(f"a ring needs at least 3 buses, got {n_buses}")
    if not line_km > 0:
        raise TopologyError("line_km must be positive")
    radius = n_buses * line_km / (2.0 * math.pi)
    buses = []
    for k in range(n_buses):
        ang = 2.0 * math.pi * k / n_buses
        buses.append(dataclasses.replace(
            bus_template, id=k,
            coord=(radius * math.cos(ang), radius * math.sin(ang))))
    lines = []
    for k in range(n_buses):
        lines.append(dataclasses.replace(
            line_template, from_bus=k, to_bus=(k + 1) % n_buses, length=line_km))
    return NetworkModel(bases=bases, buses=tuple(buses), lines=tuple(lines))


def build_mesh(rows: int, cols: int, spacing_km: float, bus_template: Bus,
               line_template: Line, bases: SystemBases = DEFAULT_BASES) -> NetworkModel:
    """Rectangular grid graph: rows*cols buses, lines along rows and columns."""
    if rows < 2 or cols < 2:
        raise TopologyError(f"mesh needs rows, cols >= 2, got {rows}x{cols}")
    if not spacing_km > 0:
        raise TopologyError("spacing_km must be positive")
    buses = []
    for r in range(rows):
        for c in range(cols):
            buses.append(dataclasses.replace(
                bus_template, id=r * cols + c,
                coord=(c * spacing_km, r * spacing_km)))
    lines = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                lines.append(dataclasses.replace(
                    line_template, from_bus=i, to_bus=i + 1, length=spacing_km))
            if r + 1 < rows:
                lines.append(dataclasses.replace(
                    line_template, from_bus=i, to_bus=i + cols, length=spacing_km))
    return NetworkModel(bases=bases, buses=tuple(buses), lines=tuple(lines))


def validate(model: NetworkModel) -> list[str]:
    """Return the list of violated invariants (empty list = valid model).

    Report style, never raises; callers decide what to do with violations.
    """
    problems: list[str] = []
    b = model.bases
    for name in ("s_base", "v_base", "f_nominal"):
        if not getattr(b, name) > 0:
            problems.append(f"bases.{name} must be positive")

    n = len(model.buses)
    seen: set[int] = set()
    for bus in model.buses:
        if bus.id in seen:
            problems.append(f"duplicate bus id {bus.id}")
        seen.add(bus.id)
    if seen != set(range(n)):
        problems.append(f"bus ids must be dense 0..{n - 1}, got {sorted(seen)}")

    for bus in model.buses:
        if bus.has_generator:
            if bus.inertia_h is None or not bus.inertia_h > 0:
                problems.append(f"bus {bus.id}: inertia_h must be > 0 when a generator is present")
        if bus.coherent_count < 1:
            problems.append(f"bus {bus.id}: coherent_count must be >= 1")
        if not bus.emf_pu > 0:
            problems.append(f"bus {bus.id}: emf_pu must be > 0")
        if bus.load_p < 0:
            problems.append(f"bus {bus.id}: load_p must be >= 0")
        if not all(math.isfinite(c) for c in bus.coord):
            problems.append(f"bus {bus.id}: non-finite coordinate")

    for idx, ln in enumerate(model.lines):
        tag = f"line {idx} ({ln.from_bus}-{ln.to_bus})"
        if ln.from_bus == ln.to_bus:
            problems.append(f"{tag}: from_bus equals to_bus")
        for end in (ln.from_bus, ln.to_bus):
            if end not in seen:
                problems.append(f"{tag}: endpoint {end} is not a bus")
        if not ln.length > 0:
            problems.append(f"{tag}: length must be > 0")
        if not ln.l_per_len > 0:
            problems.append(f"{tag}: l_per_len must be > 0")
        if not ln.c_per_len > 0:
            problems.append(f"{tag}: c_per_len must be > 0")
        if ln.r_per_len < 0:
            problems.append(f"{tag}: r_per_len must be >= 0")
        if ln.len_unit_em not in ("m", "km"):
            problems.append(f"{tag}: len_unit_em must be 'm' or 'km'")

    if n > 0 and not _connected(model):
        problems.append("graph is not a single connected component")
    return problems


def _connected(model: NetworkModel) -> bool:
    n = len(model.buses)
    adj: dict[int, list[int]] = {bus.id: [] for bus in model.buses}
    for ln in model.lines:
        if ln.from_bus in adj and ln.to_bus in adj:
            adj[ln.from_bus].append(ln.to_bus)
            adj[ln.to_bus].append(ln.from_bus)
    start = model.buses[0].id
    seen = {start}
    stack = [start]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == n


def validate_disturbance(model: NetworkModel, d: DisturbanceSpec) -> list[str]:
    """Check one disturbance against a model; same report style as validate()."""
    problems: list[str] = []
    ids = {bus.id for bus in model.buses}
    if d.kind == DisturbanceKind.LINE_TRIP:
        pairs = {frozenset((ln.from_bus, ln.to_bus)) for ln in model.lines}
        if d.line is None or frozenset(d.line) not in pairs:
            problems.append(f"line_trip target {d.line} is not a line of the model")
        return problems
    if d.bus not in ids:
        problems.append(f"{d.kind.value} target bus {d.bus} does not exist")
        return problems
    bus = model.buses[d.bus]
    if d.kind == DisturbanceKind.GENERATION_TRIP:
        if not bus.has_generator:
            problems.append(f"generation_trip at bus {d.bus}: no generator there")
        elif d.magnitude > bus.gen_rating:
            problems.append(
                f"generation_trip magnitude {d.magnitude} MW exceeds gen_rating "
                f"{bus.gen_rating} MW at bus {d.bus}")
    elif d.kind == DisturbanceKind.LOAD_SHED:
        if d.magnitude > bus.load_p:
            problems.append(
                f"load_shed magnitude {d.magnitude} MW exceeds load {bus.load_p} MW "
                f"at bus {d.bus}")
    return problems
