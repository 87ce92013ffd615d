"""Wave measurement and theory: arrivals, speeds, sweeps, event signatures.

Arrival definition: first time a channel's absolute deviation from its
pre-event reference exceeds the threshold.  For rotor-speed channels the
reference is the last pre-onset sample; for sinusoidal voltage channels a
fundamental-frequency sinusoid fitted on the pre-onset window is used
instead (a single pre-event sample is meaningless under a carrier).

Propagation speed is the slope of a least-squares regression of along-line
(shortest-path) distance on arrival time over all detected buses.
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import InsufficientArrivalsError, TopologyError
from .model import DisturbanceKind, DisturbanceSpec, NetworkModel
from .timeseries import TimeSeriesSet

# Eq.-style plausibility constant: free-space EM propagation speed, shown
# alongside line-constant results for comparison.
EM_SPEED_VACUUM = 2.998e8  # m/s


# ---------------------------------------------------------------------------
# closed-form theory
# ---------------------------------------------------------------------------

def inertia_density(h: float, coh: int, n_groups: int, g: float,
                    s_base: float, line_km: float) -> float:
    """Aggregated inertia per km of line: H*Coh*N*G / (S_base*len*(N-1))."""
    if n_groups < 2:
        raise ValueError("n_groups must be >= 2 (formula divides by N-1)")
    if min(h, coh, g, s_base, line_km) <= 0:
        raise ValueError("all inputs must be positive")
    return h * coh * n_groups * g / (s_base * line_km * (n_groups - 1))


@dataclass(frozen=True)
class TheoryInputs:
    """Inputs of the continuum electromechanical speed formula."""
    omega: float      # rad/s
    v_pu: float       # source voltage, pu
    theta: float      # line impedance angle, rad, in (0, pi]
    h: float          # inertia density, s/km
    z_abs: float      # per-unit line impedance per km, pu/km

    def __post_init__(self):
        if min(self.omega, self.v_pu, self.h, self.z_abs) <= 0:
            raise ValueError("omega, v_pu, h, z_abs must be positive")
        if not 0 < self.theta <= math.pi:
            raise ValueError("theta must be in (0, pi]")


def speed_mech_theory(inputs: TheoryInputs) -> float:
    """Continuum electromechanical wave speed sqrt(w V^2 sin(theta)/(2 h |z|)), km/s."""
    radicand = inputs.omega * inputs.v_pu ** 2 * math.sin(inputs.theta) \
        / (2.0 * inputs.h * inputs.z_abs)
    if radicand <= 0:
        raise ValueError("nonpositive radicand")
    return math.sqrt(radicand)


def model_theory(model: NetworkModel, inertia_h: float | None = None) -> dict:
    """h, mechanical and electromagnetic speeds for a (uniform) model.

    Uses mean line parameters; raises if generator data is missing.
    """
    gens = [b for b in model.buses if b.has_generator]
    if not gens:
        raise ValueError("model has no generators: gen_rating/inertia_h missing")
    n_groups = len(gens)
    h_machine = inertia_h if inertia_h is not None else float(
        np.mean([b.inertia_h for b in gens]))
    coh = float(np.mean([b.coherent_count for b in gens]))
    g = float(np.mean([b.gen_rating for b in gens]))
    line_km = float(np.mean([ln.length for ln in model.lines]))
    h = inertia_density(h_machine, coh, n_groups, g, model.bases.s_base, line_km)
    z_abs = float(np.mean([ln.r_per_len for ln in model.lines])) / model.bases.z_base
    v_pu = float(np.mean([b.emf_pu for b in gens]))
    v_mech = speed_mech_theory(TheoryInputs(
        omega=model.bases.omega_s, v_pu=v_pu, theta=math.pi / 2, h=h, z_abs=z_abs))
    v_em = 1.0 / math.sqrt(model.lines[0].l_per_len * model.lines[0].c_per_len)
    return {"h_density": h, "v_mech_kms": v_mech, "v_em": v_em,
            "v_em_unit": f"{model.lines[0].len_unit_em}/s",
            "v_vacuum": EM_SPEED_VACUUM}


# ---------------------------------------------------------------------------
# arrival detection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArrivalEntry:
    bus: int
    distance_km: float
    arrival_s: float | None


@dataclass(frozen=True)
class ArrivalReport:
    entries: tuple[ArrivalEntry, ...]
    fitted_speed: float     # km/s (distances km over seconds)
    fit_r2: float
    threshold: float
    origin: int

    def arrival(self, bus: int) -> float | None:
        for e in self.entries:
            if e.bus == bus:
                return e.arrival_s
        raise KeyError(bus)

    def detected(self) -> list[ArrivalEntry]:
        return [e for e in self.entries if e.arrival_s is not None]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("bus,distance_km,arrival_s\n")
            for e in self.entries:
                arr = f"{e.arrival_s:.12g}" if e.arrival_s is not None else ""
                fh.write(f"{e.bus},{e.distance_km:.12g},{arr}\n")
            fh.write(f"speed,{self.fitted_speed:.12g},r2,{self.fit_r2:.12g}\n")


def line_distances_km(model: NetworkModel, origin: int) -> np.ndarray:
    """Shortest-path distances along the lines, km, from origin to every bus."""
    n = model.n_buses
    rows, cols, vals = [], [], []
    for ln in model.lines:
        rows += [ln.from_bus, ln.to_bus]
        cols += [ln.to_bus, ln.from_bus]
        vals += [ln.length, ln.length]
    graph = csr_matrix((vals, (rows, cols)), shape=(n, n))
    return dijkstra(graph, indices=origin)


def _reference(t: np.ndarray, x: np.ndarray, t_onset: float,
               f_nominal: float | None) -> np.ndarray:
    pre = t < t_onset
    if f_nominal is None or pre.sum() < 8:
        # last sample before onset (or the first sample when there is none)
        idx = np.flatnonzero(pre)
        ref_value = x[idx[-1]] if len(idx) else x[0]
        return np.full_like(x, ref_value)
    # least-squares fundamental sinusoid c + a cos(wt) + b sin(wt) on the
    # pre-onset window, extended over the whole record
    w = 2.0 * math.pi * f_nominal
    basis = np.column_stack([np.ones_like(t), np.cos(w * t), np.sin(w * t)])
    coef, *_ = np.linalg.lstsq(basis[pre], x[pre], rcond=None)
    return basis @ coef


def detect_arrivals(series: TimeSeriesSet, quantity: str, origin: int,
                    model: NetworkModel, threshold: float,
                    t_onset: float = 0.0) -> ArrivalReport:
    """Threshold-crossing arrival times plus the regression speed fit."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    buses = series.buses(quantity)
    missing = set(range(model.n_buses)) - set(buses)
    if missing:
        raise ValueError(f"series lacks {quantity} channels for buses {sorted(missing)}")
    f_nominal = model.bases.f_nominal if quantity == "v" else None
    dist = line_distances_km(model, origin)

    t = series.t
    entries = []
    for bus in buses:
        x = series.channel(bus, quantity)
        ref = _reference(t, x, t_onset, f_nominal)
        dev = np.abs(x - ref)
        idx = np.flatnonzero((t >= t_onset) & (dev > threshold))
        arrival = float(t[idx[0]]) if len(idx) else None
        entries.append(ArrivalEntry(bus=bus, distance_km=float(dist[bus]),
                                    arrival_s=arrival))

    det = [e for e in entries if e.arrival_s is not None]
    if len(det) < 2:
        raise InsufficientArrivalsError(len(det))
    ts = np.array([e.arrival_s for e in det])
    ds = np.array([e.distance_km for e in det])
    a = np.column_stack([ts, np.ones_like(ts)])
    (slope, _), res, *_ = np.linalg.lstsq(a, ds, rcond=None)
    ss_tot = float(np.sum((ds - ds.mean()) ** 2))
    ss_res = float(np.sum((ds - a @ np.linalg.lstsq(a, ds, rcond=None)[0]) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ArrivalReport(entries=tuple(entries), fitted_speed=float(slope),
                         fit_r2=r2, threshold=threshold, origin=origin)


# ---------------------------------------------------------------------------
# reflective waves on a ring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReflectionResult:
    meeting_buses: tuple[int, ...]
    meeting_time: float
    arrivals: tuple[float, ...]


def _ring_order(model: NetworkModel) -> list[int]:
    if any(model.degree(b.id) != 2 for b in model.buses):
        raise TopologyError("reflection analysis needs a ring (every bus degree 2)")
    order = [0]
    prev = None
    while True:
        nbrs = model.neighbors(order[-1])
        nxt = nbrs[0] if nbrs[0] != prev else nbrs[1]
        if nxt == 0:
            break
        prev = order[-1]
        order.append(nxt)
        if len(order) > model.n_buses:
            raise TopologyError("not a single ring")
    if len(order) != model.n_buses:
        raise TopologyError("not a single ring")
    return order


def detect_reflection(series: TimeSeriesSet, origin: int, model: NetworkModel,
                      threshold: float = 1e-4, quantity: str = "domega",
                      t_onset: float = 0.0) -> ReflectionResult:
    """Meeting point of the two counter-propagating fronts on a ring.

    Returns the bus(es) at maximal along-ring distance from the origin (a
    pair for odd rings, one bus for even rings) and the time the fronts get
    there.  Raises if arrivals at the meeting buses are missing.
    """
    order = _ring_order(model)
    n = model.n_buses
    pos = order.index(origin)
    half = n // 2
    if n % 2 == 0:
        meeting = (order[(pos + half) % n],)
    else:
        meeting = tuple(sorted((order[(pos + half) % n],
                                order[(pos + half + 1) % n])))
    report = detect_arrivals(series, quantity, origin, model, threshold, t_onset)
    arrivals = []
    for bus in meeting:
        arr = report.arrival(bus)
        if arr is None:
            raise InsufficientArrivalsError(0)
        arrivals.append(arr)
    return ReflectionResult(meeting_buses=meeting,
                            meeting_time=float(np.mean(arrivals)),
                            arrivals=tuple(arrivals))


# ---------------------------------------------------------------------------
# event-type signatures
# ---------------------------------------------------------------------------

def classify_event(series: TimeSeriesSet, eps_class: float = 1e-4,
                   detect_eps: float = 1e-5,
                   energy_floor: float = 1e-9) -> DisturbanceKind | None:
    """Guess the disturbance kind from rotor-speed signatures.

    Quasi-steady mean below -eps_class: generation trip; above +eps_class:
    load shed; near zero but with transient energy above the floor: line
    trip.  Returns None when nothing is detected.  Windows are index-based,
    so uniform time shifts of the series change nothing.
    """
    buses = series.buses("domega")
    if not buses:
        raise ValueError("series has no domega channels")
    dom = np.stack([series.channel(b, "domega") for b in buses], axis=1)
    if np.max(np.abs(dom)) < detect_eps:
        return None
    n = len(series.t)
    tail = dom[int(0.75 * n):]
    mean_tail = float(tail.mean())
    if mean_tail < -eps_class:
        return DisturbanceKind.GENERATION_TRIP
    if mean_tail > eps_class:
        return DisturbanceKind.LOAD_SHED
    dt = series.dt
    energy = float(np.sum(dom ** 2) * dt)
    if energy > energy_floor:
        return DisturbanceKind.LINE_TRIP
    return None


# ---------------------------------------------------------------------------
# sensitivity sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    value: float
    fitted_speed: float | None
    theory_speed: float | None
    status: str            # "ok" or the error text


SWEEP_PARAMETERS = ("inertia_h", "l_per_len", "c_per_len")


def _rebuild(model: NetworkModel, parameter: str, value: float) -> NetworkModel:
    if parameter == "inertia_h":
        buses = tuple(dataclasses.replace(b, inertia_h=value if b.has_generator else None)
                      for b in model.buses)
        return dataclasses.replace(model, buses=buses)
    if parameter == "l_per_len":
        # the swing engine reads |z| from r_per_len, so scale it with L to
        # keep the published baseline story intact (|z| proportional to L)
        lines = tuple(dataclasses.replace(
            ln, l_per_len=value, r_per_len=ln.r_per_len * value / ln.l_per_len)
            for ln in model.lines)
        return dataclasses.replace(model, lines=lines)
    if parameter == "c_per_len":
        lines = tuple(dataclasses.replace(ln, c_per_len=value) for ln in model.lines)
        return dataclasses.replace(model, lines=lines)
    raise ValueError(f"unknown sweep parameter {parameter!r} "
                     f"(expected one of {SWEEP_PARAMETERS})")


def _theory_speed(model: NetworkModel, parameter: str, value: float) -> float:
    if parameter == "c_per_len":
        return 1.0 / math.sqrt(model.lines[0].l_per_len * value)
    if parameter == "inertia_h":
        return model_theory(model, inertia_h=value)["v_mech_kms"]
    # l_per_len: |z| recomputed as per-unitized omega*L per km
    ln = model.lines[0]
    per_km = 1000.0 if ln.len_unit_em == "m" else 1.0
    z_abs = model.bases.omega_s * value * per_km / model.bases.z_base
    gens = [b for b in model.buses if b.has_generator]
    h = inertia_density(float(np.mean([b.inertia_h for b in gens])),
                        float(np.mean([b.coherent_count for b in gens])),
                        len(gens),
                        float(np.mean([b.gen_rating for b in gens])),
                        model.bases.s_base,
                        float(np.mean([l.length for l in model.lines])))
    return speed_mech_theory(TheoryInputs(
        omega=model.bases.omega_s, v_pu=1.0, theta=math.pi / 2, h=h, z_abs=z_abs))


def run_sensitivity_sweep(model: NetworkModel, disturbances: list[DisturbanceSpec],
                          parameter: str, values: list[float], engine: str,
                          swing_config=None, emt_config=None,
                          threshold: float | None = None,
                          max_workers: int | None = None) -> list[SweepPoint]:
    """Sweep one parameter: rebuild, run the engine, detect arrivals, fit speed.

    Per-point failures are captured in the row status and do not abort the
    remaining points.  Points may run concurrently (TRANSWAVE_THREADS or
    max_workers); results keep the input order.
    """
    if not values:
        raise ValueError("values must be nonempty")
    if any(v <= 0 for v in values):
        raise ValueError("sweep values must be positive")
    if engine not in ("swing", "emt"):
        raise ValueError(f"unknown engine {engine!r}")
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"unknown sweep parameter {parameter!r} "
                         f"(expected one of {SWEEP_PARAMETERS})")
    origin_buses = [d.bus for d in disturbances if d.bus is not None]
    if not origin_buses:
        raise ValueError("sweep needs a bus-targeted disturbance as the wave origin")
    origin = origin_buses[0]
    t_onset = min(d.t_onset for d in disturbances)

    if max_workers is None:
        max_workers = int(os.environ.get("TRANSWAVE_THREADS", "1"))

    def run_point(rebuilt: NetworkModel) -> float:
        # imported here: the engines are peers of this module
        if engine == "swing":
            from .swing import SwingConfig, run_swing
            cfg = swing_config or SwingConfig()
            series = run_swing(rebuilt, cfg, disturbances)
            thr = threshold if threshold is not None else 1e-4
            report = detect_arrivals(series, "domega", origin, rebuilt, thr, t_onset)
        else:
            from .emt import EmtConfig, run_emt
            cfg = emt_config or EmtConfig()
            series = run_emt(rebuilt, cfg, disturbances)
            thr = threshold if threshold is not None else \
                0.02 * math.sqrt(2) * rebuilt.bases.v_base * 1e3
            report = detect_arrivals(series, "v", origin, rebuilt, thr, t_onset)
        speed = report.fitted_speed      # km/s over line distances
        if engine == "emt" and rebuilt.lines[0].len_unit_em == "m":
            speed *= 1000.0              # report EM speeds in m/s
        return speed

    def one(value: float) -> SweepPoint:
        try:
            rebuilt = _rebuild(model, parameter, value)
            fitted = run_point(rebuilt)
            theory = _theory_speed(model, parameter, value)
            return SweepPoint(value=value, fitted_speed=fitted,
                              theory_speed=theory, status="ok")
        except Exception as e:  # per-point isolation is the contract
            return SweepPoint(value=value, fitted_speed=None,
                              theory_speed=None, status=f"failed: {e}")

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(one, values))
    return [one(v) for v in values]


def sweep_to_csv(points: list[SweepPoint], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("param_value,fitted_speed,theory_speed,status\n")
        for p in points:
            fit = f"{p.fitted_speed:.12g}" if p.fitted_speed is not None else ""
            thr = f"{p.theory_speed:.12g}" if p.theory_speed is not None else ""
            fh.write(f"{p.value:.12g},{fit},{thr},{p.status}\n")
