"""Electromechanical transient engine (classical-model swing equations).

Per bus i with aggregated inertia H_i (s, system base):

    d(delta_i)/dt  = omega_s * dw_i
    d(dw_i)/dt     = (P_m,i - P_load,i - P_e,i - D*dw_i) / (2 H_i)

with dw in pu of synchronous speed and the sine flow law

    P_e,i = sum over lines (i,j) of  V_i V_j / X_ij * sin(delta_i - delta_j)

X_ij is the per-unitized series impedance magnitude r_per_len*length/z_base
treated as pure reactance (impedance angle ~ pi/2 on EHV lines).  Loads are
constant power.  A fault forces the bus voltage magnitude to zero for its
duration, which cuts all adjacent flows and unloads the local demand.

Fixed-step RK4; disturbance switching is evaluated at stage times, so align
onsets with the step grid for clean convergence behavior.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DivergenceError, SingularLineError
from .model import DisturbanceKind, DisturbanceSpec, NetworkModel
from .timeseries import TimeSeriesSet, channel_name


@dataclass(frozen=True)
class SwingState:
    t: float
    delta: np.ndarray      # rad, one per bus
    domega: np.ndarray     # pu on f_nominal, one per bus


@dataclass(frozen=True)
class SwingConfig:
    dt: float = 1e-3
    t_end: float = 10.0
    damping_d: float = 0.5
    record_every: int = 10
    initial_delta: np.ndarray | None = None   # optional non-flat start (rad)

    def __post_init__(self):
        if not 0 < self.dt <= 0.01:
            raise ConfigError(f"swing dt must be in (0, 0.01] s, got {self.dt}")
        if not self.t_end > 0:
            raise ConfigError("t_end must be > 0")
        if self.damping_d < 0:
            raise ConfigError("damping_d must be >= 0")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")


class _SwingSystem:
    """Precomputed arrays for one model; shared read-only by run/step calls."""

    def __init__(self, model: NetworkModel, disturbances: list[DisturbanceSpec]):
        n = model.n_buses
        bases = model.bases
        for bus in model.buses:
            if not bus.has_generator or bus.inertia_h is None:
                raise ConfigError(
                    f"swing engine needs a generator at every bus; bus {bus.id} "
                    "is missing gen_rating/inertia_h")
        self.model = model
        self.n = n
        self.omega_s = bases.omega_s
        self.h2 = np.array([2.0 * b.aggregated_inertia(bases.s_base)
                            for b in model.buses])
        self.v0 = np.array([b.emf_pu for b in model.buses])
        self.p_load0 = np.array([b.load_p / bases.s_base for b in model.buses])

        self.a = np.array([ln.from_bus for ln in model.lines])
        self.b = np.array([ln.to_bus for ln in model.lines])
        x = np.array([ln.r_per_len * ln.length / bases.z_base
                      for ln in model.lines])
        if np.any(x == 0.0):
            bad = int(np.flatnonzero(x == 0.0)[0])
            ln = model.lines[bad]
            raise SingularLineError(
                f"line {ln.from_bus}-{ln.to_bus} has zero series reactance")
        self.x_line = x

        # signed incidence: P_e = M @ flows
        m = np.zeros((n, len(model.lines)))
        m[self.a, np.arange(len(model.lines))] = 1.0
        m[self.b, np.arange(len(model.lines))] = -1.0
        self.incidence = m

        # dispatch: scale capacities so total generation covers total load
        cap = np.array([b.gen_rating * b.coherent_count for b in model.buses])
        total_load = sum(b.load_p for b in model.buses)
        scale = total_load / cap.sum() if cap.sum() > 0 else 0.0
        self.p_m0 = cap * scale / bases.s_base

        # split disturbances by kind once
        self.gen_trips = [(d.bus, d.t_onset, d.magnitude / bases.s_base)
                          for d in disturbances
                          if d.kind == DisturbanceKind.GENERATION_TRIP]
        self.load_sheds = [(d.bus, d.t_onset, d.magnitude / bases.s_base)
                           for d in disturbances
                           if d.kind == DisturbanceKind.LOAD_SHED]
        self.faults = [(d.bus, d.t_onset, d.t_clear)
                       for d in disturbances if d.kind == DisturbanceKind.FAULT]
        self.line_trips = []
        pair_index = {frozenset((ln.from_bus, ln.to_bus)): j
                      for j, ln in enumerate(model.lines)}
        for d in disturbances:
            if d.kind == DisturbanceKind.LINE_TRIP:
                j = pair_index.get(frozenset(d.line))
                if j is None:
                    raise ConfigError(f"line_trip target {d.line} not in model")
                self.line_trips.append((j, d.t_onset))

    def derivative(self, t: float, delta: np.ndarray, domega: np.ndarray,
                   damping_d: float) -> tuple[np.ndarray, np.ndarray]:
        v = self.v0.copy()
        p_load = self.p_load0.copy()
        for bus, t_on, t_off in self.faults:
            if t_on <= t < t_off:
                v[bus] = 0.0
                p_load[bus] = 0.0       # zero-voltage bus serves no demand
        p_m = self.p_m0.copy()
        for bus, t_on, mag in self.gen_trips:
            if t >= t_on:
                p_m[bus] -= mag
        for bus, t_on, mag in self.load_sheds:
            if t >= t_on:
                p_load[bus] -= mag

        flows = (v[self.a] * v[self.b] / self.x_line) * np.sin(delta[self.a] - delta[self.b])
        for j, t_on in self.line_trips:
            if t >= t_on:
                flows[j] = 0.0
        p_e = self.incidence @ flows

        ddelta = self.omega_s * domega
        ddomega = (p_m - p_load - p_e - damping_d * domega) / self.h2
        return ddelta, ddomega

    def rk4_step(self, state: SwingState, dt: float, damping_d: float) -> SwingState:
        t, d0, w0 = state.t, state.delta, state.domega
        k1d, k1w = self.derivative(t, d0, w0, damping_d)
        k2d, k2w = self.derivative(t + dt / 2, d0 + dt / 2 * k1d, w0 + dt / 2 * k1w, damping_d)
        k3d, k3w = self.derivative(t + dt / 2, d0 + dt / 2 * k2d, w0 + dt / 2 * k2w, damping_d)
        k4d, k4w = self.derivative(t + dt, d0 + dt * k3d, w0 + dt * k3w, damping_d)
        delta = d0 + dt / 6 * (k1d + 2 * k2d + 2 * k3d + k4d)
        domega = w0 + dt / 6 * (k1w + 2 * k2w + 2 * k3w + k4w)
        return SwingState(t=t + dt, delta=delta, domega=domega)


def electrical_power(model: NetworkModel, delta: np.ndarray,
                     faulted: tuple[int, ...] = ()) -> np.ndarray:
    """Net active power (pu) flowing out of each bus into the lines.

    Buses listed in `faulted` have their voltage magnitude forced to zero,
    so flows on their lines vanish.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (model.n_buses,):
        raise ValueError(f"delta must have length {model.n_buses}")
    a = np.array([ln.from_bus for ln in model.lines])
    b = np.array([ln.to_bus for ln in model.lines])
    x = np.array([ln.r_per_len * ln.length / model.bases.z_base for ln in model.lines])
    if np.any(x == 0.0):
        j = int(np.flatnonzero(x == 0.0)[0])
        ln = model.lines[j]
        raise SingularLineError(
            f"line {ln.from_bus}-{ln.to_bus} has zero series reactance")
    v = np.array([bus.emf_pu for bus in model.buses])
    for bus in faulted:
        v[bus] = 0.0
    flows = (v[a] * v[b] / x) * np.sin(delta[a] - delta[b])
    m = np.zeros((model.n_buses, len(model.lines)))
    m[a, np.arange(len(model.lines))] = 1.0
    m[b, np.arange(len(model.lines))] = -1.0
    return m @ flows


def swing_step(model: NetworkModel, state: SwingState, config: SwingConfig,
               disturbances: list[DisturbanceSpec]) -> SwingState:
    """Advance one RK4 step of config.dt."""
    sys = _SwingSystem(model, disturbances)
    new = sys.rk4_step(state, config.dt, config.damping_d)
    _check_finite("swing", new)
    return new


def _check_finite(engine: str, state: SwingState) -> None:
    for arr in (state.delta, state.domega):
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise DivergenceError(engine, bad, state.t)


def initial_state(model: NetworkModel, config: SwingConfig) -> SwingState:
    n = model.n_buses
    if config.initial_delta is not None:
        delta = np.asarray(config.initial_delta, dtype=float).copy()
        if delta.shape != (n,):
            raise ConfigError(f"initial_delta must have length {n}")
    else:
        delta = np.zeros(n)
    return SwingState(t=0.0, delta=delta, domega=np.zeros(n))


def ring_winding_angles(n_buses: int, winding: int = 1) -> np.ndarray:
    """Angle profile delta_k = 2*pi*W*k/n: a ring equilibrium carrying a
    uniform circulating flow.  Useful to make line trips observable on an
    otherwise zero-flow uniform ring."""
    return 2.0 * np.pi * winding * np.arange(n_buses) / n_buses


def run_swing(model: NetworkModel, config: SwingConfig,
              disturbances: list[DisturbanceSpec]) -> TimeSeriesSet:
    """Integrate the full trajectory; returns delta and domega per bus.

    Start is the flat equilibrium (or config.initial_delta), with mechanical
    power dispatched by uniform scaling of bus capacity to cover total load.
    """
    sys = _SwingSystem(model, disturbances)
    state = initial_state(model, config)
    n_steps = int(round(config.t_end / config.dt))
    rec_t = [state.t]
    rec_delta = [state.delta.copy()]
    rec_domega = [state.domega.copy()]
    for step in range(1, n_steps + 1):
        state = sys.rk4_step(state, config.dt, config.damping_d)
        # snap accumulated dt to the grid to keep switching times exact
        state = SwingState(t=step * config.dt, delta=state.delta, domega=state.domega)
        _check_finite("swing", state)
        if step % config.record_every == 0:
            rec_t.append(state.t)
            rec_delta.append(state.delta.copy())
            rec_domega.append(state.domega.copy())

    t = np.array(rec_t)
    deltas = np.array(rec_delta)
    domegas = np.array(rec_domega)
    data: dict[str, np.ndarray] = {}
    for i in range(model.n_buses):
        data[channel_name(i, "delta")] = deltas[:, i]
        data[channel_name(i, "domega")] = domegas[:, i]
    meta = {"engine": "swing", "dt": config.dt,
            "t_onset": min((d.t_onset for d in disturbances), default=0.0)}
    return TimeSeriesSet(t=t, data=data, meta=meta)
