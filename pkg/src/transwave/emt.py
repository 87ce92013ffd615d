"""Electromagnetic transient engine: nodal solver with Bergeron lines.

Each lossless line carries two delayed history currents, one per end:

    i_k(t)      = v_k(t)/Zc + I_k(t)
    I_k(t)      = -(2/Zc) v_m(t - tau) - I_m(t - tau)

so the nodal conductance matrix sees only 1/Zc shunts at the line ends and
stays constant between switching events (one dense LU per switching).
Non-integer tau/dt is handled by linear interpolation between the two
nearest buffered samples.

Lumped elements are trapezoidal companion models: loads are constant
impedance sized at nominal voltage, each generator is an ideal EMF behind a
series R(+L) branch.  Ideal 0-impedance sources are supported as known
voltage nodes (their rows leave the solve).

Runs start from the exact periodic steady state of the *discretized*
system, computed by a phasor solve that uses the companion and
interpolated-delay transfer factors, so there is no startup transient and
the mandatory pre-roll before the first disturbance is genuinely steady.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ConfigError, DivergenceError
from .model import (DEFAULT_FAULT_RESISTANCE, DisturbanceKind, DisturbanceSpec,
                    Line, NetworkModel)
from .timeseries import TimeSeriesSet, channel_name


def propagation_speed_em(line: Line) -> float:
    """Lossless-line wave speed 1/sqrt(LC), in len_unit_em per second."""
    if not (line.l_per_len > 0 and line.c_per_len > 0):
        raise ValueError("l_per_len and c_per_len must be positive")
    return 1.0 / math.sqrt(line.l_per_len * line.c_per_len)


@dataclass(frozen=True)
class EmtConfig:
    dt: float | None = None       # None = min(tau_min/10, 1 us)
    t_end: float = 0.12
    source_r: float = 0.1         # ohm in series with each generator EMF
    source_l: float = 0.0         # H   in series with each generator EMF
    record_every: int = 1
    pre_roll_cycles: int = 5      # steady cycles required before any onset

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("emt dt must be positive")
        if not self.t_end > 0:
            raise ConfigError("t_end must be > 0")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")


class BergeronLine:
    """Surge impedance, travel time and the per-end history buffers."""

    def __init__(self, a: int, b: int, zc: float, tau: float):
        if not (zc > 0 and tau > 0):
            raise ConfigError(f"line {a}-{b}: zc and tau must be positive")
        self.a = a
        self.b = b
        self.zc = zc
        self.tau = tau
        self.depth = 0          # round(tau/dt), set when the solver binds dt

    @classmethod
    def from_line(cls, ln: Line) -> "BergeronLine":
        zc = math.sqrt(ln.l_per_len / ln.c_per_len)
        tau = ln.length_em_units() * math.sqrt(ln.l_per_len * ln.c_per_len)
        return cls(ln.from_bus, ln.to_bus, zc, tau)


class EmtSolver:
    """Fixed-step nodal network of Bergeron lines, shunts and EMF branches.

    Assemble with add_* calls, then finalize(), then step() repeatedly.
    """

    def __init__(self, n_nodes: int, dt: float):
        if not dt > 0:
            raise ConfigError("dt must be positive")
        self.n = n_nodes
        self.dt = dt
        self.lines: list[BergeronLine] = []
        self._shunt_g = np.zeros(n_nodes)
        self._fault_g = np.zeros(n_nodes)
        self._sources: list[tuple[int, float, float, float, float]] = []
        self._known: dict[int, object] = {}
        self._final = False

    # -- assembly ----------------------------------------------------------

    def add_line(self, a: int, b: int, zc: float, tau: float) -> int:
        if tau < self.dt:
            raise ConfigError(
                f"line {a}-{b}: travel time {tau:.3g} s not resolvable at dt={self.dt:.3g}")
        self.lines.append(BergeronLine(a, b, zc, tau))
        return len(self.lines) - 1

    def add_shunt_resistor(self, node: int, r_ohm: float) -> None:
        self._shunt_g[node] += 1.0 / r_ohm

    def add_source_branch(self, node: int, amp: float, r: float, l: float,
                          omega: float, phase: float = 0.0) -> int:
        """EMF amp*cos(omega*t + phase) behind series R and L to `node`."""
        if r <= 0 and l <= 0:
            raise ConfigError("source branch needs r > 0 or l > 0 "
                              "(use set_known_node for an ideal source)")
        self._sources.append((node, amp, r, l, phase))
        self._omega = omega
        return len(self._sources) - 1

    def set_known_node(self, node: int, waveform) -> None:
        """Pin a node to waveform(t): an ideal voltage source to ground."""
        self._known[node] = waveform

    # -- setup -------------------------------------------------------------

    def finalize(self) -> None:
        nl = len(self.lines)
        self.node_of_end = np.empty(2 * nl, dtype=int)
        self.mate = np.empty(2 * nl, dtype=int)
        self.zc_end = np.empty(2 * nl)
        self.d_int = np.empty(2 * nl, dtype=int)
        self.frac = np.empty(2 * nl)
        for j, ln in enumerate(self.lines):
            steps = ln.tau / self.dt
            ln.depth = max(1, round(steps))
            # snap near-integer delays so exact-multiple lines stay exact
            if abs(steps - round(steps)) < 1e-9 * max(1.0, steps):
                d, f = int(round(steps)), 0.0
            else:
                d = int(math.floor(steps))
                f = steps - d
            for e, node in enumerate((ln.a, ln.b)):
                idx = 2 * j + e
                self.node_of_end[idx] = node
                self.mate[idx] = 2 * j + (1 - e)
                self.zc_end[idx] = ln.zc
                self.d_int[idx] = d
                self.frac[idx] = f
        self.buf_len = int(self.d_int.max()) + 2 if nl else 2
        self.vbuf = np.zeros((2 * nl, self.buf_len))
        self.hbuf = np.zeros((2 * nl, self.buf_len))
        self.line_active = np.ones(nl, dtype=bool)

        self.src_node = np.array([s[0] for s in self._sources], dtype=int)
        self.src_amp = np.array([s[1] for s in self._sources])
        self.src_r = np.array([s[2] for s in self._sources])
        self.src_l = np.array([s[3] for s in self._sources])
        self.src_phase = np.array([s[4] for s in self._sources])
        self.src_g = self.dt / (self.src_r * self.dt + 2.0 * self.src_l)
        self.src_a = ((2.0 * self.src_l - self.src_r * self.dt)
                      / (2.0 * self.src_l + self.src_r * self.dt))
        self.src_hist = np.zeros(len(self._sources))
        self.src_i = np.zeros(len(self._sources))

        self.unknown = np.array([i for i in range(self.n) if i not in self._known],
                                dtype=int)
        self.known_nodes = np.array(sorted(self._known), dtype=int)
        self._pos = -np.ones(self.n, dtype=int)
        self._pos[self.unknown] = np.arange(len(self.unknown))
        self.step_no = 0
        self.v = np.zeros(self.n)
        self.last_hist = np.zeros(2 * nl)
        self._rebuild_matrix()
        self._final = True

    def _rebuild_matrix(self) -> None:
        diag = self._shunt_g + self._fault_g
        for j, ln in enumerate(self.lines):
            if self.line_active[j]:
                diag[ln.a] += 1.0 / ln.zc
                diag[ln.b] += 1.0 / ln.zc
        np.add.at(diag, self.src_node, self.src_g)
        gu = np.diag(diag[self.unknown])
        if np.any(diag[self.unknown] == 0.0):
            bad = int(self.unknown[np.flatnonzero(diag[self.unknown] == 0.0)[0]])
            raise ConfigError(f"singular conductance matrix: node {bad} is isolated")
        self._lu = lu_factor(gu, check_finite=False)

    # -- switching ---------------------------------------------------------

    def set_fault(self, node: int, r_ohm: float) -> None:
        self._fault_g[node] = 1.0 / max(r_ohm, 1e-9)
        self._rebuild_matrix()

    def clear_fault(self, node: int) -> None:
        self._fault_g[node] = 0.0
        self._rebuild_matrix()

    def trip_line(self, index: int) -> None:
        self.line_active[index] = False
        self._rebuild_matrix()

    def adjust_shunt(self, node: int, delta_g: float) -> None:
        """Add delta_g (siemens, may be negative) to a node's shunt."""
        self._shunt_g[node] += delta_g
        self._rebuild_matrix()

    # -- steady state ------------------------------------------------------

    def init_steady_state(self, omega: float,
                          e_phasors: np.ndarray | None = None) -> np.ndarray:
        """Fill buffers/companion state with the exact periodic solution.

        Returns the complex node-voltage phasors (peak convention,
        v(t) = Re(V exp(j omega t))).  e_phasors overrides the per-source
        EMF phasors (default amp*exp(j*phase)).
        """
        if not self._final:
            raise ConfigError("finalize() before init_steady_state()")
        dt = self.dt
        z1 = np.exp(-1j * omega * dt)
        nl = len(self.lines)

        y = np.zeros((self.n, self.n), dtype=complex)
        np.add.at(y, (np.arange(self.n), np.arange(self.n)),
                  self._shunt_g + self._fault_g)
        a_line = np.empty(nl, dtype=complex)
        for j, ln in enumerate(self.lines):
            e = 2 * j
            a = np.exp(-1j * omega * self.d_int[e] * dt) * \
                ((1.0 - self.frac[e]) + self.frac[e] * z1)
            a_line[j] = a
            if not self.line_active[j]:
                continue
            den = ln.zc * (1.0 - a * a)
            if abs(den) < 1e-12 * ln.zc:
                raise ConfigError(
                    f"line {ln.a}-{ln.b} is resonant at omega={omega:.4g}")
            y_self = (1.0 + a * a) / den
            y_mut = -2.0 * a / den
            y[ln.a, ln.a] += y_self
            y[ln.b, ln.b] += y_self
            y[ln.a, ln.b] += y_mut
            y[ln.b, ln.a] += y_mut

        if e_phasors is None:
            e_phasors = self.src_amp * np.exp(1j * self.src_phase)
        y_src = self.src_g * (1.0 + z1) / (1.0 - self.src_a * z1)
        rhs = np.zeros(self.n, dtype=complex)
        for k, node in enumerate(self.src_node):
            y[node, node] += y_src[k]
            rhs[node] += y_src[k] * e_phasors[k]

        v_ph = np.zeros(self.n, dtype=complex)
        for node in self.known_nodes:
            # known waveforms must be sinusoidal for a steady init; sample
            # amplitude/phase from the waveform at two quadrature points
            w = self._known[node]
            c = w(0.0)
            s = w(-math.pi / (2 * omega))
            v_ph[node] = c + 1j * s
        u = self.unknown
        if len(u):
            rhs_u = rhs[u] - y[np.ix_(u, self.known_nodes)] @ v_ph[self.known_nodes] \
                if len(self.known_nodes) else rhs[u]
            v_ph[u] = np.linalg.solve(y[np.ix_(u, u)], rhs_u)

        h_ph = np.zeros(2 * nl, dtype=complex)
        for j, ln in enumerate(self.lines):
            if not self.line_active[j]:
                continue
            a = a_line[j]
            den = ln.zc * (1.0 - a * a)
            va, vb = v_ph[ln.a], v_ph[ln.b]
            h_ph[2 * j] = (2.0 * a * a * va - 2.0 * a * vb) / den
            h_ph[2 * j + 1] = (2.0 * a * a * vb - 2.0 * a * va) / den

        # prefill buffers for steps -1 .. -buf_len
        for q in range(1, self.buf_len + 1):
            slot = (-q) % self.buf_len
            rot = np.exp(1j * omega * (-q * dt))
            self.vbuf[:, slot] = np.real(v_ph[self.node_of_end] * rot)
            self.hbuf[:, slot] = np.real(h_ph * rot)

        i_ph = y_src * (e_phasors - v_ph[self.src_node])
        rot1 = np.exp(1j * omega * (-dt))
        u_prev = np.real((e_phasors - v_ph[self.src_node]) * rot1)
        i_prev = np.real(i_ph * rot1)
        self.src_hist = self.src_g * u_prev + self.src_a * i_prev
        self.src_i = i_prev
        self.steady_source_currents = i_ph.copy()
        # np.real() would alias the phasor array and stepping would corrupt it
        self.v = v_ph.real.copy()
        self.steady_phasors = v_ph.copy()
        self._steady_omega = omega
        return v_ph

    # -- stepping ----------------------------------------------------------

    def step(self, e_values: np.ndarray | None = None) -> np.ndarray:
        """Advance one dt; returns node voltages at the new time.

        e_values overrides the source EMFs for this step (hybrid coupling);
        default is amp*cos(omega*t + phase).
        """
        k = self.step_no
        t = k * self.dt
        # the delay belongs to the line, so r1/r2 are identical for an end
        # and its mate; index by end for clarity
        r1 = (k - self.d_int) % self.buf_len
        r2 = (k - self.d_int - 1) % self.buf_len
        v_del = (1.0 - self.frac) * self.vbuf[self.mate, r1] \
            + self.frac * self.vbuf[self.mate, r2]
        h_del = (1.0 - self.frac) * self.hbuf[self.mate, r1] \
            + self.frac * self.hbuf[self.mate, r2]
        hist = -(2.0 / self.zc_end) * v_del - h_del
        if not self.line_active.all():
            hist[np.repeat(~self.line_active, 2)] = 0.0

        rhs = np.bincount(self.node_of_end, weights=-hist, minlength=self.n)
        if len(self.src_node):
            if e_values is None:
                e_values = self.src_amp * np.cos(self._omega * t + self.src_phase)
            np.add.at(rhs, self.src_node, self.src_g * e_values + self.src_hist)

        v = self.v
        v[self.unknown] = lu_solve(self._lu, rhs[self.unknown], check_finite=False)
        for node, w in self._known.items():
            v[node] = w(t)

        if len(self.src_node):
            u_now = e_values - v[self.src_node]
            self.src_i = self.src_g * u_now + self.src_hist
            self.src_hist = self.src_g * u_now + self.src_a * self.src_i

        slot = k % self.buf_len
        self.vbuf[:, slot] = v[self.node_of_end]
        self.hbuf[:, slot] = hist
        self.last_hist = hist
        self.step_no = k + 1
        return v

    @property
    def t(self) -> float:
        return (self.step_no - 1) * self.dt

    def line_current(self, index: int, end: int) -> float:
        """Current flowing into line `index` at end 0 (a) or 1 (b)."""
        e = 2 * index + end
        return self.v[self.node_of_end[e]] / self.zc_end[e] + self.last_hist[e]

    def stored_line_energy(self) -> float:
        """Total energy of the waves currently in flight on all lines.

        Uses w = v + Zc i = 2 v + Zc I_hist per buffered sample; each sample
        of an outgoing wave carries w^2 dt / (4 Zc).
        """
        total = 0.0
        k = self.step_no
        for j, ln in enumerate(self.lines):
            if not self.line_active[j]:
                continue
            for e in (2 * j, 2 * j + 1):
                d = self.d_int[e]
                for q in range(d):
                    slot = (k - 1 - q) % self.buf_len
                    w = 2.0 * self.vbuf[e, slot] + ln.zc * self.hbuf[e, slot]
                    total += w * w * self.dt / (4.0 * ln.zc)
        return total


# ---------------------------------------------------------------------------
# model-level driver
# ---------------------------------------------------------------------------

def _resolve_dt(config: EmtConfig, taus: list[float]) -> float:
    tau_min = min(taus)
    dt = config.dt if config.dt is not None else min(tau_min / 10.0, 1e-6)
    if dt > tau_min:
        raise ConfigError(
            f"dt={dt:.3g} s exceeds the smallest line travel time {tau_min:.3g} s")
    return dt


def build_solver(model: NetworkModel, config: EmtConfig,
                 line_params: list[tuple[float, float]] | None = None
                 ) -> tuple[EmtSolver, float]:
    """Assemble an EmtSolver for a NetworkModel; returns (solver, dt).

    line_params optionally overrides the per-line (zc, tau) pairs.
    """
    if line_params is None:
        line_params = []
        for ln in model.lines:
            zc = math.sqrt(ln.l_per_len / ln.c_per_len)
            tau = ln.length_em_units() * math.sqrt(ln.l_per_len * ln.c_per_len)
            line_params.append((zc, tau))
    dt = _resolve_dt(config, [tau for _, tau in line_params])
    solver = EmtSolver(model.n_buses, dt)
    for ln, (zc, tau) in zip(model.lines, line_params):
        solver.add_line(ln.from_bus, ln.to_bus, zc, tau)
    v_base_volts = model.bases.v_base * 1e3
    for bus in model.buses:
        if bus.load_p > 0:
            r_load = v_base_volts ** 2 / (bus.load_p * 1e6)
            solver.add_shunt_resistor(bus.id, r_load)
        if bus.has_generator:
            amp = math.sqrt(2.0) * v_base_volts * bus.emf_pu
            solver.add_source_branch(bus.id, amp, config.source_r,
                                     config.source_l, model.bases.omega_s)
    solver.finalize()
    return solver, dt


def _emt_events(model: NetworkModel, disturbances: list[DisturbanceSpec],
                solver: EmtSolver) -> list[tuple[float, object]]:
    pair_index = {frozenset((ln.from_bus, ln.to_bus)): j
                  for j, ln in enumerate(model.lines)}
    events = []
    for d in disturbances:
        if d.kind == DisturbanceKind.FAULT:
            r = d.magnitude if d.magnitude > 0 else DEFAULT_FAULT_RESISTANCE
            events.append((d.t_onset, lambda b=d.bus, r=r: solver.set_fault(b, r)))
            events.append((d.t_clear, lambda b=d.bus: solver.clear_fault(b)))
        elif d.kind == DisturbanceKind.LINE_TRIP:
            j = pair_index.get(frozenset(d.line))
            if j is None:
                raise ConfigError(f"line_trip target {d.line} not in model")
            events.append((d.t_onset, lambda j=j: solver.trip_line(j)))
        else:
            raise ConfigError(
                f"the EMT engine only takes fault/line_trip disturbances, "
                f"got {d.kind.value}")
    events.sort(key=lambda ev: ev[0])
    return events


def run_emt(model: NetworkModel, config: EmtConfig,
            disturbances: list[DisturbanceSpec]) -> TimeSeriesSet:
    """Bus-voltage waveforms from the steady state through the disturbances."""
    solver, dt = build_solver(model, config)
    f = model.bases.f_nominal
    pre_roll = config.pre_roll_cycles / f
    for d in disturbances:
        if d.t_onset < pre_roll:
            raise ConfigError(
                f"disturbance onset {d.t_onset} s is inside the "
                f"{config.pre_roll_cycles}-cycle pre-roll ({pre_roll:.4g} s)")
    solver.init_steady_state(model.bases.omega_s)
    events = _emt_events(model, disturbances, solver)

    n_steps = int(round(config.t_end / dt))
    rec_idx = range(0, n_steps + 1, config.record_every)
    n_rec = len(rec_idx)
    t_rec = np.empty(n_rec)
    v_rec = np.empty((n_rec, model.n_buses))
    ev = 0
    r = 0
    for k in range(n_steps + 1):
        t = k * dt
        while ev < len(events) and events[ev][0] <= t + 1e-15:
            events[ev][1]()
            ev += 1
        v = solver.step()
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise DivergenceError("emt", bad, t)
        if k % config.record_every == 0:
            t_rec[r] = t
            v_rec[r] = v
            r += 1

    data = {channel_name(i, "v"): v_rec[:, i].copy() for i in range(model.n_buses)}
    meta = {"engine": "emt", "dt": dt,
            "t_onset": min((d.t_onset for d in disturbances), default=0.0),
            "steady_phasors": solver.steady_phasors.copy()}
    return TimeSeriesSet(t=t_rec, data=data, meta=meta)
