"""Multi-rate co-simulation: swing-driven EMF phases on the EMT network.

The EMT network advances at dt_em; every rate_ratio steps the rotor states
advance one mechanical step.  Coupling both ways:

  mech -> EM: each generator EMF phase advances at omega_s*(1 + dw_i), so
              the EMT sources carry the rotor angles
  EM -> mech: the electrical power in the swing equation is the one-cycle
              sliding mean of the instantaneous v*i at each generator
              terminal

To keep the two engines describing the same network, the hybrid derives
each line's series inductance from the same impedance figure the swing
engine uses (|z| = r_per_len as reactance at nominal frequency), with the
stored shunt capacitance.  Wave travel times stay microsecond-scale, so
the two-timescale structure is preserved while the quasi-steady power
flows match the sine law the pure swing engine integrates.

Mechanical dispatch comes from the EMT steady state itself (P_m equals the
measured steady terminal power), which makes the coupled system an exact
fixed point before the first disturbance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .emt import EmtSolver
from .errors import ConfigError, DivergenceError
from .model import (DEFAULT_FAULT_RESISTANCE, DisturbanceKind, DisturbanceSpec,
                    NetworkModel)
from .timeseries import TimeSeriesSet, channel_name


@dataclass(frozen=True)
class HybridConfig:
    dt_em: float = 1e-6
    rate_ratio: int = 1000          # dt_mech = rate_ratio * dt_em
    t_end: float = 6.0
    damping_d: float = 0.5
    record_every: int = 10          # decimation of the fine grid
    source_r: float = 0.1           # ohm
    source_l: float = 2.653e-3      # H (~1 ohm at 60 Hz)
    line_c_scale: float = 1.0       # shrink line charging (shorter electrical
                                    # length) for engine cross-checks

    def __post_init__(self):
        if not self.dt_em > 0:
            raise ConfigError("dt_em must be positive")
        if self.rate_ratio < 1:
            raise ConfigError("rate_ratio must be >= 1")
        if self.rate_ratio * self.dt_em > 0.01:
            raise ConfigError("dt_mech = rate_ratio*dt_em must be <= 0.01 s")
        if not self.t_end > 0:
            raise ConfigError("t_end must be > 0")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")

    @property
    def dt_mech(self) -> float:
        return self.rate_ratio * self.dt_em


def _hybrid_line_params(model: NetworkModel,
                        c_scale: float = 1.0) -> list[tuple[float, float]]:
    """(zc, tau) per line with L from the swing-side series impedance."""
    omega = model.bases.omega_s
    out = []
    for ln in model.lines:
        l_tot = ln.r_per_len * ln.length / omega               # H
        c_tot = ln.c_per_len * ln.length_em_units() * c_scale  # F
        out.append((math.sqrt(l_tot / c_tot), math.sqrt(l_tot * c_tot)))
    return out


def run_hybrid(model: NetworkModel, config: HybridConfig,
               disturbances: list[DisturbanceSpec]) -> TimeSeriesSet:
    """Per-bus v (EM) plus domega/delta (mech) on one fine output grid."""
    if not disturbances:
        raise ConfigError("hybrid runs need a nonempty disturbance list")
    bases = model.bases
    n = model.n_buses
    for bus in model.buses:
        if not bus.has_generator or bus.inertia_h is None:
            raise ConfigError(
                f"hybrid engine needs a generator at every bus; bus {bus.id} "
                "is missing gen_rating/inertia_h")

    dt = config.dt_em
    line_params = _hybrid_line_params(model, config.line_c_scale)
    tau_min = min(tau for _, tau in line_params)
    if dt > tau_min:
        raise ConfigError(
            f"dt_em={dt:.3g} s exceeds the smallest hybrid line travel time "
            f"{tau_min:.3g} s")

    solver = EmtSolver(n, dt)
    for ln, (zc, tau) in zip(model.lines, line_params):
        solver.add_line(ln.from_bus, ln.to_bus, zc, tau)
    v_base_volts = bases.v_base * 1e3
    for bus in model.buses:
        if bus.load_p > 0:
            solver.add_shunt_resistor(bus.id, v_base_volts ** 2 / (bus.load_p * 1e6))
        amp = math.sqrt(2.0) * v_base_volts * bus.emf_pu
        solver.add_source_branch(bus.id, amp, config.source_r, config.source_l,
                                 bases.omega_s)
    solver.finalize()
    omega_s = bases.omega_s
    v_ph = solver.init_steady_state(omega_s)

    # mechanical side
    h2 = np.array([2.0 * b.aggregated_inertia(bases.s_base) for b in model.buses])
    s_base_w = bases.s_base * 1e6
    i_ph = solver.steady_source_currents
    p_steady = 0.5 * np.real(v_ph[solver.src_node] * np.conj(i_ph))
    p_m = p_steady / s_base_w          # pu, exact coupled fixed point
    domega = np.zeros(n)
    theta = np.zeros(n)                # absolute EMF phase, d(theta)/dt = w_s(1+dw)

    # one-cycle sliding window of instantaneous terminal power
    cycle = max(1, round(1.0 / bases.f_nominal / dt))
    pbuf = np.empty((cycle, n))
    for q in range(cycle):
        rot = np.exp(1j * omega_s * ((q - cycle) * dt))
        pbuf[q] = np.real(v_ph[solver.src_node] * rot) * np.real(i_ph * rot)
    pbuf_pos = 0

    # disturbance schedule
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
        elif d.kind == DisturbanceKind.LOAD_SHED:
            g_shed = d.magnitude * 1e6 / v_base_volts ** 2
            events.append((d.t_onset,
                           lambda b=d.bus, g=g_shed: solver.adjust_shunt(b, -g)))
        elif d.kind == DisturbanceKind.GENERATION_TRIP:
            def trip(bus=d.bus, mag=d.magnitude / bases.s_base):
                p_m[bus] -= mag
            events.append((d.t_onset, trip))
    events.sort(key=lambda ev: ev[0])

    n_steps = int(round(config.t_end / dt))
    rec_idx = range(0, n_steps + 1, config.record_every)
    t_rec = np.empty(len(rec_idx))
    v_rec = np.empty((len(rec_idx), n))
    mech_t = [0.0]
    mech_dom = [domega.copy()]
    mech_delta = [theta.copy()]        # delta = theta - omega_s*t; 0 at t=0

    ev = 0
    r = 0
    amp = solver.src_amp
    k_mech = config.rate_ratio
    for k in range(n_steps + 1):
        t = k * dt
        while ev < len(events) and events[ev][0] <= t + 1e-15:
            events[ev][1]()
            ev += 1
        e_vals = amp * np.cos(theta)
        v = solver.step(e_vals)
        pbuf[pbuf_pos] = v[solver.src_node] * solver.src_i
        pbuf_pos = (pbuf_pos + 1) % cycle
        if k % config.record_every == 0:
            if not np.all(np.isfinite(v)):
                bad = int(np.flatnonzero(~np.isfinite(v))[0])
                raise DivergenceError("hybrid-em", bad, t)
            t_rec[r] = t
            v_rec[r] = v
            r += 1
        if k > 0 and k % k_mech == 0:
            p_e = pbuf.mean(axis=0) / s_base_w
            domega = domega + config.dt_mech * (
                (p_m - p_e - config.damping_d * domega) / h2)
            if not np.all(np.isfinite(domega)):
                bad = int(np.flatnonzero(~np.isfinite(domega))[0])
                raise DivergenceError("hybrid-mech", bad, t)
            mech_t.append(t)
            mech_dom.append(domega.copy())
            mech_delta.append(theta - omega_s * t)
        theta = theta + omega_s * (1.0 + domega) * dt

    mech_t = np.array(mech_t)
    mech_dom = np.array(mech_dom)
    mech_delta = np.array(mech_delta)
    data: dict[str, np.ndarray] = {}
    for i in range(n):
        data[channel_name(i, "v")] = v_rec[:, i].copy()
        data[channel_name(i, "domega")] = np.interp(t_rec, mech_t, mech_dom[:, i])
        data[channel_name(i, "delta")] = np.interp(t_rec, mech_t, mech_delta[:, i])
    meta = {"engine": "hybrid", "dt_em": dt, "dt_mech": config.dt_mech,
            "t_onset": min(d.t_onset for d in disturbances),
            "steady_phasors": solver.steady_phasors.copy()}
    return TimeSeriesSet(t=t_rec, data=data, meta=meta)
