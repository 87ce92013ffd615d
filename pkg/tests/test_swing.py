"""Swing engine: flow law, RK4 behavior, disturbance mechanics.

The two-bus oscillator tests use a near-infinite second bus so the
single-machine linearization is exact to well below the tolerances.
"""

import math

import numpy as np
import pytest

from transwave.errors import ConfigError, DivergenceError, SingularLineError
from transwave.model import (Bus, DisturbanceKind, DisturbanceSpec, Line,
                             SystemBases, build_ring)
from transwave.presets import RING23_BUS, RING23_LINE, ring23
from transwave.swing import (SwingConfig, SwingState, electrical_power,
                             initial_state, run_swing, swing_step)


def two_bus_model(x_pu=0.05, h_agg=4.0, inf_scale=10**8):
    """Machine vs (almost) infinite bus, zero load, X as given."""
    bases = SystemBases(s_base=100.0, v_base=500.0, f_nominal=60.0)
    # r_per_len * length / z_base = x_pu
    r = x_pu * bases.z_base / 100.0
    bus0 = Bus(id=0, coord=(0.0, 0.0), gen_rating=100.0, inertia_h=h_agg,
               coherent_count=1, load_p=0.0)
    bus1 = Bus(id=1, coord=(100.0, 0.0), gen_rating=100.0, inertia_h=h_agg,
               coherent_count=inf_scale, load_p=0.0)
    line = Line(from_bus=0, to_bus=1, length=100.0, r_per_len=r,
                l_per_len=1e-6, c_per_len=1e-9)
    from transwave.model import NetworkModel
    return NetworkModel(bases=bases, buses=(bus0, bus1), lines=(line,))


# ---------------------------------------------------------------------------
# electrical power (sine flow law)
# ---------------------------------------------------------------------------

def test_power_zero_at_equal_angles():
    m = ring23()
    p = electrical_power(m, np.zeros(23))
    assert np.allclose(p, 0.0, atol=0.0)


def test_power_two_bus_direct_value():
    m = two_bus_model(x_pu=0.5)
    p = electrical_power(m, np.array([math.pi / 6, 0.0]))
    # (1*1/0.5)*sin(pi/6) = 1.0 pu out of bus 0, into bus 1
    assert p[0] == pytest.approx(1.0, abs=1e-12)
    assert p[1] == pytest.approx(-1.0, abs=1e-12)


def test_power_matches_per_line_oracle():
    """Brute-force per-line summation oracle, independent of the engine path."""
    m = ring23()
    cfg = SwingConfig(dt=1e-3, t_end=2.0, record_every=1)
    fault = DisturbanceSpec(kind=DisturbanceKind.FAULT, bus=1, t_onset=0.5,
                            magnitude=1.0, duration=0.1)
    series = run_swing(m, cfg, [fault])
    delta = np.array([series.channel(i, "delta")[-1] for i in range(23)])

    expected = np.zeros(23)
    for ln in m.lines:
        x = ln.r_per_len * ln.length / m.bases.z_base
        f = (m.buses[ln.from_bus].emf_pu * m.buses[ln.to_bus].emf_pu / x
             * math.sin(delta[ln.from_bus] - delta[ln.to_bus]))
        expected[ln.from_bus] += f
        expected[ln.to_bus] -= f

    got = electrical_power(m, delta)
    assert np.max(np.abs(got - expected)) < 1e-12


def test_power_rejects_zero_reactance():
    m = two_bus_model()
    bad = m.lines[0].__class__(**{**m.lines[0].__dict__, "r_per_len": 0.0})
    from transwave.model import NetworkModel
    m2 = NetworkModel(bases=m.bases, buses=m.buses, lines=(bad,))
    with pytest.raises(SingularLineError):
        electrical_power(m2, np.zeros(2))


# ---------------------------------------------------------------------------
# stepping and equilibrium
# ---------------------------------------------------------------------------

def test_equilibrium_fixed_point_single_step():
    m = ring23()
    cfg = SwingConfig(dt=1e-3, t_end=1.0)
    st0 = initial_state(m, cfg)
    st1 = swing_step(m, st0, cfg, [])
    assert np.max(np.abs(st1.delta)) < 1e-9
    assert np.max(np.abs(st1.domega)) < 1e-9


def test_equilibrium_preserved_over_run():
    m = ring23()
    series = run_swing(m, SwingConfig(dt=1e-3, t_end=5.0), [])
    worst = max(np.max(np.abs(series.channel(i, "domega"))) for i in range(23))
    assert worst < 1e-8
    worst_d = max(np.max(np.abs(series.channel(i, "delta"))) for i in range(23))
    assert worst_d < 1e-9


def test_two_bus_oscillation_period():
    """Small perturbation rings at sqrt(omega_s * P_max * cos(d0) / (2 H))."""
    m = two_bus_model(x_pu=0.05, h_agg=4.0)
    omega_lin = math.sqrt(m.bases.omega_s * (1 / 0.05) * 1.0 / (2 * 4.0))
    eps = 1e-3
    cfg = SwingConfig(dt=1e-3, t_end=1.0, damping_d=0.0, record_every=1,
                      initial_delta=np.array([eps, 0.0]))
    series = run_swing(m, cfg, [])
    x = series.channel(0, "delta")
    t = series.t
    # period from linearly interpolated zero crossings
    sign_change = np.flatnonzero(np.sign(x[1:]) != np.sign(x[:-1]))
    crossings = []
    for k in sign_change:
        frac = x[k] / (x[k] - x[k + 1])
        crossings.append(t[k] + frac * (t[k + 1] - t[k]))
    assert len(crossings) >= 3
    period = 2.0 * np.mean(np.diff(crossings))
    assert period == pytest.approx(2 * math.pi / omega_lin, rel=0.02)


def test_rk4_convergence_factor():
    """Halving dt shrinks the end-state error by ~2^4 against the linearized
    closed form (infinite second bus, tiny amplitude)."""
    m = two_bus_model(x_pu=0.05, h_agg=4.0)
    omega_s = m.bases.omega_s
    omega_lin = math.sqrt(omega_s * (1 / 0.05) / (2 * 4.0))
    eps = 1e-3
    t_end = 1.0

    def end_error(dt):
        cfg = SwingConfig(dt=dt, t_end=t_end, damping_d=0.0, record_every=1,
                          initial_delta=np.array([eps, 0.0]))
        series = run_swing(m, cfg, [])
        d_sim = series.channel(0, "delta")[-1]
        w_sim = series.channel(0, "domega")[-1]
        d_ref = eps * math.cos(omega_lin * t_end)
        w_ref = -eps * omega_lin * math.sin(omega_lin * t_end) / omega_s
        return math.hypot(d_sim - d_ref, (w_sim - w_ref) * omega_s / omega_lin)

    ratio = end_error(0.01) / end_error(0.005)
    assert 12.0 <= ratio <= 20.0


def test_divergence_error_names_bus_and_time():
    # the sine flow law bounds the forces, so a healthy run cannot overflow;
    # the detector is exercised with an already-corrupted state
    m = two_bus_model()
    cfg = SwingConfig(dt=1e-3, t_end=1.0)
    bad = SwingState(t=0.25, delta=np.array([np.nan, 0.0]),
                     domega=np.zeros(2))
    with pytest.raises(DivergenceError) as exc:
        swing_step(m, bad, cfg, [])
    assert exc.value.bus == 0
    assert exc.value.t == pytest.approx(0.251)


def test_config_validation():
    with pytest.raises(ConfigError):
        SwingConfig(dt=0.02)
    with pytest.raises(ConfigError):
        SwingConfig(t_end=-1.0)
    with pytest.raises(ConfigError):
        SwingConfig(record_every=0)


# ---------------------------------------------------------------------------
# disturbances on the ring
# ---------------------------------------------------------------------------

def ring_fault(bus=1, t_onset=0.5, duration=0.1):
    return DisturbanceSpec(kind=DisturbanceKind.FAULT, bus=bus, t_onset=t_onset,
                           magnitude=1.0, duration=duration)


def first_crossing(series, bus, threshold=1e-4):
    x = np.abs(series.channel(bus, "domega"))
    idx = np.flatnonzero(x > threshold)
    return series.t[idx[0]] if len(idx) else None


def test_fault_wave_arrival_ordering():
    m = ring23()
    series = run_swing(m, SwingConfig(dt=1e-3, t_end=6.0), [ring_fault(bus=1)])
    t2 = first_crossing(series, 2)
    t5 = first_crossing(series, 5)
    t12 = first_crossing(series, 12)
    assert t2 is not None and t5 is not None and t12 is not None
    assert t2 < t5 < t12


def test_ring_symmetry_mirror_buses():
    """Disturbance at bus 0: bus k and bus n-k see identical trajectories."""
    m = ring23()
    series = run_swing(m, SwingConfig(dt=1e-3, t_end=6.0), [ring_fault(bus=0)])
    for k in (1, 5, 11):
        a = series.channel(k, "domega")
        b = series.channel(23 - k, "domega")
        assert np.max(np.abs(a - b)) < 1e-9


def test_zero_damping_momentum_balance():
    """With D=0 the total angular momentum integrates the net imbalance."""
    m = ring23()
    trip = DisturbanceSpec(kind=DisturbanceKind.GENERATION_TRIP, bus=3,
                           t_onset=1.0, magnitude=120.0)
    cfg = SwingConfig(dt=1e-3, t_end=4.0, damping_d=0.0, record_every=1)
    series = run_swing(m, cfg, [trip])
    h2 = np.array([b.aggregated_inertia(m.bases.s_base) * 2 for b in m.buses])
    dom = np.stack([series.channel(i, "domega") for i in range(23)], axis=1)
    momentum = dom @ h2
    rate = np.diff(momentum) / cfg.dt
    t_mid = series.t[:-1] + cfg.dt / 2
    expected = np.where(t_mid >= 1.0, -120.0 / m.bases.s_base, 0.0)
    # skip the step containing the onset edge
    mask = np.abs(t_mid - 1.0) > cfg.dt
    assert np.max(np.abs(rate[mask] - expected[mask])) < 1e-6


def test_generation_trip_drops_frequency_everywhere():
    m = ring23()
    trip = DisturbanceSpec(kind=DisturbanceKind.GENERATION_TRIP, bus=3,
                           t_onset=0.5, magnitude=120.0)
    series = run_swing(m, SwingConfig(dt=1e-3, t_end=10.0), [trip])
    tail = series.t > 8.0
    for i in range(23):
        assert series.channel(i, "domega")[tail].mean() < 0


def test_load_shed_raises_frequency_everywhere():
    m = ring23()
    shed = DisturbanceSpec(kind=DisturbanceKind.LOAD_SHED, bus=3,
                           t_onset=0.5, magnitude=120.0)
    series = run_swing(m, SwingConfig(dt=1e-3, t_end=10.0), [shed])
    tail = series.t > 8.0
    for i in range(23):
        assert series.channel(i, "domega")[tail].mean() > 0


def test_line_trip_conserves_total_speed():
    """Tripping a flow-carrying line redistributes power with no net change."""
    from transwave.swing import ring_winding_angles
    m = ring23()
    trip = DisturbanceSpec(kind=DisturbanceKind.LINE_TRIP, line=(5, 6), t_onset=1.0)
    cfg = SwingConfig(dt=1e-3, t_end=10.0,
                      initial_delta=ring_winding_angles(23, 1))
    series = run_swing(m, cfg, [trip])
    dom_end = np.array([series.channel(i, "domega")[-1] for i in range(23)])
    assert abs(dom_end.sum()) < 1e-4
    # but the trip itself must be visible
    peak = max(np.max(np.abs(series.channel(i, "domega"))) for i in range(23))
    assert peak > 1e-4
