"""Theory formulas, arrival detection, reflection pairing, classification.

Hand-evaluated expectations (worked out before the implementations):
  inertia_density(10, 100, 23, 120, 100, 100) = 2760000/220000 = 12.54545...
  inertia_density(5, ...)                     = 6.27272...
  inertia_density(10, 1, 2, 100, 100, 100)    = 2000/10000    = 0.2
  speed at omega=2*pi*60, V=1, theta=pi/2, h=12.54545, |z|=1.3e-4
      = sqrt(376.99112 / 3.261818e-3) = 339.97 km/s (to the paper rounding)
  theta pi/2 vs pi/3 ratio = sqrt(1/sin(pi/3)) = 1.07457
"""

import math

import numpy as np
import pytest

from transwave.analysis import (EM_SPEED_VACUUM, TheoryInputs, classify_event,
                                detect_arrivals, detect_reflection,
                                inertia_density, line_distances_km,
                                model_theory, run_sensitivity_sweep,
                                speed_mech_theory)
from transwave.errors import InsufficientArrivalsError, TopologyError
from transwave.model import DisturbanceKind, DisturbanceSpec, build_mesh, build_ring
from transwave.presets import RING23_BUS, RING23_LINE, ring23
from transwave.swing import SwingConfig, ring_winding_angles, run_swing
from transwave.timeseries import TimeSeriesSet, channel_name


# ---------------------------------------------------------------------------
# closed-form pieces
# ---------------------------------------------------------------------------

def test_inertia_density_stock_ring():
    h = inertia_density(10.0, 100, 23, 120.0, 100.0, 100.0)
    assert h == pytest.approx(12.545454545, rel=1e-9)
    assert h == pytest.approx(12.55, abs=0.01)


def test_inertia_density_halves_with_h():
    h10 = inertia_density(10.0, 100, 23, 120.0, 100.0, 100.0)
    h5 = inertia_density(5.0, 100, 23, 120.0, 100.0, 100.0)
    assert h5 == pytest.approx(h10 / 2, rel=1e-12)
    assert h5 == pytest.approx(6.27, abs=0.01)


def test_inertia_density_minimal_case():
    # 10*1*2*100 / (100*100*1), evaluated by hand
    assert inertia_density(10.0, 1, 2, 100.0, 100.0, 100.0) == pytest.approx(0.2)


def test_inertia_density_rejects_single_group():
    with pytest.raises(ValueError):
        inertia_density(10.0, 1, 1, 100.0, 100.0, 100.0)


def stock_theory_inputs(h=12.545454545454545, z=0.325 / 2500.0):
    return TheoryInputs(omega=2 * math.pi * 60, v_pu=1.0, theta=math.pi / 2,
                        h=h, z_abs=z)


def test_speed_mech_theory_stock_value():
    v = speed_mech_theory(stock_theory_inputs())
    assert v == pytest.approx(339.97, abs=0.5)


def test_speed_mech_doubling_h():
    v1 = speed_mech_theory(stock_theory_inputs())
    v2 = speed_mech_theory(stock_theory_inputs(h=2 * 12.545454545454545))
    assert v2 == pytest.approx(v1 / math.sqrt(2), rel=1e-12)


def test_speed_mech_theta_ratio():
    v90 = speed_mech_theory(stock_theory_inputs())
    base = stock_theory_inputs()
    v60 = speed_mech_theory(TheoryInputs(omega=base.omega, v_pu=base.v_pu,
                                         theta=math.pi / 3, h=base.h,
                                         z_abs=base.z_abs))
    assert v90 / v60 == pytest.approx(math.sqrt(1 / math.sin(math.pi / 3)), rel=1e-9)
    assert v90 / v60 == pytest.approx(1.0746, abs=1e-4)


def test_speed_scaling_invariant():
    # v(h)*sqrt(h) is independent of h
    vals = []
    for h in (1.0, 5.0, 12.5, 40.0):
        vals.append(speed_mech_theory(stock_theory_inputs(h=h)) * math.sqrt(h))
    assert np.ptp(vals) < 1e-9 * vals[0]


def test_model_theory_ring23():
    out = model_theory(ring23())
    assert out["h_density"] == pytest.approx(12.55, abs=0.01)
    assert out["v_mech_kms"] == pytest.approx(339.97, abs=0.5)
    assert out["v_em"] == pytest.approx(2.9198e8, rel=1e-3)
    assert out["v_vacuum"] == EM_SPEED_VACUUM


def test_model_theory_needs_generators():
    import dataclasses
    m = ring23()
    buses = tuple(dataclasses.replace(b, gen_rating=None, inertia_h=None)
                  for b in m.buses)
    with pytest.raises(ValueError, match="gen_rating/inertia_h"):
        model_theory(dataclasses.replace(m, buses=buses))


# ---------------------------------------------------------------------------
# arrival detection
# ---------------------------------------------------------------------------

def synthetic_step_series(model, speed_kms, amp=1e-3, dt=0.01, t_end=4.5,
                          origin=1, t0=0.1, shuffle=False):
    dist = line_distances_km(model, origin)
    t = np.arange(0.0, t_end + dt / 2, dt)
    order = list(range(model.n_buses))
    if shuffle:
        order = order[::-1]
    data = {}
    for i in order:
        x = np.where(t >= t0 + dist[i] / speed_kms - 1e-12, amp, 0.0)
        data[channel_name(i, "domega")] = x
    return TimeSeriesSet(t=t, data=data)


def test_detect_arrivals_two_point_quotient():
    """Steps arriving at t0 + hop*0.28 s recover 100/0.28 = 357.14 km/s."""
    m = ring23()
    series = synthetic_step_series(m, speed_kms=100.0 / 0.28)
    report = detect_arrivals(series, "domega", 1, m, threshold=1e-4, t_onset=0.1)
    assert report.fitted_speed == pytest.approx(357.142857, rel=1e-9)
    assert report.fit_r2 == pytest.approx(1.0, abs=1e-12)
    assert len(report.detected()) == 23


def test_detect_arrivals_flat_series():
    m = ring23()
    t = np.arange(0.0, 1.0, 0.01)
    data = {channel_name(i, "domega"): np.zeros_like(t) for i in range(23)}
    with pytest.raises(InsufficientArrivalsError):
        detect_arrivals(TimeSeriesSet(t=t, data=data), "domega", 1, m, 1e-4)


def test_detect_arrivals_order_free():
    m = ring23()
    a = detect_arrivals(synthetic_step_series(m, 357.142857), "domega", 1, m, 1e-4)
    b = detect_arrivals(synthetic_step_series(m, 357.142857, shuffle=True),
                        "domega", 1, m, 1e-4)
    assert a == b


def test_detect_arrivals_monotone_on_ring():
    m = ring23()
    fault = DisturbanceSpec(kind=DisturbanceKind.FAULT, bus=1, t_onset=0.5,
                            magnitude=1.0, duration=0.2)
    series = run_swing(m, SwingConfig(dt=1e-3, t_end=6.0), [fault])
    report = detect_arrivals(series, "domega", 1, m, 1e-4, t_onset=0.5)
    det = sorted(report.detected(), key=lambda e: e.distance_km)
    arrs = [e.arrival_s for e in det]
    dists = [e.distance_km for e in det]
    for (d1, a1), (d2, a2) in zip(zip(dists, arrs), zip(dists[1:], arrs[1:])):
        if d2 > d1:
            assert a2 >= a1
    assert all(a >= 0.5 for a in arrs)
    assert report.fitted_speed > 0


def test_detect_arrivals_rejects_bad_threshold():
    m = ring23()
    series = synthetic_step_series(m, 357.0)
    with pytest.raises(ValueError):
        detect_arrivals(series, "domega", 1, m, threshold=0.0)


def test_line_distances_on_ring():
    m = ring23()
    d = line_distances_km(m, 0)
    assert d[0] == 0.0
    assert d[1] == d[22] == 100.0
    assert d[11] == d[12] == 1100.0


# ---------------------------------------------------------------------------
# reflection pairing
# ---------------------------------------------------------------------------

def test_reflection_ring23_meeting_pair():
    m = ring23()
    series = synthetic_step_series(m, 350.0, origin=0)
    res = detect_reflection(series, 0, m, threshold=1e-4)
    assert res.meeting_buses == (11, 12)
    assert res.arrivals[0] == res.arrivals[1]


def test_reflection_ring4_single_bus():
    m = build_ring(4, 100.0, RING23_BUS, RING23_LINE)
    series = synthetic_step_series(m, 350.0, origin=0)
    res = detect_reflection(series, 0, m, threshold=1e-4)
    assert res.meeting_buses == (2,)


def test_reflection_rejects_mesh():
    m = build_mesh(3, 3, 100.0, RING23_BUS, RING23_LINE)
    t = np.arange(0.0, 1.0, 0.01)
    data = {channel_name(i, "domega"): np.ones_like(t) for i in range(9)}
    with pytest.raises(TopologyError):
        detect_reflection(TimeSeriesSet(t=t, data=data), 0, m)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def classified_runs():
    m = ring23()
    cfg = SwingConfig(dt=1e-3, t_end=20.0)
    trip = DisturbanceSpec(kind=DisturbanceKind.GENERATION_TRIP, bus=3,
                           t_onset=1.0, magnitude=120.0)
    shed = DisturbanceSpec(kind=DisturbanceKind.LOAD_SHED, bus=3,
                           t_onset=1.0, magnitude=120.0)
    line = DisturbanceSpec(kind=DisturbanceKind.LINE_TRIP, line=(5, 6), t_onset=1.0)
    wind_cfg = SwingConfig(dt=1e-3, t_end=20.0,
                           initial_delta=ring_winding_angles(23, 1))
    return {
        DisturbanceKind.GENERATION_TRIP: run_swing(m, cfg, [trip]),
        DisturbanceKind.LOAD_SHED: run_swing(m, cfg, [shed]),
        DisturbanceKind.LINE_TRIP: run_swing(m, wind_cfg, [line]),
    }


@pytest.mark.parametrize("kind", [DisturbanceKind.GENERATION_TRIP,
                                  DisturbanceKind.LOAD_SHED,
                                  DisturbanceKind.LINE_TRIP])
def test_classify_event_kinds(classified_runs, kind):
    assert classify_event(classified_runs[kind]) == kind


def test_classify_event_no_event():
    t = np.arange(0.0, 1.0, 0.01)
    data = {channel_name(i, "domega"): np.zeros_like(t) for i in range(5)}
    assert classify_event(TimeSeriesSet(t=t, data=data)) is None


def test_classify_event_time_shift_invariant(classified_runs):
    series = classified_runs[DisturbanceKind.GENERATION_TRIP]
    shifted = TimeSeriesSet(t=series.t + 7.5, data=series.data)
    assert classify_event(shifted) == classify_event(series)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def ring_fault_scenario():
    return [DisturbanceSpec(kind=DisturbanceKind.FAULT, bus=1, t_onset=0.5,
                            magnitude=1.0, duration=0.2)]


def test_inertia_sweep_ratio():
    m = ring23()
    pts = run_sensitivity_sweep(
        m, ring_fault_scenario(), "inertia_h", [10.0, 5.0], "swing",
        swing_config=SwingConfig(dt=1e-3, t_end=6.0))
    assert all(p.status == "ok" for p in pts)
    ratio = pts[1].fitted_speed / pts[0].fitted_speed
    assert 1.30 <= ratio <= 1.55
    # theory column scales exactly as sqrt(2)
    assert pts[1].theory_speed / pts[0].theory_speed == pytest.approx(
        math.sqrt(2), rel=1e-9)


def test_inductance_sweep_decreases():
    m = ring23()
    pts = run_sensitivity_sweep(
        m, ring_fault_scenario(), "l_per_len", [0.102e-6, 0.2e-6], "swing",
        swing_config=SwingConfig(dt=1e-3, t_end=8.0))
    assert all(p.status == "ok" for p in pts)
    assert pts[1].fitted_speed < pts[0].fitted_speed
    assert pts[1].theory_speed < pts[0].theory_speed


def test_sweep_isolates_point_failures():
    m = ring23()
    # second value makes dt > tau for the EMT engine: that point must fail
    # without killing the first
    from transwave.emt import EmtConfig
    pts = run_sensitivity_sweep(
        m, [DisturbanceSpec(kind=DisturbanceKind.FAULT, bus=1, t_onset=0.1,
                            magnitude=1.0, duration=0.004)],
        "c_per_len", [0.115e-9, 1e-22], "emt",
        emt_config=EmtConfig(dt=1e-6, t_end=0.104, source_l=2.653e-3))
    assert pts[0].status == "ok"
    assert pts[1].status.startswith("failed")


def test_sweep_rejects_bad_inputs():
    m = ring23()
    with pytest.raises(ValueError):
        run_sensitivity_sweep(m, ring_fault_scenario(), "inertia_h", [], "swing")
    with pytest.raises(ValueError):
        run_sensitivity_sweep(m, ring_fault_scenario(), "banana", [1.0], "swing")
    with pytest.raises(ValueError):
        run_sensitivity_sweep(m, ring_fault_scenario(), "inertia_h", [-1.0], "swing")
