"""Least-squares multilateration of a disturbance origin from wave arrivals.

Minimizes J(x, y, t0) = sum_i w_i (t_i - t0 - d_i(x, y)/v)^2 with Euclidean
planar distances d_i.  For each candidate position t0 has a closed form
(the weighted mean of t_i - d_i/v), so a coarse grid search stays 2-D; the
grid minimum seeds a Gauss-Newton refinement.  `estimate_speed_and_locate`
treats the slowness 1/v as a fourth unknown, which per candidate position
is just a weighted linear regression of arrival time on distance.

Degenerate inputs (collinear sensors, equidistant sensors for the joint
fit) produce best-effort estimates carrying a "degenerate-geometry" flag;
a refinement that fails to converge returns the grid minimum flagged
"unrefined".  Grid argmin ties break deterministically toward the lowest
x, then lowest y.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, UnderdeterminedError

GRID_CELLS = 50
BBOX_INFLATE = 0.2
GN_STEP_TOL = 1e-6       # km
GN_MAX_ITER = 100


@dataclass(frozen=True)
class SensorArrival:
    sensor_id: int
    x_km: float
    y_km: float
    arrival_s: float
    weight: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.arrival_s):
            raise ValueError(f"sensor {self.sensor_id}: arrival must be finite")
        if self.weight < 0:
            raise ValueError(f"sensor {self.sensor_id}: weight must be >= 0")


@dataclass(frozen=True)
class LocationEstimate:
    x_km: float
    y_km: float
    t0_s: float
    speed_kms: float
    residual_rms_s: float
    abs_error_km: float | None = None
    flags: tuple[str, ...] = ()

    def to_json(self) -> str:
        obj = {"x_km": self.x_km, "y_km": self.y_km, "t0_s": self.t0_s,
               "speed_kms": self.speed_kms, "residual_rms_s": self.residual_rms_s}
        if self.abs_error_km is not None:
            obj["abs_error_km"] = self.abs_error_km
        if self.flags:
            obj["flags"] = list(self.flags)
        return json.dumps(obj, indent=2)


def _active(arrivals: list[SensorArrival]):
    act = [a for a in arrivals if a.weight > 0]
    p = np.array([[a.x_km, a.y_km] for a in act]).reshape(-1, 2)
    t = np.array([a.arrival_s for a in act])
    w = np.array([a.weight for a in act])
    return p, t, w


def _collinear(p: np.ndarray) -> bool:
    if len(p) < 3:
        return True
    c = p - p.mean(axis=0)
    s = np.linalg.svd(c, compute_uv=False)
    return s[-1] < 1e-9 * max(s[0], 1.0)


def _default_bounds(p: np.ndarray) -> tuple[float, float, float, float]:
    x0, y0 = p.min(axis=0)
    x1, y1 = p.max(axis=0)
    pad_x = BBOX_INFLATE * max(x1 - x0, 1e-6)
    pad_y = BBOX_INFLATE * max(y1 - y0, 1e-6)
    return x0 - pad_x, x1 + pad_x, y0 - pad_y, y1 + pad_y


def _dists(p: np.ndarray, x: float, y: float) -> np.ndarray:
    return np.hypot(p[:, 0] - x, p[:, 1] - y)


def _objective(p, t, w, x, y, slowness):
    d = _dists(p, x, y)
    t0 = np.sum(w * (t - d * slowness)) / np.sum(w)
    r = t - t0 - d * slowness
    return float(np.sum(w * r * r)), t0


def _grid_search(p, t, w, bounds, slowness=None):
    """Coarse scan; slowness None means fit it per candidate (joint mode)."""
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, GRID_CELLS)
    ys = np.linspace(y0, y1, GRID_CELLS)
    best = None
    sw = np.sum(w)
    for x in xs:                      # x outer: ties break toward lowest x
        for y in ys:
            d = _dists(p, x, y)
            if slowness is None:
                s_fit, t0 = _fit_slowness(d, t, w)
                if s_fit is None or s_fit <= 0:
                    continue
                r = t - t0 - d * s_fit
                j = float(np.sum(w * r * r))
                cand = (j, x, y, t0, s_fit)
            else:
                j, t0 = _objective(p, t, w, x, y, slowness)
                cand = (j, x, y, t0, slowness)
            if best is None or cand[0] < best[0] - 1e-18:
                best = cand
    return best


def _fit_slowness(d, t, w):
    """Weighted regression t ~ t0 + s*d; returns (s, t0) or (None, t0)."""
    sw = np.sum(w)
    dm = np.sum(w * d) / sw
    tm = np.sum(w * t) / sw
    var = np.sum(w * (d - dm) ** 2)
    if var < 1e-12 * max(dm * dm, 1.0):
        return None, tm               # all sensors equidistant
    s = float(np.sum(w * (d - dm) * (t - tm)) / var)
    t0 = tm - s * dm
    return s, float(t0)


def _gauss_newton(p, t, w, x, y, t0, slowness, fit_speed):
    """Refine (x, y, t0[, slowness]); returns (x, y, t0, slowness, converged)."""
    sqw = np.sqrt(w)
    theta = np.array([x, y, t0, slowness] if fit_speed else [x, y, t0])
    for _ in range(GN_MAX_ITER):
        x, y, t0 = theta[0], theta[1], theta[2]
        s = theta[3] if fit_speed else slowness
        d = _dists(p, x, y)
        d_safe = np.maximum(d, 1e-12)
        r = t - t0 - d * s
        # columns hold -dr/dtheta so that theta += lstsq(jac, r)
        jac = np.empty((len(t), len(theta)))
        jac[:, 0] = s * (x - p[:, 0]) / d_safe
        jac[:, 1] = s * (y - p[:, 1]) / d_safe
        jac[:, 2] = 1.0
        if fit_speed:
            jac[:, 3] = d
        a = jac * sqw[:, None]
        b = r * sqw
        try:
            step, *_ = np.linalg.lstsq(a, b, rcond=None)
        except np.linalg.LinAlgError:
            return theta, False
        theta = theta + step
        if fit_speed and theta[3] <= 0:
            theta[3] = max(theta[3], 1e-12)
        if np.hypot(step[0], step[1]) < GN_STEP_TOL:
            return theta, True
    return theta, False


def _finish(p, t, w, theta, fit_speed, slowness, flags, truth, grid_j):
    x, y, t0 = float(theta[0]), float(theta[1]), float(theta[2])
    s = float(theta[3]) if fit_speed else slowness
    d = _dists(p, x, y)
    r = t - t0 - d * s
    j = float(np.sum(w * r * r))
    if j > grid_j:                     # refinement may never lose to the grid
        raise AssertionError("refinement worsened the objective")
    rms = math.sqrt(j / np.sum(w))
    abs_err = None
    if truth is not None:
        abs_err = float(math.hypot(x - truth[0], y - truth[1]))
    return LocationEstimate(x_km=x, y_km=y, t0_s=t0, speed_kms=1.0 / s,
                            residual_rms_s=rms, abs_error_km=abs_err,
                            flags=tuple(flags))


def locate(arrivals: list[SensorArrival], speed_kms: float,
           bounds: tuple[float, float, float, float] | None = None,
           truth: tuple[float, float] | None = None) -> LocationEstimate:
    """Position and origin time for a known propagation speed (>= 3 sensors)."""
    if not speed_kms > 0:
        raise ValueError("speed must be positive")
    p, t, w = _active(arrivals)
    if len(p) < 3:
        raise UnderdeterminedError(
            f"{len(p)} usable sensors, need at least 3 for a 2-D fix")
    flags = []
    if _collinear(p):
        flags.append("degenerate-geometry")
    slowness = 1.0 / speed_kms
    b = bounds if bounds is not None else _default_bounds(p)
    j_grid, gx, gy, gt0, _ = _grid_search(p, t, w, b, slowness)
    theta, ok = _gauss_newton(p, t, w, gx, gy, gt0, slowness, fit_speed=False)
    if not ok:
        flags.append("unrefined")
        theta = np.array([gx, gy, gt0])
    else:
        j_ref, _ = _objective(p, t, w, theta[0], theta[1], slowness)
        if j_ref > j_grid:
            flags.append("unrefined")
            theta = np.array([gx, gy, gt0])
    return _finish(p, t, w, theta, False, slowness, flags, truth,
                   grid_j=j_grid + 1e-30)


def estimate_speed_and_locate(arrivals: list[SensorArrival],
                              bounds: tuple[float, float, float, float] | None = None,
                              truth: tuple[float, float] | None = None
                              ) -> LocationEstimate:
    """Joint fit of position, origin time and speed (>= 4 sensors)."""
    p, t, w = _active(arrivals)
    if len(p) < 4:
        raise UnderdeterminedError(
            f"{len(p)} usable sensors, need at least 4 to also fit the speed")
    flags = []
    if _collinear(p):
        flags.append("degenerate-geometry")
    b = bounds if bounds is not None else _default_bounds(p)
    best = _grid_search(p, t, w, b, slowness=None)
    if best is None:
        # slowness unidentifiable everywhere (all sensors equidistant)
        flags.append("degenerate-geometry")
        cx, cy = p.mean(axis=0)
        sw = np.sum(w)
        t0 = float(np.sum(w * t) / sw)
        return LocationEstimate(x_km=float(cx), y_km=float(cy), t0_s=t0,
                                speed_kms=float("nan"),
                                residual_rms_s=float(
                                    math.sqrt(np.sum(w * (t - t0) ** 2) / sw)),
                                abs_error_km=None, flags=tuple(flags))
    j_grid, gx, gy, gt0, gs = best
    theta, ok = _gauss_newton(p, t, w, gx, gy, gt0, gs, fit_speed=True)
    if not ok:
        flags.append("unrefined")
        theta = np.array([gx, gy, gt0, gs])
    else:
        d = _dists(p, theta[0], theta[1])
        r = t - theta[2] - d * theta[3]
        if float(np.sum(w * r * r)) > j_grid:
            flags.append("unrefined")
            theta = np.array([gx, gy, gt0, gs])
    return _finish(p, t, w, theta, True, None, flags, truth,
                   grid_j=j_grid + 1e-30)


# ---------------------------------------------------------------------------
# forward model and file plumbing
# ---------------------------------------------------------------------------

def forward_arrivals(sensors: list[tuple[int, float, float]], event: tuple[float, float],
                     t0: float, speed_kms: float,
                     weights: list[float] | None = None) -> list[SensorArrival]:
    """Exact arrivals t0 + |sensor - event| / v; the round-trip oracle."""
    out = []
    for k, (sid, x, y) in enumerate(sensors):
        d = math.hypot(x - event[0], y - event[1])
        out.append(SensorArrival(sensor_id=sid, x_km=x, y_km=y,
                                 arrival_s=t0 + d / speed_kms,
                                 weight=1.0 if weights is None else weights[k]))
    return out


def read_arrivals_csv(path: str | Path) -> list[SensorArrival]:
    """CSV rows: sensor_id,x_km,y_km,arrival_s[,weight]."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[:4] != ["sensor_id", "x_km", "y_km", "arrival_s"]:
            raise ParseError("expected header sensor_id,x_km,y_km,arrival_s[,weight]",
                             path=str(path))
        for ln, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) not in (4, 5):
                raise ParseError(f"expected 4 or 5 fields, got {len(parts)}",
                                 path=str(path), line=ln, column=1)
            try:
                out.append(SensorArrival(
                    sensor_id=int(parts[0]), x_km=float(parts[1]),
                    y_km=float(parts[2]), arrival_s=float(parts[3]),
                    weight=float(parts[4]) if len(parts) == 5 else 1.0))
            except ValueError as e:
                raise ParseError(str(e), path=str(path), line=ln, column=1) from e
    return out


def write_arrivals_csv(arrivals: list[SensorArrival], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sensor_id,x_km,y_km,arrival_s,weight\n")
        for a in arrivals:
            # repr round-trips float64 exactly
            fh.write(f"{a.sensor_id},{a.x_km!r},{a.y_km!r},"
                     f"{a.arrival_s!r},{a.weight!r}\n")
