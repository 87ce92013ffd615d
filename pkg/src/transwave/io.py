"""JSON file formats for networks and scenarios.

One file may carry any subset of the top-level keys `bases`, `buses`,
`lines`, `disturbances`.  Field names mirror the dataclasses (snake_case),
units are as declared there.  Unknown keys are rejected so typos fail loudly
instead of silently using defaults.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ParseError
from .model import (Bus, DisturbanceKind, DisturbanceSpec, Line, NetworkModel,
                    SystemBases)

_TOP_KEYS = {"bases", "buses", "lines", "disturbances"}
_BASES_KEYS = {"s_base", "v_base", "f_nominal"}
_BUS_KEYS = {"id", "coord", "gen_rating", "inertia_h", "coherent_count",
             "load_p", "emf_pu"}
_LINE_KEYS = {"from_bus", "to_bus", "length", "r_per_len", "l_per_len",
              "c_per_len", "len_unit_em"}
_DIST_KEYS = {"kind", "bus", "line", "t_onset", "magnitude", "duration"}


def _load_json(path: str | Path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, path=str(path), line=e.lineno, column=e.colno) from e
    if not isinstance(obj, dict):
        raise ParseError("top level must be a JSON object", path=str(path))
    unknown = set(obj) - _TOP_KEYS
    if unknown:
        raise ParseError(f"unknown top-level key(s): {sorted(unknown)}", path=str(path))
    return obj


def _check_keys(entry: dict, allowed: set[str], required: set[str],
                ctx: str, path: str) -> None:
    if not isinstance(entry, dict):
        raise ParseError(f"{ctx} must be an object", path=path)
    unknown = set(entry) - allowed
    if unknown:
        raise ParseError(f"{ctx}: unknown key(s) {sorted(unknown)}", path=path)
    missing = required - set(entry)
    if missing:
        raise ParseError(f"{ctx}: missing key(s) {sorted(missing)}", path=path)


def read_network(path: str | Path) -> NetworkModel:
    obj = _load_json(path)
    p = str(path)
    for key in ("bases", "buses", "lines"):
        if key not in obj:
            raise ParseError(f"network file needs top-level key {key!r}", path=p)
    _check_keys(obj["bases"], _BASES_KEYS, _BASES_KEYS, "bases", p)
    try:
        bases = SystemBases(**obj["bases"])
    except (TypeError, ValueError) as e:
        raise ParseError(f"bases: {e}", path=p) from e

    buses = []
    for i, entry in enumerate(obj["buses"]):
        _check_keys(entry, _BUS_KEYS, {"id", "coord"}, f"buses[{i}]", p)
        entry = dict(entry)
        coord = entry.pop("coord")
        if (not isinstance(coord, (list, tuple))) or len(coord) != 2:
            raise ParseError(f"buses[{i}]: coord must be [x_km, y_km]", path=p)
        buses.append(Bus(coord=(float(coord[0]), float(coord[1])), **entry))

    lines = []
    for i, entry in enumerate(obj["lines"]):
        _check_keys(entry, _LINE_KEYS,
                    {"from_bus", "to_bus", "length", "r_per_len",
                     "l_per_len", "c_per_len"}, f"lines[{i}]", p)
        lines.append(Line(**entry))
    return NetworkModel(bases=bases, buses=tuple(buses), lines=tuple(lines))


def read_scenario(path: str | Path) -> list[DisturbanceSpec]:
    obj = _load_json(path)
    p = str(path)
    if "disturbances" not in obj:
        raise ParseError("scenario file needs top-level key 'disturbances'", path=p)
    out = []
    for i, entry in enumerate(obj["disturbances"]):
        _check_keys(entry, _DIST_KEYS, {"kind", "t_onset"}, f"disturbances[{i}]", p)
        entry = dict(entry)
        kind_raw = entry.pop("kind")
        try:
            kind = DisturbanceKind(kind_raw)
        except ValueError:
            raise ParseError(
                f"disturbances[{i}]: unknown kind {kind_raw!r} "
                f"(expected one of {[k.value for k in DisturbanceKind]})", path=p)
        line = entry.pop("line", None)
        if line is not None:
            if (not isinstance(line, (list, tuple))) or len(line) != 2:
                raise ParseError(f"disturbances[{i}]: line must be [from, to]", path=p)
            line = (int(line[0]), int(line[1]))
        try:
            out.append(DisturbanceSpec(kind=kind, line=line, **entry))
        except ValueError as e:
            raise ParseError(f"disturbances[{i}]: {e}", path=p) from e
    return out


def network_to_dict(model: NetworkModel) -> dict:
    buses = []
    for b in model.buses:
        entry = {"id": b.id, "coord": list(b.coord)}
        if b.gen_rating is not None:
            entry["gen_rating"] = b.gen_rating
        if b.inertia_h is not None:
            entry["inertia_h"] = b.inertia_h
        entry["coherent_count"] = b.coherent_count
        entry["load_p"] = b.load_p
        entry["emf_pu"] = b.emf_pu
        buses.append(entry)
    lines = [{"from_bus": ln.from_bus, "to_bus": ln.to_bus, "length": ln.length,
              "r_per_len": ln.r_per_len, "l_per_len": ln.l_per_len,
              "c_per_len": ln.c_per_len, "len_unit_em": ln.len_unit_em}
             for ln in model.lines]
    return {"bases": {"s_base": model.bases.s_base, "v_base": model.bases.v_base,
                      "f_nominal": model.bases.f_nominal},
            "buses": buses, "lines": lines}


def scenario_to_dict(disturbances: list[DisturbanceSpec]) -> dict:
    out = []
    for d in disturbances:
        entry: dict = {"kind": d.kind.value, "t_onset": d.t_onset}
        if d.kind == DisturbanceKind.LINE_TRIP:
            entry["line"] = list(d.line)
        else:
            entry["bus"] = d.bus
        if d.kind != DisturbanceKind.LINE_TRIP:
            entry["magnitude"] = d.magnitude
        if d.duration is not None:
            entry["duration"] = d.duration
        out.append(entry)
    return {"disturbances": out}


def write_network(model: NetworkModel, path: str | Path) -> None:
    _write_json(network_to_dict(model), path)


def write_scenario(disturbances: list[DisturbanceSpec], path: str | Path) -> None:
    _write_json(scenario_to_dict(disturbances), path)


def _write_json(obj: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8",
                          newline="\n")
