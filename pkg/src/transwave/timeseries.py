"""Uniformly sampled multi-channel waveform container plus CSV round-trip.

Channels are keyed "bus<i>.<quantity>" (e.g. "bus3.domega").  All channels
share the same time axis.  CSV layout: first column `t`, one column per
channel, values with 12 significant digits, LF line endings.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_CHANNEL_RE = re.compile(r"^bus(\d+)\.(\w+)$")


def channel_name(bus: int, quantity: str) -> str:
    return f"bus{bus}.{quantity}"


@dataclass
class TimeSeriesSet:
    t: np.ndarray
    data: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, arr in self.data.items():
            if arr.shape != self.t.shape:
                raise ValueError(f"channel {name}: length {arr.shape} != t {self.t.shape}")

    def channel(self, bus: int, quantity: str) -> np.ndarray:
        return self.data[channel_name(bus, quantity)]

    def has_channel(self, bus: int, quantity: str) -> bool:
        return channel_name(bus, quantity) in self.data

    def buses(self, quantity: str) -> list[int]:
        out = []
        for name in self.data:
            m = _CHANNEL_RE.match(name)
            if m and m.group(2) == quantity:
                out.append(int(m.group(1)))
        return sorted(out)

    def quantities(self) -> list[str]:
        qs = []
        for name in self.data:
            m = _CHANNEL_RE.match(name)
            if m and m.group(2) not in qs:
                qs.append(m.group(2))
        return qs

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def decimated(self, every: int) -> "TimeSeriesSet":
        if every <= 1:
            return self
        return TimeSeriesSet(t=self.t[::every],
                             data={k: v[::every] for k, v in self.data.items()},
                             meta=dict(self.meta))

    def to_csv(self, path: str | Path, decimate: int = 1) -> None:
        ts = self.decimated(decimate)
        names = list(ts.data)
        cols = [ts.t] + [ts.data[n] for n in names]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(["t"] + names) + "\n")
            for row in zip(*cols):
                fh.write(",".join(f"{x:.12g}" for x in row) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "TimeSeriesSet":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        if not header or header[0] != "t":
            raise ValueError(f"{path}: first CSV column must be 't'")
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        data = {name: raw[:, i + 1] for i, name in enumerate(header[1:])}
        return cls(t=raw[:, 0], data=data)
