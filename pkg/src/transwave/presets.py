"""Built-in models and the single table of engine defaults.

`ring23()` is the stock uniform ring used throughout the docs and the
regression scenarios: 23 buses on a 2300 km ring, one aggregated generator
plant (100 coherent 120 MW machines, H = 10 s) and a 1000 MW load per bus,
0.325 ohm/km series impedance, 0.102 uH/m and 0.115 nF/m line constants,
100 MVA / 500 kV / 60 Hz bases.

Every value in DEFAULTS is echoed into run manifests so a run is fully
reproducible from its manifest.
"""

from __future__ import annotations

from .model import Bus, Line, NetworkModel, SystemBases, build_mesh, build_ring

RING23_BASES = SystemBases(s_base=100.0, v_base=500.0, f_nominal=60.0)

RING23_BUS = Bus(id=0, coord=(0.0, 0.0), gen_rating=120.0, inertia_h=10.0,
                 coherent_count=100, load_p=1000.0, emf_pu=1.0)

RING23_LINE = Line(from_bus=0, to_bus=1, length=100.0, r_per_len=0.325,
                   l_per_len=0.102e-6, c_per_len=0.115e-9, len_unit_em="m")


def ring23(inertia_h: float = 10.0, l_per_len: float = 0.102e-6,
           c_per_len: float = 0.115e-9) -> NetworkModel:
    """The stock 23-bus ring; keyword overrides rebuild it with one knob turned."""
    bus = Bus(id=0, coord=(0.0, 0.0), gen_rating=120.0, inertia_h=inertia_h,
              coherent_count=100, load_p=1000.0, emf_pu=1.0)
    line = Line(from_bus=0, to_bus=1, length=100.0, r_per_len=0.325,
                l_per_len=l_per_len, c_per_len=c_per_len, len_unit_em="m")
    return build_ring(23, 100.0, bus, line, bases=RING23_BASES)


def mesh(rows: int = 7, cols: int = 7, spacing_km: float = 100.0) -> NetworkModel:
    """Uniform rectangular mesh with the ring23 bus/line templates."""
    return build_mesh(rows, cols, spacing_km, RING23_BUS, RING23_LINE,
                      bases=RING23_BASES)


# One place for every tunable default.  Keys are grouped by engine; the CLI
# exposes each as a flag and records the effective value in the manifest.
DEFAULTS: dict[str, float | int | str] = {
    # electromechanical (swing) engine
    "swing.dt": 1e-3,                    # s, RK4 step
    "swing.t_end": 10.0,                 # s
    "swing.damping_d": 0.5,              # pu power per pu speed deviation
    "swing.record_every": 10,            # decimation of the dt grid
    # electromagnetic (EMT) engine
    "emt.dt": 0.0,                       # s; 0 = auto: min(tau_min/10, 1 us)
    "emt.t_end": 0.12,                   # s
    "emt.source_r": 0.1,                 # ohm, EMF series resistance
    "emt.source_l": 0.0,                 # H, EMF series inductance
    "emt.record_every": 1,
    "emt.pre_roll_cycles": 5,            # fundamental cycles before any onset
    # hybrid co-simulation
    "hybrid.dt_em": 1e-6,                # s
    "hybrid.rate_ratio": 1000,           # dt_mech = ratio * dt_em
    "hybrid.t_end": 6.0,                 # s
    "hybrid.record_every": 10,
    "hybrid.source_r": 0.1,              # ohm
    "hybrid.source_l": 2.653e-3,         # H (~1 ohm at 60 Hz)
    # disturbances
    "fault.resistance": 1.0,             # ohm
    "fault.duration": 0.1,               # s
    # wave analysis
    "detect.threshold_domega": 1e-4,     # pu
    "detect.threshold_v_frac": 0.02,     # fraction of nominal peak voltage
    # event locator
    "locate.grid": 50,                   # grid cells per axis
    "locate.inflate": 0.2,               # bounding-box inflation
}
