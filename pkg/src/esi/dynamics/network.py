"""Network description: buses, lines, constant-impedance loads, generators.

Inertia ``M`` and damping ``D`` use the per-unit-speed convention: the
rotor equation integrated by the simulator is

    (M / omega_s) d(omega)/dt = T_m - P_e - D (omega - omega_s) / omega_s

with ``omega`` in rad/s, so ``M`` is the mechanical starting time ``2H`` in
seconds and ``D`` is per-unit torque per per-unit speed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class NetworkConfigError(ValueError):
    """Invalid network description; ``pointer`` is a JSON pointer into it."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


@dataclass(frozen=True)
class GeneratorParams:
    M: float
    D: float
    X_d: float
    X_q: float
    X_d_prime: float
    T_do_prime: float
    R_s: float = 0.0
    K_A: float = 20.0
    T_A: float = 0.05
    T_m: float = float("nan")
    V_ref: float = float("nan")
    omega_s: float = 2 * math.pi * 60.0

    def validate(self, where: str = ""):
        checks = [
            (self.M > 0, "M must be positive"),
            (self.T_do_prime > 0, "T_do_prime must be positive"),
            (self.T_A > 0, "T_A must be positive"),
            (self.X_d_prime > 0, "X_d_prime must be positive"),
            (self.X_d >= self.X_d_prime, "X_d must be >= X_d_prime"),
            (self.X_q > 0, "X_q must be positive"),
            (self.omega_s > 0, "omega_s must be positive"),
            (self.D >= 0, "D must be non-negative"),
            (self.R_s >= 0, "R_s must be non-negative"),
            (self.K_A >= 0, "K_A must be non-negative"),
        ]
        for ok, msg in checks:
            if not ok:
                raise NetworkConfigError(where, msg)


@dataclass
class Generator:
    name: str
    bus: int
    params: GeneratorParams
    P: float = 0.0           # dispatch (pu), ignored on the slack bus
    V: float = 1.0           # terminal voltage set-point (pu)


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float = 0.0
    x: float = 0.1
    b: float = 0.0           # total line charging
    tap: float = 1.0


@dataclass(frozen=True)
class Load:
    bus: int
    P: float
    Q: float = 0.0           # consumption at 1 pu voltage


@dataclass
class NetworkModel:
    """Assembled network with admittance matrices.

    ``Y_net`` holds lines and shunts; ``load_y`` the constant-impedance load
    admittance per bus. The full matrix used by the dynamics is
    ``Y_net + diag(load_y * load_scale)``.
    """

    name: str
    buses: list
    Y_net: np.ndarray
    load_y: np.ndarray
    generators: list
    slack: int
    infinite: dict                       # bus -> fixed complex voltage
    lines: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    frequency: float = 60.0
    load_scale: np.ndarray | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.load_scale is None:
            self.load_scale = np.ones(len(self.buses))

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    def index(self, bus) -> int:
        return self.buses.index(bus)

    @property
    def Y(self) -> np.ndarray:
        return self.Y_net + np.diag(self.load_y * self.load_scale)

    @property
    def gen_bus_index(self) -> np.ndarray:
        return np.array([self.index(g.bus) for g in self.generators], dtype=int)

    def generator_index(self, key) -> int:
        if isinstance(key, (int, np.integer)) and not isinstance(key, bool):
            if 0 <= key < self.n_gen:
                return int(key)
            raise KeyError(f"no generator with index {key}")
        for k, g in enumerate(self.generators):
            if g.name == key:
                return k
        raise KeyError(f"no generator named {key!r}")

    def generator_at(self, bus) -> int | None:
        for k, g in enumerate(self.generators):
            if g.bus == bus:
                return k
        return None

    def total_inertia(self) -> float:
        return float(sum(g.params.M for g in self.generators))

    def without_generator(self, key) -> "NetworkModel":
        """Copy of the network with one generator removed."""
        k = self.generator_index(key)
        cfg = json.loads(json.dumps(self.config)) if self.config else None
        if cfg is not None:
            removed = cfg["generators"].pop(k)
            if cfg.get("slack") == removed["bus"]:
                cfg["slack"] = _pick_slack(cfg)
            return build_network(cfg)
        gens = [g for j, g in enumerate(self.generators) if j != k]
        slack = self.slack
        if self.generators[k].bus == slack:
            slack = gens[0].bus if gens else next(iter(self.infinite))
        return replace(self, generators=gens, slack=slack, load_scale=self.load_scale.copy())


def _pick_slack(cfg: dict):
    gens = sorted(cfg.get("generators", []), key=lambda g: -float(g.get("P", 0.0)))
    if cfg.get("infinite_buses"):
        return cfg["infinite_buses"][0]["bus"]
    if gens:
        return gens[0]["bus"]
    return None


_PARAM_FIELDS = {f for f in GeneratorParams.__dataclass_fields__}


def _require(d: dict, key: str, pointer: str):
    if key not in d:
        raise NetworkConfigError(f"{pointer}/{key}", "missing required field")
    return d[key]


def _number(value, pointer: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise NetworkConfigError(pointer, f"expected a number, got {value!r}") from None
    if not math.isfinite(v):
        raise NetworkConfigError(pointer, "must be finite")
    return v


def build_network(config) -> NetworkModel:
    """Validate a network description (dict or JSON path) and assemble it."""
    if isinstance(config, (str, Path)):
        with open(config) as fh:
            config = json.load(fh)
    if not isinstance(config, dict):
        raise NetworkConfigError("", "network description must be a JSON object")
    frequency = _number(config.get("frequency", 60.0), "/frequency")
    omega_s = 2 * math.pi * frequency

    raw_buses = _require(config, "buses", "")
    buses = []
    for k, b in enumerate(raw_buses):
        bid = b["id"] if isinstance(b, dict) else b
        if not isinstance(bid, int) or isinstance(bid, bool):
            raise NetworkConfigError(f"/buses/{k}", f"bus id must be an integer, got {bid!r}")
        if bid in buses:
            raise NetworkConfigError(f"/buses/{k}", f"duplicate bus id {bid}")
        buses.append(bid)
    if not buses:
        raise NetworkConfigError("/buses", "no buses declared")
    idx = {b: k for k, b in enumerate(buses)}

    def bus_ref(value, pointer):
        if value not in idx:
            raise NetworkConfigError(pointer, f"undeclared bus {value!r}")
        return value

    n = len(buses)
    Y = np.zeros((n, n), dtype=complex)
    lines = []
    for k, ln in enumerate(config.get("lines", [])):
        p = f"/lines/{k}"
        a = bus_ref(_require(ln, "from", p), f"{p}/from")
        b = bus_ref(_require(ln, "to", p), f"{p}/to")
        if a == b:
            raise NetworkConfigError(p, "line connects a bus to itself")
        line = Line(a, b, _number(ln.get("r", 0.0), f"{p}/r"), _number(_require(ln, "x", p), f"{p}/x"),
                    _number(ln.get("b", 0.0), f"{p}/b"), _number(ln.get("tap", 1.0), f"{p}/tap"))
        z = complex(line.r, line.x)
        if abs(z) == 0:
            raise NetworkConfigError(p, "zero series impedance")
        ys = 1 / z
        i, j = idx[a], idx[b]
        t = line.tap
        Y[i, i] += ys / t ** 2 + 0.5j * line.b
        Y[j, j] += ys + 0.5j * line.b
        Y[i, j] -= ys / t
        Y[j, i] -= ys / t
        lines.append(line)

    for k, sh in enumerate(config.get("shunts", [])):
        p = f"/shunts/{k}"
        b = bus_ref(_require(sh, "bus", p), f"{p}/bus")
        Y[idx[b], idx[b]] += complex(_number(sh.get("G", 0.0), f"{p}/G"), _number(sh.get("B", 0.0), f"{p}/B"))

    load_y = np.zeros(n, dtype=complex)
    loads = []
    for k, ld in enumerate(config.get("loads", [])):
        p = f"/loads/{k}"
        b = bus_ref(_require(ld, "bus", p), f"{p}/bus")
        load = Load(b, _number(_require(ld, "P", p), f"{p}/P"), _number(ld.get("Q", 0.0), f"{p}/Q"))
        load_y[idx[b]] += complex(load.P, -load.Q)
        loads.append(load)

    defaults = config.get("generator_defaults", {})
    gens = []
    seen_bus = set()
    for k, g in enumerate(config.get("generators", [])):
        p = f"/generators/{k}"
        bus = bus_ref(_require(g, "bus", p), f"{p}/bus")
        if bus in seen_bus:
            raise NetworkConfigError(f"{p}/bus", f"bus {bus} already has a generator")
        seen_bus.add(bus)
        raw = dict(defaults)
        raw.update(g.get("params", {}))
        unknown = set(raw) - _PARAM_FIELDS
        if unknown:
            raise NetworkConfigError(f"{p}/params", f"unknown parameters {sorted(unknown)}")
        for f in ("M", "D", "X_d", "X_q", "X_d_prime", "T_do_prime"):
            if f not in raw:
                raise NetworkConfigError(f"{p}/params/{f}", "missing required parameter")
        vals = {f: _number(v, f"{p}/params/{f}") for f, v in raw.items()}
        vals.setdefault("omega_s", omega_s)
        params = GeneratorParams(**vals)
        params.validate(f"{p}/params")
        gens.append(Generator(str(g.get("name", f"G{k + 1}")), bus, params,
                              _number(g.get("P", 0.0), f"{p}/P"), _number(g.get("V", 1.0), f"{p}/V")))

    infinite = {}
    for k, ib in enumerate(config.get("infinite_buses", [])):
        p = f"/infinite_buses/{k}"
        b = bus_ref(_require(ib, "bus", p), f"{p}/bus")
        if b in seen_bus:
            raise NetworkConfigError(f"{p}/bus", "infinite bus cannot host a generator")
        V = _number(ib.get("V", 1.0), f"{p}/V")
        th = _number(ib.get("theta", 0.0), f"{p}/theta")
        infinite[b] = V * np.exp(1j * th)

    if not gens and not infinite:
        raise NetworkConfigError("/generators", "network has no generation")

    slack = config.get("slack")
    if slack is None:
        slack = _pick_slack(config)
    elif slack not in seen_bus and slack not in infinite:
        raise NetworkConfigError("/slack", f"slack bus {slack!r} has no generator or fixed source")

    _check_connected(buses, lines)
    return NetworkModel(
        name=str(config.get("name", "network")), buses=buses, Y_net=Y, load_y=load_y,
        generators=gens, slack=slack, infinite=infinite, lines=lines, loads=loads,
        frequency=frequency, config=json.loads(json.dumps(config)),
    )


def _check_connected(buses, lines):
    parent = {b: b for b in buses}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for ln in lines:
        parent[find(ln.from_bus)] = find(ln.to_bus)
    roots = {find(b) for b in buses}
    if len(roots) > 1:
        islands = {}
        for b in buses:
            islands.setdefault(find(b), []).append(b)
        parts = sorted(sorted(v) for v in islands.values())
        raise NetworkConfigError("/lines", f"bus graph is disconnected: islands {parts}")
