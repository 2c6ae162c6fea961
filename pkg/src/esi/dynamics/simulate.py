"""Fixed-step RK4 time-domain simulation with discrete events."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dae import (AlgebraicError, GenArrays, ReducedNetwork, StatorSolver, algebraic_residual,
                  derivatives, state_names)
from .equilibrium import Equilibrium
from .network import NetworkModel

EVENT_KINDS = ("vref_step", "load_step", "trip")
MAX_STEP = 1e-3


class ScenarioError(ValueError):
    pass


class SimulationError(RuntimeError):
    def __init__(self, message: str, time: float):
        super().__init__(f"t = {time:.6f} s: {message}")
        self.time = time


@dataclass(frozen=True)
class Event:
    """Discrete change applied at ``time``.

    ``vref_step``: generator ``target`` gets ``V_ref = V_ref0 * (1 + fraction)``.
    ``load_step``: load at bus ``target`` (every load if ``None``) is set to
    ``(1 + fraction)`` times its base value.
    ``trip``: generator ``target`` is disconnected.
    """

    time: float
    kind: str
    target: int | str | None = None
    fraction: float = 0.0

    def to_dict(self) -> dict:
        return {"time": self.time, "kind": self.kind, "target": self.target, "fraction": self.fraction}


@dataclass
class Scenario:
    duration: float
    events: list = field(default_factory=list)
    step: float = MAX_STEP
    record_step: float | None = None     # spacing of stored samples, default ``step``

    def __post_init__(self):
        self.events = [e if isinstance(e, Event) else Event(**e) for e in self.events]
        self.validate()

    def validate(self):
        if not self.duration > 0:
            raise ScenarioError("duration must be positive")
        if not 0 < self.step <= MAX_STEP * (1 + 1e-12):
            raise ScenarioError(f"integrator step must be in (0, {MAX_STEP}] s, got {self.step}")
        last = -math.inf
        for k, e in enumerate(self.events):
            if e.kind not in EVENT_KINDS:
                raise ScenarioError(f"event {k}: unknown kind {e.kind!r}")
            if not e.time > last:
                raise ScenarioError(f"event {k}: event times must be strictly increasing")
            if not 0 <= e.time <= self.duration:
                raise ScenarioError(f"event {k}: time {e.time} outside [0, {self.duration}]")
            if e.kind in ("vref_step", "trip") and e.target is None:
                raise ScenarioError(f"event {k}: {e.kind} needs a generator target")
            last = e.time
        if self.record_every < 1:
            raise ScenarioError("record_step must be a positive multiple of step")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.step))

    @property
    def record_every(self) -> int:
        if self.record_step is None:
            return 1
        r = self.record_step / self.step
        if abs(r - round(r)) > 1e-9 * max(r, 1):
            raise ScenarioError("record_step must be a multiple of step")
        return int(round(r))

    def to_dict(self) -> dict:
        return {"duration": self.duration, "step": self.step, "record_step": self.record_step,
                "events": [e.to_dict() for e in self.events]}

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        known = {"duration", "step", "record_step", "events"}
        unknown = set(d) - known
        if unknown:
            raise ScenarioError(f"unknown scenario fields {sorted(unknown)}")
        if "duration" not in d:
            raise ScenarioError("scenario needs a duration")
        return cls(duration=float(d["duration"]), events=list(d.get("events", [])),
                   step=float(d.get("step", MAX_STEP)), record_step=d.get("record_step"))


@dataclass
class TrajectoryRecord:
    """Stored simulation output on a uniform grid.

    ``x`` has shape (N, 4, n_g) with rows delta, omega, Eq, Efd. ``Id``/``Iq``
    are zero for offline machines.
    """

    time: np.ndarray
    x: np.ndarray
    V: np.ndarray
    Id: np.ndarray
    Iq: np.ndarray
    online: np.ndarray
    load_scale: np.ndarray
    network: NetworkModel
    params: list
    scenario: Scenario

    @property
    def dt(self) -> float:
        return float(self.time[1] - self.time[0]) if self.time.size > 1 else self.scenario.step

    @property
    def state_names(self) -> list[str]:
        return state_names(self.network)

    @property
    def states(self) -> np.ndarray:
        """Flat state history (N, 4 n_g)."""
        return self.x.reshape(self.x.shape[0], -1)

    def generator(self, key) -> dict:
        k = self.network.generator_index(key)
        return {name: self.x[:, r, k] for r, name in enumerate(("delta", "omega", "Eq", "Efd"))}

    def electrical_power(self) -> np.ndarray:
        p = GenArrays.from_params(self.params)
        return self.x[:, 2] * self.Iq + (p.Xq - p.Xdp) * self.Id * self.Iq

    def residuals(self) -> np.ndarray:
        return np.array([
            algebraic_residual(self.network, self.params, self.x[k], self.V[k], self.Id[k], self.Iq[k],
                               online=self.online[k], load_scale=self.load_scale[k])
            for k in range(self.time.size)
        ])


def simulate(network: NetworkModel, scenario: Scenario, x0: Equilibrium) -> TrajectoryRecord:
    """Integrate the model from ``x0`` through ``scenario``.

    Events take effect at the step boundary nearest to their time stamp.
    """
    h = scenario.step
    n_steps = scenario.n_steps
    every = scenario.record_every
    ng = network.n_gen
    p_all = GenArrays.from_params(x0.params)
    vref0 = p_all.Vref.copy()
    online = np.ones(ng, bool)
    load_scale = network.load_scale.copy()

    pending = {}
    for n, e in enumerate(scenario.events):
        try:
            if e.kind in ("vref_step", "trip"):
                network.generator_index(e.target)
            elif e.target is not None:
                network.index(e.target)
        except (KeyError, ValueError):
            raise ScenarioError(f"event {n}: unknown target {e.target!r}") from None
        pending.setdefault(int(round(e.time / h)), []).append(e)

    def rebuild():
        try:
            red = ReducedNetwork(network, online, load_scale)
        except AlgebraicError as exc:
            raise SimulationError(str(exc), k * h) from None
        p_on = p_all.subset(online)
        return red, p_on, StatorSolver(red, p_on), online.all()

    k = 0
    red, p_on, stator, all_on = rebuild()

    def f(x):
        if all_on:
            Id, Iq, Vdq, V_gen = stator(x[0], x[2])
            return derivatives(p_on, x, Id, Iq, np.abs(Vdq)), Id, Iq, V_gen
        xo = x[:, online]
        Id, Iq, Vdq, V_gen = stator(xo[0], xo[2])
        dx = np.zeros_like(x)
        dx[:, online] = derivatives(p_on, xo, Id, Iq, np.abs(Vdq))
        return dx, Id, Iq, V_gen

    n_rec = n_steps // every + 1
    T = np.empty(n_rec)
    X = np.empty((n_rec, 4, ng))
    V = np.empty((n_rec, network.n_bus), complex)
    ID = np.zeros((n_rec, ng))
    IQ = np.zeros((n_rec, ng))
    ON = np.empty((n_rec, ng), bool)
    LS = np.empty((n_rec, network.n_bus))

    x = x0.x.astype(float).copy()
    r = 0
    for k in range(n_steps + 1):
        events = pending.get(k)
        if events:
            for e in events:
                if e.kind == "vref_step":
                    g = network.generator_index(e.target)
                    p_all.Vref[g] = vref0[g] * (1 + e.fraction)
                elif e.kind == "load_step":
                    if e.target is None:
                        load_scale[:] = 1 + e.fraction
                    else:
                        load_scale[network.index(e.target)] = 1 + e.fraction
                else:
                    g = network.generator_index(e.target)
                    online[g] = False
            red, p_on, stator, all_on = rebuild()
        try:
            k1, Id, Iq, V_gen = f(x)
            if k % every == 0:
                T[r] = k * h
                X[r] = x
                V[r] = red.bus_voltages(V_gen)
                ID[r, online] = Id
                IQ[r, online] = Iq
                ON[r] = online
                LS[r] = load_scale
                r += 1
            if k == n_steps:
                break
            k2 = f(x + 0.5 * h * k1)[0]
            k3 = f(x + 0.5 * h * k2)[0]
            k4 = f(x + h * k3)[0]
        except AlgebraicError as exc:
            raise SimulationError(str(exc), k * h) from None
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise SimulationError("state became non-finite", (k + 1) * h)
    return TrajectoryRecord(time=T[:r], x=X[:r], V=V[:r], Id=ID[:r], Iq=IQ[:r], online=ON[:r],
                            load_scale=LS[:r], network=network,
                            params=list(x0.params),
                            scenario=scenario)


def ambient_load_scenario(network: NetworkModel, duration: float, amplitude: float = 0.02,
                          interval: float = 0.2, seed: int = 0, events=(), step: float = MAX_STEP,
                          record_step: float | None = None) -> Scenario:
    """Random piecewise-constant load levels within ``±amplitude``.

    Each load bus gets a new uniformly drawn level every ``interval`` seconds;
    buses are staggered on the step grid so event times stay distinct.
    ``events`` are merged in (e.g. a generator trip).
    """
    rng = np.random.default_rng(seed)
    buses = sorted({ld.bus for ld in network.loads}, key=network.index)
    fixed = {int(round(e.time / step)) for e in events}
    out = list(events)
    n_slots = int(duration / interval)
    for s in range(n_slots):
        for j, b in enumerate(buses):
            t_idx = int(round((s * interval + j * interval / max(len(buses), 1)) / step)) + 1
            while t_idx in fixed:
                t_idx += 1
            if t_idx * step > duration:
                continue
            fixed.add(t_idx)
            out.append(Event(t_idx * step, "load_step", b, float(rng.uniform(-amplitude, amplitude))))
    out.sort(key=lambda e: e.time)
    return Scenario(duration=duration, events=out, step=step, record_step=record_step)


def pulse_scenario(duration: float, pulses, width: float = 0.1, step: float = MAX_STEP,
                   record_step: float | None = None) -> Scenario:
    """Rectangular voltage set-point pulses.

    ``pulses`` is a sequence of ``(time, generator, fraction)``; each sets
    ``V_ref`` to ``(1 + fraction) V_ref0`` for ``width`` seconds.
    """
    events = []
    for t, gen, frac in pulses:
        events += [Event(float(t), "vref_step", gen, float(frac)),
                   Event(float(t) + width, "vref_step", gen, 0.0)]
    events.sort(key=lambda e: e.time)
    return Scenario(duration=duration, events=events, step=step, record_step=record_step)


def scenario_from_config(network: NetworkModel, d: dict) -> Scenario:
    """Scenario from a JSON object.

    Besides the :meth:`Scenario.from_dict` fields, an optional ``ambient``
    object (``amplitude``, ``interval``, ``seed``) adds random load levels
    around the listed events.
    """
    d = dict(d)
    amb = d.pop("ambient", None)
    if amb is None:
        return Scenario.from_dict(d)
    if not isinstance(amb, dict):
        raise ScenarioError("ambient must be an object")
    unknown = set(amb) - {"amplitude", "interval", "seed"}
    if unknown:
        raise ScenarioError(f"unknown ambient fields {sorted(unknown)}")
    base = Scenario.from_dict(d)
    return ambient_load_scenario(network, base.duration, amplitude=float(amb.get("amplitude", 0.02)),
                                 interval=float(amb.get("interval", 0.2)), seed=int(amb.get("seed", 0)),
                                 events=base.events, step=base.step, record_step=base.record_step)
