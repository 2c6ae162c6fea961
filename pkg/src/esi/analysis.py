"""Downstream products of an identified model.

Koopman modes, output participation factors and windowed inertia
estimation from paired generator power / rotor speed channels.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ESIConfig, ESIError, ESIModel, ModeSet, ModeWarning, extract_modes, identify
from .lifting import LiftingError
from .measurements import MeasurementSet

EIGVEC_COND_LIMIT = 1e8


# -- Koopman modes and participation -----------------------------------------

def koopman_modes(model: ESIModel, modes: ModeSet | None = None) -> np.ndarray:
    """Mode shapes ``Omega = B M E^{-1}`` in raw measurement coordinates.

    ``E`` holds the left eigenvectors of the lifted operator as rows, so
    ``E^{-1}`` is the right eigenvector matrix; column ``j`` of the result is
    the spatial pattern of mode ``j`` (ordered as in ``modes``).
    """
    modes = modes or extract_modes(model)
    if modes.condition > EIGVEC_COND_LIMIT:
        warnings.warn(f"eigenvector matrix is ill-conditioned ({modes.condition:.3g}); "
                      "mode shapes are unreliable", ModeWarning, stacklevel=2)
    return model.recovery @ model.M @ modes.right


@dataclass
class ParticipationTable:
    """Per-mode participation of each output channel.

    ``values[c, j]`` is the normalized magnitude for channel ``c`` in mode
    ``j`` (each column sums to one); ``raw`` keeps the complex products.
    """

    labels: list
    modes: ModeSet
    raw: np.ndarray
    values: np.ndarray
    mode_index: np.ndarray

    @property
    def frequency(self) -> np.ndarray:
        return self.modes.frequency[self.mode_index]

    @property
    def damping(self) -> np.ndarray:
        return self.modes.damping[self.mode_index]

    def column(self, mode: int) -> dict:
        """Participation of every channel in mode ``mode`` (index into ``mode_index``)."""
        return dict(zip(self.labels, self.values[:, mode]))

    def nearest(self, frequency: float) -> int:
        """Column whose mode frequency is closest to ``frequency`` (Hz)."""
        return int(np.argmin(np.abs(self.frequency - frequency)))

    def rows(self) -> list[dict]:
        out = []
        lam = self.modes.lam
        unstable = self.modes.unstable
        for col, k in enumerate(self.mode_index):
            for c, lab in enumerate(self.labels):
                out.append({
                    "mode": int(k), "frequency_hz": float(self.modes.frequency[k]),
                    "damping_ratio": float(self.modes.damping[k]), "real": float(lam[k].real),
                    "imag": float(lam[k].imag), "unstable": bool(unstable[k]), "channel": lab,
                    "participation": float(self.values[c, col]),
                    "raw_real": float(self.raw[c, col].real), "raw_imag": float(self.raw[c, col].imag),
                })
        return out

    def to_csv(self, path) -> Path:
        return _write_rows(path, self.rows())

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps({"channels": list(self.labels), "rows": self.rows()}, indent=2) + "\n")
        return path


def participation_factors(model: ESIModel, modes: ModeSet | None = None, upper_only: bool = True) -> ParticipationTable:
    """Output participation ``P_ij = W_ji Omega_ij``.

    ``W = E (B M)^+`` maps raw measurements onto eigen-coordinates, so
    ``W_ji`` weighs channel ``i`` in eigenfunction ``j`` just as a left
    eigenvector weighs a state; ``Omega`` plays the right eigenvector's part.
    Magnitudes are normalized per mode. Channel rescaling cancels in the
    product whenever ``B M`` has full row rank.
    """
    modes = modes or extract_modes(model)
    Omega = koopman_modes(model, modes)
    W = modes.left @ np.linalg.pinv(model.recovery @ model.M)
    raw = W.T * Omega
    idx = modes.upper() if upper_only else np.arange(len(modes))
    raw = raw[:, idx]
    mag = np.abs(raw)
    tot = mag.sum(axis=0, keepdims=True)
    if np.any(tot <= 0):
        raise ESIError("participation", "a mode has zero participation in every channel")
    return ParticipationTable(list(model.labels), modes, raw, mag / tot, idx)


# -- inertia ------------------------------------------------------------------

class InertiaRejected(ValueError):
    """The window cannot support an inertia estimate."""


@dataclass
class InertiaEstimate:
    """Inertia constants (s, machine base) from one measurement window.

    ``M`` holds one entry per generator bus; offline machines are ``0`` and
    flagged in ``online``. ``smoothed`` is the two-point running average
    maintained by :func:`track_inertia` (equal to ``M_sys`` for a single
    window). Rejected windows carry the previous smoothed value with
    ``accepted = False``.
    """

    time: float
    window: float
    buses: list
    M: np.ndarray
    online: np.ndarray
    damping: np.ndarray = None
    smoothed: float = float("nan")
    accepted: bool = True
    reason: str = ""
    order: int = 0

    @property
    def M_sys(self) -> float:
        return float(np.sum(self.M[self.online])) if self.accepted else float("nan")

    def to_dict(self) -> dict:
        return {
            "time": self.time, "window": self.window, "accepted": self.accepted,
            "M_sys": None if not self.accepted else self.M_sys,
            "smoothed": None if math.isnan(self.smoothed) else self.smoothed,
            "order": self.order, "reason": self.reason,
            "generators": [{"bus": b, "online": bool(on), "M": float(m) if self.accepted else None}
                           for b, m, on in zip(self.buses, self.M, self.online)],
        }


@dataclass
class InertiaSettings:
    """Knobs for the windowed inertia fit.

    ``band_hz`` bounds ``|lambda| / 2 pi`` of the modes used to rebuild the
    power and speed signals; faster modes are dropped before differentiating.
    ``esi`` defaults to a degree-1 fit with 10 block rows and 40 states
    (clipped to what the window supports).
    """

    band_hz: float = 2.5
    min_window: float = 4.0
    frequency: float = 60.0
    esi: ESIConfig = field(default_factory=lambda: ESIConfig(degree=1, block_rows=10,
                                                             rank_rule="fixed", order=40))


def generator_pairs(m: MeasurementSet) -> list:
    """Buses that carry both a ``P`` and an ``omega`` channel, in channel order."""
    have = {(c.bus, c.quantity) for c in m.channels}
    buses = []
    for c in m.channels:
        if c.quantity == "omega" and (c.bus, "P") in have and c.bus not in buses:
            buses.append(c.bus)
    return buses


def _flat(x: np.ndarray) -> bool:
    return np.ptp(x) <= 1e-12 * max(1.0, float(np.max(np.abs(x))))


def _fit_config(cfg: ESIConfig, n_rows: int, n_cols: int) -> ESIConfig:
    if cfg.rank_rule != "fixed":
        return cfg
    order = min(cfg.order, n_rows - 1, n_cols - 1)
    return ESIConfig(**{**cfg.to_dict(), "order": max(order, 1)})


def estimate_inertia_window(m: MeasurementSet, settings: InertiaSettings | None = None) -> InertiaEstimate:
    """Inertia per generator from one window of paired ``P``/``omega`` channels.

    The window is identified with ESI; power and speed are rebuilt from the
    eigen-coordinates of modes inside the electromechanical band and the
    speed derivative is taken analytically (``d phi_j / dt = lambda_j phi_j``).
    For each machine the swing relation

        -(P - mean P) = M d(omega / omega_s)/dt + D (omega - omega_s) / omega_s + c

    is solved by least squares. A machine whose speed is constant over the
    last quarter of the window counts as offline and is dropped.
    """
    st = settings or InertiaSettings()
    span = m.n_samples / m.rate
    if span < st.min_window - 0.5 / m.rate:
        raise InertiaRejected(f"window of {span:.3g} s is shorter than {st.min_window} s")
    buses = generator_pairs(m)
    if not buses:
        raise InertiaRejected("no generator with both P and omega channels")
    ws = 2 * np.pi * st.frequency
    tail = max(m.n_samples // 4, 2)
    online = np.array([not _flat(m.row(f"{b}:omega")[-tail:]) for b in buses])
    est = InertiaEstimate(time=float(m.t0 + span), window=span, buses=buses, M=np.zeros(len(buses)),
                          online=online, damping=np.zeros(len(buses)))
    if not online.any():
        raise InertiaRejected("no machine shows speed variation in this window")
    live = [b for b, on in zip(buses, online) if on]
    sub = m.select([f"{b}:P" for b in live] + [f"{b}:omega" for b in live])
    L = 1 + sub.n_channels
    cfg = st.esi
    i = cfg.rows_for(L)
    cfg = _fit_config(cfg, L * i, sub.n_samples - 2 * i + 1)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ModeWarning)
            model = identify(sub, cfg)
            modes = extract_modes(model)
    except (ESIError, LiftingError) as exc:
        raise InertiaRejected(f"identification failed: {exc}") from None
    est.order = model.order
    keep = np.abs(modes.lam) <= 2 * np.pi * st.band_hz
    if not keep.any():
        raise InertiaRejected("no identified mode inside the electromechanical band")
    Omega = koopman_modes(model, modes)[:, keep]
    phi = modes.left[keep] @ model.states
    lam = modes.lam[keep]
    y = (Omega @ phi).real
    dy = (Omega @ (lam[:, None] * phi)).real
    n = len(live)
    for a, b in enumerate(live):
        dP = -(y[a] - y[a].mean())
        dw = dy[n + a] / ws
        w = (y[n + a] - ws) / ws
        A = np.column_stack([dw, w, np.ones_like(w)])
        coef, *_ = np.linalg.lstsq(A, dP, rcond=None)
        k = buses.index(b)
        est.M[k], est.damping[k] = coef[0], coef[1]
    bad = [b for b, on, Mi in zip(buses, online, est.M) if on and not (np.isfinite(Mi) and Mi > 0)]
    if bad:
        raise InertiaRejected(f"non-positive inertia fitted for buses {bad}")
    est.smoothed = est.M_sys
    return est


def _window_starts(m: MeasurementSet, window: float, stride: float):
    T = m.n_samples / m.rate
    n = int(math.floor((T - window) / stride + 1e-9)) + 1 if T >= window - 1e-12 else 0
    return [m.t0 + k * stride for k in range(n)]


def track_inertia(m: MeasurementSet, window: float = 4.0, stride: float | None = None,
                  settings: InertiaSettings | None = None) -> list[InertiaEstimate]:
    """Sliding-window estimates with a two-point running average.

    ``smoothed_k = (smoothed_{k-1} + M_sys_k) / 2``, seeded by the first
    accepted window. A rejected window repeats the previous smoothed value.
    """
    stride = window if stride is None else stride
    if not (window > 0 and stride > 0):
        raise ValueError("window and stride must be positive")
    st = settings or InertiaSettings()
    if st.min_window > window:
        st = InertiaSettings(**{**st.__dict__, "min_window": window})
    starts = _window_starts(m, window, stride)
    if not starts:
        raise ValueError(f"stream of {m.n_samples / m.rate:.3g} s is shorter than one window")
    out = []
    prev = float("nan")
    buses = generator_pairs(m)
    for t0 in starts:
        w = m.window(t0, t0 + window)
        try:
            est = estimate_inertia_window(w, st)
        except InertiaRejected as exc:
            est = InertiaEstimate(time=float(t0 + window), window=window, buses=buses,
                                  M=np.full(len(buses), np.nan), online=np.zeros(len(buses), bool),
                                  damping=np.full(len(buses), np.nan), accepted=False, reason=str(exc))
            est.smoothed = prev
        else:
            est.smoothed = est.M_sys if math.isnan(prev) else 0.5 * (prev + est.M_sys)
        prev = est.smoothed
        out.append(est)
    return out


# -- export -------------------------------------------------------------------

def _write_rows(path, rows: list[dict]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return path


def inertia_rows(series: list[InertiaEstimate]) -> list[dict]:
    rows = []
    for e in series:
        row = {"time": e.time, "window": e.window, "accepted": e.accepted,
               "M_sys": e.M_sys, "smoothed": e.smoothed}
        for b, Mi, on in zip(e.buses, e.M, e.online):
            row[f"M_{b}"] = float(Mi) if (on and e.accepted) else 0.0 if e.accepted else float("nan")
        rows.append(row)
    return rows


def export_inertia(series: list[InertiaEstimate], stem) -> tuple[Path, Path]:
    """Write ``stem.csv`` and ``stem.json``."""
    stem = Path(stem)
    csv_path = _write_rows(stem.with_suffix(".csv"), inertia_rows(series))
    json_path = stem.with_suffix(".json")
    json_path.write_text(json.dumps([e.to_dict() for e in series], indent=2) + "\n")
    return csv_path, json_path


def export_modes(modes: ModeSet, path) -> Path:
    """Mode report (upper half-plane plus real modes) as CSV."""
    return _write_rows(path, modes.table())


__all__ = ["InertiaEstimate", "InertiaRejected", "InertiaSettings", "ParticipationTable",
           "estimate_inertia_window", "export_inertia", "export_modes",
           "generator_pairs", "koopman_modes", "participation_factors", "track_inertia"]
