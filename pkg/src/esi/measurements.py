"""Uniformly sampled multichannel measurement series and their CSV form.

A CSV file holds a header ``time,<bus>:<quantity>,...`` and one row per
sample. A JSON sidecar with the same stem stores the sample rate, the noise
seed and the SNR the data were generated with.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

QUANTITIES = ("V", "theta", "P", "Q", "f", "omega")


@dataclass(frozen=True)
class Channel:
    """One measured quantity at one bus (or any named location)."""

    bus: int | str
    quantity: str

    @property
    def label(self) -> str:
        return f"{self.bus}:{self.quantity}"

    @classmethod
    def parse(cls, label: str) -> "Channel":
        bus, sep, quantity = label.strip().rpartition(":")
        if not sep or not bus or not quantity:
            raise ValueError(f"channel label {label!r} is not of the form <bus>:<quantity>")
        try:
            bus = int(bus)
        except ValueError:
            pass
        return cls(bus, quantity)

    def __str__(self):
        return self.label


@dataclass
class MeasurementSet:
    """Sample matrix with rows = channels and columns = time.

    Parameters
    ----------
    rate : float
        Sample rate in Hz.
    channels : list of Channel
    data : ndarray, shape (n_channels, n_samples)
    t0 : float
        Time stamp of the first column (s).
    snr : float or None
        SNR in dB of the injected noise, ``None`` for clean data.
    seed : int or None
        Seed of the noise generator.
    """

    rate: float
    channels: list
    data: np.ndarray
    t0: float = 0.0
    snr: float | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.channels = [c if isinstance(c, Channel) else Channel.parse(c) for c in self.channels]
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.data.shape[0] != len(self.channels):
            raise ValueError(
                f"{len(self.channels)} channel descriptors for {self.data.shape[0]} data rows"
            )
        if not np.all(np.isfinite(self.data)):
            bad = [c.label for c, row in zip(self.channels, self.data) if not np.all(np.isfinite(row))]
            raise ValueError(f"non-finite samples in channels {bad}")
        if not self.rate > 0:
            raise ValueError("sample rate must be positive")
        labels = self.labels
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate channel labels")

    @property
    def dt(self) -> float:
        return 1.0 / self.rate

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.channels]

    @property
    def time(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_samples) / self.rate

    def row(self, label: str) -> np.ndarray:
        return self.data[self.labels.index(label)]

    def select(self, labels) -> "MeasurementSet":
        """Subset of channels, in the order given."""
        labels = [str(c) for c in labels]
        missing = [lab for lab in labels if lab not in self.labels]
        if missing:
            raise KeyError(f"channels not present: {missing}")
        idx = [self.labels.index(lab) for lab in labels]
        return self._replace(channels=[self.channels[k] for k in idx], data=self.data[idx])

    def window(self, start: float, stop: float) -> "MeasurementSet":
        """Samples with ``start <= t < stop`` (half-open, rounded to the grid)."""
        k0 = max(int(round((start - self.t0) * self.rate)), 0)
        k1 = min(int(round((stop - self.t0) * self.rate)), self.n_samples)
        if k1 <= k0:
            raise ValueError(f"empty window [{start}, {stop})")
        return self._replace(data=self.data[:, k0:k1], t0=self.t0 + k0 / self.rate)

    def _replace(self, **kw) -> "MeasurementSet":
        args = dict(rate=self.rate, channels=list(self.channels), data=self.data, t0=self.t0,
                    snr=self.snr, seed=self.seed, meta=dict(self.meta))
        args.update(kw)
        return MeasurementSet(**args)

    # -- file form -----------------------------------------------------------

    def to_csv(self, path) -> Path:
        """Write ``path`` and the ``.json`` sidecar next to it."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time"] + self.labels)
            for t, col in zip(self.time, self.data.T):
                w.writerow([f"{t:.10f}"] + [repr(float(v)) for v in col])
        sidecar = {
            "rate": self.rate,
            "t0": self.t0,
            "seed": self.seed,
            "snr": self.snr,
            "channels": self.labels,
            "n_samples": self.n_samples,
        }
        sidecar.update({k: v for k, v in self.meta.items() if k not in sidecar})
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")
        return path

    @classmethod
    def from_csv(cls, path) -> "MeasurementSet":
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != "time":
            raise ValueError(f"{path}: first header column must be 'time'")
        header = rows[0][1:]
        body = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        if body.ndim != 2 or body.shape[0] < 2:
            raise ValueError(f"{path}: need at least two samples")
        time = body[:, 0]
        sidecar_path = path.with_suffix(".json")
        side = json.loads(sidecar_path.read_text()) if sidecar_path.exists() else {}
        if "rate" in side:
            rate = float(side["rate"])
        else:
            steps = np.diff(time)
            rate = 1.0 / float(np.median(steps))
        if not np.allclose(np.diff(time), 1.0 / rate, rtol=1e-6, atol=1e-9):
            raise ValueError(f"{path}: time column is not uniformly sampled at {rate} Hz")
        meta = {k: v for k, v in side.items()
                if k not in ("rate", "t0", "seed", "snr", "channels", "n_samples")}
        return cls(rate=rate, channels=header, data=body[:, 1:].T.copy(), t0=float(time[0]),
                   snr=side.get("snr"), seed=side.get("seed"), meta=meta)
