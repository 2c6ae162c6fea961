"""Polynomial observable dictionaries for lifting output measurements.

Raw channels are standardized per window (zero mean, unit variance) and then
evaluated on every monomial of total degree ``<= degree``. The first lifted
row is the constant function and rows ``1..l`` are the standardized raw
channels, so a linear recovery map returns the raw measurements exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from .measurements import MeasurementSet

MAX_DEGREE = 8


class LiftingError(ValueError):
    pass


@dataclass(frozen=True)
class Dictionary:
    """Ordered monomial basis over ``n_channels`` standardized channels.

    ``monomials`` holds one tuple of channel indices per entry (a multiset;
    ``(0, 0, 2)`` is ``z0**2 * z2``), in graded-lexicographic order.
    """

    n_channels: int
    degree: int
    monomials: tuple

    @property
    def size(self) -> int:
        return len(self.monomials)

    def exponents(self) -> np.ndarray:
        """Multi-index form, shape (size, n_channels)."""
        out = np.zeros((self.size, self.n_channels), dtype=int)
        for r, mono in enumerate(self.monomials):
            for k in mono:
                out[r, k] += 1
        return out

    def names(self, labels=None) -> list[str]:
        labels = labels or [f"y{k}" for k in range(self.n_channels)]
        out = []
        for mono in self.monomials:
            if not mono:
                out.append("1")
                continue
            parts = []
            for k in sorted(set(mono)):
                p = mono.count(k)
                parts.append(labels[k] if p == 1 else f"{labels[k]}^{p}")
            out.append("*".join(parts))
        return out

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        """Evaluate all monomials on standardized rows ``z`` (l x s)."""
        z = np.atleast_2d(z)
        if z.shape[0] != self.n_channels:
            raise LiftingError(f"dictionary expects {self.n_channels} channels, got {z.shape[0]}")
        rows = {(): np.ones(z.shape[1])}
        out = np.empty((self.size, z.shape[1]))
        for r, mono in enumerate(self.monomials):
            if mono not in rows:
                rows[mono] = rows[mono[:-1]] * z[mono[-1]]
            out[r] = rows[mono]
        return out

    def to_json(self) -> str:
        return json.dumps({"n_channels": self.n_channels, "degree": self.degree,
                           "exponents": self.exponents().tolist()})

    @classmethod
    def from_json(cls, text: str) -> "Dictionary":
        d = json.loads(text)
        monomials = tuple(
            tuple(k for k, p in enumerate(row) for _ in range(p)) for row in d["exponents"]
        )
        return cls(int(d["n_channels"]), int(d["degree"]), monomials)


def full_size(n_channels: int, degree: int) -> int:
    return comb(n_channels + degree, degree)


def build_dictionary(n_channels: int, degree: int, truncation: int | None = None) -> Dictionary:
    """Graded-lexicographic monomial basis of total degree ``<= degree``.

    With ``truncation`` set, only the first ``truncation`` entries are kept,
    so the highest-degree cross terms go first. The constant and the degree-1
    entries are never dropped.
    """
    if n_channels < 1:
        raise LiftingError("need at least one channel")
    if not 1 <= degree <= MAX_DEGREE:
        raise LiftingError(f"degree must be in 1..{MAX_DEGREE}, got {degree}")
    if truncation is not None and truncation < n_channels + 1:
        raise LiftingError(
            f"truncation {truncation} would drop raw channels (need >= {n_channels + 1})"
        )
    monomials = []
    for d in range(degree + 1):
        monomials.extend(combinations_with_replacement(range(n_channels), d))
        if truncation is not None and len(monomials) >= truncation:
            monomials = monomials[:truncation]
            break
    return Dictionary(n_channels, degree, tuple(monomials))


@dataclass
class LiftedSeries:
    """Lifted sample matrix plus the per-channel standardization."""

    dictionary: Dictionary
    data: np.ndarray          # (L, s)
    offset: np.ndarray        # per raw channel mean
    scale: np.ndarray         # per raw channel std
    source: MeasurementSet | None = None

    @property
    def recovery(self) -> np.ndarray:
        return recovery_map(self.dictionary, self.offset, self.scale)


def recovery_map(dictionary: Dictionary, offset, scale) -> np.ndarray:
    """Linear map B (l x L) with ``B @ Phi(y) == y``."""
    l = dictionary.n_channels
    B = np.zeros((l, dictionary.size))
    B[:, 0] = offset
    B[np.arange(l), np.arange(1, l + 1)] = scale
    return B


def standardize(data: np.ndarray, labels=None):
    offset = data.mean(axis=1)
    scale = data.std(axis=1)
    span = np.maximum(np.abs(offset), 1.0)
    flat = scale <= 1e-12 * span
    if np.any(flat):
        labels = labels or [f"channel {k}" for k in range(data.shape[0])]
        names = [labels[k] for k in np.flatnonzero(flat)]
        raise LiftingError(f"zero-variance channel(s): {', '.join(map(str, names))}")
    return offset, scale


def lift(m: MeasurementSet, dictionary: Dictionary) -> LiftedSeries:
    if m.n_channels != dictionary.n_channels:
        raise LiftingError(
            f"measurement set has {m.n_channels} channels, dictionary expects {dictionary.n_channels}"
        )
    offset, scale = standardize(m.data, m.labels)
    z = (m.data - offset[:, None]) / scale[:, None]
    return LiftedSeries(dictionary, dictionary.evaluate(z), offset, scale, source=m)


def recover(lifted: LiftedSeries) -> MeasurementSet:
    """Raw measurements back from the lifted rows."""
    y = lifted.recovery @ lifted.data
    src = lifted.source
    if src is None:
        return MeasurementSet(rate=1.0, channels=[f"y{k}:raw" for k in range(y.shape[0])], data=y)
    return src._replace(data=y)
