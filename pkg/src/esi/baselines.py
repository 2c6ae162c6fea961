"""Reference output-only modal estimators and a mode comparator.

Both estimators fit sums of damped exponentials shared by all channels:

* Matrix Pencil: channel Hankel matrices stacked vertically, SVD
  truncation, poles from the shifted right singular subspace.
* Multichannel Prony: one linear-prediction polynomial fitted jointly to
  every channel by least squares; its roots are the poles.

Defaults (pencil fraction 1/3, singular value threshold 1e-3 sigma_max) are
conventional choices.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .core import ModeSet
from .measurements import MeasurementSet

BaselineModeSet = ModeSet


class BaselineError(ValueError):
    pass


class IllConditionedWarning(UserWarning):
    pass


def modes_from_eigenvalues(lam, dt: float, method: str = "reference") -> ModeSet:
    """Wrap continuous eigenvalues as a :class:`ModeSet` sampled at ``dt``."""
    lam = np.asarray(lam, dtype=complex)
    return ModeSet(gamma=np.exp(lam * dt), dt=dt, method=method)


def _prepare(m: MeasurementSet, center: bool) -> np.ndarray:
    x = m.data - m.data.mean(axis=1, keepdims=True) if center else m.data.copy()
    rms = np.sqrt(np.mean(x ** 2, axis=1))
    rms[rms == 0] = 1.0
    return x / rms[:, None]


def _amplitudes(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Least-squares residues of each pole, combined over channels."""
    n = np.arange(x.shape[1])
    with np.errstate(over="ignore", invalid="ignore"):
        V = z[None, :] ** n[:, None]
    if not np.all(np.isfinite(V)):
        return np.full(z.size, np.nan)
    b, *_ = la.lstsq(V, x.T.astype(complex))
    return np.linalg.norm(b, axis=1)


def _finish(z, x, dt, method) -> ModeSet:
    lam = np.log(z.astype(complex)) / dt
    order = np.lexsort((-np.sign(lam.imag), lam.real, np.round(np.abs(lam.imag), 10)))
    z = z[order]
    ms = ModeSet(gamma=z, dt=dt, method=method)
    ms.amplitude = _amplitudes(x, z)
    return ms


def matrix_pencil(m: MeasurementSet, pencil_fraction: float = 1 / 3, rank_rule="threshold",
                  tol: float = 1e-3, center: bool = False) -> ModeSet:
    """Multichannel Matrix Pencil.

    Parameters
    ----------
    pencil_fraction : float
        Pencil parameter ``P`` as a fraction of the sample count.
    rank_rule : ``"threshold"``, ``"gap"`` or int
        Keep singular values ``>= tol * sigma_max``; or cut at the largest
        ratio of consecutive values among those (and the first value below
        the threshold); or keep a fixed number.
    center : bool
        Remove each channel's mean first (drops the DC pole).
    """
    x = _prepare(m, center)
    s = x.shape[1]
    P = int(round(pencil_fraction * s))
    if not 1 <= P <= s - 2:
        raise BaselineError(f"pencil parameter {P} out of range for {s} samples")
    blocks = [la.hankel(row[:s - P], row[s - P - 1:]) for row in x]
    Y = np.vstack(blocks)
    _, sv, Vh = la.svd(Y, full_matrices=False)
    if sv[0] <= 0:
        raise BaselineError("signal is identically zero")
    if rank_rule == "threshold":
        r = int(np.sum(sv >= tol * sv[0]))
    elif rank_rule == "gap":
        # candidates: values above the threshold plus the first one below it
        n_above = int(np.sum(sv >= tol * sv[0]))
        cand = np.maximum(sv[:n_above + 1], sv[0] * 1e-300)
        r = int(np.argmax(cand[:-1] / cand[1:])) + 1 if cand.size > 1 else cand.size
    elif isinstance(rank_rule, str):
        raise BaselineError(f"unknown rank rule {rank_rule!r}")
    else:
        r = int(rank_rule)
    r = min(r, P)
    if r < 1:
        raise BaselineError("rank rule selected 0 modes")
    V = Vh[:r].conj().T
    V1, V2 = V[:-1], V[1:]
    z = la.eigvals(np.linalg.pinv(V1) @ V2)
    return _finish(z, x, m.dt, "matrix-pencil")


def prony_multichannel(m: MeasurementSet, order: int, center: bool = False,
                       cond_limit: float = 1e12) -> ModeSet:
    """Joint linear-prediction (Prony) fit of ``order`` poles."""
    x = _prepare(m, center)
    s = x.shape[1]
    if order < 1:
        raise BaselineError("order must be >= 1")
    if order > s / 3:
        raise BaselineError(f"order {order} exceeds s/3 = {s / 3:.1f}")
    rows, rhs = [], []
    for ch in x:
        H = la.hankel(ch[:s - order], ch[s - order - 1:s - 1])[:, ::-1]
        rows.append(H)
        rhs.append(ch[order:])
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > cond_limit:
        warnings.warn(f"prediction matrix is ill-conditioned (condition {cond:.3g})",
                      IllConditionedWarning, stacklevel=2)
    a, *_ = la.lstsq(A, b)
    z = np.roots(np.concatenate([[1.0], -a]))
    return _finish(z, x, m.dt, "prony")


# -- comparison ---------------------------------------------------------------

@dataclass
class MatchReport:
    method: str
    pairs: list = field(default_factory=list)
    unmatched_estimates: list = field(default_factory=list)
    unmatched_references: list = field(default_factory=list)

    @property
    def frequency_errors(self) -> np.ndarray:
        return np.array([p["frequency_error_pct"] for p in self.pairs])

    @property
    def damping_errors(self) -> np.ndarray:
        return np.array([p["damping_error_pct"] for p in self.pairs])

    @property
    def median_frequency_error(self) -> float:
        e = self.frequency_errors
        return float(np.median(e)) if e.size else float("inf")

    def to_dict(self) -> dict:
        return {"method": self.method, "pairs": self.pairs,
                "unmatched_estimates": self.unmatched_estimates,
                "unmatched_references": self.unmatched_references}


def _describe(ms: ModeSet, k: int) -> dict:
    lam = ms.lam[k]
    return {"index": int(k), "real": float(lam.real), "imag": float(lam.imag),
            "frequency_hz": float(ms.frequency[k]), "damping_ratio": float(ms.damping[k])}


def _match_one(est: ModeSet, reference: ModeSet, freq_tol: float, freq_floor: float,
               est_index=None, ref_index=None) -> MatchReport:
    ei = est.upper() if est_index is None else np.asarray(est_index, int)
    ri = reference.upper() if ref_index is None else np.asarray(ref_index, int)
    fe, ze = est.frequency, est.damping
    fr, zr = reference.frequency, reference.damping
    cand = []
    for r in ri:
        window = max(freq_tol / 100.0 * fr[r], freq_floor)
        for e in ei:
            df = abs(fe[e] - fr[r])
            if df <= window:
                cand.append((df, abs(ze[e] - zr[r]), int(e), int(r)))
    cand.sort()
    used_e, used_r = set(), set()
    rep = MatchReport(method=est.method)
    for df, dz, e, r in cand:
        if e in used_e or r in used_r:
            continue
        used_e.add(e)
        used_r.add(r)
        ferr = 100.0 * df / fr[r] if fr[r] > 0 else 0.0 if df == 0 else float("inf")
        zerr = 100.0 * dz / abs(zr[r]) if zr[r] != 0 else 0.0 if dz == 0 else float("inf")
        rep.pairs.append({"estimate": _describe(est, e), "reference": _describe(reference, r),
                          "frequency_error_pct": float(ferr), "damping_error_pct": float(zerr)})
    rep.pairs.sort(key=lambda p: p["reference"]["frequency_hz"])
    rep.unmatched_estimates = [_describe(est, e) for e in ei if e not in used_e]
    rep.unmatched_references = [_describe(reference, r) for r in ri if r not in used_r]
    return rep


def compare_modes(estimates, reference: ModeSet, freq_tol: float = 5.0, freq_floor: float = 1e-3,
                  band=None):
    """Greedy nearest-frequency matching of estimated to reference modes.

    Only one representative per conjugate pair is considered. A reference
    mode accepts estimates within ``freq_tol`` percent of its frequency (at
    least ``freq_floor`` Hz); candidate pairs are taken in order of frequency
    distance, then damping distance, each mode used at most once. ``band``
    ``(fmin, fmax)`` restricts both sets by frequency first.

    A single ModeSet gives one :class:`MatchReport`; a sequence gives a list.
    """
    if len(reference) == 0:
        raise ValueError("reference mode set is empty")

    def in_band(ms):
        idx = ms.upper()
        if band is not None:
            f = ms.frequency[idx]
            idx = idx[(f >= band[0]) & (f <= band[1])]
        return idx

    ref_idx = in_band(reference)
    if isinstance(estimates, ModeSet):
        return _match_one(estimates, reference, freq_tol, freq_floor, in_band(estimates), ref_idx)
    return [_match_one(e, reference, freq_tol, freq_floor, in_band(e), ref_idx) for e in estimates]


def scatter_rows(mode_sets, upper_only: bool = True) -> list[dict]:
    """Plot-ready eigenvalue rows (method, real, imag, frequency, damping)."""
    rows = []
    for ms in mode_sets:
        idx = ms.upper() if upper_only else np.arange(len(ms))
        for k in idx:
            row = {"method": ms.method}
            row.update(_describe(ms, k))
            row["unstable"] = bool(ms.unstable[k])
            row["near_nyquist"] = bool(ms.near_nyquist[k])
            rows.append(row)
    return rows
