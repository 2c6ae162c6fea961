"""Extended subspace identification of lifted output data.

Pipeline: lifted series -> block Hankel -> orthogonal projections of future
on past -> weighted SVD (observability factor) -> Kalman state sequences ->
least-squares operator pair ``(K, M)`` with

    psi(X_{i+1}) = K psi(X_i) + rho_delta
    Y_{i|i}      = M psi(X_i) + rho_xi

All Hankel blocks are normalized by ``1/sqrt(j)`` so products of blocks are
finite-sample covariances.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as la

from .lifting import Dictionary, LiftedSeries, build_dictionary, lift, recovery_map
from .measurements import MeasurementSet


class ESIError(RuntimeError):
    """Failure inside one stage of the identification pipeline."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class DegenerateProjection(ESIError):
    pass


class ModeWarning(UserWarning):
    pass


RANK_RULES = ("gap", "energy", "fixed")


@dataclass
class ESIConfig:
    """Settings for :func:`identify`.

    ``block_rows=None`` picks ``max(ceil(2 * expected_order / L), 10)``.
    ``ridge=None`` uses ``1e-12 * trace(psi psi^T) / K``.
    """

    degree: int = 1
    truncation: int | None = None
    block_rows: int | None = None
    expected_order: int = 10
    rank_rule: str = "gap"
    order: int | None = None
    energy: float = 0.9999
    min_order: int = 1
    max_order: int | None = None
    min_gap: float = 10.0
    ridge: float | None = None
    weights: str = "identity"

    def __post_init__(self):
        if self.rank_rule not in RANK_RULES:
            raise ValueError(f"rank_rule must be one of {RANK_RULES}")
        if self.rank_rule == "fixed" and not self.order:
            raise ValueError("rank_rule 'fixed' needs order")
        if not 0.0 < self.energy <= 1.0:
            raise ValueError("energy threshold must lie in (0, 1]")
        if self.block_rows is not None and self.block_rows < 2:
            raise ValueError("block_rows must be >= 2")
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.weights not in ("identity", "cva"):
            raise ValueError("weights must be 'identity' or 'cva'")

    def rows_for(self, lifted_dim: int) -> int:
        if self.block_rows is not None:
            return self.block_rows
        return max(int(np.ceil(2 * self.expected_order / lifted_dim)), 10)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ESIConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    @classmethod
    def from_json(cls, path) -> "ESIConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# -- Hankel and projections ---------------------------------------------------

@dataclass
class HankelPair:
    past: np.ndarray      # Y_p, (L*i, j)
    future: np.ndarray    # Y_f, (L*i, j)
    block_rows: int
    lifted_dim: int

    @property
    def columns(self) -> int:
        return self.past.shape[1]

    @property
    def stacked(self) -> np.ndarray:
        return np.vstack([self.past, self.future])


def block_hankel(data: np.ndarray, rows: int, columns: int) -> np.ndarray:
    """Block Hankel matrix with ``rows`` block rows of ``data`` (L x s)."""
    data = np.atleast_2d(data)
    L = data.shape[0]
    H = np.empty((L * rows, columns))
    for b in range(rows):
        H[b * L:(b + 1) * L] = data[:, b:b + columns]
    return H


def build_block_hankel(lifted, i: int) -> HankelPair:
    """Past/future split of the ``2i`` block-row Hankel matrix.

    ``lifted`` is a :class:`LiftedSeries` or a plain (L x s) array. Blocks are
    not normalized here; see :func:`identify` for the ``1/sqrt(j)`` scaling.
    """
    data = lifted.data if isinstance(lifted, LiftedSeries) else np.atleast_2d(np.asarray(lifted, float))
    if i < 2:
        raise ESIError("hankel", f"block rows must be >= 2, got {i}")
    L, s = data.shape
    j = s - 2 * i + 1
    if j < 2:
        raise ESIError("hankel", f"{s} samples are too few for {i} block rows (j = {j})")
    H = block_hankel(data, 2 * i, j)
    return HankelPair(H[:L * i], H[L * i:], i, L)


def lq(H: np.ndarray):
    """``H = Lmat @ Q`` with ``Q`` having orthonormal rows."""
    Qt, Rt = la.qr(H.T, mode="economic", check_finite=False)
    return Rt.T, Qt.T


def _row_projector(Lp: np.ndarray, k: int) -> np.ndarray:
    """Projector onto the row space of ``Lp`` in LQ coordinates.

    ``Lp`` is the (k x r) past part of a lower-trapezoidal LQ factor, so for
    ``r >= k`` only its leading k x k triangle is non-zero.
    """
    r = Lp.shape[1]
    if r >= k:
        L11 = Lp[:, :k]
        d = np.abs(np.diag(L11))
        P = np.zeros((r, r))
        if d.min() > 1e-10 * d.max():
            P[:k, :k] = np.eye(k)
        else:
            _, s, vt = la.svd(L11, check_finite=False)
            keep = s > max(k, r) * np.finfo(float).eps * s[0]
            V = vt[keep].T
            P[:k, :k] = V @ V.T
        return P
    _, s, vt = la.svd(Lp, full_matrices=False, check_finite=False)
    keep = s > max(Lp.shape) * np.finfo(float).eps * s[0]
    V = vt[keep].T
    return V @ V.T


def _compressed_projection(Lmat: np.ndarray, k: int) -> np.ndarray:
    """``C`` with ``future / past == C @ Q``; rows of ``Lmat`` split at ``k``."""
    P = _row_projector(Lmat[:k], k)
    return Lmat[k:] @ P


def orthogonal_project(h: HankelPair) -> np.ndarray:
    """``O_i = Y_f / Y_p`` computed from an LQ factorization."""
    Lmat, Q = lq(h.stacked)
    k = h.lifted_dim * h.block_rows
    return _compressed_projection(Lmat, k) @ Q


def project_explicit(future: np.ndarray, past: np.ndarray) -> np.ndarray:
    """Reference path: ``Y_f Y_p^T (Y_p Y_p^T)^+ Y_p``."""
    return future @ past.T @ np.linalg.pinv(past @ past.T) @ past


def shifted_projection(h: HankelPair) -> np.ndarray:
    """``O_{i-1} = Y_{i+1|2i-1} / Y_{0|i}``: past grows by one block row."""
    if h.block_rows < 2:
        raise ESIError("projection", "shifted projection needs i >= 2")
    Lmat, Q = lq(h.stacked)
    k = h.lifted_dim * (h.block_rows + 1)
    return _compressed_projection(Lmat, k) @ Q


# -- observability factor -----------------------------------------------------

def select_rank(s: np.ndarray, cfg: ESIConfig) -> int:
    """Number of retained singular values under ``cfg.rank_rule``.

    The gap rule takes the largest ratio ``s_k / s_{k+1}`` over candidates
    with ``s_k > 1e-12 s_1``; when no ratio reaches ``cfg.min_gap`` it falls
    back to the energy threshold.
    """
    s = np.asarray(s, float)
    if s.size == 0 or s[0] <= 0:
        return 0
    hi = len(s) if cfg.max_order is None else min(cfg.max_order, len(s))
    if cfg.rank_rule == "fixed":
        return int(cfg.order)
    energy = np.cumsum(s ** 2) / np.sum(s ** 2)
    k_energy = min(int(np.searchsorted(energy, cfg.energy * (1 - 1e-15))) + 1, hi)
    k_energy = max(k_energy, min(cfg.min_order, hi))
    if cfg.rank_rule == "energy":
        return k_energy
    sv = np.maximum(s, s[0] * 1e-300)
    ks = np.arange(max(cfg.min_order, 1), min(hi, len(s) - 1) + 1)
    ks = ks[sv[ks - 1] > 1e-12 * sv[0]]
    if ks.size == 0:
        return k_energy
    gaps = sv[ks - 1] / sv[ks]
    best = int(np.argmax(gaps))
    if gaps[best] < cfg.min_gap:
        return k_energy
    return int(ks[best])


def _weight_left(O: np.ndarray, cfg: ESIConfig, future: np.ndarray | None):
    if cfg.weights == "identity":
        return None
    if future is None:
        raise ESIError("svd", "CVA weighting needs the future block")
    cov = future @ future.T
    w, V = la.eigh(cov)
    w = np.maximum(w, w.max() * 1e-12)
    W1 = (V / np.sqrt(w)) @ V.T
    W1inv = (V * np.sqrt(w)) @ V.T
    return W1, W1inv


def factor_observability(O: np.ndarray, cfg: ESIConfig, future: np.ndarray | None = None):
    """SVD of ``W1 O W2`` and ``Gamma = W1^{-1} U1 sqrt(S1)``.

    Returns ``(Gamma, S1, K, s_all)``; ``W2`` is the identity.
    """
    weights = _weight_left(O, cfg, future)
    A = O if weights is None else weights[0] @ O
    U, s, _ = la.svd(A, full_matrices=False, check_finite=False)
    if s.size == 0 or s[0] <= np.finfo(float).tiny or not np.isfinite(s[0]):
        raise DegenerateProjection("svd", "projection is zero; no excited modes (K = 0)")
    K = select_rank(s, cfg)
    if K > min(O.shape):
        raise ESIError("svd", f"order {K} exceeds min(Li, j) = {min(O.shape)}")
    if K < 1 or s[K - 1] <= 0:
        raise DegenerateProjection("svd", "rank rule selected no states")
    Gamma = U[:, :K] * np.sqrt(s[:K])
    if weights is not None:
        Gamma = weights[1] @ Gamma
    return Gamma, s[:K], K, s


def kalman_states(Gamma: np.ndarray, O: np.ndarray, Gamma_prev: np.ndarray, O_prev: np.ndarray):
    """``(Gamma_i^+ O_i, Gamma_{i-1}^+ O_{i-1})``, minimum-norm pseudoinverses."""
    if O.shape[1] != O_prev.shape[1]:
        raise ESIError("states", f"column mismatch {O.shape[1]} vs {O_prev.shape[1]}")
    if Gamma.shape[0] != O.shape[0] or Gamma_prev.shape[0] != O_prev.shape[0]:
        raise ESIError("states", "observability factor rows do not match projections")
    X = np.linalg.pinv(Gamma) @ O
    X_next = np.linalg.pinv(Gamma_prev) @ O_prev
    return X, X_next


def default_ridge(X: np.ndarray) -> float:
    return 1e-12 * float(np.einsum("ij,ij->", X, X)) / max(X.shape[0], 1)


def fit_operator(X: np.ndarray, X_next: np.ndarray, Y: np.ndarray, ridge: float | None = None):
    """Ridge least squares for ``[X_next; Y] = [K; M] X + rho``.

    Returns ``(K, M, cov_delta, cov_xi)``; covariances are normalized by the
    column count.
    """
    if not (X.shape[1] == X_next.shape[1] == Y.shape[1]):
        raise ESIError("least-squares", "state and output blocks have unequal column counts")
    n, j = X.shape
    if j < n:
        raise ESIError("least-squares", f"{j} columns cannot determine {n} states")
    lam = default_ridge(X) if ridge is None else float(ridge)
    lhs = np.vstack([X_next, Y])
    G = X @ X.T + lam * np.eye(n)
    coef = la.solve(G, X @ lhs.T, assume_a="pos", check_finite=False).T
    K, M = coef[:n], coef[n:]
    res = lhs - coef @ X
    cov = res @ res.T / j
    return K, M, cov[:n, :n], cov[n:, n:]


# -- model and modes ----------------------------------------------------------

@dataclass
class ESIModel:
    K: np.ndarray                  # (K, K) lifted operator
    M: np.ndarray                  # (L, K) lifted output map
    gamma: np.ndarray              # (L*i, K)
    singular_values: np.ndarray    # all singular values of the weighted projection
    states: np.ndarray             # psi(X_i), (K, j)
    states_next: np.ndarray        # psi(X_{i+1}), (K, j)
    cov_delta: np.ndarray
    cov_xi: np.ndarray
    dt: float
    dictionary: Dictionary
    offset: np.ndarray
    scale: np.ndarray
    labels: list
    block_rows: int
    t0: float = 0.0
    config: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return self.K.shape[0]

    @property
    def S1(self) -> np.ndarray:
        return self.singular_values[:self.order]

    @property
    def recovery(self) -> np.ndarray:
        return recovery_map(self.dictionary, self.offset, self.scale)

    @property
    def state_times(self) -> np.ndarray:
        """Time stamps of the columns of ``states``."""
        return self.t0 + (self.block_rows + np.arange(self.states.shape[1])) * self.dt

    def reconstruct(self) -> np.ndarray:
        """Raw-coordinate outputs ``B M psi(X_i)`` at :attr:`state_times`."""
        return self.recovery @ self.M @ self.states


def identify(m: MeasurementSet, cfg: ESIConfig | None = None) -> ESIModel:
    """Fit the lifted linear representation to a measurement window."""
    cfg = cfg or ESIConfig()
    try:
        d = build_dictionary(m.n_channels, cfg.degree, cfg.truncation)
        lifted = lift(m, d)
    except ValueError as exc:
        raise ESIError("lifting", str(exc)) from exc
    Y = lifted.data
    Ldim, s = Y.shape
    i = cfg.rows_for(Ldim)
    h = build_block_hankel(Y, i)
    j = h.columns
    H = h.stacked / np.sqrt(j)
    try:
        Lmat, Q = lq(H)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ESIError("projection", str(exc)) from exc
    k = Ldim * i
    # projections are kept as C @ Q[:rows]; Q has orthonormal rows so the SVD
    # of C carries the left singular vectors and values of O itself
    C_i = _compressed_projection(Lmat, k)
    C_prev = _compressed_projection(Lmat, k + Ldim)
    Fw = H[k:] if cfg.weights == "cva" else None
    Gamma, S1, K, s_all = factor_observability(C_i, cfg, future=Fw)
    if K >= j:
        raise ESIError("svd", f"order {K} leaves no columns for least squares (j = {j})")
    Gamma_prev = Gamma[:-Ldim]
    X = np.linalg.pinv(Gamma) @ C_i @ Q
    X_next = np.linalg.pinv(Gamma_prev) @ C_prev @ Q
    Y_ii = H[k:k + Ldim]
    Kop, Mop, cd, cx = fit_operator(X, X_next, Y_ii, cfg.ridge)
    # states were built from 1/sqrt(j)-scaled blocks; undo for time-domain use
    scale = np.sqrt(j)
    return ESIModel(
        K=Kop, M=Mop, gamma=Gamma, singular_values=s_all,
        states=X * scale, states_next=X_next * scale,
        cov_delta=cd * j, cov_xi=cx * j,
        dt=m.dt, dictionary=d, offset=lifted.offset, scale=lifted.scale,
        labels=m.labels, block_rows=i, t0=m.t0, config=cfg.to_dict(),
    )


@dataclass
class ModeSet:
    """Eigen-structure of an identified operator.

    ``left`` holds left eigenvectors as rows (``left @ K = diag(gamma) @ left``)
    and ``right`` is its inverse.
    """

    gamma: np.ndarray
    dt: float
    left: np.ndarray | None = None
    right: np.ndarray | None = None
    amplitude: np.ndarray | None = None
    condition: float = 1.0
    method: str = "esi"
    stability_margin: float = 1e-9

    @property
    def lam(self) -> np.ndarray:
        return continuous_eigenvalues(self.gamma, self.dt)

    @property
    def frequency(self) -> np.ndarray:
        return np.abs(self.lam.imag) / (2 * np.pi)

    @property
    def damping(self) -> np.ndarray:
        lam = self.lam
        mag = np.abs(lam)
        with np.errstate(invalid="ignore", divide="ignore"):
            z = np.where(mag > 0, -lam.real / mag, 0.0)
        return z

    @property
    def unstable(self) -> np.ndarray:
        return np.abs(self.gamma) > 1 + self.stability_margin

    @property
    def near_nyquist(self) -> np.ndarray:
        return np.abs(np.angle(self.gamma)) > 0.9 * np.pi

    def __len__(self):
        return len(self.gamma)

    def upper(self) -> np.ndarray:
        """Indices of one representative per conjugate pair (Im >= 0) and real modes."""
        return np.flatnonzero(self.lam.imag >= -1e-12 * np.maximum(np.abs(self.lam), 1.0))

    def table(self, upper_only: bool = True) -> list[dict]:
        idx = self.upper() if upper_only else np.arange(len(self))
        lam, f, z = self.lam, self.frequency, self.damping
        unst, nyq = self.unstable, self.near_nyquist
        rows = []
        for k in idx:
            rows.append({
                "index": int(k), "real": float(lam[k].real), "imag": float(lam[k].imag),
                "frequency_hz": float(f[k]), "damping_ratio": float(z[k]),
                "abs_gamma": float(abs(self.gamma[k])),
                "amplitude": float(self.amplitude[k]) if self.amplitude is not None else float("nan"),
                "unstable": bool(unst[k]), "near_nyquist": bool(nyq[k]), "method": self.method,
            })
        return rows


def continuous_eigenvalues(gamma, dt: float) -> np.ndarray:
    """Principal-branch map ``ln(gamma) / dt``."""
    gamma = np.asarray(gamma, dtype=complex)
    with np.errstate(divide="ignore"):
        return np.log(gamma) / dt


def _sort_key(gamma, dt):
    lam = continuous_eigenvalues(gamma, dt)
    return np.lexsort((-np.sign(lam.imag), lam.real, np.round(np.abs(lam.imag), 10)))


def eig_modes(Kop: np.ndarray, dt: float, method: str = "esi") -> ModeSet:
    gamma, V = la.eig(Kop)
    order = _sort_key(gamma, dt)
    gamma, V = gamma[order], V[:, order]
    cond = float(np.linalg.cond(V))
    if not np.isfinite(cond) or cond > 1e12:
        warnings.warn(f"operator is numerically defective (eigenvector condition {cond:.3g})",
                      ModeWarning, stacklevel=2)
        left = np.linalg.pinv(V)
    else:
        left = np.linalg.inv(V)
    return ModeSet(gamma=gamma, dt=dt, left=left, right=V, condition=cond, method=method)


def extract_modes(model: ESIModel) -> ModeSet:
    """Eigenvalues, left eigenvectors and output amplitude of each mode."""
    if not model.dt > 0:
        raise ESIError("modes", "sample interval must be positive")
    ms = eig_modes(model.K, model.dt)
    shapes = model.recovery @ model.M @ ms.right          # Koopman modes
    coords = ms.left @ model.states                         # eigenfunction series
    rms = np.sqrt(np.mean(np.abs(coords) ** 2, axis=1))
    ms.amplitude = np.linalg.norm(shapes / model.scale[:, None], axis=0) * rms
    return ms
