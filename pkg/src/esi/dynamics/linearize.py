"""Small-signal oracle: finite-difference state matrix and modal analysis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .dae import GenArrays, ReducedNetwork, derivatives, solve_stator, state_names
from .equilibrium import Equilibrium
from .network import NetworkModel


def jacobian_fd(f, x0: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of ``f`` at ``x0``.

    The step for component ``k`` is ``rel_step * max(1, |x0_k|)``.
    """
    x0 = np.asarray(x0, dtype=float)
    f0 = np.asarray(f(x0), dtype=float)
    J = np.empty((f0.size, x0.size))
    for k in range(x0.size):
        h = rel_step * max(1.0, abs(x0[k]))
        xp = x0.copy()
        xm = x0.copy()
        xp[k] += h
        xm[k] -= h
        J[:, k] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * h)
    return J


def modal_participation(A: np.ndarray):
    """Eigen-decomposition sorted by ``|imag|`` plus participation factors.

    Returns ``(eigenvalues, right, left, P)`` where ``P[k, i]`` is the
    normalized participation of state ``k`` in mode ``i``
    (``|left_ki * right_ki|`` scaled so each column sums to one).
    """
    w, vl, vr = la.eig(A, left=True, right=True)
    order = np.lexsort((w.real, w.imag, np.abs(w.imag)))
    w, vl, vr = w[order], vl[:, order], vr[:, order]
    # scale left vectors so that vl^H vr = I
    norm = np.einsum("ij,ij->j", vl.conj(), vr)
    vl = vl / norm.conj()[None, :]
    P = np.abs(vl.conj() * vr)
    P = P / P.sum(axis=0, keepdims=True)
    return w, vr, vl, P


@dataclass
class Linearization:
    A: np.ndarray
    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    participation: np.ndarray       # (n_states, n_modes)
    state_names: list
    generator_names: list

    @property
    def frequency(self) -> np.ndarray:
        return np.abs(self.eigenvalues.imag) / (2 * np.pi)

    @property
    def damping(self) -> np.ndarray:
        lam = self.eigenvalues
        mag = np.abs(lam)
        return np.where(mag > 0, -lam.real / np.where(mag > 0, mag, 1), 0.0)

    def generator_participation(self, kinds=("delta", "omega")) -> np.ndarray:
        """Participation summed over the given state kinds, (n_g, n_modes)."""
        n = len(self.generator_names)
        out = np.zeros((n, self.eigenvalues.size))
        for k, name in enumerate(self.state_names):
            kind, _, gen = name.partition("_")
            if kind in kinds:
                out[self.generator_names.index(gen)] += self.participation[k]
        return out

    def electromechanical(self, fmin: float = 0.1, fmax: float = 2.5, min_share: float = 0.5) -> np.ndarray:
        """Indices of oscillatory modes (upper half-plane) dominated by rotor states."""
        share = self.generator_participation().sum(axis=0)
        lam = self.eigenvalues
        f = self.frequency
        return np.flatnonzero((lam.imag > 0) & (f >= fmin) & (f <= fmax) & (share >= min_share))


def state_function(network: NetworkModel, params, online=None, load_scale=None):
    """Reduced right-hand side over the online machines' states.

    The returned callable maps a flat vector (4 n_on, ordered delta, omega,
    Eq, Efd) to its derivative.
    """
    online = np.ones(network.n_gen, bool) if online is None else np.asarray(online, bool)
    red = ReducedNetwork(network, online, load_scale)
    p = GenArrays.from_params(list(params)).subset(online)
    n = int(online.sum())

    def f(z):
        x = np.asarray(z, dtype=float).reshape(4, n)
        Id, Iq, Vdq, _ = solve_stator(red, p, x[0], x[2])
        return derivatives(p, x, Id, Iq, np.abs(Vdq)).ravel()

    return f


def linearize(network: NetworkModel, x0: Equilibrium, online=None, rel_step: float = 1e-6) -> Linearization:
    """State matrix of the model at ``x0`` with algebraic variables eliminated.

    ``online`` optionally masks out tripped machines; their states are dropped.
    """
    online = np.ones(network.n_gen, bool) if online is None else np.asarray(online, bool)
    f = state_function(network, x0.params, online)
    z0 = x0.x[:, online].ravel()
    A = jacobian_fd(f, z0, rel_step)
    w, vr, vl, P = modal_participation(A)
    names = state_names(network, online)
    gens = [g.name for k, g in enumerate(network.generators) if online[k]]
    return Linearization(A, w, vr, vl, P, names, gens)
