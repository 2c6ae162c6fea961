"""Differential and algebraic parts of the multi-machine model.

Dynamic states per generator: rotor angle, rotor speed (rad/s), q-axis
transient emf and exciter field voltage. Algebraic variables: bus voltage
phasors and the d/q stator currents.

Given the dynamic states, the stator equations and the network current
balance are affine in the algebraic variables, so a Newton iteration on them
terminates after a single linear solve. The network buses without generation
are eliminated once per topology (Kron reduction); the per-stage solve is a
dense ``2 n_g`` system in the stator currents.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg.lapack import dgesv as _dgesv

from .network import GeneratorParams, NetworkModel

STATE_KINDS = ("delta", "omega", "Eq", "Efd")


class AlgebraicError(RuntimeError):
    pass


@dataclass
class GenArrays:
    M: np.ndarray
    D: np.ndarray
    Xd: np.ndarray
    Xq: np.ndarray
    Xdp: np.ndarray
    Tdo: np.ndarray
    Rs: np.ndarray
    KA: np.ndarray
    TA: np.ndarray
    Tm: np.ndarray
    Vref: np.ndarray
    ws: np.ndarray

    @classmethod
    def from_params(cls, params: list[GeneratorParams]) -> "GenArrays":
        a = lambda f: np.array([getattr(p, f) for p in params], dtype=float)  # noqa: E731
        return cls(a("M"), a("D"), a("X_d"), a("X_q"), a("X_d_prime"), a("T_do_prime"),
                   a("R_s"), a("K_A"), a("T_A"), a("T_m"), a("V_ref"), a("omega_s"))

    def subset(self, mask) -> "GenArrays":
        return GenArrays(**{k: v[mask] for k, v in self.__dict__.items()})


def state_names(network: NetworkModel, online=None) -> list[str]:
    names = []
    gens = [g for k, g in enumerate(network.generators) if online is None or online[k]]
    for kind in STATE_KINDS:
        names.extend(f"{kind}_{g.name}" for g in gens)
    return names


class ReducedNetwork:
    """Kron-reduced network seen from the online generator buses.

    ``V_gen = Z @ I_gen + v_src`` where ``I_gen`` are network-frame generator
    currents and ``v_src`` the open-circuit contribution of fixed sources.
    """

    def __init__(self, network: NetworkModel, online=None, load_scale=None):
        self.network = network
        n = network.n_bus
        online = np.ones(network.n_gen, bool) if online is None else np.asarray(online, bool)
        scale = network.load_scale if load_scale is None else np.asarray(load_scale, float)
        Y = network.Y_net + np.diag(network.load_y * scale)
        self.Y = Y
        self.online = online
        gen_idx = network.gen_bus_index
        self.gb = gen_idx[online]
        self.ib = np.array([network.index(b) for b in network.infinite], dtype=int)
        self.v_inf = np.array(list(network.infinite.values()), dtype=complex)
        fixed = set(self.gb) | set(self.ib)
        self.ob = np.array([k for k in range(n) if k not in fixed], dtype=int)
        gb, ib, ob = self.gb, self.ib, self.ob
        try:
            if ob.size:
                Yoo_inv = np.linalg.inv(Y[np.ix_(ob, ob)])
                if not np.all(np.isfinite(Yoo_inv)):
                    raise np.linalg.LinAlgError("non-finite inverse")
            else:
                Yoo_inv = np.zeros((0, 0), complex)
            Ygg = Y[np.ix_(gb, gb)] - Y[np.ix_(gb, ob)] @ Yoo_inv @ Y[np.ix_(ob, gb)]
            Ygi = Y[np.ix_(gb, ib)] - Y[np.ix_(gb, ob)] @ Yoo_inv @ Y[np.ix_(ob, ib)]
            self.Z = np.linalg.inv(Ygg) if gb.size else np.zeros((0, 0), complex)
        except np.linalg.LinAlgError as exc:
            raise AlgebraicError(f"singular algebraic Jacobian: {exc}") from None
        if gb.size and np.linalg.cond(Ygg) > 1e14:
            raise AlgebraicError("singular algebraic Jacobian (reduced admittance is ill-conditioned)")
        self.v_src = -self.Z @ Ygi @ self.v_inf if gb.size else np.zeros(0, complex)
        # back substitution for eliminated buses: V_o = T_g V_g + T_i V_inf
        self.T_g = -Yoo_inv @ Y[np.ix_(ob, gb)]
        self.t_o = -Yoo_inv @ Y[np.ix_(ob, ib)] @ self.v_inf

    def bus_voltages(self, V_gen: np.ndarray) -> np.ndarray:
        V = np.empty(self.network.n_bus, complex)
        V[self.gb] = V_gen
        V[self.ib] = self.v_inf
        V[self.ob] = self.T_g @ V_gen + self.t_o
        return V


class StatorSolver:
    """Per-stage stator solve with the topology-dependent pieces cached."""

    def __init__(self, red: ReducedNetwork, p: GenArrays):
        n = red.gb.size
        self.n = n
        self.Z = red.Z
        self.v_src = red.v_src
        d = np.arange(n)
        self.diag = (np.concatenate([d, d, n + d, n + d]), np.concatenate([d, n + d, d, n + d]))
        self.diag_add = np.concatenate([p.Rs, -p.Xq, p.Xdp, p.Rs])
        self.J = np.empty((2 * n, 2 * n))
        self.rhs = np.empty(2 * n)

    def __call__(self, delta, Eq):
        n = self.n
        if n == 0:
            z = np.zeros(0)
            return z, z, z.astype(complex), z.astype(complex)
        e = np.exp(1j * (delta - np.pi / 2))
        ec = e.conj()
        Zp = self.Z * np.multiply.outer(ec, e)
        sp = ec * self.v_src
        A, B = Zp.real, Zp.imag
        J = self.J
        J[:n, :n] = A
        J[:n, n:] = -B
        J[n:, :n] = B
        J[n:, n:] = A
        J[self.diag] += self.diag_add
        rhs = self.rhs
        rhs[:n] = -sp.real
        rhs[n:] = Eq - sp.imag
        lu, piv, sol, info = _dgesv(J, rhs)
        if info != 0:
            raise AlgebraicError("singular algebraic Jacobian in stator solve")
        Id, Iq = sol[:n], sol[n:]
        Vdq = Zp @ (Id + 1j * Iq) + sp
        return Id, Iq, Vdq, e * Vdq


def solve_stator(red: ReducedNetwork, p: GenArrays, delta, Eq):
    """Stator currents and terminal voltages for the online machines.

    ``p``, ``delta`` and ``Eq`` refer to online machines only. Returns
    ``(Id, Iq, Vdq, V_gen)`` with ``Vdq = Vd + j Vq``.
    """
    return StatorSolver(red, p)(np.asarray(delta, float), np.asarray(Eq, float))


def derivatives(p: GenArrays, x: np.ndarray, Id, Iq, Vt) -> np.ndarray:
    """Right-hand sides for a (4, n) state block of online machines."""
    delta, omega, Eq, Efd = x
    dw = omega - p.ws
    dx = np.empty_like(x)
    dx[0] = dw
    dx[1] = (p.ws / p.M) * (p.Tm - (Eq + (p.Xq - p.Xdp) * Id) * Iq - p.D * dw / p.ws)
    dx[2] = (Efd - Eq - (p.Xd - p.Xdp) * Id) / p.Tdo
    # K_A = 0 means no voltage regulator: the field voltage is held constant
    dx[3] = (p.KA * (p.Vref - Vt) - Efd * (p.KA > 0)) / p.TA
    return dx


def electrical_power(p: GenArrays, Eq, Id, Iq):
    return Eq * Iq + (p.Xq - p.Xdp) * Id * Iq


def algebraic_residual(network: NetworkModel, params: list[GeneratorParams], x: np.ndarray,
                       V: np.ndarray, Id, Iq, online=None, load_scale=None) -> float:
    """Infinity norm of the stator and network equations at one point.

    ``x`` is the full (4, n_g) state block, ``Id``/``Iq`` full-length with
    zeros for offline machines, ``V`` the complex bus voltages.
    """
    online = np.ones(network.n_gen, bool) if online is None else np.asarray(online, bool)
    p = GenArrays.from_params(params)
    delta, _, Eq, _ = x
    gb = network.gen_bus_index
    Vg, th = np.abs(V[gb]), np.angle(V[gb])
    r1 = Vg * np.sin(delta - th) + p.Rs * Id - p.Xq * Iq
    r2 = Eq - Vg * np.cos(delta - th) - p.Rs * Iq - p.Xdp * Id
    scale = network.load_scale if load_scale is None else np.asarray(load_scale)
    Y = network.Y_net + np.diag(network.load_y * scale)
    inj = np.zeros(network.n_bus, complex)
    Ig = (Id + 1j * Iq) * np.exp(1j * (delta - np.pi / 2))
    np.add.at(inj, gb[online], Ig[online])
    kcl = Y @ V - inj
    keep = np.ones(network.n_bus, bool)
    keep[[network.index(b) for b in network.infinite]] = False
    res = [np.abs(r1[online]), np.abs(r2[online]), np.abs(kcl[keep])]
    return float(max((r.max() for r in res if r.size), default=0.0))
