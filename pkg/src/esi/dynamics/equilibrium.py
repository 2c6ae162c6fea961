"""Power flow and generator initialization."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dae import GenArrays, ReducedNetwork, algebraic_residual, derivatives, solve_stator
from .network import NetworkModel


class EquilibriumError(RuntimeError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (final residual {residual:.3e})")
        self.residual = residual


@dataclass
class GeneratorState:
    delta: float
    omega: float
    E_q_prime: float
    E_fd: float


@dataclass
class Equilibrium:
    """Operating point: dynamic states (4, n_g), bus voltages, set-points.

    ``params`` carries the network's generator parameters with ``T_m`` and
    ``V_ref`` filled in so that every derivative vanishes at ``x``.
    """

    x: np.ndarray
    V: np.ndarray
    Id: np.ndarray
    Iq: np.ndarray
    params: list
    residual: float
    iterations: int

    @property
    def states(self) -> list[GeneratorState]:
        return [GeneratorState(*map(float, col)) for col in self.x.T]

    @property
    def flat(self) -> np.ndarray:
        return self.x.ravel().copy()


def _bus_types(net: NetworkModel):
    ref = {net.index(b) for b in net.infinite}
    if net.slack is not None:
        ref.add(net.index(net.slack))
    pv = {net.index(g.bus) for g in net.generators} - ref
    pq = set(range(net.n_bus)) - ref - pv
    return sorted(ref), sorted(pv), sorted(pq)


def _dS(Y, V):
    """Derivatives of complex injections with respect to |V| and angle."""
    I = Y @ V
    Vn = V / np.abs(V)
    dS_dVm = np.diag(V) @ np.conj(Y @ np.diag(Vn)) + np.diag(np.conj(I) * Vn)
    dS_dVa = 1j * np.diag(V) @ np.conj(np.diag(I) - Y @ np.diag(V))
    return dS_dVm, dS_dVa


def power_flow(net: NetworkModel, tol: float = 1e-12, max_iter: int = 30):
    """Newton power flow in polar form. Returns ``(V, iterations, mismatch)``."""
    Y = net.Y
    n = net.n_bus
    ref, pv, pq = _bus_types(net)
    Vm = np.ones(n)
    Va = np.zeros(n)
    P = np.zeros(n)
    for g in net.generators:
        k = net.index(g.bus)
        Vm[k] = g.V
        P[k] += g.P
    for b, v in net.infinite.items():
        k = net.index(b)
        Vm[k], Va[k] = abs(v), np.angle(v)
    S_spec = P.astype(complex)
    pvpq = pv + pq
    mis = np.inf
    for it in range(max_iter + 1):
        V = Vm * np.exp(1j * Va)
        S = V * np.conj(Y @ V)
        dS = S - S_spec
        F = np.concatenate([dS.real[pvpq], dS.imag[pq]])
        mis = float(np.max(np.abs(F))) if F.size else 0.0
        if not np.isfinite(mis):
            break
        if mis < tol:
            return V, it, mis
        if it == max_iter:
            break
        dVm, dVa = _dS(Y, V)
        J = np.block([
            [dVa.real[np.ix_(pvpq, pvpq)], dVm.real[np.ix_(pvpq, pq)]],
            [dVa.imag[np.ix_(pq, pvpq)], dVm.imag[np.ix_(pq, pq)]],
        ])
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise EquilibriumError("power flow Jacobian is singular", mis) from None
        Va[pvpq] += dx[:len(pvpq)]
        Vm[pq] += dx[len(pvpq):]
        if np.any(Vm[pq] <= 0.05):
            break
    raise EquilibriumError(f"power flow did not converge in {max_iter} iterations", mis)


def solve_equilibrium(net: NetworkModel, tol: float = 1e-12, max_iter: int = 30) -> Equilibrium:
    """Steady state of the full model around the power-flow solution.

    Rotor angles and stator currents come from the power flow; the set-points
    ``T_m`` and ``V_ref`` are then taken from the stator solution at those
    states so that the differential right-hand sides vanish exactly.
    """
    V, iters, mis = power_flow(net, tol=tol, max_iter=max_iter)
    ng = net.n_gen
    p = GenArrays.from_params([g.params for g in net.generators])
    gb = net.gen_bus_index
    Vg = V[gb]
    Y = net.Y
    S = Vg * np.conj((Y @ V)[gb])
    I = np.conj(S / Vg)
    E = Vg + (p.Rs + 1j * p.Xq) * I
    delta = np.angle(E)
    rot = np.exp(-1j * (delta - np.pi / 2))
    Idq = I * rot
    Vdq = Vg * rot
    Eq = Vdq.imag + p.Rs * Idq.imag + p.Xdp * Idq.real

    red = ReducedNetwork(net)
    Id, Iq, Vdq2, V_gen = solve_stator(red, p, delta, Eq)
    Efd = Eq + (p.Xd - p.Xdp) * Id
    Vt = np.abs(Vdq2)
    Tm = Eq * Iq + (p.Xq - p.Xdp) * Id * Iq
    has_avr = p.KA > 0
    Vref = Vt + Efd / np.where(has_avr, p.KA, 1.0) * has_avr
    params = [replace(g.params, T_m=float(Tm[k]), V_ref=float(Vref[k])) for k, g in enumerate(net.generators)]

    x = np.vstack([delta, p.ws.copy(), Eq, Efd])
    if ng and not np.all(np.isfinite(x)):
        raise EquilibriumError("non-finite generator initialization", mis)
    p2 = GenArrays.from_params(params)
    dx = derivatives(p2, x, Id, Iq, Vt) if ng else np.zeros((4, 0))
    Vbus = red.bus_voltages(V_gen)
    res = float(np.max(np.abs(dx))) if dx.size else 0.0
    res = max(res, algebraic_residual(net, params, x, Vbus, Id, Iq))
    return Equilibrium(x=x, V=Vbus, Id=Id, Iq=Iq, params=params, residual=res, iterations=iters)
