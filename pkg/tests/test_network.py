"""Network assembly, power flow, equilibrium and linearization."""
import json

import numpy as np
import pytest

from esi.dynamics import (NetworkConfigError, available_cases, build_network, jacobian_fd, linearize,
                          load_case, modal_participation, power_flow, solve_equilibrium)
from esi.dynamics.dae import algebraic_residual

from conftest import smib_config


def test_bundled_cases_build_and_balance():
    assert {"two_area", "ten_machine"} <= set(available_cases())
    for name in available_cases():
        net = build_network(load_case(name))
        eq = solve_equilibrium(net)
        assert eq.residual < 1e-9
        assert algebraic_residual(net, eq.params, eq.x, eq.V, eq.Id, eq.Iq) < 1e-9


def test_unknown_case():
    with pytest.raises(KeyError):
        load_case("nine_bus")


def test_admittance_is_symmetric_and_loads_separate(two_area):
    net, _ = two_area
    assert np.allclose(net.Y_net, net.Y_net.T)
    assert np.allclose(net.Y - net.Y_net, np.diag(net.load_y))
    # each load is a constant admittance P - jQ at 1 pu
    for ld in net.loads:
        assert net.load_y[net.index(ld.bus)] == pytest.approx(complex(ld.P, -ld.Q))


def test_two_area_totals(two_area):
    net, _ = two_area
    assert net.n_gen == 4 and net.n_bus == 10
    assert net.total_inertia() == pytest.approx(46.0)
    assert net.without_generator("G3").total_inertia() == pytest.approx(36.0)


def test_power_flow_meets_set_points(two_area):
    net, _ = two_area
    V, iters, mis = power_flow(net)
    assert mis < 1e-12 and iters < 10
    S = V * np.conj(net.Y @ V)
    for g in net.generators:
        k = net.index(g.bus)
        assert abs(V[k]) == pytest.approx(g.V, abs=1e-12)
        if g.bus != net.slack:
            assert S[k].real == pytest.approx(g.P, abs=1e-10)


def test_equilibrium_derivatives_vanish(two_area):
    net, eq = two_area
    from esi.dynamics.linearize import state_function
    f = state_function(net, eq.params)
    assert np.max(np.abs(f(eq.x.ravel()))) < 1e-9
    assert np.allclose(eq.x[1], 2 * np.pi * 60.0)


@pytest.mark.parametrize("mutate, pointer", [
    (lambda c: c["lines"][0].pop("x"), "/lines/0/x"),
    (lambda c: c["lines"][0].update({"to": 99}), "/lines/0/to"),
    (lambda c: c["generators"][0]["params"].update({"M": -1.0}), "/generators/0/params"),
    (lambda c: c["generators"][0]["params"].update({"H": 3.0}), "/generators/0/params"),
    (lambda c: c["loads"].append({"bus": 1, "P": "heavy"}), "/loads/0/P"),
    (lambda c: c["buses"].append(1), "/buses/2"),
])
def test_config_errors_carry_pointers(mutate, pointer):
    cfg = json.loads(json.dumps(smib_config()))
    cfg.setdefault("loads", [])
    mutate(cfg)
    with pytest.raises(NetworkConfigError) as exc:
        build_network(cfg)
    assert exc.value.pointer == pointer


def test_disconnected_network_rejected():
    cfg = smib_config()
    cfg = {**cfg, "buses": [1, 2, 3]}
    with pytest.raises(NetworkConfigError):
        build_network(cfg)


def test_jacobian_fd_on_known_map():
    A = np.array([[0.0, 1.0], [-4.0, -0.3]])
    J = jacobian_fd(lambda x: A @ x + 0.5 * x[0] ** 2 * np.array([0.0, 1.0]), np.array([0.2, -1.0]))
    assert np.allclose(J, A + np.array([[0, 0], [0.2, 0]]), atol=1e-8)


def test_modal_participation_columns_sum_to_one():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((6, 6))
    w, vr, vl, P = modal_participation(A)
    assert np.allclose(P.sum(axis=0), 1.0)
    assert np.allclose(vl.conj().T @ vr, np.eye(6), atol=1e-10)
    # diagonal matrix: each state participates only in its own mode
    _, _, _, Pd = modal_participation(np.diag([-1.0, -2.0, -3.0]))
    assert np.allclose(np.sort(Pd, axis=0)[-1], 1.0)


def test_classical_machine_against_analytic_swing_mode():
    """Constant-emf machine on an infinite bus: lambda^2 + (D/M) lambda + ws Ks / M = 0."""
    M, D, xp, xl = 6.0, 1.0, 0.3, 0.5
    cfg = smib_config(M=M, D=D, X_d=xp, X_q=xp, X_d_prime=xp, K_A=0.0, R_s=0.0)
    net = build_network(cfg)
    eq = solve_equilibrium(net)
    lin = linearize(net, eq)
    delta, Eq = eq.x[0, 0], eq.x[2, 0]
    ws = 2 * np.pi * 60.0
    Ks = Eq * 1.0 * np.cos(delta) / (xp + xl)
    expected = np.roots([1.0, D / M, ws * Ks / M])
    expected = expected[expected.imag > 0][0]
    osc = lin.eigenvalues[lin.eigenvalues.imag > 0]
    assert osc.size == 1
    assert abs(osc[0] - expected) / abs(expected) < 1e-6
    # the remaining modes are the field decay and the frozen exciter
    real = np.sort(lin.eigenvalues[np.abs(lin.eigenvalues.imag) < 1e-9].real)
    assert real == pytest.approx([-1.0 / 5.0, 0.0], abs=1e-6)


def test_two_area_electromechanical_modes(two_area):
    net, eq = two_area
    lin = linearize(net, eq)
    em = lin.electromechanical()
    assert len(em) == 3
    # only the angle-reference mode sits at zero
    assert np.sum(np.abs(lin.eigenvalues) < 1e-6) == 1
    assert np.all(lin.eigenvalues.real < 1e-6)
    f = np.sort(lin.frequency[em])
    # one inter-area mode below 1 Hz, one local mode per area above it
    assert f[0] < 0.8 and f[1] > 0.9 and f[2] > 0.9
    inter = em[np.argmin(lin.frequency[em])]
    share = lin.generator_participation()[:, inter]
    assert np.all(share > 0.05)


def test_linearize_with_tripped_machine(two_area):
    net, eq = two_area
    online = np.array([True, True, False, True])
    lin = linearize(net, eq, online=online)
    assert lin.A.shape == (12, 12)
    assert "G3" not in lin.generator_names
