import dataclasses
import warnings

import numpy as np
import pytest

from esi.dynamics import build_network, load_case, pulse_scenario, simulate, solve_equilibrium
from esi.measurements import MeasurementSet

SMIB = {
    "name": "smib",
    "frequency": 60.0,
    "buses": [1, 2],
    "lines": [{"from": 1, "to": 2, "x": 0.5}],
    "generators": [{"name": "G1", "bus": 1, "P": 0.8, "V": 1.0,
                    "params": {"M": 6.0, "D": 1.0, "X_d": 1.6, "X_q": 1.5, "X_d_prime": 0.3,
                               "T_do_prime": 5.0, "K_A": 50.0, "T_A": 0.01}}],
    "infinite_buses": [{"bus": 2, "V": 1.0}],
}


def smib_config(**params):
    cfg = {**SMIB, "generators": [dict(SMIB["generators"][0])]}
    cfg["generators"][0]["params"] = {**SMIB["generators"][0]["params"], **params}
    return cfg


def perturbed(eq, **shifts):
    """Copy of an equilibrium with state rows shifted (delta=..., Eq=...)."""
    x = eq.x.copy()
    for k, name in enumerate(("delta", "omega", "Eq", "Efd")):
        if name in shifts:
            x[k] += shifts[name]
    return dataclasses.replace(eq, x=x)


def random_linear_system(seed, dt=0.05):
    """Stable real system with ``n/2`` oscillatory pairs in a random basis.

    Returns ``(rng, A, C, lam)`` with ``lam`` the upper-half continuous
    eigenvalues.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.choice([4, 6, 8]))
    l = int(rng.integers(2, 5))
    f = np.sort(rng.uniform(0.2, 3.0, n // 2))
    z = rng.uniform(0.02, 0.2, n // 2)
    lam = 2 * np.pi * f * (-z + 1j * np.sqrt(1 - z ** 2))
    A = np.zeros((n, n))
    for k, g in enumerate(np.exp(lam * dt)):
        A[2 * k:2 * k + 2, 2 * k:2 * k + 2] = [[g.real, g.imag], [-g.imag, g.real]]
    T = rng.standard_normal((n, n))
    A = T @ A @ np.linalg.inv(T)
    C = rng.standard_normal((l, n))
    return rng, A, C, lam


def linear_outputs(rng, A, C, n_samples, process_noise=False):
    x = rng.standard_normal(A.shape[0])
    Y = np.empty((C.shape[0], n_samples))
    for k in range(n_samples):
        Y[:, k] = C @ x
        x = A @ x
        if process_noise:
            x = x + rng.standard_normal(A.shape[0])
    return Y


def as_measurements(Y, dt, quantity="V"):
    return MeasurementSet(rate=1.0 / dt, channels=[f"{k + 1}:{quantity}" for k in range(Y.shape[0])],
                          data=Y)


def damped_tones(freqs, zetas, dt, n, amps=None, phases=None, offset=0.0):
    t = np.arange(n) * dt
    amps = np.ones(len(freqs)) if amps is None else amps
    phases = np.zeros(len(freqs)) if phases is None else phases
    y = np.full(n, float(offset))
    for f, z, a, p in zip(freqs, zetas, amps, phases):
        w = 2 * np.pi * f
        y += a * np.exp(-z * w * t) * np.cos(w * np.sqrt(1 - z ** 2) * t + p)
    return y


@pytest.fixture(scope="session")
def two_area():
    net = build_network(load_case("two_area"))
    return net, solve_equilibrium(net)


@pytest.fixture(scope="session")
def ringdown(two_area):
    """Two-area response to voltage set-point pulses on G1 and G3, 30 s."""
    net, eq = two_area
    sc = pulse_scenario(30.0, [(2.0, "G1", 0.05), (2.2, "G3", 0.05)], record_step=0.01)
    return simulate(net, sc, eq)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


# -- acceptance summary -------------------------------------------------------

ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    """Log one acceptance line and assert it."""
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, f"{criterion}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
