"""Polynomial dictionaries and lifting."""
from math import comb

import numpy as np
import pytest

from esi.lifting import (Dictionary, LiftingError, build_dictionary, full_size, lift, recover,
                         recovery_map)
from esi.measurements import MeasurementSet


def test_sizes_and_ordering():
    d = build_dictionary(2, 3)
    assert d.size == full_size(2, 3) == comb(5, 3) == 10
    assert d.names(["a", "b"]) == ["1", "a", "b", "a^2", "a*b", "b^2", "a^3", "a^2*b", "a*b^2", "b^3"]
    assert d.exponents().sum(axis=1).tolist() == [0, 1, 1, 2, 2, 2, 3, 3, 3, 3]


def test_truncation_keeps_low_degrees():
    d = build_dictionary(3, 3, truncation=6)
    assert d.size == 6
    assert d.monomials[:4] == ((), (0,), (1,), (2,))
    with pytest.raises(LiftingError):
        build_dictionary(3, 2, truncation=3)


@pytest.mark.parametrize("args", [(0, 1), (2, 0), (2, 9)])
def test_invalid_dictionaries(args):
    with pytest.raises(LiftingError):
        build_dictionary(*args)


def test_evaluate_matches_explicit_products():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((3, 50))
    d = build_dictionary(3, 3)
    vals = d.evaluate(z)
    expo = d.exponents()
    explicit = np.prod(z[None, :, :] ** expo[:, :, None], axis=1)
    assert np.allclose(vals, explicit, rtol=1e-13, atol=1e-13)


def test_json_round_trip():
    d = build_dictionary(4, 2, truncation=12)
    assert Dictionary.from_json(d.to_json()) == d


def test_lift_standardizes_and_recovers():
    rng = np.random.default_rng(1)
    data = np.vstack([1.0 + 0.01 * rng.standard_normal(200), 60.0 + 0.02 * rng.standard_normal(200)])
    m = MeasurementSet(rate=50.0, channels=["1:V", "1:f"], data=data)
    L = lift(m, build_dictionary(2, 2))
    assert np.allclose(L.data[0], 1.0)
    assert np.allclose(L.data[1:3].mean(axis=1), 0.0, atol=1e-12)
    assert np.allclose(L.data[1:3].std(axis=1), 1.0)
    back = recover(L)
    assert back.labels == m.labels
    assert np.max(np.abs(back.data - data)) <= 1e-12 * np.max(np.abs(data))
    B = recovery_map(L.dictionary, L.offset, L.scale)
    assert B.shape == (2, 6) and np.count_nonzero(B[:, 3:]) == 0


def test_lift_rejects_flat_and_mismatched_channels():
    m = MeasurementSet(rate=10.0, channels=["1:V", "2:V"], data=np.vstack([np.ones(20), np.arange(20.0)]))
    with pytest.raises(LiftingError, match="1:V"):
        lift(m, build_dictionary(2, 1))
    with pytest.raises(LiftingError):
        lift(m.select(["2:V"]), build_dictionary(2, 1))
