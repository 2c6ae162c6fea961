"""Synthetic PMU channels sampled from a simulated trajectory.

Channel definitions at bus ``b``:

* ``V``, ``theta``: magnitude (pu) and unwrapped angle (rad) of the bus voltage
  in the synchronous frame.
* ``P``, ``Q``: complex power delivered from the bus into its lines and
  shunts (pu). At a generator bus without local load this is the machine's
  terminal output.
* ``f``: nominal frequency plus ``d(theta)/dt / (2 pi)``, by first-order
  backward difference of the sampled angle (the first sample repeats the
  second).
* ``omega``: rotor speed of the machine at ``b`` (rad/s).

Noise is zero-mean Gaussian, per channel, with power set from the channel's
variance about its mean so that ``10 log10(var / noise_var) == snr``.
"""
from __future__ import annotations

import numpy as np

from ..measurements import QUANTITIES, Channel, MeasurementSet
from .simulate import TrajectoryRecord


class ChannelError(ValueError):
    pass


def resolve_channels(network, selectors) -> list[Channel]:
    """Expand selectors such as ``"V"``, ``"f@gen"`` or ``"5:P"``."""
    if isinstance(selectors, str):
        selectors = [s for s in selectors.split(",") if s.strip()]
    gen_buses = [g.bus for g in network.generators]
    out: list[Channel] = []
    for sel in selectors:
        if isinstance(sel, Channel):
            chans = [sel]
        else:
            sel = sel.strip()
            if ":" in sel:
                chans = [Channel.parse(sel)]
            else:
                q, _, where = sel.partition("@")
                if where not in ("", "gen", "all"):
                    raise ChannelError(f"unknown bus group {where!r} in selector {sel!r}")
                buses = gen_buses if (where == "gen" or q == "omega") else list(network.buses)
                chans = [Channel(b, q) for b in buses]
        for c in chans:
            if c.quantity not in QUANTITIES:
                raise ChannelError(f"unknown quantity {c.quantity!r} (choose from {QUANTITIES})")
            if c.bus not in network.buses:
                raise ChannelError(f"channel {c.label}: unknown bus")
            if c.quantity == "omega" and c.bus not in gen_buses:
                raise ChannelError(f"channel {c.label}: rotor speed needs a generator at the bus")
            if c not in out:
                out.append(c)
    if not out:
        raise ChannelError("no channels selected")
    return out


def add_noise(data: np.ndarray, snr, seed=None) -> np.ndarray:
    """Add per-row Gaussian noise at ``snr`` dB relative to each row's variance."""
    if snr is None:
        return data.copy()
    rng = np.random.default_rng(seed)
    sigma = np.sqrt(data.var(axis=1) / 10 ** (snr / 10.0))
    return data + sigma[:, None] * rng.standard_normal(data.shape)


def sample_pmu(traj: TrajectoryRecord, network=None, rate: float = 100.0, snr=None,
               channels=("V", "f"), seed=None, start=None, stop=None) -> MeasurementSet:
    """Decimate the trajectory to ``rate`` and build the requested channels."""
    network = network or traj.network
    chans = resolve_channels(network, channels)
    dt = traj.dt
    ratio = 1.0 / (rate * dt)
    if ratio < 1 - 1e-9:
        raise ChannelError(f"rate {rate} Hz exceeds the trajectory resolution {1 / dt:.6g} Hz")
    if abs(ratio - round(ratio)) > 1e-6:
        raise ChannelError(f"rate {rate} Hz does not divide the trajectory rate {1 / dt:.6g} Hz")
    stride = int(round(ratio))
    t = traj.time
    k0 = 0 if start is None else int(round((start - t[0]) / dt))
    k1 = t.size if stop is None else int(round((stop - t[0]) / dt)) + 1
    if k0 < 0 or k1 > t.size or k1 - k0 < 2 * stride:
        raise ChannelError(f"requested span [{start}, {stop}] not covered by the trajectory")
    idx = np.arange(k0, k1, stride)
    V = traj.V[idx]
    S = None
    theta = np.unwrap(np.angle(V), axis=0)
    rows = []
    for c in chans:
        b = network.index(c.bus)
        q = c.quantity
        if q == "V":
            rows.append(np.abs(V[:, b]))
        elif q == "theta":
            rows.append(theta[:, b])
        elif q in ("P", "Q"):
            if S is None:
                S = V * np.conj(V @ network.Y_net.T)
            rows.append(S[:, b].real if q == "P" else S[:, b].imag)
        elif q == "f":
            d = np.diff(theta[:, b]) * rate / (2 * np.pi)
            rows.append(network.frequency + np.concatenate([d[:1], d]))
        else:
            rows.append(traj.x[idx, 1, network.generator_at(c.bus)])
    clean = np.vstack(rows)
    data = add_noise(clean, snr, seed)
    return MeasurementSet(rate=float(rate), channels=chans, data=data, t0=float(t[idx[0]]),
                          snr=snr, seed=seed, meta={"source": network.name})
