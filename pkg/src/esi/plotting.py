"""PNG figures for CLI runs (Agg backend, no display needed)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_MARKERS = {"esi": "o", "matrix-pencil": "s", "prony": "^", "linearized": "x", "reference": "x"}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_measurements(m, path, max_channels: int = 12) -> Path:
    """Channel traces, one axis per quantity."""
    quantities = []
    for c in m.channels:
        if c.quantity not in quantities:
            quantities.append(c.quantity)
    fig, axes = plt.subplots(len(quantities), 1, figsize=(8, 2.2 * len(quantities)), sharex=True,
                             squeeze=False)
    t = m.time
    shown = 0
    for ax, q in zip(axes[:, 0], quantities):
        for c, row in zip(m.channels, m.data):
            if c.quantity == q and shown < max_channels:
                ax.plot(t, row, lw=0.8, label=c.label)
                shown += 1
        ax.set_ylabel(q)
        ax.legend(fontsize=7, ncol=4, loc="upper right")
    axes[-1, 0].set_xlabel("time (s)")
    return _save(fig, path)


def plot_eigenvalues(mode_sets, path, fmax: float | None = 2.5) -> Path:
    """Continuous-time eigenvalues of several mode sets in the complex plane."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for ms in mode_sets:
        idx = ms.upper()
        lam = ms.lam[idx]
        if fmax is not None:
            lam = lam[np.abs(lam.imag) / (2 * np.pi) <= fmax]
        ax.scatter(lam.real, lam.imag / (2 * np.pi), marker=_MARKERS.get(ms.method, "."),
                   label=ms.method, s=36, facecolors="none" if ms.method == "esi" else None)
    ax.axvline(0.0, color="0.6", lw=0.8)
    ax.set_xlabel("real part (1/s)")
    ax.set_ylabel("frequency (Hz)")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_participation(table, path, max_modes: int = 8) -> Path:
    """Participation of each channel in the strongest oscillatory modes."""
    amp = table.modes.amplitude
    cols = np.arange(table.values.shape[1])
    osc = cols[table.frequency[cols] > 0]
    if amp is not None:
        osc = osc[np.argsort(-amp[table.mode_index[osc]])]
    osc = np.sort(osc[:max_modes])
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * max(len(osc), 1), 0.5 + 0.35 * len(table.labels)))
    im = ax.imshow(table.values[:, osc], vmin=0.0, vmax=1.0, cmap="viridis", aspect="auto")
    ax.set_yticks(range(len(table.labels)), table.labels, fontsize=7)
    ax.set_xticks(range(len(osc)), [f"{table.frequency[c]:.2f} Hz" for c in osc], rotation=45, fontsize=7)
    fig.colorbar(im, ax=ax, label="participation")
    return _save(fig, path)


def plot_inertia(series, path, truth=None) -> Path:
    """Per-window and smoothed system inertia."""
    t = np.array([e.time for e in series])
    raw = np.array([e.M_sys for e in series])
    sm = np.array([e.smoothed for e in series])
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(t, raw, "o", ms=4, label="window estimate")
    ax.plot(t, sm, "-", lw=1.5, label="smoothed")
    if truth is not None:
        ax.step(t, truth, where="post", color="k", lw=1, ls="--", label="truth")
    ax.set_xlabel("window end (s)")
    ax.set_ylabel("M_sys (s)")
    ax.legend(fontsize=8)
    return _save(fig, path)
