"""Command-line entry point: ``esi simulate | identify | analyze | compare``.

Every run writes ``manifest.json`` into its output directory. Exit codes are
0 on success, 2 for configuration or input errors and 3 for numerical
failures; errors are reported on stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (InertiaRejected, InertiaSettings, export_inertia, export_modes,
                       participation_factors, track_inertia)
from .analysis import _write_rows as write_rows
from .baselines import (BaselineError, compare_modes, matrix_pencil, modes_from_eigenvalues,
                        prony_multichannel, scatter_rows)
from .bundle import BundleError, load_model, read_bundle, save_model, write_bundle
from .core import ESIConfig, ESIError, extract_modes, identify
from .dynamics import (AlgebraicError, ChannelError, EquilibriumError, NetworkConfigError,
                       ScenarioError, SimulationError, available_cases, build_network, linearize,
                       load_case, sample_pmu, scenario_from_config, simulate, solve_equilibrium)
from .lifting import LiftingError
from .measurements import MeasurementSet

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_NUMERIC = (ESIError, SimulationError, EquilibriumError, AlgebraicError, BaselineError,
            InertiaRejected, LiftingError, np.linalg.LinAlgError, FloatingPointError)
_CONFIG = (NetworkConfigError, ScenarioError, ChannelError, BundleError, FileNotFoundError,
           IsADirectoryError, json.JSONDecodeError, KeyError, ValueError, TypeError)


class ConfigError(ValueError):
    pass


@dataclass
class RunManifest:
    subcommand: str
    configs: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    seed: int | None = None
    snr: float | None = None
    clean: bool | None = None
    version: str = __version__
    duration_s: float = 0.0
    argv: list = field(default_factory=list)

    def write(self, out: Path) -> Path:
        path = out / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")
        return path


# -- helpers ------------------------------------------------------------------

def _load_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}") from None


def _network_config(ref: str) -> tuple[dict, str]:
    """A JSON path or the name of a bundled case."""
    p = Path(ref)
    if p.is_file():
        return _load_json(p), str(p)
    if ref in available_cases():
        return load_case(ref), f"case:{ref}"
    raise ConfigError(f"network {ref!r} is neither a file nor a bundled case {available_cases()}")


def _snr(text):
    if text is None or str(text).lower() == "none":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"SNR must be a number or 'none', got {text!r}") from None


def _band(text):
    lo, _, hi = str(text).partition(",")
    try:
        return float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"band must be 'fmin,fmax', got {text!r}") from None


def _rank(text):
    return int(text) if str(text).isdigit() else text


def _esi_config(path) -> ESIConfig:
    d = _load_json(path)
    unknown = sorted(set(d) - set(ESIConfig.__dataclass_fields__))
    if unknown:
        raise ConfigError(f"{path}: unknown ESI settings {unknown}")
    return ESIConfig.from_dict(d)


def _measurements(path, channels=None, start=None, stop=None) -> MeasurementSet:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"measurement file not found: {path}")
    m = MeasurementSet.from_csv(path)
    if channels:
        m = m.select([c.strip() for c in channels.split(",") if c.strip()])
    if start is not None or stop is not None:
        t_end = m.t0 + m.n_samples / m.rate
        m = m.window(m.t0 if start is None else start, t_end if stop is None else stop)
    return m


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands --------------------------------------------------------------

def cmd_simulate(args, man: RunManifest) -> Path:
    cfg, net_ref = _network_config(args.network)
    scen = _load_json(args.scenario)
    out = _outdir(args.out)
    man.configs = {"network": net_ref, "scenario": str(args.scenario)}
    man.seed, man.snr, man.clean = args.seed, args.snr, args.snr is None

    net = build_network(cfg)
    if isinstance(scen, dict):
        scen.setdefault("record_step", 1.0 / args.rate)
    scenario = scenario_from_config(net, scen)
    eq = solve_equilibrium(net)
    lin = linearize(net, eq)
    traj = simulate(net, scenario, eq)
    m = sample_pmu(traj, net, rate=args.rate, snr=args.snr, channels=args.channels,
                   seed=args.seed, start=args.start)
    csv_path = m.to_csv(out / "measurements.csv")

    M = np.array([g.params.M for g in net.generators])
    arrays = {
        "time": traj.time, "states": traj.states, "V": traj.V, "online": traj.online,
        "M_sys": traj.online.astype(float) @ M,
        "eigenvalues": lin.eigenvalues, "participation": lin.participation,
        "generator_participation": lin.generator_participation(),
        "electromechanical": lin.electromechanical(),
    }
    meta = {"network": cfg, "scenario": scenario.to_dict(), "state_names": lin.state_names,
            "generators": lin.generator_names, "frequency": net.frequency}
    truth = write_bundle(out / "truth", arrays, meta, kind="simulation-truth")
    man.outputs = [str(csv_path), str(csv_path.with_suffix(".json")), str(truth), str(truth.with_suffix(".bin"))]
    if args.report:
        from .plotting import plot_measurements
        man.outputs.append(str(plot_measurements(m, out / "measurements.png")))
    return out


def cmd_identify(args, man: RunManifest) -> Path:
    cfg = _esi_config(args.config)
    m = _measurements(args.measurements, args.channels, args.start, args.stop)
    out = _outdir(args.out)
    man.configs = {"esi": str(args.config)}
    man.inputs = {"measurements": str(args.measurements)}
    man.seed, man.snr, man.clean = m.seed, m.snr, m.snr is None

    model = identify(m, cfg)
    modes = extract_modes(model)
    bundle = save_model(model, out / "model")
    modes_csv = export_modes(modes, out / "modes.csv")
    man.outputs = [str(bundle), str(bundle.with_suffix(".bin")), str(modes_csv)]
    if args.report:
        from .plotting import plot_eigenvalues
        man.outputs.append(str(plot_eigenvalues([modes], out / "modes.png")))
    return out


def cmd_analyze(args, man: RunManifest) -> Path:
    if not (args.participation or args.inertia):
        raise ConfigError("choose --participation and/or --inertia")
    model = load_model(args.model)
    out = _outdir(args.out)
    man.inputs = {"model": str(args.model)}
    if args.participation:
        table = participation_factors(model)
        man.outputs += [str(table.to_csv(out / "participation.csv")),
                        str(table.to_json(out / "participation.json"))]
        if args.report:
            from .plotting import plot_participation
            man.outputs.append(str(plot_participation(table, out / "participation.png")))
    if args.inertia:
        if args.measurements is None:
            raise ConfigError("--inertia needs --measurements (paired P and omega channels)")
        m = _measurements(args.measurements)
        man.inputs["measurements"] = str(args.measurements)
        man.seed, man.snr, man.clean = m.seed, m.snr, m.snr is None
        esi = _esi_config(args.esi_config) if args.esi_config else ESIConfig.from_dict(model.config)
        if args.esi_config:
            man.configs["esi"] = str(args.esi_config)
        settings = InertiaSettings(band_hz=args.band_hz, frequency=args.frequency, esi=esi)
        series = track_inertia(m, window=args.window, stride=args.stride, settings=settings)
        man.outputs += [str(p) for p in export_inertia(series, out / "inertia")]
        if args.report:
            from .plotting import plot_inertia
            man.outputs.append(str(plot_inertia(series, out / "inertia.png")))
    return out


def cmd_compare(args, man: RunManifest) -> Path:
    methods = [s.strip() for s in args.methods.split(",") if s.strip()]
    bad = sorted(set(methods) - {"esi", "prony", "pencil"})
    if bad or not methods:
        raise ConfigError(f"unknown methods {bad}; choose from esi, prony, pencil")
    m = _measurements(args.measurements, args.channels, args.start, args.stop)
    arrays, meta, kind = read_bundle(args.truth)
    if kind != "simulation-truth":
        raise ConfigError(f"{args.truth}: bundle holds {kind!r}, not simulation truth")
    out = _outdir(args.out)
    man.inputs = {"measurements": str(args.measurements), "truth": str(args.truth)}
    man.seed, man.snr, man.clean = m.seed, m.snr, m.snr is None

    lam = arrays["eigenvalues"][arrays["electromechanical"]]
    reference = modes_from_eigenvalues(np.concatenate([lam, lam.conj()]), m.dt, "linearized")
    estimates = []
    for name in methods:
        if name == "esi":
            cfg = _esi_config(args.esi_config) if args.esi_config else ESIConfig()
            if args.esi_config:
                man.configs["esi"] = str(args.esi_config)
            estimates.append(extract_modes(identify(m, cfg)))
        elif name == "pencil":
            estimates.append(matrix_pencil(m, rank_rule=args.pencil_rank, center=args.center))
        else:
            estimates.append(prony_multichannel(m, args.prony_order, center=args.center))
    reports = compare_modes(estimates, reference, freq_tol=args.freq_tol, band=args.band)
    rep_path = out / "compare.json"
    rep_path.write_text(json.dumps({"band": args.band, "freq_tol_pct": args.freq_tol,
                                    "reports": [r.to_dict() for r in reports]}, indent=2) + "\n")
    scatter = write_rows(out / "eigenvalues.csv", scatter_rows([reference] + estimates))
    man.outputs = [str(rep_path), str(scatter)]
    if args.report:
        from .plotting import plot_eigenvalues
        fmax = args.band[1] if args.band else None
        man.outputs.append(str(plot_eigenvalues([reference] + estimates, out / "eigenvalues.png", fmax)))
    return out


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="esi", description="Lifted output-only subspace identification")
    parser.add_argument("--version", action="version", version=f"esi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a network scenario and sample PMU channels")
    p.add_argument("network", help="network JSON file or bundled case name")
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--rate", type=float, default=100.0, help="PMU sample rate (Hz)")
    p.add_argument("--snr", type=_snr, default=None, help="noise SNR in dB, or 'none' for clean data")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--channels", default="V@gen,f@gen", help="channel selectors, comma separated")
    p.add_argument("--start", type=float, default=None, help="first recorded time (s)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--report", action="store_true", help="also render PNG figures")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="fit a lifted model to measurements")
    p.add_argument("measurements", help="measurement CSV")
    p.add_argument("config", help="ESI settings JSON")
    p.add_argument("--channels", default=None, help="subset of channel labels, comma separated")
    p.add_argument("--start", type=float, default=None)
    p.add_argument("--stop", type=float, default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--report", action="store_true")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("analyze", help="participation factors or inertia from a model bundle")
    p.add_argument("model", help="model bundle (.json)")
    p.add_argument("--participation", action="store_true")
    p.add_argument("--inertia", action="store_true")
    p.add_argument("--measurements", default=None, help="CSV with P and omega channels (for --inertia)")
    p.add_argument("--esi-config", default=None, help="per-window ESI settings (default: the model's)")
    p.add_argument("--window", type=float, default=4.0, help="inertia window length (s)")
    p.add_argument("--stride", type=float, default=None, help="window stride (s), default the window")
    p.add_argument("--band-hz", type=float, default=2.5, help="fastest mode kept for inertia (Hz)")
    p.add_argument("--frequency", type=float, default=60.0, help="nominal frequency (Hz)")
    p.add_argument("--out", default="out")
    p.add_argument("--report", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="compare modal estimators with linearized truth")
    p.add_argument("measurements")
    p.add_argument("truth", help="truth bundle written by 'simulate'")
    p.add_argument("--methods", default="esi,prony,pencil")
    p.add_argument("--esi-config", default=None)
    p.add_argument("--channels", default=None)
    p.add_argument("--start", type=float, default=None)
    p.add_argument("--stop", type=float, default=None)
    p.add_argument("--prony-order", type=int, default=10)
    p.add_argument("--pencil-rank", type=_rank, default="gap", help="'threshold', 'gap' or an integer")
    p.add_argument("--center", action="store_true", help="remove channel means before the baselines")
    p.add_argument("--band", type=_band, default=None, help="frequency band 'fmin,fmax' (Hz)")
    p.add_argument("--freq-tol", type=float, default=5.0, help="match tolerance (%%)")
    p.add_argument("--out", default="out")
    p.add_argument("--report", action="store_true")
    p.set_defaults(func=cmd_compare)
    return parser


def _fail(code: int, command: str, exc: BaseException) -> int:
    err = {"error": type(exc).__name__, "exit_code": code, "subcommand": command, "message": str(exc)}
    if isinstance(exc, NetworkConfigError):
        err["pointer"] = exc.pointer
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    man = RunManifest(subcommand=args.command, argv=argv)
    t0 = time.perf_counter()
    try:
        out = args.func(args, man)
    except _NUMERIC as exc:
        return _fail(EXIT_NUMERIC, args.command, exc)
    except _CONFIG as exc:
        return _fail(EXIT_CONFIG, args.command, exc)
    man.duration_s = round(time.perf_counter() - t0, 6)
    man.write(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
