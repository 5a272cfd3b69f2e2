"""Command line entry point: ``python3 -m cartsim <command>``.

Each command writes its data files plus ``run.json`` (resolved config,
version, results) and ``config.ini`` (the resolved config, readable by
``--config``) into ``--out``. Wall-clock timings go to ``timings.json``
so that repeated runs give byte-identical data and manifests.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_run_config, run_config_from_preset
from .core import IntegrationError
from .emission import EmissionWarning, TimeGrid, default_grid, simulate_emission
from .experiments import (OptimizationError, SweepSpec, common_grid, default_window, load_preset,
                          run_birefringence_heatmap, window_list)
from .interference import (DetectionScheme, coincidence_map_frequency, coincidence_map_polarization,
                           window_aggregate)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _clean(obj):
    """Replace non-finite floats so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else ("inf" if obj > 0 else ("-inf" if obj < 0 else "nan"))
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# config resolution
# ---------------------------------------------------------------------------

def _resolve(args) -> RunConfig:
    if args.config and args.preset:
        raise ConfigError("give either --preset or --config, not both")
    if args.config:
        cfg = load_run_config(args.config)
    else:
        cfg = run_config_from_preset(args.preset or "generic")
    encoding = getattr(args, "encoding", None) or cfg.encoding
    cfg.encoding = encoding
    cfg.node_a = replace(cfg.node_a, encoding=encoding)
    cfg.node_b = replace(cfg.node_b, encoding=encoding)
    if getattr(args, "scheme", None):
        cfg.scheme = args.scheme
    if getattr(args, "reexcitation", None):
        cfg.reexcitation = True
    if getattr(args, "points", None):
        cfg.points = args.points

    def convert(value, node):
        if value is None:
            return None
        if value < 0 or not math.isfinite(value):
            raise ConfigError(f"birefringence must be finite and >= 0, got {value}")
        return value * node.kappa if args.delta_units == "kappa" else value

    d_all = convert(getattr(args, "delta", None), cfg.node_a)
    if d_all is not None:
        cfg.node_a = cfg.node_a.with_delta(d_all)
        cfg.node_b = cfg.node_b.with_delta(convert(args.delta, cfg.node_b))
    d_a = convert(getattr(args, "delta_a", None), cfg.node_a)
    d_b = convert(getattr(args, "delta_b", None), cfg.node_b)
    if d_a is not None:
        cfg.node_a = cfg.node_a.with_delta(d_a)
    if d_b is not None:
        cfg.node_b = cfg.node_b.with_delta(d_b)
    if getattr(args, "omega1", None) is not None or getattr(args, "omega2", None) is not None:
        kw = {k: getattr(args, k) for k in ("omega1", "omega2") if getattr(args, k) is not None}
        cfg.node_a = cfg.node_a.with_drive(**kw)
        cfg.node_b = cfg.node_b.with_drive(**kw)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(command: str, cfg: RunConfig | None, results: dict, extra: dict | None = None) -> dict:
    body = {"command": command, "version": __version__, "results": _clean(results)}
    if cfg is not None:
        body["config"] = _clean(cfg.to_dict())
    if extra:
        body.update(_clean(extra))
    return body


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_emit(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(args)
    node = cfg.node_a
    t0 = time.perf_counter()
    grid = default_grid(node, cfg.points or 4096)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", EmissionWarning)
        rec = simulate_emission(node, grid, rtol=args.rtol, atol=args.rtol * 1e-3)
    elapsed = time.perf_counter() - t0
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    rec.wavepacket.to_csv(out / "wavepacket.csv")
    book = rec.bookkeeping()
    norms = book["channel_norms"]
    principal = norms["rH"] + norms["bH"] if node.encoding == "frequency" else norms["rH"] + norms["bV"]
    rotated = norms["rV"] + norms["bV"] if node.encoding == "frequency" else norms["rV"] + norms["bH"]
    book["rotated_to_principal"] = rotated / principal if principal > 0 else 0.0
    _dump(out / "bookkeeping.json", _clean(book))
    (out / "config.ini").write_text(RunConfig(node, node, encoding=node.encoding, points=cfg.points).to_ini())
    _dump(out / "run.json", _manifest("emit", cfg, book, {"grid": grid.to_dict(), "node": node.to_dict()}))
    _dump(out / "timings.json", {"simulate_s": elapsed})
    print(json.dumps({"wavepacket_norm": book["wavepacket_norm"],
                      "rotated_to_principal": book["rotated_to_principal"]}))
    return EXIT_OK


def cmd_interfere(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(args)
    timings = {}
    t0 = time.perf_counter()
    grid = common_grid([cfg.node_a, cfg.node_b], cfg.points or 4096)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmissionWarning)
        rec_a = simulate_emission(cfg.node_a, grid, rtol=args.rtol, atol=args.rtol * 1e-3)
        rec_b = rec_a if cfg.node_b == cfg.node_a else simulate_emission(cfg.node_b, grid, rtol=args.rtol,
                                                                         atol=args.rtol * 1e-3)
    timings["simulate_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    if cfg.encoding == "polarization":
        cmap = coincidence_map_polarization(rec_a, rec_b, cfg.reexcitation, args.map_points)
    else:
        cmap = coincidence_map_frequency(rec_a, rec_b, DetectionScheme(cfg.scheme), cfg.reexcitation,
                                         args.map_points)
    windows = args.windows or cfg.windows or window_list(cfg.node_a.kappa)
    results = window_aggregate(cmap, windows)
    asym = window_aggregate(cmap, [math.inf])[0]
    timings["interfere_s"] = time.perf_counter() - t0
    cmap.to_csv(out / "coincidence.csv", stride=max(1, args.csv_stride))
    summary = {"asymptotic_fidelity": asym.fidelity, "asymptotic_visibility": asym.visibility,
               "herald_probability": cmap.herald_probability,
               "windows": [r.to_dict() for r in results]}
    _dump(out / "windows.json", _clean(summary))
    (out / "config.ini").write_text(cfg.to_ini())
    _dump(out / "run.json", _manifest("interfere", cfg, summary, {"grid": grid.to_dict(),
                                                                  "map_points": args.map_points}))
    _dump(out / "timings.json", timings)
    print(json.dumps(_clean({"asymptotic_fidelity": asym.fidelity, "herald_probability": cmap.herald_probability})))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(args)
    kappa = cfg.node_a.kappa
    window = args.window if args.window is not None else default_window(kappa)
    spec = SweepSpec.square(args.resolution, args.span, window=window, encoding=cfg.encoding,
                            scheme=cfg.scheme, reexcitation=cfg.reexcitation, points=cfg.points or 4096,
                            max_points=args.map_points)
    t0 = time.perf_counter()
    heat = run_birefringence_heatmap(spec, cfg.node_a, jobs=args.jobs)
    elapsed = time.perf_counter() - t0
    heat.to_csv(out / "heatmap.csv")
    errors = [{"delta_a_kappa": c.delta_a, "delta_b_kappa": c.delta_b, "error": c.error}
              for c in heat.cells if c.error]
    for e in errors:
        print(f"cell ({e['delta_a_kappa']}, {e['delta_b_kappa']}) failed: {e['error']}", file=sys.stderr)
    (out / "config.ini").write_text(cfg.to_ini())
    _dump(out / "run.json", _manifest("sweep", cfg, {"cells": len(heat.cells), "errors": errors},
                                      {"sweep": spec.to_dict(), "node": cfg.node_a.to_dict()}))
    _dump(out / "timings.json", {"sweep_s": elapsed, "jobs": args.jobs})
    print(json.dumps({"cells": len(heat.cells), "failed": len(errors)}))
    return EXIT_OK


def cmd_preset(args) -> int:
    try:
        preset = load_preset(args.name)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    print(json.dumps(_clean(preset.to_dict()), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_version(args) -> int:
    print(__version__)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, deltas: str) -> None:
    p.add_argument("--preset", help="ca40, ra225 or generic (default generic)")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--encoding", choices=("frequency", "polarization"))
    p.add_argument("--delta-units", choices=("kappa", "mhz"), default="mhz",
                   help="units of --delta*: multiples of kappa or 2pi x MHz")
    if deltas in ("single", "both"):
        p.add_argument("--delta", type=float, help="birefringence of both nodes")
    if deltas == "both":
        p.add_argument("--delta-a", type=float, help="birefringence of node A")
        p.add_argument("--delta-b", type=float, help="birefringence of node B")
    p.add_argument("--omega1", type=float, help="override Rabi frequency 1 (2pi x MHz)")
    p.add_argument("--omega2", type=float, help="override Rabi frequency 2 (2pi x MHz)")
    p.add_argument("--points", type=int, help="emission grid points (default 4096)")
    p.add_argument("--rtol", type=float, default=1e-9, help="propagator relative tolerance")
    p.add_argument("--out", default="cartsim-out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cartsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("emit", help="simulate one node and write its wavepacket")
    _add_common(p, "single")
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("interfere", help="two-node interference and windowed fidelity")
    _add_common(p, "both")
    p.add_argument("--scheme", type=int, choices=(1, 2, 3))
    p.add_argument("--reexcitation", action="store_true", help="include re-excitation mixing")
    p.add_argument("--windows", type=float, nargs="+", help="coincidence windows in us")
    p.add_argument("--map-points", type=int, default=1024, help="resample records to this many points")
    p.add_argument("--csv-stride", type=int, default=4, help="write every n-th map row/column")
    p.set_defaults(func=cmd_interfere)

    p = sub.add_parser("sweep", help="fidelity heatmap over node birefringences")
    _add_common(p, "none")
    p.add_argument("--scheme", type=int, choices=(1, 2, 3))
    p.add_argument("--reexcitation", action="store_true")
    p.add_argument("--resolution", type=int, default=21)
    p.add_argument("--span", type=float, default=2.0, help="axis range [0, span] in units of kappa")
    p.add_argument("--window", type=float, help="coincidence window in us (default 5/kappa)")
    p.add_argument("--map-points", type=int, default=512)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("preset", help="print a preset as JSON")
    p.add_argument("name")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("version", help="print the package version")
    p.set_defaults(func=cmd_version)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, OptimizationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
