"""Presets, drive balancing and the sweep drivers behind the figure data.

Values are in 2 pi x MHz like everywhere else; coincidence windows are
in microseconds. Sweeps farm cells out to a process pool and assemble
the results in cell order, so the output does not depend on ``jobs``.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .emission import DEFAULT_POINTS, EmissionRecord, EmissionWarning, TimeGrid, default_grid, simulate_emission
from .interference import (DetectionScheme, WindowedResult, coincidence_map_frequency,
                           coincidence_map_polarization, window_aggregate)
from .model import (TWO_PI, BirefringenceSpec, CavityGeometry, DriveConfig, NodeConfig, derive_geometry)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    """A named node configuration with the cavity it was derived from.

    Attribute access falls through to the node config, so
    ``load_preset("ca40").kappa`` works.
    """

    name: str
    node: NodeConfig
    geometry: CavityGeometry | None = None
    quoted_fsr: float | None = None  # 2 pi x MHz, as listed with the preset
    notes: dict = field(default_factory=dict)

    def __getattr__(self, item):
        node = self.__dict__.get("node")
        if node is not None and hasattr(node, item):
            return getattr(node, item)
        raise AttributeError(item)

    @property
    def fsr(self) -> float | None:
        """Free spectral range derived from the geometry (2 pi x MHz)."""
        return derive_geometry(self.geometry).fsr if self.geometry else None

    def to_dict(self) -> dict:
        out = {"name": self.name, "node": self.node.to_dict(), "notes": dict(self.notes),
               "quoted_fsr": self.quoted_fsr}
        if self.geometry:
            g = derive_geometry(self.geometry)
            out["geometry"] = {"length_mm": self.geometry.length, "mirror_roc_mm": self.geometry.mirror_roc,
                               "finesse": self.geometry.finesse, "wavelength_nm": self.geometry.wavelength,
                               "fsr": g.fsr, "kappa": g.kappa, "waist_um": g.waist}
        return out


def _x_axis(kappa: float, factor: float) -> BirefringenceSpec:
    return BirefringenceSpec(delta=factor * kappa, axis=(1.0, 0.0, 0.0))


def _ca40() -> Preset:
    kappa = 6.0
    node = NodeConfig(g1=9.36, g2=8.89, kappa=kappa, gamma_ie=10.78 / 3, gamma_xe=7.92,
                      drive=DriveConfig(omega1=38.0, omega2=40.0, delta1=400.0, delta2=400.0),
                      birefringence=_x_axis(kappa, 0.5))
    notes = {
        "g1, g2, kappa, omega, delta, gamma": "parameter table, 40Ca+ row",
        "gamma_ie": "10.78 x 1/3 (branching into |i>)",
        "delta": "0.5 kappa, eigenmodes (|H> +- |V>)/sqrt(2)",
        "geometry": "fiber cavity l = R_c = 0.493 mm, finesse 5e4, 866 nm",
    }
    return Preset("ca40", node, CavityGeometry(0.493, 0.493, 5e4, 866.0), 304e3, notes)


def _ra225() -> Preset:
    kappa = 0.28
    node = NodeConfig(g1=1.01, g2=1.01, kappa=kappa, gamma_ie=1.69 / 3, gamma_xe=9.00,
                      drive=DriveConfig(omega1=40.0, omega2=40.0, delta1=400.0, delta2=400.0),
                      birefringence=_x_axis(kappa, 0.5))
    notes = {
        "g1, g2, kappa, omega, delta, gamma": "parameter table, 225Ra+ row",
        "gamma_ie": "1.69 x 1/3",
        "delta": "0.5 kappa, eigenmodes (|H> +- |V>)/sqrt(2)",
        "geometry": "confocal l = R_c = 10.8 mm, finesse 5e4, 468 nm",
        "fsr": "quoted 13.84e3 = half of the 27.68 GHz hyperfine splitting",
    }
    return Preset("ra225", node, CavityGeometry(10.8, 10.8, 5e4, 468.0), 13.84e3, notes)


def _generic() -> Preset:
    node = NodeConfig(g1=10.0, g2=10.0, kappa=5.0, gamma_ie=0.0, gamma_xe=0.0,
                      drive=DriveConfig(omega1=40.0, omega2=40.0, delta1=400.0, delta2=400.0),
                      birefringence=_x_axis(5.0, 0.0))
    notes = {"all": "reconstruction for the birefringence study; exact values are not published",
             "axis": "eigenmodes (|H> +- |V>)/sqrt(2)"}
    return Preset("generic", node, None, None, notes)


PRESETS: dict[str, Callable[[], Preset]] = {"ca40": _ca40, "ra225": _ra225, "generic": _generic}


def load_preset(name: str) -> Preset:
    try:
        return PRESETS[name.lower()]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# ---------------------------------------------------------------------------
# drive balancing
# ---------------------------------------------------------------------------

class OptimizationError(RuntimeError):
    pass


INV_PHI = (math.sqrt(5) - 1) / 2


def golden_section_search(f: Callable[[float], float], a: float, b: float, rtol: float = 1e-4,
                          max_iter: int = 200) -> tuple[float, float, int]:
    """Maximize a unimodal ``f`` on ``[a, b]``.

    Returns ``(x, f(x), iterations)``; stops once the bracket is shorter
    than ``rtol * |x|`` (or ``rtol`` near zero).
    """
    if not a < b:
        raise ValueError("need a < b")
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for it in range(1, max_iter + 1):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
        mid = 0.5 * (a + b)
        if b - a <= rtol * max(abs(mid), 1.0):
            x, fx = (c, fc) if fc >= fd else (d, fd)
            return x, fx, it
    raise OptimizationError(f"golden-section search did not converge in {max_iter} iterations")


def branch_overlap(rec: EmissionRecord) -> float:
    """``|sum_x int phi_rx conj(phi_bx)| / (0.5 sum (|phi_r|^2 + |phi_b|^2))``."""
    w = rec.grid.weights()
    ch = rec.channels
    cross = sum(np.sum(w * ch[x] * ch[2 + x].conj()) for x in (0, 1))
    norms = rec.wavepacket.norms()
    denom = 0.5 * float(norms.sum())
    return float(abs(cross) / denom) if denom > 0 else 0.0


@dataclass(frozen=True)
class BalanceResult:
    config: NodeConfig
    overlap: float
    norm_ratio: float        # red / blue emission probability
    iterations: int
    degenerate: bool         # objective flat: amplitude condition used instead

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "overlap": self.overlap, "norm_ratio": self.norm_ratio,
                "iterations": self.iterations, "degenerate": self.degenerate}


def balance_drives(cfg: NodeConfig, fix: str = "omega2", bounds: tuple[float, float] | None = None,
                   rtol: float = 1e-4, points: int = 2048, flat_tol: float = 1e-7,
                   ode_rtol: float = 1e-9) -> BalanceResult:
    """Tune the free Rabi frequency so the red and blue wavepackets overlap best.

    With ``delta1 == delta2`` the two drive tones address ``|i> - |e>``
    identically and only their sum matters, so the objective is flat in
    the ratio. That case is detected (spread below ``flat_tol`` over
    the bracket) and the free Rabi frequency is set by the amplitude
    condition ``omega1 g1 / delta1 = omega2 g2 / delta2`` instead.
    ``ode_rtol`` is handed to the propagator; loosening it mostly pays
    off when ``delta1 != delta2`` and the adaptive integrator is used.
    """
    if fix not in ("omega1", "omega2"):
        raise ValueError("fix must be 'omega1' or 'omega2'")
    free = "omega1" if fix == "omega2" else "omega2"
    d = cfg.drive
    held = getattr(d, fix)
    if held <= 0:
        raise ValueError(f"{fix} must be positive to balance against")
    g_free, g_fix = (cfg.g1, cfg.g2) if free == "omega1" else (cfg.g2, cfg.g1)
    det_free, det_fix = (d.delta1, d.delta2) if free == "omega1" else (d.delta2, d.delta1)
    guess = held * abs(g_fix / g_free) * abs(det_free / det_fix) if g_free and det_fix else held
    lo, hi = bounds or (0.5 * guess, 2.0 * guess)

    ends = [cfg.with_drive(**{free: x}) for x in (lo, hi)]
    t1 = max(default_grid(c).t1 for c in ends)
    grid = TimeGrid(0.0, t1, points)

    def objective(x: float) -> float:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmissionWarning)
            return branch_overlap(simulate_emission(cfg.with_drive(**{free: x}), grid, rtol=ode_rtol, atol=ode_rtol * 1e-3))

    probe = [objective(x) for x in np.linspace(lo, hi, 5)]
    if max(probe) - min(probe) <= flat_tol * max(max(probe), 1e-300):
        x, iterations, degenerate = guess, 0, True
    else:
        x, _, iterations = golden_section_search(objective, lo, hi, rtol=rtol)
        degenerate = False
    best = cfg.with_drive(**{free: float(x)})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmissionWarning)
        rec = simulate_emission(best, grid, rtol=ode_rtol, atol=ode_rtol * 1e-3)
    norms = rec.wavepacket.norms()
    blue = norms[2] + norms[3]
    ratio = float((norms[0] + norms[1]) / blue) if blue > 0 else math.inf
    return BalanceResult(best, branch_overlap(rec), ratio, iterations, degenerate)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def common_grid(configs: Sequence[NodeConfig], n: int = DEFAULT_POINTS) -> TimeGrid:
    """Default grid long enough for every config in the list."""
    return TimeGrid(0.0, max(default_grid(c, n).t1 for c in configs), n)


def default_window(kappa: float) -> float:
    """``T = 5/kappa`` in microseconds for kappa in 2 pi x MHz."""
    return 5.0 / (TWO_PI * kappa)


@dataclass(frozen=True)
class SweepSpec:
    """Birefringence axes in units of kappa plus evaluation settings."""

    delta_a: tuple[float, ...]
    delta_b: tuple[float, ...]
    window: float | None = None           # us; None means 5/kappa
    encoding: str = "frequency"
    scheme: int = 3
    reexcitation: bool = False
    points: int = DEFAULT_POINTS
    max_points: int = 512

    def __post_init__(self):
        for name in ("delta_a", "delta_b"):
            axis = tuple(float(v) for v in getattr(self, name))
            if not axis:
                raise ValueError(f"{name} axis is empty")
            if not all(math.isfinite(v) and v >= 0 for v in axis):
                raise ValueError(f"{name} values must be finite and >= 0")
            object.__setattr__(self, name, axis)
        if self.encoding not in ("frequency", "polarization"):
            raise ValueError(f"unknown encoding {self.encoding!r}")
        DetectionScheme(self.scheme)
        if self.window is not None and not self.window >= 0:
            raise ValueError("window must be >= 0")

    @classmethod
    def square(cls, resolution: int = 21, span: float = 2.0, **kw) -> "SweepSpec":
        if resolution < 1:
            raise ValueError("resolution must be >= 1")
        axis = tuple(np.linspace(0.0, span, resolution).tolist()) if resolution > 1 else (0.0,)
        return cls(axis, axis, **kw)

    def to_dict(self) -> dict:
        return {"delta_a_kappa": list(self.delta_a), "delta_b_kappa": list(self.delta_b),
                "window_us": self.window, "encoding": self.encoding, "scheme": int(self.scheme),
                "reexcitation": self.reexcitation, "points": self.points, "max_points": self.max_points}


@dataclass(frozen=True)
class HeatmapCell:
    delta_a: float   # units of kappa
    delta_b: float
    result: WindowedResult | None
    asymptotic_fidelity: float
    error: str = ""


@dataclass(frozen=True)
class Heatmap:
    spec: SweepSpec
    node: NodeConfig
    cells: list[HeatmapCell]

    def fidelity_grid(self) -> np.ndarray:
        out = np.full((len(self.spec.delta_a), len(self.spec.delta_b)), np.nan)
        for k, cell in enumerate(self.cells):
            if cell.result is not None:
                out[divmod(k, len(self.spec.delta_b))] = cell.result.fidelity
        return out

    def cell(self, delta_a: float, delta_b: float) -> HeatmapCell:
        for c in self.cells:
            if math.isclose(c.delta_a, delta_a, abs_tol=1e-12) and math.isclose(c.delta_b, delta_b, abs_tol=1e-12):
                return c
        raise KeyError((delta_a, delta_b))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["delta_a_kappa", "delta_b_kappa", "fidelity", "efficiency", "visibility",
                        "fidelity_asymptotic", "error"])
            for c in self.cells:
                r = c.result
                vals = [r.fidelity, r.efficiency, r.visibility, c.asymptotic_fidelity] if r else [math.nan] * 4
                w.writerow([f"{c.delta_a:.17g}", f"{c.delta_b:.17g}", *(f"{v:.17g}" for v in vals), c.error])


def _node_for(template: NodeConfig, encoding: str, delta_kappa: float) -> NodeConfig:
    return replace(template, encoding=encoding).with_delta(delta_kappa * template.kappa)


def _interfere(rec_a: EmissionRecord, rec_b: EmissionRecord, encoding: str, scheme: int,
               reexcitation: bool, max_points: int | None):
    if encoding == "polarization":
        return coincidence_map_polarization(rec_a, rec_b, reexcitation, max_points)
    return coincidence_map_frequency(rec_a, rec_b, scheme, reexcitation, max_points)


def _heatmap_cell(args) -> tuple[WindowedResult | None, float, str]:
    rec_a, rec_b, spec, window = args
    try:
        cmap = _interfere(rec_a, rec_b, spec.encoding, spec.scheme, spec.reexcitation, spec.max_points)
        finite, asym = window_aggregate(cmap, [window, math.inf])
        return finite, asym.fidelity, ""
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        return None, math.nan, f"{type(exc).__name__}: {exc}"


def _simulate_quiet(cfg: NodeConfig, grid: TimeGrid) -> EmissionRecord:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmissionWarning)
        return simulate_emission(cfg, grid)


def _pool_map(fn, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def run_birefringence_heatmap(spec: SweepSpec, node: NodeConfig | None = None, jobs: int = 1) -> Heatmap:
    """Windowed fidelity over the (delta_A, delta_B) grid of ``spec``.

    Every distinct birefringence is simulated once on a grid shared by
    the whole sweep; cells that fail are reported with their error and
    the sweep carries on.
    """
    template = node or load_preset("generic").node
    values = sorted(set(spec.delta_a) | set(spec.delta_b))
    configs = {v: _node_for(template, spec.encoding, v) for v in values}
    grid = common_grid(list(configs.values()), spec.points)
    records = {v: _simulate_quiet(c, grid) for v, c in configs.items()}
    window = spec.window if spec.window is not None else default_window(template.kappa)
    pairs = [(a, b) for a in spec.delta_a for b in spec.delta_b]
    outputs = _pool_map(_heatmap_cell, [(records[a], records[b], spec, window) for a, b in pairs], jobs)
    cells = [HeatmapCell(a, b, res, asym, err) for (a, b), (res, asym, err) in zip(pairs, outputs)]
    return Heatmap(spec, template, cells)


@dataclass(frozen=True)
class WindowCurves:
    results: list[WindowedResult]
    asymptotic: WindowedResult
    node_a: NodeConfig
    node_b: NodeConfig
    records: tuple[EmissionRecord, EmissionRecord] | None = None

    def to_dict(self) -> dict:
        return {"curves": [r.to_dict() for r in self.results], "asymptotic": self.asymptotic.to_dict(),
                "node_a": self.node_a.to_dict(), "node_b": self.node_b.to_dict()}


def window_list(kappa: float, count: int = 41, span: float = 10.0) -> list[float]:
    """Windows from 0 to ``span / kappa`` (us) in ``count`` steps."""
    return np.linspace(0.0, span / (TWO_PI * kappa), count).tolist()


def run_window_curves(preset: Preset | NodeConfig, windows: Sequence[float] | None = None,
                      encoding: str = "frequency", scheme: int = 3, reexcitation: bool = True,
                      delta_a: float | None = None, delta_b: float | None = None,
                      points: int = DEFAULT_POINTS, max_points: int | None = 1024) -> WindowCurves:
    """Efficiency, visibility and fidelity versus coincidence window.

    ``delta_a`` / ``delta_b`` (2 pi x MHz) override the birefringence of
    the two otherwise identical nodes.
    """
    node = preset.node if isinstance(preset, Preset) else preset
    node = replace(node, encoding=encoding)
    node_a = node.with_delta(delta_a) if delta_a is not None else node
    node_b = node.with_delta(delta_b) if delta_b is not None else node
    grid = common_grid([node_a, node_b], points)
    rec_a = _simulate_quiet(node_a, grid)
    rec_b = rec_a if node_b == node_a else _simulate_quiet(node_b, grid)
    cmap = _interfere(rec_a, rec_b, encoding, scheme, reexcitation, max_points)
    windows = list(windows) if windows is not None else window_list(node.kappa)
    results = window_aggregate(cmap, windows)
    asym = window_aggregate(cmap, [math.inf])[0]
    return WindowCurves(results, asym, node_a, node_b, (rec_a, rec_b))


__all__ = [
    "Preset", "PRESETS", "load_preset", "golden_section_search", "branch_overlap", "BalanceResult",
    "balance_drives", "OptimizationError", "SweepSpec", "Heatmap", "HeatmapCell",
    "run_birefringence_heatmap", "WindowCurves", "run_window_curves", "common_grid", "default_window",
    "window_list",
]
