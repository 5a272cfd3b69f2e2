"""Two-photon interference, heralded atom-atom states and coincidence windows.

Every heralded state is assembled from per-node correlators
``C_X[c, c'](t, t') = int P_X(s) phi_Xc(t - s) conj(phi_Xc'(t' - s)) ds``.
A detection outcome fixes two click times ``(t1, t2)`` and, for each
atomic basis state ``uu, ud, du, dd``, a list of amplitude terms
``coef * phi_A,ch(t_.) * phi_B,ch'(t_.)``. Density-matrix elements are
sums of products ``C_A * C_B``, so the re-excitation mixture enters
exactly through the correlators and the pure case is the special case
``P = delta``.

Amplitudes omit the beam-splitter factor ``1/2`` so that ``p`` matches
the coincidence density of the textbook two-mode formula
``sum |phi_A phi_B|^2 + |phi_A phi_B|^2``; the factor is restored in
``CoincidenceMap.herald_probability``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .emission import EmissionRecord, TimeGrid, correlator_matrix

# basis order of the heralded two-atom state (node A first)
UU, UD, DU, DD = range(4)
ATOM_LABELS = ("uu", "ud", "du", "dd")
RH, RV, BH, BV = range(4)

DEFAULT_MAP_POINTS = 1024
MASK_LEVEL = 1e-15


class DetectionScheme(IntEnum):
    """Measurement stage after the beam splitter.

    DIRECT: one detector per port, frequency not resolved; only the
    one-click-per-port patterns herald. FILTER: frequencies resolved
    and rotated (V) photons rejected by a polarizer. DICHROIC:
    frequencies resolved, polarization ignored.
    """

    DIRECT = 1
    FILTER = 2
    DICHROIC = 3


def beam_splitter_transform(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map input-port amplitudes ``a, b`` to output ports ``c, d``.

    With ``a -> (c - d)/sqrt(2)`` and ``b -> (c + d)/sqrt(2)`` a
    single-photon amplitude vector transforms as
    ``c = (a + b)/sqrt(2)``, ``d = (b - a)/sqrt(2)``, per mode label.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return (a + b) / math.sqrt(2), (b - a) / math.sqrt(2)


def beam_splitter_matrix() -> np.ndarray:
    """Single-mode matrix taking ``(a, b)`` amplitudes to ``(c, d)``."""
    return np.array([[1.0, 1.0], [-1.0, 1.0]]) / math.sqrt(2)


# ---------------------------------------------------------------------------
# heralded states as amplitude terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Term:
    """``coef * phi_A[ch_a](t_axis_a) * phi_B[ch_b](t_axis_b)`` in one atomic amplitude."""

    coef: complex
    ch_a: int
    axis_a: int
    ch_b: int
    axis_b: int


# one incoherent outcome = tuple of term lists, one per atomic basis state
Outcome = tuple[list[Term], list[Term], list[Term], list[Term]]


def frequency_outcomes(scheme: DetectionScheme) -> list[Outcome]:
    """Outcomes of the red click (axis 0) / blue click (axis 1) pattern.

    For DICHROIC the four (x, y) polarization labels of the red and blue
    photon are summed incoherently; FILTER keeps ``x = y = H`` only.
    DIRECT uses axes (t_c, t_d) and sums the four colour assignments.
    """
    scheme = DetectionScheme(scheme)
    if scheme == DetectionScheme.DIRECT:
        return _direct_outcomes()
    pols = (0,) if scheme == DetectionScheme.FILTER else (0, 1)
    out = []
    for x in pols:
        for y in pols:
            r, b = RH + x, BH + y
            out.append(([], [Term(1, r, 0, b, 1)], [Term(1, b, 1, r, 0)], []))
    return out


def _direct_outcomes() -> list[Outcome]:
    # A photon at c: +1, at d: -1; B photon: +1 at either port
    out = []
    for col_c in ("r", "b"):
        for col_d in ("r", "b"):
            for x in (0, 1):
                for y in (0, 1):
                    ch_c = (RH if col_c == "r" else BH) + x
                    ch_d = (RH if col_d == "r" else BH) + y
                    terms: Outcome = ([], [], [], [])
                    # A -> c, B -> d
                    terms[_atom_index(col_c, col_d)].append(Term(1, ch_c, 0, ch_d, 1))
                    # B -> c, A -> d
                    terms[_atom_index(col_d, col_c)].append(Term(-1, ch_d, 1, ch_c, 0))
                    out.append(terms)
    return out


def _atom_index(col_a: str, col_b: str) -> int:
    return 2 * (col_a == "b") + (col_b == "b")


def polarization_outcomes() -> list[Outcome]:
    """Same-port H click (axis 0) and V click (axis 1) with both photons in port c.

    Channels are read as (initial, measured) polarization: rH = HH,
    rV = HV, bH = VH, bV = VV.
    """
    HH, HV, VH, VV = RH, RV, BH, BV
    return [(
        [Term(1, HH, 0, HV, 1), Term(1, HV, 1, HH, 0)],
        [Term(1, HH, 0, VV, 1), Term(1, HV, 1, VH, 0)],
        [Term(1, VH, 0, HV, 1), Term(1, VV, 1, HH, 0)],
        [Term(1, VH, 0, VV, 1), Term(1, VV, 1, VH, 0)],
    )]


class _Correlators:
    """Lazily evaluated correlator matrices of one node."""

    def __init__(self, rec: EmissionRecord):
        self.rec = rec
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    def matrix(self, c: int, c2: int) -> np.ndarray:
        key = (c, c2)
        if key not in self._cache:
            if (c2, c) in self._cache:
                self._cache[key] = self._cache[(c2, c)].conj().T
            else:
                self._cache[key] = correlator_matrix(self.rec, c, c2)
        return self._cache[key]

    def on_axes(self, c: int, ax: int, c2: int, ax2: int) -> np.ndarray:
        """``C[c, c2](t_ax, t_ax2)`` over (t1, t2); equal-time factors broadcast."""
        M = self.matrix(c, c2)
        if ax == ax2:
            diag = np.diagonal(M)
            return diag[:, None] if ax == 0 else diag[None, :]
        return M if ax == 0 else M.T


def _density_elements(outcomes: Sequence[Outcome], ca: _Correlators, cb: _Correlators,
                      pairs: Iterable[tuple[int, int]]) -> dict[tuple[int, int], np.ndarray]:
    rho: dict[tuple[int, int], np.ndarray] = {}
    for k, l in pairs:
        acc = 0
        for out in outcomes:
            for s in out[k]:
                for u in out[l]:
                    acc = acc + (s.coef * np.conj(u.coef)) * ca.on_axes(s.ch_a, s.axis_a, u.ch_a, u.axis_a) \
                        * cb.on_axes(s.ch_b, s.axis_b, u.ch_b, u.axis_b)
        rho[(k, l)] = acc
    return rho


# ---------------------------------------------------------------------------
# maps and windows
# ---------------------------------------------------------------------------

def _lag_profile(M: np.ndarray, weights: np.ndarray, dt: float) -> np.ndarray:
    """``q[d] = int M(t + tau_d, t) dt`` for lags ``tau_d = (d - n + 1) dt``."""
    W = M * np.outer(weights, weights)
    n = M.shape[0]
    return np.array([np.trace(W, offset=-(d - n + 1)) for d in range(2 * n - 1)]) / dt


@dataclass(frozen=True, eq=False)
class CoincidenceMap:
    """Coincidence density ``p`` and fidelity ``F`` over two click times.

    Axis 0 is the first click time (red, H or port c), axis 1 the
    second (blue, V or port d). ``F`` is NaN where
    ``p < 1e-15 max(p)``; ``chi`` is the Bell phase maximizing the
    overlap with ``(|ud> + e^{i chi}|du>)/sqrt(2)``.
    """

    grid_r: TimeGrid
    grid_b: TimeGrid
    p: np.ndarray
    F: np.ndarray
    chi: np.ndarray
    herald_factor: float
    lag_p: np.ndarray
    lag_good: np.ndarray
    hom_quantum: np.ndarray | None = None
    hom_classical: np.ndarray | None = None
    axes: tuple[str, str] = ("t_r", "t_b")

    @property
    def mask(self) -> np.ndarray:
        return np.isnan(self.F)

    @property
    def lags(self) -> np.ndarray:
        n = self.grid_r.n
        return (np.arange(2 * n - 1) - (n - 1)) * self.grid_r.dt

    @property
    def total(self) -> float:
        w = self.grid_r.weights()
        return float(w @ self.p @ w)

    @property
    def herald_probability(self) -> float:
        """Probability of a heralding click pattern, all modelled ports included."""
        return self.herald_factor * self.total

    @property
    def fidelity(self) -> float:
        """Fidelity averaged over all coincidences."""
        return window_aggregate(self, [math.inf])[0].fidelity

    def to_csv(self, path: str | Path, stride: int = 1) -> None:
        t1 = self.grid_r.times[::stride]
        t2 = self.grid_b.times[::stride]
        p = self.p[::stride, ::stride]
        F = self.F[::stride, ::stride]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([self.axes[0] + "_us", self.axes[1] + "_us", "p", "F"])
            for i, a in enumerate(t1):
                for j, b in enumerate(t2):
                    w.writerow([f"{a:.17g}", f"{b:.17g}", f"{p[i, j]:.17g}",
                                "" if np.isnan(F[i, j]) else f"{F[i, j]:.17g}"])


@dataclass(frozen=True)
class WindowedResult:
    window: float
    efficiency: float
    fidelity: float
    visibility: float
    herald_probability: float

    def to_dict(self) -> dict:
        return {"T": _json_number(self.window), "efficiency": self.efficiency, "fidelity": self.fidelity,
                "visibility": self.visibility, "herald_probability": self.herald_probability}


def _json_number(x: float):
    return x if math.isfinite(x) else "inf"


def _integrate_lags(lags: np.ndarray, q: np.ndarray, T: float) -> float:
    """Trapezoid integral of the piecewise-linear profile over ``[-T, T]``."""
    if T <= 0:
        return 0.0
    if T >= lags[-1]:
        return float(np.trapezoid(q, lags))
    inside = np.abs(lags) < T
    x = np.concatenate([[-T], lags[inside], [T]])
    y = np.concatenate([[np.interp(-T, lags, q)], q[inside], [np.interp(T, lags, q)]])
    return float(np.trapezoid(y, x))


def window_aggregate(cmap: CoincidenceMap, windows: Sequence[float]) -> list[WindowedResult]:
    """Efficiency, fidelity and visibility inside ``|t1 - t2| <= T``.

    Efficiency is normalized to the full map, so it starts at 0 for
    ``T = 0`` and reaches 1 once the window covers every coincidence.
    At ``T = 0`` fidelity and visibility are the equal-time limits.
    """
    lags = cmap.lags
    total = float(np.trapezoid(cmap.lag_p, lags))
    if not total > 0:
        raise ValueError("coincidence map carries no probability")
    centre = cmap.grid_r.n - 1
    out = []
    for T in windows:
        if T < 0 or math.isnan(T):
            raise ValueError(f"window must be >= 0, got {T}")
        mass = _integrate_lags(lags, cmap.lag_p, T)
        if T == 0:
            if cmap.lag_p[centre] <= 0:
                raise ValueError("empty window: no coincidence mass on the diagonal")
            fid = cmap.lag_good[centre] / cmap.lag_p[centre]
        else:
            if mass <= 0:
                raise ValueError(f"empty window T = {T}")
            fid = _integrate_lags(lags, cmap.lag_good, T) / mass
        vis = math.nan
        if cmap.hom_classical is not None:
            if T == 0:
                qc, qq = cmap.hom_classical[centre], cmap.hom_quantum[centre]
            else:
                qc = _integrate_lags(lags, cmap.hom_classical, T)
                qq = _integrate_lags(lags, cmap.hom_quantum, T)
            vis = 1.0 - qq / qc if qc > 0 else math.nan
        out.append(WindowedResult(float(T), mass / total, float(min(max(fid, 0.0), 1.0)),
                                  float(vis), cmap.herald_factor * cmap.total * mass / total))
    return out


# ---------------------------------------------------------------------------
# record checks
# ---------------------------------------------------------------------------

def _prepare(rec_a: EmissionRecord, rec_b: EmissionRecord, include_reexcitation: bool,
             max_points: int | None) -> tuple[EmissionRecord, EmissionRecord]:
    ga, gb = rec_a.grid, rec_b.grid
    if (ga.t0, ga.t1, ga.n) != (gb.t0, gb.t1, gb.n):
        raise ValueError(f"grid mismatch: {ga.to_dict()} vs {gb.to_dict()}")
    for name, rec in (("A", rec_a), ("B", rec_b)):
        weight = rec.pure_weight + float(rec.delay_weights().sum())
        if abs(weight - 1.0) > 1e-6:
            raise ValueError(f"record {name} is not normalized: delay weights sum to {weight}")
        if rec.wavepacket.norm > 1.0 + 1e-6:
            raise ValueError(f"record {name} is not normalized: wavepacket norm {rec.wavepacket.norm}")
    if max_points and ga.n > max_points:
        rec_a, rec_b = rec_a.resampled(max_points), rec_b.resampled(max_points)
    if not include_reexcitation:
        rec_a, rec_b = _pure(rec_a), _pure(rec_b)
    return rec_a, rec_b


def _check_encoding(encoding: str, *recs: EmissionRecord) -> None:
    for rec in recs:
        got = rec.config.get("encoding")
        if got is not None and got != encoding:
            raise ValueError(f"record was simulated with {got} encoding, expected {encoding}")


def _pure(rec: EmissionRecord) -> EmissionRecord:
    if not rec.has_reexcitation and rec.pure_weight == 1.0:
        return rec
    return EmissionRecord(rec.wavepacket, np.zeros(rec.grid.n), 1.0, rec.photon_probability,
                          rec.xe_loss, rec.unreleased, rec.recycling_events, rec.config)


def _build_map(outcomes: Sequence[Outcome], ca: _Correlators, cb: _Correlators, grid: TimeGrid,
               herald_factor: float, axes: tuple[str, str], hom: tuple | None) -> CoincidenceMap:
    pairs = [(k, k) for k in range(4)] + [(UD, DU)]
    rho = _density_elements(outcomes, ca, cb, pairs)
    zeros = np.zeros((grid.n, grid.n))
    diag = [np.real(rho[(k, k)]) if np.ndim(rho[(k, k)]) else zeros for k in range(4)]
    coh = rho[(UD, DU)] if np.ndim(rho[(UD, DU)]) else zeros.astype(complex)
    p = np.clip(sum(diag), 0.0, None)
    good = np.clip(0.5 * (diag[UD] + diag[DU]) + np.abs(coh), 0.0, None)
    good = np.minimum(good, p)
    masked = p < MASK_LEVEL * max(float(p.max()), 0.0) if p.max() > 0 else np.ones_like(p, bool)
    with np.errstate(invalid="ignore", divide="ignore"):
        F = np.where(masked, np.nan, good / np.where(masked, 1.0, p))
    chi = np.where(masked, np.nan, -np.angle(coh))
    w, dt = grid.weights(), grid.dt
    kw = {}
    if hom is not None:
        kw = dict(hom_quantum=_lag_profile(hom[0], w, dt), hom_classical=_lag_profile(hom[1], w, dt))
    return CoincidenceMap(grid, grid, p, F, chi, herald_factor, _lag_profile(p, w, dt),
                          _lag_profile(good, w, dt), axes=axes, **kw)


SAME_BRANCH_PAIRS = ((RH, RH), (BH, BH))


def _hom_maps(ca: _Correlators, cb: _Correlators, pairs=SAME_BRANCH_PAIRS):
    """Coincidences across ports (c at t1, d at t2) with and without interference.

    ``pairs`` lists the branch offsets ``(A, B)`` whose photons are
    compared; each branch adds the measured polarization (0 = H, 1 = V).
    The default pairs the up branches and the down branches of the two
    nodes, i.e. photons meant to be identical.
    """
    quantum = 0.0
    classical = 0.0
    for base_a, base_b in pairs:
        for x in (0, 1):
            for y in (0, 1):
                a1, a2, b1, b2 = base_a + x, base_a + y, base_b + x, base_b + y
                direct = ca.on_axes(a1, 0, a1, 0) * cb.on_axes(b2, 1, b2, 1) \
                    + cb.on_axes(b1, 0, b1, 0) * ca.on_axes(a2, 1, a2, 1)
                cross = ca.on_axes(a1, 0, a2, 1) * cb.on_axes(b2, 1, b1, 0)
                classical = classical + direct.real
                quantum = quantum + direct.real - 2 * cross.real
    return np.clip(quantum, 0.0, None), classical


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def coincidence_map_frequency(rec_a: EmissionRecord, rec_b: EmissionRecord,
                              scheme: DetectionScheme | int = DetectionScheme.DICHROIC,
                              include_reexcitation: bool = False,
                              max_points: int | None = DEFAULT_MAP_POINTS) -> CoincidenceMap:
    """Heralded-state map for frequency-encoded photons.

    Records longer than ``max_points`` are resampled first; pass
    ``None`` to use the full grid.
    """
    scheme = DetectionScheme(scheme)
    _check_encoding("frequency", rec_a, rec_b)
    rec_a, rec_b = _prepare(rec_a, rec_b, include_reexcitation, max_points)
    ca, cb = _Correlators(rec_a), _Correlators(rec_b)
    if scheme == DetectionScheme.DIRECT:
        # a single pattern (one click per port) with the omitted BS factor 1/4
        factor, axes = 0.25, ("t_c", "t_d")
    else:
        # cc, dd, cd and dc patterns are equivalent; 4 x 1/4
        factor, axes = 1.0, ("t_r", "t_b")
    return _build_map(frequency_outcomes(scheme), ca, cb, rec_a.grid, factor, axes, _hom_maps(ca, cb))


def coincidence_map_polarization(rec_a: EmissionRecord, rec_b: EmissionRecord,
                                 include_reexcitation: bool = False,
                                 max_points: int | None = DEFAULT_MAP_POINTS) -> CoincidenceMap:
    """Heralded-state map for polarization encoding, H and V clicks in the same port.

    The ``|uu>`` and ``|dd>`` admixtures produced by polarization
    rotation are part of the state and lower ``F``. cc and dd port
    patterns are equivalent, giving a herald factor ``2 x 1/4``.
    """
    _check_encoding("polarization", rec_a, rec_b)
    rec_a, rec_b = _prepare(rec_a, rec_b, include_reexcitation, max_points)
    ca, cb = _Correlators(rec_a), _Correlators(rec_b)
    hom = _hom_maps(ca, cb)
    return _build_map(polarization_outcomes(), ca, cb, rec_a.grid, 0.5, ("t_H", "t_V"), hom)


def hom_visibility(rec_a: EmissionRecord, rec_b: EmissionRecord, include_reexcitation: bool = False,
                   max_points: int | None = DEFAULT_MAP_POINTS) -> float:
    """``1 - C_quantum / C_distinguishable`` for same-colour photon pairs.

    ``C`` counts coincidences across the two output ports, summed over
    colour groups and polarizations; the distinguishable reference drops
    the two-photon interference term.
    """
    rec_a, rec_b = _prepare(rec_a, rec_b, include_reexcitation, max_points)
    ca, cb = _Correlators(rec_a), _Correlators(rec_b)
    quantum, classical = _hom_maps(ca, cb)
    w = rec_a.grid.weights()
    qd = float(w @ classical @ w)
    if not qd > 0:
        raise ValueError("no distinguishable coincidences: visibility undefined")
    return float(min(max(1.0 - float(w @ quantum @ w) / qd, 0.0), 1.0))


def windowed_to_json(results: Sequence[WindowedResult], path: str | Path | None = None, **extra) -> str:
    text = json.dumps({**extra, "windows": [r.to_dict() for r in results]}, indent=2, sort_keys=True)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


__all__ = [
    "DetectionScheme", "CoincidenceMap", "WindowedResult", "Term", "beam_splitter_transform",
    "beam_splitter_matrix", "frequency_outcomes", "polarization_outcomes",
    "coincidence_map_frequency", "coincidence_map_polarization", "window_aggregate",
    "hom_visibility", "windowed_to_json", "ATOM_LABELS",
]
