"""Six-level cavity-assisted Raman transition (CART) model of one node.

Units
-----
Every frequency-like field of the configuration objects (couplings,
decay rates, detunings, Rabi frequencies, birefringence) is stored in
units of **2 pi x MHz**, i.e. the number you would quote as ``x/(2 pi)``
in MHz. ``kappa = 6`` therefore means ``kappa = 2 pi * 6 MHz``. The
operators returned by the builders are converted to angular frequency
in rad/us (multiplied by ``2 pi``) so that they can be fed to the
propagators with times in microseconds.

Basis ordering (row/column index)::

    0 |i>   1 |e>   2 |up, rH>   3 |up, rV>   4 |down, bH>   5 |down, bV>

For polarization encoding the down branch couples to ``|down, bV>``
instead of ``|down, bH>``; the photon then has the same frequency as the
up-branch photon when ``delta1 == delta2`` and the channel labels are
read as (initial polarization, measured polarization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .core import TimeDependentOperator

TWO_PI = 2.0 * math.pi
SPEED_OF_LIGHT = 299_792_458.0  # m/s

I, E, UP_RH, UP_RV, DN_BH, DN_BV = range(6)
DIM = 6
STATE_LABELS = ("i", "e", "up,rH", "up,rV", "down,bH", "down,bV")
PHOTON_STATES = (UP_RH, UP_RV, DN_BH, DN_BV)
CHANNELS = ("rH", "rV", "bH", "bV")

Encoding = Literal["frequency", "polarization"]


@dataclass(frozen=True)
class BirefringenceSpec:
    """Cavity polarization-mode splitting ``2 * delta`` along Stokes axis ``axis``."""

    delta: float = 0.0
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if self.delta < 0 or not math.isfinite(self.delta):
            raise ValueError(f"birefringence delta must be finite and >= 0, got {self.delta}")
        axis = tuple(float(a) for a in self.axis)
        if len(axis) != 3:
            raise ValueError("axis must be a 3-vector")
        if abs(math.sqrt(sum(a * a for a in axis)) - 1.0) > 1e-12:
            raise ValueError(f"axis must be a unit vector, got {axis}")
        object.__setattr__(self, "axis", axis)

    @property
    def components(self) -> tuple[float, float, float]:
        return tuple(self.delta * a for a in self.axis)


@dataclass(frozen=True)
class DriveConfig:
    """Bichromatic Raman drive: Rabi frequencies, detunings, relative phase."""

    omega1: float = 0.0
    omega2: float = 0.0
    delta1: float = 400.0
    delta2: float = 400.0
    theta: float = 0.0

    def __post_init__(self):
        if self.omega1 < 0 or self.omega2 < 0:
            raise ValueError("Rabi frequencies must be non-negative")
        for name in ("omega1", "omega2", "delta1", "delta2", "theta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def stark_shift(self) -> float:
        """``omega1**2/(4 delta1) + omega2**2/(4 delta2)``; a zero detuning contributes nothing."""
        shift = 0.0
        if self.delta1 != 0:
            shift += self.omega1**2 / (4 * self.delta1)
        if self.delta2 != 0:
            shift += self.omega2**2 / (4 * self.delta2)
        return shift


@dataclass(frozen=True)
class NodeConfig:
    """All physical parameters of one atom-cavity node (2 pi x MHz)."""

    g1: float = 0.0
    g2: float = 0.0
    kappa: float = 0.0
    gamma_ie: float = 0.0
    gamma_xe: float = 0.0
    drive: DriveConfig = field(default_factory=DriveConfig)
    birefringence: BirefringenceSpec = field(default_factory=BirefringenceSpec)
    encoding: Encoding = "frequency"

    def __post_init__(self):
        for name in ("kappa", "gamma_ie", "gamma_xe"):
            v = getattr(self, name)
            if v < 0 or not math.isfinite(v):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        for name in ("g1", "g2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.encoding not in ("frequency", "polarization"):
            raise ValueError(f"unknown encoding {self.encoding!r}")

    def with_delta(self, delta: float) -> "NodeConfig":
        return replace(self, birefringence=replace(self.birefringence, delta=delta))

    def with_drive(self, **kwargs) -> "NodeConfig":
        return replace(self, drive=replace(self.drive, **kwargs))

    @property
    def down_photon_state(self) -> int:
        return DN_BV if self.encoding == "polarization" else DN_BH

    def to_dict(self) -> dict:
        return {
            "g1": self.g1, "g2": self.g2, "kappa": self.kappa,
            "gamma_ie": self.gamma_ie, "gamma_xe": self.gamma_xe,
            "omega1": self.drive.omega1, "omega2": self.drive.omega2,
            "delta1": self.drive.delta1, "delta2": self.drive.delta2,
            "theta": self.drive.theta,
            "delta": self.birefringence.delta, "axis": list(self.birefringence.axis),
            "encoding": self.encoding,
        }


@dataclass(frozen=True)
class CavityGeometry:
    """Symmetric Fabry-Perot cavity; lengths in mm, wavelength in nm."""

    length: float
    mirror_roc: float
    finesse: float
    wavelength: float = 866.0

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("cavity length must be positive")
        if self.length > 2 * self.mirror_roc:
            raise ValueError(f"unstable cavity: length {self.length} mm > 2 R_c = {2 * self.mirror_roc} mm")
        if not self.finesse > 0:
            raise ValueError("finesse must be positive")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")


@dataclass(frozen=True)
class GeometryQuantities:
    fsr: float     # 2 pi x MHz
    kappa: float   # 2 pi x MHz
    waist: float   # um


def derive_geometry(geom: CavityGeometry) -> GeometryQuantities:
    """Free spectral range, decay rate and waist of a symmetric cavity.

    ``kappa = FSR / finesse`` is the convention under which the quoted
    cavity presets are self-consistent.
    """
    length_m = geom.length * 1e-3
    fsr_mhz = SPEED_OF_LIGHT / (2 * length_m) / 1e6
    g_param = 2 * geom.mirror_roc / geom.length - 1  # sqrt argument, >= 0 when stable
    w0_sq = geom.wavelength * 1e-9 * length_m / TWO_PI * math.sqrt(g_param)
    return GeometryQuantities(fsr=fsr_mhz, kappa=fsr_mhz / geom.finesse, waist=math.sqrt(w0_sq) * 1e6)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def _static_hermitian(cfg: NodeConfig) -> np.ndarray:
    """Time-independent Hermitian part (2 pi x MHz), drive term excluded."""
    d = cfg.drive
    dx, dy, dz = cfg.birefringence.components
    H = np.zeros((DIM, DIM), dtype=complex)
    H[I, I] = d.stark_shift
    H[E, E] = -d.delta1
    H[E, UP_RH] = H[UP_RH, E] = cfg.g1
    down = cfg.down_photon_state
    H[E, down] = H[down, E] = cfg.g2
    for first, offset in ((UP_RH, 0.0), (DN_BH, d.delta2 - d.delta1)):
        H[first, first] = offset + dz
        H[first + 1, first + 1] = offset - dz
        H[first, first + 1] = dx - 1j * dy
        H[first + 1, first] = dx + 1j * dy
    return H


def _drive_terms(cfg: NodeConfig) -> list[tuple[float, np.ndarray]]:
    """``Omega(t)/2 |i><e| + h.c.`` split into Fourier components (rad/us)."""
    d = cfg.drive
    beat = TWO_PI * (d.delta2 - d.delta1)
    up = np.zeros((DIM, DIM), complex)
    up[I, E] = 1.0
    down = up.T.copy()
    terms = [(0.0, TWO_PI * d.omega1 / 2 * (up + down))]
    c2 = TWO_PI * d.omega2 / 2 * np.exp(1j * d.theta)
    if beat == 0.0:
        terms.append((0.0, c2 * up + np.conj(c2) * down))
    else:
        terms += [(beat, c2 * up), (-beat, np.conj(c2) * down)]
    return terms


def _loss_diagonal(cfg: NodeConfig) -> np.ndarray:
    diag = np.zeros(DIM)
    diag[E] = cfg.gamma_xe + cfg.gamma_ie
    diag[list(PHOTON_STATES)] = cfg.kappa
    return diag


def build_hamiltonian(cfg: NodeConfig) -> TimeDependentOperator:
    """Hermitian CART Hamiltonian in rad/us (all ``-i kappa``, ``-i gamma`` removed)."""
    return TimeDependentOperator.fourier([(0.0, TWO_PI * _static_hermitian(cfg))] + _drive_terms(cfg))


def build_effective_hamiltonian(cfg: NodeConfig) -> TimeDependentOperator:
    """Non-Hermitian no-jump Hamiltonian ``H - i/2 sum_j L_j^dag L_j`` in rad/us.

    The excited-state width is ``gamma_xe + gamma_ie``: both decay
    channels remove amplitude from the no-jump branch.
    """
    static = _static_hermitian(cfg) - 1j * np.diag(_loss_diagonal(cfg))
    return TimeDependentOperator.fourier([(0.0, TWO_PI * static)] + _drive_terms(cfg))


def collapse_operators(cfg: NodeConfig) -> list[tuple[str, np.ndarray]]:
    """Named collapse operators in sqrt(rad/us); zero-rate channels are omitted.

    ``ie`` is square (decay back into ``|i>``, recycled); ``xe`` and the
    four photon channels are ``1 x 6`` rows mapping out of the model.
    """
    ops: list[tuple[str, np.ndarray]] = []
    if cfg.gamma_ie > 0:
        L = np.zeros((DIM, DIM), complex)
        L[I, E] = math.sqrt(2 * TWO_PI * cfg.gamma_ie)
        ops.append(("ie", L))
    if cfg.gamma_xe > 0:
        L = np.zeros((1, DIM), complex)
        L[0, E] = math.sqrt(2 * TWO_PI * cfg.gamma_xe)
        ops.append(("xe", L))
    if cfg.kappa > 0:
        for name, idx in zip(CHANNELS, PHOTON_STATES):
            L = np.zeros((1, DIM), complex)
            L[0, idx] = math.sqrt(2 * TWO_PI * cfg.kappa)
            ops.append((name, L))
    return ops


def build_lindblad_generator(cfg: NodeConfig) -> tuple[TimeDependentOperator, list[np.ndarray]]:
    """Hermitian Hamiltonian plus collapse operators for the Lindblad equation."""
    return build_hamiltonian(cfg), [L for _, L in collapse_operators(cfg)]


def basis_state(index: int) -> np.ndarray:
    v = np.zeros(DIM, complex)
    v[index] = 1.0
    return v
