"""Complex linear algebra and propagators for small open quantum systems.

Everything here is unit-agnostic: a Hamiltonian ``H`` generates
``d psi/dt = -i H psi``, so ``H`` must already be expressed in angular
frequency units matching the time axis (the CART model uses rad/us with
times in us).

Collapse operators follow a shape convention instead of a wrapper type:

* a square ``(dim, dim)`` operator maps the state back into the modeled
  space (population is recycled, e.g. spontaneous decay ``e -> i``);
* a rectangular ``(m, dim)`` operator maps into levels that are *not*
  modeled, so its jumps are pure population loss (cavity leakage, decay
  into spectator levels).

Both propagators can report the cumulative expected number of jumps of
each operator, integrated by the ODE solver itself rather than by
post-hoc quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "IntegrationError",
    "TimeDependentOperator",
    "Trajectory",
    "matrix_exponential",
    "taylor_exponential",
    "integrate_dopri5",
    "propagate_schrodinger",
    "propagate_lindblad",
    "dissipator_anticommutator",
]


class IntegrationError(RuntimeError):
    """The adaptive integrator could not make progress."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message if t is None else f"{message} (t = {t:.6g})")
        self.t = t


# ---------------------------------------------------------------------------
# matrix exponential
# ---------------------------------------------------------------------------

def _check_finite_square(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def matrix_exponential(A: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Taylor core.

    ``A`` is scaled by ``2**-s`` until its 1-norm is at most 1/2, the
    exponential of the scaled matrix is summed to machine precision and
    the result is squared ``s`` times.
    """
    A = _check_finite_square(A)
    norm = np.linalg.norm(A, 1)
    s = 0
    if norm > 0.5:
        s = int(math.ceil(math.log2(norm / 0.5)))
    As = A / (2.0**s)
    n = A.shape[0]
    result = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    # ||As|| <= 1/2: 30 terms push the remainder far below double eps
    for k in range(1, 30):
        term = term @ As / k
        result = result + term
        if np.max(np.abs(term)) < 1e-18 * max(1.0, np.max(np.abs(result))):
            break
    for _ in range(s):
        result = result @ result
    return result


def taylor_exponential(A: np.ndarray, max_terms: int = 400) -> np.ndarray:
    """Plain term-by-term Taylor sum of ``exp(A)``; a slow independent check."""
    A = _check_finite_square(A)
    n = A.shape[0]
    result = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    for k in range(1, max_terms):
        term = term @ A / k
        result = result + term
        if np.max(np.abs(term)) < 1e-17 * max(1.0, np.max(np.abs(result))):
            break
    return result


# ---------------------------------------------------------------------------
# time-dependent operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TimeDependentOperator:
    """Operator ``t -> M(t)``, stored as a finite Fourier sum when possible.

    ``M(t) = sum_k exp(i w_k t) M_k``. Operators built from an arbitrary
    callable keep ``terms`` empty and are marked aperiodic unless a
    period is supplied.
    """

    dim: int
    terms: tuple[tuple[float, np.ndarray], ...] = ()
    rule: Callable[[float], np.ndarray] | None = field(default=None, compare=False)
    period: float | None = None

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        for _, M in self.terms:
            if M.shape != (self.dim, self.dim):
                raise ValueError("Fourier term has the wrong shape")
            M.setflags(write=False)

    @classmethod
    def constant(cls, M: np.ndarray) -> "TimeDependentOperator":
        M = _check_finite_square(M).copy()
        return cls(dim=M.shape[0], terms=((0.0, M),), period=None)

    @classmethod
    def fourier(cls, terms: Sequence[tuple[float, np.ndarray]]) -> "TimeDependentOperator":
        merged: dict[float, np.ndarray] = {}
        for w, M in terms:
            M = _check_finite_square(M)
            merged[float(w)] = merged.get(float(w), 0) + M
        items = tuple((w, np.array(M, dtype=complex)) for w, M in sorted(merged.items()))
        dim = items[0][1].shape[0]
        freqs = [abs(w) for w, M in items if w != 0.0 and np.any(M)]
        period = None
        if freqs and all(math.isclose(f / min(freqs), round(f / min(freqs))) for f in freqs):
            period = 2 * math.pi / min(freqs)
        return cls(dim=dim, terms=items, period=period)

    @classmethod
    def from_callable(cls, rule: Callable[[float], np.ndarray], dim: int,
                      period: float | None = None) -> "TimeDependentOperator":
        return cls(dim=dim, rule=rule, period=period)

    @property
    def is_constant(self) -> bool:
        return self.rule is None and all(w == 0.0 or not np.any(M) for w, M in self.terms)

    def __call__(self, t: float) -> np.ndarray:
        if self.rule is not None:
            return np.asarray(self.rule(t), dtype=complex)
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for w, M in self.terms:
            out += M if w == 0.0 else np.exp(1j * w * t) * M
        return out

    def static_part(self) -> np.ndarray:
        """Time average over the Fourier terms (the ``w = 0`` component)."""
        if self.rule is not None:
            raise ValueError("static part is only defined for Fourier operators")
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for w, M in self.terms:
            if w == 0.0:
                out += M
        return out

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "TimeDependentOperator":
        """Apply a linear map term by term (keeps the Fourier structure)."""
        if self.rule is not None:
            return TimeDependentOperator.from_callable(lambda t: fn(self(t)), self.dim, self.period)
        return TimeDependentOperator(self.dim, tuple((w, fn(M)) for w, M in self.terms), period=self.period)


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) with dense output
# ---------------------------------------------------------------------------

_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [np.array(row) for row in (
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
)]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
# fifth- minus fourth-order weights
_E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# Shampine's continuous extension, y(t + x h) = y + h * sum_j (K^T P)_j x^(j+1)
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@dataclass
class SolverStats:
    accepted: int = 0
    rejected: int = 0
    evaluations: int = 0


def _initial_step(f, t0, y0, f0, direction_span, rtol, atol):
    scale = atol + np.abs(y0) * rtol
    d0 = np.sqrt(np.mean(np.abs(y0 / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, direction_span)


def integrate_dopri5(f: Callable[[float, np.ndarray], np.ndarray], y0: np.ndarray,
                     times: np.ndarray, rtol: float = 1e-9, atol: float = 1e-12,
                     max_step: float = np.inf, step_hook: Callable | None = None,
                     stats: SolverStats | None = None) -> np.ndarray:
    """Integrate ``y' = f(t, y)`` and sample the solution at ``times``.

    Embedded Dormand-Prince 5(4) pair with local extrapolation and
    Shampine's fourth-order dense output. ``times[0]`` is the initial
    time. ``step_hook(t_old, y_old, t_new, y_new)`` is called after
    every accepted step.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise ValueError("times must be a non-empty 1-D array")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    stats = stats if stats is not None else SolverStats()

    y = np.array(y0, dtype=complex).ravel()
    out = np.empty((times.size,) + y.shape, dtype=complex)
    out[0] = y
    if times.size == 1:
        return out

    t, t_end = float(times[0]), float(times[-1])
    K = np.empty((7, y.size), dtype=complex)
    K[0] = f(t, y)
    stats.evaluations += 1
    h = _initial_step(f, t, y, K[0], min(t_end - t, max_step), rtol, atol)
    stats.evaluations += 1
    abs_y = np.abs(y)
    nxt = 1
    safety, min_factor, max_factor = 0.9, 0.2, 10.0

    while nxt < times.size:
        if h < 10 * np.finfo(float).eps * max(1.0, abs(t)):
            raise IntegrationError("step size underflow; system may be stiff", t)
        h = min(h, max_step, t_end - t)
        # stages
        for s in range(1, 7):
            K[s] = f(t + _C[s] * h, y + h * (_A[s] @ K[:s]))
        stats.evaluations += 6
        y_new = y + h * (_B[:6] @ K[:6])
        err = h * (_E @ K)
        abs_y_new = np.abs(y_new)
        scale = atol + rtol * np.maximum(abs_y, abs_y_new)
        ratio = np.abs(err) / scale
        err_norm = math.sqrt(float(ratio @ ratio) / ratio.size)
        if not np.isfinite(err_norm):
            stats.rejected += 1
            h *= min_factor
            continue
        if err_norm <= 1.0:
            t_new = t + h
            # dense output for every requested time inside (t, t_new]
            if times[nxt] <= t_new:
                Q = _P.T @ K
                while nxt < times.size and times[nxt] <= t_new:
                    x = (times[nxt] - t) / h
                    if times[nxt] == t_new:
                        out[nxt] = y_new
                    else:
                        poly = x * np.array([1.0, x, x * x, x * x * x])
                        out[nxt] = y + h * (poly @ Q)
                    nxt += 1
            if step_hook is not None:
                step_hook(t, y, t_new, y_new)
            stats.accepted += 1
            t, y, abs_y = t_new, y_new, abs_y_new
            K[0] = K[6]  # first-same-as-last
            factor = max_factor if err_norm == 0 else min(max_factor, safety * err_norm ** -0.2)
            h *= factor
        else:
            stats.rejected += 1
            h *= max(min_factor, safety * err_norm ** -0.2)
    return out


# ---------------------------------------------------------------------------
# propagators
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled states plus cumulative expected jump counts.

    ``jumps[k, j]`` is the integrated rate of collapse operator ``j``
    (or monitored operator ``j``) from ``times[0]`` to ``times[k]``.
    """

    times: np.ndarray
    states: np.ndarray
    jumps: np.ndarray
    stats: SolverStats = field(default_factory=SolverStats, compare=False)


def _as_ops(ops: Sequence[np.ndarray], dim: int) -> list[np.ndarray]:
    out = []
    for L in ops:
        L = np.asarray(L, dtype=complex)
        if L.ndim != 2 or L.shape[1] != dim:
            raise ValueError(f"collapse operator shape {L.shape} incompatible with dim {dim}")
        out.append(L)
    return out


def dissipator_anticommutator(ops: Sequence[np.ndarray], dim: int) -> np.ndarray:
    """``sum_j L_j^dag L_j`` for a list of collapse operators."""
    acc = np.zeros((dim, dim), dtype=complex)
    for L in _as_ops(ops, dim):
        acc += L.conj().T @ L
    return acc


def _superoperator(G: np.ndarray, recycle: Sequence[np.ndarray]) -> np.ndarray:
    """Matrix of ``rho -> G rho + rho G^dag + sum L rho L^dag`` on row-major ``vec(rho)``."""
    d = G.shape[0]
    eye = np.eye(d)
    S = np.kron(G, eye) + np.kron(eye, G.conj())
    for L in recycle:
        S = S + np.kron(L, L.conj())
    return S


def _propagate_constant(A: np.ndarray, y0: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Exact samples of ``dy/dt = A y``; one exponential per distinct step length."""
    times = np.asarray(times, float)
    ys = np.empty((len(times), len(y0)), complex)
    ys[0] = y0
    steps = np.diff(times)
    keys = np.round(steps, 15)
    cache: dict[float, np.ndarray] = {}
    for k, (dt, key) in enumerate(zip(steps, keys.tolist()), start=1):
        P = cache.get(key)
        if P is None:
            P = cache[key] = matrix_exponential(A * dt)
        ys[k] = P @ ys[k - 1]
    return ys


def _check_times(times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, float)
    if times.ndim != 1 or len(times) < 1 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be a strictly increasing 1-D array")
    return times


def _use_exact(H: "TimeDependentOperator", method: str) -> bool:
    if method not in ("auto", "rk45", "exact"):
        raise ValueError(f"unknown method {method!r}")
    if method == "exact" and not H.is_constant:
        raise ValueError("exact propagation needs a time-independent operator")
    return method == "exact" or (method == "auto" and H.is_constant)


def propagate_schrodinger(H: TimeDependentOperator, psi0: np.ndarray, times: np.ndarray,
                          rtol: float = 1e-9, atol: float = 1e-12,
                          monitor: Sequence[np.ndarray] = (),
                          max_step: float = np.inf, method: str = "auto") -> Trajectory:
    """Solve ``d psi/dt = -i H(t) psi`` for a possibly non-Hermitian ``H``.

    ``monitor`` operators are not applied to the state; their rates
    ``||L psi||^2`` are integrated alongside, which is how the leaked
    probability of each channel is booked for the no-jump branch.

    ``method="auto"`` uses exact matrix exponentials when ``H`` is
    time-independent and the adaptive Dormand-Prince integrator
    otherwise; ``"rk45"`` and ``"exact"`` force one of the two.
    """
    times = _check_times(times)
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (H.dim,):
        raise ValueError(f"state dimension {psi0.shape} does not match operator dim {H.dim}")
    mon_ops = _as_ops(monitor, H.dim)
    d, m = H.dim, len(mon_ops)
    rows = np.vstack(mon_ops) if m else np.zeros((0, d), complex)
    # reduceat offsets: rates are summed over the rows of each operator
    starts = np.cumsum([0] + [L.shape[0] for L in mon_ops[:-1]]) if m else None
    y0 = np.concatenate([psi0, np.zeros(m, dtype=complex)])

    if _use_exact(H, method):
        G = -1j * H.static_part()
        states = _propagate_constant(G, psi0, times)
        if m:
            # rates are quadratic in psi, linear in psi psi^dag
            trace_rows = np.array([(L.conj().T @ L).T.ravel() for L in mon_ops])
            A = np.zeros((d * d + m, d * d + m), complex)
            A[: d * d, : d * d] = _superoperator(G, ())
            A[d * d:, : d * d] = trace_rows
            z0 = np.concatenate([np.outer(psi0, psi0.conj()).ravel(), np.zeros(m, complex)])
            jumps = _propagate_constant(A, z0, times)[:, d * d:].real
        else:
            jumps = np.zeros((len(times), 0))
        return Trajectory(times, states, jumps, SolverStats(accepted=len(times) - 1))

    fast = H.rule is None
    terms = [(w, -1j * M) for w, M in H.terms] if fast else None
    static = sum((M for w, M in terms if w == 0.0), np.zeros((d, d), complex)) if fast else None
    moving = [(w, M) for w, M in terms if w != 0.0] if fast else None

    def rhs(t, y):
        psi = y[:d]
        out = np.empty_like(y)
        if fast:
            G = static
            for w, M in moving:
                G = G + np.exp(1j * w * t) * M
            out[:d] = G @ psi
        else:
            out[:d] = -1j * (H(t) @ psi)
        if m:
            amp = rows @ psi
            out[d:] = np.add.reduceat((amp.real**2 + amp.imag**2), starts)
        return out

    stats = SolverStats()
    ys = integrate_dopri5(rhs, y0, times, rtol=rtol, atol=atol, max_step=max_step, stats=stats)
    return Trajectory(np.asarray(times, float), ys[:, :d], ys[:, d:].real, stats)


def propagate_lindblad(H: TimeDependentOperator, collapse_ops: Sequence[np.ndarray],
                       rho0: np.ndarray, times: np.ndarray, rtol: float = 1e-9,
                       atol: float = 1e-12, max_step: float = np.inf,
                       method: str = "auto") -> Trajectory:
    """Solve the Lindblad equation with an optionally non-Hermitian ``H``.

    ``d rho/dt = -i (H rho - rho H^dag) + sum_j (L rho L^dag - 1/2 {L^dag L, rho})``,
    where the recycling term ``L rho L^dag`` is only kept for square
    ``L`` (see module docstring). ``jumps[:, j]`` integrates
    ``tr(L_j rho L_j^dag)``. ``method`` is as in :func:`propagate_schrodinger`.
    """
    times = _check_times(times)
    d = H.dim
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (d, d):
        raise ValueError(f"density matrix shape {rho0.shape} does not match dim {d}")
    if not np.allclose(rho0, rho0.conj().T, rtol=0, atol=1e-12):
        raise ValueError("rho0 must be Hermitian")
    ops = _as_ops(collapse_ops, d)
    LdL = [L.conj().T @ L for L in ops]
    trace_rows = np.array([M.T.ravel() for M in LdL]).reshape(len(LdL), d * d)
    recycle = [L for L in ops if L.shape[0] == d]
    half = 0.5 * sum(LdL, np.zeros((d, d), complex))
    m = len(ops)

    if _use_exact(H, method):
        A = np.zeros((d * d + m, d * d + m), complex)
        A[: d * d, : d * d] = _superoperator(-1j * H.static_part() - half, recycle)
        A[d * d:, : d * d] = trace_rows
        y0 = np.concatenate([rho0.ravel(), np.zeros(m, dtype=complex)])
        ys = _propagate_constant(A, y0, times)
        states = ys[:, : d * d].reshape(-1, d, d)
        states = 0.5 * (states + states.conj().transpose(0, 2, 1))
        return Trajectory(times, states, ys[:, d * d:].real, SolverStats(accepted=len(times) - 1))

    if H.rule is None:
        static = -1j * H.static_part() - half
        moving = [(w, -1j * M) for w, M in H.terms if w != 0.0]
    else:
        static, moving = None, None

    def rhs(t, y):
        rho = y[: d * d].reshape(d, d)
        if static is not None:
            G = static
            for w, M in moving:
                G = G + np.exp(1j * w * t) * M
        else:
            G = -1j * H(t) - half
        # G rho + rho G^dag with rho Hermitian; X + X^dag keeps every stage Hermitian
        X = G @ rho
        drho = X + X.conj().T
        for L in recycle:
            drho = drho + L @ rho @ L.conj().T
        out = np.empty_like(y)
        out[: d * d] = drho.ravel()
        if m:
            out[d * d:] = (trace_rows @ y[: d * d]).real
        return out

    y0 = np.concatenate([rho0.ravel(), np.zeros(m, dtype=complex)])
    stats = SolverStats()
    ys = integrate_dopri5(rhs, y0, times, rtol=rtol, atol=atol, max_step=max_step, stats=stats)
    states = ys[:, : d * d].reshape(-1, d, d)
    return Trajectory(np.asarray(times, float), states, ys[:, d * d:].real, stats)

