"""
Truncated Fock-space linear algebra at an explicit oscillator length scale.

Natural units with hbar = 1. Every state and operator carries the length
scale ``lam`` its number basis is built on; combining objects at different
scales raises :class:`ScaleMismatchError`.

Truncation semantics: on a ``dim``-level space the ladder operators are exact
on levels ``0 .. dim-2``. Identities involving the creation operator are only
meaningful for states supported there.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import AccuracyError, ScaleMismatchError, ValidationError

DEFAULT_DIM = 64
NORM_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


def _check_lam(lam: float) -> float:
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0:
        raise ValidationError(f"length scale must be positive and finite, got {lam}")
    return lam


@dataclass(frozen=True, eq=False)
class StateVector:
    """Amplitudes of a system state in the number basis |n>_lam, n < dim."""

    amplitudes: np.ndarray
    lam: float

    def __post_init__(self):
        amps = np.asarray(self.amplitudes)
        if amps.ndim != 1 or amps.size < 1:
            raise ValidationError("amplitudes must be a non-empty 1-D array")
        if not np.all(np.isfinite(amps)):
            raise ValidationError("amplitudes must be finite")
        object.__setattr__(self, "amplitudes", _frozen(amps))
        object.__setattr__(self, "lam", _check_lam(self.lam))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    @property
    def max_level(self) -> int:
        """Highest level with a non-zero amplitude (-1 for the zero vector)."""
        nz = np.flatnonzero(self.amplitudes)
        return int(nz[-1]) if nz.size else -1

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm - 1.0) < tol

    def normalized(self) -> "StateVector":
        n = self.norm
        if n == 0:
            raise ValidationError("cannot normalize the zero vector")
        return StateVector(self.amplitudes / n, self.lam)

    def resized(self, dim: int) -> "StateVector":
        """Zero-pad or cut to ``dim`` levels. Cutting non-zero amplitudes is an error."""
        if dim < 1:
            raise ValidationError("dim must be >= 1")
        if dim < self.dim and np.any(self.amplitudes[dim:] != 0):
            raise ValidationError(f"state has support above level {dim - 1}")
        out = np.zeros(dim, dtype=complex)
        k = min(dim, self.dim)
        out[:k] = self.amplitudes[:k]
        return StateVector(out, self.lam)

    def inner(self, other: "StateVector") -> complex:
        """<self|other>."""
        _same_scale(self, other)
        k = min(self.dim, other.dim)
        return complex(np.vdot(self.amplitudes[:k], other.amplitudes[:k]))

    def __add__(self, other: "StateVector") -> "StateVector":
        _same_scale(self, other)
        dim = max(self.dim, other.dim)
        return StateVector(self.resized(dim).amplitudes + other.resized(dim).amplitudes, self.lam)

    def __mul__(self, scalar) -> "StateVector":
        return StateVector(self.amplitudes * complex(scalar), self.lam)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense operator on the truncated number basis at scale ``lam``."""

    entries: np.ndarray
    lam: float

    def __post_init__(self):
        e = np.asarray(self.entries)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValidationError("operator entries must be a square matrix")
        object.__setattr__(self, "entries", _frozen(e))
        object.__setattr__(self, "lam", _check_lam(self.lam))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def H(self) -> "OperatorMatrix":
        return OperatorMatrix(self.entries.conj().T, self.lam)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0) <= tol)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            _same_scale(self, other)
            _same_dim(self.dim, other.dim)
            return OperatorMatrix(self.entries @ other.entries, self.lam)
        if isinstance(other, StateVector):
            _same_scale(self, other)
            _same_dim(self.dim, other.dim)
            return StateVector(self.entries @ other.amplitudes, self.lam)
        return NotImplemented

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _same_scale(self, other)
        _same_dim(self.dim, other.dim)
        return OperatorMatrix(self.entries + other.entries, self.lam)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _same_scale(self, other)
        _same_dim(self.dim, other.dim)
        return OperatorMatrix(self.entries - other.entries, self.lam)

    def __mul__(self, scalar) -> "OperatorMatrix":
        return OperatorMatrix(self.entries * complex(scalar), self.lam)

    __rmul__ = __mul__

    def expectation(self, state: StateVector) -> complex:
        _same_scale(self, state)
        _same_dim(self.dim, state.dim)
        v = state.amplitudes
        return complex(np.vdot(v, self.entries @ v))


def _same_scale(a, b):
    if a.lam != b.lam:
        raise ScaleMismatchError(f"length scales differ: {a.lam} vs {b.lam}")


def _same_dim(m, n):
    if m != n:
        raise ValidationError(f"dimension mismatch: {m} vs {n}")


def commutator(a: OperatorMatrix, b: OperatorMatrix) -> OperatorMatrix:
    return a @ b - b @ a


def identity(dim: int, lam: float) -> OperatorMatrix:
    return OperatorMatrix(np.eye(dim), lam)


def make_number_state(n: int, dim: int = DEFAULT_DIM, lam: float = 1.0) -> StateVector:
    if dim < 1:
        raise ValidationError("dim must be >= 1")
    if not 0 <= n < dim:
        raise ValidationError(f"level {n} out of range for truncation dim={dim}")
    amps = np.zeros(dim, dtype=complex)
    amps[n] = 1.0
    return StateVector(amps, lam)


def ladder_operators(dim: int = DEFAULT_DIM, lam: float = 1.0) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Annihilation and creation operators, <m|a|n> = sqrt(n) delta_{m,n-1}."""
    if dim < 2:
        raise ValidationError(f"ladder operators need dim >= 2, got {dim}")
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
    return OperatorMatrix(a, lam), OperatorMatrix(a.conj().T, lam)


def quadrature_operators(dim: int = DEFAULT_DIM, lam: float = 1.0) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Position and momentum, x = lam (a + a^+)/sqrt2, p = i (a^+ - a)/(lam sqrt2)."""
    a, ad = ladder_operators(dim, lam)
    x = (a + ad) * (lam / np.sqrt(2))
    p = (ad - a) * (1j / (lam * np.sqrt(2)))
    return x, p


def ladder_from_quadratures(x: OperatorMatrix, p: OperatorMatrix) -> OperatorMatrix:
    """Inverse of :func:`quadrature_operators`: a = (x/lam + i lam p)/sqrt2."""
    _same_scale(x, p)
    lam = x.lam
    return (x * (1 / lam) + p * (1j * lam)) * (1 / np.sqrt(2))


def number_operator(dim: int = DEFAULT_DIM, lam: float = 1.0) -> OperatorMatrix:
    a, ad = ladder_operators(dim, lam)
    return ad @ a


def random_finite_state(seed: int, max_level: int, dim: int = DEFAULT_DIM, lam: float = 1.0) -> StateVector:
    """Normalized random state supported on levels 0..max_level.

    Amplitudes are complex Gaussian draws from ``numpy.random.default_rng(seed)``,
    so the result is reproducible for a fixed seed.
    """
    if max_level < 0:
        raise ValidationError("max_level must be >= 0")
    if max_level >= dim:
        raise ValidationError(f"max_level={max_level} does not fit truncation dim={dim}")
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(max_level + 1) + 1j * rng.standard_normal(max_level + 1)
    amps = np.zeros(dim, dtype=complex)
    amps[: max_level + 1] = c / np.linalg.norm(c)
    return StateVector(amps, lam)


def displace(state: StateVector, x0: float, p0: float, work_dim: int | None = None) -> StateVector:
    """Apply the phase-space displacement D(z), z = (x0/lam + i lam p0)/sqrt2.

    The exponential is taken on an enlarged space (``work_dim``) and cut back,
    so the result is accurate as long as the displaced state fits in ``dim``.
    """
    lam = state.lam
    dim = state.dim
    work_dim = work_dim or max(2 * dim, dim + 64)
    z = (x0 / lam + 1j * lam * p0) / np.sqrt(2)
    a, ad = ladder_operators(work_dim, lam)
    gen = z * ad.entries - np.conj(z) * a.entries
    out = expm(gen) @ state.resized(work_dim).amplitudes
    leak = float(np.sum(np.abs(out[dim:]) ** 2))
    if leak > 1e-10:
        raise AccuracyError(f"displaced state leaks {leak:.3e} beyond dim={dim}", defect=leak)
    return StateVector(out[:dim], lam)


def hermite_functions(n_max: int, x: np.ndarray, lam: float = 1.0) -> np.ndarray:
    """Number-state wavefunctions <x|n>_lam for n = 0..n_max, shape (n_max+1, len(x)).

    Uses the three-term recurrence of the normalized functions, which stays
    finite far into the classically forbidden region.
    """
    x = np.asarray(x, dtype=float)
    s = x / lam
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * s**2) / np.sqrt(lam)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * s * out[0]
    for n in range(2, n_max + 1):
        out[n] = np.sqrt(2.0 / n) * s * out[n - 1] - np.sqrt((n - 1) / n) * out[n - 2]
    return out


def wavefunction(state: StateVector, x: np.ndarray, tol: float = 1e-15) -> np.ndarray:
    """Position-space samples of ``state`` on the points ``x``."""
    amps = state.amplitudes
    keep = np.flatnonzero(np.abs(amps) > tol)
    if keep.size == 0:
        return np.zeros(np.shape(x), dtype=complex)
    h = hermite_functions(int(keep[-1]), x, state.lam)
    return np.tensordot(amps[: keep[-1] + 1], h, axes=(0, 0))


def state_to_json(state: StateVector) -> str:
    """JSON array of [re, im] pairs; floats round-trip exactly."""
    return json.dumps([[float(c.real), float(c.imag)] for c in state.amplitudes])


def state_from_json(text: str, lam: float = 1.0) -> StateVector:
    data = json.loads(text)
    try:
        amps = np.array([complex(re, im) for re, im in data])
    except (TypeError, ValueError) as exc:
        raise ValidationError("state JSON must be an array of [re, im] pairs") from exc
    return StateVector(amps, lam)
