"""
Phase-space distributions: coherent states, the Husimi function, moment and
characteristic-function comparisons, and coherent-state mixtures.

Conventions (hbar = 1, h = 2 pi):

* coherent state |x, p; lam> has wave function
  (pi lam^2)^(-1/4) exp[-(x'-x)^2 / (2 lam^2) + i p x' - i p x / 2];
* its complex label is z = (x/lam + i lam p)/sqrt2, so that
  <n|x, p; lam> = exp(-|z|^2/2) z^n / sqrt(n!);
* Q(x, p) = |<x, p; lam|psi>|^2 / (2 pi).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AccuracyError, RangeError, ScaleMismatchError, StructuralError, ValidationError
from .fock import StateVector, hermite_functions, ladder_operators

SCHEMA = "phasemeter/1"

DEFAULT_POINTS = 161
DEFAULT_EXTENT = 8.0
DEFAULT_MAX_ORDER = 6

NEG_CLIP = 1e-12
Q_MASS_TOL = 1e-4
TAIL_TOL = 1e-8


@dataclass(frozen=True)
class CoherentLabel:
    x: float
    p: float
    lam: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.p)):
            raise ValidationError("coherent label centre must be finite")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValidationError(f"coherent label width must be positive, got {self.lam}")

    @property
    def z(self) -> complex:
        return complex(self.x / self.lam, self.lam * self.p) / np.sqrt(2)


def complex_coordinate(x, p, lam: float):
    """z = (x/lam + i lam p)/sqrt2 (broadcasts)."""
    return (np.asarray(x) / lam + 1j * lam * np.asarray(p)) / np.sqrt(2)


@dataclass(frozen=True)
class Region:
    """Closed rectangle [x_min, x_max] x [p_min, p_max] in the readout plane."""

    x_min: float
    x_max: float
    p_min: float
    p_max: float

    def __post_init__(self):
        if not (self.x_min <= self.x_max and self.p_min <= self.p_max):
            raise ValidationError("region bounds must satisfy min <= max")

    @classmethod
    def centred(cls, x: float, p: float, side_x: float, side_p: float | None = None) -> "Region":
        side_p = side_x if side_p is None else side_p
        return cls(x - side_x / 2, x + side_x / 2, p - side_p / 2, p + side_p / 2)

    @classmethod
    def everything(cls) -> "Region":
        return cls(-np.inf, np.inf, -np.inf, np.inf)

    def mask(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        mx = (x >= self.x_min) & (x <= self.x_max)
        mp = (p >= self.p_min) & (p <= self.p_max)
        return mx[:, None] & mp[None, :]


def _uniform_step(axis: np.ndarray, name: str) -> float:
    if axis.ndim != 1 or axis.size < 2:
        raise StructuralError(f"{name} axis needs at least two points")
    d = np.diff(axis)
    step = float(d.mean())
    if step <= 0 or np.max(np.abs(d - step)) > 1e-9 * max(1.0, abs(step)):
        raise StructuralError(f"{name} axis must be uniform and increasing")
    return step


@dataclass(frozen=True, eq=False)
class PhaseSpaceGrid:
    """Non-negative density samples on a uniform (mu_x, mu_p) grid.

    ``values[i, j]`` is the density at ``(x[i], p[j])``; integrals are
    Riemann sums with cell measure ``hx * hp``.
    """

    values: np.ndarray
    x: np.ndarray
    p: np.ndarray
    lam: float = 1.0
    hx: float = field(init=False)
    hp: float = field(init=False)

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        p = np.array(self.p, dtype=float)
        v = np.array(self.values, dtype=float)
        if v.shape != (x.size, p.size):
            raise StructuralError(f"values shape {v.shape} does not match axes ({x.size}, {p.size})")
        if not np.all(np.isfinite(v)):
            raise ValidationError("grid values must be finite")
        if v.min(initial=0.0) < -NEG_CLIP:
            raise ValidationError(f"grid values must be non-negative (min {v.min():.3e})")
        v = np.clip(v, 0.0, None)
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValidationError("grid length scale must be positive")
        for a in (x, p, v):
            a.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "hx", _uniform_step(x, "x"))
        object.__setattr__(self, "hp", _uniform_step(p, "p"))
        if self.mass > 1 + 1e-6:
            raise ValidationError(f"grid mass {self.mass:.8f} exceeds 1")

    @property
    def cell_area(self) -> float:
        return self.hx * self.hp

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.cell_area)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_values(self, values: np.ndarray) -> "PhaseSpaceGrid":
        return PhaseSpaceGrid(values, self.x, self.p, self.lam)

    def restricted(self, region: Region, renormalize: bool = False) -> "PhaseSpaceGrid":
        """Zero the density outside ``region``; optionally divide by the retained mass."""
        v = np.where(region.mask(self.x, self.p), self.values, 0.0)
        if renormalize:
            m = v.sum() * self.cell_area
            if m <= 0:
                raise ValidationError("region carries no probability mass")
            v = v / m
        return self.with_values(v)

    def same_axes(self, other: "PhaseSpaceGrid") -> bool:
        return (
            self.x.shape == other.x.shape
            and self.p.shape == other.p.shape
            and np.allclose(self.x, other.x, rtol=0, atol=1e-12)
            and np.allclose(self.p, other.p, rtol=0, atol=1e-12)
        )


def default_axes(lam: float = 1.0, points: int = DEFAULT_POINTS, extent: float = DEFAULT_EXTENT):
    """Axes spanning [-extent lam, extent lam] x [-extent/lam, extent/lam]."""
    return np.linspace(-extent * lam, extent * lam, points), np.linspace(-extent / lam, extent / lam, points)


AXIS_PROFILES = {"default": (0.1, 6.5), "fine": (0.05, 9.0)}


def axes_for_state(state: StateVector, profile: str = "default", centre=(0.0, 0.0)):
    """Axes wide enough for the moment tails of ``state``.

    The half-width grows with the classical turning radius sqrt(2l+1) of the
    highest occupied level l; spacing is fixed per profile. Never narrower
    than the default +-8 lam window.
    """
    try:
        step, margin = AXIS_PROFILES[profile]
    except KeyError:
        raise ValidationError(f"unknown axis profile {profile!r}; choose from {sorted(AXIS_PROFILES)}") from None
    l = max(state.max_level, 0)
    extent = max(DEFAULT_EXTENT, np.sqrt(2 * l + 1) + margin)
    n = int(np.ceil(extent / step))
    u = np.arange(-n, n + 1) * step
    lam = state.lam
    return centre[0] + u * lam, centre[1] + u / lam


# ---------------------------------------------------------------- coherent states


def coherent_wavefunction(label: CoherentLabel, x_prime):
    """<x'|x, p; lam>; vectorized over ``x_prime``."""
    lam, x0, p0 = label.lam, label.x, label.p
    xp = np.asarray(x_prime, dtype=float)
    out = (np.pi * lam**2) ** -0.25 * np.exp(-((xp - x0) ** 2) / (2 * lam**2) + 1j * p0 * xp - 0.5j * p0 * x0)
    return complex(out) if out.ndim == 0 else out


def coherent_amplitudes(z, dim: int) -> np.ndarray:
    """exp(-|z|^2/2) z^n / sqrt(n!) for n < dim; ``z`` may be an array (extra leading axes)."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape + (dim,), dtype=complex)
    term = np.exp(-0.5 * np.abs(z) ** 2).astype(complex)
    out[..., 0] = term
    for n in range(1, dim):
        term = term * z / np.sqrt(n)
        out[..., n] = term
    return out


def coherent_fock_coefficients(
    label: CoherentLabel, dim: int, points: int = 4096, leak_tol: float = 1e-8
) -> StateVector:
    """Number-basis coefficients of |x, p; lam> by quadrature against Hermite functions.

    Raises AccuracyError when more than ``leak_tol`` of the norm lies above
    level ``dim - 1``.
    """
    lam = label.lam
    half = max(abs(label.x) + 12 * lam, lam * (np.sqrt(2 * dim + 1) + 10))
    xs = np.linspace(-half, half, points, endpoint=False)
    dx = xs[1] - xs[0]
    h = hermite_functions(dim - 1, xs, lam)
    c = h @ coherent_wavefunction(label, xs) * dx
    leak = 1.0 - float(np.sum(np.abs(c) ** 2))
    if leak > leak_tol:
        raise AccuracyError(f"coherent state leaks {leak:.3e} of its norm above level {dim - 1}", defect=leak)
    return StateVector(c, lam)


# ---------------------------------------------------------------- Husimi function


def husimi_values(state: StateVector, x, p) -> np.ndarray:
    """Q on the outer product of axes ``x`` and ``p`` (no coverage checks)."""
    lam = state.lam
    z = complex_coordinate(np.asarray(x)[:, None], np.asarray(p)[None, :], lam)
    zc = np.conj(z)
    amps = state.amplitudes
    top = state.max_level
    acc = np.zeros(z.shape, dtype=complex)
    term = np.ones(z.shape, dtype=complex)
    for n in range(top + 1):
        if n:
            term = term * zc / np.sqrt(n)
        if amps[n] != 0:
            acc += amps[n] * term
    return np.abs(acc) ** 2 * np.exp(-np.abs(z) ** 2) / (2 * np.pi)


def husimi_q(state: StateVector, x=None, p=None, lam: float | None = None, mass_tol: float = Q_MASS_TOL) -> PhaseSpaceGrid:
    """Husimi function of a normalized state on the given (or default) axes.

    Raises AccuracyError if the grid misses more than ``mass_tol`` of the
    probability.
    """
    if lam is not None and lam != state.lam:
        raise ScaleMismatchError(f"requested Q at scale {lam} for a state built at {state.lam}")
    if not state.is_normalized(1e-10):
        raise ValidationError(f"state must be normalized (norm {state.norm:.12f})")
    if x is None or p is None:
        dx, dp = axes_for_state(state)
        x = dx if x is None else x
        p = dp if p is None else p
    grid = PhaseSpaceGrid(husimi_values(state, x, p), x, p, state.lam)
    if abs(grid.mass - 1) > mass_tol:
        raise AccuracyError(f"Husimi grid captures mass {grid.mass:.8f}; widen the axes", defect=1 - grid.mass)
    return grid


# ---------------------------------------------------------------- moments


@dataclass(frozen=True, eq=False)
class MomentTable:
    """moments[m, n] = integral of z^m conj(z)^n; NaN where m + n > max_order."""

    moments: np.ndarray
    max_order: int

    def defined(self) -> np.ndarray:
        m, n = np.indices(self.moments.shape)
        return m + n <= self.max_order

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        d = self.defined()
        diff = np.abs(self.moments - self.moments.T.conj())[d]
        return bool(diff.max(initial=0.0) <= tol * max(1.0, np.nanmax(np.abs(self.moments))))


def q_moment_operator(state: StateVector, m: int, n: int) -> complex:
    """<psi| a^m a^+^n |psi> by matrix application on the truncated space."""
    if m < 0 or n < 0:
        raise ValidationError("moment orders must be non-negative")
    if state.max_level > state.dim - 1 - max(m, n):
        raise AccuracyError(
            f"state reaches level {state.max_level}; orders ({m},{n}) need support <= {state.dim - 1 - max(m, n)}"
        )
    if state.dim < 2:
        return complex(np.vdot(state.amplitudes, state.amplitudes)) if m == n == 0 else 0j
    _, ad = ladder_operators(state.dim, state.lam)
    v = state.amplitudes
    right = v
    for _ in range(n):
        right = ad.entries @ right
    left = v
    for _ in range(m):
        left = ad.entries @ left
    return complex(np.vdot(left, right))


def _tail_estimate(g: PhaseSpaceGrid, weight: np.ndarray) -> float:
    ring = np.zeros(g.shape, dtype=bool)
    ring[[0, -1], :] = True
    ring[:, [0, -1]] = True
    return float(np.sum(np.abs(weight[ring]) * g.values[ring]) * g.cell_area)


def grid_moment(g: PhaseSpaceGrid, m: int, n: int, tail_tol: float = TAIL_TOL) -> complex:
    """Quadrature of z^m conj(z)^n against the grid density.

    The contribution of the outermost ring of cells is used as a proxy for
    the truncated tail; it must stay below ``tail_tol``.
    """
    if g.mass < 1 - Q_MASS_TOL:
        raise AccuracyError(f"grid mass {g.mass:.8f} too small for moment quadrature", defect=1 - g.mass)
    z = complex_coordinate(g.x[:, None], g.p[None, :], g.lam)
    w = z**m * np.conj(z) ** n
    tail = _tail_estimate(g, w)
    if tail > tail_tol:
        raise AccuracyError(f"order ({m},{n}) moment tail estimate {tail:.2e} exceeds {tail_tol:.0e}", defect=tail)
    return complex(np.sum(w * g.values) * g.cell_area)


def moment_table(g: PhaseSpaceGrid, max_order: int = DEFAULT_MAX_ORDER) -> MomentTable:
    out = np.full((max_order + 1, max_order + 1), np.nan, dtype=complex)
    for m in range(max_order + 1):
        for n in range(max_order + 1 - m):
            out[m, n] = grid_moment(g, m, n)
    return MomentTable(out, max_order)


def operator_moment_table(state: StateVector, max_order: int = DEFAULT_MAX_ORDER) -> MomentTable:
    out = np.full((max_order + 1, max_order + 1), np.nan, dtype=complex)
    for m in range(max_order + 1):
        for n in range(max_order + 1 - m):
            out[m, n] = q_moment_operator(state, m, n)
    return MomentTable(out, max_order)


def moment_growth_bound(l: int, n: int) -> float:
    """(n + l)! / l!, the bound on <psi|a^n a^+^n|psi> for psi on levels <= l."""
    if l < 0 or n < 0:
        raise ValidationError("l and n must be non-negative")
    exact = math.perm(n + l, n)
    try:
        return float(exact)
    except OverflowError as exc:
        raise RangeError(f"({n}+{l})!/{l}! overflows a double; use log_moment_growth_bound") from exc


def log_moment_growth_bound(l: int, n: int) -> float:
    if l < 0 or n < 0:
        raise ValidationError("l and n must be non-negative")
    return math.lgamma(n + l + 1) - math.lgamma(l + 1)


# ---------------------------------------------------------------- characteristic function


def characteristic_function(g: PhaseSpaceGrid, kx: float, kp: float) -> complex:
    """Integral of exp[i (kx mu_x + kp mu_p)] against the grid density."""
    ex = np.exp(1j * kx * g.x)
    ep = np.exp(1j * kp * g.p)
    return complex(ex @ g.values @ ep * g.cell_area)


def default_k_samples(lam: float = 1.0) -> list[tuple[float, float]]:
    ks = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)
    return [(a / lam, b * lam) for a in ks for b in ks]


def l1_distance(a: PhaseSpaceGrid, b: PhaseSpaceGrid) -> float:
    _check_comparable(a, b)
    return float(np.abs(a.values - b.values).sum() * a.cell_area)


def _check_comparable(a: PhaseSpaceGrid, b: PhaseSpaceGrid):
    if not a.same_axes(b):
        raise StructuralError("grids are defined on different axes")
    if a.lam != b.lam:
        raise ScaleMismatchError(f"grids interpreted at different scales: {a.lam} vs {b.lam}")


@dataclass(frozen=True)
class EqualityReport:
    moment_distance: float
    charfn_distance: float
    l1_distance: float
    verdict: str
    max_order: int
    n_k_samples: int
    moment_tol: float
    charfn_tol: float
    l1_tol: float

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "moment_distance": self.moment_distance,
            "charfn_distance": self.charfn_distance,
            "l1_distance": self.l1_distance,
            "verdict": self.verdict,
            "max_order": self.max_order,
            "n_k_samples": self.n_k_samples,
            "tolerances": {"moment": self.moment_tol, "charfn": self.charfn_tol, "l1": self.l1_tol},
        }


def measure_equality_oracle(
    a: PhaseSpaceGrid,
    b: PhaseSpaceGrid,
    max_order: int = DEFAULT_MAX_ORDER,
    k_samples=None,
    moment_tol: float = 1e-4,
    charfn_tol: float = 1e-5,
    l1_tol: float = 1e-3,
) -> EqualityReport:
    """Decide whether two planar distributions are the same measure.

    Verdict ``"equal"`` needs moments, characteristic-function samples and
    the L1 distance all within tolerance. Agreement of the moments alone is
    reported as ``"moments-only"``, since equal moments do not by themselves
    force equal measures.
    """
    _check_comparable(a, b)
    if k_samples is None:
        k_samples = default_k_samples(a.lam)
    ta, tb = moment_table(a, max_order), moment_table(b, max_order)
    d = ta.defined()
    mdist = float(np.max(np.abs(ta.moments[d] - tb.moments[d])))
    cdist = max((abs(characteristic_function(a, kx, kp) - characteristic_function(b, kx, kp)) for kx, kp in k_samples), default=0.0)
    l1 = l1_distance(a, b)
    moments_ok = mdist < moment_tol
    if moments_ok and cdist < charfn_tol and l1 < l1_tol:
        verdict = "equal"
    elif moments_ok:
        verdict = "moments-only"
    else:
        verdict = "unequal"
    return EqualityReport(mdist, float(cdist), l1, verdict, max_order, len(k_samples), moment_tol, charfn_tol, l1_tol)


# ---------------------------------------------------------------- coherent mixtures


def p_mixture_density(weights: PhaseSpaceGrid, lam_f: float, dim: int, mass_tol: float = 1e-6, trace_tol: float = 1e-4) -> np.ndarray:
    """Density matrix sum_cells w |x,p;lam_f><x,p;lam_f| hx hp in the number basis.

    Only coherent-state mixtures are handled: the weights play the role of a
    P function that is an honest probability density.
    """
    if abs(weights.mass - 1) > mass_tol:
        raise ValidationError(f"mixture weights must have unit mass (got {weights.mass:.10f})")
    ii, jj = np.nonzero(weights.values)
    z = complex_coordinate(weights.x[ii], weights.p[jj], lam_f)
    c = coherent_amplitudes(z, dim)
    w = weights.values[ii, jj] * weights.cell_area
    rho = (c.T * w) @ c.conj()
    rho = 0.5 * (rho + rho.conj().T)
    tr = float(np.trace(rho).real)
    if abs(tr - 1) > trace_tol:
        raise AccuracyError(f"mixture trace {tr:.8f} deviates from 1; increase dim", defect=1 - tr)
    return rho


def trace_distance(r1: np.ndarray, r2: np.ndarray) -> float:
    if r1.shape != r2.shape:
        raise StructuralError("density matrices have different shapes")
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(r1 - r2))))


def fidelity_with_pure(rho: np.ndarray, vec: np.ndarray) -> float:
    """<v|rho|v> for a normalized vector ``v``."""
    return float(np.vdot(vec, rho @ vec).real)


# ---------------------------------------------------------------- serialization


def grid_to_json(g: PhaseSpaceGrid, extra: dict | None = None) -> str:
    doc = {
        "schema": SCHEMA,
        "lambda": g.lam,
        "x": g.x.tolist(),
        "p": g.p.tolist(),
        "values": g.values.tolist(),
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc)


def grid_from_json(text: str) -> PhaseSpaceGrid:
    doc = json.loads(text)
    try:
        return PhaseSpaceGrid(np.array(doc["values"], dtype=float), np.array(doc["x"]), np.array(doc["p"]), float(doc["lambda"]))
    except KeyError as exc:
        raise ValidationError(f"grid JSON missing field {exc}") from exc


def grid_to_csv(g: PhaseSpaceGrid) -> str:
    buf = io.StringIO()
    buf.write(f"# {SCHEMA} lambda={g.lam!r} nx={g.x.size} np={g.p.size}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mu_x", "mu_p", "value"])
    for i, xv in enumerate(g.x):
        for j, pv in enumerate(g.p):
            w.writerow([repr(float(xv)), repr(float(pv)), repr(float(g.values[i, j]))])
    return buf.getvalue()


def grid_from_csv(text: str) -> PhaseSpaceGrid:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValidationError("grid CSV must start with a '# phasemeter/1 ...' metadata row")
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split() if "=" in tok)
    try:
        lam, nx, n_p = float(meta["lambda"]), int(meta["nx"]), int(meta["np"])
    except KeyError as exc:
        raise ValidationError(f"grid CSV metadata missing {exc}") from exc
    rows = list(csv.reader(lines[2:]))
    if len(rows) != nx * n_p:
        raise StructuralError(f"grid CSV has {len(rows)} rows, expected {nx * n_p}")
    data = np.array(rows, dtype=float)
    x = data[::n_p, 0]
    p = data[:n_p, 1]
    return PhaseSpaceGrid(data[:, 2].reshape(nx, n_p), x, p, lam)
