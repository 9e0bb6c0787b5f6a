"""
Arthurs-Kelly simultaneous measurement of position and momentum.

The system (coordinate x) couples to two pointers (y1, y2) through
H = kappa (x P1 + p P2) acting for unit time. Because [A, B] with
A = -i kappa x P1, B = -i kappa p P2 is the c-number-free pointer term
-i kappa^2 P1 P2, which commutes with both, the propagator factorizes exactly:

    U = exp(A) exp(B) exp(i kappa^2 P1 P2 / 2).

Each factor is diagonal in a mixed position/momentum representation and is
applied with FFTs, so the only error is the grid discretization.

Heisenberg picture after the interaction (calibrated readouts
mu_X = Y1/kappa, mu_P = Y2/kappa):

    mu_X = x + Y1/kappa + kappa P2/2      x_f = x + kappa P2
    mu_P = p + Y2/kappa - kappa P1/2      p_f = p - kappa P1

so the retrodictive errors Y1/kappa + kappa P2/2, Y2/kappa - kappa P1/2 and
the predictive errors Y1/kappa - kappa P2/2, Y2/kappa + kappa P1/2 act on the
pointers only. For Gaussian pointers with position standard deviations s1, s2
both error products equal
sqrt((s1^2/k^2 + k^2/(16 s2^2)) (s2^2/k^2 + k^2/(16 s1^2))), which reaches
1/2 exactly when s1 = kappa lam / 2 and s2 = kappa / (2 lam). The resolution
of the optimal process is then lam for retrodiction and prediction alike.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft

from .errors import AccuracyError, ValidationError
from .fock import OperatorMatrix, StateVector, hermite_functions, wavefunction
from .phasespace import PhaseSpaceGrid, Region, SCHEMA

log = logging.getLogger(__name__)

# (points per axis, half-extent in combined widths)
PROFILES = {"default": (160, 10.0), "fine": (256, 12.0)}
MIN_POINTS_PER_WIDTH = 8
MIN_EXTENT_WIDTHS = 6.0
NORM_LEAK_TOL = 1e-8
UNITARITY_TOL = 1e-6
EDGE_MASS_TOL = 1e-8
REGIMES = ("retrodictive", "predictive")
MEMORY_BUDGET = 1.5e9


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid for (x, y1, y2): ``points[i]`` samples on [-half[i], half[i])."""

    points: tuple[int, int, int]
    half_extent: tuple[float, float, float]

    def __post_init__(self):
        if len(self.points) != 3 or len(self.half_extent) != 3:
            raise ValidationError("grid spec needs three axes (x, y1, y2)")
        if any(int(n) < 8 for n in self.points):
            raise ValidationError("grid needs at least 8 points per axis")
        if any(not (h > 0 and np.isfinite(h)) for h in self.half_extent):
            raise ValidationError("grid half-extents must be positive")
        object.__setattr__(self, "points", tuple(int(n) for n in self.points))
        object.__setattr__(self, "half_extent", tuple(float(h) for h in self.half_extent))

    def axis(self, i: int) -> np.ndarray:
        n, h = self.points[i], self.half_extent[i]
        return -h + np.arange(n) * (2 * h / n)

    def step(self, i: int) -> float:
        return 2 * self.half_extent[i] / self.points[i]


def combined_widths(lam: float, coupling: float, sigma1: float, sigma2: float) -> tuple[float, float, float]:
    """Natural length of each axis.

    x must hold the final system position x + kappa P2, whose spread adds
    kappa/(2 sigma2) to lam in quadrature; the pointer axes hold the
    calibrated readout spreads.
    """
    return float(np.hypot(lam, coupling / (2 * sigma2))), max(coupling * lam, 2 * sigma1), max(coupling / lam, 2 * sigma2)


def grid_for(lam: float, coupling: float, sigma1: float, sigma2: float, profile: str = "default") -> GridSpec:
    try:
        points, extent = PROFILES[profile]
    except KeyError:
        raise ValidationError(f"unknown grid profile {profile!r}; choose from {sorted(PROFILES)}") from None
    w = combined_widths(lam, coupling, sigma1, sigma2)
    return GridSpec((points,) * 3, tuple(extent * wi for wi in w))


@dataclass(frozen=True)
class MeasurementConfig:
    pointer_width1: float
    pointer_width2: float
    coupling: float = 1.0
    lam_target: float = 1.0
    grid: GridSpec | None = None
    profile: str = "default"
    offset_x: float = 0.0
    offset_p: float = 0.0

    def __post_init__(self):
        for name in ("pointer_width1", "pointer_width2", "lam_target"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive, got {v}")
        if not (np.isfinite(self.coupling) and self.coupling >= 0):
            raise ValidationError(f"coupling must be non-negative, got {self.coupling}")
        if self.profile not in PROFILES:
            raise ValidationError(f"unknown grid profile {self.profile!r}")

    def resolved_grid(self) -> GridSpec:
        if self.grid is not None:
            return self.grid
        return grid_for(self.lam_target, self.coupling, self.pointer_width1, self.pointer_width2, self.profile)

    def to_dict(self) -> dict:
        g = self.resolved_grid()
        return {
            "pointer_width1": self.pointer_width1,
            "pointer_width2": self.pointer_width2,
            "coupling": self.coupling,
            "lam_target": self.lam_target,
            "profile": self.profile,
            "offset_x": self.offset_x,
            "offset_p": self.offset_p,
            "grid": {"points": list(g.points), "half_extent": list(g.half_extent)},
        }


def optimal_widths(lam: float, coupling: float = 1.0) -> tuple[float, float]:
    """Pointer widths making the process unbiased with error products hbar/2."""
    return coupling * lam / 2, coupling / (2 * lam)


def optimal_config(lam: float = 1.0, coupling: float = 1.0, profile: str = "default", **kw) -> MeasurementConfig:
    s1, s2 = optimal_widths(lam, coupling)
    return MeasurementConfig(s1, s2, coupling, lam, profile=profile, **kw)


def detuned_config(lam: float = 1.0, ratio: float = 1.5, coupling: float = 1.0, profile: str = "default") -> MeasurementConfig:
    """Optimal config with the first pointer widened by ``ratio``."""
    base = optimal_config(lam, coupling, profile)
    return replace(base, pointer_width1=base.pointer_width1 * ratio)


def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MeasurementProcess:
    config: MeasurementConfig
    grid: GridSpec
    x: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    kx: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    calibration: float
    _shear: np.ndarray = field(repr=False)
    _kick: np.ndarray = field(repr=False)
    _shift: np.ndarray = field(repr=False)

    @property
    def lam(self) -> float:
        return self.config.lam_target

    @property
    def volume_element(self) -> float:
        return self.grid.step(0) * self.grid.step(1) * self.grid.step(2)

    @property
    def mu_x(self) -> np.ndarray:
        return self.calibration * self.y1

    @property
    def mu_p(self) -> np.ndarray:
        return self.calibration * self.y2

    def apparatus_state(self) -> np.ndarray:
        return self.phi1[:, None] * self.phi2[None, :]

    def apply_unitary(self, psi: np.ndarray, inverse: bool = False) -> np.ndarray:
        """Apply U (or U^dagger) to a (x, y1, y2) array; the input buffer is consumed."""
        if not inverse:
            psi = sfft.fftn(psi, axes=(1, 2), overwrite_x=True)
            psi *= self._shear
            psi = sfft.fft(psi, axis=0, overwrite_x=True)
            psi *= self._kick
            psi = sfft.ifft(psi, axis=0, overwrite_x=True)
            psi *= self._shift
            return sfft.ifftn(psi, axes=(1, 2), overwrite_x=True)
        psi = sfft.fftn(psi, axes=(1, 2), overwrite_x=True)
        psi *= self._shift.conj()
        psi = sfft.fft(psi, axis=0, overwrite_x=True)
        psi *= self._kick.conj()
        psi = sfft.ifft(psi, axis=0, overwrite_x=True)
        psi *= self._shear.conj()
        return sfft.ifftn(psi, axes=(1, 2), overwrite_x=True)


def _gaussian(y: np.ndarray, centre: float, sigma: float) -> np.ndarray:
    return (2 * np.pi * sigma**2) ** -0.25 * np.exp(-((y - centre) ** 2) / (4 * sigma**2)) + 0j


def build_process(cfg: MeasurementConfig) -> MeasurementProcess:
    """Assemble the grid, pointer states and exact propagator factors.

    Raises ValidationError when a pointer Gaussian is under-resolved (fewer
    than 8 samples across its amplitude half-width 2 sigma) or the grid does
    not extend 6 combined widths.
    """
    g = cfg.resolved_grid()
    kappa = cfg.coupling
    widths = combined_widths(cfg.lam_target, kappa, cfg.pointer_width1, cfg.pointer_width2)
    for i, name in enumerate(("x", "y1", "y2")):
        if g.half_extent[i] < MIN_EXTENT_WIDTHS * widths[i] * (1 - 1e-12):
            raise ValidationError(f"{name} axis covers {g.half_extent[i] / widths[i]:.2f} widths; need {MIN_EXTENT_WIDTHS}")
    for i, s, name in ((1, cfg.pointer_width1, "pointer_width1"), (2, cfg.pointer_width2, "pointer_width2")):
        per = 2 * s / g.step(i)
        if per < MIN_POINTS_PER_WIDTH * (1 - 1e-12):
            raise ValidationError(f"resolution error: {name}={s} spans {per:.2f} grid points, need {MIN_POINTS_PER_WIDTH}")
    x, y1, y2 = (g.axis(i) for i in range(3))
    kx, k1, k2 = (2 * np.pi * sfft.fftfreq(g.points[i], g.step(i)) for i in range(3))
    cal = 1.0 / kappa if kappa > 0 else 1.0
    phi1 = _gaussian(y1, cfg.offset_x / cal, cfg.pointer_width1)
    phi2 = _gaussian(y2, cfg.offset_p / cal, cfg.pointer_width2)
    shear = np.exp(0.5j * kappa**2 * k1[:, None] * k2[None, :])[None, :, :]
    kick = np.exp(-1j * kappa * kx[:, None] * k2[None, :])[:, None, :]
    shift = np.exp(-1j * kappa * x[:, None] * k1[None, :])[:, :, None]
    arrays = [_readonly(a) for a in (x, y1, y2, kx, k1, k2, phi1, phi2, shear, kick, shift)]
    return MeasurementProcess(cfg, g, *arrays[:8], cal, *arrays[8:])


@dataclass(frozen=True, eq=False)
class JointWavefunction:
    amplitudes: np.ndarray
    process: MeasurementProcess

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.process.volume_element))


def system_wavefunction(process: MeasurementProcess, state: StateVector) -> np.ndarray:
    """Samples of ``state`` on the x axis, checked for grid leakage."""
    if state.lam != process.lam:
        log.debug("state scale %s differs from process resolution %s", state.lam, process.lam)
    psi = wavefunction(state, process.x)
    leak = abs(np.sum(np.abs(psi) ** 2) * process.grid.step(0) - state.norm**2)
    if leak > NORM_LEAK_TOL:
        raise AccuracyError(f"state is not representable on the x grid (norm defect {leak:.2e})", defect=leak)
    return psi


def _product(process: MeasurementProcess, psi_x: np.ndarray) -> np.ndarray:
    return psi_x[:, None, None] * process.phi1[None, :, None] * process.phi2[None, None, :]


def _edge_mass(process: MeasurementProcess, psi: np.ndarray, frac: float = 0.02) -> float:
    dens = np.abs(psi) ** 2
    total = 0.0
    for axis in range(3):
        n = psi.shape[axis]
        k = max(1, int(round(frac * n)))
        idx = np.r_[0:k, n - k : n]
        total = max(total, float(np.take(dens, idx, axis=axis).sum() * process.volume_element))
    return total


def evolve(process: MeasurementProcess, state: StateVector) -> JointWavefunction:
    """U |psi (x) phi_ap> on the joint grid.

    Raises AccuracyError if the input does not fit the x grid, if the norm
    drifts by more than 1e-6, or if more than 1e-8 of the probability ends up
    in the outer 2% of any axis (wrap-around risk).
    """
    psi = _product(process, system_wavefunction(process, state))
    n0 = np.sum(np.abs(psi) ** 2) * process.volume_element
    psi = process.apply_unitary(psi)
    n1 = np.sum(np.abs(psi) ** 2) * process.volume_element
    if abs(n1 - n0) > UNITARITY_TOL:
        raise AccuracyError(f"unitarity violation: norm {n0:.10f} -> {n1:.10f}", defect=n1 - n0)
    edge = _edge_mass(process, psi)
    if edge > EDGE_MASS_TOL:
        raise AccuracyError(f"evolved state reaches the grid boundary (edge mass {edge:.2e}); enlarge the grid", defect=edge)
    psi.setflags(write=False)
    return JointWavefunction(psi, process)


def pointer_distribution(J: JointWavefunction, mass_tol: float = 1e-4) -> PhaseSpaceGrid:
    """Density of the calibrated readouts (mu_X, mu_P), marginalized over x."""
    proc = J.process
    dens = np.sum(np.abs(J.amplitudes) ** 2, axis=0) * proc.grid.step(0)
    dens /= proc.calibration**2
    grid = PhaseSpaceGrid(dens, proc.mu_x, proc.mu_p, proc.lam)
    if abs(grid.mass - 1) > mass_tol:
        raise AccuracyError(f"pointer distribution mass {grid.mass:.8f}; grid coverage insufficient", defect=1 - grid.mass)
    return grid


# ---------------------------------------------------------------- error operators


def _apply_momentum(process: MeasurementProcess, psi: np.ndarray) -> np.ndarray:
    out = sfft.fft(psi, axis=0)
    out *= process.kx[:, None, None]
    return sfft.ifft(out, axis=0, overwrite_x=True)


def _readout(process: MeasurementProcess, which: str, psi: np.ndarray) -> np.ndarray:
    if which == "X":
        return psi * process.mu_x[None, :, None]
    return psi * process.mu_p[None, None, :]


def _system_observable(process: MeasurementProcess, which: str, psi: np.ndarray) -> np.ndarray:
    if which == "X":
        return psi * process.x[:, None, None]
    return _apply_momentum(process, psi)


def _error_vectors(process: MeasurementProcess, v: np.ndarray, regime: str, which=("X", "P")) -> dict:
    """Error operators applied to the joint vector ``v`` (Schrodinger-picture arrays)."""
    if regime not in REGIMES:
        raise ValidationError(f"regime must be one of {REGIMES}, got {regime!r}")
    uv = process.apply_unitary(v.copy())
    out = {}
    for w in which:
        if regime == "retrodictive":
            e = process.apply_unitary(_readout(process, w, uv), inverse=True)
            e -= _system_observable(process, w, v)
        else:
            e = process.apply_unitary(_readout(process, w, uv) - _system_observable(process, w, uv), inverse=True)
        out[w] = e
    return out


def _inner(process, a, b) -> complex:
    return complex(np.vdot(a, b) * process.volume_element)


def _project_system(process: MeasurementProcess, e: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """<m (x) phi_ap | e> for every row m of ``basis`` (real Hermite functions on x)."""
    f = np.einsum("xab,ab->x", e, process.apparatus_state().conj()) * process.grid.step(1) * process.grid.step(2)
    return basis @ f * process.grid.step(0)


def _fock_basis(process: MeasurementProcess, dim: int) -> np.ndarray:
    basis = hermite_functions(dim - 1, process.x, process.lam)
    gram = basis @ basis.T * process.grid.step(0)
    defect = float(np.max(np.abs(gram - np.eye(dim))))
    if defect > 1e-8:
        raise AccuracyError(f"number basis up to level {dim - 1} does not fit the x grid (Gram defect {defect:.2e})", defect=defect)
    return basis


def partial_expectations(process: MeasurementProcess, regime: str, dim: int) -> dict:
    """Partial-expectation matrices of the error operators on levels < dim.

    Returns ``{(w, k): OperatorMatrix}`` for w in "X", "P" and power k in 1, 2,
    where <psi|M|psi> = <psi (x) phi_ap| eps_w^k |psi (x) phi_ap>.
    The second moments are Gram matrices of the vectors eps_w |n (x) phi_ap>.
    When holding both families at once would exceed MEMORY_BUDGET bytes the
    two observables are done in separate passes.
    """
    basis = _fock_basis(process, dim)
    per_vec = 16 * int(np.prod(process.grid.points))
    passes = [("X", "P")] if 2 * dim * per_vec <= MEMORY_BUDGET else [("X",), ("P",)]
    out = {}
    for ws in passes:
        vecs = {w: [] for w in ws}
        first = {w: np.zeros((dim, dim), complex) for w in ws}
        for n in range(dim):
            v = _product(process, basis[n] + 0j)
            ev = _error_vectors(process, v, regime, which=ws)
            for w in ws:
                first[w][:, n] = _project_system(process, ev[w], basis)
                vecs[w].append(ev[w])
            del v, ev
        for w in ws:
            second = np.empty((dim, dim), complex)
            for m in range(dim):
                for n in range(m, dim):
                    second[m, n] = _inner(process, vecs[w][m], vecs[w][n])
                    second[n, m] = np.conj(second[m, n])
            vecs[w].clear()
            out[(w, 1)] = OperatorMatrix(first[w], process.lam)
            out[(w, 2)] = OperatorMatrix(second, process.lam)
    return out


_WHICH = {"Xi": ("retrodictive", "X"), "Pi": ("retrodictive", "P"), "Xf": ("predictive", "X"), "Pf": ("predictive", "P")}


def error_moment_operator(process: MeasurementProcess, which: str, power: int, dim: int = 12) -> OperatorMatrix:
    """System operator M with <psi|M|psi> = <psi (x) phi_ap| eps^power |psi (x) phi_ap>."""
    if which not in _WHICH:
        raise ValidationError(f"which must be one of {sorted(_WHICH)}")
    if power not in (1, 2):
        raise ValidationError("power must be 1 or 2")
    regime, w = _WHICH[which]
    basis = _fock_basis(process, dim)
    mat = np.empty((dim, dim), complex)
    if power == 1:
        for n in range(dim):
            e = _error_vectors(process, _product(process, basis[n] + 0j), regime, which=(w,))[w]
            mat[:, n] = _project_system(process, e, basis)
        return OperatorMatrix(mat, process.lam)
    return partial_expectations(process, regime, dim)[(w, 2)]


@dataclass(frozen=True)
class ErrorReport:
    delta_x: float
    delta_p: float
    product: float
    bias_x: float
    bias_p: float
    resolution_lambda: float
    regime: str
    dim: int
    edge_level_x: int
    edge_level_p: int
    truncation_artifact: bool
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "regime": self.regime,
            "delta_x": self.delta_x,
            "delta_p": self.delta_p,
            "product": self.product,
            "bias_x": self.bias_x,
            "bias_p": self.bias_p,
            "resolution_lambda": self.resolution_lambda,
            "dim": self.dim,
            "edge_level_x": self.edge_level_x,
            "edge_level_p": self.edge_level_p,
            "truncation_artifact": self.truncation_artifact,
            "notes": list(self.notes),
        }


SUP_REL_TOL = 1e-6


def _sup(m: OperatorMatrix) -> tuple[float, int, bool]:
    """Top eigenvalue, level where its eigenvector concentrates, edge flag.

    The flag is raised only if the sup over the full truncated space beats the
    sup over the interior block (levels <= dim-3) by more than SUP_REL_TOL, so
    degenerate spectra (as for the AK process) are not mis-flagged.
    """
    h = 0.5 * (m.entries + m.entries.conj().T)
    vals, vecs = np.linalg.eigh(h)
    top = float(vals[-1])
    level = int(np.argmax(np.abs(vecs[:, -1]) ** 2))
    dim = h.shape[0]
    edge = False
    if dim > 3 and level >= dim - 2:
        inner = float(np.linalg.eigvalsh(h[: dim - 2, : dim - 2])[-1])
        edge = top - inner > SUP_REL_TOL * max(abs(top), 1.0)
    return top, level, edge


def _spectral_radius(m: OperatorMatrix) -> float:
    h = 0.5 * (m.entries + m.entries.conj().T)
    return float(np.max(np.abs(np.linalg.eigvalsh(h))))


def worst_case_errors(process: MeasurementProcess, regime: str = "retrodictive", dim: int = 8, strict: bool = True) -> ErrorReport:
    """Worst-case rms errors as sups over the unit sphere of the truncated space.

    With ``strict`` an eigenvector concentrated at the truncation edge raises
    AccuracyError; otherwise it is only flagged in the report.
    """
    ops = partial_expectations(process, regime, dim)
    vx, lx, ex = _sup(ops[("X", 2)])
    vp, lp, ep = _sup(ops[("P", 2)])
    if strict and (ex or ep):
        raise AccuracyError(f"sup attained at the truncation edge (levels {lx}, {lp} of dim {dim}); unreliable")
    dx, dp = np.sqrt(max(vx, 0.0)), np.sqrt(max(vp, 0.0))
    notes = ("sup over a truncated number basis; the untruncated sup may differ if it grows with dim",)
    return ErrorReport(
        float(dx), float(dp), float(dx * dp),
        _spectral_radius(ops[("X", 1)]), _spectral_radius(ops[("P", 1)]),
        float(np.sqrt(2) * dx), regime, dim, lx, lp, bool(ex or ep), notes,
    )


OPTIMALITY_TOL = 1e-3


def verify_optimal(process: MeasurementProcess, dim: int = 3, tol: float = OPTIMALITY_TOL) -> dict:
    """Check both regimes reach zero bias and error product 1/2 within ``tol``.

    Raises AccuracyError otherwise; returns the two reports.
    """
    reports = {r: worst_case_errors(process, r, dim) for r in REGIMES}
    for r, rep in reports.items():
        worst = max(abs(rep.product - 0.5), rep.bias_x, rep.bias_p)
        if worst > tol:
            raise AccuracyError(
                f"{r} optimality not met: product {rep.product:.6f}, biases {rep.bias_x:.2e}, {rep.bias_p:.2e}", defect=worst
            )
    return reports


def build_optimal_process(lam: float = 1.0, coupling: float = 1.0, profile: str = "default", dim: int = 3) -> MeasurementProcess:
    """Process with the analytic optimal pointer widths, verified numerically before it is returned."""
    proc = build_process(optimal_config(lam, coupling, profile))
    verify_optimal(proc, dim)
    return proc


# ---------------------------------------------------------------- per-state diagnostics


def error_vectors(process: MeasurementProcess, state: StateVector, regime: str = "retrodictive"):
    """(v, eps_X v, eps_P v) for v = |psi (x) phi_ap> on the joint grid."""
    v = _product(process, system_wavefunction(process, state))
    ev = _error_vectors(process, v, regime)
    return v, ev["X"], ev["P"]


def error_expectations(process: MeasurementProcess, state: StateVector, regime: str = "retrodictive") -> dict:
    """Grid-side <eps>, <eps^2> and <[eps_X, eps_P]> for one state."""
    v, ex, ep = error_vectors(process, state, regime)
    cross = _inner(process, ex, ep)
    return {
        "mean_x": _inner(process, v, ex).real,
        "mean_p": _inner(process, v, ep).real,
        "second_x": _inner(process, ex, ex).real,
        "second_p": _inner(process, ep, ep).real,
        "commutator": 2j * cross.imag,
    }


def commutator_expectation(process: MeasurementProcess, state: StateVector, regime: str = "retrodictive") -> complex:
    """<psi (x) phi_ap|[eps_X, eps_P]|psi (x) phi_ap> (-i for optimal retrodiction, +i for prediction)."""
    if not state.is_normalized(1e-10):
        raise ValidationError("state must be normalized")
    _, ex, ep = error_vectors(process, state, regime)
    return 2j * _inner(process, ex, ep).imag


def _residual(process, state, lam, regime, sign) -> float:
    if not state.is_normalized(1e-10):
        raise ValidationError("state must be normalized")
    _, ex, ep = error_vectors(process, state, regime)
    r = (ex / lam + sign * 1j * lam * ep) / np.sqrt(2)
    return float(np.sqrt(np.sum(np.abs(r) ** 2) * process.volume_element))


def c_residual(process: MeasurementProcess, state: StateVector, lam_i: float) -> float:
    """|| c |psi (x) phi_ap> || with c = (eps_Xi/lam - i lam eps_Pi)/sqrt2."""
    return _residual(process, state, lam_i, "retrodictive", -1)


def d_residual(process: MeasurementProcess, state: StateVector, lam_f: float) -> float:
    """|| d |psi (x) phi_ap> || with d = (eps_Xf/lam + i lam eps_Pf)/sqrt2."""
    return _residual(process, state, lam_f, "predictive", +1)


# ---------------------------------------------------------------- conditioning


def condition_on_region(J: JointWavefunction, region: Region, dim: int = 24, trace_tol: float = 1e-6):
    """Post-measurement system state given the readout fell in ``region``.

    Returns ``(rho, p_region)`` with ``rho`` the reduced density matrix in the
    number basis at the process resolution.
    """
    proc = J.process
    mask = region.mask(proc.mu_x, proc.mu_p)
    if not mask.any():
        raise ValidationError("region contains no readout grid points")
    dens = np.sum(np.abs(J.amplitudes[:, mask]) ** 2, axis=0) * proc.grid.step(0)
    p_region = float(dens.sum() * proc.grid.step(1) * proc.grid.step(2))
    if p_region <= 1e-10:
        raise ValidationError(f"region probability {p_region:.2e} too small to condition on")
    basis = _fock_basis(proc, dim)
    amps = basis @ J.amplitudes[:, mask] * proc.grid.step(0)
    rho = amps @ amps.conj().T * (proc.grid.step(1) * proc.grid.step(2) / p_region)
    rho = 0.5 * (rho + rho.conj().T)
    tr = float(np.trace(rho).real)
    if abs(tr - 1) > trace_tol:
        raise AccuracyError(f"conditioned state trace {tr:.9f}; number basis dim={dim} too small", defect=1 - tr)
    return rho, p_region
