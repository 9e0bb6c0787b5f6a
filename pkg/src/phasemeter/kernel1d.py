"""
Position-only measurements described by a kernel K(x, mu; x').

The joint final amplitude is  int dx' K(x, mu; x') psi(x'),  so

    rho(mu)        = int dx | int dx' K psi |^2
    <eps_Xi^2>     = int dx dmu | int dx' (mu - x') K psi |^2 .

All three coordinates (system x, pointer mu, input x') share one uniform
grid. Kernels with a closed form (delta family, Gaussian pointer) are
evaluated without the inner quadrature; arbitrary sampled kernels are
checked for unitarity on a test-function basis before use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import AccuracyError, StructuralError, ValidationError
from .fock import hermite_functions

F_NORM_TOL = 1e-8
UNITARITY_TOL = 1e-6
MASS_TOL = 1e-4


def _step(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 4:
        raise StructuralError("grid must be a 1-D array with at least 4 points")
    d = np.diff(x)
    if np.max(np.abs(d - d[0])) > 1e-9 * abs(d[0]) or d[0] <= 0:
        raise StructuralError("grid must be uniform and increasing")
    return float(d[0])


def uniform_grid(points: int = 1024, half_extent: float = 16.0) -> np.ndarray:
    """Periodic grid on [-half_extent, half_extent)."""
    return -half_extent + np.arange(points) * (2 * half_extent / points)


@dataclass(frozen=True, eq=False)
class DeltaKernel:
    """K = f(x, mu) delta(mu - x' - shift)."""

    f: np.ndarray
    x: np.ndarray
    shift: float = 0.0


@dataclass(frozen=True, eq=False)
class GaussianKernel:
    """K = delta(x - x') g(mu - x'), |g|^2 a normal density of standard deviation ``width``.

    This is the von Neumann pointer coupling exp(-i x P) with a Gaussian
    pointer; its retrodictive rms error is ``width`` for every input state.
    """

    width: float
    x: np.ndarray

    def amplitude(self, u):
        w = self.width
        return (2 * np.pi * w**2) ** -0.25 * np.exp(-(np.asarray(u) ** 2) / (4 * w**2))


@dataclass(frozen=True, eq=False)
class SampledKernel:
    """K[i, j, k] = K(x_i, mu_j; x'_k) on a shared grid."""

    K: np.ndarray
    x: np.ndarray


def delta_kernel(f, x, shift: float = 0.0) -> DeltaKernel:
    """Perfect-accuracy kernel f(x, mu) delta(mu - x' - shift).

    ``f`` is sampled on (x, mu) and must satisfy int dx |f(x, mu)|^2 = 1 for
    every mu, which is what unitarity of the interaction requires.
    """
    x = np.asarray(x, dtype=float)
    dx = _step(x)
    f = np.asarray(f, dtype=complex)
    if f.shape != (x.size, x.size):
        raise StructuralError(f"f must have shape ({x.size}, {x.size}), got {f.shape}")
    col = np.sum(np.abs(f) ** 2, axis=0) * dx
    bad = float(np.max(np.abs(col - 1)))
    if bad > F_NORM_TOL:
        raise ValidationError(f"invalid f: int dx |f|^2 deviates from 1 by {bad:.3e}")
    f = f.copy()
    f.setflags(write=False)
    return DeltaKernel(f, x, float(shift))


def gaussian_kernel(width: float, x) -> GaussianKernel:
    x = np.asarray(x, dtype=float)
    dx = _step(x)
    if not (np.isfinite(width) and width >= dx):
        raise ValidationError(
            f"Gaussian kernel width {width} must be at least the grid spacing {dx}; use delta_kernel for the sharp limit"
        )
    return GaussianKernel(float(width), x)


def sampled_kernel(K, x, n_test: int = 8) -> SampledKernel:
    """Wrap a sampled kernel after checking it maps orthonormal test functions
    to orthonormal joint amplitudes (to 1e-6)."""
    x = np.asarray(x, dtype=float)
    dx = _step(x)
    K = np.asarray(K, dtype=complex)
    if K.shape != (x.size,) * 3:
        raise StructuralError(f"sampled kernel must have shape {(x.size,) * 3}, got {K.shape}")
    scale = (x[-1] - x[0]) / 24
    centre = 0.5 * (x[0] + x[-1])
    tests = hermite_functions(n_test - 1, x - centre, scale)
    out = np.einsum("ijk,nk->nij", K, tests) * dx
    gram = np.einsum("nij,mij->nm", out.conj(), out) * dx * dx
    defect = float(np.max(np.abs(gram - np.eye(n_test))))
    if defect > UNITARITY_TOL:
        raise ValidationError(f"invalid kernel: unitarity defect {defect:.3e} on the test basis")
    K = K.copy()
    K.setflags(write=False)
    return SampledKernel(K, x)


def sampled_from_gaussian(width: float, x) -> np.ndarray:
    """Sampled array of the Gaussian kernel with the x-delta as 1/dx on the diagonal."""
    gk = gaussian_kernel(width, x)
    dx = _step(gk.x)
    g = gk.amplitude(gk.x[None, :] - gk.x[:, None])  # [x', mu]
    K = np.zeros((x.size,) * 3, dtype=complex)
    idx = np.arange(x.size)
    K[idx, :, idx] = g / dx
    return K


def fourier_shift(psi: np.ndarray, dx: float, s: float) -> np.ndarray:
    """psi(x - s) by band-limited interpolation."""
    k = 2 * np.pi * sfft.fftfreq(psi.size, dx)
    return sfft.ifft(sfft.fft(psi) * np.exp(-1j * k * s))


def _check_psi(psi, x):
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != x.shape:
        raise StructuralError("wavefunction must be sampled on the kernel grid")
    n = float(np.sum(np.abs(psi) ** 2) * _step(x))
    if abs(n - 1) > 1e-6:
        raise ValidationError(f"wavefunction must be normalized on the grid (norm^2 = {n:.8f})")
    return psi


def outcome_distribution(kernel, psi) -> np.ndarray:
    """rho(mu) on the kernel grid."""
    x = kernel.x
    dx = _step(x)
    psi = _check_psi(psi, x)
    if isinstance(kernel, DeltaKernel):
        fn = np.sum(np.abs(kernel.f) ** 2, axis=0) * dx
        shifted = psi if kernel.shift == 0 else fourier_shift(psi, dx, kernel.shift)
        rho = fn * np.abs(shifted) ** 2
    elif isinstance(kernel, GaussianKernel):
        g2 = np.abs(kernel.amplitude(x[None, :] - x[:, None])) ** 2  # [x, mu]
        rho = (np.abs(psi) ** 2) @ g2 * dx
    elif isinstance(kernel, SampledKernel):
        amp = np.einsum("ijk,k->ij", kernel.K, psi) * dx
        rho = np.sum(np.abs(amp) ** 2, axis=0) * dx
    else:
        raise ValidationError(f"unsupported kernel type {type(kernel).__name__}")
    mass = float(rho.sum() * dx)
    if abs(mass - 1) > MASS_TOL:
        raise AccuracyError(f"outcome distribution mass {mass:.8f}; widen the grid", defect=1 - mass)
    return rho


def retro_error(kernel, psi) -> float:
    """Retrodictive rms error sqrt(<eps_Xi^2>) for the input ``psi``."""
    x = kernel.x
    dx = _step(x)
    psi = _check_psi(psi, x)
    if isinstance(kernel, DeltaKernel):
        fn = np.sum(np.abs(kernel.f) ** 2, axis=0) * dx
        shifted = psi if kernel.shift == 0 else fourier_shift(psi, dx, kernel.shift)
        val = kernel.shift**2 * np.sum(fn * np.abs(shifted) ** 2) * dx
    elif isinstance(kernel, GaussianKernel):
        u = x[None, :] - x[:, None]
        w2 = u**2 * np.abs(kernel.amplitude(u)) ** 2
        val = np.sum((np.abs(psi) ** 2) @ w2) * dx * dx
    elif isinstance(kernel, SampledKernel):
        lever = x[None, :, None] - x[None, None, :]
        amp = np.einsum("ijk,k->ij", kernel.K * lever, psi) * dx
        val = np.sum(np.abs(amp) ** 2) * dx * dx
    else:
        raise ValidationError(f"unsupported kernel type {type(kernel).__name__}")
    return float(np.sqrt(max(val, 0.0)))


def gaussian_packet(x, width: float, x0: float = 0.0, p0: float = 0.0) -> np.ndarray:
    """Gaussian amplitude with |psi|^2 of standard deviation ``width``, carrier exp(i p0 x)."""
    x = np.asarray(x, dtype=float)
    return (2 * np.pi * width**2) ** -0.25 * np.exp(-((x - x0) ** 2) / (4 * width**2) + 1j * p0 * x)


def de_broglie_deviation(width_over_wavelength: float, p0: float = 2 * np.pi, x=None) -> float:
    """L-infinity gap between rho and |psi|^2 for a Gaussian kernel of width
    ``width_over_wavelength * 2 pi / p0`` acting on a packet one de Broglie
    wavelength wide."""
    wavelength = 2 * np.pi / p0
    if x is None:
        x = uniform_grid(2048, 24 * wavelength * max(1.0, width_over_wavelength))
    psi = gaussian_packet(x, wavelength, 0.0, p0)
    rho = outcome_distribution(gaussian_kernel(width_over_wavelength * wavelength, x), psi)
    return float(np.max(np.abs(rho - np.abs(psi) ** 2)))
