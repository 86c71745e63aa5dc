"""Unitary 2-D transform machinery: DFT, polar decomposition, radial bands.

Conventions, fixed package-wide:

* forward transform is the plain double sum (unnormalized); the inverse
  carries the 1/(HW) factor, so idft(dft(x)) == x.
* frequencies are indexed unshifted with DC at (0, 0); radii use the
  min-image (wrapped) distance from DC, so masks and band partitions
  apply directly to unshifted spectra.
* H and W must be powers of two (v1 restriction, checked on entry).
"""
from dataclasses import dataclass

import numpy as np

from ._kernels import band_sums, wrap_phase_np
from .errors import AsymmetryError, ConfigError, NumericalError, UnsupportedError

_RESIDUE_TOL = 1e-4


@dataclass(frozen=True)
class MagPhase:
    """Polar split of a spectrum: magnitude a >= 0, phase phi in (-pi, pi]."""
    a: np.ndarray
    phi: np.ndarray


@dataclass(frozen=True)
class BandPartition:
    """Disjoint radial annuli covering every frequency cell."""
    n: int
    assignment: np.ndarray  # (H, W) int32 band index
    band_sizes: np.ndarray  # (n,) cell count per band


@dataclass(frozen=True)
class FilterMask:
    """Hard indicator of radius <= cutoff * Nyquist radius."""
    values: np.ndarray  # (H, W) in {0.0, 1.0}
    cutoff: float


def _check_pow2(n):
    return n >= 2 and (n & (n - 1)) == 0


def _check_dims(x):
    if x.ndim != 3:
        raise UnsupportedError(f"expected (H, W, C) array, got shape {x.shape}")
    h, w, _ = x.shape
    if not (_check_pow2(h) and _check_pow2(w)):
        raise UnsupportedError(
            f"H and W must be powers of two >= 2, got {h}x{w}")
    return h, w


def radius_grid(h, w):
    """Min-image distance of every (u, v) cell from DC."""
    du = np.minimum(np.arange(h), h - np.arange(h))
    dv = np.minimum(np.arange(w), w - np.arange(w))
    return np.hypot(du[:, None], dv[None, :])


def nyquist_radius(h, w):
    return float(np.hypot(h / 2.0, w / 2.0))


def dft(x):
    """Per-channel 2-D DFT of a real (H, W, C) array."""
    x = np.asarray(x, dtype=np.float64)
    _check_dims(x)
    if not np.all(np.isfinite(x)):
        raise NumericalError("dft input contains NaN or Inf")
    return np.fft.fft2(x, axes=(0, 1))


def idft(spectrum):
    """Real part of the inverse transform; errors on asymmetry residue.

    A residue above 1e-4 * max|x| signals a non-Hermitian spectrum,
    which can only come from a bug or from phase edits at self-conjugate
    cells; it is raised rather than silently discarded.
    """
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    _check_dims(spectrum)
    full = np.fft.ifft2(spectrum, axes=(0, 1))
    real = full.real
    residue = float(np.max(np.abs(full.imag)))
    bound = _RESIDUE_TOL * float(np.max(np.abs(real))) + 1e-12
    if residue > bound:
        raise AsymmetryError(
            f"imaginary residue {residue:.3e} exceeds {bound:.3e}")
    return real


def decompose(spectrum):
    """Magnitude/phase split; a zero coefficient gets phase 0."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    a = np.abs(spectrum)
    phi = np.arctan2(spectrum.imag, spectrum.real)
    phi = np.where(phi == -np.pi, np.pi, phi)
    return MagPhase(a=a, phi=phi)


def recompose(mp):
    """Inverse of decompose: a * exp(i * phi)."""
    a = np.asarray(mp.a, dtype=np.float64)
    if a.min() < 0:
        raise NumericalError("magnitude field has negative entries")
    phi = np.asarray(mp.phi, dtype=np.float64)
    return a * np.cos(phi) + 1j * (a * np.sin(phi))


def wrap_phase(phi):
    """Wrap angles into (-pi, pi]."""
    return wrap_phase_np(np.asarray(phi, dtype=np.float64))


def make_band_partition(h, w, n):
    """Assign each cell to band floor(n * r / r_max), clamped to n - 1."""
    if n < 1:
        raise ConfigError("band count must be >= 1", path="n_bands")
    r = radius_grid(h, w)
    r_max = nyquist_radius(h, w)
    assignment = np.minimum((n * r / r_max).astype(np.int64), n - 1).astype(np.int32)
    sizes = np.bincount(assignment.ravel(), minlength=n)
    if np.any(sizes == 0):
        empty = int(np.argmin(sizes))
        raise ConfigError(
            f"band {empty} is empty for {h}x{w}; reduce n from {n}",
            path="n_bands")
    return BandPartition(n=n, assignment=assignment, band_sizes=sizes)


def band_means(a, partition):
    """Per-band mean magnitude, averaged across channels."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.shape[:2] != partition.assignment.shape:
        raise UnsupportedError(
            f"magnitude field {a.shape[:2]} does not match partition "
            f"{partition.assignment.shape}")
    sums = band_sums(np.ascontiguousarray(a), partition.assignment, partition.n)
    return sums / (partition.band_sizes * a.shape[2])


def lowpass_mask(h, w, cutoff):
    """Binary low-pass indicator; symmetric under index negation."""
    if not (0.0 < cutoff < 1.0):
        raise ConfigError(f"cutoff must lie in (0, 1), got {cutoff}",
                          path="cutoff")
    r = radius_grid(h, w)
    values = (r <= cutoff * nyquist_radius(h, w)).astype(np.float64)
    return FilterMask(values=values, cutoff=float(cutoff))


def radial_profile(a, partition):
    """Band-mean magnitude curve; identical math to band_means."""
    return band_means(a, partition)


def write_profile_csv(path, profile):
    lines = ["band,mean_magnitude"]
    lines += [f"{i},{v:.10g}" for i, v in enumerate(profile)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
