"""Evaluation metrics: SSIM, band-distribution KL divergence, accuracy.

SSIM follows the standard recipe: 11x11 Gaussian window (sigma 1.5),
C1 = 0.01^2, C2 = 0.03^2 on the [0, 1] dynamic range, averaged over
valid window positions, channels averaged last.
"""
import numpy as np

from . import spectral
from ._kernels import ssim_channel
from .errors import NumericalError, UnsupportedError

_WINDOW = 11
_SIGMA = 1.5
_C1 = 0.01 ** 2
_C2 = 0.03 ** 2
_SMOOTHING = 1e-12


def _gaussian_kernel():
    offsets = np.arange(_WINDOW) - (_WINDOW - 1) / 2.0
    k = np.exp(-(offsets ** 2) / (2.0 * _SIGMA ** 2))
    return k / k.sum()


_KERNEL_1D = _gaussian_kernel()


def ssim(x, y):
    """Mean structural similarity of two (H, W, C) images in [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise UnsupportedError("ssim operands differ in shape")
    if x.ndim != 3:
        raise UnsupportedError(f"expected (H, W, C), got {x.shape}")
    h, w, c = x.shape
    if h < _WINDOW or w < _WINDOW:
        raise UnsupportedError(
            f"image {h}x{w} smaller than the {_WINDOW}x{_WINDOW} window")
    total = 0.0
    for ch in range(c):
        total += ssim_channel(np.ascontiguousarray(x[:, :, ch]),
                              np.ascontiguousarray(y[:, :, ch]),
                              _KERNEL_1D, _C1, _C2)
    return total / c


def band_distribution(noise, partition):
    """Probability vector over bands from the noise magnitude spectrum."""
    noise = np.asarray(noise, dtype=np.float64)
    if not np.any(noise):
        raise NumericalError("cannot build a band distribution from zero noise")
    mp = spectral.decompose(spectral.dft(noise))
    m = spectral.band_means(mp.a, partition)
    p = m + _SMOOTHING
    return p / p.sum()


def kl_divergence(p, q):
    """sum p_i ln(p_i / q_i); finite thanks to the smoothing floor."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise UnsupportedError("distributions differ in length")
    return float(np.sum(p * np.log(p / q)))


def accuracy_report(preds, truth):
    """Fraction of matching labels."""
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape != truth.shape:
        raise UnsupportedError("prediction/truth lengths differ")
    if preds.size == 0:
        raise UnsupportedError("cannot report accuracy of an empty batch")
    return float(np.mean(preds == truth))


RESULTS_HEADER = ("run_id,defense,attack,norm,epsilon,standard_acc,"
                  "robust_acc,mean_ssim,kl_adaptive,kl_uniform")


def format_results_row(run_id, defense, attack, norm, epsilon, standard_acc,
                       robust_acc, mean_ssim, kl_adaptive, kl_uniform):
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return f"{v:.10g}"
        return str(v)

    return ",".join(fmt(v) for v in (run_id, defense, attack, norm, epsilon,
                                     standard_acc, robust_acc, mean_ssim,
                                     kl_adaptive, kl_uniform))


def write_results_csv(path, rows):
    with open(path, "w") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for row in rows:
            fh.write(format_results_row(**row) + "\n")
