"""Hot numeric kernels: numba-jitted loops with pure-numpy fallbacks.

The numba path is used when importable; set the environment variable
``MANIPURE_DISABLE_NUMBA=1`` (before import) to force the numpy path.
``benchmarks/bench_kernels.py`` times both paths side by side.
"""
import os

import numpy as np

_TWO_PI = 2.0 * np.pi

DISABLE_NUMBA = bool(os.environ.get("MANIPURE_DISABLE_NUMBA"))

try:
    if DISABLE_NUMBA:
        raise ImportError("numba disabled by MANIPURE_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# ---------------------------------------------------------------- numpy paths

def band_sums_np(values, assignment, n):
    """Sum of values per band, accumulated over all channels.

    values: (H, W, C) float array; assignment: (H, W) int band indices.
    """
    h, w, c = values.shape
    total = np.zeros(n, dtype=np.float64)
    flat_assign = assignment.ravel()
    for ch in range(c):
        total += np.bincount(flat_assign, weights=values[:, :, ch].ravel(),
                             minlength=n)
    return total


def wrap_phase_np(phi):
    """Wrap angles to (-pi, pi]."""
    m = np.mod(phi, _TWO_PI)
    return np.where(m > np.pi, m - _TWO_PI, m)


def project_phase_np(phi_t, phi_adv, delta):
    d = wrap_phase_np(phi_t - phi_adv)
    return wrap_phase_np(phi_adv + np.clip(d, -delta, delta))


def freqpure_recombine_np(a_adv, phi_adv, a_t, phi_t, mask, delta):
    """Fused magnitude/phase recombination -> complex spectrum.

    Masked cells take the reference magnitude and the projected phase;
    unmasked cells keep the candidate's magnitude and phase.
    mask: (H, W) in {0, 1}; fields: (H, W, C).
    """
    m = mask[:, :, None]
    a = m * a_adv + (1.0 - m) * a_t
    phi_proj = project_phase_np(phi_t, phi_adv, delta)
    phi = np.where(m > 0.5, phi_proj, phi_t)
    return a * np.cos(phi) + 1j * (a * np.sin(phi))


def ssim_channel_np(x, y, kernel1d, c1, c2):
    """Mean SSIM of one channel pair over valid window positions."""
    def win(img):
        v = np.lib.stride_tricks.sliding_window_view(img, kernel1d.size, axis=0)
        v = v @ kernel1d
        v = np.lib.stride_tricks.sliding_window_view(v, kernel1d.size, axis=1)
        return v @ kernel1d

    mu_x = win(x)
    mu_y = win(y)
    e_xx = win(x * x)
    e_yy = win(y * y)
    e_xy = win(x * y)
    var_x = e_xx - mu_x * mu_x
    var_y = e_yy - mu_y * mu_y
    cov = e_xy - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------- numba paths

if HAVE_NUMBA:

    @njit(cache=True)
    def band_sums_nb(values, assignment, n):
        h, w, c = values.shape
        total = np.zeros(n, dtype=np.float64)
        for i in range(h):
            for j in range(w):
                b = assignment[i, j]
                for ch in range(c):
                    total[b] += values[i, j, ch]
        return total

    @njit(cache=True)
    def _wrap_scalar(p):
        m = p % _TWO_PI
        if m > np.pi:
            m -= _TWO_PI
        return m

    @njit(cache=True)
    def project_phase_nb(phi_t, phi_adv, delta):
        out = np.empty_like(phi_t)
        flat_t = phi_t.ravel()
        flat_a = phi_adv.ravel()
        flat_o = out.ravel()
        for i in range(flat_t.size):
            d = _wrap_scalar(flat_t[i] - flat_a[i])
            if d > delta:
                d = delta
            elif d < -delta:
                d = -delta
            flat_o[i] = _wrap_scalar(flat_a[i] + d)
        return out

    @njit(cache=True)
    def freqpure_recombine_nb(a_adv, phi_adv, a_t, phi_t, mask, delta):
        h, w, c = a_adv.shape
        out = np.empty((h, w, c), dtype=np.complex128)
        for i in range(h):
            for j in range(w):
                inside = mask[i, j] > 0.5
                for ch in range(c):
                    if inside:
                        a = a_adv[i, j, ch]
                        d = _wrap_scalar(phi_t[i, j, ch] - phi_adv[i, j, ch])
                        if d > delta:
                            d = delta
                        elif d < -delta:
                            d = -delta
                        phi = _wrap_scalar(phi_adv[i, j, ch] + d)
                    else:
                        a = a_t[i, j, ch]
                        phi = phi_t[i, j, ch]
                    out[i, j, ch] = complex(a * np.cos(phi), a * np.sin(phi))
        return out

    @njit(cache=True)
    def ssim_channel_nb(x, y, kernel1d, c1, c2):
        h, w = x.shape
        k = kernel1d.size
        acc = 0.0
        count = 0
        for i in range(h - k + 1):
            for j in range(w - k + 1):
                mu_x = 0.0
                mu_y = 0.0
                e_xx = 0.0
                e_yy = 0.0
                e_xy = 0.0
                for a in range(k):
                    for b in range(k):
                        wgt = kernel1d[a] * kernel1d[b]
                        xv = x[i + a, j + b]
                        yv = y[i + a, j + b]
                        mu_x += wgt * xv
                        mu_y += wgt * yv
                        e_xx += wgt * xv * xv
                        e_yy += wgt * yv * yv
                        e_xy += wgt * xv * yv
                var_x = e_xx - mu_x * mu_x
                var_y = e_yy - mu_y * mu_y
                cov = e_xy - mu_x * mu_y
                num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
                den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
                acc += num / den
                count += 1
        return acc / count

    band_sums = band_sums_nb
    project_phase_field = project_phase_nb
    freqpure_recombine = freqpure_recombine_nb
    ssim_channel = ssim_channel_nb
else:
    band_sums = band_sums_np
    project_phase_field = project_phase_np
    freqpure_recombine = freqpure_recombine_np
    ssim_channel = ssim_channel_np


def warmup():
    """Trigger JIT compilation of every kernel (no-op on the numpy path)."""
    if not HAVE_NUMBA:
        return
    a = np.ones((4, 4, 1))
    mask = np.ones((4, 4))
    band_sums(a, np.zeros((4, 4), dtype=np.int32), 1)
    project_phase_field(a, a, 0.1)
    freqpure_recombine(a, a, a, a, mask, 0.1)
    ssim_channel(np.ones((12, 12)), np.ones((12, 12)), np.ones(11) / 11.0,
                 1e-4, 9e-4)
