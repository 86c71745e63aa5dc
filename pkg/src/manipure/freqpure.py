"""Reverse-side spectral purification.

After each reverse iteration the candidate image is corrected in the
frequency domain: low-frequency magnitudes are taken from the reference
(adversarial input) spectrum, and low-frequency phases are clipped into a
delta-neighborhood of the reference phases. Phase clipping operates on
the wrapped angular difference (shortest arc), since literal interval
clipping breaks at +-pi.
"""
from dataclasses import dataclass

import numpy as np

from . import spectral
from ._kernels import freqpure_recombine, project_phase_field
from .errors import ConfigError, UnsupportedError


@dataclass(frozen=True)
class FreqPureConfig:
    cutoff: float = 0.25
    delta: float = 0.2
    enabled: bool = True
    resymmetrize: bool = False

    def __post_init__(self):
        if not (0.0 < self.cutoff < 1.0):
            raise ConfigError("cutoff must lie in (0, 1)", path="freqpure.cutoff")
        if self.delta < 0:
            raise ConfigError("delta must be >= 0", path="freqpure.delta")


def _as_mask_array(mask, shape):
    values = mask.values if isinstance(mask, spectral.FilterMask) else np.asarray(mask)
    if values.shape != shape:
        raise UnsupportedError(f"mask shape {values.shape} != field shape {shape}")
    return values


def recombine_magnitude(a_adv, a_t, mask):
    """mask * a_adv + (1 - mask) * a_t, elementwise."""
    a_adv = np.asarray(a_adv, dtype=np.float64)
    a_t = np.asarray(a_t, dtype=np.float64)
    if a_adv.shape != a_t.shape:
        raise UnsupportedError("magnitude fields differ in shape")
    m = _as_mask_array(mask, a_adv.shape[:2])[:, :, None]
    return m * a_adv + (1.0 - m) * a_t


def project_phase(phi_t, phi_adv, delta):
    """Clip phi_t into the wrapped interval [phi_adv - delta, phi_adv + delta]."""
    phi_t = np.asarray(phi_t, dtype=np.float64)
    phi_adv = np.asarray(phi_adv, dtype=np.float64)
    if phi_t.shape != phi_adv.shape:
        raise UnsupportedError("phase fields differ in shape")
    return project_phase_field(np.ascontiguousarray(phi_t),
                               np.ascontiguousarray(phi_adv), float(delta))


def recombine_phase(phi_proj, phi_t, mask):
    """Per-cell select: masked cells take phi_proj, the rest keep phi_t."""
    phi_proj = np.asarray(phi_proj, dtype=np.float64)
    phi_t = np.asarray(phi_t, dtype=np.float64)
    if phi_proj.shape != phi_t.shape:
        raise UnsupportedError("phase fields differ in shape")
    m = _as_mask_array(mask, phi_proj.shape[:2])[:, :, None]
    return np.where(m > 0.5, phi_proj, phi_t)


def _resymmetrize(spectrum):
    """Average the spectrum with its Hermitian reflection."""
    flipped = spectrum[
        np.ix_((-np.arange(spectrum.shape[0])) % spectrum.shape[0],
               (-np.arange(spectrum.shape[1])) % spectrum.shape[1])]
    return 0.5 * (spectrum + np.conj(flipped))


def freqpure_step(x_candidate, adv_mp, cfg, mask=None):
    """Spectrally recombine one reverse-process candidate.

    ``adv_mp`` is the magnitude/phase split of the reference spectrum,
    computed once per purification call. Returns the input unchanged when
    the stage is disabled.
    """
    if not cfg.enabled:
        return x_candidate
    x_candidate = np.asarray(x_candidate, dtype=np.float64)
    if x_candidate.shape != adv_mp.a.shape:
        raise UnsupportedError("candidate dims do not match reference spectrum")
    if mask is None:
        mask = spectral.lowpass_mask(x_candidate.shape[0], x_candidate.shape[1],
                                     cfg.cutoff)
    mask_values = _as_mask_array(mask, x_candidate.shape[:2])

    mp_t = spectral.decompose(spectral.dft(x_candidate))
    recombined = freqpure_recombine(
        np.ascontiguousarray(adv_mp.a), np.ascontiguousarray(adv_mp.phi),
        np.ascontiguousarray(mp_t.a), np.ascontiguousarray(mp_t.phi),
        np.ascontiguousarray(mask_values), float(cfg.delta))
    if cfg.resymmetrize:
        recombined = _resymmetrize(recombined)
    return spectral.idft(recombined)
