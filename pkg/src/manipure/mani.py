"""Magnitude-adaptive noise injection for the diffusion forward jump.

Pipeline: band-mean magnitudes of the input spectrum -> inverse-magnitude
band weights -> a noise intensity map -> modulated Gaussian noise -> the
closed-form forward diffusion step.

Two map modes are provided:

* ``spatial_idft`` (default): the per-band weight field is brought to the
  spatial domain by inverse DFT; the absolute value is normalized to unit
  mean square and multiplies the noise pixel-wise.
* ``frequency_shaping``: the weight field filters the noise spectrum
  directly (per-band standard deviation proportional to the weight), the
  cleanest way to get frequency-targeted noise. The field is normalized to
  unit mean square, which by Parseval makes the shaped noise unit variance.
"""
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import ConfigError, DegenerateWeightsError, NumericalError, UnsupportedError

SPATIAL_IDFT = "spatial_idft"
FREQUENCY_SHAPING = "frequency_shaping"
MAP_MODES = (SPATIAL_IDFT, FREQUENCY_SHAPING)

# max/min ratio under which a weight vector counts as constant
_UNIFORM_TOL = 1.0 + 1e-9


@dataclass(frozen=True)
class ManiConfig:
    gamma: float = 1.8
    n_bands: int = 8
    eps0: float = 1e-8
    map_mode: str = SPATIAL_IDFT

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0", path="mani.gamma")
        if self.n_bands < 1:
            raise ConfigError("n_bands must be >= 1", path="mani.n_bands")
        if self.eps0 <= 0:
            raise ConfigError("eps0 must be > 0", path="mani.eps0")
        if self.map_mode not in MAP_MODES:
            raise ConfigError(f"map_mode must be one of {MAP_MODES}",
                              path="mani.map_mode")


@dataclass(frozen=True)
class WeightMap:
    """Noise intensity map with mean squared value 1."""
    values: np.ndarray  # (H, W, C), nonnegative
    mode: str


@dataclass(frozen=True)
class NoiseKlReport:
    kl_adaptive: float
    kl_uniform: float
    heatmap_adaptive: np.ndarray
    heatmap_uniform: np.ndarray


def band_weights(m, gamma, eps0):
    """w_i = 1 / (m_i**gamma + eps0); larger weight on weaker bands."""
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise NumericalError("band means must be nonnegative")
    if eps0 <= 0:
        raise ConfigError("eps0 must be > 0", path="mani.eps0")
    return 1.0 / (np.power(m, gamma) + eps0)


def weight_map(w, partition, dims, mode=SPATIAL_IDFT):
    """Expand per-band weights into a full (H, W, C) intensity map."""
    h, w_dim, c = dims
    wv = np.asarray(w, dtype=np.float64)
    if wv.shape != (partition.n,):
        raise UnsupportedError(
            f"expected {partition.n} weights, got shape {wv.shape}")
    if np.any(wv < 0):
        raise NumericalError("band weights must be nonnegative")
    if mode not in MAP_MODES:
        raise ConfigError(f"map_mode must be one of {MAP_MODES}",
                          path="mani.map_mode")
    if partition.assignment.shape != (h, w_dim):
        raise UnsupportedError("partition does not match requested dims")

    wmax, wmin = wv.max(), wv.min()
    if wmax <= 0:
        raise DegenerateWeightsError("all band weights are zero")
    if wmin > 0 and wmax / wmin < _UNIFORM_TOL:
        # constant weights degenerate to the uniform (identity) map
        return WeightMap(values=np.ones((h, w_dim, c)), mode=mode)

    field = wv[partition.assignment]  # (H, W), radius-symmetric -> Hermitian
    if mode == SPATIAL_IDFT:
        spatial = np.fft.ifft2(field).real
        flat = np.abs(spatial)
    else:
        flat = field
    ms = np.mean(flat * flat)
    if ms <= 0:
        raise DegenerateWeightsError("weight map is identically zero")
    flat = flat / np.sqrt(ms)
    return WeightMap(values=np.repeat(flat[:, :, None], c, axis=2), mode=mode)


def modulate_noise(wmap, noise=None, seed=None):
    """Shape unit Gaussian noise by the intensity map.

    With ``spatial_idft`` the map multiplies pixel-wise; with
    ``frequency_shaping`` it filters the noise spectrum. Either way the
    output has unit mean-square in expectation. ``noise`` may be omitted,
    in which case a draw is taken from a generator seeded with ``seed``.
    """
    if noise is None:
        noise = np.random.default_rng(seed).standard_normal(wmap.values.shape)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != wmap.values.shape:
        raise UnsupportedError(
            f"noise shape {noise.shape} != map shape {wmap.values.shape}")
    if wmap.mode == SPATIAL_IDFT:
        return wmap.values * noise
    spec = np.fft.fft2(noise, axes=(0, 1)) * wmap.values
    return np.fft.ifft2(spec, axes=(0, 1)).real


def forward_diffuse(x, t_star, schedule, eps_t):
    """Closed-form jump x_t = sqrt(abar_t) x + sqrt(1 - abar_t) eps_t."""
    if not (1 <= t_star <= schedule.t_max):
        raise ConfigError(
            f"t_star must lie in [1, {schedule.t_max}], got {t_star}",
            path="reverse.t_start")
    x = np.asarray(x, dtype=np.float64)
    eps_t = np.asarray(eps_t, dtype=np.float64)
    if eps_t.shape != x.shape:
        raise UnsupportedError("noise dims do not match input dims")
    abar = schedule.alpha_bar[t_star]
    return np.sqrt(abar) * x + np.sqrt(1.0 - abar) * eps_t


def compute_weight_map(x, cfg):
    """Band means -> weights -> map, all from one input image."""
    mp = spectral.decompose(spectral.dft(x))
    partition = spectral.make_band_partition(x.shape[0], x.shape[1], cfg.n_bands)
    m = spectral.band_means(mp.a, partition)
    w = band_weights(m, cfg.gamma, cfg.eps0)
    return weight_map(w, partition, x.shape, cfg.map_mode), partition


def noise_kl_report(x_adv, x_clean, cfg, seed, schedule=None, t_star=100):
    """Compare injected noise against the actual adversarial noise.

    Returns band-distribution KL divergences for the adaptive map and for
    unshaped (uniform) noise built from the same draw, plus the signed
    difference heatmaps D = N_inj - N_adv. Injected noise is scaled by
    sqrt(1 - abar_t*) to make the fields commensurate.
    """
    from . import metrics  # local import; metrics depends on spectral only
    from .diffusion import linear_schedule

    x_adv = np.asarray(x_adv, dtype=np.float64)
    x_clean = np.asarray(x_clean, dtype=np.float64)
    if x_adv.shape != x_clean.shape:
        raise UnsupportedError("adversarial/clean dims differ")
    n_adv = x_adv - x_clean
    if not np.any(n_adv):
        raise NumericalError("adversarial noise is identically zero")
    if schedule is None:
        schedule = linear_schedule()
    scale = float(np.sqrt(1.0 - schedule.alpha_bar[t_star]))

    wmap, partition = compute_weight_map(x_adv, cfg)
    eps_g = np.random.default_rng(seed).standard_normal(x_adv.shape)
    n_adaptive = scale * modulate_noise(wmap, eps_g)
    n_uniform = scale * eps_g

    p_adv = metrics.band_distribution(n_adv, partition)
    p_adaptive = metrics.band_distribution(n_adaptive, partition)
    p_uniform = metrics.band_distribution(n_uniform, partition)
    return NoiseKlReport(
        kl_adaptive=metrics.kl_divergence(p_adaptive, p_adv),
        kl_uniform=metrics.kl_divergence(p_uniform, p_adv),
        heatmap_adaptive=n_adaptive - n_adv,
        heatmap_uniform=n_uniform - n_adv,
    )


def heatmap_to_image(d):
    """Render a signed field as a [0, 1] diverging map, 0.5 at zero."""
    d = np.asarray(d, dtype=np.float64)
    peak = float(np.max(np.abs(d)))
    if peak == 0.0:
        return np.full(d.shape, 0.5, dtype=np.float32)
    return (0.5 + d / (2.0 * peak)).astype(np.float32)
