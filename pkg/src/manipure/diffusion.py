"""DDPM schedule, denoiser interface, reverse sampling, and purification.

The reverse subsequence is a uniform stride from the forward jump target
down to 0 (for example 100, 80, 60, 40, 20, 0). Each iteration predicts
the clean image from the current iterate and, by default, applies the
spectral correction to that prediction, whose reconstruction becomes the
next iterate. The alternative mode draws a posterior sample over the
strided jump first and corrects that sample instead; select it with
``apply_to="posterior"``.
"""
from dataclasses import dataclass

import numpy as np

from . import freqpure as fp
from . import mani as mani_mod
from . import spectral
from .errors import ConfigError, MissingPrerequisiteError, NumericalError, UnsupportedError

APPLY_TO_X0 = "x0"
APPLY_TO_POSTERIOR = "posterior"
APPLY_MODES = (APPLY_TO_X0, APPLY_TO_POSTERIOR)


@dataclass(frozen=True)
class NoiseSchedule:
    """Arrays indexed directly by timestep t in [0, T]; index 0 is the
    no-noise boundary (alpha_bar[0] = 1, sigma2[0] = 0, beta[0] unused)."""
    t_max: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma2: np.ndarray


def linear_schedule(t_max=1000, beta1=1e-4, beta_t=0.02):
    """Linear variance schedule, endpoints included exactly."""
    if t_max < 1:
        raise ConfigError("T must be >= 1", path="schedule.t")
    if not (0.0 < beta1 <= beta_t < 1.0):
        raise ConfigError(
            f"need 0 < beta1 <= betaT < 1, got ({beta1}, {beta_t})",
            path="schedule.beta1")
    beta = np.concatenate(([0.0], np.linspace(beta1, beta_t, t_max)))
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    sigma2 = np.zeros(t_max + 1)
    sigma2[1:] = (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]) * beta[1:]
    return NoiseSchedule(t_max=t_max, beta=beta, alpha=alpha,
                         alpha_bar=alpha_bar, sigma2=sigma2)


@dataclass(frozen=True)
class ReverseConfig:
    t_start: int = 100
    n_steps: int = 5
    apply_to: str = APPLY_TO_X0
    literal_predict_x0: bool = False

    def __post_init__(self):
        if self.t_start < 0:
            raise ConfigError("t_start must be >= 0", path="reverse.t_start")
        if self.t_start > 0 and not (1 <= self.n_steps <= self.t_start):
            raise ConfigError(
                f"n_steps must lie in [1, t_start], got {self.n_steps}",
                path="reverse.n_steps")
        if self.apply_to not in APPLY_MODES:
            raise ConfigError(f"apply_to must be one of {APPLY_MODES}",
                              path="reverse.apply_to")


def reverse_timesteps(t_start, n_steps):
    """Uniformly strided boundaries t_start -> 0, inclusive."""
    ts = np.rint(np.linspace(t_start, 0, n_steps + 1)).astype(int)
    if np.any(np.diff(ts) >= 0):
        raise ConfigError(
            f"cannot build {n_steps} strictly decreasing steps from {t_start}",
            path="reverse.n_steps")
    return [int(t) for t in ts]


def predict_x0(x_t, eps_hat, t, schedule, literal_sqrt_alpha=False):
    """Invert the forward marginal given a noise estimate.

    Uses the cumulative product in the denominator (the standard
    identity). ``literal_sqrt_alpha`` switches to the per-step
    coefficient for A/B comparison.
    """
    if t < 1:
        raise ConfigError("t must be >= 1", path="t")
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    abar = schedule.alpha_bar[t]
    denom = np.sqrt(schedule.alpha[t]) if literal_sqrt_alpha else np.sqrt(abar)
    return (x_t - np.sqrt(1.0 - abar) * eps_hat) / denom


def reverse_step(x_t, t, t_prev, denoiser, schedule, rng,
                 literal_predict_x0=False):
    """One posterior sample over the strided jump t -> t_prev.

    The posterior generalizes the single-step update: with
    a~ = abar_t / abar_prev and b~ = 1 - a~,

        mu = sqrt(abar_prev) * b~ / (1 - abar_t) * x0_hat
           + sqrt(a~) * (1 - abar_prev) / (1 - abar_t) * x_t
        sigma^2 = (1 - abar_prev) / (1 - abar_t) * b~

    and the noise term vanishes when t_prev = 0.
    """
    if not (0 <= t_prev < t):
        raise ConfigError(f"need 0 <= t_prev < t, got ({t_prev}, {t})",
                          path="t_prev")
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(denoiser(x_t, t), dtype=np.float64)
    if eps_hat.shape != x_t.shape:
        raise NumericalError("denoiser output dims do not match input")
    x0_hat = predict_x0(x_t, eps_hat, t, schedule,
                        literal_sqrt_alpha=literal_predict_x0)

    abar_t = schedule.alpha_bar[t]
    abar_prev = schedule.alpha_bar[t_prev]
    a_tilde = abar_t / abar_prev
    b_tilde = 1.0 - a_tilde
    mu = (np.sqrt(abar_prev) * b_tilde / (1.0 - abar_t)) * x0_hat \
        + (np.sqrt(a_tilde) * (1.0 - abar_prev) / (1.0 - abar_t)) * x_t
    if t_prev == 0:
        return mu
    sigma = np.sqrt((1.0 - abar_prev) / (1.0 - abar_t) * b_tilde)
    return mu + sigma * rng.standard_normal(x_t.shape)


# ------------------------------------------------------------------ denoisers

def identity_denoiser(x_t, t):
    """Predicts zero noise everywhere."""
    return np.zeros_like(np.asarray(x_t, dtype=np.float64))


class BlurDenoiser:
    """Crude score proxy: treats the blur residual as the noise estimate."""

    def __init__(self, sigma, schedule):
        if sigma <= 0:
            raise ConfigError("blur sigma must be > 0", path="denoiser")
        self.sigma = float(sigma)
        self.schedule = schedule
        self._response = {}

    def _freq_response(self, h, w):
        key = (h, w)
        if key not in self._response:
            fu = np.minimum(np.arange(h), h - np.arange(h)) / h
            fv = np.minimum(np.arange(w), w - np.arange(w)) / w
            f2 = fu[:, None] ** 2 + fv[None, :] ** 2
            self._response[key] = np.exp(-2.0 * np.pi ** 2 * self.sigma ** 2 * f2)
        return self._response[key]

    def _blur(self, x):
        resp = self._freq_response(x.shape[0], x.shape[1])[:, :, None]
        return np.fft.ifft2(np.fft.fft2(x, axes=(0, 1)) * resp, axes=(0, 1)).real

    def __call__(self, x_t, t):
        x_t = np.asarray(x_t, dtype=np.float64)
        scale = np.sqrt(1.0 - self.schedule.alpha_bar[t])
        if scale == 0.0:
            return np.zeros_like(x_t)
        return (x_t - self._blur(x_t)) / scale


class OracleGaussianDenoiser:
    """Exact posterior-mean noise predictor for Gaussian data x0 ~ N(mu0, var0 I)."""

    def __init__(self, mu0, var0, schedule):
        if var0 <= 0:
            raise ConfigError("oracle var must be > 0", path="denoiser")
        self.mu0 = np.asarray(mu0, dtype=np.float64)
        self.var0 = float(var0)
        self.schedule = schedule

    def __call__(self, x_t, t):
        x_t = np.asarray(x_t, dtype=np.float64)
        abar = self.schedule.alpha_bar[t]
        s = abar * self.var0 + 1.0 - abar
        return np.sqrt(1.0 - abar) * (x_t - np.sqrt(abar) * self.mu0) / s


def parse_denoiser_spec(spec, schedule, load_tensor=None):
    """Build a denoiser from its config string.

    Formats: ``identity``, ``blur:sigma=<f>``, ``oracle:mu=<path>,var=<f>``.
    """
    if spec == "identity":
        return identity_denoiser
    if spec.startswith("blur:"):
        args = _parse_kv(spec[len("blur:"):], "denoiser")
        if set(args) != {"sigma"}:
            raise ConfigError(f"blur takes sigma=<f>, got {spec!r}", path="denoiser")
        return BlurDenoiser(float(args["sigma"]), schedule)
    if spec.startswith("oracle:"):
        args = _parse_kv(spec[len("oracle:"):], "denoiser")
        if "var" not in args or not set(args) <= {"mu", "var"}:
            raise ConfigError(
                f"oracle takes mu=<tensor-path>,var=<f>, got {spec!r}",
                path="denoiser")
        if "mu" not in args:
            raise MissingPrerequisiteError(
                "oracle denoiser needs mu=<tensor-path> outside eval "
                "(eval substitutes the per-sample reference)")
        if load_tensor is None:
            from .tensor_store import load_raw as load_tensor
        return OracleGaussianDenoiser(load_tensor(args["mu"]),
                                      float(args["var"]), schedule)
    raise ConfigError(f"unknown denoiser spec {spec!r}", path="denoiser")


def _parse_kv(text, path):
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise ConfigError(f"malformed option {part!r}", path=path)
        key, value = part.split("=", 1)
        out[key.strip()] = value.strip()
    return out


# ---------------------------------------------------------------- purify loop

@dataclass(frozen=True)
class PurifyResult:
    image: np.ndarray
    weight_map: np.ndarray | None
    eps_t: np.ndarray | None
    x_noised: np.ndarray | None
    step_ts: list
    step_deviation: list  # max relative low-band magnitude deviation per step


def purify(x_adv, mani_cfg, freq_cfg, rev_cfg, schedule, denoiser, seed):
    """Full purification of one image; deterministic given the seed."""
    return purify_with_trace(x_adv, mani_cfg, freq_cfg, rev_cfg, schedule,
                             denoiser, seed).image


def purify_with_trace(x_adv, mani_cfg, freq_cfg, rev_cfg, schedule, denoiser,
                      seed, compute_deviation=False):
    """Purification plus the artifacts the CLI exposes.

    Per-step deviation (optional, costs one extra transform per step) is
    the max over masked cells of |A_out - A_ref| / (1 + A_ref).
    """
    x_adv = np.asarray(x_adv, dtype=np.float64)
    if x_adv.ndim != 3:
        raise UnsupportedError(f"expected (H, W, C) input, got {x_adv.shape}")
    if rev_cfg.t_start == 0:
        return PurifyResult(image=x_adv.astype(np.float64), weight_map=None,
                            eps_t=None, x_noised=None, step_ts=[],
                            step_deviation=[])
    if rev_cfg.t_start > schedule.t_max:
        raise ConfigError(
            f"t_start {rev_cfg.t_start} exceeds schedule T {schedule.t_max}",
            path="reverse.t_start")

    rng = np.random.default_rng(seed)
    h, w, _ = x_adv.shape

    adv_mp = spectral.decompose(spectral.dft(x_adv))
    wmap, _ = mani_mod.compute_weight_map(x_adv, mani_cfg)
    eps_g = rng.standard_normal(x_adv.shape)
    eps_t = mani_mod.modulate_noise(wmap, eps_g)
    x = mani_mod.forward_diffuse(x_adv, rev_cfg.t_start, schedule, eps_t)
    x_noised = x

    mask = spectral.lowpass_mask(h, w, freq_cfg.cutoff) if freq_cfg.enabled else None
    boundaries = reverse_timesteps(rev_cfg.t_start, rev_cfg.n_steps)
    step_ts = []
    deviations = []
    for t, t_prev in zip(boundaries[:-1], boundaries[1:]):
        if rev_cfg.apply_to == APPLY_TO_X0:
            eps_hat = np.asarray(denoiser(x, t), dtype=np.float64)
            x0_hat = predict_x0(x, eps_hat, t, schedule,
                                literal_sqrt_alpha=rev_cfg.literal_predict_x0)
            x = fp.freqpure_step(x0_hat, adv_mp, freq_cfg, mask=mask)
        else:
            x = reverse_step(x, t, t_prev, denoiser, schedule, rng,
                             literal_predict_x0=rev_cfg.literal_predict_x0)
            x = fp.freqpure_step(x, adv_mp, freq_cfg, mask=mask)
        step_ts.append(t)
        if compute_deviation:
            deviations.append(_masked_deviation(x, adv_mp, mask))
        else:
            deviations.append(float("nan"))

    return PurifyResult(image=np.clip(x, 0.0, 1.0), weight_map=wmap.values,
                        eps_t=eps_t, x_noised=x_noised, step_ts=step_ts,
                        step_deviation=deviations)


def _masked_deviation(x, adv_mp, mask):
    if mask is None:
        return float("nan")
    mp = spectral.decompose(spectral.dft(x))
    sel = mask.values > 0.5
    rel = np.abs(mp.a[sel] - adv_mp.a[sel]) / (1.0 + adv_mp.a[sel])
    return float(rel.max())
