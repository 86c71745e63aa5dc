"""Gradient attacks on the toy classifier: FGSM, PGD, and PGD+EOT with
straight-through (identity) gradients through the purifier.

All attacks operate on single (H, W, C) images in [0, 1], are
deterministic given their seed, and respect their norm budget exactly
(iterates are float64 end to end; outputs are quantized only on save).
"""
from dataclasses import dataclass

import numpy as np

from .classifier import cross_entropy, input_gradient
from .errors import ConfigError

LINF = "linf"
L2 = "l2"
NORMS = (LINF, L2)


@dataclass(frozen=True)
class AttackConfig:
    norm: str = LINF
    epsilon: float = 8.0 / 255.0
    step_size: float = 0.007
    iterations: int = 10
    eot_samples: int = 10
    random_start: bool = True

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {NORMS}", path="attack.norm")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0", path="attack.epsilon")
        if self.step_size <= 0:
            raise ConfigError("step_size must be > 0", path="attack.step_size")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1", path="attack.iterations")
        if self.eot_samples < 1:
            raise ConfigError("eot_samples must be >= 1", path="attack.eot_samples")


def derive_seed(base, *parts):
    """Stable child seed from a base seed and integer tags."""
    seq = np.random.SeedSequence([int(base) & 0xFFFFFFFF] + [int(p) for p in parts])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def project_ball(x, x0, norm, epsilon):
    """Project onto the epsilon ball around x0, then clamp to [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    if x.shape != x0.shape:
        raise ConfigError("projection operands differ in shape", path="attack")
    if norm == LINF:
        x = np.clip(x, x0 - epsilon, x0 + epsilon)
    elif norm == L2:
        delta = x - x0
        nrm = float(np.linalg.norm(delta))
        if nrm > epsilon:
            x = x0 + delta * (epsilon / nrm)
    else:
        raise ConfigError(f"norm must be one of {NORMS}", path="attack.norm")
    return np.clip(x, 0.0, 1.0)


def fgsm(x, y, clf, epsilon):
    """Single signed-gradient step, clamped to [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    grad = input_gradient(clf, x, y)
    return np.clip(x + epsilon * np.sign(grad), 0.0, 1.0)


def _random_start(x, cfg, rng):
    if cfg.norm == LINF:
        x = x + rng.uniform(-cfg.epsilon, cfg.epsilon, size=x.shape)
    else:
        direction = rng.standard_normal(x.shape)
        direction /= max(float(np.linalg.norm(direction)), 1e-12)
        radius = cfg.epsilon * rng.uniform(0.0, 1.0) ** (1.0 / x.size)
        x = x + radius * direction
    return np.clip(x, 0.0, 1.0)


def _ascend(x, grad, cfg):
    if cfg.norm == LINF:
        return x + cfg.step_size * np.sign(grad)
    nrm = max(float(np.linalg.norm(grad)), 1e-12)
    return x + cfg.step_size * grad / nrm


def pgd(x, y, clf, cfg, seed=0):
    """Iterated projected ascent on the classification loss."""
    x0 = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(derive_seed(seed, 1))
    x = _random_start(x0, cfg, rng) if cfg.random_start else x0.copy()
    x = project_ball(x, x0, cfg.norm, cfg.epsilon)
    for _ in range(cfg.iterations):
        grad = input_gradient(clf, x, y)
        x = project_ball(_ascend(x, grad, cfg), x0, cfg.norm, cfg.epsilon)
    return x


def pgd_eot_bpda(x, y, clf, purifier, cfg, seed=0):
    """PGD with gradients averaged over the purifier's randomness.

    Each iteration draws ``eot_samples`` purified views of the current
    iterate (purifier seeds derive from (seed, iteration, sample) so runs
    replay exactly) and averages the classifier gradient evaluated at the
    purified points; the purifier Jacobian is approximated by identity,
    so that average is applied to the raw iterate directly.
    """
    x0 = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(derive_seed(seed, 1))
    x = _random_start(x0, cfg, rng) if cfg.random_start else x0.copy()
    x = project_ball(x, x0, cfg.norm, cfg.epsilon)
    for it in range(cfg.iterations):
        grad = np.zeros_like(x)
        for s in range(cfg.eot_samples):
            purified = purifier(x, derive_seed(seed, 2, it, s))
            grad += input_gradient(clf, purified, y)
        grad /= cfg.eot_samples
        x = project_ball(_ascend(x, grad, cfg), x0, cfg.norm, cfg.epsilon)
    return x


def attack_loss(clf, x, y):
    """Loss the attacks ascend; exposed for the monotonicity checks."""
    return cross_entropy(clf, x, y)
