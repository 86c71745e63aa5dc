"""Frequency-adaptive diffusion purification: magnitude-shaped forward
noise, spectral recombination on the reverse path, desk-scale attacks,
and the metrics to evaluate them."""

from .attacks import AttackConfig, fgsm, pgd, pgd_eot_bpda, project_ball
from .classifier import (SyntheticDataset, ToyClassifier, generate_dataset,
                         init_classifier, input_gradient, predict, train)
from .diffusion import (BlurDenoiser, NoiseSchedule, OracleGaussianDenoiser,
                        ReverseConfig, identity_denoiser, linear_schedule,
                        predict_x0, purify, purify_with_trace, reverse_step)
from .freqpure import (FreqPureConfig, freqpure_step, project_phase,
                       recombine_magnitude, recombine_phase)
from .mani import (ManiConfig, WeightMap, band_weights, forward_diffuse,
                   modulate_noise, noise_kl_report, weight_map)
from .metrics import accuracy_report, band_distribution, kl_divergence, ssim
from .spectral import (BandPartition, FilterMask, MagPhase, band_means,
                       decompose, dft, idft, lowpass_mask,
                       make_band_partition, radial_profile, recompose)
from .tensor_store import load_png, load_raw, save_png, save_raw

__version__ = "0.1.0"
