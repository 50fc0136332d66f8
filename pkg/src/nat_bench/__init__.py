"""Noise-aware training benchmark for saliency maps.

Measured saliency maps built from a handful of observers are noisy. The
tools here estimate how large the predicted-vs-measured discrepancy should
be under that noise and train per-frame maps that stop at that level
instead of fitting the noise.
"""

from .errors import NatBenchError
from .frames import Frame, assemble, load_frames, save_frames
from .grid import gaussian_blur, mix_uniform, normalize, read_sgrid, uniform, write_sgrid
from .ioc import IocCurve, dataset_ioc, ioc_convergence_gradient, ioc_curve
from .metrics import Discrepancy, all_metrics, auc_judd, cc, eval_discrepancy, kld, nss, sim
from .nat import PredictedMap, loss_gradient, nat_frame_loss, nat_loss, tt_loss
from .noise_stats import BootstrapNoiseStats, NoiseStats, estimate_noise_stats
from .reconstruct import FixationSet, GoldStandardKDE, fit_gold_standard, sample_fixations, sr_reconstruct
from .synth import GmmSpec, gmm_truth, random_gmm_suite, toy_study
from .trainer import ExperimentConfig, NoiseAwareSaliencyFitter, rmsprop_step, run_comparison, train

__all__ = [
    "BootstrapNoiseStats", "Discrepancy", "ExperimentConfig", "FixationSet", "Frame", "GmmSpec",
    "GoldStandardKDE", "IocCurve", "NatBenchError", "NoiseAwareSaliencyFitter", "NoiseStats",
    "PredictedMap", "all_metrics", "assemble", "auc_judd", "cc", "dataset_ioc", "estimate_noise_stats",
    "eval_discrepancy", "fit_gold_standard", "gaussian_blur", "gmm_truth", "ioc_convergence_gradient",
    "ioc_curve", "kld", "load_frames", "loss_gradient", "mix_uniform", "nat_frame_loss", "nat_loss",
    "normalize", "nss", "random_gmm_suite", "read_sgrid", "rmsprop_step", "run_comparison",
    "sample_fixations", "save_frames", "sim", "sr_reconstruct", "toy_study", "train", "tt_loss",
    "uniform", "write_sgrid",
]
