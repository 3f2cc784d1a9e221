"""Federated distance weighted discrimination.

Offline fitting by federated majorize-minimize iterations, online fitting
by renewable one-pass updates, and a differentially private online variant
with per-update Laplace or Gaussian objective perturbation, plus the data
generators and evaluation harness used to benchmark them.
"""

from ._kernels import BACKEND
from .core import (ClientData, ClientSummary, Hyper, LabeledPoint,
                   ModelState, Regularizer, client_curvature,
                   client_gradient, client_summary, loss, predict,
                   predict_batch, smoothing_coeffs, vq, vq_prime,
                   vq_prime_smoothed, vq_second_smoothed)
from .datagen import SimDesign, bayes_accuracy, gen_stream
from .harness import Metrics, evaluate, load_csv, run_experiment
from .linalg import SingularMatrixError, SymMatrix, add_outer, solve_spd
from .offline import FederatedDataset, FitReport, fit_offline, mm_step
from .online import OnlineState, init_state, run_stream, update
from .privacy import (DpConfig, NoiseDraw, clip_features, laplace_scale,
                      gaussian_sigma, min_rho, run_stream_private,
                      sample_noise, update_private)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "__version__",
    "LabeledPoint", "ClientData", "ModelState", "Hyper", "ClientSummary",
    "Regularizer", "vq", "vq_prime", "smoothing_coeffs",
    "vq_prime_smoothed", "vq_second_smoothed", "loss", "client_gradient",
    "client_curvature", "client_summary", "predict", "predict_batch",
    "SymMatrix", "SingularMatrixError", "add_outer", "solve_spd",
    "FederatedDataset", "FitReport", "fit_offline", "mm_step",
    "OnlineState", "init_state", "update", "run_stream",
    "DpConfig", "NoiseDraw", "clip_features", "laplace_scale",
    "gaussian_sigma", "min_rho", "sample_noise", "update_private",
    "run_stream_private",
    "SimDesign", "gen_stream", "bayes_accuracy",
    "Metrics", "evaluate", "load_csv", "run_experiment",
]
