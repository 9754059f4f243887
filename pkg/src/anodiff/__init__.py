"""Weakly supervised anomaly detection with deterministic diffusion encoding
and classifier-guided denoising, plus the evaluation stack (Otsu, Dice, AUROC)
and analytic Gaussian oracles that make the sampling math exactly testable.
"""

from .analytic import (AnalyticClassGrad, AnalyticEpsilon, GaussianDataModel,
                       TwoClassModel, analytic_class_grad, gaussian_epsilon)
from .backend import COMPILED_AVAILABLE, active_backend, set_backend
from .data import (DatasetManifest, GenConfig, ToyDataset, ToySample,
                   generate_toy_dataset, load_dataset, load_image, save_image,
                   save_pgm)
from .forward import q_sample, q_sample_batch, q_step
from .metrics import (EvalSummary, SingleClassError, auroc, binarize, dice,
                      evaluate_set, otsu_threshold)
from .nets import (Classifier, ClassifierGrad, DenseNet, Denoiser,
                   TimeEmbedding, TrainConfig, TrainingDivergedError,
                   classifier_forward, classifier_input_grad, denoiser_forward,
                   init_dense_net, load_checkpoint, loss_eps_mse,
                   save_checkpoint, train_classifier, train_denoiser)
from .pipeline import (DetectionParams, DetectionResult, anomaly_map, detect,
                       detect_batch, detect_stochastic_ablation)
from .sampler import (Guidance, GuidanceConfig, decode, decode_stochastic,
                      encode, encode_step, guided_epsilon, reverse_step)
from .schedule import Schedule, linear_beta_schedule, sigma_ddpm

__version__ = "0.1.0"
