"""Channel-scenario identification with a conditional diffusion model.

Train a label-conditioned noise predictor on channel frequency responses,
then pick the scenario whose model best predicts injected noise.
"""

from .channelgen import (
    ChannelSample,
    Dataset,
    ScenarioProfile,
    StatFeatures,
    Tap,
    apply_ls_noise,
    build_input,
    default_profiles,
    extract_features,
    generate,
    make_dataset,
    split,
)
from .diffusion import DiffusionSchedule, NoiseDraw, forward_corrupt, make_schedule, mc_residual, reverse_sample
from .model import ModelConfig, NoisePredictor, init_params
from .pipeline import (
    ClassificationResult,
    TrainConfig,
    baseline_classify,
    classify,
    fit_baseline,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelSample", "Dataset", "ScenarioProfile", "StatFeatures", "Tap", "apply_ls_noise",
    "build_input", "default_profiles", "extract_features", "generate", "make_dataset", "split",
    "DiffusionSchedule", "NoiseDraw", "forward_corrupt", "make_schedule", "mc_residual",
    "reverse_sample", "ModelConfig", "NoisePredictor", "init_params", "ClassificationResult",
    "TrainConfig", "baseline_classify", "classify", "fit_baseline", "train",
]
