"""Spiking-neural-network RFI flagging for radio-astronomy spectrograms.

Spectrogram columns are encoded into spike trains, a small two-layer LIF
network is trained per time step with surrogate-gradient BPTT, and the output
spikes are decoded back into boolean interference masks. Six encoding schemes
are provided, plus per-pixel metrics, a random hyperparameter search, and a
command-line pipeline (``spikeflag --help``).
"""

__version__ = "0.1.0"

from .data import (
    Dataset,
    DatasetManifest,
    GeneratorConfig,
    Patch,
    RFIMask,
    Spectrogram,
    contamination_stats,
    generate_synthetic,
    load_dataset,
    normalize,
    patch,
    save_dataset,
    stitch,
)
from .encoding import Encoder, EncodingConfig, SpikeTrain
from .kernels import backend
from .losses import LossConfig, loss_for_method, make_loss
from .metrics import EvalRecord, accuracy, auprc, auroc, f1, pr_curve, roc_curve
from .network import (
    NetworkConfig,
    bptt_grads,
    continuous_relaxation_forward,
    forward,
    init_params,
    lif_step,
    surrogate_grad,
)
from .optim import AdamState, adam_step
from .training import TrainingConfig, evaluate, load_checkpoint, save_checkpoint, train

__all__ = [
    "__version__",
    "AdamState", "Dataset", "DatasetManifest", "Encoder", "EncodingConfig",
    "EvalRecord", "GeneratorConfig", "LossConfig", "NetworkConfig", "Patch",
    "RFIMask", "Spectrogram", "SpikeTrain", "TrainingConfig",
    "accuracy", "adam_step", "auprc", "auroc", "backend", "bptt_grads",
    "contamination_stats", "continuous_relaxation_forward", "evaluate", "f1",
    "forward", "generate_synthetic", "init_params", "lif_step", "load_checkpoint",
    "load_dataset", "loss_for_method", "make_loss", "normalize", "patch",
    "pr_curve", "roc_curve", "save_checkpoint", "save_dataset", "stitch",
    "surrogate_grad", "train",
]
