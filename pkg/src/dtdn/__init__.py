"""Two-layer image deraining: guided-filter decomposition, a detail-layer GAN
sharing weights with a CNN, synthetic rain data, metrics and a toy study of
joint versus alternating loss optimization."""
from .analysis import analyze, build_toy_instance, find_interference_stationary, run_schedule
from .errors import (ContractError, DataError, DTDNError, FormatError, LengthError,
                     ParameterError, ShapeError)
from .guided_filter import Decomposition, FilterParams, decompose, guided_filter_self
from .image import clip_unit, decode_p6, encode_p6, read_ppm, resize_bilinear, write_ppm
from .metrics import MetricsReport, evaluate_dataset, psnr, ssim, uqi
from .model import (Discriminator, FeatureNet, Generator, adversarial_losses, content_loss,
                    mse_loss, perceptual_loss, reconstruct)
from .rain import (DatasetManifest, EnrichmentPolicy, EnrichmentRecord, StreakSpec,
                   build_dataset, enrich, partition_heavy)
from .trainer import (DTDN, TrainConfig, TrainingData, derain, derain_batch, load_checkpoint,
                      save_checkpoint, train)

__version__ = "0.1.0"

__all__ = [
    "ContractError", "DTDN", "DTDNError", "DataError", "DatasetManifest", "Decomposition",
    "Discriminator", "EnrichmentPolicy", "EnrichmentRecord", "FeatureNet", "FilterParams",
    "FormatError", "Generator", "LengthError", "MetricsReport", "ParameterError", "ShapeError",
    "StreakSpec", "TrainConfig", "TrainingData", "adversarial_losses", "analyze",
    "build_dataset", "build_toy_instance", "clip_unit", "content_loss", "decode_p6",
    "decompose", "derain", "derain_batch", "encode_p6", "enrich", "evaluate_dataset",
    "find_interference_stationary", "guided_filter_self", "load_checkpoint", "mse_loss",
    "partition_heavy", "perceptual_loss", "psnr", "read_ppm", "reconstruct", "resize_bilinear",
    "run_schedule", "save_checkpoint", "ssim", "train", "uqi", "write_ppm",
]
