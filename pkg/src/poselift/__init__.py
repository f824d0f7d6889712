"""2D-to-3D human pose lifting with diffusion-based unsupervised domain
adaptation, validated on procedurally generated two-domain skeleton data."""

from .camera import (CameraIntrinsics, augment_source, lift_with_depth,
                     place_root_relative, project, sample_augmentation_pairs)
from .denoiser import (DenoiserConfig, DenoiserModel, LoraLinear,
                       count_parameters, estimate_flops, gradients, lora_forward)
from .diffusion import (DiffusionState, NoiseSchedule, denoise, diffusion_loss,
                        forward_sample, make_schedule, sample_hypotheses)
from .errors import (ConfigError, GeometryError, PoseLiftError,
                     ShapeMismatchError, TrainingError)
from .metrics import MetricReport, auc, mpjpe, p_mpjpe, pck
from .skeleton import (PairedDataset, PoseSequence2D, PoseSequence3D,
                       SkeletonSpec, UnpairedDataset, bone_lengths_2d,
                       concat_datasets, default_skeleton, root_relative)

__version__ = "0.1.0"
