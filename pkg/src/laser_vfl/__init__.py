"""LASER-VFL: split-network training over feature-partitioned clients whose blocks may be absent, plus baselines."""

from .data import PartitionedDataset, load_csv, quadratic_testbed, synth_classification
from .inference import accuracy_avg, evaluate, f1_macro, infer_baseline, infer_laser
from .missingness import (
    availability_stats,
    group_batches_by_pattern,
    sample_block_probs_beta,
    sample_mask_per_block,
    sample_mask_uniform,
)
from .model import METHODS, Arch, ParamSet, init_params
from .sampling import estimate_loss, exact_observed_loss, sample_tasks, task_weight
from .training import TrainConfig, laser_train_step, train

__version__ = "0.1.0"
