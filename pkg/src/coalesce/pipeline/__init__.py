"""Datasets, configuration, training commands, assembly and evaluation."""
from .assemble import AssemblyResult, Checkpoints, PartInput, assemble_parts, load_networks, rerun_manifest, run_assembly
from .config import PipelineConfig, desk_config, load_config
from .evaluate import STAGES, SuiteReport, evaluate_suite, perturb_shape, training_iou
from .metrics import chamfer, field_iou, joint_iou
from .synthetic import CATEGORIES, LabeledShape, generate_shape, generate_synthetic, load_dataset, load_shape
from .train import prepare_dataset, run_pretrain, run_train_align, run_train_joint
