"""Synthetic magnetostatic twin of a Hall-sensor instrumented cuboid.

The package simulates an elastomer-skinned cuboid with magnets embedded
under five active faces and triaxial Hall sensors beneath them, generates
labeled contact datasets from simulated pressing sweeps, trains a plain
numpy MLP to regress per-face contact-force heatmaps from the nine sensor
channels, and evaluates the result with heatmap-similarity, localization,
force-error and non-contact metrics.
"""

__version__ = "0.1.0"

from .geometry import ObjectConfig, GridCoord, default_config, pixel_to_point
from .magnetics import DipoleState, HallFrame, dipole_field, read_sensors
from .deformation import Contact, ContactSpec, DeformationParams, default_params
from .heatmap import NormStats, encode_heatmap
from .model import MLP, TrainConfig, init_mlp, predict, train
from .metrics import MetricsReport, SensitivityMap, evaluate, match, zncc_at
from .hullvol import convex_hull_volume
from .datagen import Dataset, generate_face_dataset, read_dataset, write_dataset
from .experiments import (
    StudyConfig,
    SplitSpec,
    run_table1,
    run_unseen,
    run_ablation,
    run_crossface,
    run_sensitivity,
    render_report,
    split_dataset,
)

__all__ = [
    "ObjectConfig",
    "GridCoord",
    "default_config",
    "pixel_to_point",
    "DipoleState",
    "HallFrame",
    "dipole_field",
    "read_sensors",
    "Contact",
    "ContactSpec",
    "DeformationParams",
    "default_params",
    "NormStats",
    "encode_heatmap",
    "MLP",
    "TrainConfig",
    "init_mlp",
    "predict",
    "train",
    "MetricsReport",
    "SensitivityMap",
    "evaluate",
    "match",
    "zncc_at",
    "convex_hull_volume",
    "Dataset",
    "generate_face_dataset",
    "read_dataset",
    "write_dataset",
    "StudyConfig",
    "SplitSpec",
    "run_table1",
    "run_unseen",
    "run_ablation",
    "run_crossface",
    "run_sensitivity",
    "render_report",
    "split_dataset",
    "__version__",
]
