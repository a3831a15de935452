"""voxelforge: interactive 3D volumetric segmentation engine.

Core pieces: volume/label containers with NIfTI I/O, 3D connected
components, triaxial-feature SLIC supervoxels, a promptable class-embedding
head, sliding-window inference, click-driven mask editing with sessions,
prompt samplers, and a dice/click-curve evaluation harness. A CLI
(``voxelforge``) and an HTTP session service expose everything.
"""

from .components import (
    ComponentMap,
    component_containing,
    connected_components,
    largest_component,
    mask_diff_components,
)
from .editing import MergeInput, SegmentationSession, merge_interactive
from .errors import (
    ContractError,
    DimensionalityError,
    EngineError,
    MappingError,
    NiftiFormatError,
    NoSampleError,
    StateError,
    UnsupportedCapabilityError,
    UnsupportedDatatypeError,
)
from .grid import (
    BinaryMask,
    LabelVolume,
    Patch,
    Volume,
    crop_patch,
    empty_mask,
    resample,
    resampled_dims,
)
from .labelspace import (
    DatasetMapping,
    LabelSpace,
    default_labelspace,
    load_labelspace,
    remap_labels,
)
from .metrics import ClickCurve, DiceReport, EvalCase, dice, evaluate_dataset, simulate_session
from .nifti import read_nifti, write_nifti
from .predictors import (
    ConstantPredictor,
    ExternalPredictor,
    OraclePredictor,
    Predictor,
    RegionGrowPredictor,
    resolve_predictor,
)
from .prompts import (
    ClassPrompt,
    PointPrompt,
    PromptContext,
    PromptHeadParams,
    embed_points,
    prompt_head,
    random_head_params,
)
from .sampling import (
    PointSampler,
    SamplerConfig,
    TrainingPair,
    export_training_pair,
    next_eval_click,
    sample_class_prompts,
    sample_fp_fn_points,
    sample_pair,
)
from .sliding import BlendKernel, binarize, point_local_inference, sliding_window
from .supervoxel import (
    FeatureVolume,
    SliceFeatureExtractor,
    SupervoxelMap,
    builtin_extractor,
    slic3d,
    triaxial_features,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
