"""Surrogate-driven visualization toolkit: learn a parameter-to-image
generator for a simulation ensemble, then edit its outputs by dragging
structures while the tool inverts the edit back onto the simulation
parameters."""

from .diagnostics import (
    EmbeddingReport,
    LatentGroup,
    classical_mds,
    collect_latents,
    kruskal_stress,
    manifest_groups,
    mds_embed,
    nearest_train_stats,
    sample_in_range,
    sample_out_of_range,
    validity_report,
)
from .drag import (
    DragConfig,
    DragSession,
    TrajectoryRecord,
    direction,
    disappearance,
    export_trajectory,
    feature_supervision_loss,
    inversion_step,
    run_drag,
    start_session,
    track,
)
from .errors import (
    ArgumentError,
    AssetError,
    CheckpointCorruptError,
    CheckpointError,
    CheckpointVersionError,
    DanglingImageError,
    DataError,
    DragsimError,
    EmptyPatchError,
    ManifestError,
    ManifestSchemaError,
    RangeError,
    ShapeError,
    TrainingDiverged,
)
from .losses import (
    FeatureExtractor,
    LossWeights,
    build_extractor,
    content_loss,
    edge_loss,
    perceptual_loss,
    sobel_response,
    total_loss,
)
from .imageio import decode_png, load_png, png_bytes, save_png, to_uint8
from .metrics import mse, psnr, ssim
from .model import (
    Checkpoint,
    FeatureMap,
    Generator,
    GeneratorConfig,
    load_checkpoint,
    load_generator,
    save_checkpoint,
)
from .patch import PatchSelection, hsv_similarity, select_patch
from .synthdata import (
    DatasetManifest,
    FieldFamily,
    GridSampling,
    ManifestEntry,
    ParameterSpec,
    ParameterVector,
    RandomSampling,
    apply_colormap,
    build_dataset,
    default_spec,
    desk_dataset,
    generate_image,
    load_manifest,
    render,
    save_manifest,
    synth_field,
)
from .training import MetricsReport, TrainConfig, evaluate, train

__version__ = "0.1.0"
