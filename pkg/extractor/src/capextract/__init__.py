"""Caption-model feature extraction emitting shared interchange files.

``capextract`` runs a compact attention captioner over an image
directory and writes per-word decoder hidden states and reduced
encoder-layer features in the voxel toolkit's interchange formats. It
touches that toolkit only through those file formats; nothing else is
shared.
"""

__version__ = "1.0.0"

from .convert import convert_arrays
from .errors import CheckpointError, ExtractorError, ValidationError
from .extract import (
    IMAGE_SUFFIXES,
    RUN_FORMAT,
    RUN_VERSION,
    extract_layer_features,
    extract_word_states,
    list_images,
    load_image_tensor,
)
from .manifest import DECODE_MODES, REDUCTIONS, ExtractionManifest
from .model import (
    CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
    LAYER_NAMES,
    SPECIAL_TOKENS,
    WORDS,
    CaptionModel,
    Decoder,
    Encoder,
    ModelConfig,
    Vocabulary,
    checkpoint_sha256,
    init_model,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "CHECKPOINT_FORMAT",
    "CHECKPOINT_VERSION",
    "CaptionModel",
    "CheckpointError",
    "DECODE_MODES",
    "Decoder",
    "Encoder",
    "ExtractionManifest",
    "ExtractorError",
    "IMAGE_SUFFIXES",
    "LAYER_NAMES",
    "ModelConfig",
    "REDUCTIONS",
    "RUN_FORMAT",
    "RUN_VERSION",
    "SPECIAL_TOKENS",
    "ValidationError",
    "Vocabulary",
    "WORDS",
    "checkpoint_sha256",
    "convert_arrays",
    "extract_layer_features",
    "extract_word_states",
    "init_model",
    "list_images",
    "load_image_tensor",
    "load_checkpoint",
    "save_checkpoint",
]
