"""Voxel-wise neural encoding from caption-derived image features.

The toolkit pools variable-length caption word states into fixed-size
image features, fits one sparse linear model per fMRI voxel with greedy
matching-pursuit solvers, evaluates and compares models by Pearson
correlation, and interprets voxels through word attribution, frequency
tables, word clouds, and cross-voxel similarity.
"""

__version__ = "1.0.0"

from .errors import AlignmentError, CapvoxError, FormatError, ValidationError
from .solver import (
    DesignMatrix,
    LeastSquaresFit,
    SolverConfig,
    SparseSolution,
    StandardizationParams,
    least_squares_on_support,
    mp_solve,
    omp_solve,
    regularize_select,
    romp_solve,
    standardize_columns,
)
from .features import (
    FeatureMatrix,
    ICF_SOURCE,
    PooledFeature,
    WordStateSequence,
    align,
    build_feature_matrix,
    cnn_source,
    pool_max,
    select_layer_sets,
    source_layer,
)
from .encoding import (
    EncodingModelSet,
    VoxelEncodingModel,
    VoxelRecord,
    VoxelResponseMatrix,
    load_models,
    predict,
    save_models,
    sub_region_names,
    train_voxelwise,
)
from .evaluation import (
    CLASS_A_BETTER,
    CLASS_B_BETTER,
    CLASS_NEITHER,
    CLASS_TIE,
    REPORT_FORMAT,
    REPORT_VERSION,
    ComparisonReport,
    EvaluationReport,
    LayerProfile,
    best_layer,
    compare,
    evaluate,
    export_report,
    layer_profile,
    pearson,
    read_report,
    significance_threshold,
)
from .interpretation import (
    DEFAULT_STOPWORDS,
    ImageSelection,
    SimilarityResult,
    WordAttribution,
    WordFrequencyTable,
    attribute_voxel,
    attribute_words,
    build_frequency_table,
    glyph_box,
    read_frequency_csv,
    render_wordcloud_svg,
    similarity_matrix,
    word_distribution_similarity,
    write_frequency_csv,
)
from .interchange import (
    FmatData,
    read_fmat,
    read_responses,
    read_voxel_meta,
    read_word_states,
    write_fmat,
    write_voxel_meta,
    write_word_states,
)
from .config import PipelineConfig, load_config, save_config
from .synth import SynthBundle, generate_bundle

__all__ = [
    "AlignmentError",
    "CLASS_A_BETTER",
    "CLASS_B_BETTER",
    "CLASS_NEITHER",
    "CLASS_TIE",
    "CapvoxError",
    "ComparisonReport",
    "DEFAULT_STOPWORDS",
    "DesignMatrix",
    "EncodingModelSet",
    "EvaluationReport",
    "FeatureMatrix",
    "FmatData",
    "FormatError",
    "ICF_SOURCE",
    "ImageSelection",
    "LayerProfile",
    "LeastSquaresFit",
    "PipelineConfig",
    "PooledFeature",
    "REPORT_FORMAT",
    "REPORT_VERSION",
    "SimilarityResult",
    "SolverConfig",
    "SparseSolution",
    "StandardizationParams",
    "SynthBundle",
    "ValidationError",
    "VoxelEncodingModel",
    "VoxelRecord",
    "VoxelResponseMatrix",
    "WordAttribution",
    "WordFrequencyTable",
    "WordStateSequence",
    "align",
    "attribute_voxel",
    "attribute_words",
    "best_layer",
    "build_feature_matrix",
    "build_frequency_table",
    "cnn_source",
    "compare",
    "evaluate",
    "export_report",
    "generate_bundle",
    "glyph_box",
    "layer_profile",
    "least_squares_on_support",
    "load_config",
    "load_models",
    "mp_solve",
    "omp_solve",
    "pearson",
    "pool_max",
    "predict",
    "read_fmat",
    "read_frequency_csv",
    "read_report",
    "read_responses",
    "read_voxel_meta",
    "read_word_states",
    "regularize_select",
    "render_wordcloud_svg",
    "romp_solve",
    "save_config",
    "save_models",
    "select_layer_sets",
    "significance_threshold",
    "similarity_matrix",
    "source_layer",
    "standardize_columns",
    "sub_region_names",
    "train_voxelwise",
    "word_distribution_similarity",
    "write_fmat",
    "write_frequency_csv",
    "write_voxel_meta",
    "write_word_states",
]
