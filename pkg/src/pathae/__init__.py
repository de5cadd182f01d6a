"""Pathway-constrained autoencoders for expression matrices.

Dense AE/VAE baselines and their pathway-masked variants (PAAE/PAVAE),
trained from scratch with hand-derived backprop, plus the surrounding
machinery: data ingestion, normalizers, classifiers, metrics, grid-search
and external-validation pipelines, and an interpretability/survival suite.
"""

__version__ = "0.1.0"

from .dataio import (
    ExpressionTable,
    LabelTable,
    Normalizer,
    PathwaySet,
    Scale,
    SurvivalTable,
    apply_normalizer,
    fit_normalizer,
    intersect_genes,
    load_expression_tsv,
    load_labels,
    load_survival,
    map_gene_ids,
    merge_duplicate_genes,
    parse_gmt,
    parse_msigdb_json,
    resolve_pathways,
)
from .errors import (
    ConfigError,
    DataError,
    NumericError,
    ParseError,
    PathaeError,
    ShapeError,
    TrainingDiverged,
)
from .models import (
    ArchitectureConfig,
    Model,
    PathwayMask,
    TrainConfig,
    beta_schedule,
    build_model,
    count_params,
    fit,
    kl_gaussian,
    load_checkpoint,
    mse_loss,
    save_checkpoint,
)
from .ndcore import RngStream
from .pipeline import (
    GridSpec,
    RunReport,
    compare_runs,
    cross_validate,
    external_validate,
    extract_representation,
)
from .synth import make_synthetic, write_fixture
