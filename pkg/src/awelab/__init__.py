"""awelab: a desk-scale lab for fixed-length acoustic word embeddings.

A GRU sequence autoencoder with a historyless decoder turns variable-length
feature sequences into fixed-length vectors; the lab trains it, transfers
the encoder across synthetic "languages", and evaluates the embeddings via
query-by-example retrieval (MAP), phoneme-edit-distance bucket statistics,
and PCA difference-vector analysis.
"""

from .corpus import (
    MAX_FRAMES,
    CorpusError,
    LanguagePairConfig,
    PhonemeTemplate,
    Segment,
    SegmentArchive,
    SplitError,
    SplitSpec,
    SynthConfig,
    load_archive,
    make_language_pair,
    save_archive,
    split_dataset,
    synth_corpus,
)
from .nn import (
    GRU_CONVENTION,
    AffineParams,
    GruParams,
    LrSchedule,
    NonFiniteGradientError,
    gru_forward,
    gru_step,
    init_params,
    lr_at,
    mse_loss,
    sgd_step,
)
from .sa import (
    CheckpointError,
    SAModel,
    TrainConfig,
    TrainingDivergedError,
    bptt,
    decode,
    encode,
    encode_archive,
    fine_tune,
    load_checkpoint,
    reconstruction_loss,
    save_checkpoint,
    train,
)
from .ne import ne_encode, partition_bounds
from .retrieval import (
    IndexedEmbedding,
    RetrievalError,
    RetrievalIndex,
    average_precision,
    build_index,
    cosine,
    load_embeddings,
    mean_average_precision,
    query,
    save_embeddings,
)
from .analysis import (
    AnalysisError,
    BucketStat,
    PcaProjection,
    PsedBucketStats,
    WordCentroid,
    edit_distance,
    pair_difference_vectors,
    pca_fit,
    psed_buckets,
    word_centroid,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    HarnessError,
    ReportCell,
    run_dimension_sweep,
    run_transfer_experiment,
)
from .cli import cli_main

__version__ = "0.1.0"
