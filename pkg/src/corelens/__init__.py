"""corelens: probe, project, audit, and invert frozen embedding spaces."""

from .embeddings import (EmbeddingSet, SyntheticConfig, derive_groups,
                         generate_synthetic, read_embeddings, split,
                         write_embeddings)
from .encoder import (EncoderWeights, EotVector, detokenize, embed_tokens,
                      encode_backward, encode_forward, init_encoder, tokenize)
from .errors import (ConditioningError, ConfigError, ConsistencyError,
                     CorelensError, DataError, DivergenceError, FormatError,
                     NumericalError, RankError, TrainingError)
from .inversion import (InversionConfig, InversionResult, encode_text,
                        find_closest_tokens, inversion_grid, inversion_loss,
                        invert)
from .metrics import GroupReport, compare_reports, group_report, sweep_report
from .probes import (LinearProbe, TrainConfig, TrainResult, predict,
                     train_dfr, train_erm, zero_shot_matrix)
from .projection import (BackgroundBasis, Projector, build_basis, decompose,
                         project_out, projector_matrix)
from .rng import Xoshiro256pp
from .similarity import SimilarityStats, audit, cosine_similarity

__version__ = "0.1.0"

__all__ = [
    "EmbeddingSet", "SyntheticConfig", "derive_groups", "generate_synthetic",
    "read_embeddings", "split", "write_embeddings",
    "EncoderWeights", "EotVector", "detokenize", "embed_tokens",
    "encode_backward", "encode_forward", "init_encoder", "tokenize",
    "ConditioningError", "ConfigError", "ConsistencyError", "CorelensError",
    "DataError", "DivergenceError", "FormatError", "NumericalError",
    "RankError", "TrainingError",
    "InversionConfig", "InversionResult", "encode_text", "find_closest_tokens",
    "inversion_grid", "inversion_loss", "invert",
    "GroupReport", "compare_reports", "group_report", "sweep_report",
    "LinearProbe", "TrainConfig", "TrainResult", "predict", "train_dfr",
    "train_erm", "zero_shot_matrix",
    "BackgroundBasis", "Projector", "build_basis", "decompose", "project_out",
    "projector_matrix",
    "Xoshiro256pp",
    "SimilarityStats", "audit", "cosine_similarity",
]
