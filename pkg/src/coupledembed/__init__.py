"""Cross-modal embedding learning with coupled classifier heads.

A shared trunk embeds samples from two modalities into one space. Two
modality-specific softmax heads are tied together by a low-rank coupling
penalty (optimized through its variational form with an auxiliary PSD
matrix) plus an orthogonality penalty, and a semi-hard cross-modal triplet
term sharpens the embedding. Training alternates a closed-form refresh of
the coupling matrix with momentum-SGD steps.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import Config, load_config
from .coupling import (CoupledHeads, RelevanceGrads, correlation_matrix,
                       init_heads, r1_grads, r1_value, r2_value_and_grads,
                       relevance_loss, softmax_loss, update_gamma)
from .data import (Batch, Dataset, GapReport, SynthSpec, SyntheticSplit,
                   generate, load_dataset, modality_gap, sample_batch)
from .errors import (ConfigError, CoupledEmbedError, DataError, NumericError)
from .evaluate import (EvalReport, ScoreMatrix, evaluate_retrieval, rank1,
                       roc, save_report, score, variance_analysis,
                       variance_curve)
from .linalg import (SvdResult, psd_inv_sqrt, psd_inverse, psd_sqrt, svd,
                     trace_norm)
from .net import (EmbeddingNet, ForwardTape, LayerSpec, default_specs, init,
                  normalize_rows, normalize_rows_backward)
from .ranking import RankingConfig, Triplet, mine_triplets, triplet_loss
from .trainer import (LogRecord, TrainConfig, TrainState, combined_loss,
                      fit, init_state, schedule, train_step, write_log)

__version__ = "0.1.0"
