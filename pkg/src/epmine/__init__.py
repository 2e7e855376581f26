"""Online triplet mining (easy/hard positives, hard/semi-hard/easy negatives)
and NCA losses on unit-sphere embeddings, with a numpy MLP encoder and
retrieval diagnostics."""
from .data import (
    GroupBatch,
    LabeledDataset,
    SamplerConfig,
    SyntheticSpec,
    generate_synthetic,
    load_features,
    sample_group_batch,
    split_by_class,
)
from .encoder import (
    MlpConfig, MlpParams, TrainConfig, backward, embed, forward, init_params, load_checkpoint,
    lr_at_epoch, save_checkpoint, sgd_step, train,
)
from .evaluation import (
    RetrievalConfig,
    RetrievalReport,
    export_embeddings,
    intra_class_spread,
    neighbor_stats,
    pca_project_2d,
    recall_at_k,
)
from .linalg import cosine_similarity_matrix, l2_normalize_rows, squared_distance_from_similarity
from .losses import LossConfig, LossOutput, compute_loss, nca_term, triplet_margin_loss
from .mining import (
    MiningSelection,
    mine_batch,
    mine_easy_negative,
    mine_easy_positive,
    mine_hard_negative,
    mine_hard_positive,
    mine_semi_hard_negative,
)

__version__ = "0.1.0"
