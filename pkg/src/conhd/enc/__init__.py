from .data import (
    DatasetError, EncDataset, load_enc_dataset, make_outsider_dataset, make_rank_label_dataset,
    load_semisynthetic_dataset, planted_hypergraph, rank_labels, read_features, split_edges,
    write_enc_dataset, write_semisynthetic_dataset,
)
from .metrics import f1_scores, mean_absolute_error
from .pipeline import (
    ApproxConfig, TrainConfig, TrainResult, approx_experiment, evaluate, sample_split, export_embeddings, train, write_train_log,
)
from .sampling import Batch, sample_batch

__all__ = [
    "ApproxConfig", "Batch", "DatasetError", "EncDataset", "TrainConfig", "TrainResult", "approx_experiment",
    "evaluate", "export_embeddings", "f1_scores", "load_enc_dataset", "make_outsider_dataset",
    "make_rank_label_dataset", "mean_absolute_error", "planted_hypergraph", "rank_labels", "sample_batch", "sample_split",
    "split_edges", "train", "write_enc_dataset", "write_train_log", "load_semisynthetic_dataset",
    "read_features", "write_semisynthetic_dataset",
]
