"""Extreme multiclass and multilabel classification by random label embedding.

Labels are mapped to columns of a random matrix, a multi-output regressor is
fit to the embedded targets, and predictions are decoded to the nearest
label embedding.
"""

from labelembed.decode import (
    DecodeResult, MultilabelDecodeResult, decode, decode_batch,
    decode_multilabel, decode_multilabel_exact, decode_multilabel_greedy,
)
from labelembed.dataio import (
    MultilabelDataset, RegressionDataset, SparseDataset, evaluate_accuracy,
    load_svmlight, parse_multilabel, parse_svmlight, split, synth_blobs,
    write_svmlight,
)
from labelembed.jl_embed import (
    EmbeddingMatrix, JlpReport, embed_dataset, embed_labelvec, load_matrix,
    sample_gram_matrix, sample_matrix, save_matrix, suggest_dim, verify_jlp,
)
from labelembed.regress import (
    LinearModel, TrainConfig, load_model, predict, predict_batch, save_model,
    surrogate_risk, train,
)

__all__ = [
    "DecodeResult", "MultilabelDecodeResult", "decode", "decode_batch",
    "decode_multilabel", "decode_multilabel_exact", "decode_multilabel_greedy",
    "MultilabelDataset", "RegressionDataset", "SparseDataset",
    "evaluate_accuracy", "load_svmlight", "parse_multilabel", "parse_svmlight",
    "split", "synth_blobs", "write_svmlight", "EmbeddingMatrix", "JlpReport",
    "embed_dataset", "embed_labelvec", "load_matrix", "sample_gram_matrix",
    "sample_matrix", "save_matrix", "suggest_dim", "verify_jlp", "LinearModel",
    "TrainConfig", "load_model", "predict", "predict_batch", "save_model",
    "surrogate_risk", "train",
]

__version__ = "0.1.0"
