from .crf import (
    NumericalError,
    crf_log_partition,
    crf_nll,
    crf_nll_grad,
    sequence_score,
    viterbi_decode,
)
from .model import (
    TRAINABLE,
    WORD_EMBEDDING,
    Batch,
    EncodedSentence,
    ModelConfig,
    ModelParams,
    backward,
    copy_params,
    decode,
    encode_sentence,
    forward,
    init_params,
    loss,
    make_batch,
    param_count,
    param_shapes,
    params_equal,
)

__all__ = [
    "TRAINABLE",
    "WORD_EMBEDDING",
    "Batch",
    "EncodedSentence",
    "ModelConfig",
    "ModelParams",
    "NumericalError",
    "backward",
    "copy_params",
    "crf_log_partition",
    "crf_nll",
    "crf_nll_grad",
    "decode",
    "encode_sentence",
    "forward",
    "init_params",
    "loss",
    "make_batch",
    "param_count",
    "param_shapes",
    "params_equal",
    "sequence_score",
    "viterbi_decode",
]
