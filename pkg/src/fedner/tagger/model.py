"""BiLSTM-CRF tagger over frozen word vectors and a character BiLSTM."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..corpus import PAD_ID, TAG_TO_ID, TAGS, Sentence, Vocabulary
from . import crf
from .crf import NumericalError, check_finite
from .lstm import lstm_backward, lstm_forward, reverse_index, take_time

WORD_EMBEDDING = "word_embedding"
TRAINABLE = (
    "char_embedding",
    "char_lstm_fw_kernel",
    "char_lstm_fw_bias",
    "char_lstm_bw_kernel",
    "char_lstm_bw_bias",
    "word_lstm_fw_kernel",
    "word_lstm_fw_bias",
    "word_lstm_bw_kernel",
    "word_lstm_bw_bias",
    "dense_kernel",
    "dense_bias",
    "crf_transitions",
    "crf_start",
    "crf_end",
)
PAD_TAG_ID = 0

ModelParams = dict[str, np.ndarray]


@dataclass(frozen=True)
class ModelConfig:
    n_words: int
    n_chars: int
    word_dim: int = 300
    char_dim: int = 100
    char_hidden: int = 25
    word_hidden: int = 100
    dropout_rate: float = 0.5
    tagset_size: int = len(TAGS)

    def __post_init__(self):
        for name in ("n_words", "n_chars", "word_dim", "char_dim", "char_hidden", "word_hidden", "tagset_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def word_input_dim(self) -> int:
        return self.word_dim + 2 * self.char_hidden

    def to_json(self) -> dict:
        return asdict(self)


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    ch, wh, T = config.char_hidden, config.word_hidden, config.tagset_size
    shapes = {
        "char_embedding": (config.n_chars, config.char_dim),
        "word_lstm_fw_kernel": (config.word_input_dim + wh, 4 * wh),
        "dense_kernel": (2 * wh, T),
        "dense_bias": (T,),
        "crf_transitions": (T, T),
        "crf_start": (T,),
        "crf_end": (T,),
    }
    for d in ("fw", "bw"):
        shapes[f"char_lstm_{d}_kernel"] = (config.char_dim + ch, 4 * ch)
        shapes[f"char_lstm_{d}_bias"] = (4 * ch,)
        shapes[f"word_lstm_{d}_kernel"] = (config.word_input_dim + wh, 4 * wh)
        shapes[f"word_lstm_{d}_bias"] = (4 * wh,)
    return {name: shapes[name] for name in TRAINABLE}


def param_count(config: ModelConfig) -> int:
    """Number of trainable scalars; the frozen word vectors are not counted."""
    return sum(int(np.prod(s)) for s in param_shapes(config).values())


def init_params(config: ModelConfig, seed: int, word_vectors: np.ndarray) -> ModelParams:
    """Glorot-uniform kernels and character embeddings, zero biases and CRF scores."""
    word_vectors = np.asarray(word_vectors, dtype=np.float64)
    if word_vectors.shape != (config.n_words, config.word_dim):
        raise ValueError(
            f"word vectors have shape {word_vectors.shape}, expected ({config.n_words}, {config.word_dim})"
        )
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if len(shape) == 2 and not name.startswith("crf_"):
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, shape)
        else:
            params[name] = np.zeros(shape)
    params["char_embedding"][PAD_ID] = 0.0
    params[WORD_EMBEDDING] = word_vectors.copy()
    params[WORD_EMBEDDING][PAD_ID] = 0.0
    return params


def copy_params(params: ModelParams) -> ModelParams:
    return {k: v.copy() for k, v in params.items()}


def params_equal(a: ModelParams, b: ModelParams) -> bool:
    """Bitwise equality of two parameter sets."""
    return a.keys() == b.keys() and all(
        a[k].shape == b[k].shape and a[k].tobytes() == b[k].tobytes() for k in a
    )


@dataclass
class Batch:
    word_ids: np.ndarray  # [B, L]
    char_ids: np.ndarray  # [B, L, C]
    mask: np.ndarray  # [B, L] bool
    gold_tags: np.ndarray  # [B, L], PAD_TAG_ID under mask=0

    def __len__(self):
        return self.word_ids.shape[0]


@dataclass(frozen=True)
class EncodedSentence:
    word_ids: np.ndarray
    char_ids: tuple[np.ndarray, ...]
    tag_ids: np.ndarray


def encode_sentence(sentence: Sentence, vocab: Vocabulary) -> EncodedSentence:
    return EncodedSentence(
        np.array([vocab.word_id(w) for w in sentence.words], dtype=np.int64),
        tuple(np.array([vocab.char_id(ch) for ch in w], dtype=np.int64) for w in sentence.words),
        np.array([TAG_TO_ID[t] for t in sentence.tags], dtype=np.int64),
    )


def make_batch(encoded, pad_to: int | None = None) -> Batch:
    """Right-pad encoded sentences into dense arrays."""
    encoded = list(encoded)
    B = len(encoded)
    L = max(len(e.word_ids) for e in encoded)
    if pad_to is not None:
        L = max(L, pad_to)
    C = max(len(c) for e in encoded for c in e.char_ids)
    word_ids = np.full((B, L), PAD_ID, dtype=np.int64)
    char_ids = np.full((B, L, C), PAD_ID, dtype=np.int64)
    mask = np.zeros((B, L), dtype=bool)
    tags = np.full((B, L), PAD_TAG_ID, dtype=np.int64)
    for b, e in enumerate(encoded):
        n = len(e.word_ids)
        word_ids[b, :n] = e.word_ids
        mask[b, :n] = True
        tags[b, :n] = e.tag_ids
        for i, chars in enumerate(e.char_ids):
            char_ids[b, i, : len(chars)] = chars
    return Batch(word_ids, char_ids, mask, tags)


def _dropout_mask(rng, shape, rate):
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _bilstm_forward(x, mask, params, prefix):
    """x: [S, N, D] time-major; returns fw and bw states, each [S, N, H], bw in natural order."""
    rev = reverse_index(mask)
    hs_fw, cache_fw = lstm_forward(x, mask, params[f"{prefix}_fw_kernel"], params[f"{prefix}_fw_bias"])
    hs_bw_rev, cache_bw = lstm_forward(
        take_time(x, rev), mask, params[f"{prefix}_bw_kernel"], params[f"{prefix}_bw_bias"]
    )
    return hs_fw, hs_bw_rev, (rev, cache_fw, cache_bw)


def _bilstm_backward(d_fw, d_bw_rev, cache, grads, prefix):
    rev, cache_fw, cache_bw = cache
    dx_fw, grads[f"{prefix}_fw_kernel"], grads[f"{prefix}_fw_bias"] = lstm_backward(d_fw, cache_fw)
    dx_bw_rev, grads[f"{prefix}_bw_kernel"], grads[f"{prefix}_bw_bias"] = lstm_backward(d_bw_rev, cache_bw)
    return dx_fw + take_time(dx_bw_rev, rev)


def _forward(batch: Batch, params: ModelParams, dropout_rate: float, train_mode: bool, dropout_seed):
    B, L, C = batch.char_ids.shape
    ch = params["char_lstm_fw_bias"].shape[0] // 4
    wh = params["word_lstm_fw_bias"].shape[0] // 4

    # Character encoder over real tokens only: final states of both directions.
    tokens = np.flatnonzero(batch.mask.reshape(-1))
    char_tm = batch.char_ids.reshape(B * L, C)[tokens].T
    char_mask = char_tm != PAD_ID
    char_x = params["char_embedding"][char_tm]
    c_fw, c_bw_rev, char_cache = _bilstm_forward(char_x, char_mask, params, "char_lstm")
    char_repr = np.zeros((B * L, 2 * ch))
    char_repr[tokens] = np.concatenate([c_fw[-1], c_bw_rev[-1]], axis=1)
    char_repr = char_repr.reshape(B, L, 2 * ch)
    check_finite("char_repr", char_repr)

    x = np.concatenate([params[WORD_EMBEDDING][batch.word_ids], char_repr], axis=2)
    drop_in = drop_out = None
    if train_mode and dropout_rate > 0.0:
        rng = np.random.default_rng(dropout_seed)
        drop_in = _dropout_mask(rng, x.shape, dropout_rate)
        drop_out = _dropout_mask(rng, (B, L, 2 * wh), dropout_rate)
        x = x * drop_in

    word_mask = batch.mask.T
    w_fw, w_bw_rev, word_cache = _bilstm_forward(x.transpose(1, 0, 2), word_mask, params, "word_lstm")
    rev = word_cache[0]
    hidden = np.concatenate([w_fw, take_time(w_bw_rev, rev)], axis=2).transpose(1, 0, 2)
    check_finite("word_lstm_out", hidden)
    if drop_out is not None:
        hidden = hidden * drop_out

    emissions = hidden @ params["dense_kernel"] + params["dense_bias"]
    check_finite("emissions", emissions)
    cache = (tokens, char_tm, char_cache, word_cache, drop_in, drop_out, hidden, ch, wh)
    return emissions, cache


def forward(batch: Batch, params: ModelParams, dropout_rate: float = 0.0, train_mode: bool = False, dropout_seed=0):
    """Emission scores ``[B, L, T]``; positions under ``mask == 0`` carry no meaning."""
    return _forward(batch, params, dropout_rate, train_mode, dropout_seed)[0]


def backward(batch: Batch, params: ModelParams, dropout_rate: float = 0.0, train_mode: bool = True, dropout_seed=0):
    """Mean CRF negative log-likelihood of the batch and its gradient per trainable tensor."""
    emissions, cache = _forward(batch, params, dropout_rate, train_mode, dropout_seed)
    tokens, char_tm, char_cache, word_cache, drop_in, drop_out, hidden, ch, wh = cache
    B, L, C = batch.char_ids.shape

    loss, d_em, grads_crf_a, grads_crf_s, grads_crf_e = crf.crf_nll_grad(
        emissions, params["crf_transitions"], params["crf_start"], params["crf_end"], batch.gold_tags, batch.mask
    )
    grads = {"crf_transitions": grads_crf_a, "crf_start": grads_crf_s, "crf_end": grads_crf_e}
    grads["dense_kernel"] = hidden.reshape(B * L, -1).T @ d_em.reshape(B * L, -1)
    grads["dense_bias"] = d_em.sum(axis=(0, 1))
    d_hidden = d_em @ params["dense_kernel"].T
    if drop_out is not None:
        d_hidden = d_hidden * drop_out

    d_hidden = d_hidden.transpose(1, 0, 2)
    rev = word_cache[0]
    d_x = _bilstm_backward(d_hidden[:, :, :wh], take_time(d_hidden[:, :, wh:], rev), word_cache, grads, "word_lstm")
    d_x = d_x.transpose(1, 0, 2)
    if drop_in is not None:
        d_x = d_x * drop_in

    d_char = d_x[:, :, -2 * ch :].reshape(B * L, 2 * ch)[tokens]
    d_c_fw = np.zeros((C, len(tokens), ch))
    d_c_bw = np.zeros((C, len(tokens), ch))
    d_c_fw[-1] = d_char[:, :ch]
    d_c_bw[-1] = d_char[:, ch:]
    d_char_x = _bilstm_backward(d_c_fw, d_c_bw, char_cache, grads, "char_lstm")
    d_char_emb = np.zeros_like(params["char_embedding"])
    np.add.at(d_char_emb, char_tm, d_char_x)
    grads["char_embedding"] = d_char_emb

    grads = {name: grads[name] for name in TRAINABLE}
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(name, "non-finite gradient")
    return loss, grads


def loss(batch: Batch, params: ModelParams, dropout_rate: float = 0.0, train_mode: bool = False, dropout_seed=0) -> float:
    emissions = forward(batch, params, dropout_rate, train_mode, dropout_seed)
    return crf.crf_nll(
        emissions, params["crf_transitions"], params["crf_start"], params["crf_end"], batch.gold_tags, batch.mask
    )


def decode(batch: Batch, params: ModelParams) -> list[list[int]]:
    emissions = forward(batch, params, train_mode=False)
    paths, _ = crf.viterbi_decode(
        emissions, params["crf_transitions"], params["crf_start"], params["crf_end"], batch.mask
    )
    return paths
