"""Hierarchical attention encoder-decoder over latent clip sequences.

Structure: clips are split into contiguous segments; each segment runs through
a bidirectional gated recurrent (LSTM) encoder and is attention-pooled into one
segment vector; the segment-vector sequence runs through a second bidirectional
encoder with its own attention pool, and the pooled video vector initializes
the decoder state through a learned affine map. The decoder is a single LSTM
consuming latent word vectors and emitting a softmax distribution over the
vocabulary at every step.

All forward passes cache what the handwritten reverse-mode pass needs; the
gradients are validated against central finite differences in the test suite.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import END_INDEX, START_INDEX, ClipFeatureSequence, Sentence
from .latent_space import LatentSpaceParams, project_video


# ---------------------------------------------------------------------------
# segmentation strategies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentationStrategy:
    """One of: two-split, pair-split, even-k (k contiguous near-equal parts)."""

    kind: str  # "two-split" | "pair-split" | "even"
    k: int = 7

    def __post_init__(self):
        if self.kind not in ("two-split", "pair-split", "even"):
            raise ValueError(f"unknown segmentation strategy {self.kind!r}")
        if self.kind == "even" and self.k < 1:
            raise ValueError("even-k needs k >= 1")

    def __str__(self) -> str:
        return f"even-{self.k}" if self.kind == "even" else self.kind


DEFAULT_STRATEGY = SegmentationStrategy("even", 7)

_STRATEGY_CODES = {"two-split": 1, "pair-split": 2, "even": 3}
_STRATEGY_KINDS = {v: k for k, v in _STRATEGY_CODES.items()}


def parse_strategy(text: str) -> SegmentationStrategy:
    text = text.strip().lower()
    if text in ("two-split", "pair-split"):
        return SegmentationStrategy(text)
    if text.startswith("even-"):
        try:
            return SegmentationStrategy("even", int(text[5:]))
        except ValueError:
            pass
    raise ValueError(
        f"bad strategy {text!r}; expected two-split, pair-split, or even-<k>")


def segment_clips(n: int, strategy: SegmentationStrategy
                  ) -> list[tuple[int, int]]:
    """Contiguous, disjoint, covering half-open clip ranges."""
    if n < 1:
        raise ValueError("need at least one clip")
    if strategy.kind == "two-split":
        first = (n + 1) // 2  # odd n: first half gets the extra clip
        return [(0, first)] + ([(first, n)] if n > first else [])
    if strategy.kind == "pair-split":
        return [(s, min(s + 2, n)) for s in range(0, n, 2)]
    k = min(strategy.k, n)
    base, rem = divmod(n, k)
    ranges = []
    start = 0
    for seg in range(k):
        size = base + (1 if seg < rem else 0)
        ranges.append((start, start + size))
        start += size
    return ranges


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass
class RecurrentCellParams:
    """Gated recurrent cell weights; gate row order is input, forget, output, candidate."""

    w: np.ndarray  # (4q, p) input weights
    u: np.ndarray  # (4q, q) recurrent weights
    b: np.ndarray  # (4q,)

    @property
    def state_size(self) -> int:
        return self.u.shape[1]

    @property
    def input_size(self) -> int:
        return self.w.shape[1]


@dataclass
class AttentionParams:
    proj: np.ndarray   # (q_att, h_dim) score projection
    bias: np.ndarray   # (q_att,)
    query: np.ndarray  # (q_att,) context query vector


@dataclass
class AffineParams:
    w: np.ndarray
    b: np.ndarray


@dataclass
class HanParams:
    clip_fwd: RecurrentCellParams   # input d_s
    clip_bwd: RecurrentCellParams
    clip_att: AttentionParams       # over 2q clip-encoder states
    word_fwd: RecurrentCellParams   # input 2q segment vectors
    word_bwd: RecurrentCellParams
    word_att: AttentionParams
    init_h: AffineParams            # (q, 2q) decoder state initialization
    init_c: AffineParams
    decoder: RecurrentCellParams    # input d_s latent word vectors
    emit_w: np.ndarray              # (d_w, q) softmax emission
    emit_b: np.ndarray              # (d_w,)

    @property
    def state_size(self) -> int:
        return self.decoder.state_size

    @property
    def vocab_size(self) -> int:
        return self.emit_w.shape[0]


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    s = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-s, s, size=(rows, cols))


def _init_cell(rng: np.random.Generator, p: int, q: int) -> RecurrentCellParams:
    b = np.zeros(4 * q)
    b[q:2 * q] = 1.0  # forget-gate bias
    return RecurrentCellParams(_glorot(rng, 4 * q, p), _glorot(rng, 4 * q, q), b)


def _init_attention(rng: np.random.Generator, q_att: int, h_dim: int) -> AttentionParams:
    return AttentionParams(_glorot(rng, q_att, h_dim), np.zeros(q_att),
                           _glorot(rng, q_att, 1)[:, 0])


def init_han_params(rng: np.random.Generator, d_s: int, q: int, q_att: int,
                    d_w: int) -> HanParams:
    return HanParams(
        clip_fwd=_init_cell(rng, d_s, q),
        clip_bwd=_init_cell(rng, d_s, q),
        clip_att=_init_attention(rng, q_att, 2 * q),
        word_fwd=_init_cell(rng, 2 * q, q),
        word_bwd=_init_cell(rng, 2 * q, q),
        word_att=_init_attention(rng, q_att, 2 * q),
        init_h=AffineParams(_glorot(rng, q, 2 * q), np.zeros(q)),
        init_c=AffineParams(_glorot(rng, q, 2 * q), np.zeros(q)),
        decoder=_init_cell(rng, d_s, q),
        emit_w=_glorot(rng, d_w, q),
        emit_b=np.zeros(d_w),
    )


def init_latent_params(rng: np.random.Generator, d_s: int, d_c: int,
                       d_w: int, scale: float = 4.0) -> LatentSpaceParams:
    # the projections start larger than the recurrent weights: the alignment
    # loss pulls them toward zero at a scale-independent rate, and a small
    # start collapses the latent space before the decoder can shape it
    return LatentSpaceParams(scale * _glorot(rng, d_s, d_c),
                             scale * _glorot(rng, d_s, d_w))


def han_param_items(p: HanParams) -> list[tuple[str, np.ndarray]]:
    """All parameter arrays in the fixed checkpoint / gradient order."""
    items: list[tuple[str, np.ndarray]] = []
    for name in ("clip_fwd", "clip_bwd"):
        cell = getattr(p, name)
        items += [(f"{name}.w", cell.w), (f"{name}.u", cell.u), (f"{name}.b", cell.b)]
    items += [("clip_att.proj", p.clip_att.proj), ("clip_att.bias", p.clip_att.bias),
              ("clip_att.query", p.clip_att.query)]
    for name in ("word_fwd", "word_bwd"):
        cell = getattr(p, name)
        items += [(f"{name}.w", cell.w), (f"{name}.u", cell.u), (f"{name}.b", cell.b)]
    items += [("word_att.proj", p.word_att.proj), ("word_att.bias", p.word_att.bias),
              ("word_att.query", p.word_att.query)]
    items += [("init_h.w", p.init_h.w), ("init_h.b", p.init_h.b),
              ("init_c.w", p.init_c.w), ("init_c.b", p.init_c.b)]
    items += [("decoder.w", p.decoder.w), ("decoder.u", p.decoder.u),
              ("decoder.b", p.decoder.b)]
    items += [("emit_w", p.emit_w), ("emit_b", p.emit_b)]
    return items


def zero_han_grads(p: HanParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in han_param_items(p)}


# ---------------------------------------------------------------------------
# recurrent cell, bidirectional encoder, attention pool
# ---------------------------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def cell_step(cell: RecurrentCellParams, x: np.ndarray,
              state: tuple[np.ndarray, np.ndarray] | None = None
              ) -> tuple[np.ndarray, np.ndarray]:
    """One gated recurrent step; returns (hidden, cell) state."""
    (h, c), cache = _cell_forward(cell, x, state)
    return h, c


def _cell_forward(cell, x, state):
    q = cell.state_size
    if x.shape[0] != cell.input_size:
        raise ValueError(
            f"input size {x.shape[0]} does not match cell ({cell.input_size})")
    if state is None:
        state = (np.zeros(q), np.zeros(q))
    h_prev, c_prev = state
    z = cell.w @ x + cell.u @ h_prev + cell.b
    i, f, o = _sigmoid(z[:q]), _sigmoid(z[q:2 * q]), _sigmoid(z[2 * q:3 * q])
    g = np.tanh(z[3 * q:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    cache = (x, h_prev, c_prev, i, f, o, g, tc)
    return (h, c), cache


def _cell_backward(cell, cache, dh, dc):
    """Given upstream dh, dc for one step, return param grads and input grads."""
    x, h_prev, c_prev, i, f, o, g, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    di, df, dg = dc * g, dc * c_prev, dc * i
    dc_prev = dc * f
    dz = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                         do * o * (1 - o), dg * (1 - g * g)])
    dw = np.outer(dz, x)
    du = np.outer(dz, h_prev)
    dx = cell.w.T @ dz
    dh_prev = cell.u.T @ dz
    return dw, du, dz, dx, dh_prev, dc_prev


def _lstm_forward(cell, xs, state=None):
    hs = np.empty((len(xs), cell.state_size))
    caches = []
    for t, x in enumerate(xs):
        (h, c), cache = _cell_forward(cell, x, state)
        state = (h, c)
        hs[t] = h
        caches.append(cache)
    return hs, caches


def _lstm_backward(cell, caches, dhs, grads, prefix,
                   dh_last=None, dc_last=None):
    """Accumulate cell grads into ``grads[prefix.*]``; return dxs, dh0, dc0."""
    q = cell.state_size
    dh = np.zeros(q) if dh_last is None else dh_last.copy()
    dc = np.zeros(q) if dc_last is None else dc_last.copy()
    dxs = np.empty((len(caches), cell.input_size))
    for t in range(len(caches) - 1, -1, -1):
        dw, du, db, dx, dh, dc = _cell_backward(cell, caches[t], dh + dhs[t], dc)
        grads[f"{prefix}.w"] += dw
        grads[f"{prefix}.u"] += du
        grads[f"{prefix}.b"] += db
        dxs[t] = dx
    return dxs, dh, dc


def bidirectional_encode(fwd: RecurrentCellParams, bwd: RecurrentCellParams,
                         xs: np.ndarray) -> np.ndarray:
    hs, _ = _bidir_forward(fwd, bwd, xs)
    return hs


def _bidir_forward(fwd, bwd, xs):
    if len(xs) < 1:
        raise ValueError("cannot encode an empty sequence")
    hf, cf = _lstm_forward(fwd, xs)
    hb_rev, cb = _lstm_forward(bwd, xs[::-1])
    hs = np.concatenate([hf, hb_rev[::-1]], axis=1)
    return hs, (cf, cb)


def _bidir_backward(fwd, bwd, caches, dhs, grads, fwd_name, bwd_name):
    cf, cb = caches
    q = fwd.state_size
    dxs_f, _, _ = _lstm_backward(fwd, cf, dhs[:, :q], grads, fwd_name)
    dxs_b, _, _ = _lstm_backward(bwd, cb, dhs[::-1, q:], grads, bwd_name)
    return dxs_f + dxs_b[::-1]


def attention_pool(params: AttentionParams, hidden_seq: np.ndarray) -> np.ndarray:
    pooled, _ = _attention_forward(params, hidden_seq)
    return pooled


def _attention_forward(params, hs):
    if len(hs) < 1:
        raise ValueError("cannot pool an empty sequence")
    a = np.tanh(hs @ params.proj.T + params.bias)   # (T, q_att)
    scores = a @ params.query
    scores = scores - scores.max()
    e = np.exp(scores)
    weights = e / e.sum()
    pooled = weights @ hs
    return pooled, (hs, a, weights)


def _attention_backward(params, cache, dout, grads, name):
    hs, a, weights = cache
    dweights = hs @ dout
    dhs = np.outer(weights, dout)
    # softmax backward
    dscores = weights * (dweights - weights @ dweights)
    da = np.outer(dscores, params.query)
    grads[f"{name}.query"] += a.T @ dscores
    dpre = da * (1.0 - a * a)
    grads[f"{name}.proj"] += dpre.T @ hs
    grads[f"{name}.bias"] += dpre.sum(axis=0)
    dhs += dpre @ params.proj
    return dhs


# ---------------------------------------------------------------------------
# hierarchical encoding
# ---------------------------------------------------------------------------

@dataclass
class EncodedVideo:
    h0: np.ndarray           # decoder initial hidden state
    c0: np.ndarray           # decoder initial cell state
    video_vector: np.ndarray  # pooled 2q representation
    cache: tuple


def encode_video(params: HanParams, latent_clips: np.ndarray,
                 segmentation: list[tuple[int, int]]) -> EncodedVideo:
    covered = [i for a, b in segmentation for i in range(a, b)]
    if covered != list(range(len(latent_clips))):
        raise ValueError("segmentation does not partition the clip sequence")
    seg_caches = []
    seg_vectors = np.empty((len(segmentation), 2 * params.clip_fwd.state_size))
    for s, (a, b) in enumerate(segmentation):
        hs, bid_cache = _bidir_forward(params.clip_fwd, params.clip_bwd,
                                       latent_clips[a:b])
        pooled, att_cache = _attention_forward(params.clip_att, hs)
        seg_vectors[s] = pooled
        seg_caches.append((bid_cache, att_cache))
    word_hs, word_bid_cache = _bidir_forward(params.word_fwd, params.word_bwd,
                                             seg_vectors)
    video_vector, word_att_cache = _attention_forward(params.word_att, word_hs)
    h0 = params.init_h.w @ video_vector + params.init_h.b
    c0 = params.init_c.w @ video_vector + params.init_c.b
    cache = (segmentation, seg_caches, word_bid_cache, word_att_cache,
             video_vector)
    return EncodedVideo(h0, c0, video_vector, cache)


def _encode_backward(params: HanParams, enc: EncodedVideo, dh0, dc0,
                     grads, n_clips: int) -> np.ndarray:
    segmentation, seg_caches, word_bid_cache, word_att_cache, u = enc.cache
    grads["init_h.w"] += np.outer(dh0, u)
    grads["init_h.b"] += dh0
    grads["init_c.w"] += np.outer(dc0, u)
    grads["init_c.b"] += dc0
    du = params.init_h.w.T @ dh0 + params.init_c.w.T @ dc0
    dword_hs = _attention_backward(params.word_att, word_att_cache, du,
                                   grads, "word_att")
    dseg = _bidir_backward(params.word_fwd, params.word_bwd, word_bid_cache,
                           dword_hs, grads, "word_fwd", "word_bwd")
    dlatent = np.zeros((n_clips, params.clip_fwd.input_size))
    for s, (a, b) in enumerate(segmentation):
        bid_cache, att_cache = seg_caches[s]
        dhs = _attention_backward(params.clip_att, att_cache, dseg[s],
                                  grads, "clip_att")
        dlatent[a:b] = _bidir_backward(params.clip_fwd, params.clip_bwd,
                                       bid_cache, dhs, grads,
                                       "clip_fwd", "clip_bwd")
    return dlatent


# ---------------------------------------------------------------------------
# emission and coherence loss
# ---------------------------------------------------------------------------

def emission_probs(params: HanParams, h_t: np.ndarray) -> np.ndarray:
    logits = params.emit_w @ h_t + params.emit_b
    logits = logits - logits.max()
    e = np.exp(logits)
    return e / e.sum()


def _emission_log_probs(params, h_t):
    logits = params.emit_w @ h_t + params.emit_b
    logits = logits - logits.max()
    return logits - np.log(np.exp(logits).sum())


def _coherence_forward(han: HanParams, ls: LatentSpaceParams,
                       video: ClipFeatureSequence, sentence: Sentence,
                       strategy: SegmentationStrategy):
    latent_clips = project_video(ls.t_v, video)
    enc = encode_video(han, latent_clips, segment_clips(video.n, strategy))
    input_tokens = (START_INDEX,) + sentence.tokens
    targets = sentence.tokens + (END_INDEX,)
    state = (enc.h0, enc.c0)
    dec_caches = []
    probs = []
    loss = 0.0
    for token, target in zip(input_tokens, targets):
        x = ls.t_s[:, token]
        state, cache = _cell_forward(han.decoder, x, state)
        p = emission_probs(han, state[0])
        loss -= float(np.log(p[target]))
        dec_caches.append(cache)
        probs.append(p)
    fwd = (latent_clips, enc, input_tokens, targets, dec_caches, probs, state)
    return loss, fwd


def coherence_loss(han: HanParams, ls: LatentSpaceParams,
                   video: ClipFeatureSequence, sentence: Sentence,
                   strategy: SegmentationStrategy = DEFAULT_STRATEGY) -> float:
    """Teacher-forced negative log-likelihood of the gold sentence plus #End."""
    loss, _ = _coherence_forward(han, ls, video, sentence, strategy)
    return loss


def coherence_grad(han: HanParams, ls: LatentSpaceParams,
                   video: ClipFeatureSequence, sentence: Sentence,
                   strategy: SegmentationStrategy = DEFAULT_STRATEGY
                   ) -> tuple[dict[str, np.ndarray], np.ndarray, np.ndarray]:
    """Reverse-mode gradients of the coherence loss.

    Returns (HAN grads keyed like ``han_param_items``, dL/dT_v, dL/dT_s).
    Input gradients reach the projections as outer products: clip latents map
    back through the raw clip features, word latents through their one-hots.
    """
    loss, fwd = _coherence_forward(han, ls, video, sentence, strategy)
    latent_clips, enc, input_tokens, targets, dec_caches, probs, _ = fwd
    grads = zero_han_grads(han)
    g_ts = np.zeros_like(ls.t_s)

    steps = len(dec_caches)
    q = han.state_size
    dh, dc = np.zeros(q), np.zeros(q)
    for t in range(steps - 1, -1, -1):
        dlogits = probs[t].copy()
        dlogits[targets[t]] -= 1.0
        h_t = dec_caches[t][5] * dec_caches[t][7]  # o * tanh(c)
        grads["emit_w"] += np.outer(dlogits, h_t)
        grads["emit_b"] += dlogits
        dh = dh + han.emit_w.T @ dlogits
        dw, du, db, dx, dh, dc = _cell_backward(han.decoder, dec_caches[t], dh, dc)
        grads["decoder.w"] += dw
        grads["decoder.u"] += du
        grads["decoder.b"] += db
        g_ts[:, input_tokens[t]] += dx
    dlatent = _encode_backward(han, enc, dh, dc, grads, video.n)
    g_tv = dlatent.T @ video.clips
    return grads, g_tv, g_ts


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------

def _decode_init(han, ls, video, strategy):
    latent_clips = project_video(ls.t_v, video)
    enc = encode_video(han, latent_clips, segment_clips(video.n, strategy))
    return enc.h0, enc.c0


def _decode_step(han, ls, state, token):
    x = ls.t_s[:, token]
    h, c = cell_step(han.decoder, x, state)
    log_p = _emission_log_probs(han, h)
    log_p = log_p.copy()
    log_p[START_INDEX] = -np.inf  # the start symbol is never emitted
    return (h, c), log_p


def greedy_decode(han: HanParams, ls: LatentSpaceParams,
                  video: ClipFeatureSequence,
                  strategy: SegmentationStrategy = DEFAULT_STRATEGY,
                  max_len: int = 30) -> tuple[int, ...]:
    """Most-probable-word decoding; stops at #End or max_len tokens."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    state = _decode_init(han, ls, video, strategy)
    token = START_INDEX
    out: list[int] = []
    while len(out) < max_len:
        state, log_p = _decode_step(han, ls, state, token)
        token = int(np.argmax(log_p))
        if token == END_INDEX:
            break
        out.append(token)
    return tuple(out)


def kbest_decode(han: HanParams, ls: LatentSpaceParams,
                 video: ClipFeatureSequence,
                 strategy: SegmentationStrategy = DEFAULT_STRATEGY,
                 k: int = 5, max_len: int = 30
                 ) -> list[tuple[tuple[int, ...], float]]:
    """Beam search; returns up to k (token tuple, log-probability), descending.

    A hypothesis finishes by emitting #End (its score includes that emission)
    or by reaching max_len tokens. With k=1 this reproduces greedy decoding.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    init = _decode_init(han, ls, video, strategy)
    live = [(0.0, (), START_INDEX, init)]  # (score, tokens, last token, state)
    finished: list[tuple[tuple[int, ...], float]] = []
    for _ in range(max_len):
        candidates = []
        for score, tokens, last, state in live:
            new_state, log_p = _decode_step(han, ls, state, last)
            for w in range(len(log_p)):
                if not np.isfinite(log_p[w]):
                    continue
                candidates.append(
                    (score + float(log_p[w]), tokens + (w,), w, new_state))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        # ending a hypothesis competes for beam slots like any other token,
        # which keeps k=1 identical to greedy decoding
        live = []
        for score, tokens, w, state in candidates[:k]:
            if w == END_INDEX:
                finished.append((tokens[:-1], score))
            else:
                live.append((score, tokens, w, state))
        if not live:
            break
    finished.extend((tokens, score) for score, tokens, _, _ in live)
    finished.sort(key=lambda f: (-f[1], f[0]))
    return finished[:k]


# ---------------------------------------------------------------------------
# checkpoint format
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"LSHN"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: Path | str, ls: LatentSpaceParams, han: HanParams,
                    strategy: SegmentationStrategy) -> None:
    """Binary checkpoint: magic, version, dimension header, then float64 LE
    parameter matrices in the order T_v, T_s, ``han_param_items``."""
    d_s, d_c = ls.t_v.shape
    d_w = ls.t_s.shape[1]
    q = han.state_size
    q_att = han.clip_att.proj.shape[0]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IIIIIIII", CHECKPOINT_VERSION, d_c, d_w, d_s,
                             q, q_att, _STRATEGY_CODES[strategy.kind],
                             strategy.k))
        fh.write(ls.t_v.astype("<f8").tobytes(order="C"))
        fh.write(ls.t_s.astype("<f8").tobytes(order="C"))
        for _, arr in han_param_items(han):
            fh.write(arr.astype("<f8").tobytes(order="C"))


def load_checkpoint(path: Path | str
                    ) -> tuple[LatentSpaceParams, HanParams, SegmentationStrategy]:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 36 or data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic)")
    version, d_c, d_w, d_s, q, q_att, strat_code, strat_k = struct.unpack(
        "<IIIIIIII", data[4:36])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = [36]

    def take(*shape):
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f8", count=count,
                            offset=offset[0]).reshape(shape).copy()
        offset[0] += 8 * count
        return arr

    ls = LatentSpaceParams(take(d_s, d_c), take(d_s, d_w))
    cells = {}
    for name, p in (("clip_fwd", d_s), ("clip_bwd", d_s)):
        cells[name] = RecurrentCellParams(take(4 * q, p), take(4 * q, q), take(4 * q))
    clip_att = AttentionParams(take(q_att, 2 * q), take(q_att), take(q_att))
    for name in ("word_fwd", "word_bwd"):
        cells[name] = RecurrentCellParams(take(4 * q, 2 * q), take(4 * q, q), take(4 * q))
    word_att = AttentionParams(take(q_att, 2 * q), take(q_att), take(q_att))
    init_h = AffineParams(take(q, 2 * q), take(q))
    init_c = AffineParams(take(q, 2 * q), take(q))
    decoder = RecurrentCellParams(take(4 * q, d_s), take(4 * q, q), take(4 * q))
    emit_w, emit_b = take(d_w, q), take(d_w)
    if offset[0] != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    han = HanParams(cells["clip_fwd"], cells["clip_bwd"], clip_att,
                    cells["word_fwd"], cells["word_bwd"], word_att,
                    init_h, init_c, decoder, emit_w, emit_b)
    strategy = SegmentationStrategy(_STRATEGY_KINDS[strat_code], strat_k)
    return ls, han, strategy
