"""A tiny deterministic, differentiable text encoder.

Character-level tokenizer (40 ids, context length 16) feeding a 2-block
pre-norm transformer: d_model 32, one causal attention head per block, a
tanh MLP with hidden width 64, a final layer norm, and a 32x32 output
head applied to the row at the end-of-text position. Weights are frozen
after seeded initialization; the only learnable tensor anywhere is the
input token-embedding matrix E, and `encode_backward` returns the exact
reverse-mode gradient of the end-of-text output with respect to E.

Shapes use the row convention: activations are (L, d) with one row per
position, projections are `x @ W`, and the output head is `w_out @ h[eot]`.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .rng import Xoshiro256pp

PAD_ID = 0
SOT_ID = 1
EOT_ID = 2
VOCAB_SIZE = 40
CONTEXT_LENGTH = 16
D_MODEL = 32
N_BLOCKS = 2
MLP_HIDDEN = 64
LN_EPS = 1e-5
INIT_STD = 0.02

_CHAR_TO_ID = {}
for _i in range(26):
    _CHAR_TO_ID[chr(ord("a") + _i)] = 3 + _i
_CHAR_TO_ID[" "] = 29
for _i in range(10):
    _CHAR_TO_ID[str(_i)] = 30 + _i
_ID_TO_CHAR = {v: k for k, v in _CHAR_TO_ID.items()}


def tokenize(text):
    """[sot, chars..., eot, pad...] of length 16, lowercased first."""
    lowered = str(text).lower()
    if len(lowered) > CONTEXT_LENGTH - 2:
        raise DataError(
            f"text of length {len(lowered)} exceeds {CONTEXT_LENGTH - 2} characters"
        )
    ids = [SOT_ID]
    for ch in lowered:
        if ch not in _CHAR_TO_ID:
            raise DataError(f"unmappable character {ch!r}")
        ids.append(_CHAR_TO_ID[ch])
    ids.append(EOT_ID)
    ids.extend([PAD_ID] * (CONTEXT_LENGTH - len(ids)))
    return ids


def detokenize(ids):
    """Characters after the first sot; pad/sot/eot render as empty."""
    ids = list(int(i) for i in ids)
    for i in ids:
        if not 0 <= i < VOCAB_SIZE:
            raise DataError(f"token id {i} out of range [0, {VOCAB_SIZE})")
    start = ids.index(SOT_ID) + 1 if SOT_ID in ids else 0
    return "".join(_ID_TO_CHAR.get(i, "") for i in ids[start:])


@dataclass(frozen=True)
class BlockWeights:
    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray
    w_mlp1: np.ndarray  # (32, 64)
    b_mlp1: np.ndarray
    w_mlp2: np.ndarray  # (64, 32)
    b_mlp2: np.ndarray


@dataclass(frozen=True)
class EncoderWeights:
    """All encoder parameters; deterministic from the seed."""

    seed: int
    token_table: np.ndarray  # (40, 32)
    positional: np.ndarray  # (16, 32)
    blocks: tuple  # of BlockWeights
    final_gamma: np.ndarray
    final_beta: np.ndarray
    w_out: np.ndarray  # (32, 32)

    def all_arrays(self):
        arrs = [self.token_table, self.positional, self.final_gamma,
                self.final_beta, self.w_out]
        for blk in self.blocks:
            arrs.extend([blk.ln1_gamma, blk.ln1_beta, blk.w_q, blk.w_k,
                         blk.w_v, blk.w_o, blk.ln2_gamma, blk.ln2_beta,
                         blk.w_mlp1, blk.b_mlp1, blk.w_mlp2, blk.b_mlp2])
        return arrs

    def to_json_dict(self, include_tensors=False):
        doc = {"seed": self.seed,
               "config": {"vocab_size": VOCAB_SIZE,
                          "context_length": CONTEXT_LENGTH,
                          "d_model": D_MODEL, "n_blocks": N_BLOCKS,
                          "mlp_hidden": MLP_HIDDEN, "ln_eps": LN_EPS,
                          "init_std": INIT_STD}}
        if include_tensors:
            doc["token_table"] = self.token_table.tolist()
        return doc

    @classmethod
    def from_json_dict(cls, doc):
        return init_encoder(int(doc["seed"]))


def init_encoder(seed):
    """Seeded weights: matrices N(0, 0.02^2), gammas 1, betas/biases 0.

    Draw order is fixed (token table, positions, then per block q/k/v/o
    and the two MLP matrices, then the output head) so a seed fully pins
    every parameter.
    """
    rng = Xoshiro256pp(seed)

    def mat(rows, cols):
        m = INIT_STD * rng.normals((rows, cols))
        m.setflags(write=False)
        return m

    token_table = mat(VOCAB_SIZE, D_MODEL)
    positional = mat(CONTEXT_LENGTH, D_MODEL)
    blocks = []
    for _ in range(N_BLOCKS):
        blocks.append(BlockWeights(
            ln1_gamma=_frozen(np.ones(D_MODEL)),
            ln1_beta=_frozen(np.zeros(D_MODEL)),
            w_q=mat(D_MODEL, D_MODEL),
            w_k=mat(D_MODEL, D_MODEL),
            w_v=mat(D_MODEL, D_MODEL),
            w_o=mat(D_MODEL, D_MODEL),
            ln2_gamma=_frozen(np.ones(D_MODEL)),
            ln2_beta=_frozen(np.zeros(D_MODEL)),
            w_mlp1=mat(D_MODEL, MLP_HIDDEN),
            b_mlp1=_frozen(np.zeros(MLP_HIDDEN)),
            w_mlp2=mat(MLP_HIDDEN, D_MODEL),
            b_mlp2=_frozen(np.zeros(D_MODEL)),
        ))
    return EncoderWeights(seed=int(seed), token_table=token_table,
                          positional=positional, blocks=tuple(blocks),
                          final_gamma=_frozen(np.ones(D_MODEL)),
                          final_beta=_frozen(np.zeros(D_MODEL)),
                          w_out=mat(D_MODEL, D_MODEL))


def _frozen(arr):
    arr.setflags(write=False)
    return arr


def embed_tokens(weights, ids):
    """E[i] = token_table[ids[i]]; positions are added inside the forward."""
    ids = list(int(i) for i in ids)
    if len(ids) != CONTEXT_LENGTH:
        raise DataError(f"need exactly {CONTEXT_LENGTH} token ids")
    for i in ids:
        if not 0 <= i < VOCAB_SIZE:
            raise DataError(f"token id {i} out of range [0, {VOCAB_SIZE})")
    return weights.token_table[ids].copy()


@dataclass(frozen=True)
class EotVector:
    vector: np.ndarray  # (32,)
    eot_index: int


@dataclass
class EncodeCache:
    """Intermediates from one forward pass, consumed by encode_backward."""

    eot_index: int
    block_caches: list = field(default_factory=list)
    final_xhat: np.ndarray = None  # pre-head activations, before gamma/beta
    final_inv: np.ndarray = None


def _ln_forward(x, gamma, beta):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, xhat, inv


def _ln_backward(dy, gamma, xhat, inv):
    # per-row: dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
    dxhat = dy * gamma
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    return (dxhat - m1 - xhat * m2) * inv


def _attention_forward(x, blk):
    scale = 1.0 / np.sqrt(D_MODEL)
    q = x @ blk.w_q
    k = x @ blk.w_k
    v = x @ blk.w_v
    scores = (q @ k.T) * scale
    n = scores.shape[0]
    causal = np.tril(np.ones((n, n), dtype=bool))
    scores = np.where(causal, scores, -np.inf)
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=-1, keepdims=True)
    ctx = attn @ v
    return ctx @ blk.w_o, (q, k, v, attn)


def _attention_backward(dout, blk, cache):
    q, k, v, attn = cache
    scale = 1.0 / np.sqrt(D_MODEL)
    dctx = dout @ blk.w_o.T
    dattn = dctx @ v.T
    dv = attn.T @ dctx
    # softmax rows: ds = a * (da - sum(da * a))
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dq = (dscores @ k) * scale
    dk = (dscores.T @ q) * scale
    return dq @ blk.w_q.T + dk @ blk.w_k.T + dv @ blk.w_v.T


def _mlp_forward(x, blk):
    hidden = np.tanh(x @ blk.w_mlp1 + blk.b_mlp1)
    return hidden @ blk.w_mlp2 + blk.b_mlp2, hidden


def _mlp_backward(dout, blk, hidden):
    dhidden = (dout @ blk.w_mlp2.T) * (1.0 - hidden * hidden)
    return dhidden @ blk.w_mlp1.T


def encode_forward(weights, embedding_matrix, eot_index):
    """Run the frozen encoder on E; returns (EotVector, cache).

    h = E + positions, then per block h += Attn(LN(h)) and h += MLP(LN(h))
    with a causal mask (position i attends to j <= i), then a final layer
    norm; the output is w_out applied to the row at eot_index. The cache
    holds everything the backward pass needs.
    """
    e = np.asarray(embedding_matrix, dtype=np.float64)
    if e.shape != (CONTEXT_LENGTH, D_MODEL):
        raise DataError(f"E must be {CONTEXT_LENGTH} x {D_MODEL}, got {e.shape}")
    if not 0 <= int(eot_index) < CONTEXT_LENGTH:
        raise DataError(f"eot_index {eot_index} out of range [0, {CONTEXT_LENGTH})")
    eot_index = int(eot_index)

    cache = EncodeCache(eot_index=eot_index)
    h = e + weights.positional
    for blk in weights.blocks:
        x1, xhat1, inv1 = _ln_forward(h, blk.ln1_gamma, blk.ln1_beta)
        attn_out, attn_cache = _attention_forward(x1, blk)
        h = h + attn_out
        x2, xhat2, inv2 = _ln_forward(h, blk.ln2_gamma, blk.ln2_beta)
        mlp_out, hidden = _mlp_forward(x2, blk)
        h = h + mlp_out
        cache.block_caches.append((xhat1, inv1, attn_cache, xhat2, inv2, hidden))
    xf, xhatf, invf = _ln_forward(h, weights.final_gamma, weights.final_beta)
    cache.final_xhat = xhatf
    cache.final_inv = invf
    v_eot = weights.w_out @ xf[eot_index]
    return EotVector(vector=v_eot, eot_index=eot_index), cache


def encode_backward(weights, cache, grad_wrt_v_eot):
    """Exact gradient of the eot output w.r.t. E for a given upstream grad.

    The encoder weights are frozen and receive no gradient. Positions
    after eot_index get exactly zero gradient (nothing attends forward).
    """
    g = np.asarray(grad_wrt_v_eot, dtype=np.float64).reshape(-1)
    if g.shape != (D_MODEL,):
        raise DataError(f"upstream gradient must have {D_MODEL} entries")
    if cache.final_xhat is None or len(cache.block_caches) != N_BLOCKS:
        raise DataError("cache does not match a completed forward pass")

    dxf = np.zeros((CONTEXT_LENGTH, D_MODEL))
    dxf[cache.eot_index] = weights.w_out.T @ g
    dh = _ln_backward(dxf, weights.final_gamma, cache.final_xhat,
                      cache.final_inv)
    for blk, blk_cache in zip(reversed(weights.blocks),
                              reversed(cache.block_caches)):
        xhat1, inv1, attn_cache, xhat2, inv2, hidden = blk_cache
        dx2 = _mlp_backward(dh, blk, hidden)
        dh = dh + _ln_backward(dx2, blk.ln2_gamma, xhat2, inv2)
        dx1 = _attention_backward(dh, blk, attn_cache)
        dh = dh + _ln_backward(dx1, blk.ln1_gamma, xhat1, inv1)
    return dh
