"""Invert a target vector back to readable text through the frozen encoder.

Starting from the token embeddings of an initial text, Adam minimizes

    L(v_eot, v_target) = |v_eot - v_target|^2 - lambda * cos(v_eot, v_target)

with respect to the rows of E selected by the optimize mask (by default
the positions strictly between sot and eot; "all" optimizes every row,
which reproduces the junk-laden recoveries seen when nothing is frozen).
After the loop each optimized row is mapped to its nearest vocabulary
token by cosine similarity (pad excluded) and decoded. The target vector
is used as given, without renormalization.
"""

from dataclasses import dataclass

import numpy as np

from .encoder import (CONTEXT_LENGTH, D_MODEL, EOT_ID, PAD_ID, embed_tokens,
                      encode_backward, encode_forward, detokenize, tokenize)
from .errors import ConfigError, DataError, DivergenceError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class InversionConfig:
    lam: float = 1.0  # cosine term weight (lambda)
    max_iter: int = 3000
    learning_rate: float = 0.05
    eot_index: int = None  # default: position of eot in the tokenized text
    optimize_mask: str = "interior"  # or "all"
    seed: int = 0
    plateau_stop: bool = False
    plateau_window: int = 100
    plateau_tol: float = 1e-9

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.eot_index is not None and not 0 <= self.eot_index < CONTEXT_LENGTH:
            raise ConfigError(
                f"eot_index must lie in [0, {CONTEXT_LENGTH}), got {self.eot_index}"
            )
        if self.optimize_mask not in ("interior", "all"):
            raise ConfigError("optimize_mask must be 'interior' or 'all'")


@dataclass
class InversionResult:
    final_embeddings: np.ndarray
    loss_trace: list
    recovered_ids: list
    recovered_text: str
    final_v_eot: np.ndarray
    final_loss: float
    success: bool = None  # None when no target text was declared
    initial_text: str = ""
    eot_index: int = -1
    iterations: int = 0


def inversion_loss(v_eot, v_target, lam):
    """Squared distance minus lambda times cosine similarity."""
    loss, _ = inversion_loss_grad(v_eot, v_target, lam)
    return loss


def inversion_loss_grad(v_eot, v_target, lam):
    """(loss, dloss/dv_eot). The cosine term is 0 for a zero v_eot."""
    v = np.asarray(v_eot, dtype=np.float64).reshape(-1)
    t = np.asarray(v_target, dtype=np.float64).reshape(-1)
    if v.shape != t.shape:
        raise DataError(f"dim mismatch: {v.shape[0]} vs {t.shape[0]}")
    nt = np.linalg.norm(t)
    if nt == 0:
        raise DataError("target vector must be nonzero")
    diff = v - t
    loss = float(diff @ diff)
    grad = 2.0 * diff
    if lam > 0:
        nv = np.linalg.norm(v)
        if nv > 0:
            # clamp against rounding so L >= -lambda holds exactly
            cos = float(np.clip(v @ t / (nv * nt), -1.0, 1.0))
            loss -= lam * cos
            grad -= lam * (t / (nv * nt) - cos * v / (nv * nv))
    return loss, grad


def find_closest_tokens(embedding_matrix, token_table, exclusion=frozenset({PAD_ID}),
                        mask=None, initial_ids=None):
    """Nearest token id per row by cosine similarity, ties to the lower id.

    Rows outside the optimize mask keep their initial ids when a mask and
    the initial ids are supplied.
    """
    e = np.asarray(embedding_matrix, dtype=np.float64)
    table = np.asarray(token_table, dtype=np.float64)
    if e.shape[1] != table.shape[1]:
        raise DataError("embedding rows and token table disagree on dim")
    excluded = set(int(i) for i in exclusion)
    if len(excluded) >= table.shape[0]:
        raise DataError("every token id is excluded")
    t_norms = np.linalg.norm(table, axis=1)
    e_norms = np.linalg.norm(e, axis=1)
    sims = e @ table.T
    denom = np.outer(np.where(e_norms > 0, e_norms, 1.0),
                     np.where(t_norms > 0, t_norms, 1.0))
    sims = sims / denom
    sims[:, np.where(t_norms == 0)[0]] = -2.0
    if excluded:
        sims[:, sorted(excluded)] = -2.0
    ids = np.argmax(sims, axis=1).tolist()
    if mask is not None and initial_ids is not None:
        keep = [i for i in range(e.shape[0]) if i not in set(mask)]
        for i in keep:
            ids[i] = int(initial_ids[i])
    return ids


def _mask_positions(cfg, eot_index):
    if cfg.optimize_mask == "all":
        return list(range(CONTEXT_LENGTH))
    return list(range(1, eot_index))


def invert(v_target, initial_text, cfg, weights, target_text=None):
    """Run the full inversion loop; deterministic for fixed inputs.

    The encoder weights stay untouched; rows of E outside the optimize
    mask are bit-identical to their initialization. Success is recorded
    only when a target text is declared: the recovered text must contain
    it. A non-finite loss aborts with the trace collected so far.
    """
    t = np.asarray(v_target, dtype=np.float64).reshape(-1)
    if t.shape != (D_MODEL,):
        raise DataError(f"target vector must have {D_MODEL} entries")
    if not np.all(np.isfinite(t)) or np.linalg.norm(t) == 0:
        raise DataError("target vector must be finite and nonzero")

    ids = tokenize(initial_text)
    eot_index = cfg.eot_index if cfg.eot_index is not None else ids.index(EOT_ID)
    mask = _mask_positions(cfg, eot_index)
    if not mask:
        raise ConfigError(
            f"optimize mask is empty for eot_index {eot_index}; "
            "need at least one interior position"
        )
    mask_rows = np.zeros((CONTEXT_LENGTH, 1))
    mask_rows[mask] = 1.0

    e = embed_tokens(weights, ids)
    m = np.zeros_like(e)
    v = np.zeros_like(e)
    trace = []
    lr = cfg.learning_rate
    iterations = 0
    for step in range(1, cfg.max_iter + 1):
        eot, cache = encode_forward(weights, e, eot_index)
        loss, dv = inversion_loss_grad(eot.vector, t, cfg.lam)
        if not np.isfinite(loss):
            raise DivergenceError(
                f"non-finite loss at iteration {step - 1}", trace=trace
            )
        trace.append(loss)
        iterations = step
        if (cfg.plateau_stop and len(trace) > cfg.plateau_window
                and abs(trace[-1] - trace[-1 - cfg.plateau_window]) < cfg.plateau_tol):
            break
        grad = encode_backward(weights, cache, dv) * mask_rows
        m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * grad
        v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * grad * grad
        corr1 = 1 - ADAM_BETA1 ** step
        corr2 = 1 - ADAM_BETA2 ** step
        e -= lr * (m / corr1) / (np.sqrt(v / corr2) + ADAM_EPS) * mask_rows

    final_eot, _ = encode_forward(weights, e, eot_index)
    final_loss = inversion_loss(final_eot.vector, t, cfg.lam)
    recovered = find_closest_tokens(e, weights.token_table,
                                    exclusion=frozenset({PAD_ID}),
                                    mask=mask, initial_ids=ids)
    text = detokenize(recovered)
    success = None
    if target_text is not None:
        success = str(target_text).lower() in text
    return InversionResult(
        final_embeddings=e,
        loss_trace=trace,
        recovered_ids=recovered,
        recovered_text=text,
        final_v_eot=final_eot.vector,
        final_loss=final_loss,
        success=success,
        initial_text=str(initial_text),
        eot_index=eot_index,
        iterations=iterations,
    )


def encode_text(weights, text, eot_index=None):
    """Convenience: the encoder output for a plain string."""
    ids = tokenize(text)
    idx = eot_index if eot_index is not None else ids.index(EOT_ID)
    eot, _ = encode_forward(weights, embed_tokens(weights, ids), idx)
    return eot.vector


@dataclass
class GridCell:
    initial: str
    target: str
    success: bool
    final_loss: float
    initial_loss: float
    recovered_text: str
    eot_index: int


def inversion_grid(words, weights, cfg, cells=None, max_workers=1):
    """All ordered (initial, target) pairs over a word list (Figure-style grid).

    Diagonal cells are fixed points and are included; callers interested
    in the off-diagonal rate filter on initial != target. Jobs are
    independent, so worker count never changes the results.
    """
    words = [str(w) for w in words]
    if cells is None:
        cells = [(a, b) for a in words for b in words]

    def run_one(pair):
        init, targ = pair
        target_vec = encode_text(weights, targ)
        res = invert(target_vec, init, cfg, weights, target_text=targ)
        return GridCell(initial=init, target=targ, success=bool(res.success),
                        final_loss=res.final_loss,
                        initial_loss=res.loss_trace[0],
                        recovered_text=res.recovered_text,
                        eot_index=res.eot_index)

    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(run_one, cells))
    return [run_one(pair) for pair in cells]
