"""Linear probes on frozen embeddings.

Training minimizes multinomial cross-entropy with mini-batch Adam; the
group-reweighted variant multiplies each sample's loss by the inverse
frequency of its group, N / (|G| * N_g), so the mean weight is 1 and the
two trainers compute bit-identical updates when all groups are equal.
Model selection keeps the epoch snapshot with the best validation
worst-group accuracy; the learning rate halves after the plateau
scheduler sees no improvement for its patience window.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ConsistencyError, DataError, TrainingError
from .metrics import group_report
from .rng import Xoshiro256pp

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings; epochs default to 1 for ERM and 20 for DFR."""

    learning_rate: float = 0.01
    weight_decay: float = 0.0
    epochs: int = None
    batch_size: int = 256
    scheduler_factor: float = 0.5
    scheduler_patience: int = 3
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 < self.scheduler_factor <= 1:
            raise ConfigError("scheduler_factor must be in (0, 1]")

    def resolved(self, default_epochs):
        epochs = self.epochs if self.epochs is not None else default_epochs
        return TrainConfig(learning_rate=self.learning_rate,
                           weight_decay=self.weight_decay, epochs=epochs,
                           batch_size=self.batch_size,
                           scheduler_factor=self.scheduler_factor,
                           scheduler_patience=self.scheduler_patience,
                           seed=self.seed)


def config_digest(cfg, method):
    doc = {"method": method, **asdict(cfg)}
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LinearProbe:
    """C x D weight matrix plus bias; also models a stacked-text classifier."""

    weights: np.ndarray  # (C, D)
    bias: np.ndarray  # (C,)
    normalize_input: bool
    provenance: str  # erm | dfr | zeroshot
    training_config_digest: str = ""

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 2:
            raise DataError("probe needs a C x D weight matrix with C >= 2")
        if b.shape != (w.shape[0],):
            raise DataError("bias length must equal the class count")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise DataError("probe parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def classes(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.weights.shape[1]

    def to_dict(self):
        return {
            "dim": self.dim,
            "classes": self.classes,
            "normalize_input": self.normalize_input,
            "provenance": self.provenance,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "config_digest": self.training_config_digest,
        }

    @classmethod
    def from_dict(cls, d):
        probe = cls(weights=np.array(d["weights"], dtype=np.float64),
                    bias=np.array(d["bias"], dtype=np.float64),
                    normalize_input=bool(d["normalize_input"]),
                    provenance=str(d["provenance"]),
                    training_config_digest=str(d.get("config_digest", "")))
        if probe.dim != int(d["dim"]) or probe.classes != int(d["classes"]):
            raise ConsistencyError("probe matrix shape disagrees with header")
        return probe


@dataclass
class TrainResult:
    """Selected probe plus the per-epoch log the selection came from."""

    probe: LinearProbe
    history: list = field(default_factory=list)  # dicts per epoch
    initial_loss: float = 0.0
    best_epoch: int = -1
    best_val_wga: float = 0.0


def predict(probe, dataset_or_rows):
    """(predictions, scores): argmax of W x + b, ties to the lower class id.

    Inputs are L2-normalized first iff the probe was built for cosine
    scoring (zero rows pass through unnormalized).
    """
    if hasattr(dataset_or_rows, "rows"):
        if dataset_or_rows.dim != probe.dim:
            raise DataError(
                f"set dim {dataset_or_rows.dim} does not match probe dim {probe.dim}"
            )
        x = dataset_or_rows.rows
    else:
        x = np.atleast_2d(np.asarray(dataset_or_rows, dtype=np.float64))
        if x.shape[1] != probe.dim:
            raise DataError(
                f"input dim {x.shape[1]} does not match probe dim {probe.dim}"
            )
    if probe.normalize_input:
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        x = x / np.where(norms > 0, norms, 1.0)
    scores = x @ probe.weights.T + probe.bias
    return np.argmax(scores, axis=1), scores


def zero_shot_matrix(class_embeddings):
    """Probe whose rows are the L2-normalized class embeddings (cosine scoring)."""
    rows = np.asarray(class_embeddings, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise DataError("need a C x D matrix with C >= 2 class rows")
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms == 0):
        idx = int(np.argwhere(norms == 0)[0, 0])
        raise DataError(f"class embedding row {idx} has zero norm")
    return LinearProbe(weights=rows / norms[:, None],
                       bias=np.zeros(rows.shape[0]),
                       normalize_input=True, provenance="zeroshot")


def group_weights(dataset):
    """Per-sample weights N / (|G| * N_g); every group must be populated."""
    counts = np.bincount(dataset.groups, minlength=dataset.num_groups)
    empty = np.argwhere(counts == 0)
    if empty.size:
        raise TrainingError(f"group {int(empty[0, 0])} has no training samples")
    w = dataset.n / (dataset.num_groups * counts.astype(np.float64))
    return w[dataset.groups]


def train_erm(train, val, cfg=None):
    """Uniform-weight trainer (average loss objective)."""
    cfg = (cfg or TrainConfig()).resolved(default_epochs=1)
    return _train(train, val, cfg, sample_weights=np.ones(train.n),
                  provenance="erm")


def train_dfr(train, val, cfg=None):
    """Inverse-group-frequency trainer targeting worst-group robustness."""
    cfg = (cfg or TrainConfig()).resolved(default_epochs=20)
    return _train(train, val, cfg, sample_weights=group_weights(train),
                  provenance="dfr")


def _weighted_ce(weights_mat, bias, x, y, w):
    logits = x @ weights_mat.T + bias
    logits = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(logits).sum(axis=1))
    return float(np.mean(w * (logz - logits[np.arange(x.shape[0]), y])))


def _train(train, val, cfg, sample_weights, provenance):
    if train.dim != val.dim:
        raise DataError(f"train dim {train.dim} != val dim {val.dim}")
    if train.num_classes != val.num_classes:
        raise DataError("train and val disagree on the class count")
    c = train.num_classes
    present = np.bincount(train.labels, minlength=c)
    if np.any(present == 0):
        missing = int(np.argwhere(present == 0)[0, 0])
        raise TrainingError(f"class {missing} absent from the training split")

    x, y = train.rows, train.labels
    n, d = x.shape
    w_mat = np.zeros((c, d))
    bias = np.zeros(c)
    m_w = np.zeros_like(w_mat)
    v_w = np.zeros_like(w_mat)
    m_b = np.zeros_like(bias)
    v_b = np.zeros_like(bias)
    step = 0
    lr = cfg.learning_rate

    digest = config_digest(cfg, provenance)
    rng = Xoshiro256pp(cfg.seed)
    onehot = np.eye(c)[y]
    initial_loss = _weighted_ce(w_mat, bias, x, y, sample_weights)

    history = []
    best = {"wga": -1.0, "weights": w_mat.copy(), "bias": bias.copy(),
            "epoch": -1}
    plateau_best = -np.inf
    plateau_bad = 0

    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            xb = x[idx]
            g = (_softmax(xb @ w_mat.T + bias) - onehot[idx])
            g *= sample_weights[idx][:, None]
            g /= idx.size
            g_w = g.T @ xb
            g_b = g.sum(axis=0)
            if cfg.weight_decay:
                g_w = g_w + cfg.weight_decay * w_mat
            step += 1
            m_w = ADAM_BETA1 * m_w + (1 - ADAM_BETA1) * g_w
            v_w = ADAM_BETA2 * v_w + (1 - ADAM_BETA2) * g_w * g_w
            m_b = ADAM_BETA1 * m_b + (1 - ADAM_BETA1) * g_b
            v_b = ADAM_BETA2 * v_b + (1 - ADAM_BETA2) * g_b * g_b
            corr1 = 1 - ADAM_BETA1 ** step
            corr2 = 1 - ADAM_BETA2 ** step
            w_mat -= lr * (m_w / corr1) / (np.sqrt(v_w / corr2) + ADAM_EPS)
            bias -= lr * (m_b / corr1) / (np.sqrt(v_b / corr2) + ADAM_EPS)

        train_loss = _weighted_ce(w_mat, bias, x, y, sample_weights)
        if not np.isfinite(train_loss):
            raise TrainingError(f"non-finite training loss at epoch {epoch}")
        probe_now = LinearProbe(weights=w_mat.copy(), bias=bias.copy(),
                                normalize_input=False, provenance=provenance,
                                training_config_digest=digest)
        preds, _ = predict(probe_now, val)
        val_wga = group_report(preds, val).wga
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_wga": val_wga, "lr": lr})
        if val_wga > best["wga"]:
            best = {"wga": val_wga, "weights": w_mat.copy(),
                    "bias": bias.copy(), "epoch": epoch}
        # plateau on the monitored validation WGA (maximize)
        if val_wga > plateau_best:
            plateau_best = val_wga
            plateau_bad = 0
        else:
            plateau_bad += 1
            if plateau_bad > cfg.scheduler_patience:
                lr *= cfg.scheduler_factor
                plateau_bad = 0

    probe = LinearProbe(weights=best["weights"], bias=best["bias"],
                        normalize_input=False, provenance=provenance,
                        training_config_digest=digest)
    return TrainResult(probe=probe, history=history, initial_loss=initial_loss,
                       best_epoch=best["epoch"], best_val_wga=best["wga"])


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)
