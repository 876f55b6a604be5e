"""Contrastive training of the modulation projections.

The classifier scores a record against each grade's enhanced prototype by the
mean per-token cosine similarity; the loss is cross-entropy over those scores
at temperature tau. Only the seven projection matrices receive gradients.
Optimization is Adam with fixed-order, seeded batch shuffling, so a given
(config, data) pair always produces the same checkpoint.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .anchors import PrototypeSet
from .modulation import (
    DEFAULT_D_P,
    ModulationParams,
    PARAM_NAMES,
    SemanticFeatures,
    init_params,
    modulate,
    modulation_backward,
)
from .store import NUM_GRADES, EmbeddingRecord, parse_kv_file

logger = logging.getLogger(__name__)

_CONFIG_TYPES = {
    "learning_rate": float,
    "epochs": int,
    "batch_size": int,
    "tau": float,
    "seed": int,
    "beta1": float,
    "beta2": float,
    "adam_eps": float,
    "d_p": int,
}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 50
    batch_size: int = 32
    tau: float = 1.0
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    d_p: int = DEFAULT_D_P

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1 or self.d_p < 1:
            raise ValueError(
                f"epochs, batch_size and d_p must be >= 1, got "
                f"{self.epochs}, {self.batch_size}, {self.d_p}"
            )
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.adam_eps <= 0:
            raise ValueError(f"adam_eps must be positive, got {self.adam_eps}")

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        raw = parse_kv_file(path)
        unknown = sorted(set(raw) - set(_CONFIG_TYPES))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, text in raw.items():
            try:
                kwargs[key] = _CONFIG_TYPES[key](text)
            except ValueError as exc:
                raise ValueError(f"config key {key}: cannot parse {text!r}") from exc
        return cls(**kwargs)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, step: int, value: float):
        super().__init__(
            f"non-finite loss ({value}) at epoch {epoch}, step {step}; "
            f"lower the learning rate"
        )
        self.epoch = epoch
        self.step = step


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class TrainReport:
    params: ModulationParams
    best_epoch: int
    best_val_loss: float
    initial_val_loss: float
    history: list[EpochStats] = field(default_factory=list)


def similarity(tokens: np.ndarray, proto: np.ndarray) -> float:
    """Mean per-token-row cosine between a record and one prototype matrix."""
    if tokens.shape != proto.shape:
        raise ValueError(f"token shape {tokens.shape} != prototype shape {proto.shape}")
    tn = np.linalg.norm(tokens, axis=1)
    pn = np.linalg.norm(proto, axis=1)
    if np.any(tn == 0) or np.any(pn == 0):
        raise ValueError("zero-norm row in similarity operands")
    return float(np.mean(np.sum(tokens * proto, axis=1) / (tn * pn)))


def grade_similarities(tokens: np.ndarray, protos: np.ndarray) -> np.ndarray:
    """Cosine scores of one record against all grade prototypes, shape (5,)."""
    tn = np.linalg.norm(tokens, axis=1)
    pn = np.linalg.norm(protos, axis=2)
    if np.any(tn == 0):
        raise ValueError("zero-norm token row in record")
    if np.any(pn == 0):
        raise ValueError("zero-norm prototype row")
    dots = np.einsum("nd,cnd->cn", tokens, protos)
    return np.mean(dots / (tn[None, :] * pn), axis=1)


def classification_loss(sims: np.ndarray, label: int, tau: float) -> float:
    """-log softmax(sims / tau)[label], computed via a shifted log-sum-exp."""
    if not 0 <= label < sims.shape[0]:
        raise ValueError(f"label {label} out of range for {sims.shape[0]} grades")
    z = np.asarray(sims, dtype=np.float64) / tau
    zmax = z.max()
    return float(zmax + np.log(np.sum(np.exp(z - zmax))) - z[label])


def _record_loss_grad(
    tokens: np.ndarray, protos: np.ndarray, label: int, tau: float
) -> tuple[float, np.ndarray]:
    """Loss and its exact gradient with respect to the enhanced prototypes."""
    n_s = tokens.shape[0]
    tn = np.linalg.norm(tokens, axis=1)
    pn = np.linalg.norm(protos, axis=2)
    if np.any(tn == 0) or np.any(pn == 0):
        raise ValueError("zero-norm row while computing the loss gradient")
    dots = np.einsum("nd,cnd->cn", tokens, protos)
    cos = dots / (tn[None, :] * pn)
    sims = cos.mean(axis=1)

    z = sims / tau
    zmax = z.max()
    e = np.exp(z - zmax)
    p = e / e.sum()
    loss = float(zmax + np.log(e.sum()) - z[label])

    coeff = p / tau
    coeff[label] -= 1.0 / tau
    pn3 = pn[:, :, None]
    d_cos = tokens[None, :, :] / (tn[None, :, None] * pn3) - cos[:, :, None] * protos / (pn3 * pn3)
    grad = coeff[:, None, None] * d_cos / n_s
    return loss, grad


def mean_loss(
    records: list[EmbeddingRecord], protos: np.ndarray, tau: float
) -> float:
    if not records:
        raise ValueError("cannot average the loss of zero records")
    total = 0.0
    for rec in records:
        total += classification_loss(grade_similarities(rec.tokens, protos), rec.grade, tau)
    return total / len(records)


class Adam:
    """Standard bias-corrected Adam over the seven projection matrices."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: ModulationParams, grads: ModulationParams) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name in PARAM_NAMES:
            g = getattr(grads, name)
            if name not in self._m:
                self._m[name] = np.zeros_like(g)
                self._v[name] = np.zeros_like(g)
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            getattr(params, name)[...] -= self.lr * update


def _require_labeled(records: list[EmbeddingRecord], role: str) -> None:
    for rec in records:
        if rec.grade is None:
            raise ValueError(f"{role} record {rec.id!r} has no grade label")


def train(
    proto: PrototypeSet,
    feats: SemanticFeatures,
    train_records: list[EmbeddingRecord],
    val_records: list[EmbeddingRecord],
    config: TrainConfig,
    params: ModulationParams | None = None,
) -> TrainReport:
    """Run the full optimization; returns the best-validation parameters.

    The model kept is the one with the lowest validation loss measured after
    each epoch's updates; ties keep the earlier epoch. The loss under the
    freshly initialized parameters is reported separately and never wins.
    """
    if not train_records or not val_records:
        raise ValueError("training requires non-empty train and validation sets")
    _require_labeled(train_records, "train")
    _require_labeled(val_records, "validation")

    d_v = proto.matrices.shape[2]
    d_t = feats.diverse.shape[2]
    if params is None:
        params = init_params(d_v, d_t, d_p=config.d_p, seed=config.seed)
    else:
        params = params.copy()

    enhanced, _ = modulate(proto, feats, params)
    initial_val_loss = mean_loss(val_records, enhanced.matrices, config.tau)

    optimizer = Adam(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    rng = np.random.Generator(np.random.Philox(key=config.seed))
    tokens = [rec.tokens for rec in train_records]
    labels = [rec.grade for rec in train_records]
    n = len(train_records)

    best_params = params.copy()
    best_val = np.inf
    best_epoch = 0
    history: list[EpochStats] = []

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for step, start in enumerate(range(0, n, config.batch_size), start=1):
            batch = order[start:start + config.batch_size]
            enhanced, tape = modulate(proto, feats, params)
            grad = np.zeros_like(enhanced.matrices)
            batch_loss = 0.0
            for idx in batch:
                loss, g = _record_loss_grad(
                    tokens[idx], enhanced.matrices, labels[idx], config.tau
                )
                batch_loss += loss
                grad += g
            batch_loss /= batch.size
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(epoch, step, batch_loss)
            grad /= batch.size
            epoch_loss += batch_loss * batch.size
            param_grads = modulation_backward(tape, params, grad)
            optimizer.step(params, param_grads)

        enhanced, _ = modulate(proto, feats, params)
        val_loss = mean_loss(val_records, enhanced.matrices, config.tau)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(epoch, 0, val_loss)
        history.append(EpochStats(epoch=epoch, train_loss=epoch_loss / n, val_loss=val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = params.copy()
        logger.debug(
            "epoch %d: train %.6f val %.6f", epoch, epoch_loss / n, val_loss
        )

    return TrainReport(
        params=best_params,
        best_epoch=best_epoch,
        best_val_loss=float(best_val),
        initial_val_loss=float(initial_val_loss),
        history=history,
    )


def finite_difference_check(
    proto: PrototypeSet,
    feats: SemanticFeatures,
    params: ModulationParams,
    records: list[EmbeddingRecord],
    tau: float = 1.0,
    h: float = 1e-5,
) -> dict[str, float]:
    """Max relative error between analytic and central-difference gradients.

    Sweeps every entry of every projection matrix. The relative error uses
    max(|analytic|, |numeric|, 1e-8) as the denominator.
    """
    _require_labeled(records, "check")

    def total_loss(p: ModulationParams) -> float:
        enhanced, _ = modulate(proto, feats, p)
        return mean_loss(records, enhanced.matrices, tau)

    enhanced, tape = modulate(proto, feats, params)
    grad_proto = np.zeros_like(enhanced.matrices)
    for rec in records:
        _, g = _record_loss_grad(rec.tokens, enhanced.matrices, rec.grade, tau)
        grad_proto += g
    grad_proto /= len(records)
    analytic = modulation_backward(tape, params, grad_proto)

    worst: dict[str, float] = {}
    for name in PARAM_NAMES:
        a = getattr(analytic, name)
        base = getattr(params, name)
        err = 0.0
        for i in range(base.shape[0]):
            for j in range(base.shape[1]):
                saved = base[i, j]
                base[i, j] = saved + h
                up = total_loss(params)
                base[i, j] = saved - h
                down = total_loss(params)
                base[i, j] = saved
                numeric = (up - down) / (2.0 * h)
                denom = max(abs(a[i, j]), abs(numeric), 1e-8)
                err = max(err, abs(a[i, j] - numeric) / denom)
        worst[name] = err
    return worst


def apply_config_overrides(config: TrainConfig, **overrides) -> TrainConfig:
    valid = {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(overrides) - valid)
    if unknown:
        raise ValueError(f"unknown config overrides: {', '.join(unknown)}")
    return replace(config, **overrides)
