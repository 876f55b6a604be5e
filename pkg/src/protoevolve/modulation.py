"""Two-stage attention modulation of prototypes and its exact gradients.

Stage one injects the gated diverse description features into each grade's
prototype through scaled dot-product attention with a residual connection.
Stage two injects pairwise differentiated description features, scaled per
contrasting grade by a sigmoid weight computed from the global token, with a
layer-normalized residual. Only the seven projection matrices are learnable;
prototypes and text features are constants.

The backward pass is hand-derived reverse mode over both stages, including
the softmax and layer-norm Jacobians and the sigmoid weight path, and is
verified against central finite differences in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anchors import PrototypeSet
from .store import NUM_GRADES

LN_EPS = 1e-5
DEFAULT_D_P = 384

PARAM_NAMES = ("wq1", "wk1", "wv1", "wq2", "wk2", "wv2", "wp")


@dataclass
class ModulationParams:
    wq1: np.ndarray   # (d_v, d_p)
    wk1: np.ndarray   # (d_t, d_p)
    wv1: np.ndarray   # (d_t, d_v)
    wq2: np.ndarray   # (d_v, d_p)
    wk2: np.ndarray   # (d_t, d_p)
    wv2: np.ndarray   # (d_t, d_v)
    wp: np.ndarray    # (d_v, d_t)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "ModulationParams":
        return ModulationParams(**{k: v.copy() for k, v in self.as_dict().items()})

    @property
    def d_v(self) -> int:
        return self.wq1.shape[0]

    @property
    def d_t(self) -> int:
        return self.wk1.shape[0]

    @property
    def d_p(self) -> int:
        return self.wq1.shape[1]


@dataclass
class SemanticFeatures:
    """Per-grade text feature matrices consumed by the two modulation stages."""

    diverse: np.ndarray           # (NUM_GRADES, n_div, d_t)
    differentiated: np.ndarray    # (NUM_GRADES, NUM_GRADES - 1, d_t), rows by ascending
                                  # contrasting grade

    def __post_init__(self):
        if self.differentiated.shape[1] != NUM_GRADES - 1:
            raise ValueError(
                f"differentiated rows {self.differentiated.shape[1]} != {NUM_GRADES - 1}"
            )
        if not (np.all(np.isfinite(self.diverse)) and np.all(np.isfinite(self.differentiated))):
            raise ValueError("semantic features contain non-finite values")


@dataclass
class PsiTape:
    proto: np.ndarray
    e1: np.ndarray
    q1: np.ndarray
    k1: np.ndarray
    v1: np.ndarray
    a1: np.ndarray
    out: np.ndarray


@dataclass
class DpeTape:
    proto_psi: np.ndarray
    e2: np.ndarray
    g: np.ndarray       # (C, d_t) projected global tokens
    alpha: np.ndarray   # (C, N_diff)
    u: np.ndarray       # (C, N_diff, d_v) unweighted value rows
    v2: np.ndarray
    q2: np.ndarray
    k2: np.ndarray
    a2: np.ndarray
    y: np.ndarray       # layer-normalized attention output
    inv_std: np.ndarray # (C, n_s, 1)


@dataclass
class ModulationTape:
    psi: PsiTape
    dpe: DpeTape


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax along the last axis, stabilized by row-max subtraction."""
    m = np.asarray(m, dtype=np.float64)
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def layer_norm_row(x: np.ndarray, eps: float = LN_EPS) -> np.ndarray:
    """(x - mean) / sqrt(var + eps), biased variance, no learnable affine."""
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean()
    return centered / np.sqrt(np.mean(centered * centered) + eps)


def _layer_norm_rows(h: np.ndarray, eps: float = LN_EPS) -> tuple[np.ndarray, np.ndarray]:
    centered = h - h.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(np.mean(centered * centered, axis=-1, keepdims=True) + eps)
    return centered * inv_std, inv_std


def _softmax_backward(d_a: np.ndarray, a: np.ndarray) -> np.ndarray:
    # rows of a are softmax outputs; Jacobian applied row-wise
    return a * (d_a - np.sum(d_a * a, axis=-1, keepdims=True))


def _check_shapes(proto: PrototypeSet, feats: SemanticFeatures, params: ModulationParams):
    _, n_s, d_v = proto.matrices.shape
    d_t = feats.diverse.shape[2]
    if feats.differentiated.shape[2] != d_t:
        raise ValueError(
            f"diverse d_t {d_t} != differentiated d_t {feats.differentiated.shape[2]}"
        )
    if params.wq1.shape[0] != d_v or params.wv1.shape[1] != d_v:
        raise ValueError(f"params d_v {params.wq1.shape[0]} incompatible with prototypes {d_v}")
    if params.wk1.shape[0] != d_t:
        raise ValueError(f"params d_t {params.wk1.shape[0]} incompatible with features {d_t}")


def psi_forward(
    proto: PrototypeSet, feats: SemanticFeatures, params: ModulationParams
) -> tuple[PrototypeSet, PsiTape]:
    """First-stage injection: residual cross-attention from prototype tokens
    onto the diverse description features."""
    if proto.stage != "base":
        raise ValueError(f"psi_forward expects base prototypes, got stage {proto.stage!r}")
    _check_shapes(proto, feats, params)
    p = proto.matrices
    e1 = feats.diverse
    q1 = p @ params.wq1
    k1 = e1 @ params.wk1
    v1 = e1 @ params.wv1
    a1 = softmax_rows(q1 @ k1.transpose(0, 2, 1) / np.sqrt(params.d_p))
    out = p + a1 @ v1
    tape = PsiTape(proto=p, e1=e1, q1=q1, k1=k1, v1=v1, a1=a1, out=out)
    return PrototypeSet(stage="psi", matrices=out), tape


def adaptive_weights(
    proto_psi: PrototypeSet, feats: SemanticFeatures, params: ModulationParams
) -> np.ndarray:
    """Sigmoid importance of each differentiated description, from the global token.

    Weight for (grade c, contrasting grade c') is
    sigmoid((proto_c[0] @ wp) . e''_{c,c'} / sqrt(d_t)); the per-token average
    in the original formulation is over a token-independent term, so it is
    computed once. Returns (NUM_GRADES, NUM_GRADES - 1), columns by ascending
    contrasting grade. Values are strictly inside (0, 1).
    """
    if proto_psi.stage != "psi":
        raise ValueError(f"adaptive_weights expects psi prototypes, got {proto_psi.stage!r}")
    g = proto_psi.matrices[:, 0, :] @ params.wp
    z = np.einsum("cd,cnd->cn", g, feats.differentiated) / np.sqrt(params.d_t)
    return 1.0 / (1.0 + np.exp(-z))


def dpe_forward(
    proto_psi: PrototypeSet, feats: SemanticFeatures, params: ModulationParams
) -> tuple[PrototypeSet, DpeTape]:
    """Second-stage injection: residual layer-normalized cross-attention onto
    the differentiated description features, value rows scaled by the
    adaptive weights (one stacked row per contrasting grade)."""
    if proto_psi.stage != "psi":
        raise ValueError(f"dpe_forward expects psi prototypes, got {proto_psi.stage!r}")
    pd = proto_psi.matrices
    e2 = feats.differentiated
    g = pd[:, 0, :] @ params.wp
    z = np.einsum("cd,cnd->cn", g, e2) / np.sqrt(params.d_t)
    alpha = 1.0 / (1.0 + np.exp(-z))
    u = e2 @ params.wv2
    v2 = alpha[:, :, None] * u
    q2 = pd @ params.wq2
    k2 = e2 @ params.wk2
    a2 = softmax_rows(q2 @ k2.transpose(0, 2, 1) / np.sqrt(params.d_p))
    y, inv_std = _layer_norm_rows(a2 @ v2)
    out = pd + y
    tape = DpeTape(
        proto_psi=pd, e2=e2, g=g, alpha=alpha, u=u, v2=v2,
        q2=q2, k2=k2, a2=a2, y=y, inv_std=inv_std,
    )
    return PrototypeSet(stage="dpe", matrices=out), tape


def modulate(
    proto: PrototypeSet, feats: SemanticFeatures, params: ModulationParams
) -> tuple[PrototypeSet, ModulationTape]:
    """Run both stages; returns the enhanced prototypes and the full tape."""
    proto_psi, psi_tape = psi_forward(proto, feats, params)
    proto_dpe, dpe_tape = dpe_forward(proto_psi, feats, params)
    return proto_dpe, ModulationTape(psi=psi_tape, dpe=dpe_tape)


def modulation_backward(
    tape: ModulationTape, params: ModulationParams, grad_out: np.ndarray
) -> ModulationParams:
    """Exact gradients of all seven parameter matrices.

    `grad_out` is the loss gradient with respect to the enhanced prototypes,
    shape (NUM_GRADES, n_s, d_v). `params` must be the matrices used in the
    forward pass that produced `tape`. Gradient accumulation over grades is a
    fixed-order sum, so results are deterministic.
    """
    psi, dpe = tape.psi, tape.dpe
    if grad_out.shape != psi.proto.shape:
        raise ValueError(f"grad_out shape {grad_out.shape} != {psi.proto.shape}")
    scale_p = 1.0 / np.sqrt(params.d_p)
    scale_t = 1.0 / np.sqrt(params.d_t)

    # ----- DPE stage -----
    d_y = grad_out
    # layer-norm rows: dh = inv_std * (dy - mean(dy) - y * mean(dy * y))
    d_h = dpe.inv_std * (
        d_y
        - d_y.mean(axis=-1, keepdims=True)
        - dpe.y * np.mean(d_y * dpe.y, axis=-1, keepdims=True)
    )
    d_a2 = d_h @ dpe.v2.transpose(0, 2, 1)
    d_v2 = dpe.a2.transpose(0, 2, 1) @ d_h
    d_alpha = np.sum(d_v2 * dpe.u, axis=-1)
    d_u = dpe.alpha[:, :, None] * d_v2
    d_wv2 = np.einsum("cnd,cnv->dv", dpe.e2, d_u)

    d_z = d_alpha * dpe.alpha * (1.0 - dpe.alpha)
    d_g = np.einsum("cn,cnd->cd", d_z, dpe.e2) * scale_t
    d_wp = np.einsum("cv,cd->vd", dpe.proto_psi[:, 0, :], d_g)

    d_s2 = _softmax_backward(d_a2, dpe.a2) * scale_p
    d_q2 = d_s2 @ dpe.k2
    d_k2 = d_s2.transpose(0, 2, 1) @ dpe.q2
    d_wq2 = np.einsum("cnv,cnp->vp", dpe.proto_psi, d_q2)
    d_wk2 = np.einsum("cnd,cnp->dp", dpe.e2, d_k2)

    # residual plus query path plus the global-token path through wp
    d_pd = grad_out + d_q2 @ params.wq2.T
    d_pd[:, 0, :] += d_g @ params.wp.T

    # ----- PSI stage -----
    d_a1 = d_pd @ psi.v1.transpose(0, 2, 1)
    d_v1 = psi.a1.transpose(0, 2, 1) @ d_pd
    d_wv1 = np.einsum("cnd,cnv->dv", psi.e1, d_v1)

    d_s1 = _softmax_backward(d_a1, psi.a1) * scale_p
    d_q1 = d_s1 @ psi.k1
    d_k1 = d_s1.transpose(0, 2, 1) @ psi.q1
    d_wq1 = np.einsum("cnv,cnp->vp", psi.proto, d_q1)
    d_wk1 = np.einsum("cnd,cnp->dp", psi.e1, d_k1)

    return ModulationParams(
        wq1=d_wq1, wk1=d_wk1, wv1=d_wv1, wq2=d_wq2, wk2=d_wk2, wv2=d_wv2, wp=d_wp
    )


def checkpoint_payload(
    params: ModulationParams,
    proto_base: PrototypeSet,
    proto_dpe: PrototypeSet,
) -> tuple[dict[str, np.ndarray], dict[str, int]]:
    """Named tensors and dims for the checkpoint store: the seven projections
    plus both prototype stages, so downstream commands need no prompt files."""
    if proto_base.stage != "base" or proto_dpe.stage != "dpe":
        raise ValueError(
            f"expected base and dpe prototype sets, got {proto_base.stage!r}, {proto_dpe.stage!r}"
        )
    tensors = dict(params.as_dict())
    for grade in range(NUM_GRADES):
        tensors[f"proto_base_{grade}"] = proto_base.matrices[grade]
        tensors[f"proto_dpe_{grade}"] = proto_dpe.matrices[grade]
    dims = {
        "n_s": int(proto_base.matrices.shape[1]),
        "d_v": params.d_v,
        "d_t": params.d_t,
        "d_p": params.d_p,
    }
    return tensors, dims


def from_checkpoint(
    tensors: dict[str, np.ndarray], dims: dict[str, int]
) -> tuple[ModulationParams, PrototypeSet, PrototypeSet]:
    """Inverse of checkpoint_payload; validates tensor presence and shapes."""
    missing = [n for n in PARAM_NAMES if n not in tensors]
    missing += [
        f"proto_{stage}_{g}"
        for stage in ("base", "dpe")
        for g in range(NUM_GRADES)
        if f"proto_{stage}_{g}" not in tensors
    ]
    if missing:
        raise ValueError(f"checkpoint missing tensors: {', '.join(missing)}")
    params = ModulationParams(**{n: tensors[n] for n in PARAM_NAMES})
    base = PrototypeSet(
        stage="base",
        matrices=np.stack([tensors[f"proto_base_{g}"] for g in range(NUM_GRADES)]),
    )
    dpe = PrototypeSet(
        stage="dpe",
        matrices=np.stack([tensors[f"proto_dpe_{g}"] for g in range(NUM_GRADES)]),
    )
    for key in ("d_v", "d_t", "d_p"):
        if key in dims and getattr(params, key) != dims[key]:
            raise ValueError(
                f"checkpoint dim {key}={dims[key]} does not match tensors ({getattr(params, key)})"
            )
    return params, base, dpe


def init_params(
    d_v: int, d_t: int, d_p: int = DEFAULT_D_P, seed: int = 0
) -> ModulationParams:
    """Seeded Xavier-uniform projections; value projections start at zero so
    the initial modulation is the identity on prototypes."""
    if min(d_v, d_t, d_p) < 1:
        raise ValueError(f"dims must be positive, got d_v={d_v} d_t={d_t} d_p={d_p}")
    rng = np.random.Generator(np.random.Philox(key=seed))

    def xavier(fan_in: int, fan_out: int) -> np.ndarray:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return ModulationParams(
        wq1=xavier(d_v, d_p),
        wk1=xavier(d_t, d_p),
        wv1=np.zeros((d_t, d_v)),
        wq2=xavier(d_v, d_p),
        wk2=xavier(d_t, d_p),
        wv2=np.zeros((d_t, d_v)),
        wp=xavier(d_v, d_t),
    )
