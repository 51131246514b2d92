"""Cosine contrastive and embedding distillation losses, mixed by ``gamma``.

All functions work on float64 numpy arrays of shape ``(batch, D)`` and are
pure. Gradients are analytic; the trainer feeds them back through the
network with ``torch.autograd.backward``.

Per pair ``i`` with cosine ``c_i`` between source and target embeddings::

    contrastive_i = (1 - y_i) * max(0, c_i - margin) + y_i * (1 - c_i)
    distill_i     = || teacher_i - student_i ||_2

Both are averaged over the batch, and the objective is
``(1 - gamma) * contrastive + gamma * distill``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateEmbeddingError, ShapeError


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.0
    gamma: float = 0.75
    eps: float = 1e-12
    # Use ||.||^2 instead of ||.|| for the distillation term.
    squared_distillation: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1], got {self.gamma}")
        if not -1.0 <= self.margin <= 1.0:
            raise ConfigurationError(f"margin must be in [-1, 1], got {self.margin}")
        if not self.eps > 0.0:
            raise ConfigurationError(f"eps must be > 0, got {self.eps}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LossBreakdown:
    contrastive: float
    distillation: float
    total: float
    per_pair_contrastive: np.ndarray


def _as_batch(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ShapeError(f"{name} must be a non-empty (batch, D) array, got shape {arr.shape}")
    return arr


def _check_aligned(*pairs: tuple[np.ndarray, str]) -> None:
    ref, ref_name = pairs[0]
    for arr, name in pairs[1:]:
        if arr.shape != ref.shape:
            raise ShapeError(f"{name} shape {arr.shape} does not match {ref_name} shape {ref.shape}")


def _norms(x: np.ndarray, eps: float, name: str) -> np.ndarray:
    n = np.sqrt(np.sum(x * x, axis=1))
    if np.any(n < eps):
        bad = int(np.flatnonzero(n < eps)[0])
        raise DegenerateEmbeddingError(f"{name}[{bad}] has norm {n[bad]:.3g} < eps={eps:g}")
    return n


def _cosines(a: np.ndarray, b: np.ndarray, eps: float):
    na = _norms(a, eps, "e_s")
    nb = _norms(b, eps, "e_t")
    dots = np.sum(a * b, axis=1)
    denom = na * nb + eps
    return dots / denom, dots, na, nb, denom


def cosine_similarity(a, b, eps: float = 1e-12) -> float:
    """Cosine similarity ``a.b / (|a||b| + eps)`` of two vectors (unclamped)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"vector shapes differ: {a.shape} vs {b.shape}")
    return float(_cosines(a[None], b[None], eps)[0][0])


def _check_labels(y, batch: int) -> np.ndarray:
    labels = np.asarray(y)
    if labels.shape != (batch,):
        raise ShapeError(f"labels must have shape ({batch},), got {labels.shape}")
    if not np.all((labels == 0) | (labels == 1)):
        raise ShapeError("labels must be 0 or 1")
    return labels.astype(np.float64)


def contrastive_loss(e_s, e_t, y, cfg: LossConfig = LossConfig()) -> tuple[float, np.ndarray]:
    """Mean cosine contrastive loss and the per-pair values."""
    e_s = _as_batch(e_s, "e_s")
    e_t = _as_batch(e_t, "e_t")
    _check_aligned((e_s, "e_s"), (e_t, "e_t"))
    labels = _check_labels(y, e_s.shape[0])
    cos = _cosines(e_s, e_t, cfg.eps)[0]
    per_pair = (1.0 - labels) * np.maximum(0.0, cos - cfg.margin) + labels * (1.0 - cos)
    return float(np.mean(per_pair)), per_pair


def distillation_loss(e_teacher, e_student, cfg: LossConfig = LossConfig()) -> float:
    """Mean Euclidean distance between teacher and student embeddings."""
    e_teacher = _as_batch(e_teacher, "e_teacher")
    e_student = _as_batch(e_student, "e_student")
    _check_aligned((e_teacher, "e_teacher"), (e_student, "e_student"))
    diff = e_teacher - e_student
    sq = np.sum(diff * diff, axis=1)
    per_pair = sq if cfg.squared_distillation else np.sqrt(sq)
    return float(np.mean(per_pair))


def total_loss(e_s_student, e_t_student, e_s_teacher, y, cfg: LossConfig = LossConfig()) -> LossBreakdown:
    lc, per_pair = contrastive_loss(e_s_student, e_t_student, y, cfg)
    ldl = distillation_loss(e_s_teacher, e_s_student, cfg)
    total = (1.0 - cfg.gamma) * lc + cfg.gamma * ldl
    return LossBreakdown(contrastive=lc, distillation=ldl, total=total, per_pair_contrastive=per_pair)


def loss_gradients(e_s_student, e_t_student, e_s_teacher, y, cfg: LossConfig = LossConfig()):
    """Gradients of the total loss w.r.t. ``(e_s_student, e_t_student)``.

    Teacher embeddings are constants. At an exact zero teacher/student
    difference the (unsquared) distance uses the zero subgradient, and at the
    impostor hinge kink ``cos == margin`` the inactive branch is taken.
    """
    a = _as_batch(e_s_student, "e_s_student")
    b = _as_batch(e_t_student, "e_t_student")
    t = _as_batch(e_s_teacher, "e_s_teacher")
    _check_aligned((a, "e_s_student"), (b, "e_t_student"), (t, "e_s_teacher"))
    labels = _check_labels(y, a.shape[0])
    batch = a.shape[0]

    cos, dots, na, nb, denom = _cosines(a, b, cfg.eps)
    # d(per_pair)/d(cos): -1 for genuine, +1 for an active impostor hinge.
    dl_dcos = -labels + (1.0 - labels) * (cos > cfg.margin)
    # cos = dots / (na*nb + eps)
    dcos_da = b / denom[:, None] - (dots / denom**2 * nb / na)[:, None] * a
    dcos_db = a / denom[:, None] - (dots / denom**2 * na / nb)[:, None] * b
    w = (1.0 - cfg.gamma) * dl_dcos / batch
    grad_a = w[:, None] * dcos_da
    grad_b = w[:, None] * dcos_db

    diff = a - t
    if cfg.squared_distillation:
        ddl_da = 2.0 * diff
    else:
        dist = np.sqrt(np.sum(diff * diff, axis=1))
        safe = np.where(dist > 0.0, dist, 1.0)
        ddl_da = np.where((dist > 0.0)[:, None], diff / safe[:, None], 0.0)
    grad_a = grad_a + (cfg.gamma / batch) * ddl_da
    return grad_a, grad_b
