"""Biometric scoring and metrics.

Conventions, shared with the brute-force oracles in the tests:

* a comparison is accepted when ``score >= threshold``;
* ``FAR(t)`` is the fraction of impostor scores ``>= t`` and ``FRR(t)`` the
  fraction of genuine scores ``< t``;
* thresholds are swept over the sorted union of scores plus ``+inf``;
* Rank-1 ties are broken toward the lowest gallery index.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .backbone import EmbeddingNetwork, forward
from .errors import MetricError, ProtocolError

FAR_TARGETS = (1e-4, 1e-3, 1e-2, 5e-2)
METRICS = ("auc", "eer", "rank1", "vr_far_0p1", "vr_far_1")


@dataclass(frozen=True)
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "genuine", np.asarray(self.genuine, dtype=np.float64).ravel())
        object.__setattr__(self, "impostor", np.asarray(self.impostor, dtype=np.float64).ravel())

    def require_both(self) -> None:
        if self.genuine.size == 0 or self.impostor.size == 0:
            raise MetricError(
                f"need genuine and impostor scores, got {self.genuine.size} and {self.impostor.size}"
            )
        if not (np.all(np.isfinite(self.genuine)) and np.all(np.isfinite(self.impostor))):
            raise MetricError("scores must be finite")


def _rates(scores: ScoreSet, thresholds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """FAR and FRR at each threshold."""
    imp = np.sort(scores.impostor)
    gen = np.sort(scores.genuine)
    far = (imp.size - np.searchsorted(imp, thresholds, side="left")) / imp.size
    frr = np.searchsorted(gen, thresholds, side="left") / gen.size
    return far, frr


def _thresholds(scores: ScoreSet) -> np.ndarray:
    return np.append(np.unique(np.concatenate([scores.genuine, scores.impostor])), np.inf)


def eer(scores: ScoreSet) -> float:
    """Equal error rate, linearly interpolated at the FAR/FRR crossing."""
    scores.require_both()
    far, frr = _rates(scores, _thresholds(scores))
    diff = far - frr  # nonincreasing along the sweep; > 0 at the first threshold
    j = int(np.argmax(diff <= 0.0))
    if diff[j] == 0.0 or j == 0:
        return float(far[j])
    alpha = diff[j - 1] / (diff[j - 1] - diff[j])
    return float(far[j - 1] + alpha * (far[j] - far[j - 1]))


def auc(scores: ScoreSet) -> float:
    """P(genuine > impostor) with ties counted one half (Mann-Whitney U)."""
    scores.require_both()
    n_g, n_i = scores.genuine.size, scores.impostor.size
    ranks = rankdata(np.concatenate([scores.genuine, scores.impostor]))
    u = ranks[:n_g].sum() - n_g * (n_g + 1) / 2.0
    return float(u / (n_g * n_i))


def vr_at_far(scores: ScoreSet, far_target: float) -> float:
    """Verification rate at the lowest threshold whose FAR does not exceed ``far_target``."""
    if not 0.0 < far_target < 1.0:
        raise MetricError(f"far_target must be in (0, 1), got {far_target}")
    scores.require_both()
    thresholds = _thresholds(scores)
    far, frr = _rates(scores, thresholds)
    j = int(np.argmax(far <= far_target))  # far reaches 0 at +inf, so a hit exists
    return float(1.0 - frr[j])


def is_underresolved(n_impostor: int, far_target: float) -> bool:
    """True when the impostor count cannot resolve ``far_target``."""
    return n_impostor < 1.0 / far_target


def roc_points(scores: ScoreSet) -> list[tuple[float, float, float]]:
    """``(far, tpr, threshold)`` at every distinct score, thresholds descending."""
    scores.require_both()
    thresholds = np.unique(np.concatenate([scores.genuine, scores.impostor]))[::-1]
    far, frr = _rates(scores, thresholds)
    return [(float(a), float(1.0 - r), float(t)) for a, r, t in zip(far, frr, thresholds)]


def rank1(similarity: np.ndarray, probe_ids, gallery_ids) -> float:
    similarity = np.asarray(similarity, dtype=np.float64)
    probe_ids = np.asarray(probe_ids)
    gallery_ids = np.asarray(gallery_ids)
    if similarity.shape != (probe_ids.size, gallery_ids.size):
        raise MetricError(f"similarity shape {similarity.shape} != ({probe_ids.size}, {gallery_ids.size})")
    if probe_ids.size == 0:
        raise MetricError("no probes")
    missing = set(probe_ids.tolist()) - set(gallery_ids.tolist())
    if missing:
        raise ProtocolError(f"probe identities missing from gallery: {sorted(missing)}")
    best = np.argmax(similarity, axis=1)  # first maximum = lowest gallery index
    return float(np.mean(gallery_ids[best] == probe_ids))


def cosine_matrix(probe: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    """Clamped cosine similarity, shape (n_probe, n_gallery)."""
    p = np.asarray(probe, dtype=np.float64)
    g = np.asarray(gallery, dtype=np.float64)
    p = p / np.linalg.norm(p, axis=1, keepdims=True)
    g = g / np.linalg.norm(g, axis=1, keepdims=True)
    return np.clip(p @ g.T, -1.0, 1.0)


def score_protocol(net: EmbeddingNetwork, dataset, enrollment, probe) -> tuple[ScoreSet, np.ndarray]:
    """Embed gallery and probes with ``net``; returns scores and the probe x gallery matrix."""
    gallery_ids = np.array([e["identity"] for e in enrollment])
    probe_ids = np.array([e["identity"] for e in probe])
    gallery_emb = forward(net, dataset.load([e["path"] for e in enrollment]))
    probe_emb = forward(net, dataset.load([e["path"] for e in probe]))
    sim = cosine_matrix(probe_emb, gallery_emb)
    mask = probe_ids[:, None] == gallery_ids[None, :]
    return ScoreSet(sim[mask], sim[~mask]), sim


@dataclass
class EvalReport:
    auc: float
    eer: float
    rank1: float
    vr_at_far: dict[float, float]
    roc: list[tuple[float, float, float]]
    n_genuine: int
    n_impostor: int
    n_gallery: int
    n_probe: int
    underresolved: dict[float, bool] = field(default_factory=dict)

    def metric(self, name: str) -> float:
        if name == "vr_far_0p1":
            return self.vr_at_far[1e-3]
        if name == "vr_far_1":
            return self.vr_at_far[1e-2]
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "eer": self.eer,
            "rank1": self.rank1,
            "vr_at_far": {repr(k): v for k, v in sorted(self.vr_at_far.items())},
            "underresolved": {repr(k): v for k, v in sorted(self.underresolved.items())},
            "roc": [list(p) for p in self.roc],
            "n_genuine": self.n_genuine,
            "n_impostor": self.n_impostor,
            "n_gallery": self.n_gallery,
            "n_probe": self.n_probe,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> EvalReport:
        return cls(
            auc=d["auc"],
            eer=d["eer"],
            rank1=d["rank1"],
            vr_at_far={float(k): v for k, v in d["vr_at_far"].items()},
            roc=[tuple(p) for p in d["roc"]],
            n_genuine=d["n_genuine"],
            n_impostor=d["n_impostor"],
            n_gallery=d["n_gallery"],
            n_probe=d["n_probe"],
            underresolved={float(k): v for k, v in d.get("underresolved", {}).items()},
        )

    @classmethod
    def from_json(cls, text: str) -> EvalReport:
        return cls.from_dict(json.loads(text))

    def dump_roc_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["far", "tpr", "threshold"])
            writer.writerows(self.roc)


def make_report(scores: ScoreSet, similarity: np.ndarray, probe_ids, gallery_ids) -> EvalReport:
    n_imp = int(scores.impostor.size)
    return EvalReport(
        auc=auc(scores),
        eer=eer(scores),
        rank1=rank1(similarity, probe_ids, gallery_ids),
        vr_at_far={f: vr_at_far(scores, f) for f in FAR_TARGETS},
        roc=roc_points(scores),
        n_genuine=int(scores.genuine.size),
        n_impostor=n_imp,
        n_gallery=int(len(gallery_ids)),
        n_probe=int(len(probe_ids)),
        underresolved={f: is_underresolved(n_imp, f) for f in FAR_TARGETS},
    )


def evaluate(net: EmbeddingNetwork, dataset, enrollment, probe) -> EvalReport:
    """Score ``probe`` against ``enrollment`` and compute every metric."""
    scores, sim = score_protocol(net, dataset, enrollment, probe)
    return make_report(scores, sim, [e["identity"] for e in probe], [e["identity"] for e in enrollment])


def aggregate_folds(reports) -> dict[str, tuple[float, float]]:
    """Mean and population standard deviation of each metric across folds."""
    reports = list(reports)
    if not reports:
        raise MetricError("no reports to aggregate")
    out = {}
    for name in METRICS:
        values = np.array([r.metric(name) for r in reports])
        out[name] = (float(values.mean()), float(values.std()))
    return out
