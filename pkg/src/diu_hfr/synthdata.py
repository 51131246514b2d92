"""Deterministic paired-modality identity data and k-fold protocols.

An identity is a 16-dim standard-normal latent. Its source-modality image is
eight coloured Gaussian blobs over a gradient background, with blob centres
and colours affine in the latent. The target modality re-renders the same
scene through a channel mix, optional intensity inversion, blur and extra
noise, which opens a domain gap while keeping identity information
recoverable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigurationError, DataError
from .seeding import derive_seed, make_rng

LATENT_DIM = 16
N_BLOBS = 8
MODALITIES = ("source", "target")

IDENTITY_MIX = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
# Near-permutation colour rotation (R<-G, G<-B, B<-R); condition number 1.43.
DEFAULT_TARGET_MIX = ((0.1, 0.8, 0.1), (0.1, 0.1, 0.8), (0.8, 0.1, 0.1))


@dataclass(frozen=True)
class IdentityLatent:
    id: int
    z: np.ndarray


@dataclass(frozen=True)
class ModalitySpec:
    name: str
    channel_mix: tuple[tuple[float, ...], ...] = IDENTITY_MIX
    invert: bool = False
    blur_sigma: float = 0.0
    noise_sigma: float = 0.02

    def __post_init__(self) -> None:
        if self.name not in MODALITIES:
            raise ConfigurationError(f"modality name must be one of {MODALITIES}, got {self.name!r}")
        mix = np.asarray(self.channel_mix, dtype=np.float64)
        if mix.shape != (3, 3):
            raise ConfigurationError(f"channel_mix must be 3x3, got shape {mix.shape}")
        object.__setattr__(self, "channel_mix", tuple(tuple(float(v) for v in row) for row in mix))
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise ConfigurationError("blur_sigma and noise_sigma must be >= 0")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "channel_mix": [list(row) for row in self.channel_mix],
            "invert": self.invert,
            "blur_sigma": self.blur_sigma,
            "noise_sigma": self.noise_sigma,
        }


SOURCE = ModalitySpec("source")
TARGET = ModalitySpec("target", channel_mix=DEFAULT_TARGET_MIX, invert=False, blur_sigma=1.0, noise_sigma=0.05)


def make_latent(seed: int, identity: int) -> IdentityLatent:
    return IdentityLatent(identity, make_rng(seed, "latent", identity).standard_normal(LATENT_DIM))


def _layout():
    # Fixed affine maps from latent to blob geometry and colour, shared by all datasets.
    rng = make_rng(20240101, "blob-layout")
    grid = np.array([(x, y) for y in (0.3, 0.5, 0.7) for x in (0.3, 0.5, 0.7)])[:N_BLOBS]
    base_centres = grid + rng.uniform(-0.04, 0.04, size=grid.shape)
    centre_maps = rng.standard_normal((N_BLOBS, 2, LATENT_DIM)) / math.sqrt(LATENT_DIM)
    base_colours = rng.uniform(-0.2, 0.2, size=(N_BLOBS, 3))
    colour_maps = rng.standard_normal((N_BLOBS, 3, LATENT_DIM)) / math.sqrt(LATENT_DIM)
    widths = rng.uniform(0.07, 0.11, size=N_BLOBS)
    return base_centres, centre_maps, base_colours, colour_maps, widths


_BASE_CENTRES, _CENTRE_MAPS, _BASE_COLOURS, _COLOUR_MAPS, _WIDTHS = _layout()
# Centre offsets and colour swing per unit latent, in fractions of the image / intensity.
CENTRE_SCALE = 0.08
COLOUR_SCALE = 0.35
SHIFT_PX = 2.0


def render(latent: IdentityLatent, modality: ModalitySpec, nuisance_seed: int, size=(32, 32)) -> np.ndarray:
    """Render one (H, W, 3) float32 image in [0, 1]."""
    h, w = size
    z = np.asarray(latent.z, dtype=np.float64)
    rng = make_rng(nuisance_seed, "nuisance")
    shift = rng.uniform(-SHIFT_PX, SHIFT_PX, size=2)

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    image = np.empty((h, w, 3))
    grad = 0.35 + 0.15 * (xs / max(w - 1, 1) + ys / max(h - 1, 1)) / 2.0
    image[...] = grad[..., None]

    centres = _BASE_CENTRES + CENTRE_SCALE * (_CENTRE_MAPS @ z)
    colours = _BASE_COLOURS + COLOUR_SCALE * (_COLOUR_MAPS @ z)
    for k in range(N_BLOBS):
        cx = centres[k, 0] * w + shift[0]
        cy = centres[k, 1] * h + shift[1]
        s = _WIDTHS[k] * min(h, w)
        blob = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * s * s))
        image += blob[..., None] * colours[k]

    if modality.noise_sigma > 0:
        image += rng.normal(0.0, modality.noise_sigma, size=image.shape)
    mix = np.asarray(modality.channel_mix)
    if not np.array_equal(mix, np.eye(3)):
        image = image @ mix.T
    if modality.invert:
        image = 1.0 - image
    if modality.blur_sigma > 0:
        image = gaussian_filter(image, sigma=(modality.blur_sigma, modality.blur_sigma, 0.0), mode="nearest")
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def nuisance_seed(seed: int, identity: int, modality: str, sample: int) -> int:
    return derive_seed(seed, "nuisance", identity, modality, sample)


def sample_ref(seed: int, identity: int, modality: str, sample: int) -> str:
    return f"images/{identity}_{modality}_{nuisance_seed(seed, identity, modality, sample)}.f32"


@dataclass(frozen=True)
class DataConfig:
    seed: int = 0
    n_identities: int = 40
    n_samples: int = 20
    image_size: int = 32
    n_folds: int = 5
    source: ModalitySpec = SOURCE
    target: ModalitySpec = TARGET

    def __post_init__(self) -> None:
        if self.n_identities < 2:
            raise ConfigurationError(f"n_identities must be >= 2, got {self.n_identities}")
        if self.n_samples < 2:
            raise ConfigurationError(f"n_samples must be >= 2, got {self.n_samples}")
        if self.image_size < 4:
            raise ConfigurationError(f"image_size must be >= 4, got {self.image_size}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_identities": self.n_identities,
            "n_samples": self.n_samples,
            "image_size": self.image_size,
            "n_folds": self.n_folds,
            "source": self.source.to_dict(),
            "target": self.target.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> DataConfig:
        d = dict(d)
        for key in MODALITIES:
            if key in d and isinstance(d[key], dict):
                d[key] = ModalitySpec(**d[key])
        return cls(**d)


@dataclass
class SyntheticDataset:
    """All rendered images, addressable by (modality, identity, sample) or ref."""

    config: DataConfig
    images: dict[str, np.ndarray]  # modality -> (n_identities, n_samples, H, W, 3)
    _refs: dict[str, tuple[str, int, int]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self._refs:
            for entry in self.index_entries():
                self._refs[entry["path"]] = (entry["modality"], entry["identity"], entry["sample"])

    def index_entries(self) -> list[dict]:
        cfg = self.config
        entries = []
        for identity in range(cfg.n_identities):
            for modality in MODALITIES:
                for sample in range(cfg.n_samples):
                    entries.append(
                        {
                            "path": sample_ref(cfg.seed, identity, modality, sample),
                            "identity": identity,
                            "modality": modality,
                            "sample": sample,
                            "nuisance_seed": nuisance_seed(cfg.seed, identity, modality, sample),
                        }
                    )
        return entries

    def locate(self, ref: str) -> tuple[str, int, int]:
        try:
            return self._refs[ref]
        except KeyError:
            raise DataError(f"unknown sample {ref!r}") from None

    def load(self, refs) -> np.ndarray:
        out = []
        for ref in refs:
            modality, identity, sample = self.locate(ref)
            out.append(self.images[modality][identity, sample])
        return np.stack(out)


def generate_dataset(config: DataConfig = DataConfig()) -> SyntheticDataset:
    size = (config.image_size, config.image_size)
    images = {}
    for modality in (config.source, config.target):
        arr = np.empty((config.n_identities, config.n_samples, *size, 3), dtype=np.float32)
        for identity in range(config.n_identities):
            latent = make_latent(config.seed, identity)
            for sample in range(config.n_samples):
                seed = nuisance_seed(config.seed, identity, modality.name, sample)
                arr[identity, sample] = render(latent, modality, seed, size)
        images[modality.name] = arr
    return SyntheticDataset(config, images)


def save_dataset(dataset: SyntheticDataset, directory) -> Path:
    """Write ``index.json`` and one little-endian float32 file per image."""
    directory = Path(directory)
    (directory / "images").mkdir(parents=True, exist_ok=True)
    entries = dataset.index_entries()
    for entry in entries:
        image = dataset.images[entry["modality"]][entry["identity"], entry["sample"]]
        (directory / entry["path"]).write_bytes(image.astype("<f4").tobytes())
    index = {"config": dataset.config.to_dict(), "entries": entries}
    (directory / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return directory


def load_dataset(directory) -> SyntheticDataset:
    directory = Path(directory)
    try:
        index = json.loads((directory / "index.json").read_text())
    except FileNotFoundError:
        raise DataError(f"no dataset index at {directory / 'index.json'}") from None
    config = DataConfig.from_dict(index["config"])
    size = config.image_size
    images = {m: np.empty((config.n_identities, config.n_samples, size, size, 3), dtype=np.float32) for m in MODALITIES}
    for entry in index["entries"]:
        path = directory / entry["path"]
        try:
            raw = path.read_bytes()
        except OSError:
            raise DataError(f"unreadable sample {path}") from None
        if len(raw) != size * size * 3 * 4:
            raise DataError(f"sample {path} has {len(raw)} bytes, expected {size * size * 12}")
        images[entry["modality"]][entry["identity"], entry["sample"]] = np.frombuffer(raw, dtype="<f4").reshape(
            size, size, 3
        )
    return SyntheticDataset(config, images)


@dataclass(frozen=True)
class Fold:
    index: int
    train_ids: tuple[int, ...]
    eval_ids: tuple[int, ...]
    enrollment: tuple[dict, ...]  # {"path", "identity"}: one source sample per eval identity
    probe: tuple[dict, ...]  # {"path", "identity"}: target samples of eval identities

    def source_probe(self, seed: int, n_samples: int) -> tuple[dict, ...]:
        """Source-modality probes (samples 1..n-1) for intra-modality checks."""
        return tuple(
            {"path": sample_ref(seed, i, "source", s), "identity": i} for i in self.eval_ids for s in range(1, n_samples)
        )

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "train_ids": list(self.train_ids),
            "eval_ids": list(self.eval_ids),
            "enrollment": [dict(e) for e in self.enrollment],
            "probe": [dict(e) for e in self.probe],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Fold:
        return cls(
            d["index"],
            tuple(d["train_ids"]),
            tuple(d["eval_ids"]),
            tuple(dict(e) for e in d["enrollment"]),
            tuple(dict(e) for e in d["probe"]),
        )


@dataclass(frozen=True)
class SyntheticProtocol:
    seed: int
    n_identities: int
    n_samples: int
    folds: tuple[Fold, ...]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_identities": self.n_identities,
            "n_samples": self.n_samples,
            "folds": [f.to_dict() for f in self.folds],
        }

    @classmethod
    def from_dict(cls, d: dict) -> SyntheticProtocol:
        return cls(d["seed"], d["n_identities"], d["n_samples"], tuple(Fold.from_dict(f) for f in d["folds"]))


def build_protocol(seed: int, n_identities: int, n_samples: int, n_folds: int) -> SyntheticProtocol:
    """Shuffle identities with ``seed`` and deal them round-robin into folds."""
    if n_folds < 1:
        raise ConfigurationError(f"n_folds must be >= 1, got {n_folds}")
    if n_identities < 2 * n_folds:
        raise ConfigurationError(f"n_identities={n_identities} is fewer than 2 * n_folds={2 * n_folds}")
    if n_samples < 2:
        raise ConfigurationError(f"n_samples must be >= 2, got {n_samples}")
    order = make_rng(seed, "folds").permutation(n_identities)
    buckets = [sorted(int(i) for i in order[f::n_folds]) for f in range(n_folds)]
    folds = []
    for f, eval_ids in enumerate(buckets):
        train_ids = sorted(set(range(n_identities)) - set(eval_ids))
        enrollment = tuple({"path": sample_ref(seed, i, "source", 0), "identity": i} for i in eval_ids)
        probe = tuple(
            {"path": sample_ref(seed, i, "target", s), "identity": i} for i in eval_ids for s in range(n_samples)
        )
        folds.append(Fold(f, tuple(train_ids), tuple(eval_ids), enrollment, probe))
    return SyntheticProtocol(seed, n_identities, n_samples, tuple(folds))


def save_protocol(protocol: SyntheticProtocol, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(protocol.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


def load_protocol(path) -> SyntheticProtocol:
    return SyntheticProtocol.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PairBatch:
    source: np.ndarray  # (B, H, W, 3)
    target: np.ndarray  # (B, H, W, 3)
    labels: np.ndarray  # (B,) 1 = genuine, 0 = impostor
    source_ids: np.ndarray
    target_ids: np.ndarray


def sample_pairs(
    dataset: SyntheticDataset,
    fold: Fold,
    batch_size: int,
    genuine_fraction: float,
    rng: np.random.Generator,
    identities=None,
) -> PairBatch:
    """Draw genuine pairs first, then impostor pairs, from the fold's train split."""
    if batch_size < 2:
        raise ConfigurationError(f"batch_size must be >= 2, got {batch_size}")
    if not 0.0 < genuine_fraction < 1.0:
        raise ConfigurationError(f"genuine_fraction must be in (0, 1), got {genuine_fraction}")
    ids = np.asarray(fold.train_ids if identities is None else identities)
    if len(ids) < 2:
        raise ConfigurationError(f"fold {fold.index} has fewer than 2 training identities")
    n_samples = dataset.config.n_samples
    n_gen = int(round(batch_size * genuine_fraction))
    n_imp = batch_size - n_gen

    gen_ids = rng.choice(ids, size=n_gen)
    imp = np.array([rng.choice(ids, size=2, replace=False) for _ in range(n_imp)], dtype=np.int64).reshape(n_imp, 2)
    src_ids = np.concatenate([gen_ids, imp[:, 0]]).astype(np.int64)
    tgt_ids = np.concatenate([gen_ids, imp[:, 1]]).astype(np.int64)
    src_samples = rng.integers(0, n_samples, size=batch_size)
    tgt_samples = rng.integers(0, n_samples, size=batch_size)
    return PairBatch(
        source=dataset.images["source"][src_ids, src_samples],
        target=dataset.images["target"][tgt_ids, tgt_samples],
        labels=np.concatenate([np.ones(n_gen), np.zeros(n_imp)]).astype(np.int64),
        source_ids=src_ids,
        target_ids=tgt_ids,
    )
