"""Block-structured embedding network and the DIU / frozen parameter split.

The network is a stack of ``num_blocks`` convolutional blocks followed by a
head (global average pool, then an affine map to the embedding). Block ``i``
(1-based) owns exactly the parameters named ``blocks.{i-1}.*``; the head owns
``head.*``. A student built by :func:`clone_as_student` trains blocks
``1..k`` and keeps the remaining blocks plus the head frozen.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import ConfigurationError, DataError, ShapeError
from .seeding import make_rng


def default_channels(num_blocks: int) -> tuple[int, ...]:
    """Width schedule 8, 8, 16, 16, 32, 32, 64, 64, ... capped at 64."""
    return tuple(min(64, 8 * 2 ** (i // 2)) for i in range(num_blocks))


@dataclass(frozen=True)
class NetworkConfig:
    input_height: int = 32
    input_width: int = 32
    input_channels: int = 3
    num_blocks: int = 8
    channels_per_block: tuple[int, ...] | None = None
    embedding_dim: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.channels_per_block is None and self.num_blocks >= 1:
            object.__setattr__(self, "channels_per_block", default_channels(self.num_blocks))
        elif self.channels_per_block is not None:
            object.__setattr__(self, "channels_per_block", tuple(int(c) for c in self.channels_per_block))
        self.validate()

    def validate(self) -> None:
        if self.num_blocks < 1:
            raise ConfigurationError(f"num_blocks must be >= 1, got {self.num_blocks}")
        if self.embedding_dim < 1:
            raise ConfigurationError(f"embedding_dim must be >= 1, got {self.embedding_dim}")
        if self.input_channels != 3:
            raise ConfigurationError(f"input_channels must be 3, got {self.input_channels}")
        if self.input_height < 1 or self.input_width < 1:
            raise ConfigurationError("input_height and input_width must be positive")
        if len(self.channels_per_block) != self.num_blocks:
            raise ConfigurationError(
                f"channels_per_block has length {len(self.channels_per_block)}, "
                f"expected num_blocks={self.num_blocks}"
            )
        if any(c < 1 for c in self.channels_per_block):
            raise ConfigurationError("channels_per_block entries must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels_per_block"] = list(self.channels_per_block)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> NetworkConfig:
        return cls(**d)


class ConvBlock(nn.Module):
    """3x3 convolution followed by ReLU; even-numbered blocks downsample by 2."""

    def __init__(self, in_channels: int, out_channels: int, stride: int) -> None:
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=stride, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.relu(self.conv(x))


class EmbeddingNetwork(nn.Module):
    def __init__(self, config: NetworkConfig) -> None:
        super().__init__()
        self.config = config
        blocks = []
        in_ch = config.input_channels
        for i, out_ch in enumerate(config.channels_per_block):
            stride = 2 if i % 2 == 1 else 1
            blocks.append(ConvBlock(in_ch, out_ch, stride))
            in_ch = out_ch
        self.blocks = nn.ModuleList(blocks)
        self.head = nn.Linear(in_ch, config.embedding_dim)

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Map an NCHW float batch to un-normalized (N, D) embeddings."""
        for block in self.blocks:
            x = block(x)
        return self.head(x.mean(dim=(2, 3)))

    def block_parameter_names(self, index: int) -> list[str]:
        """Parameter names of block ``index`` (1-based)."""
        if not 1 <= index <= self.num_blocks:
            raise ConfigurationError(f"block index {index} outside 1..{self.num_blocks}")
        prefix = f"blocks.{index - 1}."
        return [name for name, _ in self.named_parameters() if name.startswith(prefix)]

    def head_parameter_names(self) -> list[str]:
        return [name for name, _ in self.named_parameters() if name.startswith("head.")]

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        """Copies of every parameter as float32 arrays, in block order."""
        return {name: p.detach().cpu().numpy().copy() for name, p in self.named_parameters()}

    def embed(self, images: np.ndarray) -> np.ndarray:
        return forward(self, images)


def _init_parameters(net: EmbeddingNetwork, seed: int) -> None:
    # He-uniform weights (fan-in), zero biases; one Philox stream per parameter.
    with torch.no_grad():
        for name, p in net.named_parameters():
            if name.endswith(".bias"):
                p.zero_()
                continue
            fan_in = int(np.prod(p.shape[1:]))
            gain = 6.0 if name.startswith("blocks.") else 3.0
            bound = np.sqrt(gain / fan_in)
            values = make_rng(seed, "init", name).uniform(-bound, bound, size=tuple(p.shape))
            p.copy_(torch.from_numpy(values.astype(np.float32)))


def build_network(config: NetworkConfig) -> EmbeddingNetwork:
    """Deterministically initialize an untrained network from ``config``."""
    config.validate()
    net = EmbeddingNetwork(config)
    _init_parameters(net, config.seed)
    return net


def _as_batch(net: EmbeddingNetwork, images) -> torch.Tensor:
    if isinstance(images, torch.Tensor):
        images = images.detach().cpu().numpy()
    arr = np.asarray(images)
    cfg = net.config
    if arr.ndim == 3:
        arr = arr[None]
    expected = (cfg.input_height, cfg.input_width, cfg.input_channels)
    if arr.ndim != 4 or arr.shape[1:] != expected:
        raise ShapeError(f"expected images of shape (N, {', '.join(map(str, expected))}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("images contain non-finite values")
    return to_tensor(arr)


def to_tensor(images: np.ndarray) -> torch.Tensor:
    """NHWC array -> contiguous NCHW float32 tensor."""
    return torch.from_numpy(np.ascontiguousarray(np.asarray(images, dtype=np.float32).transpose(0, 3, 1, 2)))


def forward(net: EmbeddingNetwork, images) -> np.ndarray:
    """Embed a batch of (H, W, 3) images; returns a float32 (N, D) array.

    No normalization is applied to the output.
    """
    x = _as_batch(net, images)
    with torch.no_grad():
        return net(x).numpy()


@dataclass(frozen=True)
class ParameterPartition:
    diu_cutoff: int
    trainable_ids: frozenset[str] = field(default_factory=frozenset)
    frozen_ids: frozenset[str] = field(default_factory=frozenset)


def partition_parameters(net: EmbeddingNetwork, diu_cutoff: int) -> ParameterPartition:
    if not 0 <= diu_cutoff <= net.num_blocks:
        raise ConfigurationError(f"diu_cutoff must be in [0, {net.num_blocks}], got {diu_cutoff}")
    trainable = {n for i in range(1, diu_cutoff + 1) for n in net.block_parameter_names(i)}
    everything = {name for name, _ in net.named_parameters()}
    return ParameterPartition(diu_cutoff, frozenset(trainable), frozenset(everything - trainable))


def clone_as_student(teacher: EmbeddingNetwork, diu_cutoff: int) -> tuple[EmbeddingNetwork, ParameterPartition]:
    """Copy ``teacher`` and mark blocks ``1..diu_cutoff`` trainable.

    The teacher is left untouched apart from having ``requires_grad`` cleared
    on all of its parameters.
    """
    partition = partition_parameters(teacher, diu_cutoff)
    student = copy.deepcopy(teacher)
    for name, p in student.named_parameters():
        p.requires_grad_(name in partition.trainable_ids)
    for p in teacher.parameters():
        p.requires_grad_(False)
    return student, partition


def replicate_channels(image: np.ndarray) -> np.ndarray:
    """Turn an (H, W, 1) image into (H, W, 3); (H, W, 3) passes through."""
    arr = np.asarray(image)
    if arr.ndim != 3:
        raise DataError(f"expected an (H, W, C) image, got shape {arr.shape}")
    if arr.shape[2] == 3:
        return arr
    if arr.shape[2] != 1:
        raise DataError(f"cannot replicate an image with {arr.shape[2]} channels")
    return np.repeat(arr, 3, axis=2)


def parameter_digest(net: EmbeddingNetwork, names=None) -> str:
    """SHA-256 over the little-endian float32 bytes of the named parameters."""
    params = dict(net.named_parameters())
    h = hashlib.sha256()
    for name in params:
        if names is not None and name not in names:
            continue
        h.update(name.encode())
        h.update(params[name].detach().cpu().numpy().astype("<f4").tobytes())
    return h.hexdigest()
