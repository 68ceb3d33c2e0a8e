"""Dataset container, its binary file format, and the synthetic benchmark.

The DSK1 file layout (little-endian): magic "DSK1", u16 version=1,
u32 count, u32 C, u32 H, u32 W, u16 num_classes, then count*(C*H*W)
float32 pixels and count u16 labels. Pixels live in [0, 1]; storage is
float32 so synthetic generation quantizes through float32 at creation,
making save/load round trips bit-exact.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .errors import ArgumentError, FormatError, RangeError

MAGIC = b"DSK1"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIIH")


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64
    num_classes: int
    split: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or len(self.images) != len(self.labels):
            raise ArgumentError("images must be (N,C,H,W) with one label per image")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    n, c, h, w = dataset.images.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, n, c, h, w, dataset.num_classes))
        f.write(np.ascontiguousarray(dataset.images, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(dataset.labels, dtype="<u2").tobytes())


def load_dataset(path: str | Path, split: str = "") -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: too short for a dataset header")
    magic, version, n, c, h, w, num_classes = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: not a dataset file (bad magic)")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported dataset version {version}")
    pixel_bytes = 4 * n * c * h * w
    expected = _HEADER.size + pixel_bytes + 2 * n
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    pixels = np.frombuffer(raw, dtype="<f4", count=n * c * h * w, offset=_HEADER.size)
    images = pixels.astype(np.float64).reshape(n, c, h, w)
    labels = np.frombuffer(raw, dtype="<u2", count=n, offset=_HEADER.size + pixel_bytes)
    if n and (images.min() < -1e-9 or images.max() > 1.0 + 1e-9):
        raise RangeError(f"{path}: pixels outside [0,1] (min {images.min()}, max {images.max()})")
    if n and labels.max() >= num_classes:
        raise FormatError(f"{path}: label {labels.max()} >= declared class count {num_classes}")
    return Dataset(images, labels.astype(np.int64), int(num_classes), split=split)


@dataclass(frozen=True)
class SyntheticSpec:
    channels: int = 1
    height: int = 8
    width: int = 8
    num_classes: int = 4
    per_class: int = 500

    def __post_init__(self):
        if min(self.channels, self.height, self.width, self.num_classes) < 1:
            raise ArgumentError("channels, height, width, num_classes must be >= 1")
        if self.per_class < 0:
            raise ArgumentError("per_class must be >= 0")


def make_synthetic_dataset(spec: SyntheticSpec, seed: int, split: str = "") -> Dataset:
    """Class-conditional grating mixtures with phase/amplitude jitter.

    Class c is dominated by a sinusoidal grating at orientation
    pi*c/num_classes, with weaker gratings of the other orientations
    mixed in as distractors. Clean images are easily separable (the
    dominant component is about twice the distractors), but the mixture
    keeps predictions spread across classes under heavy pixel noise
    instead of collapsing onto a single attractor class.
    """
    gen = rng.generator(seed, rng.DOMAIN_DATA)
    n = spec.num_classes * spec.per_class
    images = np.zeros((n, spec.channels, spec.height, spec.width))
    labels = np.zeros(n, dtype=np.int64)
    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width]
    cycles = 2.0  # grating periods across the image
    projections = []
    for c in range(spec.num_classes):
        theta = math.pi * c / spec.num_classes
        projections.append(
            (xs * math.cos(theta) + ys * math.sin(theta)) / max(spec.height, spec.width)
        )
    pos = 0
    for c in range(spec.num_classes):
        for _ in range(spec.per_class):
            base = np.full((spec.height, spec.width), 0.5)
            for comp in range(spec.num_classes):
                phase = gen.uniform(0.0, 2.0 * math.pi)
                if comp == c:
                    amplitude = gen.uniform(0.20, 0.28)
                else:
                    amplitude = gen.uniform(0.0, 0.08)
                base = base + amplitude * np.sin(2.0 * math.pi * cycles * projections[comp] + phase)
            img = base[None, :, :] + gen.uniform(
                -0.02, 0.02, size=(spec.channels, spec.height, spec.width)
            )
            images[pos] = np.clip(img, 0.0, 1.0)
            labels[pos] = c
            pos += 1
    # interleave classes so any index-ordered subset stays balanced
    order = rng.generator(seed, rng.DOMAIN_DATA, 1).permutation(n)
    images = images[order]
    labels = labels[order]
    # storage is float32; quantize now so in-memory and on-disk data agree
    images = images.astype(np.float32).astype(np.float64)
    return Dataset(images, labels, spec.num_classes, split=split)
