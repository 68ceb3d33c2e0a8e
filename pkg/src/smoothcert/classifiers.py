"""A uniform classifier abstraction over local models, remote endpoints,
and denoiser-prefixed pipelines.

All handles map a batch of raw images (noise already applied by the
caller, pixels unclamped) to class indices. Argmax ties always break
toward the lowest class index. Preprocessing (per-channel mean/std) is
owned by the handle and applied after any denoising.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .errors import MappingError, RemoteError, ShapeError
from .nn import Model, as_tensor, softmax

OTHER_LABEL = "__other__"


class LabelMap:
    """Ordered label strings <-> class indices, with an optional reserved
    fallback class for labels outside the vocabulary."""

    def __init__(self, labels: Sequence[str], allow_other: bool = True):
        labels = list(labels)
        if len(set(labels)) != len(labels):
            raise MappingError("label names must be unique")
        self.labels = labels
        self.allow_other = allow_other
        self._index = {name: i for i, name in enumerate(labels)}

    @property
    def num_classes(self) -> int:
        return len(self.labels) + (1 if self.allow_other else 0)

    @property
    def other_index(self) -> int | None:
        return len(self.labels) if self.allow_other else None

    def index_of(self, label: str) -> int:
        idx = self._index.get(label)
        if idx is not None:
            return idx
        if self.allow_other:
            return self.other_index
        raise MappingError(f"label {label!r} is not in the map and the fallback class is disabled")

    def label_of(self, index: int) -> str:
        if 0 <= index < len(self.labels):
            return self.labels[index]
        if self.allow_other and index == self.other_index:
            return OTHER_LABEL
        raise MappingError(f"class index {index} out of range")

    @classmethod
    def default(cls, num_classes: int, allow_other: bool = True) -> "LabelMap":
        return cls([f"class_{i}" for i in range(num_classes)], allow_other=allow_other)

    @classmethod
    def load(cls, path: str | Path, allow_other: bool = True) -> "LabelMap":
        return cls(json.loads(Path(path).read_text()), allow_other=allow_other)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.labels, indent=0) + "\n")


class ClassifierHandle:
    """Base interface: classify a batch of images into class indices."""

    num_classes: int
    input_shape: tuple[int, ...]

    def classify(self, batch: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class LocalModel(ClassifierHandle):
    def __init__(self, model: Model, mean: Sequence[float] | None = None, std: Sequence[float] | None = None):
        self.model = model
        self.input_shape = model.input_shape
        self.num_classes = int(model.output_shape[-1])
        if self.num_classes < 2:
            raise ShapeError("a classifier must have at least 2 output classes")
        channels = model.input_shape[0] if len(model.input_shape) == 3 else 1
        self.mean = np.zeros(channels) if mean is None else np.asarray(mean, dtype=np.float64)
        self.std = np.ones(channels) if std is None else np.asarray(std, dtype=np.float64)
        if np.any(self.std <= 0):
            raise ShapeError("preprocessing std must be positive")

    def normalize(self, batch: np.ndarray) -> np.ndarray:
        if len(self.input_shape) == 3:
            return (batch - self.mean[:, None, None]) / self.std[:, None, None]
        return (batch - self.mean) / self.std

    def logits(self, batch: np.ndarray) -> np.ndarray:
        return self.model.forward(self.normalize(as_tensor(batch)))

    def scores(self, batch: np.ndarray) -> np.ndarray:
        return softmax(self.logits(batch))

    def classify(self, batch: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(batch), axis=1)


class Remote(ClassifierHandle):
    """Client for the /v1/classify wire protocol.

    The remote answers per image with a score-sorted label list; its
    top entry is mapped through the label map (ranking ties were already
    broken by the service: the first listed label wins).
    """

    def __init__(
        self,
        endpoint: str,
        label_map: LabelMap,
        input_shape: tuple[int, ...],
        timeout: float = 10.0,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.label_map = label_map
        self.input_shape = tuple(input_shape)
        self.num_classes = label_map.num_classes
        self.timeout = timeout
        self._local = threading.local()

    def _session(self) -> requests.Session:
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def classify_one(self, image: np.ndarray) -> int:
        image = as_tensor(image)
        if image.shape != self.input_shape:
            raise ShapeError(f"expected image of shape {self.input_shape}, got {image.shape}")
        shape = list(image.shape) if image.ndim == 3 else [1, 1, image.shape[0]]
        payload = {"shape": shape, "pixels": image.ravel().tolist()}
        try:
            resp = self._session().post(
                f"{self.endpoint}/v1/classify", json=payload, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise RemoteError(f"request to {self.endpoint} failed: {exc}") from exc
        if resp.status_code != 200:
            raise RemoteError(f"{self.endpoint} answered HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            labels = resp.json()["labels"]
            top = labels[0]["name"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise RemoteError(f"malformed response from {self.endpoint}: {exc}") from exc
        return self.label_map.index_of(top)

    def classify(self, batch: np.ndarray) -> np.ndarray:
        batch = as_tensor(batch)
        return np.array([self.classify_one(image) for image in batch], dtype=np.int64)


class Denoised(ClassifierHandle):
    """Runs a denoiser before the inner handle (and its preprocessing)."""

    def __init__(self, denoiser: Model, inner: ClassifierHandle):
        if denoiser.output_shape != tuple(inner.input_shape):
            raise ShapeError(
                f"denoiser output {denoiser.output_shape} does not match classifier input {inner.input_shape}"
            )
        self.denoiser = denoiser
        self.inner = inner
        self.input_shape = denoiser.input_shape
        self.num_classes = inner.num_classes

    def classify(self, batch: np.ndarray) -> np.ndarray:
        return self.inner.classify(self.denoiser.forward(as_tensor(batch)))


def classify(handle: ClassifierHandle, batch: np.ndarray) -> np.ndarray:
    """Functional form of handle.classify for a batch (B, ...)."""
    return handle.classify(batch)


def classify_remote(
    endpoint: str,
    image: np.ndarray,
    label_map: LabelMap,
    timeout: float = 10.0,
) -> int:
    """One-shot remote classification of a single image."""
    handle = Remote(endpoint, label_map, tuple(np.asarray(image).shape), timeout=timeout)
    return handle.classify_one(image)
