"""Backend adapter contracts and the name -> factory registry.

Every model the pipeline consumes (captioner, inpainter, re-enactor, pose and
contour detectors, face cropper, embedders) is reached through one of the
protocols below. Adapters operate on raw ``H x W x 3`` float arrays so that
wrapping a third-party model needs no knowledge of this package's types.

Third-party adapters register through the ``dtwin.backends`` entry-point
group: each entry point is a callable that receives the registry.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib.metadata import entry_points
from typing import Callable, Optional, Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import UnknownBackend

log = logging.getLogger(__name__)

CATEGORIES = (
    "captioner",
    "inpainter",
    "reenactor",
    "pose_detector",
    "contour_detector",
    "face_cropper",
    "identity_embedder",
    "expression_embedder",
)


@runtime_checkable
class PoseDetector(Protocol):
    def estimate(self, pixels: np.ndarray) -> Optional[tuple[float, float]]:
        """(yaw, pitch) in degrees, or None when no face is found."""


@runtime_checkable
class ContourDetector(Protocol):
    def detect(self, pixels: np.ndarray) -> list[np.ndarray]:
        """Face-oval polygons, one (N, 2) array of (x, y) per detected face."""


@runtime_checkable
class Captioner(Protocol):
    def caption(self, pixels: np.ndarray) -> str: ...


@runtime_checkable
class Inpainter(Protocol):
    def inpaint(self, pixels: np.ndarray, mask: np.ndarray, prompt: str, seed: int) -> np.ndarray: ...


@runtime_checkable
class Reenactor(Protocol):
    working_resolution: Optional[tuple[int, int]]

    def reenact(self, image: np.ndarray, driving: Sequence[np.ndarray]) -> list[np.ndarray]: ...


@runtime_checkable
class FaceCropper(Protocol):
    def crop(self, pixels: np.ndarray) -> Optional[np.ndarray]: ...


@runtime_checkable
class Embedder(Protocol):
    def embed(self, crop: np.ndarray) -> np.ndarray: ...


PROTOCOLS = {
    "captioner": Captioner,
    "inpainter": Inpainter,
    "reenactor": Reenactor,
    "pose_detector": PoseDetector,
    "contour_detector": ContourDetector,
    "face_cropper": FaceCropper,
    "identity_embedder": Embedder,
    "expression_embedder": Embedder,
}


class BackendRegistry:
    def __init__(self):
        self._factories: dict[str, dict[str, Callable[[], object]]] = {c: {} for c in CATEGORIES}

    def register(self, category: str, name: str, factory: Callable[[], object]) -> None:
        if category not in self._factories:
            raise ValueError(f"unknown backend category {category!r}")
        if name in self._factories[category]:
            raise ValueError(f"{category} backend {name!r} already registered")
        self._factories[category][name] = factory

    def names(self, category: str) -> list[str]:
        return sorted(self._factories[category])

    def has(self, category: str, name: str) -> bool:
        return name in self._factories.get(category, {})

    def check(self, category: str, name: str) -> None:
        if not self.has(category, name):
            known = ", ".join(self.names(category)) or "none"
            raise UnknownBackend(f"no {category} backend named {name!r} (known: {known})")

    def create(self, category: str, name: str):
        self.check(category, name)
        handle = self._factories[category][name]()
        if not isinstance(handle, PROTOCOLS[category]):
            raise TypeError(f"{category} backend {name!r} does not satisfy its adapter contract")
        return handle


@dataclass
class Backends:
    """One resolved handle per category. Not shared across workers."""

    captioner: Captioner
    inpainter: Inpainter
    reenactor: Reenactor
    pose_detector: PoseDetector
    contour_detector: ContourDetector
    face_cropper: FaceCropper
    identity_embedder: Embedder
    expression_embedder: Embedder
    names: dict = field(default_factory=dict)


def resolve_backends(registry: BackendRegistry, names: dict[str, str]) -> Backends:
    """Instantiate one handle per category. All names are checked first."""
    for category in CATEGORIES:
        registry.check(category, names[category])
    handles = {c: registry.create(c, names[c]) for c in CATEGORIES}
    return Backends(**handles, names=dict(names))


_default: Optional[BackendRegistry] = None


def default_registry() -> BackendRegistry:
    """The process-wide registry: synthetic backends plus installed plug-ins."""
    global _default
    if _default is None:
        from . import synthworld

        reg = BackendRegistry()
        synthworld.register(reg)
        for ep in entry_points(group="dtwin.backends"):
            try:
                ep.load()(reg)
            except Exception:  # a broken plug-in must not take the core down
                log.exception("failed to load backend plug-in %s", ep.name)
        _default = reg
    return _default
