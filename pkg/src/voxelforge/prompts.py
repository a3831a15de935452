"""Class/point prompt types, the class-embedding head, and 3D point embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .supervoxel import FeatureVolume

MAX_CLASS_INDEX = 127

# Class indices that need the shared disambiguation vector added to their
# point prompts (organ-vs-lesion overlaps). Best-effort defaults against the
# packaged label table; override per deployment.
DEFAULT_AMBIGUOUS_CLASSES = frozenset({117, 118, 119, 120, 121})


@dataclass(frozen=True)
class ClassPrompt:
    """Integer class index selecting a class embedding; 0 is the background sentinel."""

    class_index: int

    def __post_init__(self):
        idx = int(self.class_index)
        if not 0 <= idx <= MAX_CLASS_INDEX:
            raise ValueError(f"class index {idx} outside 0..{MAX_CLASS_INDEX}")
        object.__setattr__(self, "class_index", idx)


@dataclass(frozen=True)
class PromptContext:
    """Semantic context of a click: a supported class, an ambiguous class,
    or a zero-shot (novel) structure."""

    kind: str  # "supported" | "ambiguous" | "zero_shot"
    class_index: int | None = None

    def __post_init__(self):
        if self.kind not in ("supported", "ambiguous", "zero_shot"):
            raise ValueError(f"unknown context kind {self.kind!r}")
        if self.kind == "zero_shot":
            object.__setattr__(self, "class_index", None)
        elif self.class_index is None:
            raise ValueError(f"{self.kind} context requires a class index")

    @staticmethod
    def for_class(class_index: int, ambiguous_classes=DEFAULT_AMBIGUOUS_CLASSES) -> "PromptContext":
        if int(class_index) in ambiguous_classes:
            return PromptContext("ambiguous", int(class_index))
        return PromptContext("supported", int(class_index))

    @staticmethod
    def zero_shot() -> "PromptContext":
        return PromptContext("zero_shot")


@dataclass(frozen=True)
class PointPrompt:
    """A 3D click: voxel position, polarity, and class context."""

    position: tuple[int, int, int]
    positive: bool
    context: PromptContext = PromptContext("zero_shot")

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(int(c) for c in self.position))
        object.__setattr__(self, "positive", bool(self.positive))

    @property
    def polarity(self) -> str:
        return "pos" if self.positive else "neg"


def _vec(v, C: int, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (C,):
        raise ValueError(f"{name} must have shape ({C},), got {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite values")
    return a


@dataclass(frozen=True)
class PromptHeadParams:
    """Parameters of the promptable head.

    ``class_embeddings`` holds one row per class index 1..N. ``mlp`` is a
    list of (weight, bias) layers applied to the selected embedding with a
    ReLU between layers (empty list = identity). The special embedding is a
    single vector shared by every ambiguous class; the zero-shot embedding
    marks novel-structure clicks.
    """

    class_embeddings: np.ndarray
    mlp: tuple[tuple[np.ndarray, np.ndarray], ...] = ()
    special_embedding: np.ndarray | None = None
    zero_shot_embedding: np.ndarray | None = None
    positive_embedding: np.ndarray | None = None
    negative_embedding: np.ndarray | None = None

    def __post_init__(self):
        E = np.asarray(self.class_embeddings, dtype=np.float64)
        if E.ndim != 2:
            raise ValueError("class_embeddings must be a (N, C) matrix")
        if not np.isfinite(E).all():
            raise ValueError("class_embeddings contain non-finite values")
        C = E.shape[1]
        layers = []
        for W, b in self.mlp:
            W = np.asarray(W, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValueError("mlp layer shapes inconsistent")
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise ValueError("mlp weights contain non-finite values")
            layers.append((W, b))
        object.__setattr__(self, "class_embeddings", E)
        object.__setattr__(self, "mlp", tuple(layers))
        for name in ("special_embedding", "zero_shot_embedding", "positive_embedding", "negative_embedding"):
            v = getattr(self, name)
            object.__setattr__(self, name, None if v is None else _vec(v, C, name))

    @property
    def n_classes(self) -> int:
        return self.class_embeddings.shape[0]

    @property
    def channels(self) -> int:
        return self.class_embeddings.shape[1]

    def _aux(self, name: str) -> np.ndarray:
        v = getattr(self, name)
        return np.zeros(self.channels) if v is None else v

    def apply_mlp(self, x: np.ndarray) -> np.ndarray:
        out = x
        for i, (W, b) in enumerate(self.mlp):
            out = W @ out + b
            if i + 1 < len(self.mlp):
                out = np.maximum(out, 0.0)
        return out


def random_head_params(
    n_classes: int = MAX_CLASS_INDEX,
    channels: int = 256,
    hidden: int | None = None,
    seed: int = 0,
) -> PromptHeadParams:
    """Randomly initialized head parameters (two-layer MLP by default)."""
    rng = np.random.default_rng(seed)
    C = channels
    h = hidden or C
    scale = 1.0 / np.sqrt(C)
    return PromptHeadParams(
        class_embeddings=rng.normal(0, scale, (n_classes, C)),
        mlp=(
            (rng.normal(0, scale, (h, C)), np.zeros(h)),
            (rng.normal(0, scale, (C, h)), np.zeros(C)),
        ),
        special_embedding=rng.normal(0, scale, C),
        zero_shot_embedding=rng.normal(0, scale, C),
        positive_embedding=rng.normal(0, scale, C),
        negative_embedding=rng.normal(0, scale, C),
    )


def prompt_head(
    F: FeatureVolume,
    params: PromptHeadParams,
    prompts: list[ClassPrompt],
) -> np.ndarray:
    """Per-prompt probability volumes from per-voxel feature inner products.

    For each prompt the class embedding row runs through the MLP and the
    logit at each voxel is the inner product with the feature vector there,
    followed by a sigmoid. Prompts are independent: the batched result is
    identical to stacking singleton runs.
    """
    if not prompts:
        raise ValueError("prompts must be nonempty")
    if F.channels != params.channels:
        raise ValueError(
            f"feature channels {F.channels} != embedding channels {params.channels}"
        )
    data = F.data.astype(np.float64)
    out = []
    for p in prompts:
        if not 1 <= p.class_index <= params.n_classes:
            raise ValueError(
                f"class index {p.class_index} outside 1..{params.n_classes}"
            )
        w = params.apply_mlp(params.class_embeddings[p.class_index - 1])
        logits = np.einsum("c,cxyz->xyz", w, data)
        out.append(expit(logits))
    return np.stack(out)


def positional_encoding(
    position: tuple[int, int, int],
    dims: tuple[int, int, int],
    channels: int,
    freq_bands: int,
) -> np.ndarray:
    """3D Fourier features of a voxel position, zero-padded to ``channels``.

    Positions normalize to [0, 1] per axis; each axis contributes
    sin/cos pairs at frequencies 2^k for k < freq_bands.
    """
    K = int(freq_bands)
    if K < 1:
        raise ValueError("freq_bands must be >= 1")
    if channels % 2 != 0 or channels < 6 * K:
        raise ValueError(f"channels must be even and >= {6 * K}, got {channels}")
    for c, d in zip(position, dims):
        if not 0 <= c < d:
            raise ValueError(f"position {position} outside dims {dims}")
    pe = np.zeros(channels, dtype=np.float64)
    i = 0
    for axis in range(3):
        norm = position[axis] / max(dims[axis] - 1, 1)
        for k in range(K):
            angle = 2.0 * np.pi * (2.0**k) * norm
            pe[i] = np.sin(angle)
            pe[i + 1] = np.cos(angle)
            i += 2
    return pe


def embed_points(
    points: list[PointPrompt],
    params: PromptHeadParams,
    dims: tuple[int, int, int],
    freq_bands: int = 6,
) -> np.ndarray:
    """Per-point embedding vectors (len(points), C).

    Each embedding is the Fourier positional encoding plus the polarity
    vector, plus the shared special vector for ambiguous contexts and the
    zero-shot vector for novel-structure contexts.
    """
    C = params.channels
    out = np.zeros((len(points), C), dtype=np.float64)
    for i, p in enumerate(points):
        e = positional_encoding(p.position, dims, C, freq_bands)
        e = e + params._aux("positive_embedding" if p.positive else "negative_embedding")
        if p.context.kind == "ambiguous":
            e = e + params._aux("special_embedding")
        elif p.context.kind == "zero_shot":
            e = e + params._aux("zero_shot_embedding")
        out[i] = e
    return out
