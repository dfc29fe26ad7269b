from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import softmax

from errors import MissingDepthWithNonzeroWeight, NonFiniteInput, ShapeMismatch
from tensor_io import LabelMask, Tensor

# (name, row offset, column offset); the order fixes the last axis of every field
DIRECTIONS: tuple[tuple[str, int, int], ...] = (
    ("NW", -1, -1),
    ("N", -1, 0),
    ("NE", -1, 1),
    ("W", 0, -1),
    ("E", 0, 1),
    ("SW", 1, -1),
    ("S", 1, 0),
    ("SE", 1, 1),
)


@dataclass(frozen=True, eq=False)
class NeighborField:
    weights: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 3 or weights.shape[2] != len(DIRECTIONS):
            raise ShapeMismatch(f"neighbor field must be H x W x 8, got {weights.shape}")
        if not np.isfinite(weights).all():
            raise NonFiniteInput("neighbor weights contain NaN or Inf")
        object.__setattr__(self, "weights", weights)

    @property
    def height(self) -> int:
        return int(self.weights.shape[0])

    @property
    def width(self) -> int:
        return int(self.weights.shape[1])


@dataclass(frozen=True, eq=False)
class SoftMask:
    probs: np.ndarray

    @property
    def height(self) -> int:
        return int(self.probs.shape[0])

    @property
    def width(self) -> int:
        return int(self.probs.shape[1])

    @property
    def k(self) -> int:
        return int(self.probs.shape[2])

    def is_stochastic(self, tol: float = 1e-9) -> bool:
        return bool(
            np.all(self.probs >= 0.0) and np.all(np.abs(self.probs.sum(axis=-1) - 1.0) <= tol)
        )


def _image_plane(plane: Tensor | np.ndarray) -> np.ndarray:
    data = plane.data if isinstance(plane, Tensor) else plane
    array = np.asarray(data, dtype=np.float64)
    if array.ndim == 2:
        array = array[None, :, :]
    if array.ndim != 3:
        raise ShapeMismatch(f"image plane must be C x H x W, got shape {array.shape}")
    if not np.isfinite(array).all():
        raise NonFiniteInput("image plane contains NaN or Inf")
    return array


def _neighbor_view(padded: np.ndarray, dy: int, dx: int, height: int, width: int) -> np.ndarray:
    return padded[..., 1 + dy : 1 + dy + height, 1 + dx : 1 + dx + width]


def elu(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0, z, np.expm1(np.minimum(z, 0.0)))


def local_std(plane: np.ndarray) -> np.ndarray:
    windows = sliding_window_view(np.pad(plane, 1, mode="edge"), (3, 3))
    return windows.std(axis=(-2, -1))


def normalize_depth(plane: Tensor | np.ndarray) -> np.ndarray:
    depth = _image_plane(plane)
    low = float(depth.min())
    high = float(depth.max())
    if high == low:
        return np.zeros_like(depth)
    return (depth - low) / (high - low)


def directional_terms(plane: Tensor | np.ndarray, lambda_elu: float) -> np.ndarray:
    phi = _image_plane(plane)
    _, height, width = phi.shape
    padded = np.pad(phi, ((0, 0), (1, 1), (1, 1)), mode="edge")
    terms = np.empty((height, width, len(DIRECTIONS)))
    for index, (_, dy, dx) in enumerate(DIRECTIONS):
        delta = (_neighbor_view(padded, dy, dx, height, width) - phi).sum(axis=0)
        terms[..., index] = delta + lambda_elu * elu(delta)
    return terms


def neighborhood_affinity(
    plane: Tensor | np.ndarray,
    lambda_elu: float,
    eta_std: float,
    epsilon: float,
) -> NeighborField:
    phi = _image_plane(plane)
    terms = directional_terms(phi, lambda_elu)
    sigma = local_std(phi.mean(axis=0))
    return NeighborField(-terms / (epsilon + eta_std * sigma)[..., None])


def fuse_affinities(
    rgb: NeighborField,
    depth: NeighborField | None,
    alpha_rgb: float,
    alpha_depth: float,
) -> NeighborField:
    if depth is None:
        if alpha_depth != 0:
            raise MissingDepthWithNonzeroWeight(
                f"alpha_depth={alpha_depth} requires a depth field"
            )
        raw = alpha_rgb * rgb.weights
    else:
        if depth.weights.shape != rgb.weights.shape:
            raise ShapeMismatch(
                f"depth field {depth.weights.shape[:2]} does not match rgb {rgb.weights.shape[:2]}"
            )
        raw = alpha_rgb * rgb.weights
        if alpha_depth != 0:
            raw = raw + alpha_depth * depth.weights
    return NeighborField(softmax(raw, axis=-1), normalized=True)


def one_hot(mask: LabelMask, k: int | None = None) -> SoftMask:
    k = int(mask.labels.max()) + 1 if k is None else k
    mask.check_labels(k)
    probs = (mask.labels[..., None] == np.arange(k)).astype(np.float64)
    return SoftMask(probs)


def diffuse_step(soft: SoftMask, fused: NeighborField) -> SoftMask:
    if (soft.height, soft.width) != (fused.height, fused.width):
        raise ShapeMismatch(
            f"soft mask {soft.height}x{soft.width} does not match field {fused.height}x{fused.width}"
        )
    padded = np.pad(soft.probs, ((1, 1), (1, 1), (0, 0)), mode="edge")
    moved = np.moveaxis(padded, -1, 0)
    result = np.zeros_like(soft.probs)
    for index, (_, dy, dx) in enumerate(DIRECTIONS):
        neighbor = np.moveaxis(_neighbor_view(moved, dy, dx, soft.height, soft.width), 0, -1)
        result += fused.weights[..., index, None] * neighbor
    return SoftMask(result)


def dream_refine(mask: LabelMask, fused: NeighborField, t_ref: int) -> LabelMask:
    if (mask.height, mask.width) != (fused.height, fused.width):
        raise ShapeMismatch(
            f"mask {mask.height}x{mask.width} does not match field {fused.height}x{fused.width}"
        )
    if t_ref == 0:
        return LabelMask(mask.labels.copy())
    soft = one_hot(mask)
    for _ in range(t_ref):
        soft = diffuse_step(soft, fused)
    return LabelMask(np.argmax(soft.probs, axis=-1))
