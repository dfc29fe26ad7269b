from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from errors import NoPopulatedPartition, ShapeMismatch
from graph import one_hot
from solver import SoftAssignment, hard_labels
from tensor_io import LabelMask, Tensor

DEFAULT_MASK_SIZE = 128


@dataclass(frozen=True, eq=False)
class PartitionCenters:
    centers: np.ndarray
    populated: np.ndarray
    counts: np.ndarray

    @property
    def k(self) -> int:
        return int(self.centers.shape[0])


def _feature_plane(features: Tensor | np.ndarray) -> np.ndarray:
    data = features.data if isinstance(features, Tensor) else features
    plane = np.asarray(data, dtype=np.float64)
    if plane.ndim != 3:
        raise ShapeMismatch(f"feature map must be C x H x W, got shape {plane.shape}")
    return plane


def argmax_mask(asg: SoftAssignment, grid_h: int, grid_w: int) -> LabelMask:
    if grid_h < 1 or grid_w < 1 or grid_h * grid_w != asg.n_nodes:
        raise ShapeMismatch(f"grid {grid_h}x{grid_w} does not cover {asg.n_nodes} nodes")
    return LabelMask(hard_labels(asg).reshape(grid_h, grid_w))


def upsample_nearest(mask: LabelMask, out_h: int, out_w: int) -> LabelMask:
    if out_h < mask.height or out_w < mask.width:
        raise ShapeMismatch(
            f"cannot upsample {mask.height}x{mask.width} to smaller {out_h}x{out_w}"
        )
    rows = (np.arange(out_h) * mask.height) // out_h
    cols = (np.arange(out_w) * mask.width) // out_w
    return LabelMask(mask.labels[np.ix_(rows, cols)])


def upsample_features(features: Tensor | np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    plane = _feature_plane(features)
    _, height, width = plane.shape
    if out_h < 1 or out_w < 1:
        raise ShapeMismatch(f"invalid output size {out_h}x{out_w}")
    if (height, width) == (out_h, out_w):
        return plane.copy()
    resized = ndimage.zoom(
        plane,
        (1.0, out_h / height, out_w / width),
        order=1,
        mode="nearest",
        grid_mode=True,
    )
    if resized.shape[1:] != (out_h, out_w):
        raise ShapeMismatch(f"resize produced {resized.shape[1:]}, expected {(out_h, out_w)}")
    return resized


def feature_centers(features: Tensor | np.ndarray, mask: LabelMask, k: int) -> PartitionCenters:
    plane = _feature_plane(features)
    channels, height, width = plane.shape
    if (height, width) != (mask.height, mask.width):
        raise ShapeMismatch(
            f"mask {mask.height}x{mask.width} does not match features {height}x{width}"
        )
    mask.check_labels(k)

    labels = mask.labels.ravel()
    counts = np.bincount(labels, minlength=k)
    sums = one_hot(labels, k).T @ plane.reshape(channels, -1).T
    centers = np.divide(
        sums,
        counts[:, None].astype(np.float64),
        out=np.zeros_like(sums),
        where=counts[:, None] > 0,
    )
    return PartitionCenters(centers=centers, populated=counts > 0, counts=counts)


def similarity_scores(features: Tensor | np.ndarray, centers: PartitionCenters) -> np.ndarray:
    plane = _feature_plane(features)
    channels, height, width = plane.shape
    if centers.centers.shape[1] != channels:
        raise ShapeMismatch(
            f"centers have {centers.centers.shape[1]} channels, features have {channels}"
        )
    scores = plane.reshape(channels, -1).T @ centers.centers.T
    return scores.reshape(height, width, centers.k)


def refine_by_similarity(features: Tensor | np.ndarray, centers: PartitionCenters) -> LabelMask:
    if not centers.populated.any():
        raise NoPopulatedPartition("no partition has any pixel")
    scores = similarity_scores(features, centers)
    scores[..., ~centers.populated] = -np.inf
    return LabelMask(np.argmax(scores, axis=-1))
