from __future__ import annotations

import math

import numpy as np
import pytest

from dream import (
    DIRECTIONS,
    NeighborField,
    SoftMask,
    diffuse_step,
    directional_terms,
    dream_refine,
    elu,
    fuse_affinities,
    local_std,
    neighborhood_affinity,
    normalize_depth,
    one_hot,
)
from errors import MissingDepthWithNonzeroWeight, ShapeMismatch
from tensor_io import LabelMask

DIRECTION_INDEX = {name: index for index, (name, _, _) in enumerate(DIRECTIONS)}


def _uniform_field(height: int, width: int) -> NeighborField:
    return NeighborField(np.full((height, width, 8), 1.0 / 8.0), normalized=True)


def _random_fused(rng: np.random.Generator, height: int, width: int) -> NeighborField:
    rgb = neighborhood_affinity(rng.uniform(0, 1, size=(3, height, width)), 1.0, 0.1, 1e-8)
    return fuse_affinities(rgb, None, 0.7, 0.0)


def _scalar_diffuse(labels: list[list[int]], k: int) -> list[list[list[float]]]:
    height, width = len(labels), len(labels[0])
    out = []
    for i in range(height):
        row = []
        for j in range(width):
            probs = [0.0] * k
            for _, dy, dx in DIRECTIONS:
                ni = min(max(i + dy, 0), height - 1)
                nj = min(max(j + dx, 0), width - 1)
                probs[labels[ni][nj]] += 1.0 / 8.0
            row.append(probs)
        out.append(row)
    return out


def test_elu() -> None:
    assert elu(np.array([1.0, 0.0])).tolist() == [1.0, 0.0]
    assert elu(np.array([-1.0]))[0] == pytest.approx(math.exp(-1.0) - 1.0, abs=1e-15)


def test_constant_plane_gives_zero_affinities() -> None:
    field = neighborhood_affinity(np.full((3, 4, 5), 0.3), lambda_elu=1.0, eta_std=0.1, epsilon=1e-8)

    assert np.all(field.weights == 0.0)
    assert np.all(local_std(np.full((4, 5), 0.3)) == 0.0)


def test_single_brighter_neighbor_term() -> None:
    plane = np.zeros((3, 3))
    plane[1, 2] = 1.0

    terms = directional_terms(plane, lambda_elu=1.0)

    assert terms[1, 1, DIRECTION_INDEX["E"]] == 2.0
    assert terms[1, 1, DIRECTION_INDEX["W"]] == 0.0


def test_local_std_of_ramp() -> None:
    sigma = local_std(np.arange(9, dtype=np.float64).reshape(3, 3))

    assert sigma[1, 1] == pytest.approx(math.sqrt(60.0 / 9.0), abs=1e-12)


def test_border_replication_is_neutral(rng: np.random.Generator) -> None:
    plane = rng.uniform(0, 1, size=(2, 5, 6))

    terms = directional_terms(plane, lambda_elu=1.0)

    assert np.all(terms[0, :, DIRECTION_INDEX["N"]] == 0.0)
    assert np.all(terms[-1, :, DIRECTION_INDEX["S"]] == 0.0)
    assert np.all(terms[:, 0, DIRECTION_INDEX["W"]] == 0.0)
    assert np.all(terms[:, -1, DIRECTION_INDEX["E"]] == 0.0)


def test_normalize_depth() -> None:
    depth = normalize_depth(np.array([[2.0, 4.0], [6.0, 10.0]]))

    assert depth.tolist() == [[[0.0, 0.25], [0.5, 1.0]]]
    assert np.all(normalize_depth(np.full((2, 2), 7.0)) == 0.0)


def test_fusion_weights(rng: np.random.Generator) -> None:
    rgb = NeighborField(rng.standard_normal((3, 4, 8)))
    zeros = NeighborField(np.zeros((3, 4, 8)))

    rgb_only = fuse_affinities(rgb, None, 0.7, 0.0)
    depth_off = fuse_affinities(rgb, NeighborField(rng.standard_normal((3, 4, 8))), 0.7, 0.0)
    halves = fuse_affinities(rgb, rgb, 0.5, 0.5)
    uniform = fuse_affinities(zeros, zeros, 0.7, 0.3)

    assert depth_off.weights.tobytes() == rgb_only.weights.tobytes()
    assert np.allclose(halves.weights, fuse_affinities(rgb, None, 1.0, 0.0).weights, rtol=0, atol=1e-15)
    assert np.all(uniform.weights == 1.0 / 8.0)
    assert np.allclose(rgb_only.weights.sum(axis=-1), 1.0, rtol=0, atol=1e-9)
    assert rgb_only.normalized


def test_fusion_errors() -> None:
    rgb = NeighborField(np.zeros((2, 2, 8)))

    with pytest.raises(MissingDepthWithNonzeroWeight):
        fuse_affinities(rgb, None, 0.7, 0.3)
    with pytest.raises(ShapeMismatch):
        fuse_affinities(rgb, NeighborField(np.zeros((3, 2, 8))), 0.7, 0.3)


def test_zero_steps_return_mask_unchanged(rng: np.random.Generator) -> None:
    mask = LabelMask(rng.integers(0, 3, size=(5, 5)))

    refined = dream_refine(mask, _random_fused(rng, 5, 5), t_ref=0)

    assert np.array_equal(refined.labels, mask.labels)


def test_uniform_mask_is_a_fixed_point(rng: np.random.Generator) -> None:
    for _ in range(100):
        height, width = (int(v) for v in rng.integers(1, 10, size=2))
        label = int(rng.integers(0, 6))
        mask = LabelMask(np.full((height, width), label))

        refined = dream_refine(mask, _random_fused(rng, height, width), t_ref=int(rng.integers(0, 12)))

        assert np.all(refined.labels == label)


def test_diffusion_matches_scalar_recomputation() -> None:
    labels = [[0, 0, 1, 1]] * 4
    mask = LabelMask(np.array(labels))

    soft = diffuse_step(one_hot(mask, 2), _uniform_field(4, 4))
    expected = _scalar_diffuse(labels, 2)

    assert np.allclose(soft.probs, expected, rtol=0, atol=1e-12)
    assert dream_refine(mask, _uniform_field(4, 4), t_ref=1).labels.tolist() == [
        [int(np.argmax(p)) for p in row] for row in expected
    ]


def test_diffusion_conserves_probability(rng: np.random.Generator) -> None:
    for _ in range(100):
        height, width = (int(v) for v in rng.integers(1, 9, size=2))
        k = int(rng.integers(1, 5))
        soft = one_hot(LabelMask(rng.integers(0, k, size=(height, width))), k)
        fused = _random_fused(rng, height, width)

        for _ in range(int(rng.integers(1, 6))):
            soft = diffuse_step(soft, fused)
            assert soft.is_stochastic()


def test_depth_off_refinement_is_bit_identical(rng: np.random.Generator) -> None:
    rgb = neighborhood_affinity(rng.uniform(0, 1, size=(3, 7, 7)), 1.0, 0.1, 1e-8)
    depth = neighborhood_affinity(normalize_depth(rng.uniform(0, 5, size=(7, 7))), 1.0, 0.1, 1e-8)
    mask = LabelMask(rng.integers(0, 3, size=(7, 7)))

    with_depth = dream_refine(mask, fuse_affinities(rgb, depth, 0.7, 0.0), t_ref=10)
    without = dream_refine(mask, fuse_affinities(rgb, None, 0.7, 0.0), t_ref=10)

    assert with_depth.labels.tobytes() == without.labels.tobytes()


def test_refinement_is_deterministic(rng: np.random.Generator) -> None:
    fused = _random_fused(rng, 6, 6)
    mask = LabelMask(rng.integers(0, 4, size=(6, 6)))

    assert dream_refine(mask, fused, 10).labels.tobytes() == dream_refine(mask, fused, 10).labels.tobytes()


def test_shape_checks() -> None:
    with pytest.raises(ShapeMismatch):
        NeighborField(np.zeros((2, 2, 4)))
    with pytest.raises(ShapeMismatch):
        dream_refine(LabelMask(np.zeros((2, 3), dtype=int)), _uniform_field(3, 3), 1)
    assert SoftMask(np.full((1, 1, 2), 0.5)).is_stochastic()
