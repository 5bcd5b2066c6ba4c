"""
Karhunen-Loeve random fields and counter-based sampling

Samples come from NumPy's Philox4x64-10 bit generator. The key is
(seed, substream) and the counter is (0, index, lane, 0), so a sample is a pure
function of those integers: batches can be drawn in any order or in parallel
without changing a single bit.
"""

from typing import List, Tuple
import logging
import math

import numpy as np

from app.schemas.mesh import CoefficientSample, TriMesh
from app.schemas.random_field import XI_BOUND, KLFieldSpec, SampleVector

logger = logging.getLogger(__name__)

# Counter lanes keep independent consumers on disjoint streams
LANE_PATH = 0
LANE_ESTIMATOR = 1
LANE_BATCH = 2
LANE_GRADIENT_CHECK = 3
LANE_FIELD_DUMP = 4
LANE_PROX_CHECK = 5

# Per-iteration batches index samples as n * BATCH_STRIDE + j
BATCH_STRIDE = 1 << 32


def build_spec(mean: float, l: float, m: int) -> KLFieldSpec:
    """Leading m terms of 2 cos(j pi x2) cos(k pi x1) with lambda = exp(-pi (j^2+k^2) l^2) / 4"""
    if l <= 0:
        raise ValueError(f"Correlation length must be positive, got {l}")
    if m < 1:
        raise ValueError(f"Number of terms must be at least 1, got {m}")

    # The m largest eigenvalues all have j, k <= m
    pairs: List[Tuple[int, int]] = [(j, k) for j in range(1, m + 1) for k in range(1, m + 1)]
    # Integer sort key avoids float ties; equal j^2+k^2 falls back to (j, k)
    pairs.sort(key=lambda jk: (jk[0] ** 2 + jk[1] ** 2, jk[0], jk[1]))
    pairs = pairs[:m]
    eigenvalues = tuple(0.25 * math.exp(-math.pi * (j * j + k * k) * l * l) for j, k in pairs)

    return KLFieldSpec(
        mean=mean,
        correlation_length=l,
        n_terms=m,
        eigenvalues=eigenvalues,
        index_pairs=tuple(pairs),
    )


def draw_sample(seed: int, index: int, m: int, lane: int = LANE_PATH, substream: int = 0) -> SampleVector:
    """2m uniforms on [-sqrt(0.5), sqrt(0.5)], a deterministic function of (seed, substream, lane, index)"""
    bit_generator = np.random.Philox(
        key=np.array([seed, substream], dtype=np.uint64),
        counter=np.array([0, index, lane, 0], dtype=np.uint64),
    )
    values = np.random.Generator(bit_generator).uniform(-XI_BOUND, XI_BOUND, size=2 * m)
    return SampleVector(values[:m], values[m:])


def lane_generator(seed: int, lane: int, substream: int = 0) -> np.random.Generator:
    """Free-running stream for auxiliary draws on a lane, disjoint from every draw_sample stream"""
    bit_generator = np.random.Philox(
        key=np.array([seed, substream], dtype=np.uint64),
        counter=np.array([0, 0, lane, 1], dtype=np.uint64),
    )
    return np.random.Generator(bit_generator)


def eigenfunctions(spec: KLFieldSpec, points: np.ndarray) -> np.ndarray:
    """phi_i at points (..., 2), returned as (..., m)"""
    points = np.asarray(points, dtype=float)
    j = np.array([pair[0] for pair in spec.index_pairs], dtype=float)
    k = np.array([pair[1] for pair in spec.index_pairs], dtype=float)
    x1 = points[..., 0, None]
    x2 = points[..., 1, None]
    return 2.0 * np.cos(j * np.pi * x2) * np.cos(k * np.pi * x1)


def evaluate_field(spec: KLFieldSpec, sample_coords: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Unclamped field values mean + sum sqrt(lambda_i) phi_i(x) xi_i"""
    sample_coords = np.asarray(sample_coords, dtype=float)
    if sample_coords.shape != (spec.n_terms,):
        raise ValueError(f"Expected {spec.n_terms} coordinates, got shape {sample_coords.shape}")
    scaled = np.sqrt(np.array(spec.eigenvalues)) * sample_coords
    return spec.mean + eigenfunctions(spec, points) @ scaled


def sample_coefficients(
    mesh: TriMesh,
    a_spec: KLFieldSpec,
    r_spec: KLFieldSpec,
    xi: SampleVector,
    a_floor: float = 1e-3,
) -> CoefficientSample:
    """Evaluate a at edge midpoints and r at degree-4 points, clamping a >= a_floor and r >= 0"""
    a_values = evaluate_field(a_spec, xi.xi_a, mesh.midpoint_points)
    r_values = evaluate_field(r_spec, xi.xi_r, mesh.degree4_points)

    a_clamped = int(np.count_nonzero(a_values < a_floor))
    r_clamped = int(np.count_nonzero(r_values < 0.0))
    if a_clamped or r_clamped:
        logger.debug(f"Clamped coefficients at {a_clamped} diffusion and {r_clamped} reaction points")

    return CoefficientSample(
        np.maximum(a_values, a_floor),
        np.maximum(r_values, 0.0),
        clamp_count=a_clamped + r_clamped,
    )
