"""Smooth exploration noise from Halton points interpolated by splines.

Instead of drawing white Gaussian noise per timestep, each noise sequence is
built from a handful of knot values placed uniformly over the horizon and
interpolated (linear or natural cubic). Knot values come from a low-discrepancy
Halton point mapped through the inverse standard-normal CDF, so the marginal
distribution mimics N(0, scale^2) while successive samples cover the knot space
evenly. A random index offset drawn from the caller's stream decorrelates
successive controller iterations.

Interpolation through fixed knot/evaluation times is a linear map, so it is
precomputed once as a (horizon x num_knots) matrix; batched and one-at-a-time
sampling then produce bit-identical values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import ndtri

# Random index offsets are drawn from [0, MAX_HALTON_OFFSET); the largest
# Halton index ever used is therefore MAX_HALTON_OFFSET (offsets are 0-based,
# indices 1-based). Keeps the inverse-CDF tail bounded.
MAX_HALTON_OFFSET = 1 << 20


def first_primes(n: int) -> list[int]:
    """First n primes (simple sieve)."""
    if n <= 0:
        return []
    primes: list[int] = []
    candidate = 2
    while len(primes) < n:
        if all(candidate % p for p in primes if p * p <= candidate):
            primes.append(candidate)
        candidate += 1
    return primes


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % p for p in range(2, int(n**0.5) + 1))


def halton_point(index: int, base: int) -> float:
    """Radical inverse of `index` in `base`, a point in (0, 1).

    index must be >= 1; base must be a prime >= 2.
    """
    if base < 2:
        raise ValueError(f"halton base must be >= 2, got {base}")
    if index < 1:
        raise ValueError(f"halton index must be >= 1, got {index}")
    return float(halton_points(np.array([index]), np.array([base]))[0, 0])


def halton_points(indices: np.ndarray, bases: np.ndarray) -> np.ndarray:
    """Radical inverses for every (index, base) pair, shape (len(indices), len(bases)).

    Vectorized digit expansion; exact for indices below 2**53.
    """
    idx = np.asarray(indices, dtype=np.int64)
    b = np.asarray(bases, dtype=np.int64)
    remaining = np.broadcast_to(idx[:, None], (idx.size, b.size)).copy()
    inv_base = 1.0 / b.astype(np.float64)
    result = np.zeros((idx.size, b.size))
    weight = inv_base.copy()
    while remaining.any():
        digits = remaining % b
        result += digits * weight
        remaining //= b
        weight = weight * inv_base
    return result


@dataclass
class SplineNoiseConfig:
    """Parameters of the spline noise source.

    halton_bases holds one prime per (knot, control-dimension) coordinate in
    row-major (knot-major) order; a single Halton index yields one full knot
    set for one sequence.
    """

    horizon: int
    scale: np.ndarray
    num_knots: int = 4
    degree: int = 3
    halton_bases: np.ndarray | None = None
    control_dim: int = field(init=False)

    def __post_init__(self) -> None:
        self.scale = np.atleast_1d(np.asarray(self.scale, dtype=np.float64))
        self.control_dim = self.scale.size
        if self.num_knots < 2:
            raise ValueError("num_knots must be >= 2")
        if self.num_knots > self.horizon:
            raise ValueError("num_knots must not exceed the horizon")
        if self.degree not in (1, 3):
            raise ValueError("degree must be 1 (linear) or 3 (cubic)")
        if np.any(self.scale < 0):
            raise ValueError("scale entries must be nonnegative")
        if self.halton_bases is None:
            self.halton_bases = np.array(
                first_primes(self.num_knots * self.control_dim), dtype=np.int64
            )
        else:
            self.halton_bases = np.asarray(self.halton_bases, dtype=np.int64)
        if self.halton_bases.size != self.num_knots * self.control_dim:
            raise ValueError("need one halton base per (knot, dimension) coordinate")
        if len(set(self.halton_bases.tolist())) != self.halton_bases.size:
            raise ValueError("halton bases must be pairwise distinct")
        for p in self.halton_bases.tolist():
            if not _is_prime(int(p)):
                raise ValueError(f"halton base {p} is not prime")


@lru_cache(maxsize=32)
def _interp_matrix(num_knots: int, horizon: int, degree: int) -> np.ndarray:
    """Linear operator mapping knot values to per-step values, shape (T, num_knots)."""
    knot_times = np.linspace(0.0, horizon - 1.0, num_knots)
    eval_times = np.arange(horizon, dtype=np.float64)
    if degree == 3 and num_knots >= 3:
        spline = CubicSpline(knot_times, np.eye(num_knots), bc_type="natural", axis=0)
        return spline(eval_times)
    w = np.empty((horizon, num_knots))
    for j in range(num_knots):
        w[:, j] = np.interp(eval_times, knot_times, np.eye(num_knots)[:, j])
    return w


def interp_matrix(cfg: SplineNoiseConfig) -> np.ndarray:
    return _interp_matrix(cfg.num_knots, cfg.horizon, cfg.degree)


def _build(cfg: SplineNoiseConfig, offsets: np.ndarray) -> np.ndarray:
    indices = offsets.astype(np.int64) + 1
    pts = halton_points(indices, cfg.halton_bases)
    knots = ndtri(pts).reshape(-1, cfg.num_knots, cfg.control_dim) * cfg.scale
    return np.einsum("tj,bjd->btd", interp_matrix(cfg), knots)


def sample_noise(
    cfg: SplineNoiseConfig, rng: np.random.Generator, count: int = 1
) -> np.ndarray:
    """Draw `count` noise sequences, shape (count, horizon, control_dim).

    Each sequence consumes one random index offset from `rng`.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    offsets = rng.integers(0, MAX_HALTON_OFFSET, size=count)
    return _build(cfg, offsets)


def sample_noise_streams(
    cfg: SplineNoiseConfig, rngs: list[np.random.Generator]
) -> np.ndarray:
    """One noise sequence per stream, shape (len(rngs), horizon, control_dim).

    Offsets are drawn from the streams in list order, so results do not depend
    on how the downstream rollout work is scheduled.
    """
    offsets = np.array(
        [rng.integers(0, MAX_HALTON_OFFSET) for rng in rngs], dtype=np.int64
    )
    return _build(cfg, offsets)
