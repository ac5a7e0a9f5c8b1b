"""Seeded random-stream management.

Every stochastic consumer in the toolkit owns a private stream identified by
(seed, stream_id). Streams with the same identity produce the same draws on
every platform, and distinct stream_ids are statistically independent, so the
parallel schedule of rollouts can never change results.
"""

from __future__ import annotations

from typing import Any

import numpy as np

# Stream-id domains. Rollout noise streams occupy [NOISE_STREAM_BASE,
# NOISE_STREAM_BASE + num_plans * samples_per_plan); trial-level draws use
# TRIAL_STREAM_BASE + trial index.
NOISE_STREAM_BASE = 0
TRIAL_STREAM_BASE = 1 << 32


def seeded_rng(seed: int, stream_id: int) -> np.random.Generator:
    """Return a deterministic generator for the given (seed, stream_id) pair."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


def rng_state(gen: np.random.Generator) -> dict[str, Any]:
    """Snapshot a generator's state (JSON-serializable)."""
    return gen.bit_generator.state


def rng_restore(state: dict[str, Any]) -> np.random.Generator:
    """Rebuild a generator mid-stream from a state snapshot."""
    gen = np.random.Generator(np.random.PCG64())
    gen.bit_generator.state = state
    return gen
