"""Deterministic derivation of per-replication RNG seeds.

Child streams are derived as ``seed XOR splitmix64(index)`` so that serial
and parallel executions of a replication loop consume identical randomness:
each replication owns a stream that depends only on (seed, index).
"""
from __future__ import annotations

__all__ = ["splitmix64", "child_seed"]

_MASK64 = (1 << 64) - 1


def splitmix64(z: int) -> int:
    """One splitmix64 output step for the given 64-bit state."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def child_seed(seed: int, index: int) -> int:
    """Seed for the ``index``-th child stream of ``seed``."""
    return (int(seed) & _MASK64) ^ splitmix64(int(index))
