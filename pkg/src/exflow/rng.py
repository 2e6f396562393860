"""Seeded random streams and the random test objects shared by the samplers."""

import numpy as np


def make_rng(seed, stream=0):
    """Counter-based generator from a 64-bit seed; ``stream`` selects a disjoint key."""
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.random.Generator(np.random.Philox(key=[seed, int(stream)]))


def log_uniform(rng, lo, hi, size):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size))


def random_rotations(rng, n, count, sweeps=3):
    """Batch of rotations built from random Givens rotations, shape (count, n, n)."""
    R = np.broadcast_to(np.eye(n), (count, n, n)).copy()
    if n == 1:
        return R
    rows = np.arange(count)
    for _ in range(sweeps * n * n):
        i = rng.integers(0, n, count)
        j = (i + rng.integers(1, n, count)) % n
        theta = rng.uniform(0.0, 2.0 * np.pi, count)
        c, s = np.cos(theta)[:, None], np.sin(theta)[:, None]
        ri = R[rows, i, :].copy()
        rj = R[rows, j, :]
        R[rows, i, :] = c * ri - s * rj
        R[rows, j, :] = s * ri + c * rj
    return R


def random_spd(rng, n, count, lo=0.1, hi=10.0):
    """R diag(lam) R^T with lam log-uniform in [lo, hi]; returns (matrices, eigenvalues)."""
    lam = log_uniform(rng, lo, hi, (count, n))
    R = random_rotations(rng, n, count)
    A = (R * lam[:, None, :]) @ np.swapaxes(R, -1, -2)
    return 0.5 * (A + np.swapaxes(A, -1, -2)), lam


def random_symmetric(rng, n, count):
    G = rng.standard_normal((count, n, n))
    return 0.5 * (G + np.swapaxes(G, -1, -2))
