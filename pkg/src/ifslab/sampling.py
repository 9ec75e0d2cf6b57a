"""Deterministic randomness and quasi-random point rules.

All random draws in the package go through :func:`uniform_doubles`, which
maps the raw PCG64 bit stream to doubles by the 53-bit shift rule
``(word >> 11) * 2**-53``.  The bit stream of a seeded PCG64 instance is
fixed across platforms and numpy versions, so every consumer is bit-exact
reproducible from its integer seed.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

_PRIMES = (2, 3, 5)


def bit_stream(seed, count: int) -> np.ndarray:
    """Raw uint64 words from PCG64 seeded with `seed` (int or tuple)."""
    ss = np.random.SeedSequence(seed if isinstance(seed, int) else list(seed))
    return np.random.PCG64(ss).random_raw(count)


def uniform_doubles(seed, count: int) -> np.ndarray:
    """`count` doubles in [0, 1), bit-exact for a given seed."""
    return (bit_stream(seed, count) >> np.uint64(11)) * 2.0**-53


def _radical_inverse(base: int, k: int) -> float:
    inv = 0.0
    digit = 1.0 / base
    while k > 0:
        k, rem = divmod(k, base)
        inv += rem * digit
        digit /= base
    return inv


@lru_cache(maxsize=64)
def halton_points(count: int, dim: int) -> np.ndarray:
    """First `count` Halton points in [0,1)^dim, starting at index 1.

    The point set is deliberately not symmetric under coordinate flips:
    its mean sits off the cube center, which the sampling rules rely on
    to detect orientation-reversing branches.
    """
    if dim > len(_PRIMES):
        raise ValueError(f"halton_points supports dim <= {len(_PRIMES)}")
    pts = np.empty((count, dim))
    for a in range(dim):
        base = _PRIMES[a]
        pts[:, a] = [_radical_inverse(base, k) for k in range(1, count + 1)]
    pts.setflags(write=False)
    return pts


class LipschitzSymbol:
    """A scalar field on a box together with a Lipschitz bound.

    Evaluators are vectorized: they accept an (N, d) array of points and
    return an (N,) array of values.
    """

    def __init__(self, evaluator, lip_bound: float, support_box=None):
        self.evaluator = evaluator
        self.lip_bound = float(lip_bound)
        # Closed box (d, 2) outside of which the symbol is exactly zero,
        # or None when the symbol has full support.
        self.support_box = None if support_box is None else np.asarray(support_box, dtype=float)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.evaluator(np.atleast_2d(points))


def random_trig_symbol(seed, dim: int) -> LipschitzSymbol:
    """Seeded Lipschitz symbol: affine part plus two small cosine modes.

    The affine part dominates, so the gradient field is nearly constant
    and residual-versus-depth ratios measured from these symbols are
    stable across refinement levels.
    """
    u = uniform_doubles(seed, 4 * dim + 7)
    b0 = 2.0 * u[0] - 1.0
    slope = 0.6 + 0.6 * u[1 : 1 + dim]
    signs = np.where(u[1 + dim : 1 + 2 * dim] < 0.5, -1.0, 1.0)
    slope = slope * signs
    k1 = np.rint(1 + u[1 + 2 * dim : 1 + 3 * dim]).astype(float)
    k2 = np.rint(1 + 1.5 * u[1 + 3 * dim : 1 + 4 * dim]).astype(float)
    amp1 = 0.05 + 0.08 * u[4 * dim + 1]
    amp2 = 0.05 + 0.08 * u[4 * dim + 2]
    ph1 = 2 * np.pi * u[4 * dim + 3]
    ph2 = 2 * np.pi * u[4 * dim + 4]

    def evaluate(points):
        points = np.atleast_2d(points)
        val = b0 + points @ slope
        val = val + amp1 * np.cos(np.pi * (points @ k1) + ph1)
        val = val + amp2 * np.cos(np.pi * (points @ k2) + ph2)
        return val

    lip = float(np.linalg.norm(slope)) + amp1 * np.pi * float(np.linalg.norm(k1)) \
        + amp2 * np.pi * float(np.linalg.norm(k2))
    return LipschitzSymbol(evaluate, lip)


def window_symbol(support_box, amplitude: float = 1.0) -> LipschitzSymbol:
    """Smooth bump: product of sin^2 arches on `support_box`, zero outside.

    Continuously differentiable on the whole space (the arch has zero
    slope at the support edge) and exactly zero off the closed support.
    """
    box = np.asarray(support_box, dtype=float)
    lo, hi = box[:, 0], box[:, 1]
    widths = hi - lo
    if np.any(widths <= 0):
        raise ValueError("support box must have positive widths")

    def evaluate(points):
        points = np.atleast_2d(points)
        t = (points - lo) / widths
        inside = np.all((t >= 0.0) & (t <= 1.0), axis=1)
        arch = np.sin(np.pi * np.clip(t, 0.0, 1.0)) ** 2
        return amplitude * inside * np.prod(arch, axis=1)

    # |d/dx sin^2(pi t)| <= pi / width per axis; product of the others <= 1.
    lip = abs(amplitude) * np.pi * float(np.linalg.norm(1.0 / widths))
    return LipschitzSymbol(evaluate, lip, support_box=box)


def zero_symbol(dim: int) -> LipschitzSymbol:
    """The zero field; has no support box at all."""
    return LipschitzSymbol(lambda pts: np.zeros(len(np.atleast_2d(pts))), 0.0)
