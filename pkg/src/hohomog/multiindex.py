"""Multi-index combinatorics.

Every tensor slot in the package (coefficients, correctors, fluxes) is laid
out in the order returned by :func:`enumerate_multiindices`: lexicographic,
descending in the first component, e.g. ``(2,0), (1,1), (0,2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

INT64_MAX = 2**63 - 1


@dataclass(frozen=True, order=False)
class MultiIndex:
    components: tuple[int, ...]

    def __post_init__(self):
        comps = tuple(int(c) for c in self.components)
        if any(c < 0 for c in comps):
            raise ValueError(f"negative component in multi-index {comps}")
        object.__setattr__(self, "components", comps)

    @property
    def d(self) -> int:
        return len(self.components)

    @property
    def order(self) -> int:
        return sum(self.components)

    def __len__(self):
        return len(self.components)

    def __iter__(self) -> Iterator[int]:
        return iter(self.components)

    def __getitem__(self, k):
        return self.components[k]

    def __add__(self, other: "MultiIndex | Sequence[int]") -> "MultiIndex":
        other = tuple(other)
        if len(other) != self.d:
            raise ValueError("dimension mismatch in multi-index sum")
        return MultiIndex(tuple(a + b for a, b in zip(self.components, other)))

    def __repr__(self):
        return f"MultiIndex{self.components}"


def as_multiindex(alpha) -> MultiIndex:
    return alpha if isinstance(alpha, MultiIndex) else MultiIndex(tuple(alpha))


@lru_cache(maxsize=None)
def _enumerate(d: int, k: int) -> tuple[tuple[int, ...], ...]:
    if d == 1:
        return ((k,),)
    out = []
    for first in range(k, -1, -1):
        for rest in _enumerate(d - 1, k - first):
            out.append((first,) + rest)
    return tuple(out)


def enumerate_multiindices(d: int, k: int) -> list[MultiIndex]:
    """All multi-indices in ``d`` dimensions of order exactly ``k``, canonically ordered."""
    if d < 1 or k < 0:
        raise ValueError(f"need d >= 1 and k >= 0, got d={d}, k={k}")
    return [MultiIndex(c) for c in _enumerate(d, k)]


def enumerate_up_to(d: int, k: int) -> list[MultiIndex]:
    """Multi-indices of order 0..k, grouped by increasing order."""
    return [a for j in range(k + 1) for a in enumerate_multiindices(d, j)]


def index_of(alpha) -> int:
    """Position of ``alpha`` in the canonical list of its order."""
    alpha = as_multiindex(alpha)
    return _enumerate(alpha.d, alpha.order).index(alpha.components)


def count(d: int, k: int) -> int:
    return math.comb(k + d - 1, d - 1)


def factorial(alpha) -> int:
    """alpha! = prod_k alpha_k!; raises OverflowError beyond the int64 range."""
    val = math.prod(math.factorial(a) for a in as_multiindex(alpha))
    if val > INT64_MAX:
        raise OverflowError(f"{alpha}! exceeds the int64 range")
    return val


def fourier_symbol(alpha, xi) -> complex:
    """Symbol of D^alpha on the unit torus at integer frequency ``xi``: prod (2 pi i xi_k)^alpha_k."""
    alpha = as_multiindex(alpha)
    xi = tuple(xi)
    if len(xi) != alpha.d:
        raise ValueError("frequency and multi-index dimensions differ")
    out = complex(1.0)
    for a, x in zip(alpha, xi):
        out *= (2j * math.pi * x) ** a
    return out


def symbol_array(alpha, freqs: Sequence[np.ndarray]) -> np.ndarray:
    """Vectorised :func:`fourier_symbol` over broadcastable frequency grids."""
    alpha = as_multiindex(alpha)
    out = np.ones(np.broadcast_shapes(*(f.shape for f in freqs)), dtype=complex)
    for a, f in zip(alpha, freqs):
        if a:
            out = out * (2j * np.pi * f) ** a
    return out


def monomial(alpha, x: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate x^alpha for coordinate arrays ``x`` (one per axis)."""
    alpha = as_multiindex(alpha)
    out = np.ones_like(np.asarray(x[0], dtype=float))
    for a, xk in zip(alpha, x):
        if a:
            out = out * np.asarray(xk, dtype=float) ** a
    return out
