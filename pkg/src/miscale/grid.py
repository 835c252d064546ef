"""Pixel-lattice geometry and the inner-square / outer-patch bipartition."""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, InvalidPartitionError


@dataclass(frozen=True)
class GridShape:
    """Rows x columns of a 2-D lattice, flattened row-major."""

    height: int
    width: int

    def __post_init__(self):
        if int(self.height) != self.height or int(self.width) != self.width:
            raise ValueError("grid dimensions must be integers")
        if self.height < 1 or self.width < 1:
            raise ValueError(f"grid dimensions must be positive, got {self.height}x{self.width}")
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "width", int(self.width))

    @property
    def total(self):
        return self.height * self.width

    @property
    def max_inner_length(self):
        return min(self.height, self.width) - 1

    @classmethod
    def parse(cls, value):
        """Accept ``GridShape``, ``(h, w)``, ``[h, w]`` or ``"HxW"``."""
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            parts = value.lower().replace("×", "x").split("x")
            if len(parts) != 2:
                raise ValueError(f"cannot parse grid shape {value!r}")
            return cls(int(parts[0]), int(parts[1]))
        h, w = value
        return cls(int(h), int(w))

    def __str__(self):
        return f"{self.height}x{self.width}"


@dataclass(frozen=True)
class Bipartition:
    """Disjoint inner/outer split of a grid's flat indices.

    Both index arrays are sorted ascending and together cover
    ``0 .. shape.total - 1``.
    """

    inner: tuple
    outer: tuple
    shape: GridShape

    def __post_init__(self):
        inner = np.asarray(self.inner, dtype=np.intp)
        outer = np.asarray(self.outer, dtype=np.intp)
        if inner.size == 0 or outer.size == 0:
            raise InvalidPartitionError("both sides of a bipartition must be nonempty")
        if np.any(np.diff(inner) <= 0) or np.any(np.diff(outer) <= 0):
            raise InvalidPartitionError("partition indices must be strictly increasing")
        both = np.concatenate([inner, outer])
        if both.size != self.shape.total or not np.array_equal(np.sort(both), np.arange(self.shape.total)):
            raise InvalidPartitionError("inner and outer must partition the grid exactly")
        object.__setattr__(self, "inner", tuple(int(i) for i in inner))
        object.__setattr__(self, "outer", tuple(int(i) for i in outer))

    @property
    def inner_index(self):
        return np.asarray(self.inner, dtype=np.intp)

    @property
    def outer_index(self):
        return np.asarray(self.outer, dtype=np.intp)

    @property
    def order(self):
        """Column permutation putting inner features first."""
        return np.concatenate([self.inner_index, self.outer_index])

    def swapped(self):
        return Bipartition(self.outer, self.inner, self.shape)


def inner_square_partition(shape, L):
    """Centred ``L x L`` inner block and its complement.

    The block's top-left corner sits at ``((h - L) // 2, (w - L) // 2)``.

    Examples
    --------
    >>> inner_square_partition(GridShape(4, 4), 2).inner
    (5, 6, 9, 10)
    """
    shape = GridShape.parse(shape)
    if int(L) != L or not 1 <= L <= shape.max_inner_length:
        raise InvalidPartitionError(
            f"L={L} invalid for a {shape} grid; need 1 <= L <= {shape.max_inner_length}"
        )
    L = int(L)
    r0 = (shape.height - L) // 2
    c0 = (shape.width - L) // 2
    rows = np.arange(r0, r0 + L)
    cols = np.arange(c0, c0 + L)
    inner = (rows[:, None] * shape.width + cols[None, :]).ravel()
    mask = np.ones(shape.total, dtype=bool)
    mask[inner] = False
    return Bipartition(tuple(inner), tuple(np.flatnonzero(mask)), shape)


def split_sample(sample, p):
    """Gather a sample's (or each row's) inner and outer values.

    Works on a single vector or on a 2-D array of row samples.
    """
    x = np.asarray(sample)
    if x.shape[-1] != p.shape.total:
        raise DimensionError(f"sample has {x.shape[-1]} features, partition expects {p.shape.total}")
    return x[..., p.inner_index], x[..., p.outer_index]


def merge_sample(a, b, p):
    """Inverse of :func:`split_sample`."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-1] != len(p.inner) or b.shape[-1] != len(p.outer):
        raise DimensionError("split parts do not match the partition sizes")
    out = np.empty(a.shape[:-1] + (p.shape.total,), dtype=np.result_type(a, b))
    out[..., p.inner_index] = a
    out[..., p.outer_index] = b
    return out
