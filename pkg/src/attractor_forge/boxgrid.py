"""Cubical grids over compact rectangles and dense bit-vector box sets.

A BoxSet is the computational stand-in for a closed subset of the domain:
the union of its member boxes (closed products of grid cells). Membership is
stored densely as a boolean array over the whole grid, so set algebra is
plain bitwise work. All distances between sets are measured center-to-center
with half-diagonal padding where an outer bound is needed; the resulting
error is at most one box diagonal.

Boxes touching the edge of the grid rectangle are always classified as
boundary: the rectangle truncates the ambient space and orbits must never
cross that artificial edge silently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

MAX_CELLS = 2 ** 26


class BoxSetError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    lo: tuple
    hi: tuple
    res: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        res = tuple(int(v) for v in self.res)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "res", res)
        if not (len(lo) == len(hi) == len(res)):
            raise ValueError("lo, hi, res must have equal length")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError("need lo < hi componentwise")
        if any(r < 1 for r in res):
            raise ValueError("res entries must be positive")
        ncells = int(np.prod(res))
        if ncells > MAX_CELLS:
            raise ValueError(f"grid has {ncells} boxes, cap is {MAX_CELLS}")

    @property
    def dim(self) -> int:
        return len(self.res)

    @property
    def widths(self) -> np.ndarray:
        return (np.array(self.hi) - np.array(self.lo)) / np.array(self.res)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.widths))

    @property
    def ncells(self) -> int:
        return int(np.prod(self.res))

    def centers(self, indices: np.ndarray) -> np.ndarray:
        """Centers of the boxes with the given (n, dim) integer indices."""
        w = self.widths
        return np.array(self.lo) + (indices + 0.5) * w

    def point_boxes(self, P: np.ndarray):
        """Box indices containing each point, and an inside-domain mask.

        Points exactly on interior box edges land in the upper box; points on
        the upper domain face are clipped into the last box (boxes are
        closed).
        """
        P = np.asarray(P, dtype=np.float64)
        lo = np.array(self.lo)
        hi = np.array(self.hi)
        inside = np.all((P >= lo) & (P <= hi), axis=1)
        idx = np.floor((P - lo) / self.widths).astype(np.int64)
        idx = np.clip(idx, 0, np.array(self.res) - 1)
        return idx, inside

    def sample_offsets(self, samples_per_box: int) -> np.ndarray:
        """Fractional in-box sample coordinates: (samples_per_box^dim, dim).

        One sample means the center; two or more place a regular lattice that
        includes all 2^dim corners.
        """
        if samples_per_box < 1:
            raise ValueError("samples_per_box must be positive")
        if samples_per_box == 1:
            axis = np.array([0.5])
        else:
            axis = np.linspace(0.0, 1.0, samples_per_box)
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


class BoxSet:
    """Immutable membership indicator over the boxes of a grid."""

    def __init__(self, grid: Grid, members: np.ndarray):
        members = np.ascontiguousarray(members, dtype=bool)
        if members.shape != tuple(grid.res):
            raise ValueError("members array must have the grid's resolution shape")
        members.setflags(write=False)
        self.grid = grid
        self.members = members

    # -- basic queries ------------------------------------------------------

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.members))

    @property
    def is_empty(self) -> bool:
        return not self.members.any()

    def member_indices(self) -> np.ndarray:
        """(n, dim) integer indices in lexicographic order."""
        return np.argwhere(self.members)

    def member_centers(self) -> np.ndarray:
        return self.grid.centers(self.member_indices())

    def realized_bounds(self):
        """(lo, hi) corners of the bounding rectangle of the member boxes."""
        if self.is_empty:
            raise BoxSetError("empty box set has no bounds")
        idx = self.member_indices()
        w = self.grid.widths
        lo = np.array(self.grid.lo) + idx.min(axis=0) * w
        hi = np.array(self.grid.lo) + (idx.max(axis=0) + 1) * w
        return lo, hi

    def contains_points(self, P: np.ndarray) -> np.ndarray:
        idx, inside = self.grid.point_boxes(P)
        out = np.zeros(len(P), dtype=bool)
        if inside.any():
            sel = tuple(idx[inside].T)
            out[inside] = self.members[sel]
        return out

    def touches_domain_edge(self) -> bool:
        for axis in range(self.grid.dim):
            if np.take(self.members, 0, axis=axis).any():
                return True
            if np.take(self.members, -1, axis=axis).any():
                return True
        return False

    # -- set algebra --------------------------------------------------------

    def _check_same_grid(self, other: "BoxSet"):
        if self.grid != other.grid:
            raise BoxSetError("box sets live on different grids")

    def __or__(self, other):
        self._check_same_grid(other)
        return BoxSet(self.grid, self.members | other.members)

    def __and__(self, other):
        self._check_same_grid(other)
        return BoxSet(self.grid, self.members & other.members)

    def __sub__(self, other):
        self._check_same_grid(other)
        return BoxSet(self.grid, self.members & ~other.members)

    def complement(self):
        return BoxSet(self.grid, ~self.members)

    def __eq__(self, other):
        if not isinstance(other, BoxSet):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.members, other.members)

    def __le__(self, other):
        """Subset test."""
        self._check_same_grid(other)
        return bool(np.all(other.members[self.members]))

    def __hash__(self):
        return hash((self.grid, self.members.tobytes()))

    # -- geometry -----------------------------------------------------------

    def dilate(self, delta: float) -> "BoxSet":
        """Outer approximation of the open delta-neighborhood.

        Members are all boxes whose center lies within (delta + half box
        diagonal) of some member center, so dilate(S, 0) reproduces S on a
        uniform grid and no added box is farther than one diagonal.
        """
        if delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.is_empty:
            return self
        dist = ndimage.distance_transform_edt(
            ~self.members, sampling=self.grid.widths)
        return BoxSet(self.grid, dist <= delta + 0.5 * self.grid.diagonal)

    def erode_one(self) -> "BoxSet":
        """Remove one layer of boxes (face and corner neighbors)."""
        structure = np.ones((3,) * self.grid.dim, dtype=bool)
        eroded = ndimage.binary_erosion(self.members, structure=structure,
                                        border_value=1)
        return BoxSet(self.grid, eroded)

    def interior(self) -> "BoxSet":
        """Members whose whole neighbor stencil is inside the set and which do
        not touch the domain rectangle's edge."""
        structure = np.ones((3,) * self.grid.dim, dtype=bool)
        eroded = ndimage.binary_erosion(self.members, structure=structure,
                                        border_value=0)
        return BoxSet(self.grid, eroded)

    def boundary(self) -> "BoxSet":
        return self - self.interior()

    # -- serialization ------------------------------------------------------

    def to_csv(self, path):
        idx = self.member_indices()
        centers = self.grid.centers(idx) if len(idx) else np.zeros((0, self.grid.dim))
        d = self.grid.dim
        header = ",".join([f"i{k + 1}" for k in range(d)] + [f"x{k + 1}" for k in range(d)])
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row_i, row_c in zip(idx, centers):
                fh.write(",".join(str(int(v)) for v in row_i) + ","
                         + ",".join(repr(float(v)) for v in row_c) + "\n")

    @classmethod
    def from_csv(cls, grid: Grid, path) -> "BoxSet":
        members = np.zeros(grid.res, dtype=bool)
        with open(path) as fh:
            next(fh)  # header
            for line in fh:
                parts = line.strip().split(",")
                idx = tuple(int(v) for v in parts[:grid.dim])
                members[idx] = True
        return cls(grid, members)


def empty_set(grid: Grid) -> BoxSet:
    return BoxSet(grid, np.zeros(grid.res, dtype=bool))


def full_set(grid: Grid) -> BoxSet:
    return BoxSet(grid, np.ones(grid.res, dtype=bool))


def from_indices(grid: Grid, indices) -> BoxSet:
    members = np.zeros(grid.res, dtype=bool)
    idx = np.asarray(indices, dtype=np.int64).reshape(-1, grid.dim)
    members[tuple(idx.T)] = True
    return BoxSet(grid, members)


def cover(grid: Grid, predicate, samples_per_box: int = 2) -> BoxSet:
    """Boxes containing at least one sample point satisfying the predicate.

    predicate maps an (n, dim) array of points to an (n,) boolean array. The
    per-box sample lattice includes all corners for samples_per_box >= 2, so
    the cover is biased outward.
    """
    offsets = grid.sample_offsets(samples_per_box)
    origins = np.array(grid.lo) + np.indices(grid.res).reshape(grid.dim, -1).T * grid.widths
    members = np.zeros(grid.ncells, dtype=bool)
    for off in offsets:
        pts = origins + off * grid.widths
        members |= np.asarray(predicate(pts), dtype=bool)
    return BoxSet(grid, members.reshape(grid.res))


def rect_predicate(lo, hi):
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)

    def pred(P):
        return np.all((P >= lo) & (P <= hi), axis=1)

    return pred


def ball_predicate(center, radius):
    c = np.asarray(center, dtype=np.float64)

    def pred(P):
        return np.linalg.norm(P - c, axis=1) <= radius

    return pred


def annulus_predicate(center, r_inner, r_outer):
    c = np.asarray(center, dtype=np.float64)

    def pred(P):
        r = np.linalg.norm(P - c, axis=1)
        return (r >= r_inner) & (r <= r_outer)

    return pred


def semidist(S1: BoxSet, S2: BoxSet) -> float:
    """One-sided Hausdorff semidistance between member-box centers:
    max over S1 centers of the distance to the nearest S2 center."""
    if S1.is_empty or S2.is_empty:
        raise BoxSetError("semidist requires nonempty box sets")
    S1._check_same_grid(S2)
    dist = ndimage.distance_transform_edt(~S2.members, sampling=S1.grid.widths)
    return float(dist[S1.members].max())


def hausdorff(S1: BoxSet, S2: BoxSet) -> float:
    return max(semidist(S1, S2), semidist(S2, S1))


class BoxDistance:
    """Fast point-to-set distance for a fixed BoxSet.

    Each grid cell stores its nearest member box (by center distance); a
    query computes the exact Euclidean distance from the point to that box.
    For convex-ish sets this equals the true distance to the realized set;
    in general it is within one box diagonal of it.
    """

    def __init__(self, S: BoxSet):
        if S.is_empty:
            raise BoxSetError("distance field needs a nonempty set")
        self.grid = S.grid
        nearest = ndimage.distance_transform_edt(
            ~S.members, sampling=S.grid.widths, return_distances=False,
            return_indices=True)
        self._nearest = nearest.reshape(S.grid.dim, -1)
        self._res = np.array(S.grid.res)

    def __call__(self, P: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=np.float64)
        lo = np.array(self.grid.lo)
        w = self.grid.widths
        cell = np.clip(np.floor((P - lo) / w).astype(np.int64), 0, self._res - 1)
        flat = np.ravel_multi_index(tuple(cell.T), tuple(self._res))
        box_idx = self._nearest[:, flat].T
        box_lo = lo + box_idx * w
        box_hi = box_lo + w
        gap = np.maximum(np.maximum(box_lo - P, P - box_hi), 0.0)
        return np.linalg.norm(gap, axis=1)
