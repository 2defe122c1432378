"""Piecewise-linear fields on an interval with exact integral arithmetic.

Every field stores per-piece endpoint values, so both piecewise-constant
interpolants (left == right values) and continuous affine interpolants are
special cases, and discontinuities across breakpoints are allowed.  All
norms, integrals and distances are closed-form per piece; no sampling
quadrature enters anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputDomainError

__all__ = ["PiecewiseField", "merge_breaks"]


@dataclass(frozen=True)
class PiecewiseField:
    """Field on [breaks[0], breaks[-1]] that is affine on each piece.

    ``left[j]`` and ``right[j]`` are the values at the endpoints of piece j
    = (breaks[j], breaks[j+1]); the field may jump across breakpoints.
    """

    breaks: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        if b.ndim != 1 or b.size < 2 or np.any(np.diff(b) <= 0.0):
            raise InputDomainError("breaks must be strictly increasing, length >= 2")
        if self.left.shape != (b.size - 1,) or self.right.shape != (b.size - 1,):
            raise InputDomainError("left/right must hold one value per piece")

    # -- constructors -----------------------------------------------------

    @classmethod
    def constant(cls, breaks, values) -> "PiecewiseField":
        values = np.asarray(values, dtype=float)
        return cls(np.asarray(breaks, dtype=float), values.copy(), values.copy())

    @classmethod
    def from_nodes(cls, nodes_w, nodes_v) -> "PiecewiseField":
        """Continuous piecewise-affine interpolant of nodal values."""
        w = np.asarray(nodes_w, dtype=float)
        v = np.asarray(nodes_v, dtype=float)
        return cls(w, v[:-1].copy(), v[1:].copy())

    # -- basic geometry ---------------------------------------------------

    @property
    def npieces(self) -> int:
        return self.breaks.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breaks)

    def slopes(self) -> np.ndarray:
        return (self.right - self.left) / self.widths

    def jumps(self) -> np.ndarray:
        """Discontinuities across the interior breakpoints (length npieces-1)."""
        return self.left[1:] - self.right[:-1]

    def is_continuous(self, tol: float = 0.0) -> bool:
        return self.npieces == 1 or bool(np.all(np.abs(self.jumps()) <= tol))

    # -- evaluation --------------------------------------------------------

    def _piece_index(self, w: np.ndarray, side: str) -> np.ndarray:
        j = np.searchsorted(self.breaks, w, side="left" if side == "left" else "right") - 1
        return np.clip(j, 0, self.npieces - 1)

    def __call__(self, w, side: str = "left") -> np.ndarray:
        """Evaluate; at a breakpoint return the left (default) or right limit."""
        w = np.asarray(w, dtype=float)
        j = self._piece_index(np.atleast_1d(w), side)
        h = self.breaks[j + 1] - self.breaks[j]
        lam = (np.atleast_1d(w) - self.breaks[j]) / h
        val = self.left[j] * (1.0 - lam) + self.right[j] * lam
        return val if w.ndim else float(val[0])

    # -- exact integrals ---------------------------------------------------

    def integral(self) -> float:
        return float(np.sum(self.widths * (self.left + self.right) / 2.0))

    def l1_norm(self) -> float:
        a, b, h = self.left, self.right, self.widths
        cross = a * b < 0.0
        denom = np.where(cross, 2.0 * (np.abs(a) + np.abs(b)), 1.0)
        per = np.where(cross, (a * a + b * b) / denom, (np.abs(a) + np.abs(b)) / 2.0)
        return float(np.sum(h * per))

    def l2_norm(self) -> float:
        a, b, h = self.left, self.right, self.widths
        return float(np.sqrt(np.sum(h * (a * a + a * b + b * b) / 3.0)))

    def linf_norm(self) -> float:
        return float(max(np.abs(self.left).max(), np.abs(self.right).max()))

    def bv(self) -> float:
        """Total variation: in-piece variation plus breakpoint jumps."""
        tv = float(np.sum(np.abs(self.right - self.left)))
        if self.npieces > 1:
            tv += float(np.sum(np.abs(self.jumps())))
        return tv

    def norm(self, which: str) -> float:
        if which == "L1":
            return self.l1_norm()
        if which == "L2":
            return self.l2_norm()
        if which == "Linf":
            return self.linf_norm()
        if which == "BV":
            return self.bv()
        raise InputDomainError(f"unknown norm {which!r}")

    # -- algebra on a common grid ------------------------------------------

    def resampled(self, new_breaks: np.ndarray) -> "PiecewiseField":
        """Same field on a refined grid; new breaks must contain the old ones."""
        nb = np.asarray(new_breaks, dtype=float)
        mid = (nb[:-1] + nb[1:]) / 2.0
        j = np.clip(np.searchsorted(self.breaks, mid, side="right") - 1, 0, self.npieces - 1)
        h = self.breaks[j + 1] - self.breaks[j]
        lam_l = (nb[:-1] - self.breaks[j]) / h
        lam_r = (nb[1:] - self.breaks[j]) / h
        return PiecewiseField(
            nb,
            self.left[j] * (1.0 - lam_l) + self.right[j] * lam_l,
            self.left[j] * (1.0 - lam_r) + self.right[j] * lam_r,
        )

    def __sub__(self, other: "PiecewiseField") -> "PiecewiseField":
        grid = merge_breaks(self.breaks, other.breaks)
        f = self.resampled(grid)
        g = other.resampled(grid)
        return PiecewiseField(grid, f.left - g.left, f.right - g.right)

    def distance(self, other: "PiecewiseField", which: str) -> float:
        return (self - other).norm(which)


def merge_breaks(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sorted union of two breakpoint sets sharing the same endpoints."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a[0] != b[0] or a[-1] != b[-1]:
        raise InputDomainError("fields live on different intervals")
    grid = np.union1d(a, b)
    return grid
