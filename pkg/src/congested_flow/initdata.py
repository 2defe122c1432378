"""Macroscopic initial data: rearrangement, quantile sampling, validation.

An Eulerian datum is a density below the packing threshold (piecewise
constant, compact support, unit mass) plus a velocity.  The monotone
rearrangement is the generalized inverse of the cumulative distribution,
computed in closed form and evaluated with the left-limit convention at
breakpoints, consistent with the inf-based pseudo-inverse.  Quantile
sampling at mass fractions i/n yields particle data that are feasible for
the canonical spacing constraint by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cone import SpacingCone
from .dynamics import CheckReport
from .errors import AdmissibilityError, InputDomainError
from .piecewise import PiecewiseField, merge_breaks

__all__ = [
    "DensityPiece",
    "MacroscopicDatum",
    "rearrangement_from_density",
    "cdf_from_density",
    "datum_from_eulerian",
    "quantile_sample",
    "validate_initial",
    "discretization_convergence",
]

MASS_TOL = 1e-12


@dataclass(frozen=True)
class DensityPiece:
    """Constant density ``value`` on the interval [a, b)."""

    a: float
    b: float
    value: float


def _check_density(pieces) -> list[DensityPiece]:
    if not pieces:
        raise InputDomainError("density needs at least one piece")
    out = []
    prev_b = -np.inf
    for k, p in enumerate(pieces):
        p = p if isinstance(p, DensityPiece) else DensityPiece(*p)
        if not (p.b > p.a):
            raise InputDomainError(f"density piece {k}: empty interval [{p.a}, {p.b})")
        if p.a < prev_b:
            raise InputDomainError(f"density piece {k}: overlaps the previous piece")
        if p.value < 0.0:
            raise InputDomainError(f"density piece {k}: negative value {p.value}")
        if p.value > 1.0:
            raise InputDomainError(
                f"density piece {k}: value {p.value} exceeds the packing threshold 1"
            )
        prev_b = p.b
        if p.value > 0.0:
            out.append(p)
    mass = sum(p.value * (p.b - p.a) for p in out)
    if abs(mass - 1.0) > MASS_TOL:
        raise InputDomainError(f"density mass is {mass!r}, expected 1")
    return out


def cdf_from_density(pieces) -> PiecewiseField:
    """Cumulative distribution as a continuous piecewise-affine field in x."""
    ps = _check_density(pieces)
    xs = [ps[0].a]
    vals = [0.0]
    acc = 0.0
    for p in ps:
        if p.a > xs[-1]:
            xs.append(p.a)
            vals.append(acc)
        acc += p.value * (p.b - p.a)
        xs.append(p.b)
        vals.append(acc)
    vals[-1] = 1.0
    return PiecewiseField.from_nodes(np.array(xs), np.array(vals))


def rearrangement_from_density(pieces) -> PiecewiseField:
    """Monotone rearrangement: generalized inverse of the CDF on (0, 1).

    Piecewise affine with slope 1/value >= 1 on each mass piece; vacuum gaps
    between density pieces become jumps.  Left-continuous by the inf-based
    pseudo-inverse convention.
    """
    ps = _check_density(pieces)
    w = [0.0]
    left = []
    right = []
    acc = 0.0
    for p in ps:
        acc += p.value * (p.b - p.a)
        w.append(acc)
        left.append(p.a)
        right.append(p.b)
    w[-1] = 1.0
    return PiecewiseField(np.array(w), np.array(left), np.array(right))


@dataclass(frozen=True)
class MacroscopicDatum:
    """Monotone rearrangement and Lagrangian velocity on the mass interval (0,1).

    Invariants checked at construction: the rearrangement is nondecreasing
    with slope >= 1, and the velocity is constant on every saturated piece
    (slope exactly 1), which is what makes quantile samples admissible.
    """

    x0_map: PiecewiseField
    u0_map: PiecewiseField

    def __post_init__(self):
        xm = self.x0_map
        if xm.breaks[0] != 0.0 or xm.breaks[-1] != 1.0:
            raise InputDomainError("x0_map must live on the mass interval (0, 1)")
        if np.any(xm.slopes() < 1.0 - 1e-10):
            raise InputDomainError("rearrangement slope below 1: density above threshold")
        if np.any(xm.right < xm.left) or (xm.npieces > 1 and np.any(xm.jumps() < -1e-12)):
            raise InputDomainError("rearrangement must be nondecreasing")
        um = self.u0_map
        if um.breaks[0] != 0.0 or um.breaks[-1] != 1.0:
            raise InputDomainError("u0_map must live on the mass interval (0, 1)")
        self._check_saturated_shear()

    def _check_saturated_shear(self, tol: float = 1e-12):
        grid = merge_breaks(self.x0_map.breaks, self.u0_map.breaks)
        x = self.x0_map.resampled(grid)
        u = self.u0_map.resampled(grid)
        saturated = np.abs(x.slopes() - 1.0) <= 1e-10
        for j in range(grid.size - 1):
            if not saturated[j]:
                continue
            if abs(u.right[j] - u.left[j]) > tol:
                raise AdmissibilityError(
                    f"velocity varies on the saturated piece ({grid[j]}, {grid[j+1]})"
                )
            if j > 0 and saturated[j - 1]:
                if abs(x.left[j] - x.right[j - 1]) <= 1e-12 \
                        and abs(u.left[j] - u.right[j - 1]) > tol:
                    raise AdmissibilityError(
                        f"velocity jumps inside the saturated region at w={grid[j]}"
                    )

    @property
    def support(self) -> tuple[float, float]:
        return float(self.x0_map.left[0]), float(self.x0_map.right[-1])


def datum_from_eulerian(density_pieces, velocity_x: PiecewiseField) -> MacroscopicDatum:
    """Datum from an Eulerian density and an Eulerian velocity profile u0(x).

    The Lagrangian velocity is the exact composition u0(X0(w)): breakpoints
    of u0 are pulled back through the CDF, so the result is again piecewise
    affine with no sampling error.
    """
    x0_map = rearrangement_from_density(density_pieces)
    cdf = cdf_from_density(density_pieces)
    pulled = np.array([cdf(b) for b in velocity_x.breaks])
    wb = np.unique(np.concatenate((x0_map.breaks, np.clip(pulled, 0.0, 1.0))))
    wb = wb[(wb >= 0.0) & (wb <= 1.0)]
    x_res = x0_map.resampled(wb)
    u_left = velocity_x(x_res.left, side="right")
    u_right = velocity_x(x_res.right, side="left")
    u0_map = PiecewiseField(wb, np.atleast_1d(u_left), np.atleast_1d(u_right))
    return MacroscopicDatum(x0_map, u0_map)


def quantile_sample(datum: MacroscopicDatum, n: int):
    """Sample n particles at the mass fractions i/n, i = 1..n.

    Returns (x0, u0, cone) with the canonical cone two_r = 1/n.  Gaps are
    at least 1/n because the rearrangement has slope >= 1; pairs in exact
    contact inherit equal velocities from the datum invariant (verified
    post hoc, a mismatch raises AdmissibilityError).
    """
    if n < 2:
        raise InputDomainError(f"need n >= 2 particles, got {n}")
    w = np.arange(1, n + 1) / n
    x0 = datum.x0_map(w, side="left")
    u0 = datum.u0_map(w, side="left")
    cone = SpacingCone.canonical(n)
    report = validate_initial(x0, u0, cone, tol=1e-12)
    if not report.passed:
        raise AdmissibilityError(f"sampled datum is inadmissible: {report.detail}")
    return x0, u0, cone


def validate_initial(x0, u0, cone: SpacingCone, tol: float = 1e-12) -> CheckReport:
    """Feasibility and contact/velocity compatibility of a discrete datum."""
    x0 = np.asarray(x0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    scale_x = 1.0 + float(np.max(np.abs(x0)))
    gaps = x0[1:] - x0[:-1]
    worst_gap = float(np.min(gaps - cone.two_r)) if gaps.size else 0.0
    contact = gaps - cone.two_r <= tol * scale_x
    dv = np.abs(u0[1:] - u0[:-1])
    worst_shear = float(np.max(np.where(contact, dv, 0.0))) if gaps.size else 0.0
    feasible = worst_gap >= -tol * scale_x
    compatible = worst_shear <= tol * (1.0 + float(np.max(np.abs(u0))))
    return CheckReport(
        "initial_datum",
        feasible and compatible,
        max(-worst_gap, worst_shear),
        tol,
        f"min gap slack={worst_gap:.3e}, max contact shear={worst_shear:.3e}",
    )


def discretization_convergence(datum: MacroscopicDatum, n_list) -> list[dict]:
    """L2 errors of the piecewise-constant sampled interpolants against the datum."""
    rows = []
    for n in n_list:
        x0, u0, _ = quantile_sample(datum, n)
        breaks = np.arange(n + 1) / n
        xn = PiecewiseField.constant(breaks, x0)
        un = PiecewiseField.constant(breaks, u0)
        rows.append({
            "n": int(n),
            "err_x_l2": xn.distance(datum.x0_map, "L2"),
            "err_u_l2": un.distance(datum.u0_map, "L2"),
        })
    return rows
