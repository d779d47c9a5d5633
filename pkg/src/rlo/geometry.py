"""Manifold primitives: points, tangent vectors, metrics, retraction, transport.

Two charts are supported: flat Euclidean space and the unit sphere embedded
in R^n. Metrics are identity or diagonal. Everything here is a pure function
over immutable values, so concurrent use needs no coordination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EUCLIDEAN = "euclidean"
SPHERE = "sphere"
CHARTS = (EUCLIDEAN, SPHERE)

# Sphere points must sit on the sphere to this tolerance.
SPHERE_NORM_TOL = 1e-12
# Below this norm, (theta + xi) cannot be meaningfully renormalized.
DEGENERATE_RETRACTION_TOL = 1e-14


class GeometryError(ValueError):
    """Invalid geometric construction or operation."""


class DegenerateRetractionError(GeometryError):
    """Sphere retraction of a step landing numerically at the origin."""


def _as_vector(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise GeometryError(f"expected a 1-d vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Point:
    """A manifold point stored as ambient coordinates plus a chart tag."""

    coords: np.ndarray
    chart: str = EUCLIDEAN

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_vector(self.coords))
        if self.chart not in CHARTS:
            raise GeometryError(f"unknown chart {self.chart!r}")
        if self.chart == SPHERE:
            nrm = float(np.linalg.norm(self.coords))
            if abs(nrm - 1.0) > SPHERE_NORM_TOL:
                raise GeometryError(
                    f"sphere point must have unit norm, got {nrm!r}"
                )

    @property
    def dim(self) -> int:
        return self.coords.size


@dataclass(frozen=True)
class Tangent:
    """A tangent vector attached to a base point.

    Construction checks dimensions only. Sphere tangency is not enforced
    here because raw ambient gradients legitimately enter as Tangents and
    are projected by riemannian_gradient; vectors produced by retract,
    transport and riemannian_gradient do satisfy tangency.
    """

    coords: np.ndarray
    base: Point

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_vector(self.coords))
        if self.coords.size != self.base.dim:
            raise GeometryError(
                f"tangent dimension {self.coords.size} != base dimension {self.base.dim}"
            )

    @property
    def dim(self) -> int:
        return self.coords.size


def zero_tangent(theta: Point) -> Tangent:
    return Tangent(np.zeros(theta.dim), theta)


@dataclass(frozen=True)
class Metric:
    """Inner product on tangent spaces: identity, or diagonal with positive weights.

    Diagonal weights w are the entries of the inverse preconditioner, so
    inner(xi, zeta) = sum_i w_i xi_i zeta_i and the steepest-descent
    direction for a Euclidean gradient is the componentwise quotient g / w.
    """

    kind: str = "identity"  # "identity" | "diagonal"
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "diagonal"):
            raise GeometryError(f"unknown metric kind {self.kind!r}")
        if self.kind == "diagonal":
            if self.weights is None:
                raise GeometryError("diagonal metric requires weights")
            w = _as_vector(self.weights)
            if not np.all(w > 0.0):
                raise GeometryError("diagonal metric weights must be strictly positive")
            object.__setattr__(self, "weights", w)
        elif self.weights is not None:
            raise GeometryError("identity metric takes no weights")


IDENTITY_METRIC = Metric()


def tangential_part(theta: Point, coords: np.ndarray) -> np.ndarray:
    """Remove the radial component at a sphere point; identity on Euclidean."""
    if theta.chart == SPHERE:
        return coords - np.dot(coords, theta.coords) * theta.coords
    return coords


def retract(theta: Point, xi: Tangent) -> Point:
    """Map a tangent step back onto the manifold.

    Euclidean: theta + xi. Sphere: normalize(theta + xi). Either way
    retract(theta, 0) == theta.
    """
    if xi.base is not theta and xi.dim != theta.dim:
        raise GeometryError("tangent does not match the base point")
    moved = theta.coords + xi.coords
    if theta.chart == SPHERE:
        nrm = float(np.linalg.norm(moved))
        if nrm < DEGENERATE_RETRACTION_TOL:
            raise DegenerateRetractionError(
                f"step lands at the origin (norm {nrm!r}); cannot renormalize"
            )
        return Point(moved / nrm, SPHERE)
    return Point(moved, theta.chart)


def transport(theta: Point, phi: Point, xi: Tangent) -> Tangent:
    """Move a tangent vector from theta to phi.

    Euclidean transport is the identity. Sphere transport is the orthogonal
    projection onto the tangent space at phi, which is linear and
    nonexpansive.
    """
    if xi.dim != phi.dim:
        raise GeometryError("tangent/destination dimension mismatch")
    if phi.chart == SPHERE:
        return Tangent(xi.coords - np.dot(xi.coords, phi.coords) * phi.coords, phi)
    return Tangent(xi.coords, phi)


def inner(g: Metric, xi: Tangent, zeta: Tangent) -> float:
    """Metric inner product of two tangent vectors at a common base point."""
    if xi.dim != zeta.dim:
        raise GeometryError(
            f"dimension mismatch: {xi.dim} vs {zeta.dim}"
        )
    if g.kind == "diagonal":
        if g.weights.size != xi.dim:
            raise GeometryError("metric weight dimension mismatch")
        return float(np.dot(xi.coords * g.weights, zeta.coords))
    return float(np.dot(xi.coords, zeta.coords))


def norm(g: Metric, xi: Tangent) -> float:
    return float(np.sqrt(inner(g, xi, xi)))


def riemannian_gradient(g: Metric, euclid_grad: Tangent) -> Tangent:
    """Steepest-descent direction of a Euclidean gradient under the metric.

    Identity metric leaves the vector unchanged; a diagonal metric divides
    componentwise by the weights. On the sphere the result is additionally
    projected onto the tangent space at the base point.
    """
    coords = euclid_grad.coords
    if g.kind == "diagonal":
        if g.weights.size != coords.size:
            raise GeometryError("metric weight dimension mismatch")
        coords = coords / g.weights
    coords = tangential_part(euclid_grad.base, coords)
    return Tangent(coords, euclid_grad.base)
