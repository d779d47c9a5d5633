"""Desk-scale objectives, gradient oracles, noise models, and datasets.

Objectives expose exact values and analytic gradients plus a stochastic
gradient sampler driven by a counter-based generator, so every draw is a
pure function of (seed, step) and trajectories are reproducible regardless
of evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import EUCLIDEAN, SPHERE, Point, Tangent, tangential_part

# Independent sub-streams of the counter-based generator.
STREAM_NOISE = 0
STREAM_INIT = 1
STREAM_MATRIX = 2
STREAM_DATA = 3

_MASK64 = (1 << 64) - 1


class DatasetFormatError(ValueError):
    """Malformed dataset input; the message carries the offending line."""


def counter_rng(seed: int, step: int, stream: int = STREAM_NOISE) -> np.random.Generator:
    """Generator keyed by (seed, stream) with the counter block set to `step`.

    Distinct (seed, step, stream) triples index non-overlapping Philox
    blocks, so draws are reproducible and order-independent across
    concurrent trajectories.
    """
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    counter = np.zeros(4, dtype=np.uint64)
    counter[3] = step & _MASK64
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


@dataclass(frozen=True)
class NoiseModel:
    """Gradient corruption: none, i.i.d. Gaussian, or minibatch subsampling."""

    kind: str = "none"  # "none" | "gaussian" | "minibatch"
    sigma: float = 0.0
    batch_size: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "minibatch"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")
        if self.kind == "minibatch" and self.batch_size < 1:
            raise ValueError("minibatch noise needs batch_size >= 1")


NO_NOISE = NoiseModel()


@dataclass(frozen=True)
class QuadraticSpec:
    """Bowl 0.5*(theta-theta_star)' A (theta-theta_star) with SPD curvature A."""

    A: np.ndarray
    theta_star: np.ndarray
    f_star: float = 0.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        ts = np.asarray(self.theta_star, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != ts.size:
            raise ValueError("curvature matrix and center have inconsistent shapes")
        if not np.allclose(A, A.T, atol=1e-12, rtol=0.0):
            raise ValueError("curvature matrix must be symmetric")
        if np.linalg.eigvalsh(A)[0] <= 0.0:
            raise ValueError("curvature matrix must be positive definite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "theta_star", ts)

    @property
    def dim(self) -> int:
        return self.theta_star.size


def quadratic_eval(spec: QuadraticSpec, theta: np.ndarray) -> tuple[float, np.ndarray]:
    r = np.asarray(theta, dtype=np.float64) - spec.theta_star
    grad = spec.A @ r
    return 0.5 * float(np.dot(r, grad)), grad


def rosenbrock_eval(theta: np.ndarray) -> tuple[float, np.ndarray]:
    """Chained Rosenbrock valley; global minimum 0 at the all-ones vector."""
    t = np.asarray(theta, dtype=np.float64)
    if t.size < 2:
        raise ValueError("rosenbrock needs dimension >= 2")
    diff = t[1:] - t[:-1] ** 2
    f = float(np.sum(100.0 * diff**2 + (1.0 - t[:-1]) ** 2))
    grad = np.zeros_like(t)
    grad[:-1] = -400.0 * t[:-1] * diff - 2.0 * (1.0 - t[:-1])
    grad[1:] += 200.0 * diff
    return f, grad


@dataclass(frozen=True)
class Dataset:
    """Row-major feature matrix with integer class labels in the last position."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
            raise ValueError("features and labels have inconsistent shapes")
        if np.any(~np.isfinite(X)):
            raise ValueError("features contain NaN or Inf")
        if not np.issubdtype(y.dtype, np.integer):
            raise ValueError("labels must be integers")
        if y.size and y.min() < 0:
            raise ValueError("labels must be nonnegative")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y.astype(np.int64))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_cols(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


def load_dataset_csv(path) -> Dataset:
    """Read a headerless CSV: one sample per row, integer label last.

    Any malformed row aborts with its 1-based line number.
    """
    rows: list[list[float]] = []
    labels: list[int] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            parts = stripped.split(",")
            if len(parts) < 2:
                raise DatasetFormatError(f"line {ln}: expected features plus a label")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise DatasetFormatError(
                    f"line {ln}: expected {width} columns, got {len(parts)}"
                )
            try:
                values = [float(p) for p in parts]
            except ValueError:
                raise DatasetFormatError(f"line {ln}: non-numeric field") from None
            label = values[-1]
            if not label.is_integer() or label < 0:
                raise DatasetFormatError(f"line {ln}: label must be a nonnegative integer")
            if any(not math.isfinite(v) for v in values[:-1]):
                raise DatasetFormatError(f"line {ln}: non-finite feature")
            rows.append(values[:-1])
            labels.append(int(label))
    if not rows:
        raise DatasetFormatError("dataset is empty")
    return Dataset(np.array(rows), np.array(labels, dtype=np.int64))


def make_two_gaussians(
    n: int, separation: float = 3.0, dim: int = 2, seed: int = 0
) -> Dataset:
    """Balanced two-class blobs: unit-covariance Gaussians split along axis 0."""
    rng = counter_rng(seed, 0, STREAM_DATA)
    half = n // 2
    shift = np.zeros(dim)
    shift[0] = separation / 2.0
    x0 = rng.standard_normal((half, dim)) - shift
    x1 = rng.standard_normal((n - half, dim)) + shift
    X = np.vstack([x0, x1])
    y = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(n - half, dtype=np.int64)])
    order = rng.permutation(n)
    return Dataset(X[order], y[order])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_eval(
    dataset: Dataset, theta: np.ndarray, rows: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy of a linear scorer with sigmoid link."""
    if dataset.n_classes > 2:
        raise ValueError("logistic objective needs binary labels")
    X = dataset.features if rows is None else dataset.features[rows]
    y = dataset.labels if rows is None else dataset.labels[rows]
    t = np.asarray(theta, dtype=np.float64)
    z = X @ t
    f = float(np.mean(np.logaddexp(0.0, z) - y * z))
    grad = X.T @ (_sigmoid(z) - y) / X.shape[0]
    return f, grad


def mlp_param_count(n_in: int, hidden: int, n_out: int) -> int:
    return hidden * n_in + hidden + n_out * hidden + n_out


def _unpack_mlp(w: np.ndarray, n_in: int, hidden: int, n_out: int):
    i = 0
    W1 = w[i : i + hidden * n_in].reshape(hidden, n_in)
    i += hidden * n_in
    b1 = w[i : i + hidden]
    i += hidden
    W2 = w[i : i + n_out * hidden].reshape(n_out, hidden)
    i += n_out * hidden
    b2 = w[i : i + n_out]
    return W1, b1, W2, b2


def mlp_eval(
    weights: np.ndarray,
    dataset: Dataset,
    arch: tuple[int, int, int],
    rows: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """One-hidden-layer tanh network with softmax cross-entropy, manual backprop."""
    n_in, hidden, n_out = arch
    w = np.asarray(weights, dtype=np.float64)
    if w.size != mlp_param_count(n_in, hidden, n_out):
        raise ValueError(
            f"weight vector has {w.size} entries, arch {arch} needs "
            f"{mlp_param_count(n_in, hidden, n_out)}"
        )
    X = dataset.features if rows is None else dataset.features[rows]
    y = dataset.labels if rows is None else dataset.labels[rows]
    W1, b1, W2, b2 = _unpack_mlp(w, n_in, hidden, n_out)

    H = np.tanh(X @ W1.T + b1)
    logits = H @ W2.T + b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    norm = exp.sum(axis=1)
    batch = X.shape[0]
    idx = np.arange(batch)
    f = float(np.mean(np.log(norm) - shifted[idx, y]))

    # Backprop through softmax cross-entropy, linear, tanh, linear.
    G = exp / norm[:, None]
    G[idx, y] -= 1.0
    G /= batch
    dW2 = G.T @ H
    db2 = G.sum(axis=0)
    dH = G @ W2
    dZ1 = dH * (1.0 - H**2)
    dW1 = dZ1.T @ X
    db1 = dZ1.sum(axis=0)
    grad = np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])
    return f, grad


def rayleigh_eval(A: np.ndarray, theta: Point) -> tuple[float, Tangent]:
    """Rayleigh quotient theta'A theta on the unit sphere with its tangential gradient."""
    if theta.chart != SPHERE:
        raise ValueError("rayleigh objective lives on the sphere")
    A = np.asarray(A, dtype=np.float64)
    x = theta.coords
    Ax = A @ x
    f = float(np.dot(x, Ax))
    rgrad = 2.0 * (Ax - f * x)
    return f, Tangent(rgrad, theta)


def random_spd(
    dim: int, lambda_min: float = 1.0, lambda_max: float = 10.0, seed: int = 0
) -> np.ndarray:
    """Random SPD matrix with eigenvalues spread linearly over the given range."""
    rng = counter_rng(seed, 0, STREAM_MATRIX)
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eigs = np.linspace(lambda_min, lambda_max, dim)
    A = (Q * eigs) @ Q.T
    return (A + A.T) / 2.0


OBJECTIVE_KINDS = ("quadratic", "rosenbrock", "logistic", "mlp", "rayleigh_sphere")


@dataclass(frozen=True)
class ObjectiveHandle:
    """Uniform objective interface the trajectory runner drives.

    eval_exact gives the noise-free value and analytic gradient;
    sample_gradient adds the configured corruption deterministically
    in (seed, step).
    """

    kind: str
    dim: int
    noise: NoiseModel = NO_NOISE
    f_star: float | None = None
    manifold: str = EUCLIDEAN
    quadratic: QuadraticSpec | None = None
    dataset: Dataset | None = None
    arch: tuple[int, int, int] | None = None
    matrix: np.ndarray | None = None
    init_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.noise.kind == "minibatch" and self.dataset is None:
            raise ValueError("minibatch noise needs a dataset-backed objective")

    def eval_exact(self, theta: Point) -> tuple[float, np.ndarray]:
        return self._evaluate(theta, rows=None)

    def _evaluate(self, theta: Point, rows) -> tuple[float, np.ndarray]:
        # Overflow is legal here: non-finite gradients are refused downstream.
        with np.errstate(over="ignore", invalid="ignore"):
            return self._evaluate_raw(theta, rows)

    def _evaluate_raw(self, theta: Point, rows) -> tuple[float, np.ndarray]:
        if self.kind == "quadratic":
            return quadratic_eval(self.quadratic, theta.coords)
        if self.kind == "rosenbrock":
            return rosenbrock_eval(theta.coords)
        if self.kind == "logistic":
            return logistic_eval(self.dataset, theta.coords, rows)
        if self.kind == "mlp":
            return mlp_eval(theta.coords, self.dataset, self.arch, rows)
        f, rgrad = rayleigh_eval(self.matrix, theta)
        return f, rgrad.coords

    def sample_gradient(self, theta: Point, k: int, seed: int | None = None) -> Tangent:
        """Exact gradient plus noise; a pure function of (seed, k)."""
        seed = self.noise.rng_seed if seed is None else seed
        if self.noise.kind == "minibatch":
            n = self.dataset.n_rows
            if self.noise.batch_size >= n:
                rows = None  # full batch in natural order, bit-equal to exact
            else:
                rng = counter_rng(seed, k, STREAM_NOISE)
                rows = rng.choice(n, size=self.noise.batch_size, replace=False)
            _, grad = self._evaluate(theta, rows)
            return Tangent(grad, theta)
        _, grad = self._evaluate(theta, rows=None)
        if self.noise.kind == "gaussian" and self.noise.sigma > 0.0:
            rng = counter_rng(seed, k, STREAM_NOISE)
            grad = grad + self.noise.sigma * rng.standard_normal(self.dim)
            grad = tangential_part(theta, grad)
        return Tangent(grad, theta)

    def initial_point(self, seed: int) -> Point:
        rng = counter_rng(seed, 0, STREAM_INIT)
        x = rng.standard_normal(self.dim) * self.init_scale
        if self.manifold == SPHERE:
            return Point(x / np.linalg.norm(x), SPHERE)
        return Point(x, EUCLIDEAN)


def make_quadratic(spec: QuadraticSpec, noise: NoiseModel = NO_NOISE) -> ObjectiveHandle:
    return ObjectiveHandle(
        kind="quadratic", dim=spec.dim, noise=noise, f_star=spec.f_star, quadratic=spec
    )


def make_rosenbrock(dim: int, noise: NoiseModel = NO_NOISE) -> ObjectiveHandle:
    return ObjectiveHandle(kind="rosenbrock", dim=dim, noise=noise, f_star=0.0)


def make_logistic(dataset: Dataset, noise: NoiseModel = NO_NOISE) -> ObjectiveHandle:
    if dataset.n_classes > 2:
        raise ValueError("logistic objective needs binary labels")
    return ObjectiveHandle(
        kind="logistic", dim=dataset.n_cols, noise=noise, dataset=dataset
    )


def make_mlp(dataset: Dataset, hidden: int, noise: NoiseModel = NO_NOISE) -> ObjectiveHandle:
    arch = (dataset.n_cols, hidden, dataset.n_classes)
    return ObjectiveHandle(
        kind="mlp",
        dim=mlp_param_count(*arch),
        noise=noise,
        dataset=dataset,
        arch=arch,
        init_scale=0.3,
    )


def make_rayleigh(A: np.ndarray, noise: NoiseModel = NO_NOISE) -> ObjectiveHandle:
    A = np.asarray(A, dtype=np.float64)
    if not np.allclose(A, A.T, atol=1e-12, rtol=0.0):
        raise ValueError("rayleigh matrix must be symmetric")
    f_star = float(np.linalg.eigvalsh(A)[0])
    return ObjectiveHandle(
        kind="rayleigh_sphere",
        dim=A.shape[0],
        noise=noise,
        f_star=f_star,
        manifold=SPHERE,
        matrix=A,
    )


def central_difference_gradient(fn, theta: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Two-sided finite-difference gradient of a scalar function of a vector."""
    base = np.asarray(theta, dtype=np.float64)
    grad = np.empty_like(base)
    for i in range(base.size):
        bump = np.zeros_like(base)
        bump[i] = step
        grad[i] = (fn(base + bump) - fn(base - bump)) / (2.0 * step)
    return grad
