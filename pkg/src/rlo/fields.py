"""Target-direction generators and optimizer memory updates.

A FieldSpec selects one of six direction constructions from the gradient
and the optimizer's memory (first moment m, optional second moment s):

  raw_gradient   d = g
  momentum       d = c,              c = beta1*m + (1-beta1)*g
  sign           d = sign(c)
  sign_belief    d = sign(c) + lambda_b * unit(g - m)
  tanh           d = tanh(gamma*c)   (plus belief term when lambda_b > 0)
  tanh_adaptive  d = tanh(gamma*c) / (sqrt(s') + eps), s' = beta3-EMA of g^2

Optional global normalization rescales the direction to norm sqrt(D),
where D is the total parameter count; the belief term, when present, is
added after normalization. All functions are pure; state updates return
new OptimizerState values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FIELD_KINDS = (
    "raw_gradient",
    "momentum",
    "sign",
    "sign_belief",
    "tanh",
    "tanh_adaptive",
)

# Kinds whose direction includes the belief term lambda_b * unit(g - m).
_BELIEF_KINDS = ("sign_belief", "tanh")


class FieldError(ValueError):
    """Invalid field specification or spec/state mismatch."""


@dataclass(frozen=True)
class OptimizerState:
    """Optimizer memory: first moment m, optional second moment s, step count."""

    m: np.ndarray
    s: np.ndarray | None = None
    k: int = 0

    def __post_init__(self):
        object.__setattr__(self, "m", np.asarray(self.m, dtype=np.float64))
        if self.s is not None:
            s = np.asarray(self.s, dtype=np.float64)
            if s.shape != self.m.shape:
                raise FieldError("second moment shape differs from first moment")
            if np.any(s < 0.0):
                raise FieldError("second moment must be elementwise nonnegative")
            object.__setattr__(self, "s", s)


def zero_state(dim: int, with_second_moment: bool = False) -> OptimizerState:
    s = np.zeros(dim) if with_second_moment else None
    return OptimizerState(m=np.zeros(dim), s=s, k=0)


@dataclass(frozen=True)
class FieldSpec:
    """Declarative choice of direction field and its hyperparameters."""

    phi_kind: str
    gamma: float = 5.0
    lambda_b: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.99
    beta3: float = 0.999
    epsilon: float = 1e-8
    global_normalize: bool = False

    def __post_init__(self):
        if self.phi_kind not in FIELD_KINDS:
            raise FieldError(f"unknown field kind {self.phi_kind!r}")
        if not self.gamma > 0.0:
            raise FieldError("gamma must be positive")
        if not self.epsilon > 0.0:
            raise FieldError("epsilon must be positive")
        if self.lambda_b < 0.0:
            raise FieldError("lambda_b must be nonnegative")
        for name in ("beta1", "beta2", "beta3"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise FieldError(f"{name} must lie in [0, 1)")

    @property
    def needs_second_moment(self) -> bool:
        return self.phi_kind == "tanh_adaptive"


def ema_update(prev: np.ndarray, g: np.ndarray, beta: float) -> np.ndarray:
    """Convex blend beta*prev + (1-beta)*g, componentwise."""
    prev = np.asarray(prev, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if prev.shape != g.shape:
        raise FieldError(f"shape mismatch: {prev.shape} vs {g.shape}")
    return beta * prev + (1.0 - beta) * g


def interpolated_moment(m: np.ndarray, g: np.ndarray, beta1: float) -> np.ndarray:
    """Look-ahead blend of the stored moment and the fresh gradient.

    Same arithmetic as ema_update, but the result is consumed only by the
    direction construction; the stored moment itself is advanced with beta2.
    """
    return ema_update(m, g, beta1)


def sign_field(c: np.ndarray) -> np.ndarray:
    """Componentwise sign with sign(0) = 0."""
    return np.sign(np.asarray(c, dtype=np.float64))


def belief_term(g: np.ndarray, m: np.ndarray, lambda_b: float, eps: float) -> np.ndarray:
    """Normalized surprise direction lambda_b * (g - m) / (||g - m|| + eps)."""
    delta = np.asarray(g, dtype=np.float64) - np.asarray(m, dtype=np.float64)
    denom = float(np.linalg.norm(delta)) + eps
    if denom == 0.0 or lambda_b == 0.0:
        return np.zeros_like(delta)
    return lambda_b * delta / denom


def tanh_field(c: np.ndarray, gamma: float) -> np.ndarray:
    """Smooth saturation tanh(gamma * c); entries lie in (-1, 1)."""
    return np.tanh(gamma * np.asarray(c, dtype=np.float64))


def adaptive_field(c: np.ndarray, s: np.ndarray, gamma: float, eps: float) -> np.ndarray:
    """Curvature-scaled saturation tanh(gamma*c) / (sqrt(s) + eps)."""
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0.0):
        raise FieldError("second moment must be elementwise nonnegative")
    return tanh_field(c, gamma) / (np.sqrt(s) + eps)


def global_normalize(d: np.ndarray, total_dim: int, eps: float) -> np.ndarray:
    """Rescale a direction to norm sqrt(total_dim), decoupling it from gradient scale."""
    d = np.asarray(d, dtype=np.float64)
    nrm = float(np.linalg.norm(d))
    denom = nrm + eps
    if denom == 0.0:
        return np.zeros_like(d)
    return np.sqrt(float(total_dim)) * d / denom


def generate_direction(
    spec: FieldSpec, y: OptimizerState, g: np.ndarray
) -> tuple[np.ndarray, OptimizerState]:
    """Build the target direction and advance the optimizer memory.

    The second moment, when allocated, is always advanced with beta3 before
    the direction is formed, so adaptive fields see the fresh value. The
    first moment advances with beta2 after the direction is formed, matching
    the look-ahead role of the beta1 blend.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.shape != y.m.shape:
        raise FieldError(f"gradient shape {g.shape} != state shape {y.m.shape}")

    s_next = None
    if y.s is not None:
        s_next = ema_update(y.s, g * g, spec.beta3)
    elif spec.needs_second_moment:
        raise FieldError("tanh_adaptive requires a second-moment buffer in the state")

    c = interpolated_moment(y.m, g, spec.beta1)
    kind = spec.phi_kind
    if kind == "raw_gradient":
        d = g.copy()
    elif kind == "momentum":
        d = c
    elif kind in ("sign", "sign_belief"):
        d = sign_field(c)
    elif kind == "tanh":
        d = tanh_field(c, spec.gamma)
    else:  # tanh_adaptive
        d = adaptive_field(c, s_next, spec.gamma, spec.epsilon)

    if spec.global_normalize:
        d = global_normalize(d, d.size, spec.epsilon)
    if kind in _BELIEF_KINDS and spec.lambda_b > 0.0:
        d = d + belief_term(g, y.m, spec.lambda_b, spec.epsilon)

    m_next = ema_update(y.m, g, spec.beta2)
    return d, OptimizerState(m=m_next, s=s_next, k=y.k + 1)
