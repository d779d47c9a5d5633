"""Per-step stability diagnostics and trajectory certificates.

Step quantities: residual z = v - d (normal distance of the velocity from
the target graph), forcing delta = d_next - transport(d) (drift of the
target between steps), the Lyapunov value V = f - f_star + (alpha/h)*||z||^2,
and tube metrics (relative residual r, alignment cosine, orthogonal forcing
fraction). Certificate checks evaluate the one-step descent inequality and
the ultimate-boundedness noise floor along a recorded trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Metric, Tangent, inner

# Uniform guard for diagnostic divisions.
EPS_DIV = 1e-12

# Default slack tolerance when judging the per-step descent inequality.
DESCENT_SLACK_TOL = 1e-9

# trace.csv column order; mirrors DiagnosticsRecord field order.
CSV_COLUMNS = (
    "k",
    "f_val",
    "grad_norm",
    "z_norm",
    "delta_norm",
    "V",
    "r",
    "cos_vd",
    "q_perp",
    "h",
    "eta",
)


class InadmissibleParametersError(ValueError):
    """Certificate parameters outside the range the analysis supports."""


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Everything measured about one optimizer step."""

    k: int
    f_val: float
    grad_norm: float
    z_norm: float
    delta_norm: float
    V: float
    r: float
    cos_vd: float
    q_perp: float
    h: float
    eta: float

    def as_row(self) -> tuple:
        return tuple(getattr(self, name) for name in CSV_COLUMNS)


@dataclass(frozen=True)
class LyapunovParams:
    """Weights and constants entering the Lyapunov value and certificates.

    alpha weighs the residual energy; f_star is the optimal value (None
    selects a running-minimum estimate, which downgrades certificates to
    advisory); mu_phi is the descent-alignment constant (1 for the raw
    gradient field, estimated along the run otherwise); mu_pl is the
    gradient-dominance constant when known.
    """

    alpha: float
    f_star: float | None = None
    mu_phi: float | None = None
    mu_pl: float | None = None

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise InadmissibleParametersError("alpha must be positive")


def admissible_alpha_floor(h: float, eta: float, mu_phi: float) -> float:
    """Smallest residual weight for which the descent analysis goes through."""
    return h * h / (2.0 * mu_phi * eta)


def check_admissible(p: LyapunovParams, h: float, eta: float) -> None:
    if p.mu_phi is None:
        raise InadmissibleParametersError("mu_phi is required for certificate checks")
    floor = admissible_alpha_floor(h, eta, p.mu_phi)
    if not p.alpha > floor:
        raise InadmissibleParametersError(
            f"alpha={p.alpha!r} must exceed h^2/(2*mu_phi*eta)={floor!r}"
        )


def residual(v: Tangent, d: Tangent) -> Tangent:
    """Normal residual z = v - d at a common base point."""
    if v.dim != d.dim:
        raise ValueError("residual operands must share a dimension")
    return Tangent(v.coords - d.coords, v.base)


def forcing(d_next: Tangent, d_prev_transported: Tangent) -> Tangent:
    """Drift of the target field: delta = d_next - transported previous target."""
    if d_next.dim != d_prev_transported.dim:
        raise ValueError("forcing operands must share a dimension")
    return Tangent(d_next.coords - d_prev_transported.coords, d_next.base)


def lyapunov_value(f_val: float, p: LyapunovParams, z: Tangent, h: float, g: Metric) -> float:
    """Composite energy f - f_star + (alpha/h) * ||z||_g^2."""
    if not h > 0.0:
        raise ValueError("step size must be positive")
    if p.f_star is None:
        raise ValueError("lyapunov_value needs a concrete f_star")
    return f_val - p.f_star + (p.alpha / h) * inner(g, z, z)


def tube_metrics(
    v: Tangent, d: Tangent, delta: Tangent, g: Metric
) -> tuple[float, float, float]:
    """Relative residual, alignment cosine, and orthogonal forcing fraction.

    r       = ||v - d|| / (||d|| + eps)
    cos_vd  = <v, d> / ((||v|| + eps) * (||d|| + eps))
    q_perp  = ||delta - <delta, d_hat> d_hat|| / (||delta|| + eps)

    with metric norms/inner products throughout and eps = 1e-12.
    """
    nv = np.sqrt(inner(g, v, v))
    nd = np.sqrt(inner(g, d, d))
    z = residual(v, d)
    r = np.sqrt(inner(g, z, z)) / (nd + EPS_DIV)
    cos_vd = inner(g, v, d) / ((nv + EPS_DIV) * (nd + EPS_DIV))
    ndelta = np.sqrt(inner(g, delta, delta))
    if nd > 0.0:
        along = inner(g, delta, d) / (nd * nd)
        perp = Tangent(delta.coords - along * d.coords, delta.base)
    else:
        perp = delta
    q_perp = np.sqrt(inner(g, perp, perp)) / (ndelta + EPS_DIV)
    return float(r), float(cos_vd), float(q_perp)


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of evaluating the one-step descent inequality along a run."""

    n_pairs: int
    satisfied_fraction: float
    worst_slack: float
    constants: dict
    advisory: bool = False

    @property
    def satisfied(self) -> bool:
        return self.satisfied_fraction >= 1.0


def _z_coefficient(alpha: float, h: float, eta: float, mu_phi: float) -> float:
    # Net decay rate of the residual energy after the gradient/residual
    # coupling has been absorbed; positive whenever alpha is admissible.
    return alpha * eta / h - h / (2.0 * mu_phi)


def check_descent_inequality(
    records, p: LyapunovParams, slack_tol: float = DESCENT_SLACK_TOL, advisory: bool = False
) -> CertificateReport:
    """Evaluate V_{k+1} - V_k against the certified decrease at every step.

    The right-hand side per step k is

        -(mu_phi/2) * h * ||grad||^2
        - (alpha*eta/h - h/(2*mu_phi)) * ||z||^2
        + (alpha/(eta*h)) * ||delta||^2

    using each record's own h and eta. A step satisfies the certificate when
    rhs - (V_{k+1} - V_k) >= -slack_tol.
    """
    records = list(records)
    if not records:
        raise ValueError("cannot certify an empty record sequence")
    if p.mu_phi is None:
        raise InadmissibleParametersError("mu_phi is required for certificate checks")
    for rec in records:
        check_admissible(p, rec.h, rec.eta)

    constants = {
        "c1": p.mu_phi / 2.0,
        "c3": p.alpha,
        "mu_phi": p.mu_phi,
        "alpha": p.alpha,
    }
    n_pairs = len(records) - 1
    if n_pairs == 0:
        return CertificateReport(0, 1.0, 0.0, constants, advisory)

    ok = 0
    worst = np.inf
    for cur, nxt in zip(records[:-1], records[1:]):
        h, eta = cur.h, cur.eta
        rhs = (
            -(p.mu_phi / 2.0) * h * cur.grad_norm**2
            - _z_coefficient(p.alpha, h, eta, p.mu_phi) * cur.z_norm**2
            + (p.alpha / (eta * h)) * cur.delta_norm**2
        )
        slack = rhs - (nxt.V - cur.V)
        worst = min(worst, slack)
        if slack >= -slack_tol:
            ok += 1
    return CertificateReport(n_pairs, ok / n_pairs, float(worst), constants, advisory)


def pl_constant(quadratic) -> float:
    """Tight gradient-dominance constant of a quadratic bowl: lambda_min(A).

    Accepts either a QuadraticSpec-like object exposing `.A` or a raw
    symmetric positive definite matrix.
    """
    A = np.asarray(getattr(quadratic, "A", quadratic), dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(A, A.T, atol=1e-12, rtol=0.0):
        raise ValueError("matrix must be symmetric")
    eigs = np.linalg.eigvalsh(A)
    if eigs[0] <= 0.0:
        raise ValueError("matrix must be positive definite")
    return float(eigs[0])


@dataclass(frozen=True)
class UUBReport:
    """Noise-floor verdict for the tail of a trajectory."""

    rho: float
    floor: float
    satisfied: bool
    max_tail_V: float
    max_tail_delta_sq: float


def uub_floor(
    records, p: LyapunovParams, h: float, eta: float, min_window: int = 100
) -> UUBReport:
    """Check that tail Lyapunov values sit below the disturbance floor.

    rho = min(mu_phi*h*mu_pl, eta^2/(2*h)) is the linear contraction rate
    built from the certificate constants c1 = mu_phi/2, c2 = alpha*eta/(2h),
    c3 = alpha; the floor is (alpha/(rho*eta*h)) * max tail ||delta||^2.
    """
    records = list(records)
    if len(records) < min_window:
        raise ValueError(
            f"tail window must contain at least {min_window} records, got {len(records)}"
        )
    if p.mu_pl is None or p.mu_phi is None:
        raise InadmissibleParametersError("uub_floor needs both mu_phi and mu_pl")
    check_admissible(p, h, eta)

    c1 = p.mu_phi / 2.0
    c2 = p.alpha * eta / (2.0 * h)
    rho = min(2.0 * c1 * h * p.mu_pl, c2 * eta / p.alpha)
    if not 0.0 < rho < 1.0:
        raise InadmissibleParametersError(
            f"contraction rate rho={rho!r} is outside (0, 1)"
        )
    max_delta_sq = max(rec.delta_norm**2 for rec in records)
    floor = (p.alpha / (rho * eta * h)) * max_delta_sq
    max_v = max(rec.V for rec in records)
    satisfied = max_v <= floor * (1.0 + 1e-6)
    return UUBReport(float(rho), float(floor), bool(satisfied), float(max_v), float(max_delta_sq))


def with_lyapunov(records, alpha: float, f_star: float):
    """Recompute every record's V for a different weight or optimum estimate.

    V only depends on stored scalars (f_val, z_norm, h), so certificates can
    pick an admissible alpha after the run without re-running it.
    """
    from dataclasses import replace

    out = []
    for rec in records:
        v = rec.f_val - f_star + (alpha / rec.h) * rec.z_norm**2
        out.append(replace(rec, V=v))
    return out


class RecordSink:
    """Minimal diagnostics sink: collects records in order."""

    def __init__(self):
        self.records: list[DiagnosticsRecord] = []

    def emit(self, record: DiagnosticsRecord) -> None:
        self.records.append(record)
