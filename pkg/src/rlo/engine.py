"""Lifted-optimizer stepping loop, schedules, presets, and the trajectory runner.

Each step has two phases. The geometric phase maps the sampled gradient
through the metric, builds a target direction d and advances the optimizer
memory. The dynamic phase relaxes the velocity toward d at rate eta
(v_tilde = (1-eta)*v + eta*d), retracts the parameters along -h*v_tilde,
and transports the velocity to the new point. Classic optimizers and the
lifted variants are instantiations selected by make_preset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .diagnostics import (
    DiagnosticsRecord,
    LyapunovParams,
    lyapunov_value,
    tube_metrics,
)
from .fields import FieldSpec, OptimizerState, generate_direction, zero_state
from .geometry import (
    EUCLIDEAN,
    IDENTITY_METRIC,
    SPHERE,
    Metric,
    Point,
    Tangent,
    inner,
    retract,
    riemannian_gradient,
    tangential_part,
    transport,
    zero_tangent,
)

SCHEDULE_KINDS = ("constant", "cosine_with_warmup")

PRESETS = ("sgd", "momentum", "adamw", "lion", "rlo", "rlo_lambda", "rlo_lifted")


class ConfigError(ValueError):
    """Invalid optimizer configuration; the message names the offending field."""


class PoisonedGradientError(RuntimeError):
    """A sampled gradient contained NaN or Inf; the step was refused."""


@dataclass(frozen=True)
class Schedule:
    """Step-size or lifting-rate schedule: constant, or cosine decay with warmup."""

    kind: str = "constant"
    peak: float = 0.0
    total_steps: int = 0
    warmup_steps: int = 0
    floor: float = 0.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"schedule.kind: unknown kind {self.kind!r}")
        if not math.isfinite(self.peak):
            raise ConfigError("schedule.peak: must be finite")
        if self.kind == "cosine_with_warmup":
            if self.total_steps < 1:
                raise ConfigError("schedule.total_steps: must be >= 1")
            if not 0 <= self.warmup_steps <= self.total_steps:
                raise ConfigError("schedule.warmup_steps: must lie in [0, total_steps]")

    def minimum(self) -> float:
        """Smallest value the schedule can emit over its domain."""
        if self.kind == "constant":
            return self.peak
        lo = min(self.floor, self.peak)
        if self.warmup_steps > 0:
            lo = min(lo, self.peak / self.warmup_steps)
        return lo

    def maximum(self) -> float:
        if self.kind == "constant":
            return self.peak
        return max(self.peak, self.floor)


def constant_schedule(value: float) -> Schedule:
    return Schedule(kind="constant", peak=value)


def schedule_value(s: Schedule, k: int) -> float:
    """Schedule value at step k. Warmup ramps linearly to the peak, then a
    half-cosine decays to the floor."""
    if k < 0:
        raise ConfigError("schedule step index must be nonnegative")
    if s.kind == "constant":
        return s.peak
    if k >= s.total_steps:
        raise ConfigError(
            f"schedule step {k} out of range [0, {s.total_steps})"
        )
    if k < s.warmup_steps:
        return s.peak * (k + 1) / s.warmup_steps
    span = s.total_steps - s.warmup_steps
    if span == 0:
        return s.peak
    phase = math.pi * (k - s.warmup_steps) / span
    return s.floor + (s.peak - s.floor) * 0.5 * (1.0 + math.cos(phase))


@dataclass(frozen=True)
class RLOConfig:
    """Full optimizer selection: field, metric, manifold, schedules, decay, seed.

    adaptive_metric switches the metric to the diagonal weights
    sqrt(s) + epsilon maintained from the second-moment buffer; in that mode
    the metric is applied to the field output (the blended moment) rather
    than premapping the raw gradient, which is what decouples moment
    accumulation from the evolving preconditioner.
    """

    field: FieldSpec
    h_schedule: Schedule
    eta_schedule: Schedule
    metric: Metric = IDENTITY_METRIC
    manifold: str = EUCLIDEAN
    weight_decay: float = 0.0
    seed: int = 0
    adaptive_metric: bool = False


def validate_config(cfg: RLOConfig) -> None:
    """Reject configurations outside the supported parameter ranges."""
    if cfg.manifold not in (EUCLIDEAN, SPHERE):
        raise ConfigError(f"manifold: unknown manifold {cfg.manifold!r}")
    if cfg.h_schedule.minimum() <= 0.0:
        raise ConfigError("h: every step size must be positive")
    eta_lo, eta_hi = cfg.eta_schedule.minimum(), cfg.eta_schedule.maximum()
    if eta_lo <= 0.0 or eta_hi > 1.0:
        raise ConfigError("eta: every lifting rate must lie in (0, 1]")
    if cfg.weight_decay < 0.0:
        raise ConfigError("weight_decay: must be nonnegative")
    if cfg.weight_decay > 0.0 and cfg.manifold == SPHERE:
        raise ConfigError("weight_decay: multiplicative decay is undefined on the sphere")
    if cfg.adaptive_metric and cfg.metric.kind != "identity":
        raise ConfigError("metric: adaptive_metric replaces the static metric; use identity")
    if cfg.field.needs_second_moment and cfg.adaptive_metric:
        raise ConfigError("metric: tanh_adaptive already owns the second moment")


@dataclass(frozen=True)
class ExtendedState:
    """Dynamical-system state: parameters, velocity, optimizer memory, step index."""

    theta: Point
    v: Tangent
    y: OptimizerState
    k: int = 0


@dataclass(frozen=True)
class StepTrace:
    """Bit-exact record of the quantities one step actually used."""

    g_norm: float
    d: np.ndarray
    v_tilde: np.ndarray
    z: np.ndarray
    h: float
    eta: float


def initial_state(cfg: RLOConfig, theta0: Point) -> ExtendedState:
    if theta0.chart != cfg.manifold:
        raise ConfigError("theta0: chart does not match the configured manifold")
    with_s = cfg.field.needs_second_moment or cfg.adaptive_metric
    return ExtendedState(
        theta=theta0,
        v=zero_tangent(theta0),
        y=zero_state(theta0.dim, with_second_moment=with_s),
        k=0,
    )


def _direction(cfg: RLOConfig, theta: Point, y: OptimizerState, g_vec: np.ndarray):
    """Geometric phase: metric-map the gradient, build d, advance memory.

    Returns (d, y_next, step_metric, mapped_gradient). Static metrics premap
    the raw gradient; the adaptive second-moment metric rescales the field
    output instead.
    """
    if cfg.adaptive_metric:
        grad = riemannian_gradient(IDENTITY_METRIC, Tangent(g_vec, theta))
        d, y_next = generate_direction(cfg.field, y, grad.coords)
        weights = np.sqrt(y_next.s) + cfg.field.epsilon
        step_metric = Metric("diagonal", weights)
        d = d / weights
    else:
        grad = riemannian_gradient(cfg.metric, Tangent(g_vec, theta))
        d, y_next = generate_direction(cfg.field, y, grad.coords)
        step_metric = cfg.metric
    d = tangential_part(theta, d)
    return d, y_next, step_metric, grad


def rlo_step(state: ExtendedState, g: Tangent, cfg: RLOConfig) -> tuple[ExtendedState, StepTrace]:
    """Advance the extended state by one step using the sampled gradient g.

    Decoupled weight decay shrinks the parameters before the geometric
    phase; a NaN/Inf gradient refuses the step and leaves the state
    untouched.
    """
    h = schedule_value(cfg.h_schedule, state.k)
    eta = schedule_value(cfg.eta_schedule, state.k)
    g_vec = np.asarray(g.coords, dtype=np.float64)
    if not np.all(np.isfinite(g_vec)):
        raise PoisonedGradientError(f"non-finite gradient at step {state.k}")

    theta = state.theta
    if cfg.weight_decay != 0.0:
        theta = Point(theta.coords * (1.0 - h * cfg.weight_decay), theta.chart)

    d, y_next, step_metric, grad = _direction(cfg, theta, state.y, g_vec)

    v_tilde = (1.0 - eta) * state.v.coords + eta * d
    theta_next = retract(theta, Tangent(-h * v_tilde, theta))
    v_next = transport(theta, theta_next, Tangent(v_tilde, theta))
    z = state.v.coords - d

    g_norm = math.sqrt(inner(step_metric, grad, grad))
    trace = StepTrace(g_norm=g_norm, d=d, v_tilde=v_tilde, z=z, h=h, eta=eta)
    return ExtendedState(theta_next, v_next, y_next, state.k + 1), trace


def _hyper(hyper: dict, key: str, default=None, required: bool = False):
    if required and key not in hyper:
        raise ConfigError(f"{key}: required hyperparameter is missing")
    return hyper.get(key, default)


def _as_schedule(value, name: str) -> Schedule:
    if isinstance(value, Schedule):
        return value
    try:
        return constant_schedule(float(value))
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number or a Schedule") from None


def make_preset(name: str, hyper: dict | None = None) -> RLOConfig:
    """Build a named optimizer configuration.

    sgd         raw gradient, eta = 1
    momentum    raw gradient with a partial lift (heavy-ball in disguise)
    adamw       blended moment rescaled by the adaptive sqrt(s)+eps metric,
                eta = 1, decoupled weight decay, no bias correction
    lion        sign of the blended moment, eta = 1
    rlo         sign of the blended moment plus belief term, eta = 1
    rlo_lambda  curvature-scaled tanh with global normalization, eta = 1
    rlo_lifted  tanh with global normalization and post-normalization belief
                term, partial lift (default eta = 0.7)

    hyper must supply "h"; optional keys: eta, beta1, beta2, beta3, gamma,
    lambda_b, epsilon, weight_decay, seed, plus Schedule objects for h/eta.
    """
    hyper = dict(hyper or {})
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown preset {name!r}")
    h_schedule = _as_schedule(_hyper(hyper, "h", required=True), "h")
    wd = float(_hyper(hyper, "weight_decay", 0.0))
    seed = int(_hyper(hyper, "seed", 0))
    manifold = _hyper(hyper, "manifold", EUCLIDEAN)

    def eta_sched(default: float) -> Schedule:
        return _as_schedule(_hyper(hyper, "eta", default), "eta")

    b1 = float(_hyper(hyper, "beta1", 0.9))
    b2 = float(_hyper(hyper, "beta2", 0.99))
    b3 = float(_hyper(hyper, "beta3", 0.999))
    gamma = float(_hyper(hyper, "gamma", 5.0))
    lam = float(_hyper(hyper, "lambda_b", 0.2))
    eps = float(_hyper(hyper, "epsilon", 1e-8))

    if name == "sgd":
        field = FieldSpec("raw_gradient", lambda_b=0.0, epsilon=eps)
        eta = eta_sched(1.0)
        cfg = RLOConfig(field, h_schedule, eta, manifold=manifold, weight_decay=wd, seed=seed)
    elif name == "momentum":
        field = FieldSpec("raw_gradient", lambda_b=0.0, epsilon=eps)
        eta = eta_sched(0.1)
        cfg = RLOConfig(field, h_schedule, eta, manifold=manifold, weight_decay=wd, seed=seed)
    elif name == "adamw":
        # beta1 == beta2 makes the blended moment equal the fresh first
        # moment, which is the standard (non-bias-corrected) behavior.
        field = FieldSpec(
            "momentum", beta1=b1, beta2=float(_hyper(hyper, "beta2", b1)),
            beta3=b3, lambda_b=0.0, epsilon=eps,
        )
        cfg = RLOConfig(
            field, h_schedule, eta_sched(1.0), manifold=manifold,
            weight_decay=wd, seed=seed, adaptive_metric=True,
        )
    elif name == "lion":
        field = FieldSpec("sign", beta1=b1, beta2=b2, lambda_b=0.0, epsilon=eps)
        cfg = RLOConfig(field, h_schedule, eta_sched(1.0), manifold=manifold, weight_decay=wd, seed=seed)
    elif name == "rlo":
        field = FieldSpec("sign_belief", beta1=b1, beta2=b2, lambda_b=lam, epsilon=eps)
        cfg = RLOConfig(field, h_schedule, eta_sched(1.0), manifold=manifold, weight_decay=wd, seed=seed)
    elif name == "rlo_lambda":
        field = FieldSpec(
            "tanh_adaptive", beta1=b1, beta2=b2, beta3=b3, gamma=gamma,
            lambda_b=0.0, epsilon=eps, global_normalize=True,
        )
        cfg = RLOConfig(field, h_schedule, eta_sched(1.0), manifold=manifold, weight_decay=wd, seed=seed)
    else:  # rlo_lifted
        field = FieldSpec(
            "tanh", beta1=b1, beta2=b2, gamma=gamma, lambda_b=lam,
            epsilon=eps, global_normalize=True,
        )
        cfg = RLOConfig(field, h_schedule, eta_sched(0.7), manifold=manifold, weight_decay=wd, seed=seed)

    validate_config(cfg)
    return cfg


@dataclass(frozen=True)
class TrajectorySummary:
    """Run outcome: final state, losses, and certificate inputs."""

    final_state: ExtendedState
    steps_run: int
    initial_f: float
    final_f: float
    best_f: float
    aborted: bool = False
    min_alignment: float | None = None
    f_star_mode: str = "analytic"


def _record_for_step(
    f_val, grad_exact, state_v, trace, step_metric, theta, lyap, f_star_eff
):
    grad_riem = riemannian_gradient(step_metric, Tangent(grad_exact, theta))
    grad_norm = math.sqrt(inner(step_metric, grad_riem, grad_riem))
    z_t = Tangent(trace.z, theta)
    z_norm = math.sqrt(inner(step_metric, z_t, z_t))
    v_val = lyapunov_value(
        f_val, replace(lyap, f_star=f_star_eff), z_t, trace.h, step_metric
    )
    d_t = Tangent(trace.d, theta)
    r, cos_vd, _ = tube_metrics(Tangent(state_v, theta), d_t, d_t, step_metric)
    return grad_riem, grad_norm, z_norm, v_val, r, cos_vd


def run_trajectory(
    cfg: RLOConfig,
    objective,
    steps: int,
    sink=None,
    lyapunov: LyapunovParams | None = None,
    theta0: Point | None = None,
) -> TrajectorySummary:
    """Drive the stepping loop, emitting one DiagnosticsRecord per step.

    The objective must expose eval_exact(point) -> (f, grad_coords),
    sample_gradient(point, k, seed) -> Tangent, f_star, and
    initial_point(seed). Gradients are sampled with the configured seed, so
    a rerun with identical (cfg, objective, steps) reproduces the trajectory
    exactly. The forcing of step k needs the direction of step k+1; the
    final record closes with one extra direction evaluation at the final
    state that does not advance it.
    """
    validate_config(cfg)
    if theta0 is None:
        theta0 = objective.initial_point(cfg.seed)
    if theta0.dim != objective.dim:
        raise ConfigError("objective: dimension does not match the start point")
    if lyapunov is None:
        lyapunov = LyapunovParams(alpha=1.0, f_star=getattr(objective, "f_star", None))
    f_star_mode = "analytic" if lyapunov.f_star is not None else "running_min"

    state = initial_state(cfg, theta0)
    f_cur, grad_cur = objective.eval_exact(state.theta)
    initial_f = best_f = f_cur
    running_min = f_cur
    min_alignment = None
    aborted = False
    pending = None  # (partial record fields, d, theta_from, theta_to, metric)

    def flush_pending(d_next_coords: np.ndarray | None, theta_now: Point):
        nonlocal pending
        if pending is None:
            return
        partial, d_prev, theta_from, theta_to, metric = pending
        if d_next_coords is None:
            delta = np.zeros(theta_now.dim)
        else:
            moved = transport(theta_from, theta_to, Tangent(d_prev, theta_from))
            delta = d_next_coords - moved.coords
        delta_t = Tangent(delta, theta_to)
        delta_norm = math.sqrt(inner(metric, delta_t, delta_t))
        d_t = Tangent(d_prev, theta_from)
        _, _, q_perp = tube_metrics(d_t, d_t, Tangent(delta, theta_from), metric)
        if sink is not None:
            sink.emit(DiagnosticsRecord(delta_norm=delta_norm, q_perp=q_perp, **partial))
        pending = None

    for k in range(steps):
        g = objective.sample_gradient(state.theta, k, cfg.seed)
        try:
            new_state, trace = rlo_step(state, g, cfg)
        except PoisonedGradientError:
            aborted = True
            break
        step_metric = (
            Metric("diagonal", np.sqrt(new_state.y.s) + cfg.field.epsilon)
            if cfg.adaptive_metric
            else cfg.metric
        )
        running_min = min(running_min, f_cur)
        f_star_eff = lyapunov.f_star if lyapunov.f_star is not None else running_min
        grad_riem, grad_norm, z_norm, v_val, r, cos_vd = _record_for_step(
            f_cur, grad_cur, state.v.coords, trace, step_metric, state.theta,
            lyapunov, f_star_eff,
        )
        gn2 = inner(step_metric, grad_riem, grad_riem)
        if gn2 > 1e-24:
            align = inner(step_metric, grad_riem, Tangent(trace.d, state.theta)) / gn2
            min_alignment = align if min_alignment is None else min(min_alignment, align)

        flush_pending(trace.d, state.theta)
        partial = dict(
            k=k, f_val=f_cur, grad_norm=grad_norm, z_norm=z_norm,
            V=v_val, r=r, cos_vd=cos_vd, h=trace.h, eta=trace.eta,
        )
        pending = (partial, trace.d, state.theta, new_state.theta, step_metric)

        state = new_state
        f_cur, grad_cur = objective.eval_exact(state.theta)
        best_f = min(best_f, f_cur)

    steps_run = state.k
    if pending is not None:
        d_final = None
        if not aborted:
            try:
                g = objective.sample_gradient(state.theta, steps_run, cfg.seed)
                g_vec = np.asarray(g.coords, dtype=np.float64)
                if np.all(np.isfinite(g_vec)):
                    d_final, _, _, _ = _direction(cfg, state.theta, state.y, g_vec)
            except Exception:
                d_final = None
        flush_pending(d_final, state.theta)

    return TrajectorySummary(
        final_state=state,
        steps_run=steps_run,
        initial_f=initial_f,
        final_f=f_cur,
        best_f=best_f,
        aborted=aborted,
        min_alignment=min_alignment,
        f_star_mode=f_star_mode,
    )
