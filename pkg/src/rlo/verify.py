"""Named verification suites behind the `verify` CLI command.

Each suite returns a list of CheckResult rows; a suite passes when every
row does. The suites are small, deterministic experiments: reference-
trajectory equivalence, residual contraction laws, gradient integrity,
the per-step descent certificate, and the noise-floor bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import (
    LyapunovParams,
    RecordSink,
    admissible_alpha_floor,
    check_descent_inequality,
    pl_constant,
    uub_floor,
    with_lyapunov,
)
from .engine import (
    ExtendedState,
    RLOConfig,
    constant_schedule,
    initial_state,
    make_preset,
    rlo_step,
    run_trajectory,
)
from .fields import FieldSpec, zero_state
from .geometry import Point, Tangent
from .reference import (
    adam_nobc_trajectory,
    heavyball_trajectory,
    lion_trajectory,
    sgd_trajectory,
)
from .testbed import (
    NoiseModel,
    QuadraticSpec,
    counter_rng,
    central_difference_gradient,
    logistic_eval,
    make_mlp,
    make_quadratic,
    make_two_gaussians,
    mlp_eval,
    quadratic_eval,
    random_spd,
    rayleigh_eval,
    rosenbrock_eval,
)

SUITE_NAMES = ("equivalence", "lyapunov", "contraction", "gradients", "uub")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def engine_trajectory(cfg: RLOConfig, objective, steps: int, theta0: Point) -> np.ndarray:
    """Step the engine and collect the visited parameter vectors."""
    state = initial_state(cfg, theta0)
    out = [state.theta.coords.copy()]
    for k in range(steps):
        g = objective.sample_gradient(state.theta, k, cfg.seed)
        state, _ = rlo_step(state, g, cfg)
        out.append(state.theta.coords.copy())
    return np.array(out)


def trajectory_rel_error(ours: np.ndarray, ref: np.ndarray, floor: float = 1e-15) -> float:
    """Largest per-coordinate relative deviation between two trajectories."""
    return float(np.max(np.abs(ours - ref) / (np.abs(ref) + floor)))


def _quadratic(dim=10, lambda_min=1.0, lambda_max=10.0, seed=7, noise=None):
    A = random_spd(dim, lambda_min, lambda_max, seed)
    spec = QuadraticSpec(A, np.zeros(dim))
    return make_quadratic(spec, noise or NoiseModel())


def suite_equivalence(steps: int = 100, tol: float = 1e-12) -> list[CheckResult]:
    """Presets must retrace the independent textbook loops on a quadratic."""
    objective = _quadratic(seed=7)
    theta0 = objective.initial_point(3)
    grad_fn = lambda t: objective.quadratic.A @ t  # noqa: E731

    cases = []
    ours = engine_trajectory(make_preset("sgd", {"h": 0.1}), objective, steps, theta0)
    ref = sgd_trajectory(grad_fn, theta0.coords, 0.1, steps)
    cases.append(("sgd == reference sgd", ours, ref))

    ours = engine_trajectory(
        make_preset("momentum", {"h": 1.0, "eta": 0.1}), objective, steps, theta0
    )
    ref = heavyball_trajectory(grad_fn, theta0.coords, lr=0.1, momentum=0.9, steps=steps)
    cases.append(("momentum == heavy-ball (lr=h*eta, mu=1-eta)", ours, ref))

    ours = engine_trajectory(
        make_preset("lion", {"h": 0.01, "weight_decay": 0.1}), objective, steps, theta0
    )
    ref = lion_trajectory(grad_fn, theta0.coords, 0.01, steps, weight_decay=0.1)
    cases.append(("lion == reference lion", ours, ref))

    ours = engine_trajectory(
        make_preset("adamw", {"h": 0.01, "weight_decay": 0.05}), objective, steps, theta0
    )
    ref = adam_nobc_trajectory(
        grad_fn, theta0.coords, 0.01, steps, beta1=0.9, beta2=0.999, weight_decay=0.05
    )
    cases.append(("adamw == reference adam (no bias correction)", ours, ref))

    results = []
    for name, ours, ref in cases:
        err = trajectory_rel_error(ours, ref)
        results.append(CheckResult(name, err <= tol, f"max rel err {err:.3e}"))
    return results


def frozen_field_ratios(eta: float, steps: int = 50, dim: int = 6) -> np.ndarray:
    """Residual norms under a frozen (zero) target: the pure contraction law.

    With d identically zero the velocity is the residual, and each step is
    an exact componentwise multiplication by (1 - eta).
    """
    cfg = RLOConfig(
        field=FieldSpec("raw_gradient", lambda_b=0.0),
        h_schedule=constant_schedule(0.05),
        eta_schedule=constant_schedule(eta),
    )
    theta = Point(np.zeros(dim))
    v0 = counter_rng(11, 0).standard_normal(dim)
    state = ExtendedState(theta, Tangent(v0, theta), zero_state(dim), 0)
    norms = []
    for _ in range(steps):
        norms.append(float(np.linalg.norm(state.v.coords)))  # d == 0, so z == v
        state, _ = rlo_step(state, Tangent(np.zeros(dim), state.theta), cfg)
    norms.append(float(np.linalg.norm(state.v.coords)))
    return np.array(norms)


def residual_inequality_violations(
    phi_kind: str, eta: float = 0.7, steps: int = 1000, sigma: float = 0.05,
    tol: float = 1e-9, seed: int = 5,
) -> tuple[int, int]:
    """Count violations of ||z_{k+1}||^2 <= (1-eta)||z_k||^2 + (1/eta)||delta_k||^2."""
    objective = _quadratic(seed=seed, noise=NoiseModel("gaussian", sigma=sigma, rng_seed=seed))
    field = FieldSpec(phi_kind, lambda_b=0.2, global_normalize=False)
    cfg = RLOConfig(
        field=field,
        h_schedule=constant_schedule(0.01),
        eta_schedule=constant_schedule(eta),
        seed=seed,
    )
    sink = RecordSink()
    run_trajectory(cfg, objective, steps, sink=sink)
    recs = sink.records
    bad = 0
    for cur, nxt in zip(recs[:-1], recs[1:]):
        bound = (1.0 - eta) * cur.z_norm**2 + (1.0 / eta) * cur.delta_norm**2 + tol
        if nxt.z_norm**2 > bound:
            bad += 1
    return bad, len(recs) - 1


def suite_contraction() -> list[CheckResult]:
    results = []
    for eta in (0.1, 0.5, 0.9):
        norms = frozen_field_ratios(eta)
        ratios = norms[1:] / norms[:-1]
        err = float(np.max(np.abs(ratios - (1.0 - eta))))
        results.append(
            CheckResult(
                f"frozen-field contraction, eta={eta}",
                err <= 1e-12,
                f"max |ratio - (1-eta)| = {err:.3e} over {len(ratios)} steps",
            )
        )
    for kind in ("raw_gradient", "momentum", "sign", "sign_belief", "tanh", "tanh_adaptive"):
        bad, total = residual_inequality_violations(kind, steps=400)
        results.append(
            CheckResult(
                f"stochastic residual inequality, {kind}",
                bad == 0,
                f"{bad}/{total} steps violated",
            )
        )
    return results


def _grad_check(name, value_fn, grad_fn, points, rel_tol=1e-5, step=1e-6):
    worst = 0.0
    for x in points:
        fd = central_difference_gradient(value_fn, x, step)
        g = grad_fn(x)
        err = float(np.linalg.norm(g - fd) / (np.linalg.norm(fd) + 1e-12))
        worst = max(worst, err)
    return CheckResult(name, worst <= rel_tol, f"worst rel err {worst:.3e} at {len(points)} points")


def suite_gradients(n_points: int = 20, seed: int = 13) -> list[CheckResult]:
    rng = counter_rng(seed, 0)
    results = []

    objective = _quadratic(dim=6, seed=seed)
    spec = objective.quadratic
    pts = [rng.standard_normal(6) for _ in range(n_points)]
    results.append(
        _grad_check(
            "quadratic gradient", lambda x: quadratic_eval(spec, x)[0],
            lambda x: quadratic_eval(spec, x)[1], pts,
        )
    )

    pts = [rng.standard_normal(5) * 0.8 for _ in range(n_points)]
    results.append(
        _grad_check(
            "rosenbrock gradient", lambda x: rosenbrock_eval(x)[0],
            lambda x: rosenbrock_eval(x)[1], pts,
        )
    )

    data = make_two_gaussians(64, separation=2.0, dim=3, seed=seed)
    pts = [rng.standard_normal(3) for _ in range(n_points)]
    results.append(
        _grad_check(
            "logistic gradient", lambda x: logistic_eval(data, x)[0],
            lambda x: logistic_eval(data, x)[1], pts,
        )
    )

    mlp = make_mlp(data, hidden=4)
    pts = [rng.standard_normal(mlp.dim) * 0.5 for _ in range(n_points)]
    results.append(
        _grad_check(
            "mlp gradient", lambda x: mlp_eval(x, data, mlp.arch)[0],
            lambda x: mlp_eval(x, data, mlp.arch)[1], pts,
        )
    )

    A = random_spd(5, 0.5, 4.0, seed)
    worst = 0.0
    for _ in range(n_points):
        x = rng.standard_normal(5)
        theta = Point(x / np.linalg.norm(x), "sphere")
        fd = central_difference_gradient(lambda u: float(u @ A @ u), theta.coords)
        fd_tan = fd - np.dot(fd, theta.coords) * theta.coords
        _, rgrad = rayleigh_eval(A, theta)
        err = float(np.linalg.norm(rgrad.coords - fd_tan) / (np.linalg.norm(fd_tan) + 1e-12))
        worst = max(worst, err)
    results.append(
        CheckResult("rayleigh tangential gradient", worst <= 1e-5, f"worst rel err {worst:.3e}")
    )
    return results


def lyapunov_experiment(
    steps: int = 150, dim: int = 10, h: float | None = None, seed: int = 21,
    preset: str = "rlo_lifted", sigma: float = 0.0,
):
    """Run a quadratic descent experiment and certify it.

    Returns (records with V recomputed at an admissible alpha, params, report).
    """
    noise = NoiseModel("gaussian", sigma=sigma, rng_seed=seed) if sigma > 0 else NoiseModel()
    objective = _quadratic(dim=dim, lambda_min=1.0, lambda_max=10.0, seed=seed, noise=noise)
    lam_max = 10.0
    h = 0.05 / lam_max if h is None else h
    cfg = make_preset(preset, {"h": h, "seed": seed})
    sink = RecordSink()
    summary = run_trajectory(cfg, objective, steps, sink=sink)
    eta = cfg.eta_schedule.peak

    mu_phi = 1.0 if cfg.field.phi_kind == "raw_gradient" else max(summary.min_alignment, 1e-6)
    alpha = 2.0 * admissible_alpha_floor(h, eta, mu_phi)
    params = LyapunovParams(
        alpha=alpha, f_star=0.0, mu_phi=mu_phi, mu_pl=pl_constant(objective.quadratic)
    )
    records = with_lyapunov(sink.records, alpha, 0.0)
    report = check_descent_inequality(records, params)
    return records, params, report, (h, eta)


def suite_lyapunov() -> list[CheckResult]:
    records, params, report, _ = lyapunov_experiment()
    results = [
        CheckResult(
            "descent certificate fraction 1.0 (noiseless quadratic, rlo_lifted)",
            report.satisfied_fraction >= 1.0,
            f"fraction {report.satisfied_fraction:.4f}, worst slack {report.worst_slack:.3e}",
        )
    ]
    v = np.array([r.V for r in records])
    drops = v[11:] - v[10:-1]
    worst = float(np.max(drops)) if drops.size else 0.0
    results.append(
        CheckResult(
            "Lyapunov value monotone after step 10",
            worst <= 1e-10,
            f"max V increase {worst:.3e}",
        )
    )
    return results


def uub_experiment(sigma: float, steps: int = 1200, seed: int = 17):
    objective = _quadratic(
        dim=10, seed=seed, noise=NoiseModel("gaussian", sigma=sigma, rng_seed=seed)
    )
    h = 0.005
    cfg = make_preset("sgd", {"h": h, "seed": seed})
    sink = RecordSink()
    run_trajectory(cfg, objective, steps, sink=sink)
    mu_pl = pl_constant(objective.quadratic)
    alpha = 2.0 * admissible_alpha_floor(h, 1.0, 1.0)
    params = LyapunovParams(alpha=alpha, f_star=0.0, mu_phi=1.0, mu_pl=mu_pl)
    records = with_lyapunov(sink.records, alpha, 0.0)
    tail = records[-(steps // 4):]
    return tail, params, h


def suite_uub() -> list[CheckResult]:
    results = []
    tail, params, h = uub_experiment(sigma=0.01)
    report = uub_floor(tail, params, h=h, eta=1.0)
    results.append(
        CheckResult(
            "tail V below the disturbance floor (noisy quadratic, sgd)",
            report.satisfied,
            f"max tail V {report.max_tail_V:.3e} vs floor {report.floor:.3e}, rho {report.rho:.3e}",
        )
    )
    sigmas = (0.01, 0.02, 0.04, 0.08)
    means = []
    for s in sigmas:
        tail, _, _ = uub_experiment(sigma=s)
        means.append(np.mean([r.V for r in tail]))
    slope = float(np.polyfit(np.log(sigmas), np.log(means), 1)[0])
    results.append(
        CheckResult(
            "tail-mean V scales like sigma^2",
            1.7 <= slope <= 2.3,
            f"log-log slope {slope:.3f}",
        )
    )
    return results


SUITES = {
    "equivalence": suite_equivalence,
    "lyapunov": suite_lyapunov,
    "contraction": suite_contraction,
    "gradients": suite_gradients,
    "uub": suite_uub,
}
