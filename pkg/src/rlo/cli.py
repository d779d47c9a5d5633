"""Command-line front end: run experiments, ablation grids, and check suites.

Commands:
    rlo run    --config exp.toml [--out DIR] [--seed N] [--quiet]
    rlo ablate --config exp.toml --grid grid.toml [--out DIR] [--seed N]
    rlo verify <suite> [--quiet]

Configs are TOML. `run` writes <out>/trace.csv (one diagnostics row per
step, thinned by run.log_every) and <out>/summary.txt. `ablate` writes
<out>/grid.csv plus <out>/pivot.txt. The RLO_OUT environment variable
provides the default output directory. Exit codes: 0 success, 2 validation
error, 3 poisoned gradient.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .diagnostics import (
    CSV_COLUMNS,
    InadmissibleParametersError,
    LyapunovParams,
    RecordSink,
    check_descent_inequality,
    pl_constant,
    uub_floor,
    with_lyapunov,
)
from .engine import (
    ConfigError,
    RLOConfig,
    Schedule,
    constant_schedule,
    make_preset,
    run_trajectory,
    validate_config,
)
from .fields import FieldError, FieldSpec
from .geometry import GeometryError, Metric, Point
from .testbed import (
    DatasetFormatError,
    NoiseModel,
    QuadraticSpec,
    load_dataset_csv,
    make_logistic,
    make_mlp,
    make_quadratic,
    make_rayleigh,
    make_rosenbrock,
    make_two_gaussians,
    random_spd,
)
from .verify import SUITE_NAMES, SUITES

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_POISONED = 3

_GRID_CAP_DEFAULT = 256


def _fmt(value) -> str:
    """CSV cell: 17 significant digits for floats, so rows round-trip."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _resolve_out(arg_out) -> Path:
    out = arg_out or os.environ.get("RLO_OUT") or "rlo_out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def build_noise(noise_cfg: dict, seed: int) -> NoiseModel:
    kind = noise_cfg.get("kind", "none")
    try:
        return NoiseModel(
            kind=kind,
            sigma=float(noise_cfg.get("sigma", 0.0)),
            batch_size=int(noise_cfg.get("batch_size", 0)),
            rng_seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"objective.noise: {exc}") from None


def build_dataset(ds_cfg: dict, seed: int):
    if "path" in ds_cfg:
        return load_dataset_csv(ds_cfg["path"])
    synthetic = ds_cfg.get("synthetic", "two_gaussians")
    if synthetic != "two_gaussians":
        raise ConfigError(f"objective.dataset.synthetic: unknown generator {synthetic!r}")
    return make_two_gaussians(
        n=int(ds_cfg.get("n", 256)),
        separation=float(ds_cfg.get("separation", 3.0)),
        dim=int(ds_cfg.get("dim", 2)),
        seed=int(ds_cfg.get("seed", seed)),
    )


def build_objective(obj_cfg: dict, seed: int):
    kind = obj_cfg.get("kind")
    noise = build_noise(obj_cfg.get("noise", {}), seed)
    if kind == "quadratic":
        dim = int(obj_cfg.get("dim", 10))
        A = random_spd(
            dim,
            float(obj_cfg.get("lambda_min", 1.0)),
            float(obj_cfg.get("lambda_max", 10.0)),
            seed,
        )
        return make_quadratic(QuadraticSpec(A, np.zeros(dim)), noise)
    if kind == "rosenbrock":
        return make_rosenbrock(int(obj_cfg.get("dim", 2)), noise)
    if kind == "logistic":
        return make_logistic(build_dataset(obj_cfg.get("dataset", {}), seed), noise)
    if kind == "mlp":
        dataset = build_dataset(obj_cfg.get("dataset", {}), seed)
        return make_mlp(dataset, hidden=int(obj_cfg.get("hidden", 16)), noise=noise)
    if kind == "rayleigh_sphere":
        dim = int(obj_cfg.get("dim", 5))
        A = random_spd(
            dim,
            float(obj_cfg.get("lambda_min", 1.0)),
            float(obj_cfg.get("lambda_max", 10.0)),
            seed,
        )
        return make_rayleigh(A, noise)
    raise ConfigError(f"objective.kind: unknown objective {kind!r}")


def _build_schedule(value, block: dict | None, steps: int, name: str) -> Schedule:
    if block:
        kind = block.get("kind", "constant")
        return Schedule(
            kind=kind,
            peak=float(block.get("peak", value if value is not None else 0.0)),
            total_steps=int(block.get("total_steps", steps)),
            warmup_steps=int(block.get("warmup_steps", 0)),
            floor=float(block.get("floor", 0.0)),
        )
    if value is None:
        raise ConfigError(f"optimizer.{name}: required value is missing")
    return constant_schedule(float(value))


def build_optimizer(opt_cfg: dict, steps: int, seed: int, manifold: str) -> RLOConfig:
    hyper_keys = ("beta1", "beta2", "beta3", "gamma", "lambda_b", "epsilon")
    if "preset" in opt_cfg:
        hyper = {k: opt_cfg[k] for k in hyper_keys if k in opt_cfg}
        hyper["h"] = _build_schedule(
            opt_cfg.get("h"), opt_cfg.get("h_schedule"), steps, "h"
        )
        if "eta" in opt_cfg or "eta_schedule" in opt_cfg:
            hyper["eta"] = _build_schedule(
                opt_cfg.get("eta"), opt_cfg.get("eta_schedule"), steps, "eta"
            )
        hyper["weight_decay"] = opt_cfg.get("weight_decay", 0.0)
        hyper["seed"] = seed
        hyper["manifold"] = manifold
        return make_preset(opt_cfg["preset"], hyper)

    field_cfg = opt_cfg.get("field")
    if not field_cfg:
        raise ConfigError("optimizer: needs either a preset or a [optimizer.field] table")
    try:
        field = FieldSpec(
            phi_kind=field_cfg.get("phi_kind", "raw_gradient"),
            gamma=float(field_cfg.get("gamma", 5.0)),
            lambda_b=float(field_cfg.get("lambda_b", 0.2)),
            beta1=float(field_cfg.get("beta1", 0.9)),
            beta2=float(field_cfg.get("beta2", 0.99)),
            beta3=float(field_cfg.get("beta3", 0.999)),
            epsilon=float(field_cfg.get("epsilon", 1e-8)),
            global_normalize=bool(field_cfg.get("global_normalize", False)),
        )
    except FieldError as exc:
        raise ConfigError(f"optimizer.field: {exc}") from None
    metric_cfg = opt_cfg.get("metric", {})
    if "weights" in metric_cfg:
        metric = Metric("diagonal", np.asarray(metric_cfg["weights"], dtype=float))
    else:
        metric = Metric()
    cfg = RLOConfig(
        field=field,
        h_schedule=_build_schedule(opt_cfg.get("h"), opt_cfg.get("h_schedule"), steps, "h"),
        eta_schedule=_build_schedule(
            opt_cfg.get("eta", 1.0), opt_cfg.get("eta_schedule"), steps, "eta"
        ),
        metric=metric,
        manifold=manifold,
        weight_decay=float(opt_cfg.get("weight_decay", 0.0)),
        seed=seed,
        adaptive_metric=bool(opt_cfg.get("adaptive_metric", False)),
    )
    validate_config(cfg)
    return cfg


def _experiment_from_config(config: dict, seed_override: int | None):
    run_cfg = config.get("run", {})
    steps = int(run_cfg.get("steps", 100))
    if steps < 0:
        raise ConfigError("run.steps: must be nonnegative")
    seed = int(seed_override if seed_override is not None else run_cfg.get("seed", 0))
    log_every = int(run_cfg.get("log_every", 1))
    if log_every < 1:
        raise ConfigError("run.log_every: must be >= 1")

    objective = build_objective(config.get("objective", {}), seed)
    cfg = build_optimizer(
        config.get("optimizer", {}), steps, seed, objective.manifold
    )

    theta0 = None
    if "theta0" in run_cfg:
        coords = np.asarray(run_cfg["theta0"], dtype=float)
        if coords.size != objective.dim:
            raise ConfigError("run.theta0: dimension does not match the objective")
        theta0 = Point(coords, objective.manifold)

    diag_cfg = config.get("diagnostics", {})
    alpha = float(diag_cfg.get("alpha", 1.0))
    f_star_mode = diag_cfg.get("f_star_mode", "analytic")
    if f_star_mode not in ("analytic", "running_min"):
        raise ConfigError("diagnostics.f_star_mode: must be 'analytic' or 'running_min'")
    f_star = objective.f_star if f_star_mode == "analytic" else None
    lyap = LyapunovParams(alpha=alpha, f_star=f_star)
    certificates = bool(diag_cfg.get("certificates", False))
    return objective, cfg, steps, log_every, theta0, lyap, certificates, f_star_mode


def _run_cell(config: dict, seed_override: int | None):
    objective, cfg, steps, log_every, theta0, lyap, certificates, f_star_mode = (
        _experiment_from_config(config, seed_override)
    )
    sink = RecordSink()
    summary = run_trajectory(
        cfg, objective, steps, sink=sink, lyapunov=lyap, theta0=theta0
    )
    return objective, cfg, summary, sink.records, log_every, lyap, certificates, f_star_mode


def _write_trace(path: Path, records, log_every: int) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for rec in records:
            if rec.k % log_every != 0:
                continue
            fh.write(",".join(_fmt(v) for v in rec.as_row()) + "\n")


def _certificate_lines(objective, cfg, summary, records, lyap, f_star_mode) -> list[str]:
    lines = []
    advisory = f_star_mode == "running_min"
    mu_phi = 1.0 if cfg.field.phi_kind == "raw_gradient" else None
    if mu_phi is None:
        if summary.min_alignment is None:
            lines.append("certificates: skipped (no alignment data)")
            return lines
        mu_phi = max(summary.min_alignment, 1e-6)
    f_star = lyap.f_star if lyap.f_star is not None else min(r.f_val for r in records)
    params = LyapunovParams(
        alpha=lyap.alpha,
        f_star=f_star,
        mu_phi=mu_phi,
        mu_pl=pl_constant(objective.quadratic) if objective.kind == "quadratic" else None,
    )
    recs = with_lyapunov(records, lyap.alpha, f_star)
    try:
        report = check_descent_inequality(recs, params, advisory=advisory)
    except InadmissibleParametersError as exc:
        lines.append(f"descent certificate: inadmissible ({exc})")
        return lines
    tag = " [advisory]" if advisory else ""
    lines.append(
        f"descent certificate{tag}: fraction {report.satisfied_fraction:.6f}, "
        f"worst slack {report.worst_slack:.6e}, mu_phi {mu_phi:.6e}"
    )
    if params.mu_pl is not None and len(recs) >= 400:
        tail = recs[-(len(recs) // 4):]
        h = cfg.h_schedule.peak
        eta = cfg.eta_schedule.peak
        try:
            ub = uub_floor(tail, params, h=h, eta=eta)
            lines.append(
                f"noise floor{tag}: satisfied={ub.satisfied} "
                f"(max tail V {ub.max_tail_V:.6e}, floor {ub.floor:.6e}, rho {ub.rho:.6e})"
            )
        except (InadmissibleParametersError, ValueError) as exc:
            lines.append(f"noise floor: not evaluated ({exc})")
    return lines


def cmd_run(args) -> int:
    out = _resolve_out(args.out)
    try:
        config = _load_toml(args.config)
        objective, cfg, summary, records, log_every, lyap, certificates, _ = (
            _run_cell(config, args.seed)
        )
    except (ConfigError, FieldError, GeometryError, DatasetFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (tomllib.TOMLDecodeError, OSError) as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    _write_trace(out / "trace.csv", records, log_every)
    lines = [
        f"objective: {objective.kind} (dim {objective.dim}, noise {objective.noise.kind})",
        f"optimizer: {cfg.field.phi_kind}"
        + (" + global_normalize" if cfg.field.global_normalize else ""),
        f"manifold: {cfg.manifold}",
        f"steps: {summary.steps_run}",
        f"seed: {cfg.seed}",
        f"initial loss: {_fmt(summary.initial_f)}",
        f"best loss: {_fmt(summary.best_f)}",
        f"final loss: {_fmt(summary.final_f)}",
        f"f_star mode: {summary.f_star_mode}",
        f"aborted: {summary.aborted}",
    ]
    if certificates and records:
        lines += _certificate_lines(objective, cfg, summary, records, lyap, summary.f_star_mode)
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if not args.quiet:
        for line in lines:
            print(line)
    if summary.aborted:
        print("error: gradient turned non-finite; aborted", file=sys.stderr)
        return EXIT_POISONED
    return EXIT_OK


def _set_by_path(config: dict, path: str, value) -> None:
    keys = path.split(".")
    node = config
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


def _tail_mean(values, fraction=0.25) -> float:
    if not values:
        return float("nan")
    n = max(1, int(len(values) * fraction))
    return float(np.mean(values[-n:]))


def cmd_ablate(args) -> int:
    out = _resolve_out(args.out)
    try:
        config = _load_toml(args.config)
        grid = _load_toml(args.grid)
        axes = grid.get("axes", [])
        for axis in axes:
            if "path" not in axis or "values" not in axis or not axis["values"]:
                raise ConfigError("grid.axes: each axis needs a path and nonempty values")
        cap = int(grid.get("cap", _GRID_CAP_DEFAULT))
        n_cells = 1
        for axis in axes:
            n_cells *= len(axis["values"])
        if n_cells > cap:
            raise ConfigError(f"grid: {n_cells} cells exceed the cap of {cap}")
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (tomllib.TOMLDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    paths = [axis["path"] for axis in axes]
    combos = list(itertools.product(*[axis["values"] for axis in axes])) or [()]

    def run_one(combo):
        cell_cfg = copy.deepcopy(config)
        for path, value in zip(paths, combo):
            _set_by_path(cell_cfg, path, value)
        _, _, summary, records, _, _, _, _ = _run_cell(cell_cfg, args.seed)
        z_tail = _tail_mean([r.z_norm for r in records])
        cos_mean = float(np.mean([r.cos_vd for r in records])) if records else float("nan")
        return summary, z_tail, cos_mean

    try:
        with ThreadPoolExecutor(max_workers=min(8, len(combos))) as pool:
            results = list(pool.map(run_one, combos))
    except (ConfigError, FieldError, GeometryError, DatasetFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    header = paths + ["best_loss", "final_loss", "mean_tail_z_norm", "mean_cos_vd"]
    with open(out / "grid.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for combo, (summary, z_tail, cos_mean) in zip(combos, results):
            row = [_fmt(v) for v in combo]
            row += [_fmt(summary.best_f), _fmt(summary.final_f), _fmt(z_tail), _fmt(cos_mean)]
            fh.write(",".join(row) + "\n")

    pivot_lines = [" | ".join(paths + ["final_loss"])] if paths else ["final_loss"]
    for combo, (summary, _, _) in zip(combos, results):
        cells = [str(v) for v in combo] + [f"{summary.final_f:.6g}"]
        pivot_lines.append(" | ".join(cells))
    (out / "pivot.txt").write_text("\n".join(pivot_lines) + "\n", encoding="utf-8")
    if not args.quiet:
        print(f"{len(combos)} cells -> {out / 'grid.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        print(
            f"error: unknown suite {args.suite!r}; choose from {', '.join(SUITE_NAMES)}",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    results = SUITES[args.suite]()
    all_ok = True
    for res in results:
        all_ok &= res.passed
        if not args.quiet or not res.passed:
            print(f"{'PASS' if res.passed else 'FAIL'}  {res.name}  ({res.detail})")
    return EXIT_OK if all_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rlo", description="Lifted-optimizer experiments and diagnostics."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one configured experiment")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--out", default=None)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--quiet", action="store_true")
    run_p.set_defaults(func=cmd_run)

    ab_p = sub.add_parser("ablate", help="run a grid of experiment cells")
    ab_p.add_argument("--config", required=True)
    ab_p.add_argument("--grid", required=True)
    ab_p.add_argument("--out", default=None)
    ab_p.add_argument("--seed", type=int, default=None)
    ab_p.add_argument("--quiet", action="store_true")
    ab_p.set_defaults(func=cmd_ablate)

    ver_p = sub.add_parser("verify", help="run a named invariant suite")
    ver_p.add_argument("suite")
    ver_p.add_argument("--quiet", action="store_true")
    ver_p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
