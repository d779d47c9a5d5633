import numpy as np
import pytest

from rlo.diagnostics import (
    DiagnosticsRecord,
    InadmissibleParametersError,
    LyapunovParams,
    RecordSink,
    admissible_alpha_floor,
    check_descent_inequality,
    forcing,
    lyapunov_value,
    pl_constant,
    residual,
    tube_metrics,
    uub_floor,
    with_lyapunov,
)
from rlo.engine import make_preset, run_trajectory
from rlo.geometry import Metric, Point, Tangent
from rlo.testbed import NoiseModel, QuadraticSpec, counter_rng, make_quadratic, random_spd
from rlo.verify import lyapunov_experiment, uub_experiment


def tangent(coords, base=None):
    base = base if base is not None else Point(np.zeros(len(coords)))
    return Tangent(np.asarray(coords, dtype=float), base)


def make_record(k=0, f_val=0.0, grad_norm=0.0, z_norm=0.0, delta_norm=0.0,
                V=0.0, r=0.0, cos_vd=0.0, q_perp=0.0, h=0.1, eta=1.0):
    return DiagnosticsRecord(k, f_val, grad_norm, z_norm, delta_norm, V, r, cos_vd, q_perp, h, eta)


def test_residual_examples():
    base = Point(np.zeros(2))
    v = tangent([1.0, 0.0], base)
    assert np.array_equal(residual(v, v).coords, [0.0, 0.0])
    d = tangent([0.0, 1.0], base)
    assert np.array_equal(residual(v, d).coords, [1.0, -1.0])


def test_forcing_examples():
    base = Point(np.zeros(2))
    assert np.array_equal(
        forcing(tangent([1.0, 1.0], base), tangent([1.0, 0.0], base)).coords, [0.0, 1.0]
    )
    same = tangent([0.3, -0.4], base)
    assert np.array_equal(forcing(same, same).coords, [0.0, 0.0])
    # one coordinate of a sign pattern flipping from -1 to +1
    flipped = forcing(tangent([1.0, 1.0], base), tangent([1.0, -1.0], base))
    assert np.array_equal(flipped.coords, [0.0, 2.0])


def test_lyapunov_value_examples():
    base = Point(np.zeros(2))
    p = LyapunovParams(alpha=0.5, f_star=0.0)
    assert lyapunov_value(0.0, p, tangent([0.0, 0.0], base), 0.1, Metric()) == 0.0
    assert lyapunov_value(2.5, p, tangent([0.0, 0.0], base), 0.1, Metric()) == 2.5
    z = tangent([0.2, 0.0], base)
    assert lyapunov_value(1.0, p, z, 0.1, Metric()) == pytest.approx(1.2)


def test_tube_metrics_identities():
    base = Point(np.zeros(2))
    d = tangent([1.0, 0.0], base)
    r, cos_vd, _ = tube_metrics(d, d, tangent([0.0, 0.0], base), Metric())
    assert r == pytest.approx(0.0, abs=1e-12)
    assert cos_vd == pytest.approx(1.0, abs=1e-9)
    _, cos_perp, _ = tube_metrics(tangent([0.0, 1.0], base), d, d, Metric())
    assert cos_perp == pytest.approx(0.0, abs=1e-12)
    _, _, q_along = tube_metrics(d, d, tangent([2.0, 0.0], base), Metric())
    assert q_along == pytest.approx(0.0, abs=1e-9)
    _, _, q_perp = tube_metrics(d, d, tangent([0.0, 2.0], base), Metric())
    assert q_perp == pytest.approx(1.0, abs=1e-9)


def test_tube_metrics_cosine_bounded():
    rng = counter_rng(12, 0)
    base = Point(np.zeros(4))
    for _ in range(200):
        v = tangent(rng.standard_normal(4) * 10.0 ** float(rng.integers(-8, 8)), base)
        d = tangent(rng.standard_normal(4) * 10.0 ** float(rng.integers(-8, 8)), base)
        _, cos_vd, q = tube_metrics(v, d, tangent(rng.standard_normal(4), base), Metric())
        assert -1.0 <= cos_vd <= 1.0
        assert 0.0 <= q <= 1.0 + 1e-12


def test_pl_constant_identity():
    assert pl_constant(np.eye(3)) == pytest.approx(1.0)


def test_pl_constant_diagonal_via_characteristic_polynomial():
    A = np.diag([1.0, 4.0])
    # 2x2 eigenvalues from the characteristic polynomial, independent route
    tr, det = A[0, 0] + A[1, 1], A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    lam_min = (tr - np.sqrt(tr**2 - 4 * det)) / 2
    assert pl_constant(A) == pytest.approx(lam_min, abs=1e-12)
    assert pl_constant(A) == pytest.approx(1.0)


def test_pl_constant_coupled_via_characteristic_polynomial():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    tr, det = 4.0, 3.0
    lam_min = (tr - np.sqrt(tr**2 - 4 * det)) / 2
    assert pl_constant(A) == pytest.approx(lam_min, abs=1e-12)
    assert pl_constant(A) == pytest.approx(1.0)


def test_pl_constant_rejects_non_spd():
    with pytest.raises(ValueError):
        pl_constant(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        pl_constant(np.diag([1.0, -0.5]))


def test_pl_inequality_tight_on_quadratics():
    # 0.5*||A(t - t*)||^2 >= mu_pl * f with equality along the bottom eigenvector.
    rng = counter_rng(14, 0)
    A = random_spd(5, 1.0, 10.0, seed=14)
    spec = QuadraticSpec(A, np.zeros(5))
    mu = pl_constant(spec)
    for _ in range(1000):
        t = rng.standard_normal(5) * 3
        grad = A @ t
        f = 0.5 * t @ grad
        assert 0.5 * grad @ grad - mu * f >= -1e-12
    w, U = np.linalg.eigh(A)
    t = U[:, 0] * 2.0
    grad = A @ t
    assert 0.5 * grad @ grad == pytest.approx(mu * (0.5 * t @ grad), rel=1e-12)


def test_check_descent_single_record_at_stationary_point():
    rec = make_record()
    p = LyapunovParams(alpha=1.0, f_star=0.0, mu_phi=1.0)
    report = check_descent_inequality([rec], p)
    assert report.satisfied_fraction == 1.0
    assert report.worst_slack == 0.0


def test_check_descent_flags_adversarial_violation():
    # A large residual that fails to contract must be reported.
    p = LyapunovParams(alpha=1.0, f_star=0.0, mu_phi=1.0)
    good = make_record(k=0, z_norm=1.0, V=10.0)
    bad = make_record(k=1, z_norm=1.0, V=1e6)
    report = check_descent_inequality([good, bad], p)
    assert report.satisfied_fraction < 1.0
    assert not report.satisfied
    assert report.worst_slack < -1e-9


def test_check_descent_requires_admissible_alpha():
    recs = [make_record(h=1.0, eta=0.5), make_record(k=1, h=1.0, eta=0.5)]
    with pytest.raises(InadmissibleParametersError):
        check_descent_inequality(recs, LyapunovParams(alpha=0.5, f_star=0.0, mu_phi=1.0))


def test_check_descent_empty_and_missing_mu():
    p = LyapunovParams(alpha=1.0, f_star=0.0, mu_phi=1.0)
    with pytest.raises(ValueError):
        check_descent_inequality([], p)
    with pytest.raises(InadmissibleParametersError):
        check_descent_inequality([make_record()], LyapunovParams(alpha=1.0, f_star=0.0))


def test_descent_certificate_on_noiseless_quadratic_sgd():
    obj = make_quadratic(QuadraticSpec(random_spd(6, 1.0, 8.0, seed=3), np.zeros(6)))
    h = 0.01
    cfg = make_preset("sgd", {"h": h, "seed": 3})
    sink = RecordSink()
    run_trajectory(cfg, obj, 200, sink=sink)
    alpha = 2.0 * admissible_alpha_floor(h, 1.0, 1.0)
    p = LyapunovParams(alpha=alpha, f_star=0.0, mu_phi=1.0)
    report = check_descent_inequality(with_lyapunov(sink.records, alpha, 0.0), p)
    assert report.satisfied_fraction == 1.0


def test_lyapunov_experiment_descends():
    records, params, report, _ = lyapunov_experiment(steps=150)
    assert report.satisfied_fraction == 1.0
    v = np.array([r.V for r in records])
    assert np.all(np.diff(v[10:]) <= 1e-10)
    assert all(r.V >= 0.0 for r in records)


def test_uub_floor_satisfied_on_noisy_quadratic():
    tail, params, h = uub_experiment(sigma=0.02, steps=800)
    report = uub_floor(tail, params, h=h, eta=1.0)
    assert report.satisfied
    assert 0.0 < report.rho < 1.0


def test_uub_floor_noiseless_converged_run():
    # With no disturbance both sides shrink together and the bound holds.
    obj = make_quadratic(QuadraticSpec(random_spd(6, 1.0, 8.0, seed=19), np.zeros(6)))
    h = 0.005
    cfg = make_preset("sgd", {"h": h, "seed": 19})
    sink = RecordSink()
    run_trajectory(cfg, obj, 1200, sink=sink)
    p = LyapunovParams(alpha=1.0, f_star=0.0, mu_phi=1.0, mu_pl=pl_constant(obj.quadratic))
    tail = with_lyapunov(sink.records, 1.0, 0.0)[-300:]
    report = uub_floor(tail, p, h=h, eta=1.0)
    assert report.satisfied
    assert report.floor < 1e-3  # both sides have nearly vanished
    assert report.max_tail_V < report.floor


def test_uub_floor_window_too_short():
    tail, params, h = uub_experiment(sigma=0.02, steps=800)
    with pytest.raises(ValueError):
        uub_floor(tail[:1], params, h=h, eta=1.0)


def test_uub_floor_inadmissible_rho():
    # Both contraction branches exceed 1 here, so no valid linear rate exists.
    recs = [make_record(h=0.4, eta=1.0) for _ in range(100)]
    p = LyapunovParams(alpha=1.0, f_star=0.0, mu_phi=1.0, mu_pl=10.0)
    with pytest.raises(InadmissibleParametersError):
        uub_floor(recs, p, h=0.4, eta=1.0)


def test_noise_floor_scaling_slope_two():
    sigmas = (0.01, 0.02, 0.04, 0.08)
    means = []
    for s in sigmas:
        tail, _, _ = uub_experiment(sigma=s, steps=800)
        means.append(np.mean([r.V for r in tail]))
    slope = np.polyfit(np.log(sigmas), np.log(means), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.3)


def test_v_nonnegative_with_running_min_estimate():
    obj = make_quadratic(
        QuadraticSpec(random_spd(4, 1.0, 5.0, seed=8), np.zeros(4)),
        NoiseModel("gaussian", sigma=0.05, rng_seed=8),
    )
    cfg = make_preset("rlo", {"h": 0.02, "seed": 8})
    sink = RecordSink()
    summary = run_trajectory(
        cfg, obj, 100, sink=sink, lyapunov=LyapunovParams(alpha=1.0, f_star=None)
    )
    assert summary.f_star_mode == "running_min"
    assert all(rec.V >= 0.0 for rec in sink.records)


def test_record_sink_preserves_order():
    sink = RecordSink()
    for k in range(5):
        sink.emit(make_record(k=k))
    assert [r.k for r in sink.records] == list(range(5))
