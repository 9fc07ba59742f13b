"""Acceptance suite: one verdict line per criterion, printed even under capture.

Run ``pytest tests/test_acceptance.py -v`` and read the ``criterion N:`` lines.
Slow (a few minutes); every test is marked ``acceptance``.
"""

import math
import time

import numpy as np
import pytest

from compgrad import composite as cp
from compgrad import estimators as est
from compgrad import harness, ivwh, stats
from compgrad.envs import REGISTRY, BallWithWall, CenteredQuadratic, Quadratic, Sigmoid, gradcheck, make_env

pytestmark = pytest.mark.acceptance

TABLE1 = {  # d: (CoV_DDCG, CoV_AoBG)
    1: (4.49e-2, 4.47e-2),
    16: (1.11e-2, 1.30e-1),
    64: (5.56e-3, 2.55e-1),
    128: (3.90e-3, 3.59e-1),
}


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return report


def _rel(a, b):
    return abs(a - b) / abs(b)


@pytest.fixture(scope="module")
def table1():
    t0 = time.perf_counter()
    reports = harness.table1_experiment(n=1000, m=10_000, sigma=1.0, seed=0, dims=tuple(TABLE1))
    return {r.d: r for r in reports}, time.perf_counter() - t0


def test_c01_table1(table1, verdict):
    rows, wall = table1
    worst_cell = max(_rel(getattr(rows[d], k), ref[i]) for d, ref in TABLE1.items()
                     for i, k in enumerate(("cov_ddcg", "cov_aobg")))
    worst_ratio = max(_rel(rows[d].ratio, ref[1] / ref[0]) for d, ref in TABLE1.items())
    ok = worst_cell <= 0.10 and worst_ratio <= 0.15 and wall < 120
    cells = " ".join(f"d={d}:{r.cov_ddcg:.3g}/{r.cov_aobg:.3g}" for d, r in rows.items())
    assert verdict(1, ok, f"max cell err {worst_cell:.3f}, max ratio err {worst_ratio:.3f}, "
                          f"{wall:.0f}s  [{cells}]")


def test_c02_closed_form_cov(table1, verdict):
    rows, _ = table1
    n = 1000
    errs = {}
    for d, r in rows.items():
        errs[d] = (_rel(r.cov_ddcg, math.sqrt(2 / (n * d))), _rel(r.cov_aobg, math.sqrt(d / n)))
    worst = max(max(e) for e in errs.values())
    detail = " ".join(f"d={d}:{a:.3f}/{b:.3f}" for d, (a, b) in errs.items())
    assert verdict(2, worst <= 0.10, f"relative errors ddcg/aobg {detail}")


def test_c03_harmonic_variance(verdict):
    rng = np.random.default_rng(3)
    trials = 100_000
    x0 = rng.normal(0.0, 2.0, trials)
    x1 = rng.normal(0.0, 1.0, trials)
    alpha = cp.ivw_alpha(4.0, 1.0)
    mixed = alpha * x1 + (1.0 - alpha) * x0
    v = float(np.var(mixed, ddof=1))
    assert verdict(3, _rel(v, 0.8) <= 0.05, f"alpha={alpha:.3f} variance {v:.4f} vs 0.8")


def test_c04_gradcheck(verdict):
    t0 = time.perf_counter()
    worst = {}
    for name in REGISTRY:
        worst[name] = gradcheck(make_env(name), n_points=100, seed=0).max_rel_error
    wall = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-5 and wall < 30
    assert verdict(4, ok, f"max rel error {max(worst.values()):.2e} over {len(worst)} envs, {wall:.1f}s")


def test_c05_unbiased(frozen, verdict):
    n = 1_000_000
    cases = [
        ("quadratic", Quadratic(), 1.5, 3.0),
        ("sigmoid T=1", Sigmoid(1.0), 0.0, frozen["sigmoid_T1_theta0"]["grad"]),
        ("sigmoid T=1 theta=1", Sigmoid(1.0), 1.0, frozen["sigmoid_T1_theta1"]["grad"]),
    ]
    parts, ok = [], True
    for label, obj, theta, exact in cases:
        dist = est.SmoothingDistribution([theta], 1.0)
        batch = est.sample_batch(dist, obj, n, 5)
        samples = est.zeroth_order_samples(batch, dist)[:, 0]
        z = (samples.mean() - exact) / (samples.std(ddof=1) / math.sqrt(n))
        ok &= abs(z) <= 3
        parts.append(f"{label}: z={z:+.2f}")
    assert verdict(5, ok, ", ".join(parts))


def test_c06_two_point_law(verdict):
    g, p = 2.0, 0.1
    x = stats.sample_two_point(g, p, 10_000_000, 6)
    analytic = stats.two_point_gradient_variance(g, p)
    mc = float(np.var(x, ddof=1))
    assert verdict(6, _rel(mc, analytic) <= 0.03, f"analytic {analytic:.4f}, MC {mc:.4f}")


def _gate(obj, theta, sigma, n, seed, c, delta=0.05):
    dist = est.SmoothingDistribution(theta, sigma)
    batch = est.sample_batch(dist, obj, n, seed)
    return cp.ddcg_test(batch, est.estimate_g1(batch), dist, c, delta)[0]


def test_c07_ddcg_gate(verdict):
    # (a) exact quadratic at its minimizer, 64 dimensions
    dim = 64
    obj = CenteredQuadratic(dim=dim)
    rate_a = np.mean([_gate(obj, np.zeros(dim), 1.0, 10_000, (7, t), 0.0) for t in range(1000)])
    # (b) near-step sigmoid
    fail_b = 1.0 - np.mean([_gate(Sigmoid(1e-4), [1.0], 1.0, 100, (8, t), 0.3) for t in range(1000)])
    # (c) c = 1 reduces to IVW on the same batch
    same = True
    for t in range(200):
        dist = est.SmoothingDistribution([0.9], 0.1)
        batch = est.sample_batch(dist, BallWithWall(), 200, (9, t))
        g0, g1 = est.estimate_g0(batch, dist), est.estimate_g1(batch)
        a = cp.mix(cp.MixPolicy.ddcg(c=1.0), g0, g1, batch, dist)
        b = cp.mix(cp.MixPolicy.ivw(), g0, g1)
        same &= a.gradient.tobytes() == b.gradient.tobytes() and a.alpha == b.alpha
    # (d) pass decision monotone in c for fixed batches
    cs = np.linspace(0.0, 1.0, 21)
    monotone = True
    for t in range(200):
        dist = est.SmoothingDistribution([0.75], 0.1)
        batch = est.sample_batch(dist, BallWithWall(), 100, (10, t))
        g1 = est.estimate_g1(batch)
        passes = [cp.ddcg_test(batch, g1, dist, c, 0.05)[0] for c in cs]
        monotone &= all(not p or q for p, q in zip(passes, passes[1:]))
    ok = rate_a >= 1 - 0.05 - 0.03 and fail_b > 0.5 and same and monotone
    assert verdict(7, ok, f"(a) pass rate {rate_a:.3f} (b) fail rate {fail_b:.3f} "
                          f"(c) bit-exact {same} (d) monotone {monotone}")


def test_c08_empirical_bias(frozen, verdict):
    exact = frozen["sigmoid_T1e-5_theta1"]["grad"]
    dist = est.SmoothingDistribution([1.0], 1.0)
    ratios = []
    for t in range(1000):
        g1 = est.estimate_g1(est.sample_batch(dist, Sigmoid(1e-5), 10, (11, t)))
        err2 = float(g1.mean[0] - exact) ** 2
        v_mean = g1.var_scalar / g1.n
        ratios.append(err2 / v_mean if v_mean > 0 else math.inf)
    med = float(np.median(ratios))
    finite = [r for r in ratios if math.isfinite(r)]
    detail = (f"median (error^2 / estimated variance of mean) = {med:.3g}; "
              f"{1 - len(finite) / len(ratios):.1%} of batches report zero variance")
    if finite:
        detail += f", median over the rest {np.median(finite):.3g}"
    assert verdict(8, med >= 10, detail)


@pytest.fixture(scope="module")
def ball_landscape():
    cfg = harness.load_config("ball_with_wall_landscape_1000", trials=200, oracle="quadrature",
                              estimators=["zeroth", "first", "ivw", "ddcg:c=0.3"])
    recs = harness.landscape_sweep(cfg, cache_dir=False)
    by = {}
    for r in recs:
        by.setdefault(round(r.x, 12), {})[r.estimator] = r
    return cfg, by


def test_c09_ball_landscape(ball_landscape, verdict):
    cfg, by = ball_landscape
    env = BallWithWall()
    locus = env.grazing_angles[0]
    near = [x for x in by if abs(x - locus) <= cfg.sigma]
    # smooth: no jump or kink within two smoothing widths
    smooth = [x for x in by if min(abs(x - g) for g in env.discontinuities) >= 2 * cfg.sigma]
    discontinuous = [x for x in by if min(abs(x - g) for g in env.grazing_angles) <= 2 * cfg.sigma]
    a_near = max(by[x]["ddcg"].alpha_mean for x in near)
    x_min = min(smooth, key=lambda x: by[x]["ddcg"].alpha_mean)
    a_smooth = by[x_min]["ddcg"].alpha_mean
    ratio_dd = {x: by[x]["ddcg"].sqrt_error / by[x]["zeroth"].sqrt_error for x in by}
    ratio_ivw = max(by[x]["ivw"].sqrt_error / by[x]["zeroth"].sqrt_error for x in discontinuous)
    worst_x = max(ratio_dd, key=ratio_dd.get)
    ok = a_near < 0.1 and a_smooth > 0.9 and ratio_dd[worst_x] <= 2.0 and ratio_ivw > 5.0
    over = ", ".join(f"{x:.2f}:{r:.2f}" for x, r in sorted(ratio_dd.items()) if r > 2.0) or "none"
    assert verdict(9, ok, f"alpha near grazing max {a_near:.3f}, smooth ({len(smooth)} pts) min {a_smooth:.3f} at {x_min:.2f}; "
                          f"DDCG/0th max {ratio_dd[worst_x]:.2f} at {worst_x:.2f} (>2x at {over}); "
                          f"IVW/0th max {ratio_ivw:.1f}")


def test_c10_friction(verdict):
    cfg = harness.load_config("friction_100", estimators=["zeroth", "first", "ddcg:c=0.3"])
    assert (cfg.trials, cfg.n_samples, cfg.iterations) == (15, 100, 50)
    med = {k: float(np.median(v)) for k, v in harness.final_costs(harness.optimize(cfg)).items()}
    ok = med["ddcg"] <= 0.95 * med["first"] and med["zeroth"] <= 0.95 * med["first"]
    assert verdict(10, ok, "median final cost " + ", ".join(f"{k} {v:.3f}" for k, v in med.items()))


def test_c11_ivwh(verdict):
    # alpha range and step counts on several rollouts
    env = ivwh.make_trajectory_env("bouncing")
    in_range, steps_ok = True, True
    pol = ivwh.GaussianPolicy(env.state_dim, env.action_dim, -0.5)
    for s in range(5):
        data = ivwh.rollout(env, pol, 16, seed=s)
        _, alpha = ivwh.ivwh_fuse(ivwh.per_step_gradients(data, pol))
        in_range &= bool(np.all((alpha >= 0) & (alpha <= 1)))
        steps_ok &= data.sim_steps == 16 * env.horizon
    # forced alpha reproduces the pure estimators
    worst = 0.0
    for name in ("linear", "point_mass", "bouncing"):
        e = ivwh.make_trajectory_env(name, episode_length=None)
        rng = np.random.default_rng(12)
        p = ivwh.GaussianPolicy(e.state_dim, e.action_dim, -0.5)
        p.W = 0.3 * rng.standard_normal(p.W.shape)
        data = ivwh.rollout(e, p, 12, seed=4)
        t = ivwh.per_step_gradients(data, p)
        g1, _ = ivwh.push_to_parameters(ivwh.ivwh_fuse(t, 1.0)[0], p, data, t.scale)
        g0, _ = ivwh.push_to_parameters(ivwh.ivwh_fuse(t, 0.0)[0], p, data, t.scale)
        ref1 = ivwh.pathwise_parameter_gradient(data, p)
        ref0 = ivwh.score_parameter_gradient(data, p, ivwh.advantages(data.rewards, data.mask), t.scale)
        worst = max(worst, np.linalg.norm(g1 - ref1) / np.linalg.norm(ref1),
                    np.linalg.norm(g0 - ref0) / np.linalg.norm(ref0))
    # training ordering on the contact env
    cfg = harness.load_config("ivwh_bouncing", modes=["first", "ivwh"])
    rows = harness.ivwh_experiment(cfg)
    for mode, trial, r in rows:
        steps_ok &= r.status != "ok" or r.sim_steps == cfg.n_actors * cfg.env["horizon"]
        in_range &= r.status != "ok" or 0.0 <= r.alpha_mean <= 1.0
    finals = {}
    for mode, trial, r in rows:
        finals.setdefault(mode, {}).setdefault(trial, []).append(r)
    med = {m: float(np.median([ivwh.final_return(v) for v in t.values()])) for m, t in finals.items()}
    ok = in_range and steps_ok and worst <= 1e-8 and med["ivwh"] >= med["first"]
    assert verdict(11, ok, f"alpha in [0,1] {in_range}, steps exact {steps_ok}, forced-alpha err {worst:.1e}, "
                           f"median final return first {med['first']:.3f} ivwh {med['ivwh']:.3f}")


def test_c12_closure(ball_landscape, verdict):
    configs = [
        harness.ExperimentConfig(task="quadratic", grid=[-1.0, 0.5, 2.0], trials=500, n_samples=50,
                                 oracle="analytic", estimators=["zeroth", "first", "ivw", "ddcg"]),
        harness.ExperimentConfig(task="sigmoid", env={"T": 0.01}, grid=[0.0, 0.5, 1.5], trials=500,
                                 n_samples=100, oracle="quadrature", estimators=["zeroth", "first", "ivw", "ddcg"]),
        harness.load_config("momentum_transfer_landscape_10", trials=500, grid=[-0.5, 0.0, 0.3],
                            oracle="quadrature"),
    ]
    recs = [r for cfg in configs for r in harness.landscape_sweep(cfg, cache_dir=False)]
    recs = [r for r in recs if r.trials >= 500]
    worst = max(abs(r.mse - (r.bias**2 + r.variance)) / r.mse for r in recs if r.mse > 0)
    assert verdict(12, worst <= 0.1, f"{len(recs)} records, max |mse - bias^2 - var| / mse = {worst:.4f}")


def test_c13_determinism(tmp_path, verdict):
    small = dict(trials=8, n_oracle=20_000)
    configs = [
        harness.load_config("table1", m=200, dims=[1, 16]),
        harness.load_config("ball_with_wall_landscape_10", grid=[0.6, 0.8, 1.0], **small),
        harness.load_config("sweep_c_ball", grid=[0.5, 0.8], c_grid=[0.1, 0.5], **small),
        harness.load_config("sweep_gamma_friction", trials=2, iterations=5),
        harness.load_config("friction_5", trials=2, iterations=5),
        harness.load_config("ivwh_point_mass", trials=2, iterations=3),
    ]
    same = {}
    for i, cfg in enumerate(configs):
        a = harness.run_experiment(cfg, tmp_path / f"{i}a", jobs=1, cache_dir=False).read_bytes()
        b = harness.run_experiment(cfg, tmp_path / f"{i}b", jobs=2, cache_dir=False).read_bytes()
        same[cfg.experiment + ":" + cfg.task] = a == b
    ok = all(same.values())
    assert verdict(13, ok, ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()))
