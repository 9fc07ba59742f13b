"""Experiment orchestration: presets, landscape sweeps, optimization runs, sweeps, the CoV table.

Every random draw is seeded by a tuple ``(seed, ...cell indices...)`` so a
cell's result does not depend on which process computed it or in what
order. Results are collected in grid order and written once.
"""

from __future__ import annotations

import csv
import hashlib
import inspect
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

import compgrad
from compgrad import estimators as est
from compgrad import ivwh, stats
from compgrad.composite import MixKind, MixPolicy, mix
from compgrad.envs import SmoothedOracle, make_env, oracle_gradient, parse_kv
from compgrad.errors import ConfigError

EXPERIMENTS = ("landscape", "optimize", "sweep_c", "sweep_gamma", "table1", "ivwh")
SWEEP_VARS = ("theta", "T", "N")
ORACLES = ("mc", "quadrature", "analytic")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def parse_grid(value):
    """``"lo:hi:num"`` (inclusive linspace), ``"a, b, c"`` or a single number."""
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    text = str(value).strip()
    if text.count(":") == 2:
        lo, hi, num = text.split(":")
        return [float(x) for x in np.linspace(float(lo), float(hi), int(num))]
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse grid {value!r}") from exc


def _split_list(value):
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        return list(value)
    # estimator specs may contain commas inside "aobg:gamma=1,delta=0.1"; split on ';' or ' ,'
    text = str(value)
    sep = ";" if ";" in text else ","
    parts = [p.strip() for p in text.split(sep)]
    out = []
    for p in parts:
        if out and "=" in p and ":" not in p and ":" in out[-1]:
            out[-1] += "," + p  # continuation of a parameterized spec
        elif p:
            out.append(p)
    return out


@dataclass
class ExperimentConfig:
    experiment: str = "landscape"
    task: str = "quadratic"
    env: dict = field(default_factory=dict)
    sweep: str = "theta"
    grid: list = field(default_factory=lambda: [0.0])
    theta: float | None = None  # fixed theta for T / N sweeps
    estimators: list = field(default_factory=lambda: ["zeroth", "first", "ivw", "ddcg"])
    n_samples: int = 100
    sigma: float = 1.0
    trials: int = 100
    iterations: int = 100
    lr: float = 0.01
    init: list | None = None
    gamma: float | None = None
    c: float = 0.3
    delta: float = 0.05
    c_grid: list = field(default_factory=list)
    gamma_grid: list = field(default_factory=list)
    sweep_mode: str = "landscape"
    oracle: str = "mc"
    n_oracle: int = 10_000_000
    oracle_seed: int = 12345
    seed: int = 0
    # table1
    dims: list = field(default_factory=lambda: [1, 16, 64, 128])
    m: int = 10_000
    reduction: str = "norm"
    ddcg_statistic: str = "coordinate"
    # ivwh
    n_actors: int = 32
    modes: list = field(default_factory=lambda: ["first", "zeroth", "ivwh"])
    normalization: str = "matched"
    clip_norm: float | None = 10.0
    log_std_init: float = -0.5
    output: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.sweep not in SWEEP_VARS:
            raise ConfigError(f"sweep must be one of {SWEEP_VARS}, got {self.sweep!r}")
        if self.oracle not in ORACLES:
            raise ConfigError(f"oracle must be one of {ORACLES}, got {self.oracle!r}")
        if not self.grid:
            raise ConfigError("grid must be nonempty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.experiment == "sweep_c" and not self.c_grid:
            raise ConfigError("sweep_c needs a nonempty c_grid")
        if self.experiment == "sweep_gamma" and not self.gamma_grid:
            raise ConfigError("sweep_gamma needs a nonempty gamma_grid")
        if self.experiment not in ("table1", "ivwh"):
            self.policies()  # every estimator spec must be valid
        if not self.sigma > 0:
            raise ConfigError("sigma must be > 0")
        if self.reduction not in stats.AOBG_REDUCTIONS:
            raise ConfigError(f"reduction must be one of {stats.AOBG_REDUCTIONS}, got {self.reduction!r}")
        if self.ddcg_statistic not in stats.DDCG_STATISTICS:
            raise ConfigError(f"ddcg_statistic must be one of {stats.DDCG_STATISTICS}, got {self.ddcg_statistic!r}")

    def policies(self):
        return [MixPolicy.parse(s, gamma=self.gamma, c=self.c, delta=self.delta) for s in self.estimators]

    def to_dict(self):
        return asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_mapping(cls, mapping):
        mapping = dict(mapping)
        known = {f.name for f in fields(cls)}
        env = dict(mapping.pop("env", {}) or {})
        kwargs = {}
        for key, val in mapping.items():
            if key.startswith("env."):
                env[key[4:]] = val
            elif key in known:
                kwargs[key] = val
            else:
                raise ConfigError(f"unknown config key {key!r}")
        for key in ("grid", "c_grid", "gamma_grid"):
            if key in kwargs:
                kwargs[key] = parse_grid(kwargs[key])
        if "dims" in kwargs:
            kwargs["dims"] = [int(d) for d in parse_grid(kwargs["dims"])]
        for key in ("estimators", "modes"):
            if key in kwargs:
                kwargs[key] = _split_list(kwargs[key])
        if "init" in kwargs and kwargs["init"] is not None:
            kwargs["init"] = parse_grid(kwargs["init"])
        for key in ("n_samples", "trials", "iterations", "n_oracle", "seed", "m", "n_actors", "oracle_seed"):
            if key in kwargs:
                kwargs[key] = int(kwargs[key])
        return cls(env=env, **kwargs)

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return ExperimentConfig(**data)


def preset_dir():
    override = os.environ.get("COMPGRAD_PRESETS")
    if override:
        return Path(override)
    return Path(__file__).resolve().parent / "presets"


def list_presets():
    return sorted(p.stem for p in preset_dir().glob("*.cfg"))


def resolve_config_path(name_or_path):
    p = Path(name_or_path)
    if p.is_file():
        return p
    cand = preset_dir() / (p.name if p.suffix == ".cfg" else p.name + ".cfg")
    if cand.is_file():
        return cand
    raise ConfigError(f"config {name_or_path!r} not found (preset directory {preset_dir()})")


def load_config(name_or_path, **overrides):
    path = resolve_config_path(name_or_path)
    with open(path, encoding="utf-8") as fh:
        mapping = parse_kv(fh.read(), str(path))
    mapping.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_mapping(mapping)


# ---------------------------------------------------------------------------
# oracle with disk cache
# ---------------------------------------------------------------------------


def default_cache_dir():
    return Path(os.environ.get("COMPGRAD_CACHE", Path.home() / ".cache" / "compgrad"))


def quadrature_smoothed_gradient(objective, theta, sigma):
    """1-D oracle: ``E[eps f(theta + sigma eps)] / sigma`` by adaptive quadrature.

    The declared discontinuities are used as breakpoints.
    """
    from scipy import integrate

    if objective.dim != 1:
        raise ConfigError("quadrature oracle is 1-D only")
    theta = float(np.atleast_1d(theta)[0])
    lo, hi = -10.0, 10.0
    pts = {lo, hi}
    for loc in objective.discontinuities:
        z = (loc - theta) / sigma
        if lo < z < hi:
            pts.add(z)
    pts = sorted(pts)
    base = objective.eval([theta])

    def integrand(z):
        return z * (objective.eval([theta + sigma * z]) - base) * math.exp(-0.5 * z * z)

    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        total += integrate.quad(integrand, a, b, limit=400, epsabs=1e-12, epsrel=1e-10)[0]
    return np.array([total / (sigma * math.sqrt(2 * math.pi))])


def _source_digest(cls):
    """Hash of the module defining ``cls``: editing an env invalidates its cached oracles."""
    try:
        return hashlib.sha1(Path(inspect.getsourcefile(cls)).read_bytes()).hexdigest()[:12]
    except (TypeError, OSError):
        return "unknown"


def cached_oracle(objective, theta, sigma, n_oracle, seed, kind="mc", cache_dir=None):
    """Ground-truth smoothed gradient and its standard error, cached on disk.

    Key: task, its parameters, theta, sigma, n_oracle, seed and oracle kind.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if kind == "analytic":
        if not hasattr(objective, "smoothed_gradient"):
            raise ConfigError(f"{objective.name} has no analytic smoothed gradient")
        return np.asarray(objective.smoothed_gradient(theta, sigma), dtype=float), np.zeros(theta.size)
    key = json.dumps(
        {"task": objective.name, "params": objective.params, "theta": theta.tolist(), "sigma": sigma,
         "n_oracle": n_oracle, "seed": seed, "kind": kind, "source": _source_digest(type(objective))},
        sort_keys=True,
    )
    digest = hashlib.sha256(key.encode()).hexdigest()[:32]
    path = None
    if cache_dir is not False:
        path = Path(cache_dir or default_cache_dir()) / f"oracle-{digest}.json"
        if path.is_file():
            data = json.loads(path.read_text())
            return np.array(data["grad"]), np.array(data["stderr"])
    if kind == "quadrature":
        grad, se = quadrature_smoothed_gradient(objective, theta, sigma), np.zeros(theta.size)
    else:
        grad, se = oracle_gradient(SmoothedOracle(objective, sigma, n_oracle), theta, seed)
    if path is not None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(f".{os.getpid()}.tmp")
            tmp.write_text(json.dumps({"key": key, "grad": grad.tolist(), "stderr": se.tolist()}))
            os.replace(tmp, path)
        except OSError:
            pass  # caching is an optimization only
    return grad, se


# ---------------------------------------------------------------------------
# landscape
# ---------------------------------------------------------------------------


@dataclass
class LandscapeRecord:
    x: float
    estimator: str
    sqrt_error: float
    mse: float
    bias: float
    variance: float
    alpha_mean: float
    pass_rate: float
    trials: int
    flagged: bool
    sweep: str = "theta"
    c: float | None = None
    gamma: float | None = None


LANDSCAPE_FIELDS = ("x", "estimator", "sqrt_error", "mse", "bias", "variance", "alpha_mean",
                    "pass_rate", "trials", "flagged")


def _cell_setup(config, x):
    env_params = dict(config.env)
    theta = config.theta
    n = config.n_samples
    if config.sweep == "theta":
        theta = x
    elif config.sweep == "T":
        env_params["T"] = x
    else:
        n = int(x)
    objective = make_env(config.task, **env_params)
    if theta is None:
        raise ConfigError(f"sweep over {config.sweep} needs a fixed 'theta'")
    theta = np.full(objective.dim, float(theta)) if np.ndim(theta) == 0 else np.asarray(theta, float)
    return objective, theta, n


def _landscape_cell(args):
    config, index, x, cache_dir = args
    objective, theta, n = _cell_setup(config, x)
    dist = est.SmoothingDistribution(theta, config.sigma)
    oracle, se = cached_oracle(objective, theta, config.sigma, config.n_oracle,
                               (config.oracle_seed, index), config.oracle, cache_dir)
    flagged = bool(np.linalg.norm(se) > 0.1 * np.linalg.norm(oracle))
    policies = config.policies()
    grads = {p: np.empty((config.trials, objective.dim)) for p in range(len(policies))}
    alphas = {p: np.empty(config.trials) for p in range(len(policies))}
    passes = {p: np.zeros(config.trials) for p in range(len(policies))}
    for trial in range(config.trials):
        batch = est.sample_batch(dist, objective, n, (config.seed, index, trial))
        g0 = est.estimate_g0(batch, dist)
        g1 = est.estimate_g1(batch)
        for p, policy in enumerate(policies):
            res = mix(policy, g0, g1, batch, dist)
            grads[p][trial] = res.gradient
            alphas[p][trial] = res.alpha_mean
            passes[p][trial] = 1.0 if res.gate_passed else 0.0
    out = []
    for p, policy in enumerate(policies):
        out.append(_summarize(x, policy, grads[p], oracle, alphas[p], passes[p], flagged, config))
    return out


def _summarize(x, policy, grads, oracle, alphas, passes, flagged, config):
    trials = grads.shape[0]
    err = grads - oracle
    mse = float(np.mean(np.einsum("ij,ij->i", err, err)))
    bias = float(np.linalg.norm(grads.mean(axis=0) - oracle))
    variance = float(est.empirical_variance(grads)[1]) if trials >= 2 else 0.0
    gate = float(passes.mean()) if policy.kind is MixKind.DDCG else math.nan
    return LandscapeRecord(float(x), policy.name, math.sqrt(mse), mse, bias, variance,
                           float(alphas.mean()), gate, trials, flagged, config.sweep,
                           policy.c, policy.gamma)


def _map(fn, cells, jobs):
    if jobs is None or jobs <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, cells))  # map preserves submission order


def landscape_sweep(config, jobs=1, cache_dir=None):
    """Squared error vs the oracle, decomposed into bias^2 and variance, per grid point and estimator."""
    cells = [(config, i, x, cache_dir) for i, x in enumerate(config.grid)]
    records = [r for cell in _map(_landscape_cell, cells, jobs) for r in cell]
    flagged = sorted({r.x for r in records if r.flagged})
    if flagged:
        print(f"warning: oracle stderr above 10% of gradient norm at {config.sweep}={flagged}", file=sys.stderr)
    return records


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------


@dataclass
class OptimRecord:
    estimator: str
    trial: int
    iteration: int
    cost: float
    alpha: float
    status: str = "ok"
    c: float | None = None
    gamma: float | None = None


OPTIM_FIELDS = ("estimator", "trial", "iteration", "cost", "alpha", "status")


def _initial_point(config, objective):
    if config.init is not None:
        init = np.asarray(config.init, dtype=float)
        return np.full(objective.dim, init[0]) if init.size == 1 else init.copy()
    if hasattr(objective, "initial_controls"):
        return objective.initial_controls()
    if config.theta is not None:
        return np.full(objective.dim, float(config.theta))
    raise ConfigError("optimization needs 'init' or 'theta'")


def _optimize_cell(args):
    config, p_index, trial = args
    policy = config.policies()[p_index]
    objective = make_env(config.task, **config.env)
    theta = _initial_point(config, objective)
    out = [OptimRecord(policy.name, trial, 0, objective.eval(theta), math.nan, "ok", policy.c, policy.gamma)]
    for it in range(config.iterations):
        dist = est.SmoothingDistribution(theta, config.sigma)
        # batches are shared across estimators: paired comparison
        batch = est.sample_batch(dist, objective, config.n_samples, (config.seed, trial, it))
        res = mix(policy, est.estimate_g0(batch, dist), est.estimate_g1(batch), batch, dist)
        theta = theta - config.lr * res.gradient
        cost = objective.eval(theta)
        ok = math.isfinite(cost) and np.all(np.isfinite(theta))
        out.append(OptimRecord(policy.name, trial, it + 1, cost, res.alpha_mean,
                               "ok" if ok else "nan", policy.c, policy.gamma))
        if not ok:
            break
    return out


def optimize(config, jobs=1):
    """Seeded gradient descent per estimator and trial; one record per iteration."""
    n_pol = len(config.policies())
    cells = [(config, p, t) for p in range(n_pol) for t in range(config.trials)]
    return [r for cell in _map(_optimize_cell, cells, jobs) for r in cell]


def final_costs(records):
    """``{estimator: [final cost per trial]}``; a NaN-terminated run counts as +inf."""
    last = {}
    for r in records:
        last[(r.estimator, r.c, r.gamma, r.trial)] = r
    out = {}
    for (name, _c, _g, _t), r in sorted(last.items(), key=lambda kv: kv[0][3]):
        out.setdefault(name, []).append(r.cost if r.status == "ok" else math.inf)
    return out


# ---------------------------------------------------------------------------
# sensitivity sweeps
# ---------------------------------------------------------------------------


def sensitivity_sweep_c(config, jobs=1, cache_dir=None):
    """DDCG repeated for each ``c`` in ``config.c_grid``."""
    specs = [f"ddcg:c={c!r},delta={config.delta!r}" for c in config.c_grid]
    return _sweep(config.replace(estimators=specs), jobs, cache_dir)


def sensitivity_sweep_gamma(config, jobs=1, cache_dir=None):
    """AoBG repeated for each ``gamma`` in ``config.gamma_grid``."""
    specs = [f"aobg:gamma={g!r},delta={config.delta!r}" for g in config.gamma_grid]
    return _sweep(config.replace(estimators=specs), jobs, cache_dir)


def best_gamma(records, rtol=1e-3):
    """Pick ``gamma`` from an optimize-mode sweep.

    Lowest median final cost wins; values within ``rtol`` of it count as a
    tie, broken by the lowest median cost averaged over all iterations
    (faster convergence). Returns ``(gamma, {gamma: (final, mean)})``.
    """
    runs = {}
    for r in records:
        runs.setdefault(r.gamma, {}).setdefault(r.trial, []).append(r)
    if not runs or None in runs:
        raise ConfigError("best_gamma needs records from an optimize-mode gamma sweep")
    summary = {}
    for g, trials in runs.items():
        finals, means = [], []
        for recs in trials.values():
            ok = all(r.status == "ok" for r in recs)
            finals.append(recs[-1].cost if ok else math.inf)
            means.append(float(np.mean([r.cost for r in recs])) if ok else math.inf)
        summary[g] = (float(np.median(finals)), float(np.median(means)))
    top = min(f for f, _ in summary.values())
    tied = [g for g, (f, _) in summary.items() if f <= top + rtol * abs(top)]
    return min(tied, key=lambda g: (summary[g][1], g)), summary


def _sweep(config, jobs, cache_dir):
    if config.sweep_mode == "optimize":
        return optimize(config, jobs)
    if config.sweep_mode != "landscape":
        raise ConfigError("sweep_mode must be 'landscape' or 'optimize'")
    return landscape_sweep(config, jobs, cache_dir)


# ---------------------------------------------------------------------------
# CoV table and IVW-H
# ---------------------------------------------------------------------------


def table1_experiment(n=1000, m=10_000, sigma=1.0, seed=0, dims=(1, 16, 64, 128), reduction="norm",
                      ddcg_statistic="coordinate"):
    return [stats.cov_experiment(d, n, m, sigma, seed=(seed, d), reduction=reduction, ddcg_statistic=ddcg_statistic)
            for d in dims]


def _ivwh_cell(args):
    config, mode, trial = args
    env = ivwh.make_trajectory_env(config.task, **config.env)
    tc = ivwh.TrainConfig(n_actors=config.n_actors, iterations=config.iterations, lr=config.lr, mode=mode,
                          clip_norm=config.clip_norm, normalization=config.normalization,
                          seed=config.seed * 1000 + trial, log_std_init=config.log_std_init)
    recs = ivwh.train(env, ivwh.make_policy(env, tc), tc)
    return [(mode, trial, r) for r in recs]


def ivwh_experiment(config, jobs=1):
    cells = [(config, mode, t) for mode in config.modes for t in range(config.trials)]
    return [r for cell in _map(_ivwh_cell, cells, jobs) for r in cell]


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_csv(records, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in columns])
    return buf.getvalue()


def landscape_csv(records, sweep="theta", extra=()):
    header = [sweep] + list(LANDSCAPE_FIELDS[1:]) + list(extra)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in records:
        w.writerow([_fmt(r.x)] + [_fmt(getattr(r, c)) for c in LANDSCAPE_FIELDS[1:]]
                   + [_fmt(getattr(r, c)) for c in extra])
    return buf.getvalue()


def optim_csv(records, extra=()):
    return records_csv(records, list(OPTIM_FIELDS) + list(extra))


def ivwh_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("mode", "trial") + ivwh.TRAIN_FIELDS)
    for mode, trial, r in rows:
        w.writerow([mode, trial] + [_fmt(v) for v in asdict(r).values()])
    return buf.getvalue()


def source_version():
    """Version string plus a content hash of the package sources (git-style blob digests)."""
    root = Path(__file__).resolve().parent
    h = hashlib.sha1()
    for path in sorted(root.rglob("*")):
        if path.suffix in (".py", ".pyx", ".cfg") and "__pycache__" not in path.parts:
            data = path.read_bytes()
            blob = hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()
            h.update(f"{path.relative_to(root).as_posix()} {blob}\n".encode())
    return f"{compgrad.__version__}+{h.hexdigest()[:12]}"


def write_outputs(out_dir, name, csv_text, config, seed, wall_time, extra=None):
    """Write ``<name>.csv`` and ``<name>.manifest.json``; returns the CSV path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    csv_path.write_text(csv_text, encoding="utf-8")
    manifest = {
        "experiment": name,
        "config": config.to_dict() if hasattr(config, "to_dict") else config,
        "config_hash": config.digest() if hasattr(config, "digest") else None,
        "seed": seed,
        "version": source_version(),
        "wall_time_s": wall_time,
        "csv": csv_path.name,
        "csv_sha256": hashlib.sha256(csv_text.encode()).hexdigest(),
    }
    if extra:
        manifest.update(extra)
    (out / f"{name}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return csv_path


def run_experiment(config, out_dir, jobs=1, cache_dir=None):
    """Run ``config.experiment`` and persist its CSV and manifest. Returns the CSV path."""
    t0 = time.perf_counter()
    kind = config.experiment
    extra = {}
    if kind == "landscape":
        text = landscape_csv(landscape_sweep(config, jobs, cache_dir), config.sweep)
    elif kind == "optimize":
        text = optim_csv(optimize(config, jobs))
    elif kind in ("sweep_c", "sweep_gamma"):
        fn = sensitivity_sweep_c if kind == "sweep_c" else sensitivity_sweep_gamma
        col = "c" if kind == "sweep_c" else "gamma"
        recs = fn(config, jobs, cache_dir)
        text = optim_csv(recs, (col,)) if config.sweep_mode == "optimize" else landscape_csv(recs, config.sweep, (col,))
    elif kind == "table1":
        reports = table1_experiment(config.n_samples, config.m, config.sigma, config.seed, config.dims, config.reduction,
                                    config.ddcg_statistic)
        text = stats.cov_csv_text(reports)
        extra["aobg_reduction"] = config.reduction
        extra["ddcg_statistic"] = config.ddcg_statistic
    else:
        text = ivwh_csv(ivwh_experiment(config, jobs))
    return write_outputs(out_dir, kind, text, config, config.seed, time.perf_counter() - t0, extra)
