"""Configuration parsing and experiment execution for the command line tool.

A configuration is a JSON object. Common fields:

``kind``
    one of :data:`KINDS`.
``seed``
    master seed; replicate ``i`` uses the stream ``(seed, i)``.
``T``, ``reps``
    horizon and number of replicates.
``model``
    ``{"type": "ctmc", "Q": [[...], ...]}``, ``{"type": "ou", "theta", "sigma", "delta"}``,
    ``{"type": "zigzag" | "bps", "target", "dim", "refresh_rate"}``,
    ``{"type": "sde", "name", ...}`` or ``{"type": "brownian", "step"}``.
``functional``
    ``{"name": "indicator", "states": [...]}``, ``{"name": "values", "values": [...]}``,
    ``{"name": "identity"}``, ``{"name": "coordinate", "index"}``,
    ``{"name": "monomial", "power", "index"}``, ``{"name": "constant", "value"}``.
``schedule``
    ``{"exponent", "q", "delta", "lam_prime"}``.
``output``
    directory for artifacts.

Kind-specific options are documented by :func:`describe`.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .analysis import (
    BatchSchedule,
    batch_means,
    bm_clt_check,
    brownian_increment_check,
    fluctuation_statistic,
    summarize_mse,
)
from .ctmc import (
    CtmcModel,
    asymptotic_variance_exact,
    asymptotic_covariance_exact,
    resolvent,
    simulate_ctmc,
    stationary_distribution,
)
from .diffusion import (
    BUILTIN_SDES,
    euler_maruyama,
    ou_simulate_exact,
    recurrence_check,
    scale_function,
    speed_density,
    speed_measure_total,
)
from .errors import (
    ConfigError,
    InvalidExponents,
    InvalidModel,
    QuadratureFailure,
    ReplicateFailure,
    UnknownKind,
)
from .pdmp import BUILTIN_TARGETS, PdmpState, bps_simulate, zigzag_simulate
from .rng import make_stream, stream_id
from .splitting import (
    build_minorisation,
    cycle_functionals,
    one_dependence_test,
    regenerative_estimates,
    residual_kernel,
    simulate_split_chain,
)
from .stats import chi_square_counts, serial_independence, wald_chi_square
from .trajectory import coordinate, monomial

KINDS = (
    "occupation",
    "batch-means",
    "mse",
    "bm-clt",
    "splitting-verify",
    "fluctuation",
    "diffusion-regularity",
)

MODEL_TYPES = ("ctmc", "ou", "zigzag", "bps", "sde", "brownian")

DESCRIPTIONS = {
    "occupation": (
        "Simulate a CTMC `reps` times up to T and compare the occupation fractions with the\n"
        "stationary law pi (exact, from the generator) by a Wald chi-square test that uses the\n"
        "exact asymptotic covariance of the occupation vector.\n"
        "Inputs: model (ctmc), T, reps, level (default 1e-3).\n"
        "Oracle: pi and the covariance from the Poisson equation.\n"
        "Pass: every replicate p-value exceeds level / reps."
    ),
    "batch-means": (
        "Batch-means estimate of the time-average variance constant sigma^2 with\n"
        "ell_T = ceil(T^a), k_T = floor(T / ell_T), sigma2_hat = ell / (k - 1) sum (Zbar_i - Zbar)^2.\n"
        "Inputs: model, functional, schedule, T, reps, tolerance (default 0.1).\n"
        "Oracle: exact sigma^2 (Poisson equation for CTMCs, sigma^2 / theta^2 for OU with f(x) = x)\n"
        "or `oracle_sigma2` from the config.\n"
        "Pass: |mean sigma2_hat - sigma^2| / sigma^2 <= tolerance."
    ),
    "mse": (
        "Mean squared error of the batch-means estimator over `reps` (>= 100) replicates,\n"
        "compared with the leading term 2 sigma^4 ell / T.\n"
        "Inputs: model, functional, schedule, T, reps, ratio_band (default [0.7, 1.4]).\n"
        "Oracle: exact sigma^2 as for batch-means.\n"
        "Pass: empirical MSE / (2 sigma^4 ell / T) inside ratio_band."
    ),
    "bm-clt": (
        "Normal limit of the batch-means estimator: sqrt(k)(sigma2_hat - sigma^2) / sqrt(2 sigma^4)\n"
        "over `reps` (>= 200) replicates is compared with N(0, 1).\n"
        "Inputs: model, functional, schedule, T, reps, level (default 1e-3).\n"
        "Oracle: exact sigma^2 as for batch-means.\n"
        "Pass: KS p-value > level and variance ratio in [0.8, 1.25]."
    ),
    "splitting-verify": (
        "Simulate the split chain of a CTMC (Nummelin splitting of the resolvent on the small set C)\n"
        "and verify its regeneration structure.\n"
        "Inputs: model (ctmc), functional, C (default [0]), T, level (default 1e-3),\n"
        "tolerance (default 0.05), strict (default false).\n"
        "Oracles: pi, nu and alpha from the minorisation, exact sigma^2.\n"
        "Checks: occupation-law (Wald chi-square vs pi), regeneration-law (chi-square of the\n"
        "post-regeneration states vs nu), serial-independence of those states, one-dependence\n"
        "(cycle autocorrelations at lags 2..5 inside 99.9% bands), rho-hat (within 3 standard errors\n"
        "of 1 / (alpha pi(C))), tavc (|sigma_xi^2 / rho - sigma^2| / sigma^2 <= tolerance)."
    ),
    "fluctuation": (
        "Increment fluctuation statistic beta_T sup_{t <= T - a} sup_{u <= a} |int_t^{t+u} (f - pi(f))|\n"
        "with beta_T = (2 a [log(T / a) + log log T])^{-1/2} and a = T^window_exponent.\n"
        "Inputs: model (ctmc or brownian), functional, T, reps, window_exponent (default 0.8),\n"
        "band (brownian, default [0.8, 1.1]), bound_factor (ctmc, default 1.2), C (ctmc).\n"
        "Oracle (brownian): the increment limit 1. Oracle (ctmc): sigma_xi^2 / rho estimated by\n"
        "regenerative splitting.\n"
        "Pass (brownian): max over replicates inside band. Pass (ctmc): statistic <=\n"
        "bound_factor * sqrt(sigma_xi^2 / rho) in every replicate."
    ),
    "diffusion-regularity": (
        "Scale function s(u) and speed density m(u) = 1 / (s'(u) sigma^2(u)) of a 1-d diffusion on\n"
        "a probe grid, with a tail check of s and the total speed mass.\n"
        "Inputs: model (sde), probes (default -4..4).\n"
        "Pass: both tails of s diverge on the grid and the speed measure has finite mass."
    ),
}


def describe(kind: str) -> str:
    try:
        return DESCRIPTIONS[kind]
    except KeyError:
        raise UnknownKind(kind) from None


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    T: float
    reps: int
    model: dict
    functional: dict
    schedule: BatchSchedule | None
    output: str
    options: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)


def _require(doc, key, path, types):
    if key not in doc:
        raise ConfigError(path, "missing")
    val = doc[key]
    if not isinstance(val, types) or isinstance(val, bool):
        raise ConfigError(path, f"expected {types}, got {type(val).__name__}")
    return val


def _parse_schedule(doc) -> BatchSchedule | None:
    if doc is None:
        return None
    if not isinstance(doc, dict):
        raise ConfigError("schedule", "expected an object")
    kwargs = {}
    for key in ("exponent", "q", "delta", "lam_prime"):
        if key in doc:
            kwargs[key] = float(_require(doc, key, f"schedule.{key}", (int, float)))
    exponent = kwargs.get("exponent", 2.0 / 3.0)
    if not (0.0 < exponent < 1.0):
        raise ConfigError("schedule.exponent", f"must lie in (0, 1), got {exponent}")
    try:
        return BatchSchedule(**kwargs)
    except InvalidExponents as exc:
        raise ConfigError("schedule", str(exc)) from exc


def _parse_model(doc) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError("model", "expected an object")
    mtype = doc.get("type")
    if mtype not in MODEL_TYPES:
        raise ConfigError("model.type", f"unknown model type {mtype!r}; expected one of {MODEL_TYPES}")
    if mtype == "ctmc":
        try:
            build_ctmc(doc)
        except (InvalidModel, ArithmeticError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError("model.Q", str(exc)) from exc
    elif mtype in ("zigzag", "bps"):
        if doc.get("target", "isotropic-gaussian") not in BUILTIN_TARGETS:
            raise ConfigError("model.target", f"unknown target {doc.get('target')!r}")
    elif mtype == "sde":
        if doc.get("name") not in BUILTIN_SDES:
            raise ConfigError("model.name", f"unknown diffusion {doc.get('name')!r}")
    elif mtype == "ou":
        for key in ("theta", "sigma", "delta"):
            if key in doc and not float(doc[key]) > 0:
                raise ConfigError(f"model.{key}", "must be positive")
    return doc


_FUNCTIONALS = ("indicator", "values", "identity", "coordinate", "monomial", "constant")


def _parse_functional(doc) -> dict:
    if doc is None:
        return {"name": "identity"}
    if not isinstance(doc, dict) or doc.get("name") not in _FUNCTIONALS:
        raise ConfigError("functional.name", f"expected one of {_FUNCTIONALS}")
    return doc


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a configuration object; errors name the offending field."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "configuration must be an object")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ConfigError("kind", f"unknown kind {kind!r}; expected one of {KINDS}")
    seed = _require(doc, "seed", "seed", int)
    if seed < 0:
        raise ConfigError("seed", "must be non-negative")
    if kind == "diffusion-regularity":
        T = float(doc.get("T", 1.0))
    else:
        T = float(_require(doc, "T", "T", (int, float)))
    if not T > 0:
        raise ConfigError("T", "must be positive")
    reps = doc.get("reps", 1)
    if not isinstance(reps, int) or isinstance(reps, bool) or reps < 1:
        raise ConfigError("reps", "must be an integer >= 1")
    model = _parse_model(doc.get("model"))
    functional = _parse_functional(doc.get("functional"))
    schedule = _parse_schedule(doc.get("schedule", {} if kind in ("batch-means", "mse", "bm-clt") else None))
    known = {"kind", "seed", "T", "reps", "model", "functional", "schedule", "output"}
    options = {k: v for k, v in doc.items() if k not in known}
    if kind == "mse" and reps < 100:
        raise ConfigError("reps", "mse needs at least 100 replicates")
    if kind == "bm-clt" and reps < 200:
        raise ConfigError("reps", "bm-clt needs at least 200 replicates")
    if kind in ("occupation", "splitting-verify") and model["type"] != "ctmc":
        raise ConfigError("model.type", f"{kind} needs a ctmc model")
    if kind == "diffusion-regularity" and model["type"] != "sde":
        raise ConfigError("model.type", "diffusion-regularity needs an sde model")
    if kind == "fluctuation":
        if model["type"] not in ("ctmc", "brownian"):
            raise ConfigError("model.type", "fluctuation needs a ctmc or brownian model")
        w = options.get("window_exponent", 0.8)
        if not (isinstance(w, (int, float)) and 0 < w <= 1):
            raise ConfigError("window_exponent", "must lie in (0, 1]")
    return ExperimentConfig(kind, seed, T, reps, model, functional, schedule,
                            str(doc.get("output", "out")), options, dict(doc))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    return parse_config(doc)


def build_ctmc(doc: dict) -> CtmcModel:
    Q = np.asarray(doc["Q"], dtype=float)
    if Q.ndim == 1:
        return CtmcModel.from_dict({"Q": Q})
    return CtmcModel(Q, doc.get("labels"))


def build_functional(cfg: ExperimentConfig, n_states: int | None = None):
    fdoc = cfg.functional
    name = fdoc["name"]
    try:
        if name == "indicator":
            vec = np.zeros(n_states)
            vec[list(fdoc.get("states", [1]))] = 1.0
            return vec
        if name == "values":
            vec = np.asarray(fdoc["values"], dtype=float)
            if n_states is not None and vec.size != n_states:
                raise ConfigError("functional.values", f"expected {n_states} values")
            return vec
        if name == "constant":
            c = float(fdoc.get("value", 1.0))
            if n_states is not None:
                return np.full(n_states, c)
            return lambda x: np.full(np.shape(x)[0], c)
        if name == "identity":
            return None if cfg.model["type"] in ("ou", "sde") else coordinate(0)
        if name == "coordinate":
            return coordinate(int(fdoc.get("index", 0)))
        if name == "monomial":
            return monomial(int(fdoc.get("power", 2)), int(fdoc.get("index", 0)))
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("functional", str(exc)) from exc
    raise ConfigError("functional.name", f"unknown functional {name!r}")


def _ou_params(model: dict):
    return float(model.get("theta", 1.0)), float(model.get("sigma", math.sqrt(2.0))), float(model.get("delta", 0.1))


def simulate(cfg: ExperimentConfig, rng: np.random.Generator, T: float | None = None):
    """One trajectory of the configured model."""
    T = cfg.T if T is None else T
    m = cfg.model
    mtype = m["type"]
    if mtype == "ctmc":
        return simulate_ctmc(build_ctmc(m), int(m.get("x0", 0)), T, rng)
    if mtype == "ou":
        theta, sigma, delta = _ou_params(m)
        return ou_simulate_exact(theta, sigma, m.get("x0"), T, delta, rng)
    if mtype in ("zigzag", "bps"):
        dim = int(m.get("dim", 1))
        target = BUILTIN_TARGETS[m.get("target", "isotropic-gaussian")](**{k: v for k, v in m.items() if k in ("dim", "scales")})
        x0 = np.asarray(m.get("x0", np.zeros(dim)), dtype=float)
        if mtype == "zigzag":
            return zigzag_simulate(target, PdmpState(x0, np.ones(dim)), T, rng)
        v0 = np.ones(dim) / math.sqrt(dim)
        return bps_simulate(target, float(m.get("refresh_rate", 1.0)), PdmpState(x0, v0), T, rng,
                            m.get("velocity_law", "sphere"))
    if mtype == "sde":
        params = {k: v for k, v in m.items() if k not in ("type", "name", "delta", "x0")}
        model = BUILTIN_SDES[m["name"]](**params)
        return euler_maruyama(model, float(m.get("x0", 0.0)), T, float(m.get("delta", 1e-3)), rng)
    raise ConfigError("model.type", f"{mtype} cannot be simulated for this experiment")


def oracle_sigma2(cfg: ExperimentConfig) -> float:
    """Exact asymptotic variance of the configured functional, never estimated here."""
    if "oracle_sigma2" in cfg.options:
        return float(cfg.options["oracle_sigma2"])
    m = cfg.model
    if m["type"] == "ctmc":
        model = build_ctmc(m)
        return asymptotic_variance_exact(model, build_functional(cfg, model.n))
    if m["type"] == "ou" and cfg.functional["name"] == "identity":
        theta, sigma, _ = _ou_params(m)
        return sigma**2 / theta**2
    raise ConfigError("oracle_sigma2", "no closed-form oracle for this model/functional; supply oracle_sigma2")


# -- replicate workers (module level so that they can run in a process pool) --

def _occupation_worker(args):
    cfg, i = args
    model = build_ctmc(cfg.model)
    path = simulate(cfg, make_stream(cfg.seed, i))
    occ = path.occupation(model.n)
    pi = stationary_distribution(model)
    cov = asymptotic_covariance_exact(model, np.eye(model.n))
    stat, dof, p = wald_chi_square(occ, pi, cov, cfg.T)
    return {"stat": stat, "dof": dof, "p": p, "occupation": occ.tolist()}


def _batch_worker(args):
    cfg, i = args
    path = simulate(cfg, make_stream(cfg.seed, i))
    n = build_ctmc(cfg.model).n if cfg.model["type"] == "ctmc" else None
    est = batch_means(path, build_functional(cfg, n), cfg.schedule)
    return {"ell": est.ell, "k": est.k, "sigma2_hat": est.sigma2}


def _fluctuation_worker(args):
    cfg, i = args
    a = cfg.T ** float(cfg.options.get("window_exponent", 0.8))
    if cfg.model["type"] == "brownian":
        rep = brownian_increment_check(cfg.T, a, 1, cfg.seed, float(cfg.model.get("step", 1.0)), key=i)
        return {"a": a, "beta": None, "raw_sup": None, "statistic": float(rep.statistics[0]),
                "refinement_change": rep.refinement_change}
    model = build_ctmc(cfg.model)
    f = build_functional(cfg, model.n)
    pi = stationary_distribution(model)
    cert = build_minorisation(model, cfg.options.get("C", [0]))
    kernel = residual_kernel(cert, resolvent(model))
    split, log = simulate_split_chain(model, kernel, int(cfg.model.get("x0", 0)), cfg.T, make_stream(cfg.seed, i))
    mean = float(pi @ f)
    est = regenerative_estimates(cycle_functionals(log, split.path, f), mean=mean)
    fs = fluctuation_statistic(split.path, f, a, mean=mean)
    return {"a": a, "beta": fs.beta, "raw_sup": fs.raw_sup, "statistic": fs.value,
            "sigma2_xi": est.sigma2_xi, "rho_hat": est.rho_hat}


def _map(worker, cfg, threads):
    jobs = [(cfg, i) for i in range(cfg.reps)]
    results = []
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(worker, job) for job in jobs]
            for i, fut in enumerate(futures):
                try:
                    results.append(fut.result())
                except ConfigError:
                    raise
                except Exception as exc:
                    raise ReplicateFailure(i, exc) from exc
        return results
    for i, job in enumerate(jobs):
        try:
            results.append(worker(job))
        except ConfigError:
            raise
        except Exception as exc:
            raise ReplicateFailure(i, exc) from exc
    return results


@dataclass
class RunManifest:
    kind: str
    config_sha256: str
    master_seed: int
    replicate_seeds: list
    artifacts: list
    checks: dict
    summary: dict
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "config_sha256": self.config_sha256,
            "master_seed": self.master_seed,
            "replicate_seeds": self.replicate_seeds,
            "artifacts": self.artifacts,
            "checks": self.checks,
            "summary": self.summary,
            "passed": self.passed,
            "version": self.version,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _check(passed, **fields):
    return {"passed": bool(passed), **{k: _plain(v) for k, v in fields.items()}}


def _plain(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    return v


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def config_hash(cfg: ExperimentConfig) -> str:
    doc = dict(cfg.raw)
    doc["seed"] = cfg.seed
    doc.pop("output", None)
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _run_occupation(cfg, out, threads):
    level = float(cfg.options.get("level", 1e-3))
    res = _map(_occupation_worker, cfg, threads)
    n = len(res[0]["occupation"])
    rows = [[i, stream_id(cfg.seed, i), cfg.T, r["stat"], r["dof"], r["p"], *r["occupation"]] for i, r in enumerate(res)]
    _write_csv(os.path.join(out, "occupation.csv"),
               ["rep", "seed", "T", "wald_stat", "dof", "p_value"] + [f"occ_{j}" for j in range(n)], rows)
    pmin = min(r["p"] for r in res)
    checks = {"occupation-law": _check(pmin > level / cfg.reps, min_p_value=pmin, threshold=level / cfg.reps)}
    return ["occupation.csv"], checks, {}


def _batch_rows(cfg, res, sigma2):
    return [[cfg.T, r["ell"], r["k"], r["sigma2_hat"], sigma2, stream_id(cfg.seed, i)] for i, r in enumerate(res)]


_BATCH_HEADER = ["T", "ell", "k", "sigma2_hat", "oracle_sigma2", "seed"]


def _run_batch(cfg, out, threads):
    sigma2 = oracle_sigma2(cfg)
    res = _map(_batch_worker, cfg, threads)
    rows = _batch_rows(cfg, res, sigma2)
    est = np.array([r["sigma2_hat"] for r in res])
    mean = float(est.mean())
    rows.append([cfg.T, res[0]["ell"], res[0]["k"], mean, sigma2, "mean"])
    _write_csv(os.path.join(out, "batch_means.csv"), _BATCH_HEADER, rows)
    tol = float(cfg.options.get("tolerance", 0.1))
    rel = abs(mean - sigma2) / sigma2
    checks = {"relative-error": _check(rel <= tol, value=rel, threshold=tol)}
    return ["batch_means.csv"], checks, {"mean_sigma2_hat": mean, "oracle_sigma2": sigma2}


def _run_mse(cfg, out, threads):
    from .analysis import ReplicateRow

    sigma2 = oracle_sigma2(cfg)
    res = _map(_batch_worker, cfg, threads)
    rows = _batch_rows(cfg, res, sigma2)
    _write_csv(os.path.join(out, "mse.csv"), _BATCH_HEADER, rows)
    rep = summarize_mse([ReplicateRow(*r) for r in rows], sigma2, cfg.T, cfg.seed)
    lo, hi = cfg.options.get("ratio_band", [0.7, 1.4])
    checks = {"mse-ratio": _check(lo <= rep.ratio <= hi, value=rep.ratio, band=[lo, hi])}
    summary = {"empirical_mse": rep.empirical_mse, "mse_ci": list(rep.mse_ci), "predicted": rep.predicted,
               "mean_sigma2_hat": rep.mean_estimate, "mean_ci": list(rep.mean_ci)}
    return ["mse.csv"], checks, summary


def _run_bm_clt(cfg, out, threads):
    sigma2 = oracle_sigma2(cfg)
    res = _map(_batch_worker, cfg, threads)
    rows = _batch_rows(cfg, res, sigma2)
    _write_csv(os.path.join(out, "bm_clt.csv"), _BATCH_HEADER, rows)
    rep = bm_clt_check([r["sigma2_hat"] for r in res], sigma2, [r["k"] for r in res],
                       level=float(cfg.options.get("level", 1e-3)))
    checks = {
        "ks": _check(rep.ks_pvalue > rep.level, p_value=rep.ks_pvalue, threshold=rep.level),
        "variance-ratio": _check(0.8 <= rep.variance_ratio <= 1.25, value=rep.variance_ratio, band=[0.8, 1.25]),
    }
    return ["bm_clt.csv"], checks, {}


def _run_splitting(cfg, out, threads):
    model = build_ctmc(cfg.model)
    f = build_functional(cfg, model.n)
    level = float(cfg.options.get("level", 1e-3))
    tol = float(cfg.options.get("tolerance", 0.05))
    pi = stationary_distribution(model)
    sigma2 = oracle_sigma2(cfg)
    cert = build_minorisation(model, cfg.options.get("C", [0]))
    kernel = residual_kernel(cert, resolvent(model))
    split, log = simulate_split_chain(model, kernel, int(cfg.model.get("x0", 0)), cfg.T, make_stream(cfg.seed, 0),
                                      strict=bool(cfg.options.get("strict", False)))
    cyc = cycle_functionals(log, split.path, f)
    log.to_csv(os.path.join(out, "regeneration_log.csv"), cyc)
    est = regenerative_estimates(cyc, mean=float(pi @ f))
    regen = log.regen_states[1:]
    _, _, p_regen = chi_square_counts(np.bincount(regen, minlength=model.n), cert.nu)
    p_serial = serial_independence(regen, model.n)
    dep = one_dependence_test(cyc.stationary()[0])
    occ = split.path.occupation(model.n)
    cov = asymptotic_covariance_exact(model, np.eye(model.n))
    _, _, p_occ = wald_chi_square(occ, pi, cov, cfg.T)
    rho_true = 1.0 / cert.regeneration_constant(pi)
    z_rho = abs(est.rho_hat - rho_true) / est.rho_se
    rel = abs(est.tavc - sigma2) / sigma2
    checks = {
        "occupation-law": _check(p_occ > level, p_value=p_occ, threshold=level),
        "regeneration-law": _check(p_regen > level, p_value=p_regen, threshold=level),
        "serial-independence": _check(p_serial > level, p_value=p_serial, threshold=level),
        "one-dependence": _check(dep.passed, acf=dep.acf, band=dep.band),
        "rho-hat": _check(z_rho <= 3.0, value=est.rho_hat, oracle=rho_true, standard_errors=z_rho),
        "tavc": _check(rel <= tol, value=est.tavc, oracle=sigma2, relative_error=rel, threshold=tol),
    }
    summary = {"alpha": cert.alpha, "nu": cert.nu, "C": list(cert.C), "n_cycles": est.n_cycles,
               "sigma2_xi": est.sigma2_xi}
    return ["regeneration_log.csv"], checks, summary


def _run_fluctuation(cfg, out, threads):
    res = _map(_fluctuation_worker, cfg, threads)
    rows = [[i, stream_id(cfg.seed, i), cfg.T, r["a"], r["statistic"]] for i, r in enumerate(res)]
    _write_csv(os.path.join(out, "fluctuation.csv"), ["rep", "seed", "T", "a", "statistic"], rows)
    stats_ = np.array([r["statistic"] for r in res])
    if cfg.model["type"] == "brownian":
        lo, hi = cfg.options.get("band", [0.8, 1.1])
        mx = float(stats_.max())
        change = max(r["refinement_change"] for r in res)
        checks = {
            "max-statistic": _check(lo <= mx <= hi, value=mx, band=[lo, hi]),
            "grid-refinement": _check(change < 0.02, value=change, threshold=0.02),
        }
        return ["fluctuation.csv"], checks, {}
    factor = float(cfg.options.get("bound_factor", 1.2))
    bounds = np.array([factor * math.sqrt(r["sigma2_xi"] / r["rho_hat"]) for r in res])
    literal = np.array([r["sigma2_xi"] / r["rho_hat"] for r in res])
    checks = {"soft-bound": _check(bool(np.all(stats_ <= bounds)), value=stats_.max(), bound=bounds.min())}
    summary = {"literal_variance_bound": literal.tolist(),
               "within_literal_variance_bound": bool(np.all(stats_ <= literal))}
    return ["fluctuation.csv"], checks, summary


def _run_regularity(cfg, out, threads):
    m = cfg.model
    params = {k: v for k, v in m.items() if k not in ("type", "name", "delta", "x0")}
    model = BUILTIN_SDES[m["name"]](**params)
    probes = np.asarray(cfg.options.get("probes", np.linspace(-4, 4, 17)), dtype=float)
    model.check_ellipticity(probes)
    rows = [[u, scale_function(model, float(u)), speed_density(model, float(u))] for u in probes]
    _write_csv(os.path.join(out, "regularity.csv"), ["u", "scale", "speed_density"], rows)
    try:
        rep = recurrence_check(model, probes)
    except ValueError as exc:
        raise ConfigError("probes", str(exc)) from exc
    try:
        total = speed_measure_total(model)
        finite = math.isfinite(total)
    except QuadratureFailure:
        total, finite = math.inf, False
    checks = {
        "recurrence": _check(rep.verdict == "DivergesBothTails", verdict=rep.verdict),
        "finite-speed-measure": _check(finite, value=total if finite else None),
    }
    return ["regularity.csv"], checks, {}


_RUNNERS = {
    "occupation": _run_occupation,
    "batch-means": _run_batch,
    "mse": _run_mse,
    "bm-clt": _run_bm_clt,
    "splitting-verify": _run_splitting,
    "fluctuation": _run_fluctuation,
    "diffusion-regularity": _run_regularity,
}


def run(cfg: ExperimentConfig, threads: int = 1, out: str | None = None) -> RunManifest:
    """Execute one experiment, write its artifacts and ``manifest.json``."""
    out = cfg.output if out is None else out
    os.makedirs(out, exist_ok=True)
    artifacts, checks, summary = _RUNNERS[cfg.kind](cfg, out, max(1, int(threads)))
    reps = 1 if cfg.kind in ("splitting-verify", "diffusion-regularity") else cfg.reps
    manifest = RunManifest(
        kind=cfg.kind,
        config_sha256=config_hash(cfg),
        master_seed=cfg.seed,
        replicate_seeds=[stream_id(cfg.seed, i) for i in range(reps)],
        artifacts=sorted(artifacts + ["manifest.json"]),
        checks=checks,
        summary={k: _plain(v) for k, v in summary.items()},
    )
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        fh.write(manifest.to_json())
    return manifest
