"""Command line front end.

Every subcommand reads one JSON config (algebra, bias, measure, task
parameters, seed), writes its artifacts into --out and always leaves a
manifest.json there, even when the run fails.
"""

import argparse
import json
import os
import platform
import sys
import time
from importlib import metadata

import numpy as np

from . import rational as Q
from .algebra import AlgebraError, load_algebra
from .filtration import decompose
from .measures import DegenerateCovariance, abelian_stats, measure_from_json
from .stats import InsufficientBudget, NotComparable
from .walk import config_hash

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_BUDGET = 0, 2, 3, 4
SEED_ENV = "NILWALK_SEED"

SUBCOMMANDS = {
    "algebra": ("algebra",),
    "filtration": ("filtration",),
    "walk": ("simulate-walk",),
    "diffusion": ("simulate-diffusion",),
    "compare": ("compare-clt",),
    "be-curve": ("berry-esseen",),
    "llt": ("llt",),
    "support": ("support",),
    "check": ("gaussian-check", "asymp-close", "dc-check"),
}
STOCHASTIC = {"simulate-walk", "simulate-diffusion", "compare-clt", "berry-esseen", "llt", "dc-check"}


class ConfigError(ValueError):
    pass


# -- output helpers ---------------------------------------------------------------

def write_csv(path, header, rows):
    """Plain CSV: header row, '.' decimals, '\\n' endings, floats in round-trip form."""
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_json(path, data):
    with open(path, "w", newline="\n") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return str(v)


def _versions():
    out = {"python": platform.python_version(), "numpy": np.__version__}
    for pkg in ("scipy", "statsmodels", "artifact"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


# -- config parsing -------------------------------------------------------------------

def load_config(path):
    if path is None:
        raise ConfigError("--config is required")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def resolve_task(command, cfg):
    allowed = SUBCOMMANDS[command]
    task = cfg.get("task", allowed[0])
    if task not in allowed:
        raise ConfigError(f"task {task!r} does not belong to subcommand {command!r} (expected one of {allowed})")
    return task


def resolve_seed(cli_seed, cfg, task):
    if cli_seed is not None:
        seed = cli_seed
    elif os.environ.get(SEED_ENV):
        seed = os.environ[SEED_ENV]
    else:
        seed = cfg.get("seed")
    if seed is None:
        if task in STOCHASTIC:
            raise ConfigError(f"task {task!r} needs a seed")
        return None
    try:
        seed = int(seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed must be an integer, got {seed!r}") from exc
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return seed


def _algebra(cfg):
    if "algebra" not in cfg:
        raise ConfigError("config needs an 'algebra' entry")
    try:
        return load_algebra(cfg["algebra"])
    except (AlgebraError, KeyError, TypeError, ValueError, OSError) as exc:
        raise ConfigError(f"bad algebra: {exc}") from exc


def _bias(cfg, alg):
    bias = cfg.get("bias")
    if bias is None:
        return None
    if len(bias) != alg.dim:
        raise ConfigError(f"bias has {len(bias)} entries, algebra has dimension {alg.dim}")
    try:
        return Q.vec(bias)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad bias: {exc}") from exc


def _measure(data, alg, name="measure"):
    if data is None:
        raise ConfigError(f"config needs a '{name}' entry")
    try:
        return measure_from_json(data, alg.dim)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad {name}: {exc}") from exc


def _params(cfg, allowed):
    params = cfg.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("'params' must be an object")
    unknown = set(params) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown parameters {sorted(unknown)}; allowed {sorted(allowed)}")
    return {k: params.get(k, v) for k, v in allowed.items()}


def _decomposition(cfg, alg, measure=None):
    """Decomposition for the config's bias, or for the measure's abelianized mean."""
    bias = _bias(cfg, alg)
    if bias is None and measure is not None:
        bias = Q.vec(measure.mean())
    return decompose(alg, bias)


def _bump(spec, dim):
    from .stats import bump
    if not isinstance(spec, dict) or "center" not in spec or "half_widths" not in spec:
        raise ConfigError("bump needs 'center' and 'half_widths'")
    center, h = np.asarray(spec["center"], dtype=float), np.asarray(spec["half_widths"], dtype=float)
    if center.shape != (dim,) or h.shape != (dim,) or np.any(h <= 0):
        raise ConfigError("bump center/half_widths must have one entry per coordinate, widths positive")
    return bump(center, h)


# -- tasks ---------------------------------------------------------------------------------

def task_algebra(cfg, ctx):
    alg = _algebra(cfg)
    info = {"dim": alg.dim, "step": alg.step, "basis": list(alg.basis_names), "algebra": alg.to_json()}
    ctx.json("algebra.json", info)
    return {"dim": alg.dim, "step": alg.step}


def task_filtration(cfg, ctx):
    alg = _algebra(cfg)
    _params(cfg, {})
    dec = decompose(alg, _bias(cfg, alg))
    out = dec.to_json()
    out["layer_dims"] = {str(k): v for k, v in dec.layer_dims().items()}
    out["d_X"] = dec.homogeneous_dimension
    ctx.json("filtration.json", out)
    return {"d_X": dec.homogeneous_dimension, "dims": dec.filtration.dims}


WALK_PARAMS = {"N": None, "trials": 10**5, "recentering": "drift", "g_N": None, "truncation": "off",
               "gammas": None, "chunk_size": None, "rescale": True, "centering_samples": 10**6}


def _walk_config(cfg, ctx, params, dec, measure, **over):
    from .walk import DEFAULT_CHUNK, WalkConfig
    if params["N"] is None:
        raise ConfigError("walk needs params.N")
    kw = dict(N=params["N"], trials=params["trials"], recentering=params["recentering"],
              g_N=params["g_N"], truncation=params["truncation"], gammas=params["gammas"],
              seed=ctx.seed, threads=ctx.threads, chunk_size=params["chunk_size"] or DEFAULT_CHUNK,
              rescale=params["rescale"], centering_samples=params["centering_samples"])
    kw.update(over)
    try:
        return WalkConfig(dec, measure, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad walk parameters: {exc}") from exc


def task_walk(cfg, ctx):
    from .walk import walk_batch
    alg = _algebra(cfg)
    measure = _measure(cfg.get("measure"), alg)
    params = _params(cfg, WALK_PARAMS)
    dec = _decomposition(cfg, alg, measure)
    wcfg = _walk_config(cfg, ctx, params, dec, measure)
    # the limit theorem needs a nondegenerate abelianized covariance
    abelian_stats(measure, dec, nsamples=10**5, rng=np.random.default_rng(ctx.seed))
    batch = walk_batch(wcfg)
    ctx.csv("samples.csv", alg.basis_names, batch.samples)
    ctx.json("samples.json", {"N": batch.N, "seed": batch.seed, "config_hash": batch.config_hash,
                              "trials": len(batch), "columns": list(alg.basis_names)})
    return {"trials": len(batch), "config_hash": batch.config_hash}


DIFFUSION_PARAMS = {"t": 1.0, "dt": 1e-3, "trials": 10**5, "frame": None, "drift": None, "chunk_size": None,
                    "moment_samples": 10**6}


def _generator(cfg, ctx, params, alg):
    from .diffusion import GeneratorSpec, generator_from_measure
    if params["frame"] is not None:
        dec = decompose(alg, _bias(cfg, alg))
        drift = np.zeros(alg.dim) if params["drift"] is None else params["drift"]
        try:
            return GeneratorSpec(dec, np.asarray(params["frame"], dtype=float), np.asarray(drift, dtype=float))
        except ValueError as exc:
            raise ConfigError(f"bad frame: {exc}") from exc
    measure = _measure(cfg.get("measure"), alg)
    dec = _decomposition(cfg, alg, measure)
    rep = abelian_stats(measure, dec, nsamples=params["moment_samples"], rng=np.random.default_rng(ctx.seed))
    return generator_from_measure(dec, rep)


def task_diffusion(cfg, ctx):
    from .diffusion import DiffusionConfig, simulate_diffusion_batch
    from .walk import DEFAULT_CHUNK
    alg = _algebra(cfg)
    params = _params(cfg, DIFFUSION_PARAMS)
    spec = _generator(cfg, ctx, params, alg)
    try:
        dcfg = DiffusionConfig(spec, params["t"], params["dt"], params["trials"], ctx.seed, ctx.threads,
                               params["chunk_size"] or DEFAULT_CHUNK)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad diffusion parameters: {exc}") from exc
    samples = simulate_diffusion_batch(dcfg)
    ctx.csv("samples.csv", alg.basis_names, samples)
    ctx.json("samples.json", {"t": dcfg.t, "dt": dcfg.dt, "seed": ctx.seed, "trials": len(samples),
                              "frame": spec.E, "drift": spec.B, "columns": list(alg.basis_names)})
    return {"trials": len(samples)}


def task_compare(cfg, ctx):
    from .diffusion import DiffusionConfig, generator_from_measure, simulate_diffusion_batch
    from .stats import two_sample_distance
    from .walk import walk_batch
    alg = _algebra(cfg)
    measure = _measure(cfg.get("measure"), alg)
    params = _params(cfg, {**WALK_PARAMS, "dt": 1e-3, "diffusion_trials": None})
    dec = _decomposition(cfg, alg, measure)
    wcfg = _walk_config(cfg, ctx, params, dec, measure)
    walk = walk_batch(wcfg).samples
    spec = generator_from_measure(dec, abelian_stats(measure, dec, rng=np.random.default_rng(ctx.seed)))
    n = params["diffusion_trials"] or wcfg.trials
    diff = simulate_diffusion_batch(DiffusionConfig(spec, 1.0, params["dt"], n, ctx.seed + 1, ctx.threads))
    rep = two_sample_distance(walk, diff, seed=ctx.seed)
    ctx.json("compare.json", rep.to_json())
    ctx.csv("projections.csv", ["projection", "ks"] + [f"u{i}" for i in range(alg.dim)],
            [[i, k, *u] for i, (k, u) in enumerate(zip(rep.ks, rep.directions))])
    return {"max_ks": rep.max_ks, "ks_pass": rep.ks_pass}


def task_be_curve(cfg, ctx):
    from .stats import berry_esseen_curve
    alg = _algebra(cfg)
    measure = _measure(cfg.get("measure"), alg)
    params = _params(cfg, {"Ns": None, "trials": 10**5, "bump": None, "reference": None, "reference_se": 0.0,
                           "dt": 1e-3, "diffusion_trials": 10**5})
    if not params["Ns"]:
        raise ConfigError("be-curve needs params.Ns")
    dec = _decomposition(cfg, alg, measure)
    f = _bump(params["bump"], alg.dim)
    base = {**WALK_PARAMS, "N": int(params["Ns"][0]), "trials": params["trials"]}
    wcfg = _walk_config(cfg, ctx, base, dec, measure)
    curve = berry_esseen_curve(wcfg, f, [int(n) for n in params["Ns"]], reference=params["reference"],
                               reference_se=params["reference_se"], seed=ctx.seed,
                               diffusion_trials=params["diffusion_trials"], dt=params["dt"])
    ctx.csv("be_curve.csv", ["N", "walk_mean", "walk_se", "error", "ci_low", "ci_high"], curve.to_rows())
    ctx.json("be_curve.json", {"slope": curve.slope, "reference": curve.reference,
                               "reference_se": curve.reference_se, "ratios": curve.ratios()})
    return {"slope": curve.slope}


def task_llt(cfg, ctx):
    from .diffusion import heisenberg_limit_density
    from .stats import llt_ratio
    alg = _algebra(cfg)
    measure = _measure(cfg.get("measure"), alg)
    params = _params(cfg, {**WALK_PARAMS, "bump": None, "density": "kde", "min_hits": 100, "deviation": None})
    dec = _decomposition(cfg, alg, measure)
    wcfg = _walk_config(cfg, ctx, params, dec, measure)
    f = _bump(params["bump"], alg.dim)
    density = None
    if params["density"] == "levy":
        if alg.dim != 3 or alg.step != 2 or np.any(dec.X):
            raise ConfigError("the Lévy density applies to the centered Heisenberg algebra only")
        rep = abelian_stats(measure, dec)
        w, v = np.linalg.eigh(rep.cov)
        frame = (v * np.sqrt(w)) @ v.T
        density = lambda pts: heisenberg_limit_density(pts, frame)
    elif params["density"] != "kde":
        raise ConfigError("params.density must be 'kde' or 'levy'")
    est = llt_ratio(wcfg, f, density=density, min_hits=params["min_hits"], deviation=params["deviation"])
    ctx.json("llt.json", est.to_json())
    return {"ratio": est.ratio, "hits": est.hits}


def task_support(cfg, ctx):
    from .diffusion import GeneratorSpec
    from .support import PiecewisePath, filiform_member, horizontal_endpoint, strichartz_integral
    alg = _algebra(cfg)
    params = _params(cfg, {"controls": None, "paths": None, "frame": None, "drift": None, "filiform": False,
                           "tol": 1e-9})
    dec = decompose(alg, _bias(cfg, alg))
    out, rows = {}, []
    if params["controls"] is not None:
        frame = params["frame"] if params["frame"] is not None else np.eye(alg.dim)
        drift = params["drift"] if params["drift"] is not None else np.zeros(alg.dim)
        spec = GeneratorSpec(dec, np.asarray(frame, dtype=float), np.asarray(drift, dtype=float))
        endpoints = []
        for seq in params["controls"]:
            try:
                ctrl = [([_exact_or_float(c) for c in u], _exact_or_float(t)) for u, t in seq]
                endpoints.append(horizontal_endpoint(spec, ctrl))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad control sequence: {exc}") from exc
        out["endpoints"] = [[Q.fraction_str(v) if not isinstance(v, float) else v for v in e] for e in endpoints]
        if params["filiform"]:
            out["membership"] = [filiform_member(e, params["tol"]) for e in endpoints]
        rows = [[k, *[float(v) for v in e]] for k, e in enumerate(endpoints)]
        ctx.csv("endpoints.csv", ["index", *alg.basis_names], rows)
    if params["paths"] is not None:
        try:
            ints = [strichartz_integral(dec, PiecewisePath(p["breaks"], p["values"])) for p in params["paths"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad path: {exc}") from exc
        out["integrals"] = [v.tolist() for v in ints]
    if not out:
        raise ConfigError("support needs params.controls or params.paths")
    ctx.json("support.json", out)
    return {k: len(v) for k, v in out.items()}


def _exact_or_float(v):
    if isinstance(v, str):
        return Q.to_fraction(v)
    return v


def task_check(cfg, ctx):
    from .stats import asymptotically_close
    from .support import dc_condition_check, gaussian_case_check
    alg = _algebra(cfg)
    task = ctx.task
    if task == "gaussian-check":
        _params(cfg, {})
        bias = _bias(cfg, alg)
        out = gaussian_case_check(alg, bias if bias is not None else Q.zero(alg.dim))
    elif task == "dc-check":
        params = _params(cfg, {"generators": None, "trials": 50})
        if not params["generators"]:
            raise ConfigError("dc-check needs params.generators")
        try:
            rep = dc_condition_check(alg, params["generators"], params["trials"], ctx.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        out = {"holds": rep.holds, "certificate": rep.certificate}
    else:
        _params(cfg, {"tol": 1e-9})
        mu1 = _measure(cfg.get("measure"), alg)
        mu2 = _measure(cfg.get("measure2"), alg, "measure2")
        dec = _decomposition(cfg, alg, mu1)
        try:
            out = {"close": asymptotically_close(mu1, mu2, dec, cfg.get("params", {}).get("tol", 1e-9))}
        except NotComparable as exc:
            out = {"close": None, "reason": str(exc)}
    ctx.json("check.json", out)
    return out


TASKS = {
    "algebra": task_algebra, "filtration": task_filtration, "simulate-walk": task_walk,
    "simulate-diffusion": task_diffusion, "compare-clt": task_compare, "berry-esseen": task_be_curve,
    "llt": task_llt, "support": task_support, "gaussian-check": task_check, "asymp-close": task_check,
    "dc-check": task_check,
}


# -- driver -------------------------------------------------------------------------------

class Context:
    def __init__(self, out, seed, threads, task):
        self.out, self.seed, self.threads, self.task = out, seed, threads, task
        self.files = []

    def _path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    def csv(self, name, header, rows):
        write_csv(self._path(name), list(header), rows)

    def json(self, name, data):
        write_json(self._path(name), data)


def build_parser():
    parser = argparse.ArgumentParser(prog="nilwalk", description="Random walks on nilpotent Lie groups.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="master RNG seed (unsigned 64-bit)")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--out", default=".", help="output directory")
    return parser


def run(command, config_path, seed=None, threads=1, out="."):
    """Run one experiment; returns the exit code.  The manifest is always written."""
    os.makedirs(out, exist_ok=True)
    started = time.time()
    manifest = {"command": command, "config": config_path, "versions": _versions()}
    code, result = EXIT_OK, None
    try:
        cfg = load_config(config_path)
        manifest["config_hash"] = config_hash(cfg)
        task = resolve_task(command, cfg)
        manifest["task"] = task
        ctx = Context(out, resolve_seed(seed, cfg, task), max(1, int(threads)), task)
        manifest["seed"] = ctx.seed
        manifest["outputs"] = ctx.files
        result = TASKS[task](cfg, ctx)
    except ConfigError as exc:
        code, manifest["error"] = EXIT_CONFIG, str(exc)
    except DegenerateCovariance as exc:
        code, manifest["error"] = EXIT_HYPOTHESIS, f"CLT hypothesis violated: {exc}"
    except InsufficientBudget as exc:
        code, manifest["error"] = EXIT_BUDGET, str(exc)
    except (AlgebraError, ValueError, KeyError, TypeError) as exc:
        code, manifest["error"] = EXIT_CONFIG, f"{type(exc).__name__}: {exc}"
    manifest["exit_code"] = code
    manifest["result"] = result
    manifest["seconds"] = round(time.time() - started, 3)
    write_json(os.path.join(out, "manifest.json"), manifest)
    if code:
        print(f"nilwalk: {manifest['error']}", file=sys.stderr)
    elif result is not None:
        print(json.dumps(result, default=_json_default, sort_keys=True))
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.seed, args.threads, args.out)


if __name__ == "__main__":
    sys.exit(main())
