"""Command-line front end: ``htcp {compound,verify,walk,simulate} --config FILE``.

Exit status: 0 success, 2 a checked tail equivalence failed, 1 computational
error (``error.json`` is written), 64 unreadable or invalid config.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import asymptotics as asy
from .compound import (NegBinCompoundSpec, PoissonCompoundSpec, lemma41_identity_check, log_compound,
                       negbin_compound, poisson_compound)
from .errors import HTCPError, SeriesTruncationError
from .families import family_from_dict
from .kernel import AtomPlusDensity, discretize
from .randomwalk import (WalkSpec, family_sampler, kolmogorov_distance, montecarlo_supremum,
                         spitzer_nu, supremum_from_nu, theorem42_ratio)
from .validation import check_seed, resolve_threads

log = logging.getLogger("htcp")

EXIT_OK, EXIT_ERROR, EXIT_VERDICT, EXIT_CONFIG = 0, 1, 2, 64
COMMANDS = ("compound", "verify", "walk", "simulate")


class ConfigError(Exception):
    pass


def load_schema() -> dict:
    return json.loads(resources.files("htcp").joinpath("schema.json").read_text(encoding="utf-8"))


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            config = json.load(fh)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(config, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {path} is invalid at {where}: {exc.message}") from exc
    return config


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _finite(obj):
    # strict JSON has no NaN or Infinity
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.generic):
        return _finite(obj.item())
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    return obj


def write_json(path: Path, obj):
    path.write_text(json.dumps(_finite(obj), sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def write_xy(path: Path, header: str, xs, ys):
    lines = [header] + [f"{x!r},{y!r}" for x, y in zip(np.asarray(xs, float).tolist(), np.asarray(ys, float).tolist())]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_manifest(out: Path):
    files = []
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            data = p.read_bytes()
            files.append({"path": p.relative_to(out).as_posix(), "bytes": len(data),
                          "sha256": hashlib.sha256(data).hexdigest()})
    write_json(out / "manifest.json", {"files": files})


# -- shared builders ------------------------------------------------------------


def _grid_density(config, **kw):
    g = config["grid"]
    return discretize(family_from_dict(config["family"]), g["origin"], g["step"], g["n_cells"], **kw)


def _walk_spec(config, params, seed):
    family = family_from_dict(config["family"])
    shift, sign = float(params.get("shift", 0.0)), int(params.get("sign", 1))
    g = config["grid"]
    rho = discretize(family, g["origin"], g["step"], g["n_cells"], loc=-shift, sign=sign)
    spec = WalkSpec(rho, sign * family.mean() - shift,
                    spitzer_depth=params.get("spitzer_depth", 200),
                    mc_paths=params.get("mc_paths", 100_000),
                    mc_barrier=params.get("barrier"),
                    seed=seed,
                    defect_bound=params.get("defect_bound", 1e-9),
                    series_tol=params.get("series_tol", 1e-12),
                    defect_side="right" if sign > 0 else "left")
    return spec, family, shift, sign


def _walk_tail(family, shift, sign):
    """``P(sign * Y - shift > x)``."""
    if sign == 1:
        return lambda x: family.sf(np.asarray(x, float) + shift)
    return lambda x: family.cdf(-(np.asarray(x, float) + shift))


def _window(params):
    if "window" not in params:
        raise ConfigError("this check needs params.window")
    return asy.TailWindow(**params["window"])


# -- commands ---------------------------------------------------------------------


def run_compound(config, params, out: Path, ctx) -> int:
    phi = _grid_density(config)
    series = params.get("series", "poisson")
    tol = params.get("series_tol", 1e-12)
    cap = params.get("max_terms", 512)
    if series == "poisson":
        lam, t = params.get("lam", 1.0), params.get("t", 1.0)
        p, report = poisson_compound(PoissonCompoundSpec(lam, t, phi, tol, cap))
        atom = math.exp(-lam * t)
    else:
        spec = NegBinCompoundSpec(params.get("alpha", 1.0), params.get("lam", 0.5), phi, tol, cap)
        if series == "negbin":
            p, report = negbin_compound(spec)
            atom = spec.c0
        else:
            p, report = log_compound(spec)
            atom = 0.0
    p.to_csv(out / "density.csv")
    side = json.loads(report.to_json())
    write_json(out / "series_report.json", {**side, "series": series, "atom": atom,
                                           "mass": p.mass, "config_hash": ctx["config_hash"]})
    return EXIT_OK


def run_verify(config, params, out: Path, ctx) -> int:
    check = params.get("check", "theorem11")
    tol = params.get("tolerance")
    series_tol = params.get("series_tol", 1e-12)
    meta = {"config_hash": ctx["config_hash"], "check": check}

    if check == "lemma41":
        tol = 1e-6 if tol is None else tol
        l1 = lemma41_identity_check(params.get("alpha", 1.0), params.get("lam", 0.5), _grid_density(config),
                                    series_tol)
        passed = l1 < tol
        write_json(out / "verdict.json", {**meta, "l1_distance": l1, "tol": tol, "passed": passed,
                                          "verdict": "identity holds" if passed else "identity fails"})
        return EXIT_OK if passed else EXIT_VERDICT

    w = _window(params)
    if check == "theorem42":
        spec, family, shift, sign = _walk_spec(config, params, ctx["seed"])
        rep = theorem42_ratio(spec, _walk_tail(family, shift, sign), w, 0.2 if tol is None else tol,
                              c=params.get("c", 1.0))
    elif check == "kesten":
        phi = _grid_density(config)
        k = asy.kesten_scan(phi, params.get("epsilon", 0.1), params.get("n_max", 8), params.get("x0", 0.0), w)
        write_json(out / "verdict.json", {**meta, **k.to_dict(), "window": w.to_dict(),
                                          "passed": not k.violated,
                                          "verdict": "finite bound" if not k.violated else "no finite bound"})
        return EXIT_OK if not k.violated else EXIT_VERDICT
    else:
        phi = _grid_density(config)
        family = family_from_dict(config["family"])
        kw = {} if tol is None else {"tol": tol}
        lam = params.get("lam", 1.0)
        if check == "theorem11":
            rep = asy.theorem11_ratio(phi, lam, w, series_tol=series_tol,
                                      square_integrable=getattr(family, "square_integrable", True), **kw)
        elif check == "corollary11":
            rep = asy.corollary11_scaling(phi, lam, params.get("t", 1.0), w, series_tol=series_tol, **kw)
        elif check == "theorem41":
            rep = asy.theorem41_ratio(phi, params.get("alpha", 1.0), params.get("lam", 0.5), w,
                                      series_tol=series_tol, **kw)
        elif check == "subexp":
            rep = asy.subexp_check(phi, w, **kw)
        elif check == "long_tail":
            rep = asy.long_tail_check(phi, params.get("shifts", [1.0]), w, **kw)
        elif check == "nfold":
            rep = asy.nfold_check(phi, params.get("n", 2), w, **kw)
        elif check == "local_subexp":
            rep = asy.local_subexp_check(AtomPlusDensity(0.0, phi), params.get("c", 1.0), w, **kw)
        else:
            rep = asy.sstar_check(phi, w, **kw)
    rep.to_csv(out / "report.csv")
    write_json(out / "verdict.json", {**meta, **rep.to_dict()})
    return EXIT_VERDICT if rep.passed is False else EXIT_OK


def _pi_outputs(sup, out: Path, n_points: int):
    dens = sup.pi.density
    dens.to_csv(out / "pi_density.csv")
    xs = np.linspace(0.0, dens.right, n_points)
    write_xy(out / "pi_cdf.csv", "x,F", xs, sup.pi.cdf(xs))


def run_walk(config, params, out: Path, ctx) -> int:
    spec, _, _, _ = _walk_spec(config, params, ctx["seed"])
    sr = spitzer_nu(spec)
    sup = supremum_from_nu(sr, spec.series_tol)
    _pi_outputs(sup, out, params.get("cdf_points", 1001))
    spitzer = sr.to_dict()
    write_json(out / "supremum.json", {**sup.to_dict(), "spitzer": spitzer, "mean": spec.mean,
                                       "config_hash": ctx["config_hash"]})
    return EXIT_OK


def run_simulate(config, params, out: Path, ctx) -> int:
    spec, family, shift, sign = _walk_spec(config, params, ctx["seed"])
    mc = montecarlo_supremum(spec, family_sampler(family, shift, sign), threads=ctx["threads"],
                             barrier_cap=params.get("barrier_cap", 400.0))
    top = params.get("x_upper", float(mc.maxima[-1]) if mc.paths else 0.0)
    mc.to_csv(out / "mc_cdf.csv", np.linspace(0.0, top, params.get("cdf_points", 1001)))
    summary = {**mc.to_dict(), "config_hash": ctx["config_hash"]}
    code = EXIT_OK
    if params.get("compare", False):
        sr = spitzer_nu(spec)
        sup = supremum_from_nu(sr, spec.series_tol)
        ks = kolmogorov_distance(sup.pi, mc.maxima, params.get("x_upper"))
        tol = params.get("ks_tolerance", 0.02)
        se = mc.positive_se
        summary["comparison"] = {"kolmogorov": ks, "tol": tol, "passed": ks < tol,
                                 "lambda_spitzer": sup.lambda_rw, "lambda_mc": mc.positive_fraction,
                                 "lambda_z": (mc.positive_fraction - sup.lambda_rw) / se if se > 0 else None}
        if not ks < tol:
            code = EXIT_VERDICT
    write_json(out / "simulate.json", summary)
    return code


RUNNERS = {"compound": run_compound, "verify": run_verify, "walk": run_walk, "simulate": run_simulate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="htcp", description="Heavy-tailed compound laws on grids.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (default: config output_dir or ./htcp-out)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (fallback: HTCP_THREADS)")
        p.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed, overrides params.seed")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        if config.get("command", args.command) != args.command:
            raise ConfigError(f"config is for {config['command']!r}, not {args.command!r}")
    except ConfigError as exc:
        print(f"htcp: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out or config.get("output_dir") or "htcp-out")
    out.mkdir(parents=True, exist_ok=True)
    params = config.get("params", {})
    ctx = {"config_hash": config_hash(config)}
    try:
        ctx["seed"] = check_seed(args.seed if args.seed is not None else params.get("seed", 0))
        ctx["threads"] = resolve_threads(args.threads)
        code = RUNNERS[args.command](config, params, out, ctx)
    except ConfigError as exc:
        print(f"htcp: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HTCPError, ValueError, ArithmeticError, MemoryError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command,
               "config_hash": ctx["config_hash"]}
        if isinstance(exc, SeriesTruncationError):
            err["cap"] = exc.cap
            err["needed_weight"] = exc.needed_weight
        write_json(out / "error.json", err)
        write_manifest(out)
        print(f"htcp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    write_manifest(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
