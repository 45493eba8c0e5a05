"""Command-line interface.

Subcommands: analyze, coverage, pivot, concentration, contaminate, tails,
scenario.  Results go to stdout (or --out); every run is a pure function of
its flags, input files, and seed.  Errors are written to stderr as one-line
JSON {code, message}; exit status is 0 on success, 1 on validation errors,
and 2 on numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from misspec import montecarlo, serialize
from misspec.errors import InputError, MisspecError, NumericalError
from misspec.inference import InferenceConfig, analyze
from misspec.model import ModelInstance
from misspec.posteriors import ThetaPrior
from misspec.priors import ScaledPrior, parse_radial
from misspec.scenarios import (
    IVDgpParams,
    IVScenario,
    LogitScenario,
    iv_population_model,
    iv_sample,
    logit_population_model,
)


class _UsageError(Exception):
    def __init__(self, message: str, usage: str):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message, self.format_usage())


def _csv_floats(text: str, name: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise InputError(f"--{name} must be a comma-separated float list") from exc


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _default_v(p: int, raw: str | None) -> np.ndarray:
    if raw is None:
        v = np.zeros(p)
        v[0] = 1.0
        return v
    vals = _csv_floats(raw, "v")
    if len(vals) != p:
        raise InputError(f"--v must have {p} entries, got {len(vals)}")
    return np.asarray(vals)


def _fixture(args, default_x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(X, W) for simulation fixtures: from a model file or the built-in table."""
    if getattr(args, "model", None):
        m = serialize.load_model(args.model)
        return np.asarray(m.X), np.asarray(m.W)
    return default_x.copy(), np.eye(default_x.shape[0])


def _cmd_analyze(args) -> int:
    model = serialize.load_model(args.model)
    cfg = InferenceConfig(v=_default_v(model.p, args.v), level=args.level)
    ds = tuple(_csv_floats(args.d, "d")) if args.d else ()
    report = analyze(model, cfg, ds)
    _write(serialize.dumps(serialize.report_to_dict(report)) + "\n", args.out)
    return 0


def _cmd_coverage(args) -> int:
    x, w = _fixture(args, montecarlo.DEFAULT_COVERAGE_X)
    p = x.shape[1]
    cfg = InferenceConfig(v=_default_v(p, args.v), level=args.level)
    mean = (
        np.zeros(p)
        if args.theta_mean is None
        else np.asarray(_csv_floats(args.theta_mean, "theta-mean"))
    )
    theta_prior = ThetaPrior.gaussian(mean, args.theta_sd)
    eta_prior = ScaledPrior(family=parse_radial(args.radial), c=args.c, W=w)
    result = montecarlo.run_coverage(
        x, w, theta_prior, eta_prior, cfg, reps=args.reps, seed=args.seed
    )
    _write(serialize.dumps(serialize.coverage_to_dict(result)) + "\n", args.out)
    return 0


def _cmd_pivot(args) -> int:
    x, w = _fixture(args, montecarlo.DEFAULT_PIVOT_X)
    p = x.shape[1]
    cfg = InferenceConfig(v=_default_v(p, args.v), level=args.level)
    eta_prior = ScaledPrior(family=parse_radial(args.radial), c=args.c, W=w)
    ks = montecarlo.run_pivotality(
        x,
        w,
        eta_prior,
        cfg,
        reps=args.reps,
        seed=args.seed,
        negative_control=args.negative_control,
    )
    payload = {
        "ks": ks,
        "threshold_1pct": 1.63 / np.sqrt(args.reps),
        "dof": x.shape[0] - p,
        "reps": args.reps,
        "seed": args.seed,
        "radial": args.radial,
        "c": args.c,
        "negative_control": args.negative_control,
    }
    _write(serialize.dumps(payload) + "\n", args.out)
    return 0


def _cmd_concentration(args) -> int:
    model = serialize.load_model(args.model)
    trace = montecarlo.run_concentration(
        model,
        parse_radial(args.radial),
        np.asarray(_csv_floats(args.c_grid, "c-grid")),
        _csv_floats(args.eps, "eps"),
        grid_points=args.grid_points,
    )
    _write(serialize.trace_to_csv(trace), args.out)
    return 0


def _cmd_contaminate(args) -> int:
    model = serialize.load_model(args.model)
    contaminant = ScaledPrior(
        family=parse_radial(args.contaminant), c=args.contaminant_c, W=np.asarray(model.W)
    )
    trace = montecarlo.run_contamination(
        model,
        parse_radial(args.radial),
        contaminant,
        args.phi,
        np.asarray(_csv_floats(args.c_grid, "c-grid")),
        eps_list=_csv_floats(args.eps, "eps"),
        grid_points=args.grid_points,
    )
    _write(serialize.trace_to_csv(trace), args.out)
    return 0


def _cmd_tails(args) -> int:
    table = montecarlo.run_tails(
        parse_radial(args.radial),
        _csv_floats(args.a, "a"),
        _csv_floats(args.tau, "tau"),
        _csv_floats(args.c, "c"),
        k=args.k,
    )
    _write(serialize.tails_to_csv(table), args.out)
    return 0


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"cannot parse JSON from {path}: {exc}") from exc


def _cmd_scenario(args) -> int:
    params = _load_json(args.params)
    if args.kind == "iv":
        try:
            scenario = IVScenario(
                k=int(params["k"]),
                theta_ate=float(params["theta_ate"]),
                beta_vec=np.asarray(params["beta_vec"], dtype=np.float64),
                first_stage=np.asarray(params["first_stage"], dtype=np.float64),
                z_cov=np.asarray(params["z_cov"], dtype=np.float64),
            )
        except KeyError as exc:
            raise InputError(f"iv scenario params missing field {exc}") from exc
        if args.sample is None:
            model = iv_population_model(scenario)
        else:
            dgp_raw = params.get("dgp", {})
            dgp = IVDgpParams(
                c0=float(dgp_raw.get("c0", 0.0)),
                c=np.asarray(dgp_raw["c"], dtype=np.float64) if "c" in dgp_raw else 0.5,
                delta=float(dgp_raw.get("delta", 1.0)),
                theta_bar=float(dgp_raw.get("theta_bar", 1.0)),
            )
            yn, xn, wn = iv_sample(scenario, args.sample, dgp, seed=args.seed)
            model = ModelInstance(Y=yn, X=xn, W=wn)
    else:
        try:
            scenario = LogitScenario(
                support=np.asarray(params["support"], dtype=np.float64),
                probs=np.asarray(params["probs"], dtype=np.float64),
                cond_means=np.asarray(params["cond_means"], dtype=np.float64),
                x_star=(float(params["x_star"][0]), float(params["x_star"][1])),
            )
        except KeyError as exc:
            raise InputError(f"logit scenario params missing field {exc}") from exc
        model = logit_population_model(scenario)
    _write(serialize.dumps(serialize.model_to_dict(model)) + "\n", args.out)
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="misspec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("analyze", help="inference report for a model JSON file")
    sp.add_argument("--model", required=True)
    sp.add_argument("--v", default=None, help="comma-separated linear combination")
    sp.add_argument("--level", type=float, default=0.95)
    sp.add_argument("--d", default=None, help="comma-separated norm bounds")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_analyze)

    sp = sub.add_parser("coverage", help="Monte Carlo average-coverage experiment")
    sp.add_argument("--model", default=None, help="model JSON supplying (X, W)")
    sp.add_argument("--v", default=None)
    sp.add_argument("--level", type=float, default=0.95)
    sp.add_argument("--radial", default="normal")
    sp.add_argument("--c", type=float, default=1.0)
    sp.add_argument("--theta-sd", dest="theta_sd", type=float, default=10.0)
    sp.add_argument("--theta-mean", dest="theta_mean", default=None)
    sp.add_argument("--reps", type=int, default=20_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_coverage)

    sp = sub.add_parser("pivot", help="pivotal t-statistic KS experiment")
    sp.add_argument("--model", default=None)
    sp.add_argument("--v", default=None)
    sp.add_argument("--level", type=float, default=0.95)
    sp.add_argument("--radial", default="normal")
    sp.add_argument("--c", type=float, default=1.0)
    sp.add_argument("--reps", type=int, default=10_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--negative-control", action="store_true")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_pivot)

    sp = sub.add_parser("concentration", help="posterior concentration sweep over c")
    sp.add_argument("--model", required=True)
    sp.add_argument("--radial", default="normal")
    sp.add_argument("--c-grid", dest="c_grid", required=True)
    sp.add_argument("--eps", default="0.1")
    sp.add_argument("--grid-points", dest="grid_points", type=int, default=2001)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_concentration)

    sp = sub.add_parser("contaminate", help="prior contamination sweep over c")
    sp.add_argument("--model", required=True)
    sp.add_argument("--radial", default="normal", help="base (concentrating) family")
    sp.add_argument("--contaminant", default="normal")
    sp.add_argument("--contaminant-c", dest="contaminant_c", type=float, default=1.0)
    sp.add_argument("--phi", type=float, required=True)
    sp.add_argument("--c-grid", dest="c_grid", required=True)
    sp.add_argument("--eps", default="0.05")
    sp.add_argument("--grid-points", dest="grid_points", type=int, default=1601)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_contaminate)

    sp = sub.add_parser("tails", help="conditional radial tail-ratio table")
    sp.add_argument("--radial", required=True)
    sp.add_argument("--a", default="1.5,2,4")
    sp.add_argument("--tau", default="1")
    sp.add_argument("--c", default="1e-4")
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_tails)

    sp = sub.add_parser("scenario", help="emit a model JSON from a scenario file")
    sp.add_argument("kind", choices=["iv", "logit"])
    sp.add_argument("--params", required=True)
    sp.add_argument("--sample", type=int, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_scenario)

    return parser


def _fail(code: int, message: str) -> int:
    sys.stderr.write(serialize.dumps({"code": code, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(exc.usage)
        return _fail(1, str(exc))
    try:
        return args.func(args)
    except NumericalError as exc:
        return _fail(2, str(exc))
    except InputError as exc:
        return _fail(1, str(exc))
    except MisspecError as exc:
        return _fail(1, str(exc))
    except OSError as exc:
        return _fail(1, f"i/o error: {exc}")


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
