"""Command-line front end.

Subcommands: abscissa, eval, density-check, rearrange, translate-scan,
mc-sample, mv-check, mean-square, divergence-oracle.  Each run prints a JSON
summary (embedding the resolved configuration) to stdout and writes CSV
artifacts under --out.  Exit codes: 0 success, 2 precondition violation,
3 numeric failure (zero crossing, stall), 64 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import datetime
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .abscissa import estimate_abscissa
from .evaluate import (ZeroCrossingError, eval_prime_series, eval_tail_bounded,
                       partial_sum)
from .functionals import DiscreteMeasure, divergence_oracle, window_sum_check
from .geometry import CompactRect
from .rearrange import Stage, steer_rearrange
from .series import PreconditionError, make_builtin
from .translates import (finalize_scan, mean_square, mv_bound_check,
                         sample_random_phases, _scan_grid, translate_distances)

EXIT_OK = 0
EXIT_PRECONDITION = 2
EXIT_NUMERIC = 3
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class ExperimentConfig:
    """Resolved run configuration; round-trips through flat key=value INI."""

    command: str
    series: str = ""
    out: str = "."
    params: dict = field(default_factory=dict)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["run"] = {"command": self.command, "series": self.series,
                     "out": self.out}
        cp["params"] = {k: str(v) for k, v in sorted(self.params.items())}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        run = cp["run"]
        params = dict(cp["params"]) if cp.has_section("params") else {}
        return cls(command=run.get("command", ""),
                   series=run.get("series", ""),
                   out=run.get("out", "."),
                   params=params)

    def as_dict(self):
        return {"command": self.command, "series": self.series,
                "out": self.out, "params": dict(sorted(self.params.items()))}


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _parse_series(text: str):
    """family[:token-or-k=v,...] -> SeriesSpec."""
    if ":" in text:
        family, rest = text.split(":", 1)
    else:
        family, rest = text, ""
    kwargs = {}
    for part in filter(None, rest.split(",")):
        if "=" in part:
            k, v = part.split("=", 1)
            kwargs[k.strip()] = _parse_value(v.strip())
        elif part == "alternating":
            kwargs["phase"] = "alternating"
        elif part == "random":
            kwargs["phase"] = "random"
        else:
            raise UsageError(f"cannot parse series token {part!r}")
    if family == "custom" and "file" in kwargs:
        kwargs["path"] = str(kwargs.pop("file"))
    if family == "poly" and "d" in kwargs:
        kwargs["d"] = int(kwargs["d"])
    return make_builtin(family, **kwargs)


def _parse_value(v: str):
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def _parse_complex(text: str) -> complex:
    re, im = (float(x) for x in text.split(","))
    return complex(re, im)


def _parse_compact(text: str) -> CompactRect:
    parts = [float(x) for x in text.split(",")]
    if len(parts) == 4:
        return CompactRect(*parts)
    if len(parts) == 5:
        return CompactRect(parts[0], parts[1], parts[2], parts[3], int(parts[4]))
    raise UsageError("--compact needs re0,re1,im0,im1[,grid]")


def _parse_target(text: str, grid):
    if text.startswith("const:"):
        return complex(*[float(x) for x in (text[6:].split(",") + ["0"])[:2]])
    if text.startswith("file:"):
        data = np.loadtxt(text[5:], delimiter=",", comments="#")
        data = np.atleast_2d(data)
        vals = data[:, 0] + 1j * data[:, 1]
        if grid is not None and vals.size != grid.size:
            raise PreconditionError(
                f"target file has {vals.size} samples, grid has {grid.size}"
            )
        return vals
    raise UsageError("--target must be const:<re[,im]> or file:<path>")


def _write_csv(path, config, header, rows):
    ts = datetime.datetime.now(datetime.timezone.utc).isoformat()
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# generated={ts}\n")
        fh.write(f"# config={json.dumps(config.as_dict(), sort_keys=True)}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _emit(summary, config):
    out = {"config": config.as_dict()}
    out.update(summary)
    print(json.dumps(out, sort_keys=True))


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_abscissa(args, config):
    spec = _parse_series(args.series)
    kind = {"c": "convergence", "a": "absolute", "2": "square"}[args.kind]
    est = estimate_abscissa(spec, kind, args.nmax)
    value = "-inf" if est.minus_infinity else est.value
    config.params.update(kind=args.kind, nmax=str(args.nmax))
    _emit({"kind": kind, "value": value, "stability": est.stability,
           "n_used": est.n_used, "variant": est.variant}, config)
    return EXIT_OK


def _cmd_eval(args, config):
    spec = _parse_series(args.series)
    s = _parse_complex(args.s)
    config.params.update(s=args.s, method=args.method, n=str(args.n))
    if args.method == "partial":
        value = partial_sum(spec, args.n, s)
        res = {"re": value.real, "im": value.imag, "bound": None,
               "certified": False, "terms": args.n}
    elif args.method == "vdc":
        r = eval_tail_bounded(spec, s)
        res = {"re": r.value.real, "im": r.value.imag,
               "bound": r.remainder_bound, "certified": r.certified,
               "terms": r.terms_used}
    else:  # mobius
        if spec.family != "prime":
            raise PreconditionError("--method mobius needs --series prime")
        r = eval_prime_series(s, args.kmax)
        res = {"re": r.value.real, "im": r.value.imag,
               "bound": r.remainder_bound, "certified": r.certified,
               "terms": r.terms_used}
    _emit(res, config)
    return EXIT_OK


def _cmd_density_check(args, config):
    spec = _parse_series(args.series)
    lo, hi, step = (float(x) for x in args.xgrid.split(":"))
    grid = np.arange(lo, hi + step / 2, step)
    rep = window_sum_check(spec, args.alpha, args.beta, grid)
    config.params.update(alpha=_fmt(args.alpha), beta=_fmt(args.beta),
                         xgrid=args.xgrid)
    bounds = rep.bounds()
    rows = [(x, w, b, (w / b if b > 0 else math.inf))
            for x, w, b in zip(rep.x_grid, rep.window_sums, bounds)]
    _write_csv(os.path.join(args.out, "density_check.csv"), config,
               ["x", "window_sum", "bound", "ratio"], rows)
    _emit({"passed": rep.passed, "fitted_C": rep.fitted_C,
           "truncated": rep.truncated, "windows": len(rep.window_sums)}, config)
    return EXIT_OK


def _cmd_rearrange(args, config):
    spec = _parse_series(args.series)
    compact = _parse_compact(args.compact)
    if args.stages:
        stages = []
        with open(args.stages) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                p = line.split(",")
                stages.append(Stage(CompactRect(float(p[0]), float(p[1]),
                                                float(p[2]), float(p[3]),
                                                int(p[4])),
                                    float(p[5]), int(p[6])))
    else:
        stages = [Stage(compact, args.tol, args.budget)]
    target = _parse_target(args.target, None)
    trace = steer_rearrange(spec, target, stages, window=args.window)
    config.params.update(target=args.target, compact=args.compact,
                         window=str(args.window), budget=str(args.budget))
    _write_csv(os.path.join(args.out, "rearrange_prefix.csv"), config,
               ["step", "index"],
               [(i + 1, int(v)) for i, v in enumerate(trace.prefix)])
    _write_csv(os.path.join(args.out, "rearrange_checkpoints.csv"), config,
               ["step", "sup_error"], list(trace.checkpoints))
    summary = {
        "steps": int(trace.prefix.size),
        "stages": [
            {"index": r.index, "start_error": r.start_error,
             "end_error": r.end_error, "reached": r.reached_tolerance,
             "stalled": r.stalled} for r in trace.stage_records
        ],
        "stalled_stage": trace.stalled_stage,
    }
    _emit(summary, config)
    return EXIT_NUMERIC if trace.stalled_stage is not None else EXIT_OK


def _cmd_translate_scan(args, config):
    spec = _parse_series(args.series)
    compact = _parse_compact(args.compact)
    grid = compact.points()
    target = _parse_target(args.target, grid)
    config.params.update(target=args.target, compact=args.compact,
                         T=_fmt(args.T), step=_fmt(args.step),
                         eps=_fmt(args.eps))
    taus = _scan_grid(args.T, args.step)
    rows_path = os.path.join(args.out, "translate_scan.csv")
    side_path = os.path.join(args.out, "translate_scan.json")

    start_idx = 0
    dists = np.empty(taus.size)
    excl = np.zeros(taus.size, dtype=bool)
    if args.resume:
        with open(args.resume) as fh:
            side = json.load(fh)
        if side["config"] != config.as_dict():
            raise PreconditionError("resume config does not match this run")
        done = np.loadtxt(side["rows"], delimiter=",", comments="#",
                          skiprows=0, ndmin=2, usecols=(0, 1))
        start_idx = done.shape[0]
        dists[:start_idx] = done[:, 1]
        excl[:start_idx] = ~np.isfinite(done[:, 1])

    d2, e2 = translate_distances(spec, target, compact, args.T, args.step,
                                 start_idx, taus.size)
    dists[start_idx:] = d2
    excl[start_idx:] = e2
    rep = finalize_scan(spec, target, compact, args.T, args.step, args.eps,
                        dists, excl)

    thin = max(1, args.thin)
    rows = [(taus[i], dists[i]) for i in range(0, taus.size)
            if i % thin == 0 or (np.isfinite(dists[i]) and dists[i] < args.eps)]
    _write_csv(rows_path, config, ["tau", "distance"], rows)
    with open(side_path, "w") as fh:
        json.dump({"config": config.as_dict(), "rows": rows_path,
                   "last_tau": float(taus[-1])}, fh, sort_keys=True)
    _emit({
        "density": rep.density_estimate,
        "best_tau": rep.best_tau,
        "best_distance": rep.best_distance,
        "good_measure": rep.good_measure,
        "excluded_fraction": rep.excluded_fraction,
        "checkpoints": [[t, d, b if math.isfinite(b) else None]
                        for t, d, b in rep.checkpoints],
        "certified_bound": rep.certified_bound,
    }, config)
    return EXIT_OK


def _cmd_mc_sample(args, config):
    spec = _parse_series(args.series)
    s = _parse_complex(args.s)
    ps = sample_random_phases(spec, s, args.count, args.seed,
                              n_terms=args.n_terms)
    config.params.update(s=args.s, count=str(args.count), seed=str(args.seed),
                         n_terms=str(ps.n_terms))
    _write_csv(os.path.join(args.out, "mc_samples.csv"), config,
               ["re", "im"], [(z.real, z.imag) for z in ps.samples])
    mean = ps.samples.mean()
    _emit({"count": ps.count, "n_terms": ps.n_terms,
           "tail_ratio": ps.tail_ratio,
           "mean_re": mean.real, "mean_im": mean.imag,
           "second_moment": float(np.mean(np.abs(ps.samples) ** 2))}, config)
    return EXIT_OK


def _cmd_mv_check(args, config):
    rng = np.random.default_rng(args.seed)
    rows = []
    violations = 0
    for k in range(args.random):
        n = int(rng.integers(1, args.nmax + 1))
        lam = np.asarray(rng.normal(size=n) * 10.0)
        while np.unique(lam).size < n:
            lam = np.asarray(rng.normal(size=n) * 10.0)
        u = rng.normal(size=n) + 1j * rng.normal(size=n)
        lhs, rhs, holds = mv_bound_check(lam, u)
        violations += not holds
        rows.append((k, n, lhs, rhs, holds))
    config.params.update(random=str(args.random), nmax=str(args.nmax),
                         seed=str(args.seed))
    _write_csv(os.path.join(args.out, "mv_check.csv"), config,
               ["k", "n", "lhs", "rhs", "holds"], rows)
    _emit({"instances": args.random, "violations": violations}, config)
    return EXIT_OK if violations == 0 else EXIT_NUMERIC


def _cmd_mean_square(args, config):
    spec = _parse_series(args.series)
    value = mean_square(spec, args.sigma, args.T, args.dt)
    config.params.update(sigma=_fmt(args.sigma), T=_fmt(args.T),
                         dt=_fmt(args.dt))
    _emit({"value": value}, config)
    return EXIT_OK


def _cmd_divergence_oracle(args, config):
    spec = _parse_series(args.series)
    atoms = []
    for part in args.atoms.split(";"):
        re, im, wre, wim = (float(x) for x in part.split(","))
        atoms.append((complex(re, im), complex(wre, wim)))
    mu = DiscreteMeasure(tuple(atoms))
    thresholds = ([float(x) for x in args.thresholds.split(",")]
                  if args.thresholds else [])
    rep = divergence_oracle(spec, mu, args.nmax, thresholds)
    config.params.update(atoms=args.atoms, nmax=str(args.nmax),
                         thresholds=args.thresholds or "")
    _write_csv(os.path.join(args.out, "divergence_checkpoints.csv"), config,
               ["n", "running_sum"], list(rep.checkpoints))
    _emit({
        "total": rep.total,
        "evidence": rep.evidence,
        "crossings": {_fmt(t): i for t, i in rep.crossings.items()},
    }, config)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _build_parser():
    p = _Parser(prog="dulab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--series", required=True)
        sp.add_argument("--out", default=".")
        sp.add_argument("--config", default=None)

    sp = sub.add_parser("abscissa")
    common(sp)
    sp.add_argument("--kind", choices=["c", "a", "2"], required=True)
    sp.add_argument("--nmax", type=int, default=10**6)

    sp = sub.add_parser("eval")
    common(sp)
    sp.add_argument("--s", required=True)
    sp.add_argument("--method", choices=["partial", "vdc", "mobius"],
                    default="partial")
    sp.add_argument("--n", type=int, default=10000)
    sp.add_argument("--kmax", type=int, default=30)

    sp = sub.add_parser("density-check")
    common(sp)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--xgrid", required=True, help="lo:hi:step")

    sp = sub.add_parser("rearrange")
    common(sp)
    sp.add_argument("--target", required=True)
    sp.add_argument("--compact", required=True)
    sp.add_argument("--stages", default=None)
    sp.add_argument("--window", type=int, default=64)
    sp.add_argument("--budget", type=int, default=10**6)
    sp.add_argument("--tol", type=float, default=0.05)

    sp = sub.add_parser("translate-scan")
    common(sp)
    sp.add_argument("--target", required=True)
    sp.add_argument("--compact", required=True)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--step", type=float, required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--resume", default=None)
    sp.add_argument("--thin", type=int, default=1)

    sp = sub.add_parser("mc-sample")
    common(sp)
    sp.add_argument("--s", required=True)
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--n-terms", type=int, default=None)

    sp = sub.add_parser("mv-check")
    sp.add_argument("--random", type=int, required=True)
    sp.add_argument("--nmax", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=".")
    sp.add_argument("--config", default=None)

    sp = sub.add_parser("mean-square")
    common(sp)
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--dt", type=float, default=0.1)

    sp = sub.add_parser("divergence-oracle")
    common(sp)
    sp.add_argument("--atoms", required=True,
                    help="re,im,wre,wim[;re,im,wre,wim...]")
    sp.add_argument("--nmax", type=int, default=10**6)
    sp.add_argument("--thresholds", default=None)

    return p


_DISPATCH = {
    "abscissa": _cmd_abscissa,
    "eval": _cmd_eval,
    "density-check": _cmd_density_check,
    "rearrange": _cmd_rearrange,
    "translate-scan": _cmd_translate_scan,
    "mc-sample": _cmd_mc_sample,
    "mv-check": _cmd_mv_check,
    "mean-square": _cmd_mean_square,
    "divergence-oracle": _cmd_divergence_oracle,
}


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.config:
        base = ExperimentConfig.from_ini(open(args.config).read())
        for k, v in base.params.items():
            if getattr(args, k.replace("-", "_"), None) is None:
                setattr(args, k.replace("-", "_"), _parse_value(v))
        if getattr(args, "series", None) in (None, "") and base.series:
            args.series = base.series
    config = ExperimentConfig(command=args.command,
                              series=getattr(args, "series", ""),
                              out=args.out)
    try:
        return _DISPATCH[args.command](args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PreconditionError as exc:
        print(json.dumps({"error": {"type": "precondition",
                                    "message": str(exc)},
                          "config": config.as_dict()}), file=sys.stdout)
        return EXIT_PRECONDITION
    except ZeroCrossingError as exc:
        print(json.dumps({"error": {"type": "zero-crossing",
                                    "message": str(exc)},
                          "config": config.as_dict()}), file=sys.stdout)
        return EXIT_NUMERIC


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
