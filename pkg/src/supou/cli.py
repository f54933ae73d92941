"""Command-line entry point: ``supou {simulate,moments,weakdep,estimate,montecarlo}``.

Settings come from a key = value file (``--config``), then dedicated flags, then
``--set key=value`` overrides. Exit codes: 0 success, 2 configuration error,
3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analytics.covariance import NumericalError, sigma_matrix
from .analytics.cumulants import PoleError
from .analytics.moments import jacobian, model_vector, returns_moments, supou_moments
from .gmm import EstimationError, GmmConfig, RankError, estimate
from .levy import (
    ExponentialJumps,
    GammaJumps,
    GammaMeanReversion,
    SubordinatorSpec,
    levy_cumulants,
    replication_rng,
    theta_from_specs,
)
from .montecarlo import PARAMS, run_replications, summarize, theoretical_sd
from .simulate import (
    DegenerateVolatilityError,
    ResourceError,
    read_series_csv,
    simulate_returns,
    simulate_supou_path,
    truncation_horizon,
    write_series_csv,
)
from .weakdep import QuadratureError, SUPOU_VARIANTS, gate_report, returns_curve, supou_curve

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

DEFAULTS = {
    "levy.gamma0": "0.0",
    "levy.rate": "1.0",
    "levy.jump": "exponential",
    "levy.jump_mean": "1.0",
    "levy.jump_shape": "2.0",
    "pi.B": "-0.2",
    "pi.alpha_pi": "5.0",
    "kind": "supou",
    "N": "10000",
    "delta": "1.0",
    "m": "6",
    "tol": "1e-6",
    "weighting": "identity",
    "sandwich": "theory",
    "bandwidth": "auto",
    "replications": "100",
    "workers": "0",
    "variant": "subordinator_l2",
    "r_max": "100",
    "r_points": "101",
    "delta_moment": "2.0",
}
STOCHASTIC = ("simulate", "montecarlo")


class ConfigError(ValueError):
    pass


class PartialResults(RuntimeError):
    """A replication failed; what finished has been written to ``path``."""

    def __init__(self, message: str, path: Path):
        super().__init__(f"{message}; partial results in {path}")
        self.path = path


# configuration -----------------------------------------------------------------------------


def _read_config_file(path: Path) -> dict:
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    text = path.read_text()
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    out = {}
    for section in parser.sections():
        prefix = "" if section == "run" else section + "."
        for key, value in parser.items(section):
            out[prefix + key] = value
    return out


@dataclass(frozen=True)
class RunConfig:
    command: str
    values: dict
    out: Path
    figures: bool

    def get(self, key: str) -> str:
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"missing setting {key!r}") from None

    def number(self, key: str) -> float:
        raw = self.get(key)
        try:
            v = float(raw)
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {raw!r}") from None
        if not math.isfinite(v):
            raise ConfigError(f"{key} must be finite")
        return v

    def integer(self, key: str) -> int:
        v = self.number(key)
        if v != int(v):
            raise ConfigError(f"{key} must be an integer, got {self.get(key)!r}")
        return int(v)

    @property
    def seed(self) -> Optional[int]:
        return self.integer("seed") if "seed" in self.values else None

    def to_text(self) -> str:
        lines = [f"# supou {__version__} {self.command}"]
        lines += [f"{k} = {self.values[k]}" for k in sorted(self.values)]
        return "\n".join(lines) + "\n"

    # model pieces

    def subordinator(self) -> SubordinatorSpec:
        law = self.get("levy.jump")
        try:
            if law == "exponential":
                jumps = ExponentialJumps(self.number("levy.jump_mean"))
            elif law == "gamma":
                shape = self.number("levy.jump_shape")
                jumps = GammaJumps(shape, self.number("levy.jump_mean") / shape)
            else:
                raise ConfigError(f"levy.jump must be 'exponential' or 'gamma', got {law!r}")
            return SubordinatorSpec(self.number("levy.gamma0"), self.number("levy.rate"), jumps)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def mixing(self) -> GammaMeanReversion:
        try:
            return GammaMeanReversion(self.number("pi.B"), self.number("pi.alpha_pi"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def kind(self) -> str:
        k = self.get("kind")
        if k not in ("supou", "returns"):
            raise ConfigError(f"kind must be 'supou' or 'returns', got {k!r}")
        return k

    def gmm(self) -> GmmConfig:
        bw = self.get("bandwidth")
        try:
            return GmmConfig(
                kind=self.kind(),
                m=self.integer("m"),
                delta=self.number("delta"),
                weighting=self.get("weighting"),
                seed=self.seed or 0,
                bandwidth=bw if bw == "auto" else int(bw),
                levy_family=self.subordinator(),
                sandwich=self.get("sandwich"),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


_FLAG_KEYS = {
    "kind": "kind",
    "n": "N",
    "delta": "delta",
    "m": "m",
    "tol": "tol",
    "seed": "seed",
    "replications": "replications",
    "weighting": "weighting",
    "input": "input",
    "variant": "variant",
    "workers": "workers",
}


def build_config(args: argparse.Namespace) -> RunConfig:
    values = dict(DEFAULTS)
    if args.config:
        try:
            values.update(_read_config_file(Path(args.config)))
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc}") from exc
    for attr, key in _FLAG_KEYS.items():
        v = getattr(args, attr, None)
        if v is not None:
            values[key] = str(v)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    cfg = RunConfig(args.command, values, Path(args.out), bool(args.figures))
    if args.command in STOCHASTIC and cfg.seed is None:
        raise ConfigError(f"'{args.command}' is stochastic and needs --seed (or seed in the config)")
    return cfg


# outputs -----------------------------------------------------------------------------------


def _prepare(cfg: RunConfig) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "config.used").write_text(cfg.to_text())
    return cfg.out


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# subcommands -------------------------------------------------------------------------------


def run_simulate(cfg: RunConfig) -> list[Path]:
    n = cfg.integer("N")
    if n < 1:
        raise ConfigError(f"N must be at least 1, got {n}")
    spec, pi, kind = cfg.subordinator(), cfg.mixing(), cfg.kind()
    delta, tol = cfg.number("delta"), cfg.number("tol")
    rng = replication_rng(cfg.seed, 0)
    if kind == "supou":
        sim = simulate_supou_path(spec, pi, n, delta, tol, rng)
        vol = None
    else:
        sim = simulate_returns(spec, pi, n, delta, tol, rng)
        vol = sim.volatility
    out = _prepare(cfg)
    series = out / "series.csv"
    write_series_csv(series, sim.values, vol)
    meta = {
        "tool": "supou",
        "version": __version__,
        "kind": kind,
        "N": n,
        "delta": delta,
        "seed": cfg.seed,
        "tol": tol,
        "truncation_horizon": sim.horizon,
        "theta0": dict(zip(PARAMS, theta_from_specs(spec, pi).as_array().tolist())),
        "config": {k: cfg.values[k] for k in sorted(cfg.values)},
    }
    sidecar = out / "series.meta.json"
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    files = [series, sidecar]
    if cfg.figures:
        from .plotting import series_figure

        files.append(series_figure(sim.values, out / "series.png", "X" if kind == "supou" else "Y"))
    return files


def run_moments(cfg: RunConfig, with_sigma: bool = False) -> list[Path]:
    spec, pi = cfg.subordinator(), cfg.mixing()
    theta = theta_from_specs(spec, pi)
    delta, m = cfg.number("delta"), cfg.integer("m")
    sm = supou_moments(theta, delta, m)
    rm = returns_moments(theta, delta, m, at_pole="quadrature")
    rows = [("supou", "mean", sm.mean), ("supou", "variance", sm.variance)]
    rows += [("supou", f"D({k})", sm.autocov[k]) for k in range(m + 1)]
    rows += [
        ("returns", "E[Y^2]", rm.mean),
        ("returns", "Var(Y^2)", rm.variance),
        ("returns", "Var(V)", rm.volatility_variance),
    ]
    rows += [("returns", f"Cov(Y^2_1,Y^2_{1 + k})", rm.autocov[k]) for k in range(1, m + 1)]
    out = _prepare(cfg)
    path = out / "moments.csv"
    _write_rows(path, ["model", "quantity", "value"], [(a, b, _fmt(v)) for a, b, v in rows])
    files = [path]
    kind = cfg.kind()
    mv = model_vector(theta, kind, delta, m, at_pole="quadrature")
    G = jacobian(theta, kind, delta, m)
    jpath = out / "jacobian.csv"
    _write_rows(jpath, ["component", "model_value", *PARAMS], [(i, _fmt(mv[i]), *map(_fmt, G[i])) for i in range(m + 2)])
    files.append(jpath)
    if with_sigma:
        S = sigma_matrix(theta, levy_cumulants(spec), kind, delta, m)
        spath = out / "sigma.csv"
        _write_rows(spath, [f"c{j}" for j in range(m + 2)], [[_fmt(v) for v in row] for row in S.matrix])
        files.append(spath)
    return files


def run_weakdep(cfg: RunConfig) -> list[Path]:
    spec, pi = cfg.subordinator(), cfg.mixing()
    theta = theta_from_specs(spec, pi)
    variant = cfg.get("variant")
    r_max, points = cfg.number("r_max"), cfg.integer("r_points")
    if points < 2 or r_max <= 0:
        raise ConfigError("need r_points >= 2 and r_max > 0")
    if variant == "returns":
        curve = returns_curve(theta, cfg.number("delta"), np.linspace(1.0, max(r_max, 1.0), points))
    elif variant in SUPOU_VARIANTS:
        if variant == "zero_mean":
            raise ConfigError("zero_mean needs a centred driving process, which a subordinator is not")
        curve = supou_curve(theta, np.linspace(0.0, r_max, points), variant)
    else:
        raise ConfigError(f"variant must be one of {SUPOU_VARIANTS + ('returns',)}, got {variant!r}")
    out = _prepare(cfg)
    cpath = out / "coefficients.csv"
    _write_rows(cpath, ["r", "coefficient"], [(_fmt(r), _fmt(v)) for r, v in zip(curve.r, curve.values)])
    gates = gate_report(theta, cfg.number("delta_moment"))
    gpath = out / "gates.csv"
    _write_rows(
        gpath,
        ["theorem", "subject", "threshold", "required", "value", "passed"],
        [(g.theorem, g.subject, _fmt(g.threshold), _fmt(g.required), _fmt(g.value), _fmt(g.passed)) for g in gates],
    )
    files = [cpath, gpath]
    if cfg.figures:
        from .plotting import curve_figure

        files.append(curve_figure(curve.r, curve.values, out / "coefficients.png", variant))
    return files


def run_estimate(cfg: RunConfig) -> list[Path]:
    if "input" not in cfg.values:
        raise ConfigError("estimate needs --input (a series CSV)")
    data = read_series_csv(Path(cfg.get("input")))
    gcfg = cfg.gmm()
    res = estimate(data, gcfg)
    out = _prepare(cfg)
    epath = out / "estimate.csv"
    _write_rows(
        epath,
        ["parameter", "estimate", "std_error", "on_boundary"],
        [
            (p, _fmt(v), _fmt(s), _fmt(p in res.on_boundary))
            for p, v, s in zip(PARAMS, res.theta_hat.as_array(), res.std_errors)
        ],
    )
    gates = [g for g in gate_report(res.theta_hat, cfg.number("delta_moment")) if g.theorem.startswith("asy_mom")]
    lines = [
        f"GMM estimate ({gcfg.kind}, m={gcfg.m}, weighting={gcfg.weighting}, N={res.n_obs})",
        "",
        f"{'parameter':<10}{'estimate':>14}{'std error':>14}",
    ]
    lines += [f"{p:<10}{v:>14.6g}{s:>14.6g}" for p, v, s in zip(PARAMS, res.theta_hat.as_array(), res.std_errors)]
    lines += [
        "",
        f"objective        {res.objective:.6g}",
        f"J statistic      {res.j_statistic:.6g} (N g'Wg)",
        f"converged        {res.converged} (restart {res.restart_winner}, {res.iterations} iterations)",
        f"weight floored   {res.weight_floored}",
        f"on box boundary  {', '.join(res.on_boundary) or 'none'}",
        f"smallest singular value of G  {res.jacobian_min_singular:.3g}",
        "",
        f"limit-theorem gates at the estimate (delta = {cfg.get('delta_moment')}):",
    ]
    lines += [f"  {g.theorem:<10} alpha_pi > {g.required:.6g}: {'pass' if g.passed else 'FAIL'}" for g in gates]
    lines += ["", "config:", cfg.to_text()]
    rpath = out / "report.txt"
    rpath.write_text("\n".join(lines))
    return [epath, rpath]


def run_montecarlo(cfg: RunConfig) -> list[Path]:
    reps_wanted = cfg.integer("replications")
    if reps_wanted < 2:
        raise ConfigError("montecarlo needs at least 2 replications")
    spec, pi = cfg.subordinator(), cfg.mixing()
    gcfg = cfg.gmm()
    n = cfg.integer("N")
    if n <= 10 * (gcfg.m + 2):
        raise ConfigError(f"N = {n} is too small for m = {gcfg.m}")
    workers = cfg.integer("workers") or None
    reps = run_replications(spec, pi, n, reps_wanted, gcfg, cfg.seed, cfg.number("tol"), workers)
    out = _prepare(cfg)
    rpath = out / "replications.csv"
    header = ["index", *PARAMS, *(f"se_{p}" for p in PARAMS), "objective", "converged", "error"]
    _write_rows(
        rpath,
        header,
        [(r.index, *map(_fmt, r.theta_hat), *map(_fmt, r.std_errors), _fmt(r.objective), _fmt(r.converged), r.error) for r in reps],
    )
    failed = [r for r in reps if r.error]
    if failed:
        raise PartialResults(f"replication {failed[0].index} failed: {failed[0].error}", rpath)
    theta0 = theta_from_specs(spec, pi).as_array()
    s = summarize(reps, theta0, n - gcfg.m, theoretical_sd(spec, pi, gcfg))
    spath = out / "summary.csv"
    cols = ["theta0", "median", "median_bias", "mean_bias", "median_mc_se", "empirical_sd", "theoretical_sd", "sd_ratio", "coverage"]
    _write_rows(spath, ["parameter", *cols], [(p, *(_fmt(getattr(s, c)[i]) for c in cols)) for i, p in enumerate(PARAMS)])
    lines = [
        f"Monte Carlo: {s.replications} replications, kind={gcfg.kind}, N={n}, m={gcfg.m}, weighting={gcfg.weighting}",
        "",
        f"{'parameter':<10}{'true':>10}{'median':>12}{'bias':>12}{'MC se':>10}{'sd ratio':>10}{'cover95':>10}",
    ]
    for i, p in enumerate(PARAMS):
        lines.append(
            f"{p:<10}{theta0[i]:>10.4g}{s.median[i]:>12.5g}{s.median_bias[i]:>12.4g}"
            f"{s.median_mc_se[i]:>10.3g}{s.sd_ratio[i]:>10.3f}{s.coverage[i]:>10.3f}"
        )
    lines += ["", "sd ratio: empirical sd of sqrt(N)(theta_hat - theta0) over sqrt(diag(M Sigma M')) at theta0", ""]
    lines += ["config:", cfg.to_text()]
    tpath = out / "report.txt"
    tpath.write_text("\n".join(lines))
    files = [rpath, spath, tpath]
    if cfg.figures:
        from .plotting import estimates_figure

        est = np.array([r.theta_hat for r in reps])
        files.append(estimates_figure(est, theta0, PARAMS, out / "estimates.png"))
    return files


# entry point -------------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="supou", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"supou {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value settings file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--delta", type=float)
        sp.add_argument("--figures", action="store_true", help="also render PNG figures (needs matplotlib)")
        return sp

    s = common(sub.add_parser("simulate", help="simulate a supOU path or supOU-SV returns"))
    s.add_argument("--kind", choices=["supou", "returns"])
    s.add_argument("-N", "--n", type=int)
    s.add_argument("--tol", type=float)

    s = common(sub.add_parser("moments", help="closed-form moments, model vector and Jacobian"))
    s.add_argument("--kind", choices=["supou", "returns"])
    s.add_argument("--m", type=int)
    s.add_argument("--sigma", action="store_true", help="also write the long-run covariance matrix")

    s = common(sub.add_parser("weakdep", help="weak-dependence coefficients and theorem gates"))
    s.add_argument("--variant")

    s = common(sub.add_parser("estimate", help="GMM estimation from a series CSV"))
    s.add_argument("--input")
    s.add_argument("--kind", choices=["supou", "returns"])
    s.add_argument("--m", type=int)
    s.add_argument("--weighting", choices=["identity", "two_step_hac", "two_step_theory"])

    s = common(sub.add_parser("montecarlo", help="replicated simulation and estimation"))
    s.add_argument("--kind", choices=["supou", "returns"])
    s.add_argument("-N", "--n", type=int)
    s.add_argument("--m", type=int)
    s.add_argument("--tol", type=float)
    s.add_argument("--replications", type=int)
    s.add_argument("--weighting", choices=["identity", "two_step_hac", "two_step_theory"])
    s.add_argument("--workers", type=int)
    return p


_NUMERIC = (
    NumericalError,
    PoleError,
    QuadratureError,
    EstimationError,
    RankError,
    DegenerateVolatilityError,
    ResourceError,
    ArithmeticError,
    np.linalg.LinAlgError,
    PartialResults,
)


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = build_config(args)
        if cfg.command == "simulate":
            files = run_simulate(cfg)
        elif cfg.command == "moments":
            files = run_moments(cfg, args.sigma)
        elif cfg.command == "weakdep":
            files = run_weakdep(cfg)
        elif cfg.command == "estimate":
            files = run_estimate(cfg)
        else:
            files = run_montecarlo(cfg)
    except ConfigError as exc:
        print(f"supou: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC as exc:
        print(f"supou: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"supou: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RuntimeError as exc:
        if "matplotlib" in str(exc):
            print(f"supou: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise
    except ValueError as exc:
        # contract violations surfacing from the library are configuration problems
        print(f"supou: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in files:
        print(f)
    return EXIT_OK


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
