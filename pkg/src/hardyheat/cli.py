"""Command-line front end.

Every subcommand accepts ``--config file.json``; explicit flags override the
file.  Exit status: 0 success, 1 verify found failing checks, 2 invalid
configuration, 3 numerical guard tripped.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import traceback
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import analysis, simulate
from .biortho import build_family, estimate_fit
from .control import COUPLINGS, ControlProblem, fourier_coefficients, synthesize
from .errors import DomainError, NumericalGuardError
from .serialize import dumps_json, write_csv, write_json, atomic_write_text
from .specfun import Precision, ZeroCache
from .spectrum import build_spectrum, derive_params, eigenfunction_values
from .verify import VerifyConfig, format_report, run_checks

MOMENT_COMMANDS = {"biortho", "synthesize", "simulate", "cost-sweep", "time-sweep", "transform"}


@dataclass
class RunConfig:
    subcommand: str = ""
    mu: str = "0"
    mu_list: list = field(default_factory=list)
    T: str = "1"
    T_list: list = field(default_factory=list)
    K: int = 8
    precision_bits: int = 256
    P: float | None = None
    coupling: str = "trace"
    u0: object = field(default_factory=lambda: {"phi": 1})
    uT: object = None
    output: str | None = None
    csv: str | None = None
    samples: int = 0
    xgrid: int = 50
    tgrid: int = 11
    xi_points: int = 2000
    controlled: bool = False
    cache_dir: str | None = None
    seed: int = 20240611

    @classmethod
    def from_sources(cls, args: argparse.Namespace) -> "RunConfig":
        data = {}
        if getattr(args, "config", None):
            with open(args.config) as fh:
                data = json.load(fh)
            if not isinstance(data, dict):
                raise DomainError("the config file must hold a JSON object")
            # the problem-file spelling of the modal data
            for alias, name in (("rho0", "u0"), ("rhoT", "uT")):
                if alias in data:
                    data[name] = data.pop(alias)
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        for name in names:
            value = getattr(args, name, None)
            if value is not None and value is not False:
                data[name] = value
        data["subcommand"] = args.command
        cfg = cls(**data)
        cfg.mu, cfg.T = str(cfg.mu), str(cfg.T)
        cfg.mu_list = [str(m) for m in cfg.mu_list]
        cfg.T_list = [str(t) for t in cfg.T_list]
        cfg.validate()
        return cfg

    def validate(self):
        if self.precision_bits < 53:
            raise DomainError("precision_bits must be at least 53")
        for mu in [self.mu, *self.mu_list]:
            derive_params(mu, Precision(self.precision_bits))
        limit = 30 if self.subcommand in MOMENT_COMMANDS else 200
        if not 1 <= self.K <= limit:
            raise DomainError(f"K must lie in [1, {limit}] for {self.subcommand}")
        if self.coupling not in COUPLINGS:
            raise DomainError(f"coupling must be one of {COUPLINGS}")
        for T in [self.T, *self.T_list]:
            if not float(T) > 0:
                raise DomainError("horizons must be positive")
        if self.P is not None and not self.P > 0:
            raise DomainError("P must be positive")

    @property
    def precision(self) -> Precision:
        return Precision(self.precision_bits)

    @property
    def cache(self) -> ZeroCache | None:
        if self.cache_dir:
            return ZeroCache(Path(self.cache_dir) / "zeros.json")
        return ZeroCache.from_env()


def modal_data(datum, spectrum):
    """(coefficients, tail norm) for a built-in datum: a list, {"phi": k} or "poly_bubble"."""
    K = spectrum.K
    if datum is None:
        return [0.0] * K, 0.0
    if isinstance(datum, list):
        if len(datum) > K:
            raise DomainError(f"modal list has {len(datum)} entries but K = {K}")
        return [str(v) if isinstance(v, str) else v for v in datum] + [0.0] * (K - len(datum)), 0.0
    if isinstance(datum, dict) and set(datum) == {"phi"}:
        k = int(datum["phi"])
        if not 1 <= k <= K:
            raise DomainError(f"phi index {k} outside 1..{K}")
        return [1.0 if i == k else 0.0 for i in range(1, K + 1)], 0.0
    if datum == "poly_bubble":
        proj = fourier_coefficients(lambda x: x * (1 - x), spectrum)
        return list(proj.rho), proj.tail_norm
    raise DomainError(f"unrecognised datum {datum!r}; use a modal list, {{'phi': k}} or 'poly_bubble'")


def _emit(cfg: RunConfig, payload: dict):
    if cfg.output:
        write_json(cfg.output, payload)
    else:
        sys.stdout.write(dumps_json(payload))


def _setup(cfg: RunConfig):
    spectrum = build_spectrum(derive_params(cfg.mu, cfg.precision), cfg.K, cfg.precision, cfg.cache)
    rho0, tail = modal_data(cfg.u0, spectrum)
    rhoT, _ = modal_data(cfg.uT, spectrum)
    problem = ControlProblem.create(spectrum, cfg.T, rho0, rhoT, tail)
    family = build_family(spectrum.lambdas, problem.T, cfg.precision)
    P = cfg.P if cfg.P is not None else estimate_fit(family).P
    control = synthesize(problem, family, cfg.coupling, P=P if P > 0 else None)
    return spectrum, problem, family, control, P


def cmd_spectrum(cfg: RunConfig) -> int:
    spectrum = build_spectrum(derive_params(cfg.mu, cfg.precision), cfg.K, cfg.precision, cfg.cache)
    _emit(cfg, spectrum.to_dict())
    return 0


def cmd_biortho(cfg: RunConfig) -> int:
    spectrum = build_spectrum(derive_params(cfg.mu, cfg.precision), cfg.K, cfg.precision, cfg.cache)
    family = build_family(spectrum.lambdas, cfg.precision.mpf(cfg.T), cfg.precision)
    fit = estimate_fit(family)
    payload = family.to_dict()
    payload["fit"] = {"C": fit.C, "P": fit.P, "r2": fit.r2}
    _emit(cfg, payload)
    return 0


def _time_grid(T: float, n: int) -> np.ndarray:
    return np.linspace(0.0, T, n)


def cmd_synthesize(cfg: RunConfig) -> int:
    spectrum, problem, family, control, P = _setup(cfg)
    payload = {"mu": cfg.mu, "K": cfg.K, "P": P, **control.to_dict()}
    _emit(cfg, payload)
    if cfg.csv and cfg.samples:
        ts = _time_grid(float(problem.T), cfg.samples)
        write_csv(cfg.csv, ["t", "f", "g"], zip(ts, control.f.values(ts), control.g.values(ts)))
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    spectrum, problem, family, control, _ = _setup(cfg)
    report = simulate.terminal_state(problem, control)
    payload = report.to_dict()
    payload["crosscheck_deviation"] = simulate.step_crosscheck(problem, control)
    _emit(cfg, payload)
    if cfg.csv:
        xs = np.arange(1, cfg.xgrid + 1) / cfg.xgrid
        ts = _time_grid(float(problem.T), cfg.tgrid)
        u = simulate.reconstruct(problem, control, xs, ts)
        rows = ((x, t, u[i, j]) for j, t in enumerate(ts) for i, x in enumerate(xs))
        write_csv(cfg.csv, ["x", "t", "u"], rows)
    return 0


def cmd_cost_sweep(cfg: RunConfig) -> int:
    mus = cfg.mu_list or [cfg.mu]
    u0 = modal_data(cfg.u0, build_spectrum(derive_params(mus[0], cfg.precision), cfg.K, cfg.precision, cfg.cache))[0]
    table = analysis.cost_sweep(mus, cfg.T, u0, cfg.K, cfg.precision, cfg.cache, cfg.coupling)
    header = ["mu", "T", "K", "h1_norm", "product", "lower_bound", "skipped"]
    rows = [[r.mu, r.T, r.K, r.h1_norm, r.product, r.lower_bound, r.skipped] for r in table.rows]
    if cfg.csv:
        write_csv(cfg.csv, header, rows)
    _emit(cfg, {
        "rows": [dict(zip(header, r)) for r in rows],
        "exponent": table.exponent,
        "r2": table.r2,
        "target_exponent": table.target_exponent,
        "deviation": table.deviation,
        "flagged": table.flagged,
    })
    return 0


def cmd_time_sweep(cfg: RunConfig) -> int:
    Ts = cfg.T_list or [cfg.T]
    u0 = modal_data(cfg.u0, build_spectrum(derive_params(cfg.mu, cfg.precision), cfg.K, cfg.precision, cfg.cache))[0]
    table = analysis.time_sweep(cfg.mu, Ts, u0, cfg.K, cfg.precision, cfg.cache, coupling=cfg.coupling)
    if cfg.csv:
        write_csv(cfg.csv, ["T", "h1_norm"], table.rows)
    _emit(cfg, {"mu": cfg.mu, "rows": [{"T": T, "h1_norm": n} for T, n in table.rows],
                "C_fit": table.C_fit, "r2": table.r2})
    return 0


def cmd_transform(cfg: RunConfig) -> int:
    spectrum = build_spectrum(derive_params(cfg.mu, cfg.precision), cfg.K, cfg.precision, cfg.cache)
    rho0, tail = modal_data(cfg.u0, spectrum)
    problem = ControlProblem.create(spectrum, cfg.T, rho0, None, tail)
    control = None
    if cfg.controlled:
        control = synthesize(problem, build_family(spectrum.lambdas, problem.T, cfg.precision), cfg.coupling)
    dmap = analysis.degenerate_map(cfg.mu, cfg.precision)
    ts = _time_grid(float(problem.T), cfg.tgrid)[1:]
    result = analysis.transform_solution(problem, control, dmap, ts, n=cfg.xi_points)
    if cfg.csv:
        rows = ((xi, t, result.phi[i, j]) for j, t in enumerate(result.t) for i, xi in enumerate(result.xi))
        write_csv(cfg.csv, ["xi", "t", "phi"], rows)
    _emit(cfg, {
        "mu": cfg.mu, "beta": dmap.beta, "a": dmap.a, "xi0": dmap.xi0,
        "residual": result.residual, "truncation_estimate": result.truncation_estimate,
    })
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    checks = run_checks(VerifyConfig(cfg.precision_bits, cfg.seed, cfg.cache))
    report = format_report(checks)
    if cfg.output:
        atomic_write_text(cfg.output, report)
    sys.stdout.write(report)
    return 0 if all(c.passed for c in checks) else 1


COMMANDS = {
    "spectrum": (cmd_spectrum, "eigenvalue table as JSON"),
    "biortho": (cmd_biortho, "biorthogonal family and residual report"),
    "synthesize": (cmd_synthesize, "boundary control for a modal problem"),
    "simulate": (cmd_simulate, "terminal state, stepping cross-check, optional u(x, t) CSV"),
    "cost-sweep": (cmd_cost_sweep, "null-control cost across mu"),
    "time-sweep": (cmd_time_sweep, "null-control cost across T"),
    "transform": (cmd_transform, "map a solution to the degenerate equation"),
    "verify": (cmd_verify, "run the invariant suite"),
}


def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hardyheat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--mu")
        p.add_argument("--mu-list", dest="mu_list", nargs="+")
        p.add_argument("--T")
        p.add_argument("--T-list", dest="T_list", nargs="+")
        p.add_argument("--K", type=int)
        p.add_argument("--precision-bits", dest="precision_bits", type=int)
        p.add_argument("--P", type=float, help="exponential weight for the admissibility score")
        p.add_argument("--coupling", choices=COUPLINGS)
        p.add_argument("--u0", type=_json_arg, help="modal list, {\"phi\": k} or poly_bubble")
        p.add_argument("--uT", type=_json_arg)
        p.add_argument("--output", "-o")
        p.add_argument("--csv")
        p.add_argument("--samples", type=int)
        p.add_argument("--xgrid", type=int)
        p.add_argument("--tgrid", type=int)
        p.add_argument("--xi-points", dest="xi_points", type=int)
        p.add_argument("--controlled", action="store_true")
        p.add_argument("--cache-dir", dest="cache_dir")
        p.add_argument("--seed", type=int)
    return parser


def _provenance(exc: BaseException) -> str:
    frames = [f for f in traceback.extract_tb(exc.__traceback__) if "hardyheat" in f.filename]
    return Path(frames[-1].filename).stem if frames else "hardyheat"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_sources(args)
        return COMMANDS[cfg.subcommand][0](cfg)
    except NumericalGuardError as exc:
        print(f"hardyheat: numerical guard in {_provenance(exc)}: {exc}", file=sys.stderr)
        return 3
    except (ValueError, TypeError, OSError) as exc:
        print(f"hardyheat: invalid configuration: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
