"""Command line interface.

    kavg [--seed S] [--out DIR] [--threads T] COMMAND ...

Commands: ``run CONFIG``, ``sweep CONFIG``, ``bound SUBFORMULA --flags``,
``check-schedule``, ``optimal-k``, ``certify-oracle``.  Results are printed
as ``key=value`` lines.  Exit status: 0 success, 1 usage or configuration
error, 2 internal error.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import warnings
from typing import Optional, Sequence

from . import harness, oracles, theory
from .errors import ConfigError, ContractViolation, UndefinedStepsize, UnsupportedAsymptotics
from .schedules import as_schedule

EXIT_OK, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _num(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    return f"{x:.12g}"


def _emit(**kv) -> None:
    for k, v in kv.items():
        print(f"{k}={_num(v)}")


SUBFORMULAS = (
    "theorem1", "theorem2", "stepsize-conditions", "corollary-stepsize", "corollary-bound",
    "asgd", "scalability", "bk", "alpha-beta-eta", "kopt-gt1", "optimal-k", "check-schedule",
)


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=d(None), help="root seed / base seed override")
    parser.add_argument("--out", default=d(None), help="output directory override")
    parser.add_argument("--threads", type=int, default=d(1), help="worker threads")


def _theory_flags(p: argparse.ArgumentParser) -> None:
    for name in ("gap", "gamma", "L", "M", "delta", "C0", "C1", "alpha", "beta", "eta"):
        p.add_argument(f"--{name}", type=float)
    for name in ("N", "K", "P", "B", "S"):
        p.add_argument(f"--{name}", type=int)
    p.add_argument("--kmax", type=int)
    p.add_argument("--gamma-schedule", help="e.g. power:1,1 or const:0.1")
    p.add_argument("--batch-schedule", default="const:1")
    p.add_argument("--P-values", default="1,2,4,8,16", help="comma-separated P grid")
    p.add_argument("--csv", help="also write the table to this CSV file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kavg", description="K-step averaging SGD simulator and bound calculator")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    for name in ("run", "sweep"):
        p = sub.add_parser(name, help=f"{name} an experiment config (JSON)")
        p.add_argument("config")
        _global_flags(p, suppress=True)

    p = sub.add_parser("bound", help="evaluate a bound or condition")
    p.add_argument("subformula", choices=SUBFORMULAS)
    _theory_flags(p)
    _global_flags(p, suppress=True)

    for name in ("check-schedule", "optimal-k"):
        p = sub.add_parser(name)
        _theory_flags(p)
        _global_flags(p, suppress=True)

    p = sub.add_parser("certify-oracle", help="empirically check an oracle's L and M")
    p.add_argument("config", nargs="?", help="experiment config whose oracle to certify")
    p.add_argument("--kind", choices=("quadratic", "trig_nonconvex", "finite_sum"))
    p.add_argument("--dimension", type=int)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--eigenvalues", help="comma-separated")
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--components", type=int)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--box-radius", type=float, default=5.0)
    _global_flags(p, suppress=True)
    return parser


def _need(args, *names):
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        raise UsageError("missing required flag(s): " + ", ".join("--" + m for m in missing))
    return [getattr(args, n.replace("-", "_")) for n in names]


def _bound(args, which: str) -> None:
    if which == "theorem1":
        gap, N, K, delta, gamma, L, M, P, B = _need(args, "gap", "N", "K", "delta", "gamma", "L",
                                                    "M", "P", "B")
        inputs = theory.BoundInputs(L, M, gap, K, P, B, gamma, delta, N)
        check = theory.check_fixed_stepsize_conditions(L, gamma, K, delta)
        _emit(bound=theory.theorem1_bound(inputs, warn=False), admissible=check.admissible)
    elif which == "theorem2":
        gs, L, M, gap, K, P, delta, N = _need(args, "gamma-schedule", "L", "M", "gap", "K", "P",
                                              "delta", "N")
        _emit(bound=theory.theorem2_bound(as_schedule(gs), as_schedule(args.batch_schedule),
                                          L, M, gap, K, P, delta, N))
    elif which == "stepsize-conditions":
        L, gamma, K, delta = _need(args, "L", "gamma", "K", "delta")
        r = theory.check_fixed_stepsize_conditions(L, gamma, K, delta)
        _emit(admissible=r.admissible, slack1=r.slack[0], slack2=r.slack[1])
    elif which == "corollary-stepsize":
        r = theory.corollary_stepsize(*_need(args, "gap", "B", "P", "L", "M", "K", "N"))
        _emit(gamma_star=r.gamma_star, N_min=r.N_min)
    elif which == "corollary-bound":
        _emit(bound=theory.corollary_bound(*_need(args, "gap", "B", "P", "L", "M", "K", "delta", "N")))
    elif which == "asgd":
        C0 = 1.0 if args.C0 is None else args.C0
        C1 = 1.0 if args.C1 is None else args.C1
        gap, gamma, L, M, P, B, N = _need(args, "gap", "gamma", "L", "M", "P", "B", "N")
        _emit(bound=theory.asgd_bound(C0, C1, gap, gamma, L, M, P, B, N))
    elif which == "scalability":
        gap, N, K, delta, gamma, L, M, B = _need(args, "gap", "N", "K", "delta", "gamma", "L", "M", "B")
        ps = [int(p) for p in args.P_values.split(",") if p.strip()]
        inputs = theory.BoundInputs(L, M, gap, K, ps[0] if ps else 1, B, gamma, delta, N)
        table = theory.scalability_table(inputs, args.C0 or 1.0, args.C1 or 1.0, ps)
        rows = [(r.P, r.kavg_bound, r.asgd_bound) for r in table.rows]
        for p, kb, ab in rows:
            print(f"P={p} kavg_bound={_num(kb)} asgd_bound={_num(ab)}")
        _emit(kavg_nonincreasing=table.kavg_nonincreasing, asgd_linear=table.asgd_linear)
        _maybe_csv(args.csv, ("P", "kavg_bound", "asgd_bound"), rows)
    elif which == "bk":
        K, alpha, beta, eta, delta = _need(args, "K", "alpha", "beta", "eta", "delta")
        print(f"B({K})={_num(theory.bk_value(K, alpha, beta, eta, delta))}")
    elif which == "alpha-beta-eta":
        a, b, e = theory.alpha_beta_eta(*_need(args, "gap", "S", "gamma", "L", "M", "P", "B"))
        _emit(alpha=a, beta=b, eta=e)
    elif which == "kopt-gt1":
        vals = _need(args, "gap", "S", "gamma", "delta", "L", "M", "P", "B")
        cond = theory.kopt_condition(*vals)
        _emit(kopt_gt1=theory.check_kopt_gt1(*vals), lhs=cond.lhs, rhs=cond.rhs)
    elif which == "optimal-k":
        alpha, beta, eta, delta, kmax = _need(args, "alpha", "beta", "eta", "delta", "kmax")
        r = theory.optimal_k(alpha, beta, eta, delta, kmax)
        _emit(K_star=r.K_star, tie=r.tie)
        for k, v in enumerate(r.values, start=1):
            print(f"B({k})={_num(float(v))}")
        _maybe_csv(args.csv, ("K", "B"), [(k, repr(float(v))) for k, v in enumerate(r.values, 1)])
    elif which == "check-schedule":
        (gs,) = _need(args, "gamma-schedule")
        K = args.K or 1
        P = args.P or 1
        r = theory.check_schedule_conditions(as_schedule(gs), as_schedule(args.batch_schedule), K, P)
        _emit(sum_gamma_diverges=r.sum_gamma_diverges,
              sum_gamma2_over_PB_converges=r.sum_gamma2_over_PB_converges,
              sum_gamma3_converges=r.sum_gamma3_converges, valid=r.valid,
              sum_gamma2_converges=r.sum_gamma2_converges, classical_valid=r.classical_valid)
        for note in r.warnings:
            print(f"warning: {note}", file=sys.stderr)


def _maybe_csv(path: Optional[str], header, rows) -> None:
    if not path:
        return
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None


def _experiment(args, single: bool) -> None:
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg.seeds = [args.seed + i for i in range(len(cfg.seeds))]
    if single and not cfg.is_single_point:
        raise ConfigError("'run' needs a single grid point; use 'sweep' for grids")
    result = harness.run_experiment(cfg, threads=max(1, args.threads), output_dir=args.out)
    for agg in result.aggregates:
        print(f"config_id={agg.config_id} n_seeds={agg.n_seeds} "
              f"mean_final_grad_norm_sq={_num(agg.mean_final_grad_norm_sq)} "
              f"stderr={_num(agg.stderr)} divergence_fraction={_num(agg.divergence_fraction)}"
              + ("" if agg.bound_value is None else f" bound_value={_num(agg.bound_value)}"))
    for name, path in result.files.items():
        print(f"{name}={path}")


def _certify(args) -> None:
    if args.config:
        oracle = harness.load_config(args.config).oracle
    else:
        (kind,) = _need(args, "kind")
        spec = {"kind": kind, "noise_std": args.noise_std}
        if kind == "quadratic":
            (eigs,) = _need(args, "eigenvalues")
            spec["eigenvalues"] = [float(x) for x in eigs.split(",")]
        elif kind == "trig_nonconvex":
            spec["dimension"], spec["amplitude"] = _need(args, "dimension", "amplitude")
        else:
            spec["components"], spec["dimension"] = _need(args, "components", "dimension")
            spec["seed"] = args.seed or 0
            spec["box_radius"] = args.box_radius
        oracle = oracles.oracle_from_dict(spec)
    rep = oracles.certify_constants(oracle, args.trials, args.box_radius, args.seed or 0)
    _emit(L=oracle.lipschitz_L, M=oracle.variance_M, Fstar=oracle.lower_bound_Fstar,
          max_lipschitz_ratio=rep.max_lipschitz_ratio,
          max_noise_second_moment=rep.max_noise_second_moment,
          lipschitz_violation=rep.lipschitz_violation, variance_violation=rep.variance_violation)


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if args.command in ("run", "sweep"):
                _experiment(args, single=args.command == "run")
            elif args.command == "bound":
                _bound(args, args.subformula)
            elif args.command in ("check-schedule", "optimal-k"):
                _bound(args, args.command)
            else:
                _certify(args)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        return EXIT_OK
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, ContractViolation, UndefinedStepsize, UnsupportedAsymptotics) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(cli_main())
