"""Command line entry point.

Every model subcommand accepts ``--config FILE`` with ``key = value`` lines
(see :mod:`muller_ratchet.experiment`); flags given on the command line
override values from the file. Relative output directories are resolved
against ``$MULLER_RATCHET_OUTPUT`` (default: the working directory).
"""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .errors import RatchetError
from .experiment import OUTPUT_ENV, parse_spec, run_experiment

# flag -> (config key, help)
FLAGS = {
    "alpha": ("alpha", "selection coefficient per mutation"),
    "lam": ("lambda", "mutation rate"),
    "gamma": ("gamma", "compensatory mutation rate per mutation"),
    "N": ("N", "population size"),
    "t": ("t", "time horizon"),
    "generations": ("generations", "number of generations"),
    "replicates": ("replicates", "independent replicates"),
    "seed": ("seed", "random seed (required)"),
    "output": ("output", f"output directory, relative to ${OUTPUT_ENV}"),
    "initial": ("initial", "delta:K, poisson:THETA or a k,weight CSV file"),
    "k-max": ("k_max", "highest represented mutation class"),
    "record-every": ("record_every", "store statistics every this many steps (default 10 for sde and ode, else 1)"),
    "state-every": ("state_every", "store full distributions every this many steps (default: first and last only)"),
    "dt": ("dt", "time step"),
    "xi": ("xi", "exponent of the tracked exponential moment"),
    "noise": ("noise", "factored or pairwise"),
    "n-paths": ("n_paths", "number of particle paths"),
    "points": ("points", "number of evaluation intervals on [0, t]"),
    "window": ("window", "averaging window as two fractions of the run, e.g. '0.5 1'"),
    "archive": ("archive", "trajectory archive written by the sde subcommand"),
    "alpha-to": ("alpha_to", "target selection coefficient"),
    "statistic": ("statistic", "kappa1_at_end, kappa2_at_end or h_xi_at_end"),
}

_MODEL_PARAMS = ["alpha", "lam", "gamma"]
_COMMON = ["seed", "output", "initial", "k-max"]
SUBCOMMANDS = {
    "wf": ("discrete Wright-Fisher ensemble",
           _MODEL_PARAMS + ["N", "generations", "replicates", "record-every", "state-every", "window", "xi"]),
    "sde": ("diffusion ensemble by Euler-Maruyama",
            _MODEL_PARAMS + ["N", "t", "dt", "replicates", "record-every", "state-every", "xi", "noise"]),
    "ode": ("infinite-population system by RK4", _MODEL_PARAMS + ["t", "dt", "record-every", "xi"]),
    "closed-form": ("explicit solution of the infinite-population system", _MODEL_PARAMS + ["t", "points", "xi"]),
    "particle": ("killed jump process estimate of the conditioned law", _MODEL_PARAMS + ["t", "n-paths"]),
    "reweight": ("reweight an sde archive to another selection coefficient", ["archive", "alpha-to", "statistic"]),
    "compare": ("RK4 vs closed form vs particle estimate", _MODEL_PARAMS + ["t", "dt", "n-paths"]),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="muller-ratchet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, flags) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=argparse.FileType("r"), help="key = value configuration file")
        for flag in flags + _COMMON:
            key, h = FLAGS[flag]
            p.add_argument(f"--{flag}", dest=key, metavar=key.upper(), help=h)
        p.set_defaults(model=name)
    st = sub.add_parser("selftest", help="run the acceptance suite", description="run the acceptance suite")
    st.add_argument("--only", type=int, nargs="+", metavar="N", help="criterion numbers to run")
    st.add_argument("--json", dest="json_path", help="also write results to this JSON file")
    return parser


def _selftest(args) -> int:
    from .acceptance import CRITERIA, run_suite

    unknown = set(args.only or ()) - set(CRITERIA)
    if unknown:
        print(f"unknown criteria: {sorted(unknown)}", file=sys.stderr)
        return 2
    results = run_suite(args.only)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    if args.json_path:
        with open(args.json_path, "w") as fh:
            json.dump([r.to_dict() for r in results], fh, indent=2, default=str)
    return 1 if failed else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        return _selftest(args)
    text = ""
    if args.config is not None:
        with args.config as fh:
            text = fh.read()
    overrides = {key: getattr(args, key) for key, _ in FLAGS.values() if getattr(args, key, None) is not None}
    overrides["model"] = args.model
    try:
        spec = parse_spec(text, overrides)
    except RatchetError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    report = run_experiment(spec)
    print(report.message, file=sys.stdout if report.ok else sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
