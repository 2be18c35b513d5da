"""Command-line entry point: ``ilptemper {generate,solve,bench,gridsearch,convert}``.

Exit codes: 0 success, 1 usage or configuration error, 2 finished without a
feasible solution, 3 I/O or parse error.  Errors go to stderr as
``error[CODE]: message``.
"""

import argparse
import json
import sys

from . import bench, instances
from .errors import IlpError, IoFailure, ParseError
from .io import load_instance, save_instance, write_trace
from .tempering import run_ensemble

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_IO = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _fmt(v):
    """Shortest exact rendering, integers without a trailing ``.0``."""
    return str(int(v)) if float(v).is_integer() and abs(v) < 2 ** 53 else repr(float(v))


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="ilptemper", formatter_class=fmt,
                description="Binary ILP optimization by annealed and tempered MCMC.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", formatter_class=fmt, help="write a benchmark instance")
    g.add_argument("--problem", choices=("mvc", "mis", "sc"), help="problem class")
    g.add_argument("--preset", choices=sorted(instances.PRESETS), help="named instance family")
    g.add_argument("--n", type=int, help="variables (graph nodes or sets)")
    g.add_argument("--affinity", type=int, help="Barabasi-Albert attachment count")
    g.add_argument("--p", type=float, help="Erdos-Renyi edge probability")
    g.add_argument("--avg-degree", type=float, help="Erdos-Renyi expected degree")
    g.add_argument("--rows", type=int, help="set cover elements")
    g.add_argument("--density", type=float, help="set cover fraction of sets per element")
    g.add_argument("--seed", type=int, default=0, help="generator seed")
    g.add_argument("--name", help="instance name")
    g.add_argument("--out", required=True, help="output file (.json, or .mps)")

    s = sub.add_parser("solve", formatter_class=fmt, help="run the sampler ensemble")
    s.add_argument("--instance", required=True, help="instance file (.json or .mps)")
    s.add_argument("--preset-params", choices=sorted(bench.PRESET_PARAMS),
                   help="tuned settings; explicit flags override them")
    s.add_argument("--mode", choices=("sa", "sa-reheat", "tau-pt", "lambda-pt"), default=None,
                   help="schedule; sa unless a preset sets it")
    s.add_argument("--proposal", choices=("mlbp", "rwm"), default="mlbp", help="proposal kernel")
    s.add_argument("--L", type=int, default=3, help="flips per MLBP proposal")
    s.add_argument("--joint-energy", action="store_true",
                   help="use the exact joint energy change in the MLBP acceptance ratio")
    s.add_argument("--tau", type=float, default=None, help="initial temperature; 1.0 unless a preset sets it")
    s.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="penalty weight; 1.0 unless a preset sets it")
    s.add_argument("--tau-min", type=float, help="tau-PT ladder low end; tau when omitted")
    s.add_argument("--tau-max", type=float, help="tau-PT ladder high end; 2 * tau-min when omitted")
    s.add_argument("--lambda-min", type=float, help="lambda-PT ladder low end; lambda-max / 2 when omitted")
    s.add_argument("--lambda-max", type=float, help="lambda-PT ladder high end; lambda when omitted")
    s.add_argument("--chains", type=int, default=15, help="number of chains")
    s.add_argument("--swap-interval", type=int, default=200, help="steps between swap rounds")
    s.add_argument("--gamma-halving-steps", type=int, default=100_000,
                   help="steps for the temperature to halve; 0 disables annealing")
    s.add_argument("--reheat-period", type=int,
                   help="sa-reheat reset period; max-steps / 4 when omitted")
    s.add_argument("--penalty-exponent", type=int, choices=(1, 2), default=1,
                   help="power on each row's violation")
    s.add_argument("--budget-seconds", type=float, help="wall-clock budget")
    s.add_argument("--max-steps", type=int, help="step budget")
    s.add_argument("--seed", type=int, default=0, help="random seed")
    s.add_argument("--trace-every", type=int, default=100, help="trace cadence in steps")
    s.add_argument("--workers", type=int, default=1, help="threads advancing chains")
    s.add_argument("--trace", help="write the anytime trace CSV here")
    s.add_argument("--solution", help="write the solution JSON here")

    b = sub.add_parser("bench", formatter_class=fmt, help="run an experiment spec")
    b.add_argument("--spec", required=True, help="experiment spec JSON")
    b.add_argument("--out-dir", help="override the spec's output directory")

    gs = sub.add_parser("gridsearch", formatter_class=fmt, help="tune tau and lambda for SA")
    gs.add_argument("--spec", required=True, help="grid spec JSON")
    gs.add_argument("--out", help="write the result JSON here")

    c = sub.add_parser("convert", formatter_class=fmt, help="convert between MPS and canonical JSON")
    c.add_argument("input", help="source file (.mps or .json)")
    c.add_argument("output", help="target file (.mps or .json)")
    return p


def _cmd_generate(a):
    if a.preset:
        inst = instances.generate_preset(a.preset, seed=a.seed, name=a.name)
    else:
        if not a.problem or a.n is None:
            raise _UsageError("generate needs --preset, or --problem with --n")
        inst = instances.generate(a.problem, a.n, seed=a.seed, affinity=a.affinity, p=a.p,
                                  avg_degree=a.avg_degree, rows=a.rows, density=a.density,
                                  name=a.name)
    save_instance(inst, a.out)
    print(f"wrote {a.out}: n={inst.n} m={inst.m} nnz={inst.nnz}")
    return EXIT_OK


def _solve_settings(a):
    kw = dict(bench.PRESET_PARAMS[a.preset_params]) if a.preset_params else {}
    explicit = {
        "mode": a.mode, "tau": a.tau, "lam": a.lam, "tau_min": a.tau_min, "tau_max": a.tau_max,
        "lambda_min": a.lambda_min, "lambda_max": a.lambda_max,
    }
    kw.update({k: v for k, v in explicit.items() if v is not None})
    kw.setdefault("mode", "sa")
    kw.update(
        proposal=a.proposal, L=a.L, joint_energy=a.joint_energy, chains=a.chains,
        swap_interval=a.swap_interval, gamma_halving_steps=a.gamma_halving_steps,
        reheat_period=a.reheat_period, penalty_exponent=a.penalty_exponent, seed=a.seed,
        max_steps=a.max_steps, budget_seconds=a.budget_seconds, trace_every=a.trace_every,
        workers=a.workers,
    )
    return kw


def _cmd_solve(a):
    inst = load_instance(a.instance)
    kw = _solve_settings(a)
    cfg = bench.make_config(**kw)
    res = run_ensemble(inst, cfg)
    if a.trace:
        write_trace(res.trace, a.trace)
    print(f"steps={res.steps_completed}")
    if not res.feasible:
        print("incumbent_obj=none")
        print("error[NoFeasibleSolution]: no feasible assignment was visited", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"incumbent_obj={_fmt(res.incumbent_obj)}")
    if a.solution:
        doc = {
            "instance": inst.name,
            "objective": res.incumbent_obj,
            "feasible": True,
            "x": [int(v) for v in res.incumbent],
            "seed": cfg.seed,
            "mode": cfg.mode,
        }
        _write_text(a.solution, json.dumps(doc) + "\n")
    return EXIT_OK


def _cmd_bench(a):
    d = bench.load_spec(a.spec)
    if a.out_dir:
        d["out_dir"] = a.out_dir
    rep = bench.run_experiment(d)
    print(f"summary={rep.summary_path}")
    print(f"aggregate={rep.aggregate_path}")
    return EXIT_OK


def _cmd_gridsearch(a):
    d = dict(bench.load_spec(a.spec))
    insts = [bench.resolve_instance(e) for e in d.pop("instances", [])]
    mode = d.pop("mode", "sa")
    try:
        grid = bench.GridSpec.preset(d.pop("grid"), **d) if "grid" in d else bench.GridSpec(**d)
    except TypeError as e:
        raise _UsageError(f"bad grid spec: {e}") from None
    r = bench.grid_search(insts, grid, mode=mode)
    for (tau, lam), v in sorted(r.table.items()):
        print(f"tau={_fmt(tau)} lambda={_fmt(lam)} mean={'infeasible' if v is None else repr(v)}")
    print(f"best tau={_fmt(r.tau_best)} lambda={_fmt(r.lambda_best)}")
    print(f"tau-pt ladder=({_fmt(r.tau_pt['tau_min'])}, {_fmt(r.tau_pt['tau_max'])})")
    print(f"lambda-pt ladder=({_fmt(r.lambda_pt['lambda_min'])}, {_fmt(r.lambda_pt['lambda_max'])})")
    if a.out:
        doc = {
            "tau_best": r.tau_best, "lambda_best": r.lambda_best,
            "table": [{"tau": t, "lambda": l, "mean": v} for (t, l), v in sorted(r.table.items())],
            "tau_pt": r.tau_pt, "lambda_pt": r.lambda_pt,
        }
        _write_text(a.out, json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def _cmd_convert(a):
    inst = load_instance(a.input)
    save_instance(inst, a.output)
    print(f"wrote {a.output}: n={inst.n} m={inst.m}")
    return EXIT_OK


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e.strerror or e}") from e


_COMMANDS = {
    "generate": _cmd_generate,
    "solve": _cmd_solve,
    "bench": _cmd_bench,
    "gridsearch": _cmd_gridsearch,
    "convert": _cmd_convert,
}


def run_command(argv):
    """Run one invocation and return its exit code."""
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        return _COMMANDS[a.command](a)
    except _UsageError as e:
        print(f"error[Usage]: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (IoFailure, ParseError) as e:
        print(f"error[{e.code}]: {e}", file=sys.stderr)
        return EXIT_IO
    except IlpError as e:
        print(f"error[{e.code}]: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error[IoFailure]: {e}", file=sys.stderr)
        return EXIT_IO


def main(argv=None):
    code = run_command(sys.argv[1:] if argv is None else argv)
    sys.exit(code)


if __name__ == "__main__":
    main()
