"""Command-line interface.

Subcommands::

    crom run <config> [--seed N] [--output DIR]
    crom compare <dirA> <dirB> [<dirC> ...] [--csv PATH]
    crom gen-rve <spec> -o <file>
    crom cit-bench --n-init N[,N...] --alpha A --beta B[,B...]
                   [--dims N1xN2] [--repeats R] [--seed N] [-o DIR]

``run`` executes one configuration into its output directory. ``compare``
reports errors of each run against the last directory given (the
reference). ``gen-rve`` reads the [rve] section of a config-format file
and writes the generated grid. ``cit-bench`` times the incremental
interaction-matrix update against full recomputation. The CROM_WORKERS
environment variable sets the clustering worker count for every
subcommand.
"""

import argparse
import os
import sys

from crom.config import ConfigError, RunConfig, parse_config, \
    parse_generator
from crom.outputs import compare_runs, render_compare_text, \
    write_compare_csv
from crom.pipeline import execute
from crom.rve import generate_rve, save_rve


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="crom",
        description="Clustering-based reduced-order micromechanics "
                    "solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configuration")
    p_run.add_argument("config", help="configuration file")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the [run] seed")
    p_run.add_argument("--output", default=None,
                       help="override the [run] output directory")

    p_cmp = sub.add_parser("compare",
                           help="compare run directories against the "
                                "last one")
    p_cmp.add_argument("runs", nargs="+",
                       help="two or more run directories; the last is "
                            "the reference")
    p_cmp.add_argument("--csv", default="compare.csv",
                       help="machine-readable output path "
                            "(default: compare.csv)")

    p_gen = sub.add_parser("gen-rve", help="generate a voxel grid")
    p_gen.add_argument("spec",
                       help="config-format file with an [rve] section")
    p_gen.add_argument("-o", "--output", required=True,
                       help="grid file to write")

    p_bench = sub.add_parser("cit-bench",
                             help="benchmark the incremental "
                                  "interaction-matrix update")
    p_bench.add_argument("--n-init", required=True,
                         help="comma-separated initial cluster counts")
    p_bench.add_argument("--alpha", type=float, required=True,
                         help="retained fraction of the initial "
                              "clusters")
    p_bench.add_argument("--beta", required=True,
                         help="comma-separated growth fractions")
    p_bench.add_argument("--dims", default="64x64",
                         help="grid as N1xN2 (default 64x64)")
    p_bench.add_argument("--repeats", type=int, default=3)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("-o", "--output", default="crom-bench",
                         help="output directory (default crom-bench)")
    return parser


def _cmd_run(args):
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.output is not None:
        cfg.output = args.output
    execute(cfg)
    print("run complete: %s" % cfg.output)
    return 0


def _cmd_compare(args):
    if len(args.runs) < 2:
        print("error: compare needs at least two run directories",
              file=sys.stderr)
        return 2
    report = compare_runs(args.runs)
    print(render_compare_text(report))
    write_compare_csv(report, args.csv)
    print("\nwrote %s" % args.csv)
    return 0


def _cmd_gen_rve(args):
    rve_file, spec = parse_generator(args.spec)
    if spec is None:
        print("error: %s names an RVE file (%s), nothing to generate"
              % (args.spec, rve_file), file=sys.stderr)
        return 2
    grid, achieved = generate_rve(spec)
    save_rve(grid, args.output)
    print("wrote %s (%dx%d, particle fraction %.4f)"
          % (args.output, grid.dims[0], grid.dims[1], achieved))
    return 0


def _parse_dims(text):
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError("dims must look like 64x64, got %r" % text)
    return int(parts[0]), int(parts[1])


def _cmd_cit_bench(args):
    cfg = RunConfig()
    cfg.mode = "cit-bench"
    cfg.seed = args.seed
    cfg.output = args.output
    cfg.benchmark = {
        "n_init": tuple(int(t) for t in args.n_init.split(",")),
        "alpha": args.alpha,
        "beta": tuple(float(t) for t in args.beta.split(",")),
        "dims": _parse_dims(args.dims),
        "repeats": args.repeats,
    }
    execute(cfg)
    with open(os.path.join(cfg.output, "timings.log")) as handle:
        print(handle.read().rstrip())
    print("wrote %s" % cfg.output)
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "compare": _cmd_compare,
                "gen-rve": _cmd_gen_rve, "cit-bench": _cmd_cit_bench}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
