import argparse
import sys

from dotenv import load_dotenv


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ghcm",
        description="Sample, analyse and recover two-community geometric hidden community models.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    divergence = commands.add_parser("divergence", help="Report the threshold ratio of a config")
    divergence.add_argument("--config", required=True, help="JSON experiment config")

    sample = commands.add_parser("sample", help="Sample one instance and dump it")
    sample.add_argument("--config", required=True)
    sample.add_argument("--seed", type=int, default=None)
    sample.add_argument("--out", required=True, help="sqlite instance file to write")

    recover = commands.add_parser("recover", help="Run two-phase recovery on a dumped instance")
    recover.add_argument("instance", help="sqlite instance file")
    recover.add_argument("--config", default=None, help="constants overrides and exploration mode")
    recover.add_argument("--out", required=True, help="labeling file to write")
    recover.add_argument("--force", action="store_true", help="run below the threshold")
    recover.add_argument("--phase1-only", action="store_true", help="stop after Phase I")
    recover.add_argument("--timings", action="store_true", help="record wall-clock timings")

    oracle = commands.add_parser("oracle-check", help="Compare the seed MAP with brute force")
    oracle.add_argument("--config", required=True)
    oracle.add_argument("--seed", type=int, default=None)
    oracle.add_argument("--trials", type=int, default=None)

    sweep = commands.add_parser("sweep", help="Run seeded trials over the sweep points")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--seed", type=int, default=None, help="overrides base_seed")
    sweep.add_argument("--trials", type=int, default=None)
    sweep.add_argument("--out", default=None, help="CSV path, '-' for stdout")
    sweep.add_argument("--threads", type=int, default=None, help="worker count (outputs do not depend on it)")
    sweep.add_argument("--timings", action="store_true")

    bench = commands.add_parser("bench", help="Time recovery at each bench_n")
    bench.add_argument("--config", required=True)
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--out", default=None)
    return parser


def main(argv=None):
    load_dotenv()
    from ghcm.core import handle

    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    return handle(command, **args)


if __name__ == "__main__":
    sys.exit(main())
