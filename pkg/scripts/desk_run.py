#!/usr/bin/env python3
"""Desk-scale pipeline: synthesize recordings, then size report, E1 and E2.

Everything goes through the command-line entry point, so the output directory
looks exactly like a manual run. Mock clients are used unless --http is given,
in which case GAZECTX_API_KEY and a [client] section in --config are required.
"""

import argparse
import sys
from pathlib import Path

from gazectx.cli import main as gazectx


def run(argv):
    print("$ gazectx " + " ".join(argv), file=sys.stderr)
    code = gazectx(argv)
    if code:
        sys.exit(code)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("-o", "--output", type=Path, default=Path("desk_run"))
    ap.add_argument("--recordings", type=int, default=8)
    ap.add_argument("--fixations", type=int, default=120)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=500, help="E1 trials")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--http", action="store_true", help="query a real endpoint too")
    ap.add_argument("--config", help="INI file with a [client] section")
    args = ap.parse_args(argv)

    rec_dir = args.output / "recordings"
    rec_dir.mkdir(parents=True, exist_ok=True)
    recs = []
    for i in range(args.recordings):
        path = rec_dir / f"desk{i:02d}.jsonl"
        run(["synth", "--seed", str(args.seed + i), "--fixations", str(args.fixations),
             "--interaction-fraction", "0.4", "-o", str(path)])
        recs.append(str(path))

    jobs = ["--jobs", str(args.jobs)]
    run(["sizes", *recs, *jobs, "-o", str(args.output / "sizes.json")])

    clients = ["--client", "mock:uniform-random", "--client", "mock:greedy", "--client", "mock:echo-prev"]
    if args.http:
        clients += ["--client", "http"]
    extra = ["--config", args.config] if args.config else []
    inputs = [a for r in recs for a in ("-i", r)]
    run(["experiment", "e1", *inputs, *clients, "--baselines", "--n", str(args.n),
         "--seed", str(args.seed), "-o", str(args.output / "e1"), *jobs, *extra])
    run(["experiment", "e2", *inputs, *clients, "--baselines",
         "--seed", str(args.seed), "-o", str(args.output / "e2"), *jobs, *extra])
    return 0


if __name__ == "__main__":
    sys.exit(main())
