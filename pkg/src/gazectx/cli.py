"""Command-line entry point: ``gazectx <subcommand> ...``.

Exit codes: 0 success, 1 validation or domain error, 2 usage error,
3 transport exhaustion during a sweep.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

from . import __version__
from .analysis import SampleSet, collect_size_samples, emit_report
from .config import RunConfig, load_run_config, parse_k_values
from .errors import ConfigError, GazeCtxError, SweepError, UsageError, ValidationError
from .experiments import emit_results, load_results, results_csv, run_sweep, sample_e1_trials, sample_e2_trials
from .gaze import build_scanpath, fixations_csv
from .plotting import accuracy_curves_svg
from .scene import load_recording, save_recording, validate
from .synthgen import generate, perturb_gaze, save_truth, truth_path_for
from .vlm import BASELINES, BaselineAgent, make_agent

log = logging.getLogger("gazectx")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_TRANSPORT = 0, 1, 2, 3


# --------------------------------------------------------------------------
# Provenance
# --------------------------------------------------------------------------


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def meta_path_for(output: str | None, is_dir: bool) -> str:
    if output is None:
        return "meta.json"
    if is_dir:
        return os.path.join(output, "meta.json")
    return output + ".meta.json"


def write_meta(path: str, command: str, cfg: RunConfig, inputs: Sequence[str] = (), extra: dict | None = None) -> None:
    """Tool version, effective configuration and input hashes.

    Inputs are keyed by file name so the metadata does not depend on the
    directory a run happened in.
    """
    meta = {
        "tool": "gazectx",
        "version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "inputs": [{"name": os.path.basename(p), "sha256": sha256_file(p)} for p in inputs],
    }
    meta.update(extra or {})
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(meta, indent=1, sort_keys=True, ensure_ascii=False) + "\n")


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# --------------------------------------------------------------------------
# Per-recording work (module level so process pools can pickle it)
# --------------------------------------------------------------------------


def _scanpath_job(args):
    path, cfg = args
    rec = load_recording(path)
    return rec, build_scanpath(rec, cfg.detector, cfg.experiment.tolerance_deg)


def _sizes_job(args):
    path, cfg = args
    rec = load_recording(path)
    sp = build_scanpath(rec, cfg.detector, cfg.experiment.tolerance_deg)
    return collect_size_samples(rec, sp, cfg.spaces)


def _map(fn, items, jobs: int):
    """Order-preserving map, in worker processes when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def _overrides(args, mapping: dict[str, tuple[str, str]]) -> dict:
    out: dict[str, dict] = {}
    for attr, (section, key) in mapping.items():
        v = getattr(args, attr, None)
        if v is not None:
            out.setdefault(section, {})[key] = v
    return out


def cmd_synth(args) -> int:
    cfg = load_run_config(
        args.config,
        _overrides(
            args,
            {
                "seed": ("synth", "seed"),
                "objects": ("synth", "n_objects"),
                "fixations": ("synth", "n_fixations"),
                "rate": ("synth", "sample_rate_hz"),
                "interaction_fraction": ("synth", "interaction_fraction"),
                "size_range": ("synth", "object_size_range"),
                "repeat_probability": ("synth", "repeat_probability"),
            },
        ),
    )
    rec, truth = generate(cfg.synth)
    if args.gaze_error:
        rec = perturb_gaze(rec, args.gaze_error, cfg.synth.seed)
    save_recording(rec, args.output)
    save_truth(truth, truth_path_for(args.output))
    write_meta(
        meta_path_for(args.output, False),
        "synth",
        cfg,
        extra={"gaze_error_deg": args.gaze_error or 0.0, "outputs": [os.path.basename(args.output), os.path.basename(truth_path_for(args.output))]},
    )
    print(f"wrote {args.output} ({len(rec.frames)} frames, {len(truth.true_fixations)} fixations, {len(rec.interactions)} interactions)")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_run_config(args.config)
    rec = load_recording(args.file, check=False)
    violations = validate(rec)
    for v in violations:
        print(f"{v.code} {v.location}: {v.message}")
    print(f"{len(violations)} violations")
    write_meta(meta_path_for(None, False) if args.meta is None else args.meta, "validate", cfg, [args.file], {"violations": len(violations)})
    return EXIT_OK if not violations else EXIT_DOMAIN


def cmd_sizes(args) -> int:
    overrides = _overrides(args, {"tolerance": ("experiment", "tolerance_deg")})
    if args.per_frame_fixated:
        overrides["spaces"] = {"per_frame_fixated": True}
    cfg = load_run_config(args.config, overrides)
    parts = _map(_sizes_job, [(p, cfg) for p in args.files], args.jobs)
    samples = SampleSet()
    for p in parts:
        samples = samples.merge(p)
    _, text = emit_report(samples, cfg.spaces, args.format)
    _write_text(args.output, text)
    write_meta(meta_path_for(args.output, False), "sizes", cfg, args.files, {"format": args.format})
    return EXIT_OK


def cmd_fixations(args) -> int:
    cfg = load_run_config(args.config, _overrides(args, {"tolerance": ("experiment", "tolerance_deg")}))
    rec = load_recording(args.file)
    sp = build_scanpath(rec, cfg.detector, cfg.experiment.tolerance_deg)
    _write_text(args.output, fixations_csv(sp))
    counts = sp.method_counts()
    log.info("%d fixations (%d hit, %d tolerance, %d unassigned)", len(sp), counts["hit"], counts["tolerance"], counts["unassigned"])
    write_meta(meta_path_for(args.output, False), "fixations", cfg, [args.file], {"assignment_counts": counts})
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = load_run_config(
        args.config,
        _overrides(
            args,
            {
                "seed": ("experiment", "seed"),
                "n": ("experiment", "n_trials"),
                "k": ("experiment", "k_values"),
                "mock_failure_rate": ("experiment", "mock_failure_rate"),
                "resamples": ("experiment", "resamples"),
                "tolerance": ("experiment", "tolerance_deg"),
            },
        ),
    )
    ex = cfg.experiment
    specs = list(args.client or [])
    if not specs and not args.baselines:
        raise UsageError("give at least one --client or --baselines")
    ks = parse_k_values(ex.k_values)

    data = _map(_scanpath_job, [(p, cfg) for p in args.input], args.jobs)
    if args.question == "e1":
        trials = sample_e1_trials(data, ex.n_trials, ex.seed, ex.min_prior)
    else:
        trials = sample_e2_trials(data, ex.seed, None if args.n is None else ex.n_trials, ex.min_prior)
    if not trials.trials:
        print("no eligible trials", file=sys.stderr)
        return EXIT_DOMAIN

    agents = []
    for spec in specs:
        if spec.startswith("http"):
            from .cards import card_loader

            agents.append(make_agent(spec, client_config=cfg.client, image_loader=card_loader({r.recording_id: r for r, _ in data})))
        else:
            agents.append(make_agent(spec, seed=cfg.client.seed, failure_rate=ex.mock_failure_rate))
    if args.baselines:
        agents.extend(BaselineAgent(b) for b in BASELINES)
    names = [a.name for a in agents]
    if len(set(names)) != len(names):
        raise UsageError(f"duplicate strategies in {names}")

    meta = {"eligible_trials": trials.eligible}
    table = run_sweep(trials.trials, agents, ks, ex.seed, args.jobs, ex.resamples, ex.level, meta)
    emit_results(table, args.output)
    write_meta(
        meta_path_for(args.output, True),
        f"experiment {args.question}",
        cfg,
        args.input,
        {"n_trials": len(trials), "strategies": names, "outputs": ["results.csv", "results.json", "curves.svg"]},
    )
    print(results_csv(table), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = load_run_config(args.config)
    table = load_results(args.results)
    out = args.output or os.path.join(os.path.dirname(os.path.abspath(args.results)), "report")
    _write_text(os.path.join(out, "results.csv"), results_csv(table))
    _write_text(os.path.join(out, "curves.svg"), accuracy_curves_svg(table))
    write_meta(meta_path_for(out, True), "report", cfg, [args.results], {"source_meta": table.meta})
    print(results_csv(table), end="")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    load_run_config(args.config)  # a bad config file is still a usage error
    results = run_selftest()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_DOMAIN


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="INI config file; flags override its values")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    assign = argparse.ArgumentParser(add_help=False)
    assign.add_argument("--tolerance", type=float, metavar="DEG", help="fixation-to-object assignment tolerance (default 1.5)")

    jobs = argparse.ArgumentParser(add_help=False)
    jobs.add_argument("--jobs", type=_nonneg_int, default=os.cpu_count() or 1, help="worker count (results do not depend on it)")

    p = argparse.ArgumentParser(prog="gazectx", description="Gaze accuracy requirements and scanpath-context experiments.")
    p.add_argument("--version", action="version", version=f"gazectx {__version__}")
    sub = p.add_subparsers(dest="command", metavar="<command>")
    sub.required = True

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic recording and its ground truth")
    s.add_argument("--seed", type=int)
    s.add_argument("--objects", type=int)
    s.add_argument("--fixations", type=int)
    s.add_argument("--rate", type=float, help="sample rate in Hz")
    s.add_argument("--interaction-fraction", type=float)
    s.add_argument("--repeat-probability", type=float)
    s.add_argument("--size-range", metavar="LO,HI", help="object size range in metres")
    s.add_argument("--gaze-error", type=float, default=0.0, metavar="DEG", help="apply a constant gaze offset of this mean size")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("validate", parents=[common], help="check a recording against the data model")
    s.add_argument("file")
    s.add_argument("--meta", metavar="FILE", help="where to write meta.json (default ./meta.json)")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("sizes", parents=[common, assign, jobs], help="visual-size distributions per interaction space")
    s.add_argument("files", nargs="+")
    s.add_argument("--format", choices=("json", "csv"), default="json")
    s.add_argument("--per-frame-fixated", action="store_true", help="one fixated sample per frame instead of per fixation")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_sizes)

    s = sub.add_parser("fixations", parents=[common, assign], help="detect and assign fixations, write CSV")
    s.add_argument("file")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_fixations)

    s = sub.add_parser("experiment", parents=[common, assign, jobs], help="sample trials, sweep context length, emit results")
    s.add_argument("question", choices=("e1", "e2"))
    s.add_argument("-i", "--input", action="append", required=True, help="recording (repeatable)")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.add_argument("--client", action="append", metavar="SPEC", help="mock:<strategy>, baseline:<name> or http (repeatable)")
    s.add_argument("--baselines", action="store_true", help="add all four baseline strategies")
    s.add_argument("--k", metavar="RANGE", help="context lengths, e.g. 0..10 or 0,2,6")
    s.add_argument("--n", type=int, help="number of trials to sample (E2 default: all eligible)")
    s.add_argument("--seed", type=int)
    s.add_argument("--resamples", type=int, help="bootstrap resamples")
    s.add_argument("--mock-failure-rate", type=float, help="share of unparseable mock replies")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("report", parents=[common], help="re-render results.csv and curves.svg from results.json")
    s.add_argument("results")
    s.add_argument("-o", "--output", help="output directory (default: report/ next to the input)")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("selftest", parents=[common], help="run the built-in oracle checks")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except SweepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"invalid recording: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (GazeCtxError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
