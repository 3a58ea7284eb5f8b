"""E1/E2 trial sampling, context-length sweeps and bootstrap intervals.

E1 asks which object is fixated right now; E2 asks which object is about
to be handled.  A trial is anchored at a fixation with at least ten
assigned fixations before it; its image is the frame nearest the fixation
midpoint.  For each context length k the agent sees the k most recent prior
fixations.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, FormatError, PreconditionError, SweepError
from .geometry import in_field_of_view
from .gaze import Scanpath
from .scene import Recording, object_in_camera
from .vlm import (
    DEFAULT_TEMPLATE,
    Agent,
    AgentAnswer,
    ParseFailure,
    PriorFixation,
    QueryPayload,
    TransportFailure,
)

log = logging.getLogger(__name__)

MIN_PRIOR_FIXATIONS = 10
MAX_CONTEXT = 10
LOOKAHEAD_NS = 1_000_000_000
DEFAULT_K = tuple(range(MAX_CONTEXT + 1))
RESULTS_COLUMNS = ("strategy", "k", "n_scored", "n_discarded", "n_transport", "accuracy", "ci_low", "ci_high", "status")


@dataclass(frozen=True)
class TrialSpec:
    trial_id: str
    recording_id: str
    frame_t_ns: int
    question: str
    truth: str
    scanpath_index: int
    visible_objects: tuple[str, ...]
    history: tuple[PriorFixation, ...]
    image_ref: str

    def payload(self, k: int) -> QueryPayload:
        if not 0 <= k <= len(self.history):
            raise DomainError(f"trial {self.trial_id} has {len(self.history)} prior fixations, asked for k={k}")
        prior = self.history[len(self.history) - k :] if k else ()
        return QueryPayload(self.image_ref, self.visible_objects, prior, self.question)

    def to_json(self) -> dict:
        d = asdict(self)
        d["visible_objects"] = list(self.visible_objects)
        d["history"] = [asdict(h) for h in self.history]
        return d


@dataclass
class TrialSet:
    trials: list[TrialSpec]
    eligible: int
    warnings: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    def __getitem__(self, i):
        return self.trials[i]


def _visible_names(recording: Recording, frame) -> tuple[str, ...]:
    out = []
    for obs in frame.observations:
        if in_field_of_view(recording.camera, object_in_camera(frame, obs).position):
            out.append(recording.name_of(obs.object_id))
    return tuple(out)


def _candidates(recording: Recording, scanpath: Scanpath, question: str, min_prior: int):
    """Yield ``(fixation index, frame, truth name, history)`` for eligible fixations."""
    if scanpath.recording_id != recording.recording_id:
        raise DomainError(f"scanpath of {scanpath.recording_id} does not belong to {recording.recording_id}")
    assigned = scanpath.assigned
    events = sorted(recording.interactions, key=lambda e: (e.start_ns, e.object_id))
    for rank, idx in enumerate(assigned):
        if rank < min_prior:
            continue
        fx = scanpath.fixations[idx]
        frame = recording.frames[recording.nearest_frame_index(fx.midpoint_ns)]
        t = frame.timestamp_ns
        if question == "E1":
            truth_id = fx.assigned_object
        else:
            upcoming = [e for e in events if t < e.start_ns <= t + LOOKAHEAD_NS]
            if not upcoming:
                continue
            truth_id = upcoming[0].object_id
        visible = _visible_names(recording, frame)
        truth = recording.name_of(truth_id)
        if truth not in visible:
            continue
        history = tuple(
            PriorFixation(
                recording.name_of(scanpath.fixations[j].assigned_object),
                round(scanpath.fixations[j].duration_ms, 3),
                round((t - scanpath.fixations[j].end_ns) / 1e9, 6),
            )
            for j in assigned[max(0, rank - MAX_CONTEXT) : rank]
        )
        yield idx, frame, truth, visible, history


def _sample(
    data: Sequence[tuple[Recording, Scanpath]], question: str, n: int | None, seed: int, min_prior: int
) -> TrialSet:
    pool = []
    for rec, sp in data:
        for idx, frame, truth, visible, history in _candidates(rec, sp, question, min_prior):
            image = frame.image or f"card:{rec.recording_id}@{frame.timestamp_ns}"
            pool.append(
                TrialSpec(
                    f"{rec.recording_id}#{idx}",
                    rec.recording_id,
                    frame.timestamp_ns,
                    question,
                    truth,
                    idx,
                    visible,
                    history,
                    image,
                )
            )
    warnings = []
    if n is None or n >= len(pool):
        if n is not None and n > len(pool):
            warnings.append(f"requested {n} {question} trials but only {len(pool)} are eligible")
        chosen = pool
    else:
        rng = np.random.default_rng(seed)
        keep = sorted(rng.choice(len(pool), size=n, replace=False).tolist())
        chosen = [pool[i] for i in keep]
    if not pool:
        warnings.append(f"no eligible {question} trials (need {min_prior} prior assigned fixations)")
    for w in warnings:
        log.warning(w)
    return TrialSet(chosen, len(pool), warnings)


def sample_e1_trials(
    data: Sequence[tuple[Recording, Scanpath]], n: int, seed: int, min_prior: int = MIN_PRIOR_FIXATIONS
) -> TrialSet:
    """Uniform sample (without replacement) of fixations with enough history."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return _sample(data, "E1", n, seed, min_prior)


def sample_e2_trials(
    data: Sequence[tuple[Recording, Scanpath]], seed: int, n: int | None = None, min_prior: int = MIN_PRIOR_FIXATIONS
) -> TrialSet:
    """Fixations followed by an interaction onset within (t, t + 1 s].

    The truth is the object of the earliest such interaction, whatever the
    fixation was on.
    """
    return _sample(data, "E2", n, seed, min_prior)


# --------------------------------------------------------------------------
# Bootstrap
# --------------------------------------------------------------------------


def bootstrap_ci(
    outcomes: Sequence[float], level: float = 0.95, resamples: int = 10_000, seed: int = 0, chunk: int = 1000
) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean of ``outcomes``."""
    x = np.asarray(outcomes, dtype=float)
    if x.size == 0:
        raise DomainError("bootstrap_ci needs at least one outcome")
    if not 0 < level < 1:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    rng = np.random.default_rng(seed)
    n = x.size
    means = np.empty(resamples)
    for start in range(0, resamples, chunk):
        stop = min(start + chunk, resamples)
        idx = rng.integers(0, n, size=(stop - start, n))
        means[start:stop] = x[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    low, high = np.percentile(means, [100 * alpha, 100 * (1 - alpha)])
    m = float(x.mean())
    return min(float(low), m), max(float(high), m)


# --------------------------------------------------------------------------
# Sweep
# --------------------------------------------------------------------------


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary parts (independent of PYTHONHASHSEED)."""
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") >> 1


@dataclass(frozen=True)
class TrialOutcome:
    strategy: str
    k: int
    trial_id: str
    status: str  # scored | parse_failed | transport_failed | skipped
    chosen: str | None
    truth: str

    @property
    def correct(self) -> bool:
        return self.status == "scored" and self.chosen == self.truth


@dataclass(frozen=True)
class ResultRow:
    strategy: str
    k: int
    n_scored: int
    n_discarded: int
    n_transport: int
    accuracy: float | None
    ci_low: float | None
    ci_high: float | None
    status: str  # ok | skipped | empty


@dataclass
class ResultTable:
    rows: list[ResultRow]
    log: list[TrialOutcome]
    meta: dict

    def row(self, strategy: str, k: int) -> ResultRow:
        for r in self.rows:
            if r.strategy == strategy and r.k == k:
                return r
        raise KeyError((strategy, k))

    @property
    def strategies(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.strategy not in seen:
                seen.append(r.strategy)
        return seen


def _run_one(agent: Agent, trial: TrialSpec, k: int, seed: int) -> TrialOutcome:
    out = agent.answer(trial.payload(k), seed)
    if isinstance(out, AgentAnswer):
        return TrialOutcome(agent.name, k, trial.trial_id, "scored", out.chosen, trial.truth)
    if isinstance(out, ParseFailure):
        return TrialOutcome(agent.name, k, trial.trial_id, "parse_failed", None, trial.truth)
    if isinstance(out, TransportFailure):
        return TrialOutcome(agent.name, k, trial.trial_id, "transport_failed", None, trial.truth)
    raise TypeError(f"agent {agent.name} returned {type(out).__name__}")


def aggregate(
    log_entries: Iterable[TrialOutcome],
    strategies: Sequence[str],
    k_values: Sequence[int],
    skipped: set[tuple[str, int]] = frozenset(),
    seed: int = 0,
    resamples: int = 10_000,
    level: float = 0.95,
) -> list[ResultRow]:
    """Fold trial outcomes into one row per (strategy, k).

    Outcomes are keyed by trial id and sorted before bootstrapping, so the
    result does not depend on the order trials finished in.
    """
    groups: dict[tuple[str, int], list[TrialOutcome]] = {}
    for o in log_entries:
        groups.setdefault((o.strategy, o.k), []).append(o)
    rows = []
    for s in strategies:
        for k in k_values:
            if (s, k) in skipped:
                rows.append(ResultRow(s, k, 0, 0, 0, None, None, None, "skipped"))
                continue
            g = sorted(groups.get((s, k), []), key=lambda o: o.trial_id)
            scored = [1.0 if o.correct else 0.0 for o in g if o.status == "scored"]
            n_disc = sum(o.status == "parse_failed" for o in g)
            n_tr = sum(o.status == "transport_failed" for o in g)
            if not scored:
                rows.append(ResultRow(s, k, 0, n_disc, n_tr, None, None, None, "empty"))
                continue
            acc = sum(scored) / len(scored)
            lo, hi = bootstrap_ci(scored, level, resamples, derive_seed(seed, "ci", s, k))
            rows.append(ResultRow(s, k, len(scored), n_disc, n_tr, acc, lo, hi, "ok"))
    return rows


def run_sweep(
    trials: Sequence[TrialSpec],
    agents: Sequence[Agent] | Agent,
    k_values: Sequence[int] = DEFAULT_K,
    seed: int = 0,
    jobs: int = 1,
    resamples: int = 10_000,
    level: float = 0.95,
    meta: dict | None = None,
) -> ResultTable:
    """Query every agent on every trial at every context length.

    Each (agent, trial, k) gets its own seed derived from ``seed``, so
    results are identical for any ``jobs``.  Parse failures leave the
    denominator; a k where every trial failed in transport raises
    :class:`SweepError`.
    """
    trials = list(trials)
    if not trials:
        raise DomainError("run_sweep needs at least one trial")
    if not isinstance(agents, (list, tuple)):
        agents = [agents]
    k_values = list(k_values)
    for k in k_values:
        if not 0 <= k <= MAX_CONTEXT:
            raise DomainError(f"k must lie in 0..{MAX_CONTEXT}, got {k}")

    tasks, skipped = [], set()
    for agent in agents:
        for k in k_values:
            if k == 0 and getattr(agent, "requires_context", False):
                skipped.add((agent.name, k))
                continue
            for trial in trials:
                tasks.append((agent, trial, k, derive_seed(seed, agent.name, trial.trial_id, k)))

    def work(task):
        agent, trial, k, s = task
        try:
            return _run_one(agent, trial, k, s)
        except PreconditionError:
            return TrialOutcome(agent.name, k, trial.trial_id, "skipped", None, trial.truth)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(work, tasks))
    else:
        outcomes = [work(t) for t in tasks]

    for agent in agents:
        for k in k_values:
            if (agent.name, k) in skipped:
                continue
            group = [o for o in outcomes if o.strategy == agent.name and o.k == k]
            if group and all(o.status == "transport_failed" for o in group):
                raise SweepError(k, f"all {len(group)} trials transport-failed for {agent.name} at k={k}")

    names = [a.name for a in agents]
    rows = aggregate(outcomes, names, k_values, skipped, seed, resamples, level)
    info = {
        "seed": seed,
        "question": trials[0].question,
        "n_trials": len(trials),
        "k_values": k_values,
        "strategies": names,
        "client_kinds": {a.name: a.kind for a in agents},
        "template_version": DEFAULT_TEMPLATE.version,
        "bootstrap": {"method": "percentile", "resamples": resamples, "level": level},
    }
    info.update(meta or {})
    return ResultTable(rows, outcomes, info)


# --------------------------------------------------------------------------
# Emission
# --------------------------------------------------------------------------


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.6f}"


def results_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_COLUMNS)
    for r in table.rows:
        w.writerow([r.strategy, r.k, r.n_scored, r.n_discarded, r.n_transport, _fmt(r.accuracy), _fmt(r.ci_low), _fmt(r.ci_high), r.status])
    return buf.getvalue()


def results_json(table: ResultTable) -> str:
    obj = {
        "meta": table.meta,
        "rows": [asdict(r) for r in table.rows],
        "trials": [asdict(o) for o in table.log],
    }
    return json.dumps(obj, indent=1, ensure_ascii=False) + "\n"


def load_results(path: str | os.PathLike) -> ResultTable:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        rows = [ResultRow(**r) for r in obj["rows"]]
        log_entries = [TrialOutcome(**o) for o in obj.get("trials", [])]
        return ResultTable(rows, log_entries, obj.get("meta", {}))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: not a results file ({exc})") from None


def emit_results(table: ResultTable, out_dir: str | os.PathLike) -> dict[str, str]:
    """Write ``results.csv``, ``results.json`` and ``curves.svg``."""
    from .plotting import accuracy_curves_svg

    os.makedirs(out_dir, exist_ok=True)
    files = {
        "results.csv": results_csv(table),
        "results.json": results_json(table),
        "curves.svg": accuracy_curves_svg(table),
    }
    paths = {}
    for name, text in files.items():
        p = os.path.join(out_dir, name)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        paths[name] = p
    return paths


def accuracy_by_bruteforce(entries: Sequence[TrialOutcome], strategy: str, k: int) -> float | None:
    scored = [o for o in entries if o.strategy == strategy and o.k == k and o.status == "scored"]
    if not scored:
        return None
    return sum(o.chosen == o.truth for o in scored) / len(scored)


def chance_accuracy(trials: Sequence[TrialSpec]) -> float:
    """Expected accuracy of uniform guessing among the visible objects."""
    return float(np.mean([1.0 / len(t.visible_objects) for t in trials]))


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n)
