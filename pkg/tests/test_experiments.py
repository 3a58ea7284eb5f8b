import functools
import math
import random
from dataclasses import dataclass, replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from gazectx.errors import DomainError, FormatError, SweepError
from gazectx.experiments import (
    TrialSpec,
    aggregate,
    binomial_sigma,
    bootstrap_ci,
    chance_accuracy,
    derive_seed,
    emit_results,
    load_results,
    results_csv,
    run_sweep,
    sample_e1_trials,
    sample_e2_trials,
)
from gazectx.gaze import build_scanpath
from gazectx.scene import InteractionEvent
from gazectx.synthgen import SynthConfig, generate
from gazectx.vlm import BaselineAgent, MockClient, PriorFixation, TransportFailure


@functools.lru_cache(maxsize=None)
def scene(seed, n_fixations=40, **kw):
    rec, truth = generate(SynthConfig(seed=seed, n_fixations=n_fixations, **dict(kw)))
    return rec, build_scanpath(rec), truth


def data(*seeds, **kw):
    return [scene(s, **kw)[:2] for s in seeds]


def fake_trials(n, v=5, seed=0):
    rng = np.random.default_rng(seed)
    names = tuple(f"obj{i}" for i in range(v))
    hist = tuple(PriorFixation(names[int(rng.integers(v))], 200.0, 1.0) for _ in range(10))
    return [
        TrialSpec(f"t{i:05d}", "r", i, "E1", names[int(rng.integers(v))], i, names, hist, "card:r")
        for i in range(n)
    ]


# --- E1 sampling ----------------------------------------------------------


def test_fifteen_fixations_give_five_eligible():
    ts = sample_e1_trials(data(0, n_fixations=15), n=100, seed=0)
    assert [t.scanpath_index for t in ts] == [10, 11, 12, 13, 14]
    assert ts.eligible == 5 and len(ts.warnings) == 1


def test_trial_contents_match_the_scanpath():
    rec, sp, truth = scene(1)
    ts = sample_e1_trials([(rec, sp)], n=10, seed=3)
    for t in ts:
        fx = sp.fixations[t.scanpath_index]
        assert t.truth == rec.name_of(fx.assigned_object)
        assert t.truth in t.visible_objects
        assert len(t.history) == 10
        prev = [rec.name_of(f.assigned_object) for f in sp.fixations[: t.scanpath_index]][-10:]
        assert [h.name for h in t.history] == prev
        assert all(h.ended_s_ago > 0 for h in t.history)


def test_same_seed_same_trials():
    a = sample_e1_trials(data(2, 3), n=20, seed=5)
    b = sample_e1_trials(data(2, 3), n=20, seed=5)
    c = sample_e1_trials(data(2, 3), n=20, seed=6)
    assert a.trials == b.trials
    assert a.trials != c.trials
    assert len({t.trial_id for t in a}) == 20


def test_nine_fixations_gives_empty_list_and_warning():
    ts = sample_e1_trials(data(4, n_fixations=9), n=5, seed=0)
    assert len(ts) == 0 and ts.eligible == 0
    assert any("no eligible" in w for w in ts.warnings)


def test_sampling_is_uniform_over_the_pool():
    counts = np.zeros(30)
    for seed in range(150):
        for t in sample_e1_trials(data(5), n=12, seed=seed):
            counts[t.scanpath_index - 10] += 1
    expected = 150 * 12 / 30
    assert np.all(np.abs(counts - expected) < 5 * math.sqrt(expected))


def test_n_must_be_positive():
    with pytest.raises(DomainError):
        sample_e1_trials(data(0), n=0, seed=0)


def test_payload_uses_most_recent_k():
    t = sample_e1_trials(data(1), n=1, seed=0)[0]
    assert t.payload(0).prior_fixations == ()
    assert t.payload(3).prior_fixations == t.history[-3:]
    with pytest.raises(DomainError):
        t.payload(11)


# --- E2 sampling ----------------------------------------------------------


def test_no_interactions_no_e2_trials():
    ts = sample_e2_trials(data(6, interaction_fraction=0.0), seed=0)
    assert len(ts) == 0


def test_e2_truth_is_the_upcoming_interaction():
    rec, sp, _ = scene(7, interaction_fraction=0.5)
    ts = sample_e2_trials([(rec, sp)], seed=0)
    assert len(ts) > 0
    for t in ts:
        starts = [e for e in rec.interactions if t.frame_t_ns < e.start_ns <= t.frame_t_ns + 1_000_000_000]
        first = min(starts, key=lambda e: (e.start_ns, e.object_id))
        assert t.truth == rec.name_of(first.object_id)


def anchor(rec, sp, idx):
    fx = sp.fixations[idx]
    return rec.frames[rec.nearest_frame_index(fx.midpoint_ns)].timestamp_ns


def test_one_second_bound_is_closed_and_truth_follows_interaction():
    rec, sp, _ = scene(8, interaction_fraction=0.0)
    idx = 15
    t = anchor(rec, sp, idx)
    gazed = sp.fixations[idx].assigned_object
    other = next(e.object_id for e in rec.catalog if e.object_id != gazed)
    tid = f"{rec.recording_id}#{idx}"

    at_bound = replace(rec, interactions=(InteractionEvent(other, t + 1_000_000_000, t + 2_000_000_000),))
    got = {x.trial_id: x for x in sample_e2_trials([(at_bound, sp)], seed=0)}
    assert tid in got and got[tid].truth == rec.name_of(other)

    beyond = replace(rec, interactions=(InteractionEvent(other, t + 1_000_000_001, t + 2_000_000_000),))
    assert tid not in {x.trial_id for x in sample_e2_trials([(beyond, sp)], seed=0)}

    at_t = replace(rec, interactions=(InteractionEvent(other, t, t + 2_000_000_000),))
    assert tid not in {x.trial_id for x in sample_e2_trials([(at_t, sp)], seed=0)}


# --- bootstrap ------------------------------------------------------------


def test_bootstrap_degenerate_inputs():
    assert bootstrap_ci([1] * 30) == (1.0, 1.0)
    assert bootstrap_ci([0] * 30) == (0.0, 0.0)
    with pytest.raises(DomainError):
        bootstrap_ci([])


def test_bootstrap_fifty_fifty():
    lo, hi = bootstrap_ci([1] * 50 + [0] * 50, seed=0)
    # normal approximation of the binomial mean: 0.5 -/+ 1.96 * 0.05
    half = norm.ppf(0.975) * 0.05
    assert lo == pytest.approx(0.5 - half, abs=0.02) and lo == pytest.approx(0.40, abs=0.02)
    assert hi == pytest.approx(0.5 + half, abs=0.02) and hi == pytest.approx(0.60, abs=0.02)


def test_bootstrap_is_deterministic_and_chunk_free():
    x = [1, 0, 0, 1, 1, 1, 0] * 9
    assert bootstrap_ci(x, seed=4) == bootstrap_ci(x, seed=4)
    assert bootstrap_ci(x, seed=4, chunk=137) == bootstrap_ci(x, seed=4, chunk=1000)


@pytest.mark.parametrize("seed", range(5))
def test_bootstrap_width_shrinks_with_n(seed):
    rng = np.random.default_rng(seed)
    small = rng.random(1000) < 0.3
    large = rng.random(4000) < 0.3
    w_small = np.subtract(*bootstrap_ci(small, seed=seed, resamples=2000)[::-1])
    w_large = np.subtract(*bootstrap_ci(large, seed=seed, resamples=2000)[::-1])
    assert w_large < w_small
    assert w_large / w_small == pytest.approx(0.5, abs=0.1)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=60), st.integers(0, 100))
def test_bootstrap_brackets_the_mean(xs, seed):
    lo, hi = bootstrap_ci(xs, resamples=500, seed=seed)
    assert 0.0 <= lo <= np.mean(xs) <= hi <= 1.0


# --- sweep ----------------------------------------------------------------


def repeat_trials(n=30):
    recs = [scene(s, n_fixations=30, repeat_probability=1.0)[:2] for s in (10, 11)]
    return sample_e1_trials(recs, n=n, seed=0)


def test_echo_mock_on_repeated_targets_is_perfect():
    table = run_sweep(repeat_trials(), MockClient("echo-prev"), resamples=200)
    for k in range(1, 11):
        r = table.row("mock:echo-prev", k)
        assert r.accuracy == 1.0 and r.ci_low == 1.0 and r.n_scored == len(repeat_trials())


def test_random_visible_matches_binomial_expectation():
    trials = fake_trials(2000, v=5)
    table = run_sweep(trials, BaselineAgent("random_visible"), k_values=[0, 5], resamples=200)
    p = chance_accuracy(trials)
    assert p == pytest.approx(0.2)
    for k in (0, 5):
        acc = table.row("random_visible", k).accuracy
        assert abs(acc - p) <= 3 * binomial_sigma(p, len(trials))


def test_prior_baseline_at_k0_is_a_skipped_row():
    table = run_sweep(fake_trials(10), [BaselineAgent("greedy_most_fixated"), BaselineAgent("random_visible")], k_values=[0, 1], resamples=100)
    r = table.row("greedy_most_fixated", 0)
    assert r.status == "skipped" and r.accuracy is None and r.n_scored == 0
    assert table.row("greedy_most_fixated", 1).status == "ok"
    assert table.row("random_visible", 0).status == "ok"


def test_results_do_not_depend_on_jobs_or_order():
    trials = sample_e1_trials(data(12, 13), n=30, seed=1)
    agents = [MockClient("uniform-random", seed=2), BaselineAgent("random_prior")]
    a = run_sweep(trials, agents, resamples=300, jobs=1)
    b = run_sweep(trials, agents, resamples=300, jobs=4)
    assert a.rows == b.rows and results_csv(a) == results_csv(b)
    shuffled = list(a.log)
    random.Random(0).shuffle(shuffled)
    rows = aggregate(shuffled, a.strategies, list(range(11)), {("random_prior", 0)}, seed=0, resamples=300)
    assert rows == a.rows


def test_parse_failures_leave_other_denominators_alone():
    trials = fake_trials(200)
    table = run_sweep(trials, [MockClient("uniform-random", failure_rate=0.2), BaselineAgent("random_visible")], k_values=[2], resamples=100)
    mock = table.row("mock:uniform-random", 2)
    base = table.row("random_visible", 2)
    assert mock.n_discarded > 0 and mock.n_scored + mock.n_discarded == 200
    assert base.n_scored == 200 and base.n_discarded == 0
    correct = sum(o.correct for o in table.log if o.strategy == mock.strategy)
    assert mock.accuracy == correct / mock.n_scored


@dataclass(frozen=True)
class DeadClient:
    name: str = "http:dead"
    kind: str = "http"
    max_in_flight: int = 2
    requires_context: bool = False

    def answer(self, payload, seed):
        return TransportFailure("HTTP 503", 3)


def test_all_transport_failures_raise_sweep_error():
    with pytest.raises(SweepError) as exc:
        run_sweep(fake_trials(5), DeadClient(), k_values=[3, 4], resamples=10)
    assert exc.value.k == 3


def test_sweep_argument_checks():
    with pytest.raises(DomainError):
        run_sweep([], MockClient())
    with pytest.raises(DomainError):
        run_sweep(fake_trials(2), MockClient(), k_values=[11])


def test_seed_derivation_is_stable():
    assert derive_seed(0, "a", "r#1", 3) == derive_seed(0, "a", "r#1", 3)
    assert derive_seed(0, "a", "r#1", 3) != derive_seed(0, "a", "r#1", 4)
    assert 0 <= derive_seed("x") < 2**63


# --- emission -------------------------------------------------------------


def test_emit_files(tmp_path):
    trials = fake_trials(20)
    table = run_sweep(trials, [MockClient("greedy"), BaselineAgent("previous_fixation")], resamples=100, meta={"source": "fake"})
    paths = emit_results(table, tmp_path / "a")
    lines = open(paths["results.csv"]).read().splitlines()
    assert lines[0] == "strategy,k,n_scored,n_discarded,n_transport,accuracy,ci_low,ci_high,status"
    assert len(lines) == 1 + 22
    assert "previous_fixation,0,0,0,0,,,,skipped" in lines
    emit_results(table, tmp_path / "b")
    for name in ("results.csv", "results.json", "curves.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    svg = (tmp_path / "a" / "curves.svg").read_text()
    assert svg.startswith("<svg") and "href" not in svg
    back = load_results(paths["results.json"])
    assert back.rows == table.rows and back.meta["source"] == "fake"
    assert back.meta["template_version"] and back.meta["client_kinds"]["mock:greedy"] == "mock"


def test_load_results_rejects_other_files(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"nope": 1}')
    with pytest.raises(FormatError):
        load_results(p)


def test_pipeline_is_reproducible_end_to_end(tmp_path):
    def run(out):
        rec, _ = generate(SynthConfig(seed=21, n_fixations=25))
        trials = sample_e1_trials([(rec, build_scanpath(rec))], n=10, seed=21)
        table = run_sweep(trials, [MockClient("random-prior", seed=21), MockClient("uniform-random", seed=21)], seed=21, resamples=200)
        emit_results(table, out)

    run(tmp_path / "a")
    run(tmp_path / "b")
    for name in ("results.csv", "results.json", "curves.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
