"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line (shown in the terminal summary)
before asserting, so a failing criterion still reports its measured numbers.
"""

import functools
import math
import os
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbrsim.cli import main
from cbrsim.clustering import ClusterModel, ClusteringConfig, fit_model, kmeans_1d, lvq_update, rank_of
from cbrsim.config import repetition_seeds
from cbrsim.engine import RunConfig, TrafficModel, run, schedule_traffic
from cbrsim.metrics import aggregate, delivery_rate_change, routing_gain
from cbrsim.strategies import STRATEGIES
from cbrsim.trace import DAY, generate_synthetic, load_trace
from conftest import VERDICTS
from oracles import exhaustive_choice, optimal_sse_1d, planted_dataset, reachable_deliveries, sse
from test_strategies import GOLDEN

REPETITIONS = 20
# the ttl-only runs keep every copy alive until expiry and cost ~2 min per repetition
SOCIAL_REPETITIONS = 5
MASTER_SEED = 2024
REAL_TRACE_ENV = "CBRSIM_REALITY_TRACE"


def verdict(n, ok, text):
    line = f"{'PASS' if ok else 'FAIL'} {n}: {text}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


@functools.lru_cache(maxsize=None)
def standard_trace():
    """30 nodes in 3 communities over 18 days."""
    return generate_synthetic(30, 3, 18 * DAY, 10.0, 0.5, 300, seed=1)


@functools.lru_cache(maxsize=None)
def standard_report(strategy, utility, policy="oracle-delete", update="lvq", repetitions=REPETITIONS):
    cfg = RunConfig(
        strategy=strategy,
        utility=utility,
        delivery_policy=policy,
        clustering=ClusteringConfig(update=update),
    )
    seeds = repetition_seeds(MASTER_SEED, repetitions)
    results = [run(standard_trace(), cfg, TrafficModel(n_packets=5000, seed=s, ttl_frac=0.2)) for s in seeds]
    return aggregate(results, strategy=strategy, utility=utility)


def test_criterion_1_decision_golden_tables():
    t0 = time.perf_counter()
    bad = [(fn.__name__, i) for fn, rows in GOLDEN.items() for i, (x, want) in enumerate(rows) if fn(x) != want]
    short = [fn.__name__ for fn, rows in GOLDEN.items() if len(rows) < 8]
    covered = set(GOLDEN) == set(STRATEGIES.values())
    n_rows = sum(map(len, GOLDEN.values()))
    elapsed = time.perf_counter() - t0
    ok = not bad and not short and covered and elapsed < 1.0
    verdict(1, ok, f"{n_rows} golden rows over {len(GOLDEN)} decision functions, mismatches={bad}, {elapsed:.3f}s")


def test_criterion_2_clustering_oracles():
    rng = np.random.default_rng(MASTER_SEED)
    choice_mismatch = 0
    sse_exact = 0
    sse_worst = 0.0
    n = 200
    for _ in range(n):
        xs = planted_dataset(rng, int(rng.integers(20, 201)), int(rng.integers(1, 5)))
        model = fit_model(xs, 4)
        _, _, centers, assignment = exhaustive_choice(xs, 4)
        ours = [rank_of(model, x) - 1 for x in xs]
        if model.centers != tuple(centers) or ours != assignment:
            choice_mismatch += 1
        exact = True
        for k in range(2, 5):
            c, a = kmeans_1d(xs, k)
            got, best = sse(xs, c, a), optimal_sse_1d(xs, k)
            rel = (got - best) / best if best > 0 else 0.0
            sse_worst = max(sse_worst, rel)
            exact &= rel <= 1e-9
        sse_exact += exact
    ok = choice_mismatch == 0 and sse_exact >= 0.95 * n and sse_worst <= 0.05
    verdict(
        2,
        ok,
        f"model choice mismatches {choice_mismatch}/{n}; SSE optimal for every k on {sse_exact}/{n} datasets, "
        f"worst excess {100 * sse_worst:.2f}%",
    )


def test_criterion_3_lvq_closed_form():
    failures = []

    @settings(max_examples=500, deadline=None)
    @given(
        st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=4, unique=True),
        st.floats(-1e3, 1e3, allow_nan=False),
        st.floats(1e-6, 1 - 1e-6),
    )
    def check(centers, u, alpha):
        m = ClusterModel(tuple(sorted(centers, reverse=True)))
        i = rank_of(m, u) - 1
        want = list(m.centers)
        want[i] = want[i] + alpha * (u - want[i])
        got = lvq_update(m, u, alpha).centers
        if sorted(got) != pytest.approx(sorted(want), abs=1e-12, rel=0):
            failures.append((centers, u, alpha))

    check()
    verdict(3, not failures, f"500 random (centers, value, alpha) cases, {len(failures)} off by more than 1e-12")


UTILITIES = ("destenc", "enc", "lts", "prophet", "spm", "lastcontact")


def _utility_for(strategy, i):
    if strategy.startswith("c2br") or strategy == "simbet-spray":
        return "simbet"
    return UTILITIES[i % len(UTILITIES)]


def test_criterion_4_epidemic_reachability_and_dominance():
    t0 = time.perf_counter()
    oracle_mismatch = 0
    subset_violations = []
    packets = 0
    # 16-hour traces keep 600 runs within the time budget; they train few
    # trackers at the default N_TR, so a small one puts the cluster gates under test
    quick = ClusteringConfig(n_tr=5)
    for i in range(50):
        trace = generate_synthetic(30, 3, 16 * 3600, 6.0, 0.5, 300, seed=100 + i)
        tm = TrafficModel(n_packets=100, seed=i)
        epi = run(trace, RunConfig(strategy="epidemic"), tm)
        expected = {}
        for p in schedule_traffic(trace, tm):
            arrival = reachable_deliveries(trace.events, p.src, p.t_gen, p.t_gen + epi.ttl)
            if p.dst in arrival:
                expected[p.id] = arrival[p.dst] - p.t_gen
        got = dict(zip(epi.delivered_ids, epi.delays))
        oracle_mismatch += sum(1 for pid in set(expected) | set(got) if expected.get(pid) != got.get(pid))
        packets += tm.n_packets
        for strategy in STRATEGIES:
            if strategy == "epidemic":
                continue
            res = run(trace, RunConfig(strategy=strategy, utility=_utility_for(strategy, i), clustering=quick), tm)
            if not set(res.delivered_ids) <= set(epi.delivered_ids) or res.transmissions > epi.transmissions:
                subset_violations.append((i, strategy))
    elapsed = time.perf_counter() - t0
    ok = oracle_mismatch == 0 and not subset_violations and elapsed < 60
    verdict(
        4,
        ok,
        f"50 traces, {packets} packets: {oracle_mismatch} oracle mismatches, "
        f"dominance violations {subset_violations[:5]}, {elapsed:.1f}s",
    )


def test_criterion_5_untrained_cbr_is_its_baseline():
    mismatches = []
    never = ClusteringConfig(n_tr=math.inf)
    for i in range(10):
        trace = generate_synthetic(30, 3, 3 * DAY, 10.0, 0.5, 300, seed=200 + i)
        tm = TrafficModel(n_packets=300, seed=i)
        utility = UTILITIES[i % len(UTILITIES)]
        for base in ("cnr", "df", "coord"):
            a = run(trace, RunConfig(strategy=base, utility=utility), tm)
            b = run(trace, RunConfig(strategy="cbr-" + base, utility=utility, clustering=never), tm)
            if a != b:
                mismatches.append((i, base, utility))
    verdict(5, not mismatches, f"30 (trace, baseline) pairs with N_TR=inf, non-identical results: {mismatches}")


def test_criterion_6_cluster_gain_on_standard_trace():
    lines = []
    ok = True
    for utility in ("destenc", "enc", "lts", "prophet"):
        for base in ("cnr", "df", "coord"):
            b = standard_report(base, utility)
            v = standard_report("cbr-" + base, utility)
            gain = routing_gain(b.cost, v.cost)
            change = delivery_rate_change(b.delivery_ratio, v.delivery_ratio)
            good = gain > 10.0 and abs(change) <= 0.05
            ok &= good
            lines.append(f"{utility}/{base}: gain {gain:.1f}% dD {change:+.3f}{'' if good else ' (miss)'}")
    verdict(6, ok, f"{REPETITIONS} repetitions; " + "; ".join(lines))


def test_criterion_7_real_trace():
    path = os.environ.get(REAL_TRACE_ENV)
    if not path or not os.path.exists(path):
        VERDICTS.append(f"SKIP 7: set {REAL_TRACE_ENV} to a Reality-format contact trace to run this check")
        pytest.skip(f"{REAL_TRACE_ENV} not set")
    trace = load_trace(path)
    seeds = repetition_seeds(MASTER_SEED, 5)
    lines = []
    ok = True
    for utility in UTILITIES:
        reps = {}
        for strategy in ("cnr", "cbr-cnr"):
            cfg = RunConfig(strategy=strategy, utility=utility)
            reps[strategy] = aggregate(run(trace, cfg, TrafficModel(n_packets=5000, seed=s)) for s in seeds)
        gain = routing_gain(reps["cnr"].cost, reps["cbr-cnr"].cost)
        change = delivery_rate_change(reps["cnr"].delivery_ratio, reps["cbr-cnr"].delivery_ratio)
        ok &= gain > 0 and change >= -0.03
        lines.append(f"{utility}: gain {gain:.1f}% dD {change:+.3f}")
    verdict(7, ok, "; ".join(lines))


def _transmissions(report):
    return np.mean([d * 5000 * c for d, c, _, _ in report.per_repetition])


def test_criterion_8_social_variants_without_delivery_deletion():
    increase = {}
    for strategy in ("c2br-df", "c2br-coord", "cnr"):
        on = standard_report(strategy, "simbet", repetitions=SOCIAL_REPETITIONS)
        off = standard_report(strategy, "simbet", policy="ttl-only", repetitions=SOCIAL_REPETITIONS)
        increase[strategy] = _transmissions(off) / _transmissions(on) - 1
    ok = increase["c2br-df"] < 0.25 and increase["c2br-coord"] < 0.25 and increase["cnr"] > 0.50
    text = ", ".join(f"{k} +{100 * v:.1f}%" for k, v in increase.items())
    verdict(8, ok, f"{SOCIAL_REPETITIONS} repetitions, transmission increase with ttl-only delivery: {text}")


def test_criterion_9_update_method_parity():
    base = standard_report("df", "prophet")
    gains = {m: routing_gain(base.cost, standard_report("cbr-df", "prophet", update=m).cost) for m in ("lvq", "periodic", "weighted")}
    spread = max(gains.values()) - min(gains.values())
    text = ", ".join(f"{m} {g:.1f}%" for m, g in gains.items())
    verdict(9, spread <= 5.0, f"CbR-DF/Prophet gains {text}; spread {spread:.2f} points")


ACCEPTANCE_CONFIG = """\
name: determinism
trace:
  synthetic: {n_nodes: 30, n_communities: 3, days: 6, intra_rate: 10, inter_rate: 0.5, seed: 1}
strategies: [cnr, cbr-cnr, df, cbr-df, coord, cbr-coord]
utilities: [prophet, enc]
repetitions: 3
seed: 2024
traffic: {n_packets: 1000}
"""


def test_criterion_10_byte_identical_output(tmp_path):
    cfg = tmp_path / "acceptance.yaml"
    cfg.write_text(ACCEPTANCE_CONFIG)
    outs = []
    for i, jobs in enumerate(("1", "1", "2")):
        out = tmp_path / f"run{i}.csv"
        assert main(["run", str(cfg), "--jobs", jobs, "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1] == outs[2] and len(outs[0].splitlines()) == 13
    verdict(10, ok, f"three runs (jobs 1, 1, 2) of a 12-configuration experiment, identical={ok}, {len(outs[0])} bytes")
