"""Execute the runs of an experiment, optionally on a process pool."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

from .config import ExperimentConfig
from .engine import RunConfig, RunResult, TrafficModel, run
from .metrics import Report, aggregate
from .trace import ContactTrace

_worker_trace: ContactTrace | None = None


def _init_worker(trace: ContactTrace) -> None:
    global _worker_trace
    _worker_trace = trace


def _job(args: tuple[RunConfig, TrafficModel]) -> RunResult:
    config, tm = args
    return run(_worker_trace, config, tm)


def run_jobs(trace: ContactTrace, jobs: list[tuple[RunConfig, TrafficModel]], workers: int = 1) -> list[RunResult]:
    """Results come back in job order whatever the pool size."""
    if workers <= 1 or len(jobs) <= 1:
        return [run(trace, config, tm) for config, tm in jobs]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(trace,)) as pool:
        return list(pool.map(_job, jobs, chunksize=1))


def run_experiment(cfg: ExperimentConfig, workers: int = 1, trace: ContactTrace | None = None) -> list[Report]:
    """One report per (utility, strategy, buffer, ttl) point, averaged over the repetitions."""
    if trace is None:
        trace = cfg.load_trace()
    seeds = cfg.seeds()
    points = list(cfg.run_points())
    jobs = []
    for _, _, _, ttl_frac, rc in points:
        for seed in seeds:
            jobs.append((rc, cfg.traffic(ttl_frac, seed)))
    results = run_jobs(trace, jobs, workers)
    reports = []
    n = len(seeds)
    for i, (strategy, utility, buffer, _, _) in enumerate(points):
        chunk = results[i * n : (i + 1) * n]
        reports.append(
            aggregate(
                chunk,
                trace=cfg.trace_label,
                strategy=strategy,
                utility=utility,
                buffer=buffer,
                ttl=chunk[0].ttl,
            )
        )
    return reports
