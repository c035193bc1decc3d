"""Benchmark harness for the random-LP and reachability workloads

A workload prepares its inputs in ``setup`` and runs the measured body in
``run``; the harness does one untimed warmup and then N timed repetitions
with a monotonic nanosecond clock. Counters record which hooks ran inside
the timed region so tests can check that preparation and serialization
never leak into a sample.
"""
import logging
import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from lpreach.core.config import SolverConfig, settings
from lpreach.models.schemas import BenchMode, BenchReport
from lpreach.services.lp_core import GeneralLP, LPBatch
from lpreach.services.reach import Trajectory, integrate_embedding
from lpreach.services.simplex import linprog, solve_chunked
from lpreach.services.systems import vanderpol_system

logger = logging.getLogger(__name__)

NOT_REPORTED = "compile-time columns are not reported: nothing is compiled at first call"


def gen_random_lp(n: int, m_ub: int, seed: int) -> GeneralLP:
    """
    Random feasible and bounded LP in x >= 0 mode

    A_ub and c are uniform on [-1, 1]; b_ub = A_ub x0 + s with x0, s uniform
    on [0, 1], so x0 is feasible; the extra row 1^T x <= 2n bounds the set.
    """
    if n < 1 or m_ub < 1:
        raise ValueError(f"n and m_ub must be >= 1, got n={n}, m_ub={m_ub}")
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1.0, 1.0, size=(m_ub, n))
    x0 = rng.uniform(0.0, 1.0, size=n)
    s = rng.uniform(0.0, 1.0, size=m_ub)
    b = A @ x0 + s
    c = rng.uniform(-1.0, 1.0, size=n)
    A_ub = np.vstack([A, np.ones((1, n))])
    b_ub = np.append(b, 2.0 * n)
    return GeneralLP.create(c, A_ub, b_ub)


@dataclass
class BenchCounters:
    prepare_calls: int = 0
    prepare_calls_during_timing: int = 0
    timed_calls: int = 0
    serializations_during_timing: int = 0

    def as_metrics(self) -> Dict[str, float]:
        return {
            "prepare_calls": float(self.prepare_calls),
            "prepare_calls_during_timing": float(self.prepare_calls_during_timing),
            "timed_calls": float(self.timed_calls),
            "serializations_during_timing": float(self.serializations_during_timing),
        }


class Workload:
    """Base workload: override ``prepare`` and ``run``"""

    name = "workload"

    def __init__(self):
        self.counters = BenchCounters()
        self.timing = False

    def prepare(self) -> None:
        self.counters.prepare_calls += 1
        if self.timing:
            self.counters.prepare_calls_during_timing += 1

    def run(self) -> None:
        raise NotImplementedError

    def serialize(self) -> dict:
        if self.timing:
            self.counters.serializations_during_timing += 1
        return {}


def _measure(workload: Workload, samples: int) -> tuple:
    workload.prepare()
    start = time.perf_counter_ns()
    workload.run()
    warmup_ns = time.perf_counter_ns() - start

    durations: List[int] = []
    workload.timing = True
    try:
        for _ in range(samples):
            start = time.perf_counter_ns()
            workload.run()
            durations.append(time.perf_counter_ns() - start)
            workload.counters.timed_calls += 1
    finally:
        workload.timing = False
    return warmup_ns, durations


def _report(name: str, mode: BenchMode, warmup_ns: int, durations: List[int], metrics: Dict[str, float], notes: List[str]) -> BenchReport:
    seconds = [d * 1e-9 for d in durations]
    std = statistics.stdev(seconds) if len(seconds) > 1 else 0.0
    report = BenchReport(
        name=name,
        mode=mode,
        sample_size=len(seconds),
        mean_seconds=statistics.mean(seconds),
        std_seconds=std,
        median_seconds=statistics.median(seconds),
        warmup_seconds=warmup_ns * 1e-9,
        metrics=metrics,
        notes=notes,
    )
    logger.info(f"[bench] {name}: {report.mean_seconds:.6g} ± {report.std_seconds:.6g} s (N={report.sample_size})")
    return report


class RandomLPWorkload(Workload):
    """Solve one fixed random LP per repetition"""

    name = "random_lp"

    def __init__(self, n: int, m_ub: int, seed: int, config: Optional[SolverConfig] = None):
        super().__init__()
        self.n, self.m_ub, self.seed = n, m_ub, seed
        self.config = config or SolverConfig.from_settings()
        self.problem: Optional[GeneralLP] = None
        self.last = None

    def prepare(self) -> None:
        super().prepare()
        self.problem = gen_random_lp(self.n, self.m_ub, self.seed)

    def run(self) -> None:
        self.last = linprog(self.problem, self.config)


class RandomLPBatchWorkload(Workload):
    """Solve N seeded problems as one batch; one repetition is the whole batch"""

    name = "random_lp_batch"

    def __init__(self, n: int, m_ub: int, seed: int, count: int, workers: Optional[int], config: Optional[SolverConfig] = None):
        super().__init__()
        self.n, self.m_ub, self.seed, self.count, self.workers = n, m_ub, seed, count, workers
        self.config = config or SolverConfig.from_settings()
        self.batch: Optional[LPBatch] = None
        self.last = None

    def prepare(self) -> None:
        super().prepare()
        self.batch = LPBatch.stack([gen_random_lp(self.n, self.m_ub, self.seed + i) for i in range(self.count)])

    def run(self) -> None:
        self.last = solve_chunked(self.batch, self.config, workers=self.workers)


def run_lp_bench(
    n: int = 20,
    m_ub: int = 15,
    samples: int = 100,
    seed: int = 0,
    parallel: bool = False,
    workers: Optional[int] = None,
    config: Optional[SolverConfig] = None,
) -> BenchReport:
    """Latency of a single random LP solve, or batch throughput when ``parallel``"""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    notes = [NOT_REPORTED]
    if not parallel:
        workload = RandomLPWorkload(n, m_ub, seed, config)
        warmup_ns, durations = _measure(workload, samples)
        metrics = workload.counters.as_metrics()
        metrics["success"] = float(workload.last.status.success)
        return _report(f"random_lp n={n} m_ub={m_ub}", BenchMode.LATENCY, warmup_ns, durations, metrics, notes)

    workload = RandomLPBatchWorkload(n, m_ub, seed, samples, workers, config)
    warmup_ns, durations = _measure(workload, 1)
    metrics = workload.counters.as_metrics()
    metrics["problems_per_second"] = samples / (durations[0] * 1e-9) if durations[0] else math.inf
    metrics["success_rate"] = float(workload.last.success.mean())
    notes.append(f"throughput mode: {samples} problems per batch, workers={workers or 1}")
    return _report(f"random_lp_batch n={n} m_ub={m_ub}", BenchMode.THROUGHPUT, warmup_ns, durations, metrics, notes)


class ReachWorkload(Workload):
    """Van der Pol refined tube up to t_f"""

    name = "vanderpol_reach"

    def __init__(self, mu: float, t_f: float, refine: bool = True, workers: Optional[int] = None):
        super().__init__()
        self.mu, self.t_f, self.refine, self.workers = mu, t_f, refine, workers
        self.scenario = None
        self.last: Optional[Trajectory] = None
        self.sizes: List[tuple] = []

    def prepare(self) -> None:
        super().prepare()
        self.scenario = vanderpol_system(self.mu, self.t_f)

    def run(self) -> None:
        sc = self.scenario
        self.last = integrate_embedding(
            sc.system, sc.system.initial_state, sc.dt, sc.T, self.refine, workers=self.workers,
            enclose=settings.enclose_steps,
        )
        n = sc.system.n
        self.sizes.append((self.last.bound_width_sum(n), self.last.bound_volume(n)))


def run_reach_bench(
    mu: float = 1.0,
    t_f: float = 0.628,
    samples: int = 10,
    refine: bool = True,
    workers: Optional[int] = None,
) -> BenchReport:
    """Runtime of the refined Van der Pol tube; bound size is the final width sum, the volume rides along"""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    workload = ReachWorkload(mu, t_f, refine, workers)
    warmup_ns, durations = _measure(workload, samples)
    width_sum, volume = workload.sizes[-1]
    metrics = workload.counters.as_metrics()
    metrics.update({
        "bound_width_sum": width_sum,
        "bound_volume": volume,
        "bound_size": width_sum,
        "bound_size_spread": max(s for s, _ in workload.sizes) - min(s for s, _ in workload.sizes),
        "steps": float(workload.last.length - 1),
        "order_violation": float(workload.last.order_violation),
        "enclosure_failed": float(workload.last.enclosure_failed),
    })
    notes = [NOT_REPORTED, f"dt={workload.scenario.dt!r}, refine={refine}"]
    return _report(f"vanderpol mu={mu} t_f={t_f}", BenchMode.LATENCY, warmup_ns, durations, metrics, notes)
