"""Collaboration-strategy selection: exhaustive, priority-based and baselines.

Every method returns a StrategyResult. A frame whose minimum-data requirement
cannot be met by the chosen strategy is reported with ``feasible=False``;
``effective_wscr`` then counts it as zero.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Iterator

import numpy as np

from .ipm import SolveResult, SolverOptions, solve_batch
from .lp import build
from .model import (Allocation, CollaborationStrategy, DeviceParams, HapParams, NetworkInstance,
                    harvested_energy, validate, wscr)

EX_CAP = 8
# relative gap under which two strategies count as tied; ties go to fewer clusters
TIE_RTOL = 1e-7


@dataclass(frozen=True)
class StrategyResult:
    method: str
    strategy: CollaborationStrategy
    allocation: Allocation | None
    wscr: float
    feasible: bool
    status: str = "converged"
    n_solves: int = 0
    solve_ms: float = 0.0
    worst_violation: float = 0.0
    iterations: int = 0
    per_m: tuple = ()
    note: str = ""

    @property
    def m(self) -> int:
        return self.strategy.m

    @property
    def effective_wscr(self) -> float:
        """WSCR with infeasible frames counted as zero (outage)."""
        return self.wscr if self.feasible else 0.0

    CSV_FIELDS = ("method", "m", "wscr", "feasible", "solve_ms", "violations", "n_solves", "strategy")

    def csv_row(self, timing: bool = True) -> dict:
        return {"method": self.method, "m": self.m, "wscr": repr(self.wscr),
                "feasible": int(self.feasible),
                "solve_ms": f"{self.solve_ms:.3f}" if timing else "",
                "violations": repr(self.worst_violation), "n_solves": self.n_solves,
                "strategy": str(self.strategy)}


# -- priority ------------------------------------------------------------------

def priority(device: DeviceParams, hap: HapParams, h: float) -> float:
    """O_n = w B log2(1 + p h / N0) k f^2 phi / p; higher means better SD."""
    rate = hap.bandwidth * math.log2(1 + device.tx_power * h / hap.noise_power)
    return device.weight * rate * device.energy_coeff * device.cpu_speed ** 2 * device.cycles_per_bit / device.tx_power


def priority_ranking(instance: NetworkInstance) -> list:
    """Device ids from highest to lowest priority; lower index wins ties."""
    scores = [priority(d, instance.hap, h) for d, h in zip(instance.devices, instance.h)]
    return sorted(range(instance.N), key=lambda n: (-scores[n], n))


def priority_strategy(instance: NetworkInstance, m: int) -> CollaborationStrategy:
    """m clusters pairing the i-th highest with the i-th lowest priority device."""
    N = instance.N
    if not 0 <= m <= N // 2:
        raise ValueError(f"m must lie in 0..{N // 2}")
    rank = priority_ranking(instance)
    sds = rank[:m]
    ads = rank[::-1][:m]
    ids = sorted(rank[m:N - m])
    return CollaborationStrategy(tuple(sds), tuple(ads), tuple(ids))


# -- enumeration -----------------------------------------------------------------

def double_factorial(k: int) -> int:
    return math.prod(range(k, 0, -2)) if k > 0 else 1


def count_strategies(N: int, oriented: bool = False) -> int:
    """1 + sum_m C(N, 2m) (2m-1)!! [* 2^m when SD/AD orientation counts]."""
    return 1 + sum(math.comb(N, 2 * m) * double_factorial(2 * m - 1) * (2 ** m if oriented else 1)
                   for m in range(1, N // 2 + 1))


def perfect_matchings(items: tuple) -> Iterator[list]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for i, partner in enumerate(rest):
        for sub in perfect_matchings(rest[:i] + rest[i + 1:]):
            yield [(first, partner)] + sub


def enumerate_strategies(N: int, oriented: bool = True) -> Iterator[CollaborationStrategy]:
    """m = 0 first, then every 2m-subset and perfect matching of it.

    With ``oriented`` each pair is emitted in both SD/AD roles; otherwise the
    lower id of each pair is the SD.
    """
    yield CollaborationStrategy.non_collaborative(N)
    for m in range(1, N // 2 + 1):
        for subset in combinations(range(N), 2 * m):
            rest = tuple(n for n in range(N) if n not in subset)
            for pairs in perfect_matchings(subset):
                flips = product((False, True), repeat=m) if oriented else [(False,) * m]
                for flip in flips:
                    sds = tuple(b if f else a for (a, b), f in zip(pairs, flip))
                    ads = tuple(a if f else b for (a, b), f in zip(pairs, flip))
                    yield CollaborationStrategy(sds, ads, rest)


# -- evaluation ------------------------------------------------------------------

def solve_strategies(instance: NetworkInstance, strategies, options: SolverOptions | None = None) -> list:
    """Solve the LP of every strategy; same-m LPs share one batched solve."""
    strategies = list(strategies)
    out = [None] * len(strategies)
    groups: dict = {}
    for i, s in enumerate(strategies):
        groups.setdefault(s.m, []).append(i)
    for m in sorted(groups):
        idx = groups[m]
        res = solve_batch([build(instance, strategies[i]) for i in idx], options)
        for i, r in zip(idx, res):
            out[i] = r
    return out


def _to_allocation(res: SolveResult, strategy: CollaborationStrategy) -> Allocation:
    x = np.maximum(res.x1, 0.0)
    x[0] = min(x[0], 1.0)
    return Allocation.from_vector(x, strategy)


def _result(method, instance, strategy, res: SolveResult, n_solves, t0, per_m=(), iterations=None):
    ms = (time.perf_counter() - t0) * 1e3
    its = res.stats.iterations if iterations is None else iterations
    if not res.converged:
        return StrategyResult(method, strategy, None, 0.0, False, res.status, n_solves, ms,
                              iterations=its, per_m=per_m, note=res.stats.message)
    alloc = _to_allocation(res, strategy)
    rep = validate(instance, strategy, alloc)
    return StrategyResult(method, strategy, alloc, wscr(instance, strategy, alloc), True, res.status,
                          n_solves, ms, rep.worst_relative, its, per_m)


def _infeasible(method, strategy, n_solves, t0, per_m=(), note="no strategy meets l_th"):
    ms = (time.perf_counter() - t0) * 1e3
    return StrategyResult(method, strategy, None, 0.0, False, "infeasible", n_solves, ms,
                          per_m=per_m, note=note)


def _pick(values, keys):
    """Index of the best value; near-ties (TIE_RTOL) go to the smallest key."""
    ok = [i for i, v in enumerate(values) if v is not None]
    if not ok:
        return None
    best = max(values[i] for i in ok)
    cands = [i for i in ok if values[i] >= best - TIE_RTOL * abs(best)]
    return min(cands, key=lambda i: keys[i])


def solve_strategy(instance, strategy, method="FIXED", options=None) -> StrategyResult:
    t0 = time.perf_counter()
    res = solve_strategies(instance, [strategy], options)[0]
    return _result(method, instance, strategy, res, 1, t0)


def exhaustive(instance: NetworkInstance, cap: int = EX_CAP, options=None) -> StrategyResult:
    """Solve every oriented strategy and return the best (smaller m, then lexicographic on ties)."""
    if instance.N > cap:
        raise ValueError(f"exhaustive search over N={instance.N} devices exceeds the cap of {cap} "
                         f"({count_strategies(instance.N, True)} LPs); raise the cap explicitly "
                         "or use the priority method")
    t0 = time.perf_counter()
    strategies = list(enumerate_strategies(instance.N, oriented=True))
    results = solve_strategies(instance, strategies, options)
    values = [r.objective if r.converged else None for r in results]
    i = _pick(values, [s.key() for s in strategies])
    if i is None:
        return _infeasible("EX", strategies[0], len(strategies), t0)
    return _result("EX", instance, strategies[i], results[i], len(strategies), t0,
                   iterations=sum(r.stats.iterations for r in results))


def priority_iterative(instance: NetworkInstance, options=None) -> StrategyResult:
    """Evaluate the priority strategy for every m = 0..N//2 and keep the best."""
    t0 = time.perf_counter()
    strategies = [priority_strategy(instance, m) for m in range(instance.N // 2 + 1)]
    results = solve_strategies(instance, strategies, options)
    values = [r.objective if r.converged else None for r in results]
    per_m = tuple(v if v is not None else float("nan") for v in values)
    i = _pick(values, list(range(len(strategies))))
    if i is None:
        return _infeasible("PI", strategies[0], len(strategies), t0, per_m)
    return _result("PI", instance, strategies[i], results[i], len(strategies), t0, per_m,
                   iterations=sum(r.stats.iterations for r in results))


def baseline_nc(instance: NetworkInstance, options=None) -> StrategyResult:
    r = solve_strategy(instance, CollaborationStrategy.non_collaborative(instance.N), "NC", options)
    return r


def baseline_sc(instance: NetworkInstance, seed: int, options=None) -> StrategyResult:
    """Uniform random m, random 2m devices, random pairing and orientation."""
    t0 = time.perf_counter()
    N = instance.N
    rng = np.random.default_rng(seed)
    m = int(rng.integers(0, N // 2 + 1))
    chosen = rng.choice(N, size=2 * m, replace=False)
    sds, ads = tuple(chosen[0::2]), tuple(chosen[1::2])
    ids = tuple(sorted(set(range(N)) - set(chosen.tolist())))
    s = CollaborationStrategy(sds, ads, ids)
    res = solve_strategies(instance, [s], options)[0]
    return _result("SC", instance, s, res, 1, t0)


def baseline_lc(instance: NetworkInstance) -> StrategyResult:
    """Harvest for the whole frame, then compute locally until energy or time runs out."""
    t0 = time.perf_counter()
    s = CollaborationStrategy.non_collaborative(instance.N)
    T = instance.hap.frame_length
    loc = []
    for d, h in zip(instance.devices, instance.h):
        e = harvested_energy(d, instance.hap, h, 1.0)
        loc.append(min(e / (d.energy_coeff * d.cpu_speed ** 2 * d.cycles_per_bit),
                       d.cpu_speed * T / d.cycles_per_bit))
    loc = np.array(loc)
    alloc = Allocation(1.0, 0.0, np.zeros((0, 3)), np.zeros(0), np.column_stack([loc, np.zeros_like(loc)]))
    short = [n for n in range(instance.N) if loc[n] < instance.l_th]
    rep = validate(instance, s, alloc)
    ms = (time.perf_counter() - t0) * 1e3
    note = f"devices {short} below l_th" if short else ""
    return StrategyResult("LC", s, alloc, wscr(instance, s, alloc), not short,
                          "converged" if not short else "infeasible", 0, ms,
                          rep.worst_relative if not short else 0.0, 0, (), note)


METHODS = ("EX", "PI", "DL", "NC", "LC", "SC")
