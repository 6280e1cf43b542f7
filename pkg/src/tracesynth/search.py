"""Search strategies over the rewrite system.

Every strategy starts from the same trivially correct program: one
straight-line branch per trace, dispatched on the branch-selector
parameter. Rewrites preserve correctness, so the job of a strategy is
purely to drive cost down.

alternating: repeatedly apply the cheapest strictly-improving
refinement; when none is left, try synthesizing rewrites in order of
resulting cost, accepting the first whose hidden functions all have
solutions and whose replay still passes, then go back to refining.
After both are exhausted, refinements are re-examined once more:
recorded synthesis failures can unlock the parameter-introduction rule,
whose guard requires evidence that no hidden function could derive the
value.

rts: one refinement pass to a fixpoint, then synthesizing rewrites
only. Cheaper but can strand a parameter that later refinements
would have removed.

ksearch: breadth-first enumeration of all rewrite sequences up to k
steps, holes left open, deduplicated on printed form; states are then
ranked by cost and the best state whose holes are all solvable (and
whose replay passes) wins. k=0 returns the initial program.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from . import dsl
from .costs import CostFn
from .evaluator import check_psi, default_retry_bound
from .jsonvals import ABSENT
from .pbe import ConstraintCache, GrammarConfig
from .rewrites import Rewrite, RewriteContext, SynthesisSpec, enumerate_rewrites
from .traces import (
    BR,
    Scalar,
    TraceSet,
    TraceValuation,
    initial_valuation,
)


class SearchError(Exception):
    pass


@dataclass
class SearchConfig:
    strategy: str = "alternating"
    k: int = 2
    cost_fn: Optional[CostFn] = None
    retry_bound: Optional[int] = None
    timeout: Optional[float] = None
    pbe: GrammarConfig = field(default_factory=GrammarConfig)


@dataclass
class SearchStats:
    pbe_calls: int = 0
    pbe_sat: int = 0
    states_seen: int = 0
    rewrites: List[dict] = field(default_factory=list)

    def log(self, rw: Rewrite, cost_before: float, cost_after: float) -> None:
        self.rewrites.append(
            {
                "rule": rw.rule,
                "site": rw.site,
                "cost_before": cost_before,
                "cost_after": cost_after,
            }
        )


@dataclass
class SearchResult:
    program: dsl.Program
    sigma: TraceValuation
    cost: float
    timed_out: bool
    stats: SearchStats


def build_initial(ts: TraceSet) -> Tuple[dsl.Program, TraceValuation]:
    """One straight-line branch per trace, selected by the br parameter;
    the last trace's branch is the unguarded else."""
    sigma = initial_valuation(ts)
    entries = dict(sigma.entries)
    counter = [0]

    def straight_line(idx: int):
        stmts = []
        for rec in ts.trace(idx):
            counter[0] += 1
            var = f"x{counter[0]}"
            args = tuple((k, dsl.Const(v)) for k, v in rec.request)
            stmts.append(dsl.LetVisible(var, rec.api, args))
            for j in ts.indices():
                entries[(var, j)] = Scalar(rec.response if j == idx else ABSENT)
        return tuple(stmts)

    indices = list(ts.indices())
    body = straight_line(indices[-1])
    for idx in reversed(indices[:-1]):
        body = (dsl.Ite(dsl.ValueCheck(BR, idx), straight_line(idx), body),)
    program = dsl.Program(params=(BR,), body=body)
    dsl.validate_program(program)
    return program, TraceValuation(params=sigma.params, entries=entries)


class _Deadline:
    def __init__(self, seconds: Optional[float]):
        self.at = time.monotonic() + seconds if seconds else None

    def expired(self) -> bool:
        return self.at is not None and time.monotonic() >= self.at


def _solve_specs(specs, cache: ConstraintCache, pbe_cfg: GrammarConfig):
    """Solutions for every spec, or None if any lacks one."""
    solutions = []
    for spec in specs:
        result = cache.solve(list(spec.examples), spec.kind, pbe_cfg)
        if not result.sat:
            return None
        solutions.append((spec.hole, result.fn_body()))
    return solutions


def _instantiate(program: dsl.Program, solutions) -> dsl.Program:
    holes = list(program.holes)
    hidden_defs = list(program.hidden_defs)
    for hole, body in solutions:
        holes.remove(hole)
        hidden_defs.append((hole, body))
    out = dsl.Program(
        params=program.params,
        body=program.body,
        hidden_defs=tuple(hidden_defs),
        holes=tuple(holes),
    )
    dsl.validate_program(out)
    return out


def _refine_to_fixpoint(program, sigma, cost, ts, cost_fn, ctx, stats, deadline):
    """Apply the cheapest strictly-improving refinement until none is
    left. Returns (program, sigma, cost, timed_out)."""
    while True:
        if deadline.expired():
            return program, sigma, cost, True
        best = None
        for rw in enumerate_rewrites(program, sigma, "refine", ctx):
            sigma2 = rw.transform.apply(sigma)
            c = cost_fn(rw.program, sigma2, ts)
            if c < cost and (best is None or c < best[0]):
                best = (c, rw, sigma2)
        if best is None:
            return program, sigma, cost, False
        c, rw, sigma2 = best
        stats.log(rw, cost, c)
        program, sigma, cost = rw.program, sigma2, c
    # unreachable


def _try_synth(program, sigma, cost, ts, cost_fn, ctx, stats, deadline, retry_bound):
    """Attempt synthesizing rewrites in order of resulting cost; apply
    the first fully solvable one that replays. Returns the new state or
    None, plus a timed-out flag."""
    scored = []
    for order, rw in enumerate(enumerate_rewrites(program, sigma, "synth", ctx)):
        sigma2 = rw.transform.apply(sigma)
        c = cost_fn(rw.program, sigma2, ts)
        if c < cost:
            scored.append((c, order, rw, sigma2))
    scored.sort(key=lambda t: (t[0], t[1]))
    for c, _, rw, sigma2 in scored:
        if deadline.expired():
            return None, True
        solutions = _solve_specs(rw.specs, ctx.cache, ctx.pbe_cfg)
        if solutions is None:
            continue
        candidate = _instantiate(rw.program, solutions)
        if not check_psi(candidate, sigma2, ts, retry_bound):
            continue
        stats.log(rw, cost, c)
        return (candidate, sigma2, c), False
    return None, False


def run_alternating(ts: TraceSet, cfg: SearchConfig) -> SearchResult:
    return _run_phased(ts, cfg, alternate=True)


def run_rts(ts: TraceSet, cfg: SearchConfig) -> SearchResult:
    return _run_phased(ts, cfg, alternate=False)


def _run_phased(ts: TraceSet, cfg: SearchConfig, alternate: bool) -> SearchResult:
    cost_fn = cfg.cost_fn
    if cost_fn is None:
        raise SearchError("SearchConfig.cost_fn is required")
    retry_bound = cfg.retry_bound or default_retry_bound(ts)
    deadline = _Deadline(cfg.timeout)
    stats = SearchStats()
    cache = ConstraintCache()
    ctx = RewriteContext(ts, cache, cfg.pbe)

    program, sigma = build_initial(ts)
    if not check_psi(program, sigma, ts, retry_bound):
        raise SearchError("initial program does not replay its own traces")
    cost = cost_fn(program, sigma, ts)

    timed_out = False
    refined_once = False
    while True:
        if not refined_once or alternate:
            program, sigma, cost, timed_out = _refine_to_fixpoint(
                program, sigma, cost, ts, cost_fn, ctx, stats, deadline
            )
            refined_once = True
            if timed_out:
                break
        applied, timed_out = _try_synth(
            program, sigma, cost, ts, cost_fn, ctx, stats, deadline, retry_bound
        )
        if timed_out:
            break
        if applied is not None:
            program, sigma, cost = applied
            continue
        if not alternate:
            break
        # Synthesis is exhausted; its recorded failures may have
        # unlocked parameter introduction, so look at refinements once
        # more before giving up.
        program2, sigma2, cost2, timed_out = _refine_to_fixpoint(
            program, sigma, cost, ts, cost_fn, ctx, stats, deadline
        )
        if timed_out:
            program, sigma, cost = program2, sigma2, cost2
            break
        if cost2 < cost:
            program, sigma, cost = program2, sigma2, cost2
            continue
        break

    stats.pbe_calls = cache.pbe_calls
    stats.pbe_sat = cache.pbe_sat
    return SearchResult(program, sigma, cost, timed_out, stats)


@dataclass
class _KState:
    program: dsl.Program
    sigma: TraceValuation
    specs: Tuple[SynthesisSpec, ...]


def _digest(program: dsl.Program) -> str:
    return hashlib.sha256(dsl.pretty_print(program).encode("utf-8")).hexdigest()


def run_ksearch(ts: TraceSet, cfg: SearchConfig) -> SearchResult:
    cost_fn = cfg.cost_fn
    if cost_fn is None:
        raise SearchError("SearchConfig.cost_fn is required")
    retry_bound = cfg.retry_bound or default_retry_bound(ts)
    deadline = _Deadline(cfg.timeout)
    stats = SearchStats()
    cache = ConstraintCache()
    ctx = RewriteContext(ts, cache, cfg.pbe)

    program, sigma = build_initial(ts)
    if not check_psi(program, sigma, ts, retry_bound):
        raise SearchError("initial program does not replay its own traces")

    start = _KState(program, sigma, ())
    states: List[_KState] = [start]
    seen = {_digest(program)}
    frontier = [start]
    timed_out = False
    for _ in range(cfg.k):
        if timed_out or not frontier:
            break
        next_frontier: List[_KState] = []
        for state in frontier:
            if deadline.expired():
                timed_out = True
                break
            for kind in ("refine", "synth"):
                for rw in enumerate_rewrites(state.program, state.sigma, kind, ctx):
                    d = _digest(rw.program)
                    if d in seen:
                        continue
                    seen.add(d)
                    child = _KState(
                        rw.program,
                        rw.transform.apply(state.sigma),
                        state.specs + rw.specs,
                    )
                    states.append(child)
                    next_frontier.append(child)
        frontier = next_frontier
    stats.states_seen = len(states)

    ranked = sorted(
        enumerate(states),
        key=lambda t: (cost_fn(t[1].program, t[1].sigma, ts), t[0]),
    )
    for _, state in ranked:
        if deadline.expired() and state is not start:
            timed_out = True
            continue
        solutions = _solve_specs(state.specs, cache, cfg.pbe)
        if solutions is None:
            continue
        candidate = _instantiate(state.program, solutions)
        if not check_psi(candidate, state.sigma, ts, retry_bound):
            continue
        stats.pbe_calls = cache.pbe_calls
        stats.pbe_sat = cache.pbe_sat
        cost = cost_fn(candidate, state.sigma, ts)
        return SearchResult(candidate, state.sigma, cost, timed_out, stats)
    raise SearchError("no state satisfies replay, not even the initial program")


def run_search(ts: TraceSet, cfg: SearchConfig) -> SearchResult:
    if cfg.strategy == "alternating":
        return run_alternating(ts, cfg)
    if cfg.strategy == "rts":
        return run_rts(ts, cfg)
    if cfg.strategy == "ksearch":
        return run_ksearch(ts, cfg)
    raise SearchError(f"unknown strategy {cfg.strategy!r}")


def verify_final(
    program: dsl.Program,
    sigma: TraceValuation,
    ts: TraceSet,
    retry_bound: Optional[int] = None,
) -> bool:
    """Replay every trace against the finished program."""
    if not program.is_closed():
        return False
    dsl.validate_program(program)
    return check_psi(program, sigma, ts, retry_bound or default_retry_bound(ts))
