"""Big-step execution of programs against a replay oracle.

Execution is run-to-completion: bindings persist after the block that
introduced them, a return statement stops the whole program (the trace
emitted so far is the result), and loop counters live in the local
state, reset to zero whenever a loop exits normally and left untouched
when a stop propagates out of its body.

A retry loop executes its body at least once and at most K times,
exiting as soon as the condition holds afterwards. A foreach loop runs
zero iterations on an empty list.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from . import dsl
from .hidden import HiddenEvalError, eval_hidden
from .jsonvals import ABSENT, JsonValue, canonical_eq, canonical_dumps
from .traces import (
    PerIteration,
    Scalar,
    Trace,
    TraceSet,
    TraceValuation,
    extract_inputs,
)

CONT = "cont"
STOP = "stop"


class EvalError(Exception):
    pass


class ReplayMismatch(EvalError):
    pass


@dataclass
class LocalState:
    bindings: Dict[str, JsonValue] = field(default_factory=dict)
    loop_counters: Dict[str, int] = field(default_factory=dict)


class GlobalOracle:
    """Cursor over one recorded trace. A visible call succeeds only if
    it matches the next record's api and request exactly; the recorded
    response is returned."""

    def __init__(self, trace: Trace):
        self.trace = trace
        self.cursor = 0

    def call(self, api: str, request: dict) -> JsonValue:
        if self.cursor >= len(self.trace):
            raise ReplayMismatch(
                f"call {api} after all {len(self.trace)} recorded events were consumed"
            )
        rec = self.trace[self.cursor]
        if rec.api != api:
            raise ReplayMismatch(
                f"event {self.cursor + 1}: called {api}, recorded {rec.api}"
            )
        if not canonical_eq(rec.request_map(), request):
            raise ReplayMismatch(
                f"event {self.cursor + 1} ({api}): request "
                f"{canonical_dumps(request)} != recorded {canonical_dumps(rec.request_map())}"
            )
        self.cursor += 1
        return rec.response

    def done(self) -> bool:
        return self.cursor == len(self.trace)


@dataclass
class ExecutionRecorder:
    """Capture of binding and read events during one run."""

    bind_events: List[Tuple[str, JsonValue, bool]] = field(default_factory=list)
    read_counts: Counter = field(default_factory=Counter)
    calls: List[Tuple[str, dict, JsonValue]] = field(default_factory=list)
    stopped: bool = False

    def on_bind(self, var: str, value: JsonValue, in_loop: bool):
        self.bind_events.append((var, value, in_loop))

    def on_read(self, var: str):
        self.read_counts[var] += 1

    def on_call(self, api: str, request: dict, response: JsonValue):
        self.calls.append((api, request, response))


VisibleHandler = Callable[[str, dict], JsonValue]


def execute(
    program: dsl.Program,
    inputs: Dict[str, JsonValue],
    visible: VisibleHandler,
    retry_bound: int,
    recorder: Optional[ExecutionRecorder] = None,
) -> LocalState:
    """Run a closed program with the given parameter values, routing
    visible calls through the handler. Returns the final local state;
    recorder.stopped tells whether a return truncated the run."""
    if not program.is_closed():
        raise EvalError(f"program has unsolved holes: {list(program.holes)}")
    if set(inputs) != set(program.params):
        raise EvalError(
            f"inputs {sorted(inputs)} do not match parameters {list(program.params)}"
        )
    if retry_bound < 1:
        raise EvalError("retry bound must be at least 1")

    hidden = program.hidden_map()
    state = LocalState(bindings=dict(inputs))
    loop_depth = 0

    def read(var: str) -> JsonValue:
        if var not in state.bindings:
            raise EvalError(f"read of unbound variable {var}")
        if recorder:
            recorder.on_read(var)
        return state.bindings[var]

    def bind(var: str, value: JsonValue):
        state.bindings[var] = value
        if recorder:
            recorder.on_bind(var, value, loop_depth > 0)

    def ev_expr(e) -> JsonValue:
        if isinstance(e, dsl.Const):
            return e.value
        if isinstance(e, dsl.VarRef):
            return read(e.name)
        if isinstance(e, dsl.Ternary):
            return ev_expr(e.then_expr) if ev_pred(e.pred) else ev_expr(e.else_expr)
        if isinstance(e, dsl.HiddenCall):
            body = hidden.get(e.fn_name)
            if body is None:
                raise EvalError(f"hidden function {e.fn_name} has no definition")
            args = [read(a) for a in e.args]
            try:
                return eval_hidden(body, args)
            except HiddenEvalError as exc:
                raise EvalError(str(exc)) from exc
        raise EvalError(f"not an expression: {e!r}")

    def ev_pred(p) -> bool:
        if isinstance(p, dsl.PTrue):
            return True
        if isinstance(p, dsl.PFalse):
            return False
        if isinstance(p, dsl.PAnd):
            return ev_pred(p.left) and ev_pred(p.right)
        if isinstance(p, dsl.POr):
            return ev_pred(p.left) or ev_pred(p.right)
        if isinstance(p, dsl.PNot):
            return not ev_pred(p.inner)
        if isinstance(p, dsl.ValueCheck):
            return canonical_eq(read(p.var), p.const)
        if isinstance(p, dsl.Compare):
            lv, rv = read(p.left), read(p.right)
            ok = lambda v: isinstance(v, (int, float)) and not isinstance(v, bool)
            if not (ok(lv) and ok(rv)):
                raise EvalError(f"comparison {p.op} needs numeric operands")
            return {">=": lv >= rv, ">": lv > rv, "<=": lv <= rv, "<": lv < rv}[p.op]
        raise EvalError(f"not a predicate: {p!r}")

    def exec_instr(ins) -> str:
        nonlocal loop_depth
        if isinstance(ins, dsl.LetVisible):
            request = {name: ev_expr(arg) for name, arg in ins.args}
            response = visible(ins.api, request)
            if recorder:
                recorder.on_call(ins.api, request, response)
            bind(ins.var, response)
            return CONT
        if isinstance(ins, dsl.LetHidden):
            body = hidden.get(ins.fn)
            if body is None:
                raise EvalError(f"hidden function {ins.fn} has no definition")
            args = [read(a) for a in ins.args]
            try:
                bind(ins.var, eval_hidden(body, args))
            except HiddenEvalError as exc:
                raise EvalError(str(exc)) from exc
            return CONT
        if isinstance(ins, dsl.Ite):
            branch = ins.then if ev_pred(ins.pred) else ins.els
            return exec_seq(branch)
        if isinstance(ins, dsl.RetryUntil):
            count = state.loop_counters.get(ins.loop_id, 0)
            loop_depth += 1
            try:
                while True:
                    status = exec_seq(ins.body)
                    if status is STOP:
                        return STOP
                    count += 1
                    state.loop_counters[ins.loop_id] = count
                    if ev_pred(ins.pred) or count >= retry_bound:
                        state.loop_counters[ins.loop_id] = 0
                        return CONT
            finally:
                loop_depth -= 1
        if isinstance(ins, dsl.Foreach):
            items = ev_expr(ins.source)
            if not isinstance(items, list):
                raise EvalError(
                    f"foreach source must be a list, got {type(items).__name__}"
                )
            count = state.loop_counters.get(ins.loop_id, 0)
            loop_depth += 1
            try:
                for item in items:
                    bind(ins.var, item)
                    count += 1
                    state.loop_counters[ins.loop_id] = count
                    status = exec_seq(ins.body)
                    if status is STOP:
                        return STOP
                state.loop_counters[ins.loop_id] = 0
                return CONT
            finally:
                loop_depth -= 1
        if isinstance(ins, dsl.Return):
            return STOP
        raise EvalError(f"not an instruction: {ins!r}")

    def exec_seq(seq) -> str:
        for ins in seq:
            if exec_instr(ins) is STOP:
                return STOP
        return CONT

    status = exec_seq(program.body)
    if recorder:
        recorder.stopped = status is STOP
    return state


def default_retry_bound(ts: TraceSet) -> int:
    return max(len(t) for t in ts.traces) + 1


def replay_check(
    program: dsl.Program,
    inputs: Dict[str, JsonValue],
    trace: Trace,
    retry_bound: int,
    recorder: Optional[ExecutionRecorder] = None,
) -> Tuple[bool, str]:
    """Does running the program with these inputs emit exactly this
    trace? All recorded events must be consumed."""
    oracle = GlobalOracle(trace)
    try:
        execute(program, inputs, oracle.call, retry_bound, recorder)
    except EvalError as exc:
        return False, str(exc)
    if not oracle.done():
        return False, (
            f"run ended after {oracle.cursor} of {len(trace)} recorded events"
        )
    return True, ""


def psi_failures(
    program: dsl.Program,
    sigma: TraceValuation,
    ts: TraceSet,
    retry_bound: int,
) -> List[Tuple[int, str]]:
    """Traces the program fails to reproduce, with reasons."""
    inputs = extract_inputs(sigma, ts.indices())
    failures = []
    for i in ts.indices():
        per_trace = {p: inputs[p][i] for p in sigma.params}
        ok, reason = replay_check(program, per_trace, ts.trace(i), retry_bound)
        if not ok:
            failures.append((i, reason))
    return failures


def check_psi(
    program: dsl.Program,
    sigma: TraceValuation,
    ts: TraceSet,
    retry_bound: int,
) -> bool:
    return not psi_failures(program, sigma, ts, retry_bound)


def _loop_bound_vars(seq) -> set:
    """Variables whose binder sits inside some loop body, plus foreach
    loop variables."""
    out = set()

    def walk(seq, in_loop):
        for ins in seq:
            if isinstance(ins, (dsl.LetVisible, dsl.LetHidden)):
                if in_loop:
                    out.add(ins.var)
            elif isinstance(ins, dsl.Ite):
                walk(ins.then, in_loop)
                walk(ins.els, in_loop)
            elif isinstance(ins, dsl.RetryUntil):
                walk(ins.body, True)
            elif isinstance(ins, dsl.Foreach):
                out.add(ins.var)
                walk(ins.body, True)

    walk(seq, False)
    return out


def valuation_from_execution(
    program: dsl.Program,
    ts: TraceSet,
    inputs: Dict[str, Dict[int, JsonValue]],
    retry_bound: int,
) -> TraceValuation:
    """Rebuild the full valuation by replaying every trace: scalar cells
    for straight-line binders, per-iteration cells for loop binders,
    absent where a trace's control path never bound the variable."""
    loop_vars = _loop_bound_vars(program.body)
    all_vars = dsl.seq_binders(program.body)
    entries: Dict[Tuple[str, int], object] = {}
    for i in ts.indices():
        per_trace = {p: inputs[p][i] for p in program.params}
        rec = ExecutionRecorder()
        ok, reason = replay_check(program, per_trace, ts.trace(i), retry_bound, rec)
        if not ok:
            raise EvalError(f"trace {i}: replay failed: {reason}")
        for p in program.params:
            entries[(p, i)] = Scalar(per_trace[p])
        bound: Dict[str, List[JsonValue]] = {}
        for var, value, _ in rec.bind_events:
            bound.setdefault(var, []).append(value)
        for var in all_vars:
            values = bound.get(var, [])
            if var in loop_vars:
                entries[(var, i)] = PerIteration(tuple(values))
            elif values:
                entries[(var, i)] = Scalar(values[-1])
            else:
                entries[(var, i)] = Scalar(ABSENT)
    return TraceValuation(params=tuple(program.params), entries=entries)
