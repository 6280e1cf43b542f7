"""Trace-guided script synthesis.

Feed in two or more JSON logs of API calls and responses; get back a
small imperative script that replays every log exactly and generalizes
across them with parameters, conditionals, loops, and synthesized
helper functions over the response payloads.
"""

from .costs import CostWeights, cost_syn, cost_traces, make_cost_fn
from .dsl import Program, equiv_mod_renaming, pretty_print, validate_program
from .evaluator import (
    GlobalOracle,
    check_psi,
    default_retry_bound,
    execute,
    replay_check,
)
from .parser import parse_program
from .pbe import GrammarConfig, IOExample, synthesize
from .search import (
    SearchConfig,
    SearchResult,
    build_initial,
    run_search,
    verify_final,
)
from .traces import TraceSet, TraceValuation, extract_inputs, parse_traces

__all__ = [
    "CostWeights",
    "GlobalOracle",
    "GrammarConfig",
    "IOExample",
    "Program",
    "SearchConfig",
    "SearchResult",
    "TraceSet",
    "TraceValuation",
    "build_initial",
    "check_psi",
    "cost_syn",
    "cost_traces",
    "default_retry_bound",
    "equiv_mod_renaming",
    "execute",
    "extract_inputs",
    "make_cost_fn",
    "parse_program",
    "parse_traces",
    "pretty_print",
    "replay_check",
    "run_search",
    "synthesize",
    "validate_program",
    "verify_final",
]
