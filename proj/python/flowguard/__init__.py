"""Data-flow firewall for smart-home automation.

Thin layer over the C++ core. Policies, rules and registries are passed as
text in their file formats; see docs/formats.md.
"""

import json

from ._flowguard import (
    DuplicateId,
    Engine,
    Error,
    InvalidPolicy,
    KindMismatch,
    ParseError,
    Registry,
    TypeMismatch,
    UnknownSource,
    Unsupported,
    check_conflicts as _check_conflicts,
    compile_rules,
    generate_trace,
    normalize_policies,
    run_experiment as _run_experiment,
    validate_policies,
)

__all__ = [
    "DuplicateId",
    "Engine",
    "Error",
    "InvalidPolicy",
    "KindMismatch",
    "ParseError",
    "Registry",
    "TypeMismatch",
    "UnknownSource",
    "Unsupported",
    "check_conflicts",
    "compile_rules",
    "generate_trace",
    "normalize_policies",
    "run_experiment",
    "validate_policies",
]


def check_conflicts(registry, user_policies, automation_policies):
    """List of conflict records, one per (user policy, automation policy)."""
    return json.loads(_check_conflicts(registry, user_policies, automation_policies))


def run_experiment(registry, rules, trace, user_policies="", pass_through=False,
                   diff_keep_delay_ms=100):
    """Metrics of a side-by-side replay as a dict."""
    return json.loads(_run_experiment(registry, rules, trace, user_policies, pass_through,
                                      diff_keep_delay_ms))
