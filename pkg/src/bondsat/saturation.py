"""Staged equality saturation.

Generic rules run to a fixpoint or a limit first. Bonding rules then run
exactly once, and unification rules last; no generic rule runs after bonding,
so a b-node is never bonded again.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum

from .bond import (
    AncestryConstraint,
    BondRecord,
    bond,
    select_bond_set,
    unify_with_template,
)
from .egraph import EGraph
from .errors import ConfigError, StageError
from .rules import Bonding, Generic, Rewrite, Unification, apply_rewrite, ematch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Limits:
    iters: int = 30
    nodes: int = 10000
    millis: int = 5000

    def __post_init__(self):
        for name in ("iters", "nodes", "millis"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ConfigError(
                    f"limit {name} must be a positive integer, got {value!r}"
                )


class StopReason(str, Enum):
    SATURATED = "saturated"
    ITER_LIMIT = "iter_limit"
    NODE_LIMIT = "node_limit"
    TIME_LIMIT = "time_limit"


@dataclass
class SaturationReport:
    iterations: int = 0
    merges_per_iteration: list[int] = field(default_factory=list)
    stop_reason: StopReason = StopReason.SATURATED
    class_count: int = 0
    node_count: int = 0

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "merges_per_iteration": list(self.merges_per_iteration),
            "stop_reason": self.stop_reason.value,
            "class_count": self.class_count,
            "node_count": self.node_count,
        }


def _require(rules: list[Rewrite], stage: type, label: str) -> None:
    for rule in rules:
        if not isinstance(rule.stage, stage):
            raise StageError(f"rule {rule.name!r} is not a {label} rule")


def saturate(
    g: EGraph, rules: list[Rewrite], limits: Limits = Limits()
) -> SaturationReport:
    """Applies generic rules round-robin until fixpoint or a limit is hit.

    Every iteration collects the matches of all rules on the frozen graph
    before applying any of them.
    """
    _require(rules, Generic, "generic")
    report = SaturationReport()
    start = time.monotonic()
    while True:
        if report.iterations >= limits.iters:
            report.stop_reason = StopReason.ITER_LIMIT
            break
        if (time.monotonic() - start) * 1000 >= limits.millis:
            report.stop_reason = StopReason.TIME_LIMIT
            break
        nodes_before = g.node_count
        batches = [(rule, ematch(g, rule.lhs)) for rule in rules]
        merges = 0
        over = False
        for rule, matches in batches:
            merges += apply_rewrite(g, rule, matches)
            if g.node_count > limits.nodes:
                over = True
                break
        report.iterations += 1
        report.merges_per_iteration.append(merges)
        logger.debug(
            "iteration %d: %d merges, %d classes, %d nodes",
            report.iterations,
            merges,
            g.class_count,
            g.node_count,
        )
        if over:
            report.stop_reason = StopReason.NODE_LIMIT
            break
        if merges == 0 and g.node_count == nodes_before:
            report.stop_reason = StopReason.SATURATED
            break
    report.class_count = g.class_count
    report.node_count = g.node_count
    logger.info(
        "saturation stopped after %d iterations: %s (%.1f ms)",
        report.iterations,
        report.stop_reason.value,
        (time.monotonic() - start) * 1000,
    )
    return report


def run_staged_pipeline(
    g: EGraph,
    generic: list[Rewrite],
    bonding: list[Rewrite],
    unification: list[Rewrite],
    limits: Limits = Limits(),
) -> tuple[SaturationReport, list[BondRecord]]:
    """Saturates, bonds each group at most once, then unifies with templates."""
    _require(bonding, Bonding, "bonding")
    _require(unification, Unification, "unification")
    report = saturate(g, generic, limits)

    records: list[BondRecord] = []
    named: dict[str, BondRecord] = {}
    bonded: set[tuple[str, int]] = set()
    blocked: set[int] = set()
    for rule in bonding:
        key = rule.stage.groupkey
        if key in bonded:
            continue
        candidates = select_bond_set(g, key, AncestryConstraint(frozenset(blocked)))
        if not candidates:
            logger.info("no bondable %s:%d group", *key)
            continue
        record = bond(g, candidates)
        bonded.add(key)
        records.append(record)
        named[rule.stage.bond_name] = record
        blocked.update(record.bnode.children)

    for rule in unification:
        record = named.get(rule.stage.bond_name)
        if record is None:
            logger.info("nothing bonded as %s", rule.stage.bond_name)
            continue
        unify_with_template(g, record, rule.stage.template)
    g.rebuild()
    return report, records
