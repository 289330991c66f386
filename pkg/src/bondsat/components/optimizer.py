"""The circuit optimizer: load, saturate, bond, extract and verify.

``CircuitOptimizer`` is the reusable core; ``run`` drives it from a
``PipelineConfig`` and writes every artifact next to the output prefix.
"""

import json
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction

from bondsat.bond import BondRecord
from bondsat.circuit import Circuit, OpStats, stats
from bondsat.config import PipelineConfig
from bondsat.dot import emit_dot
from bondsat.egraph import EGraph, lower_circuit
from bondsat.equivalence import EquivalenceReport, check_equivalence, exhaustive_allowed
from bondsat.extract import CostModel, circuit_cost, extract_circuit, load_cost_model
from bondsat.netlist import parse_circuit, serialize_circuit
from bondsat.rules import Rewrite, default_rules, parse_rules, split_stages
from bondsat.saturation import Limits, SaturationReport, run_staged_pipeline

logger = logging.getLogger(__name__)


def _number(value) -> int | str:
    value = Fraction(value)
    return value.numerator if value.denominator == 1 else str(value)


@dataclass
class OptimizationResult:
    source: Circuit
    optimized: Circuit
    egraph: EGraph
    saturation: SaturationReport
    records: list[BondRecord]
    cost_before: Fraction
    cost_after: Fraction
    pre_egraph_dot: str = ""
    equivalence: EquivalenceReport | None = None
    stats_before: OpStats = field(init=False)
    stats_after: OpStats = field(init=False)

    def __post_init__(self):
        self.stats_before = stats(self.source)
        self.stats_after = stats(self.optimized)

    def to_dict(self) -> dict:
        data = {
            "stats": {
                "before": self.stats_before.to_dict(),
                "after": self.stats_after.to_dict(),
            },
            "cost": {
                "before": _number(self.cost_before),
                "after": _number(self.cost_after),
            },
            "saturation": self.saturation.to_dict(),
            "bonds": [record.summary() for record in self.records],
        }
        if self.equivalence is not None:
            data["equivalence"] = {
                "equal": self.equivalence.equal,
                "mode": self.equivalence.mode,
                "vectors": self.equivalence.vectors,
            }
        return data


class CircuitOptimizer:
    """Extracts shared ALUs from concurrent computations of a circuit."""

    def __init__(
        self,
        rules: list[Rewrite] | None = None,
        cost_model: CostModel | None = None,
        limits: Limits = Limits(),
    ):
        self.rules = default_rules() if rules is None else rules
        self.cost_model = cost_model or CostModel()
        self.limits = limits

    def forward(self, circuit: Circuit) -> OptimizationResult:
        """Optimizes ``circuit``; the result is not yet verified.

        Args:
            circuit: The source circuit.

        Returns:
            The optimized circuit together with the e-graph and run reports.
        """
        g = EGraph()
        roots = lower_circuit(g, circuit)
        g.rebuild()
        pre_dot = emit_dot(g, "pre")
        generic, bonding, unification = split_stages(self.rules)
        report, records = run_staged_pipeline(
            g, generic, bonding, unification, self.limits
        )
        optimized = extract_circuit(
            g, roots, self.cost_model, records, inputs=circuit.inputs
        )
        return OptimizationResult(
            source=circuit,
            optimized=optimized,
            egraph=g,
            saturation=report,
            records=records,
            cost_before=circuit_cost(circuit, self.cost_model),
            cost_after=circuit_cost(optimized, self.cost_model),
            pre_egraph_dot=pre_dot,
        )


def run(config: PipelineConfig) -> int:
    """Runs one optimization and writes its artifacts.

    Returns:
        0 when the optimized circuit is verified equivalent, 2 otherwise.
    """
    started = time.monotonic()
    source = parse_circuit(config.input_path.read_text(encoding="utf-8"))
    rules = (
        parse_rules(config.rules_path.read_text(encoding="utf-8"))
        if config.rules_path
        else None
    )
    costs = load_cost_model(config.costs_path) if config.costs_path else None
    result = CircuitOptimizer(rules, costs, config.limits).forward(source)

    mode = config.check_mode(exhaustive_allowed(source))
    result.equivalence = check_equivalence(source, result.optimized, mode)

    config.artifact(".opt.circuit").write_text(
        serialize_circuit(result.optimized), encoding="utf-8"
    )
    config.artifact(".equiv.txt").write_text(
        result.equivalence.render(), encoding="utf-8"
    )
    if "stats" in config.emit:
        config.artifact(".stats.json").write_text(
            json.dumps(result.to_dict(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
    if "dot-egraph" in config.emit:
        config.artifact(".pre.egraph.dot").write_text(
            result.pre_egraph_dot, encoding="utf-8"
        )
        config.artifact(".post.egraph.dot").write_text(
            emit_dot(result.egraph, "post"), encoding="utf-8"
        )
    if "dot-circuit" in config.emit:
        config.artifact(".pre.circuit.dot").write_text(
            emit_dot(source, "pre"), encoding="utf-8"
        )
        config.artifact(".post.circuit.dot").write_text(
            emit_dot(result.optimized, "post"), encoding="utf-8"
        )
    elapsed = (time.monotonic() - started) * 1000
    logger.info("optimized %s in %.1f ms", config.input_path, elapsed)
    return 0 if result.equivalence.equal else 2
