"""Simulation-based input/output equivalence checking."""

import itertools
import logging
import random
from dataclasses import dataclass

from .circuit import Circuit, evaluate
from .errors import ExhaustiveTooLarge, SignatureError

logger = logging.getLogger(__name__)

# "0xB0ND" with the N read as 4.
DEFAULT_SEED = 0xB04D


@dataclass(frozen=True)
class Exhaustive:
    max_width: int = 6
    max_vectors: int = 1 << 18

    def describe(self) -> str:
        return "exhaustive"


@dataclass(frozen=True)
class Random:
    samples: int = 1000
    seed: int = DEFAULT_SEED

    def describe(self) -> str:
        return f"random samples={self.samples} seed={self.seed:#x}"


CheckMode = Exhaustive | Random


@dataclass(frozen=True)
class Counterexample:
    inputs: dict[str, int]
    left: dict[str, int]
    right: dict[str, int]


@dataclass(frozen=True)
class EquivalenceReport:
    equal: bool
    mode: str
    vectors: int
    counterexample: Counterexample | None = None

    def render(self) -> str:
        lines = [
            f"verdict: {'EQUIVALENT' if self.equal else 'NOT EQUIVALENT'}",
            f"mode: {self.mode}",
            f"vectors: {self.vectors}",
        ]
        if self.counterexample is not None:
            cex = self.counterexample
            lines.append("counterexample:")
            lines += [f"  input {k} = {v}" for k, v in cex.inputs.items()]
            for name in cex.left:
                lines.append(
                    f"  output {name}: left={cex.left[name]} right={cex.right[name]}"
                )
        return "\n".join(lines) + "\n"


def signature(circuit: Circuit) -> tuple[dict[str, int], dict[str, int]]:
    inputs = {node.name: node.width for node in circuit.inputs}
    outputs = {out: circuit.output_width(out) for out, _ in circuit.outputs}
    return inputs, outputs


def exhaustive_allowed(circuit: Circuit, mode: Exhaustive = Exhaustive()) -> bool:
    widths = [node.width for node in circuit.inputs]
    return all(w <= mode.max_width for w in widths) and (1 << sum(widths)) <= (
        mode.max_vectors
    )


def _vectors(circuit: Circuit, mode: CheckMode):
    inputs = circuit.inputs
    names = [node.name for node in inputs]
    match mode:
        case Exhaustive():
            if not exhaustive_allowed(circuit, mode):
                raise ExhaustiveTooLarge(
                    f"exhaustive check over {sum(n.width for n in inputs)} input "
                    f"bits exceeds the configured bound"
                )
            ranges = [range(1 << node.width) for node in inputs]
            for values in itertools.product(*ranges):
                yield dict(zip(names, values))
        case Random(samples=samples, seed=seed):
            rng = random.Random(seed)
            for _ in range(samples):
                yield {node.name: rng.getrandbits(node.width) for node in inputs}


def check_equivalence(
    left: Circuit, right: Circuit, mode: CheckMode = Exhaustive()
) -> EquivalenceReport:
    """Simulates both circuits on the same vectors; stops at the first mismatch."""
    if signature(left) != signature(right):
        raise SignatureError(
            f"signatures differ: {signature(left)} vs {signature(right)}"
        )
    count = 0
    for vector in _vectors(left, mode):
        count += 1
        a, b = evaluate(left, vector), evaluate(right, vector)
        if a != b:
            logger.warning("counterexample after %d vectors: %s", count, vector)
            return EquivalenceReport(
                False, mode.describe(), count, Counterexample(vector, a, b)
            )
    logger.info("equivalent over %d vectors (%s)", count, mode.describe())
    return EquivalenceReport(True, mode.describe(), count)
