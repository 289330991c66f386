import random
from pathlib import Path

import pytest

from bondsat.circuit import Circuit, Const, Input, Op
from bondsat.netlist import parse_circuit

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def load_circuit():
    """Parses a netlist from tests/fixtures by file stem."""

    def load(stem: str) -> Circuit:
        return parse_circuit((FIXTURES / f"{stem}.circuit").read_text(encoding="utf-8"))

    return load


def random_circuit(rng: random.Random, width: int = 4, max_ops: int = 12) -> Circuit:
    """A random acyclic circuit over 2-3 inputs with at most ``max_ops`` ops."""
    nodes = [Input(f"x{i}", width) for i in range(rng.randint(2, 3))]
    values = [node.name for node in nodes]
    for i in range(rng.randint(2, max_ops)):
        if rng.random() < 0.15:
            nodes.append(Const(f"k{i}", width, rng.randrange(1 << width)))
            values.append(nodes[-1].name)
            continue
        op = rng.choice(("add", "mul", "sub", "and", "xor", "or"))
        operands = (rng.choice(values), rng.choice(values))
        nodes.append(Op(f"v{i}", width, op, operands))
        values.append(nodes[-1].name)
    outputs = [("o0", values[-1])]
    if len(values) > 4 and rng.random() < 0.5:
        outputs.append(("o1", values[-2]))
    return Circuit.build(nodes, outputs)
