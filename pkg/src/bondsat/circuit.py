"""Combinational circuit IR.

A circuit is an acyclic list of named nodes over unsigned bit-vectors of width
1..64. Besides ordinary operations it has two node kinds produced by ALU
extraction: a ``Shared`` node holds a single operation over advice leaves, and
a ``UseSite`` invokes it with each advice leaf bound to an operand (call
semantics).
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import cached_property

import networkx as nx

from .errors import (
    CircuitError,
    ConstantOverflowError,
    CycleError,
    InputError,
    UnboundAdvice,
    UndefinedNameError,
    WidthError,
)

MAX_WIDTH = 64

BINARY_OPS = ("add", "sub", "mul", "and", "or", "xor")
UNARY_OPS = ("zext", "trunc")
LEAF_OPS = ("input", "const", "advice")

# Closed operator alphabet shared with the e-graph: symbol -> arity.
OP_ARITY: dict[str, int] = {
    **{op: 2 for op in BINARY_OPS},
    **{op: 1 for op in UNARY_OPS},
    **{op: 0 for op in LEAF_OPS},
}


def mask(width: int) -> int:
    return (1 << width) - 1


def check_width(width: int) -> None:
    if not isinstance(width, int) or not 1 <= width <= MAX_WIDTH:
        raise WidthError(f"width must be in 1..{MAX_WIDTH}, got {width!r}")


def apply_op(op: str, width: int, args: list[int]) -> int:
    """Evaluates one operator at ``width`` with wrap-around semantics."""
    match op:
        case "add":
            return (args[0] + args[1]) & mask(width)
        case "sub":
            return (args[0] - args[1]) & mask(width)
        case "mul":
            return (args[0] * args[1]) & mask(width)
        case "and":
            return args[0] & args[1]
        case "or":
            return args[0] | args[1]
        case "xor":
            return args[0] ^ args[1]
        case "zext":
            return args[0]
        case "trunc":
            return args[0] & mask(width)
    raise CircuitError(f"unknown operator {op!r}")


def operand_width_ok(op: str, width: int, operand_width: int) -> bool:
    if op in BINARY_OPS:
        return operand_width == width
    if op == "zext":
        return operand_width <= width
    if op == "trunc":
        return operand_width >= width
    return False


# --- nodes ---


@dataclass(frozen=True)
class Input:
    name: str
    width: int

    @property
    def refs(self) -> tuple[str, ...]:
        return ()


@dataclass(frozen=True)
class Const:
    name: str
    width: int
    value: int

    @property
    def refs(self) -> tuple[str, ...]:
        return ()


@dataclass(frozen=True)
class Advice:
    """A free advice input; only meaningful inside a Shared body."""

    name: str
    width: int
    label: str

    @property
    def refs(self) -> tuple[str, ...]:
        return ()


@dataclass(frozen=True)
class Op:
    name: str
    width: int
    op: str
    operands: tuple[str, ...]

    @property
    def refs(self) -> tuple[str, ...]:
        return self.operands


@dataclass(frozen=True)
class Shared:
    """A shared unit: one operation whose operands are advice leaves."""

    name: str
    width: int
    op: str
    advice: tuple[tuple[str, int], ...]

    @property
    def refs(self) -> tuple[str, ...]:
        return ()


@dataclass(frozen=True)
class UseSite:
    name: str
    width: int
    shared: str
    bindings: tuple[tuple[str, str], ...]

    @property
    def refs(self) -> tuple[str, ...]:
        return (self.shared, *(ref for _, ref in self.bindings))


CircuitNode = Input | Const | Advice | Op | Shared | UseSite


@dataclass(frozen=True)
class Circuit:
    """A validated circuit; nodes are in topological order."""

    nodes: tuple[CircuitNode, ...]
    outputs: tuple[tuple[str, str], ...]

    def __post_init__(self):
        _validate(self)

    @classmethod
    def build(
        cls, nodes: list[CircuitNode], outputs: list[tuple[str, str]]
    ) -> Circuit:
        """Builds a circuit from nodes in any order, sorting them topologically.

        Definition order breaks ties, so already-ordered input is kept as is.
        """
        index = {}
        for position, node in enumerate(nodes):
            if node.name in index:
                raise CircuitError(f"duplicate node name {node.name!r}")
            index[node.name] = position
        graph = nx.DiGraph()
        graph.add_nodes_from(index)
        for node in nodes:
            for ref in node.refs:
                if ref not in index:
                    raise UndefinedNameError(
                        f"node {node.name!r} references undefined {ref!r}"
                    )
                graph.add_edge(ref, node.name)
        try:
            order = list(nx.lexicographical_topological_sort(graph, key=index.get))
        except nx.NetworkXUnfeasible as exc:
            cycle = nx.find_cycle(graph)
            names = " -> ".join(u for u, _ in cycle)
            raise CycleError(f"circuit contains a cycle: {names}") from exc
        return cls(tuple(nodes[index[name]] for name in order), tuple(outputs))

    @cached_property
    def by_name(self) -> dict[str, CircuitNode]:
        return {node.name: node for node in self.nodes}

    @property
    def inputs(self) -> tuple[Input, ...]:
        return tuple(node for node in self.nodes if isinstance(node, Input))

    @property
    def output_map(self) -> dict[str, str]:
        return dict(self.outputs)

    def node(self, name: str) -> CircuitNode:
        try:
            return self.by_name[name]
        except KeyError:
            raise UndefinedNameError(f"no node named {name!r}") from None

    def output_width(self, output: str) -> int:
        return self.node(self.output_map[output]).width

    def graph(self) -> nx.DiGraph:
        """Data-flow graph with an edge from every operand to its consumer."""
        graph = nx.DiGraph()
        for node in self.nodes:
            graph.add_node(node.name, node=node)
            graph.add_edges_from((ref, node.name) for ref in node.refs)
        return graph

    def pruned(self) -> Circuit:
        """Drops nodes no output depends on; inputs are always kept."""
        live = set()
        stack = [ref for _, ref in self.outputs]
        while stack:
            name = stack.pop()
            if name not in live:
                live.add(name)
                stack.extend(self.by_name[name].refs)
        kept = tuple(
            node
            for node in self.nodes
            if node.name in live or isinstance(node, Input)
        )
        return Circuit(kept, self.outputs)


def _validate(circuit: Circuit) -> None:
    seen: dict[str, CircuitNode] = {}

    def operand(owner: str, ref: str) -> CircuitNode:
        if ref not in seen:
            raise UndefinedNameError(
                f"node {owner!r} references {ref!r} before its definition"
            )
        target = seen[ref]
        if isinstance(target, Shared):
            raise CircuitError(f"node {owner!r} uses shared unit {ref!r} as a value")
        return target

    for node in circuit.nodes:
        if node.name in seen:
            raise CircuitError(f"duplicate node name {node.name!r}")
        check_width(node.width)
        match node:
            case Const(value=value):
                if not 0 <= value <= mask(node.width):
                    raise ConstantOverflowError(
                        f"constant {value} does not fit in {node.width} bits"
                    )
            case Op(op=op, operands=operands):
                if op not in BINARY_OPS + UNARY_OPS:
                    raise CircuitError(f"unknown operator {op!r} in {node.name!r}")
                if len(operands) != OP_ARITY[op]:
                    raise CircuitError(
                        f"{op} expects {OP_ARITY[op]} operands in {node.name!r}"
                    )
                for ref in operands:
                    width = operand(node.name, ref).width
                    if not operand_width_ok(op, node.width, width):
                        raise WidthError(
                            f"{op}:{node.width} in {node.name!r} cannot take "
                            f"{ref!r} of width {width}"
                        )
            case Shared(op=op, advice=advice):
                if op not in BINARY_OPS + UNARY_OPS or len(advice) != OP_ARITY[op]:
                    raise CircuitError(f"shared unit {node.name!r} is malformed")
                if len({label for label, _ in advice}) != len(advice):
                    raise CircuitError(f"shared unit {node.name!r} repeats advice")
                for _, width in advice:
                    check_width(width)
                    if not operand_width_ok(op, node.width, width):
                        raise WidthError(f"advice width {width} in {node.name!r}")
            case UseSite(shared=shared_name, bindings=bindings):
                shared = seen.get(shared_name)
                if not isinstance(shared, Shared):
                    raise UndefinedNameError(
                        f"use site {node.name!r} names unknown unit {shared_name!r}"
                    )
                if node.width != shared.width:
                    raise WidthError(f"use site {node.name!r} width differs from unit")
                bound = dict(bindings)
                if len(bound) != len(bindings) or set(bound) != {
                    label for label, _ in shared.advice
                }:
                    raise CircuitError(
                        f"use site {node.name!r} must bind each advice of "
                        f"{shared_name!r} exactly once"
                    )
                for label, width in shared.advice:
                    ref = bound[label]
                    if operand(node.name, ref).width != width:
                        raise WidthError(
                            f"use site {node.name!r} binds {label} to {ref!r} "
                            f"of the wrong width"
                        )
        seen[node.name] = node

    names = set()
    for out, ref in circuit.outputs:
        if out in names:
            raise CircuitError(f"duplicate output {out!r}")
        names.add(out)
        operand(f"output {out}", ref)


# --- evaluation ---


def evaluate(circuit: Circuit, inputs: Mapping[str, int]) -> dict[str, int]:
    """Evaluates every node and returns the output values by output name."""
    values: dict[str, int] = {}
    for node in circuit.nodes:
        match node:
            case Input(name=name, width=width):
                if name not in inputs:
                    raise InputError(f"missing value for input {name!r}")
                value = inputs[name]
                if not 0 <= value <= mask(width):
                    raise InputError(f"value {value} for {name!r} exceeds {width} bits")
                values[name] = value
            case Const(value=value):
                values[node.name] = value
            case Advice(label=label):
                raise UnboundAdvice(f"advice {label!r} is not bound by a use site")
            case Op(op=op, operands=operands):
                values[node.name] = apply_op(
                    op, node.width, [values[ref] for ref in operands]
                )
            case Shared():
                continue
            case UseSite(shared=shared_name, bindings=bindings):
                shared = circuit.by_name[shared_name]
                bound = dict(bindings)
                args = [values[bound[label]] for label, _ in shared.advice]
                values[node.name] = apply_op(shared.op, shared.width, args)
    return {out: values[ref] for out, ref in circuit.outputs}


# --- statistics ---


@dataclass(frozen=True)
class OpStats:
    """Node counts keyed ``"<kind>:<width>"``; shared bodies count as their op."""

    counts: dict[str, int] = field(default_factory=dict)
    shared: int = 0
    use_sites: int = 0
    total: int = 0

    def count(self, symbol: str) -> int:
        """Total count for ``symbol`` across widths, e.g. ``count("mul")``."""
        return sum(n for key, n in self.counts.items() if key.split(":")[0] == symbol)

    def to_dict(self) -> dict:
        return {
            "counts": dict(sorted(self.counts.items())),
            "shared": self.shared,
            "use_sites": self.use_sites,
            "total": self.total,
        }


def stats(circuit: Circuit) -> OpStats:
    counts: Counter[str] = Counter()
    for node in circuit.nodes:
        match node:
            case Input():
                kind = "input"
            case Const():
                kind = "const"
            case Advice():
                kind = "advice"
            case Op(op=op) | Shared(op=op):
                kind = op
            case UseSite():
                kind = "use"
        counts[f"{kind}:{node.width}"] += 1
    return OpStats(
        counts=dict(counts),
        shared=sum(isinstance(n, Shared) for n in circuit.nodes),
        use_sites=sum(isinstance(n, UseSite) for n in circuit.nodes),
        total=len(circuit.nodes),
    )
