"""Graphviz DOT rendering of e-graphs and circuits.

E-classes are drawn as clusters, b-nodes as small filled black circles and
advice leaves as diamonds. Output is deterministic for a given input.
"""

from .circuit import Advice, Circuit, Const, Input, Op, Shared, UseSite
from .egraph import EGraph, ENode
from .errors import DotStageError

STAGES = ("pre", "post")

BNODE_STYLE = 'shape=circle, style=filled, fillcolor=black, label="", width=0.2'


def _quote(text: str) -> str:
    return '"' + str(text).replace("\\", "\\\\").replace('"', '\\"') + '"'


def egraph_to_dot(g: EGraph, title: str = "egraph") -> str:
    """Renders every public class as a dashed cluster of its e-nodes.

    B-nodes are drawn as filled dots and advice leaves as diamonds. Edges
    point from an e-node to the cluster of each child class.

    Args:
        g: graph to render; classes appear in id order.
        title: name of the emitted digraph.

    Returns:
        Graphviz source ending in a newline.
    """
    lines = [
        f"digraph {_quote(title)} {{",
        "  compound=true;",
        "  rankdir=BT;",
        '  node [fontname="Helvetica", fontsize=10];',
    ]
    anchor: dict[int, str] = {}
    edges: list[tuple[str, int]] = []
    for cid in g.class_ids():
        lines.append(f"  subgraph cluster_{cid} {{")
        lines.append(f'    label="c{cid}"; style=dashed; color=gray;')
        for k, node in enumerate(g.enodes_of(cid)):
            ident = f"n{cid}_{k}"
            anchor.setdefault(cid, ident)
            if not isinstance(node, ENode):
                attrs = BNODE_STYLE
            elif node.op == "advice":
                attrs = f"shape=diamond, label={_quote(node)}"
            else:
                attrs = f"shape=box, label={_quote(node)}"
            lines.append(f"    {ident} [{attrs}];")
            for child in node.children:
                edges.append((ident, g.find(child)))
        lines.append("  }")
    for ident, child in edges:
        lines.append(f"  {ident} -> {anchor[child]} [lhead=cluster_{child}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def circuit_to_dot(circuit: Circuit, title: str = "circuit") -> str:
    """Renders a circuit with one vertex per node and one per output.

    Shared units are bold 3-D boxes; each use site gets a dashed edge from
    its unit and one labelled edge per bound operand.

    Args:
        circuit: circuit to render, in topological order.
        title: name of the emitted digraph.

    Returns:
        Graphviz source ending in a newline.
    """
    lines = [
        f"digraph {_quote(title)} {{",
        "  rankdir=BT;",
        '  node [fontname="Helvetica", fontsize=10];',
    ]
    for node in circuit.nodes:
        ident = _quote(node.name)
        match node:
            case Input(name=name, width=width):
                attrs = f"shape=invhouse, label={_quote(f'{name}:{width}')}"
            case Const(width=width, value=value):
                attrs = f"shape=plaintext, label={_quote(f'{value}:{width}')}"
            case Advice(label=label, width=width):
                attrs = f"shape=diamond, label={_quote(f'{label}:{width}')}"
            case Op(op=op, width=width):
                attrs = f"shape=box, label={_quote(f'{op}:{width}')}"
            case Shared(op=op, width=width, advice=advice):
                leaves = " ".join(label for label, _ in advice)
                attrs = (
                    f"shape=box3d, style=bold, label={_quote(f'{op}:{width} {leaves}')}"
                )
            case UseSite(shared=shared):
                attrs = f"shape=ellipse, label={_quote(f'use {shared}')}"
        lines.append(f"  {ident} [{attrs}];")
    for node in circuit.nodes:
        match node:
            case Op(operands=operands):
                for ref in operands:
                    lines.append(f"  {_quote(ref)} -> {_quote(node.name)};")
            case UseSite(shared=shared, bindings=bindings):
                lines.append(
                    f"  {_quote(shared)} -> {_quote(node.name)} [style=dashed];"
                )
                for label, ref in bindings:
                    edge = f"{_quote(ref)} -> {_quote(node.name)}"
                    lines.append(f"  {edge} [label={_quote(label)}];")
    for out, ref in circuit.outputs:
        ident = _quote(f"out:{out}")
        lines.append(f"  {ident} [shape=house, label={_quote(out)}];")
        lines.append(f"  {_quote(ref)} -> {ident};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def emit_dot(target: EGraph | Circuit, stage: str) -> str:
    """Renders ``target`` for the ``pre`` or ``post`` optimization stage."""
    if stage not in STAGES:
        raise DotStageError(f"unknown stage {stage!r}, expected one of {STAGES}")
    if isinstance(target, EGraph):
        return egraph_to_dot(target, f"egraph_{stage}")
    return circuit_to_dot(target, f"circuit_{stage}")
