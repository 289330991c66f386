"""Netlist text format.

    (circuit (input NAME :W)*
             (let NAME EXPR)*
             (shared NAME (OP:W (advice NAME :W)+))*
             (use NAME SHAREDNAME (bind ADVNAME EXPR)+)*
             (output NAME EXPR)+)

    EXPR := NAME | (const:W INT) | (advice NAME :W) | (OP:W EXPR...)

Forms may appear in any order as long as the circuit is acyclic. Nested
expressions become anonymous nodes named ``_N``.
"""

import logging

from . import sexpr
from .circuit import (
    BINARY_OPS,
    UNARY_OPS,
    Advice,
    Circuit,
    CircuitNode,
    Const,
    Input,
    Op,
    Shared,
    UseSite,
    check_width,
)
from .errors import CircuitError, NetlistSyntaxError, WidthError

logger = logging.getLogger(__name__)

ONE_LINE_LIMIT = 80


def _width_token(token) -> int:
    if not isinstance(token, str) or not token.startswith(":"):
        raise WidthError(f"expected a width like :8, got {token!r}")
    digits = token[1:]
    if not digits.isdigit():
        raise WidthError(f"malformed width {token!r}")
    width = int(digits)
    check_width(width)
    return width


def split_head(symbol) -> tuple[str, int]:
    """Splits ``"mul:32"`` into ``("mul", 32)``."""
    if not isinstance(symbol, str) or ":" not in symbol:
        raise CircuitError(f"expected OP:WIDTH, got {symbol!r}")
    op, _, digits = symbol.partition(":")
    if not digits.isdigit():
        raise WidthError(f"malformed width in {symbol!r}")
    width = int(digits)
    check_width(width)
    return op, width


def _name(token, what: str) -> str:
    if not isinstance(token, str) or token.startswith(":") or "(" in token:
        raise CircuitError(f"expected a {what} name, got {token!r}")
    return token


class _Builder:
    def __init__(self, declared: set[str], shared_widths: dict[str, int]):
        self.declared = declared
        self.shared_widths = shared_widths
        self.nodes: list[CircuitNode] = []
        self.widths: dict[str, int] = {}
        self.outputs: list[tuple[str, str]] = []
        self._counter = 0

    def fresh(self) -> str:
        while True:
            name = f"_{self._counter}"
            self._counter += 1
            if name not in self.declared and name not in self.widths:
                return name

    def add(self, node: CircuitNode) -> str:
        self.nodes.append(node)
        self.widths[node.name] = node.width
        return node.name

    def expr(self, form, name: str | None = None) -> str:
        if not isinstance(form, list):
            if name is not None:
                raise CircuitError(f"let {name!r} needs an expression, got {form!r}")
            if isinstance(form, int):
                raise CircuitError(f"bare integer {form} needs (const:W ...)")
            return _name(form, "node")
        if not form:
            raise CircuitError("empty expression")
        head, *args = form
        if head == "advice":
            if len(args) != 2:
                raise CircuitError(f"malformed advice {sexpr.write(form)}")
            label = _name(args[0], "advice")
            return self.add(Advice(name or self.fresh(), _width_token(args[1]), label))
        op, width = split_head(head)
        if op == "const":
            if len(args) != 1 or not isinstance(args[0], int):
                raise CircuitError(f"malformed constant {sexpr.write(form)}")
            return self.add(Const(name or self.fresh(), width, args[0]))
        if op not in BINARY_OPS + UNARY_OPS:
            raise CircuitError(f"unknown operator {op!r}")
        operands = tuple(self.expr(arg) for arg in args)
        return self.add(Op(name or self.fresh(), width, op, operands))

    def form(self, form) -> None:
        if not isinstance(form, list) or not form:
            raise CircuitError(f"unexpected form {form!r}")
        head, *args = form
        match head:
            case "input":
                if len(args) != 2:
                    raise CircuitError(f"malformed input {sexpr.write(form)}")
                self.add(Input(_name(args[0], "input"), _width_token(args[1])))
            case "let":
                if len(args) != 2:
                    raise CircuitError(f"malformed let {sexpr.write(form)}")
                self.expr(args[1], name=_name(args[0], "node"))
            case "shared":
                self.shared(form)
            case "use":
                self.use(form)
            case "output":
                if len(args) != 2:
                    raise CircuitError(f"malformed output {sexpr.write(form)}")
                self.outputs.append((_name(args[0], "output"), self.expr(args[1])))
            case _:
                raise CircuitError(f"unknown form {head!r}")

    def shared(self, form) -> None:
        if len(form) != 3 or not isinstance(form[2], list) or not form[2]:
            raise CircuitError(f"malformed shared {sexpr.write(form)}")
        name = _name(form[1], "shared")
        op, width = split_head(form[2][0])
        if op not in BINARY_OPS + UNARY_OPS:
            raise CircuitError(f"unknown operator {op!r} in shared {name!r}")
        advice = []
        for leaf in form[2][1:]:
            if not isinstance(leaf, list) or len(leaf) != 3 or leaf[0] != "advice":
                raise CircuitError(f"shared {name!r} operands must be advice leaves")
            advice.append((_name(leaf[1], "advice"), _width_token(leaf[2])))
        self.add(Shared(name, width, op, tuple(advice)))

    def use(self, form) -> None:
        if len(form) < 4:
            raise CircuitError(f"malformed use {sexpr.write(form)}")
        name = _name(form[1], "use")
        shared = _name(form[2], "shared")
        if shared not in self.shared_widths:
            raise CircuitError(f"use {name!r} names unknown shared unit {shared!r}")
        bindings = []
        for bind in form[3:]:
            if not isinstance(bind, list) or len(bind) != 3 or bind[0] != "bind":
                raise CircuitError(f"malformed binding in use {name!r}")
            bindings.append((_name(bind[1], "advice"), self.expr(bind[2])))
        self.add(UseSite(name, self.shared_widths[shared], shared, tuple(bindings)))


def _declarations(forms: list) -> tuple[set[str], dict[str, int]]:
    declared, shared_widths = set(), {}
    for form in forms:
        if isinstance(form, list) and len(form) >= 2 and isinstance(form[1], str):
            if form[0] in ("input", "let", "shared", "use"):
                declared.add(form[1])
            if form[0] == "shared" and len(form) == 3 and isinstance(form[2], list):
                _, shared_widths[form[1]] = split_head(form[2][0])
    return declared, shared_widths


def parse_circuit(text: str) -> Circuit:
    """Parses and validates a netlist.

    Raises:
        NetlistSyntaxError: unbalanced or otherwise unreadable text.
        CycleError, WidthError, UndefinedNameError, ConstantOverflowError:
            well-formed text describing an invalid circuit.
    """
    forms = sexpr.read_all(text)
    if len(forms) != 1 or not isinstance(forms[0], list) or forms[0][:1] != ["circuit"]:
        raise NetlistSyntaxError("expected a single (circuit ...) form", 1, 1)
    body = forms[0][1:]
    builder = _Builder(*_declarations(body))
    for form in body:
        builder.form(form)
    if not builder.outputs:
        raise CircuitError("circuit declares no outputs")
    circuit = Circuit.build(builder.nodes, builder.outputs)
    logger.debug("parsed circuit with %d nodes", len(circuit.nodes))
    return circuit


def _node_form(node: CircuitNode) -> str:
    match node:
        case Input(name=name, width=width):
            return f"(input {name} :{width})"
        case Const(name=name, width=width, value=value):
            return f"(let {name} (const:{width} {value}))"
        case Advice(name=name, width=width, label=label):
            return f"(let {name} (advice {label} :{width}))"
        case Op(name=name, width=width, op=op, operands=operands):
            return f"(let {name} ({op}:{width} {' '.join(operands)}))"
        case Shared(name=name, width=width, op=op, advice=advice):
            leaves = " ".join(f"(advice {label} :{w})" for label, w in advice)
            return f"(shared {name} ({op}:{width} {leaves}))"
        case UseSite(name=name, shared=shared, bindings=bindings):
            binds = " ".join(f"(bind {label} {ref})" for label, ref in bindings)
            return f"(use {name} {shared} {binds})"
    raise CircuitError(f"cannot serialize {node!r}")


def serialize_circuit(circuit: Circuit) -> str:
    """Writes the canonical netlist text; ``parse_circuit`` inverts it."""
    forms = [_node_form(node) for node in circuit.nodes]
    forms += [f"(output {out} {ref})" for out, ref in circuit.outputs]
    one_line = "(circuit " + " ".join(forms) + ")"
    if len(one_line) <= ONE_LINE_LIMIT:
        return one_line + "\n"
    return "(circuit\n" + "\n".join(f"  {form}" for form in forms) + ")\n"
