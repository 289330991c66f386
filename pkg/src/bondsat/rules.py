"""Rewrite-rule DSL and e-matching.

Rules are s-expressions, one per line:

    (mul:bw ?a ?b) => (trunc:bw (mul:64 (zext:64 ?a) (zext:64 ?b)))
    (let Muls (mul:64)...) => (let Bond (bond Muls...))
    (unify Bond (mul:64 advice:64 advice:64))

Widths are literals, variables (``bw``, ``?w``) or wildcards (``_`` or none).
``?x`` binds a class, ``$x`` binds the value of a constant; right-hand
constants may fold two values, as in ``(const:?w (add $x $y))``.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Iterator
from dataclasses import dataclass

from . import sexpr
from .bond import TemplateSpec
from .circuit import BINARY_OPS, LEAF_OPS, OP_ARITY, apply_op, mask, operand_width_ok
from .egraph import EGraph, ENode
from .errors import NetlistSyntaxError, RuleParseError, StageError, StructuralError

logger = logging.getLogger(__name__)

DEFAULT_RULES = """\
; upcast to a 64-bit unit and truncate back
(mul:bw ?a ?b) => (trunc:bw (mul:64 (zext:64 ?a) (zext:64 ?b)))
(add:bw ?a ?b) => (trunc:bw (add:64 (zext:64 ?a) (zext:64 ?b)))
(add:?w ?a ?b) => (add:?w ?b ?a)
(mul:?w ?a ?b) => (mul:?w ?b ?a)
(add:?w ?a (const:?w 0)) => ?a
(mul:?w ?a (const:?w 1)) => ?a
(add:?w (const:?w $x) (const:?w $y)) => (const:?w (add $x $y))
(mul:?w (const:?w $x) (const:?w $y)) => (const:?w (mul $x $y))
(zext:?w (const:?v $x)) => (const:?w $x)
(trunc:?w (const:?v $x)) => (const:?w $x)
; gather every 64-bit unit of a kind and bond them
(let Muls (mul:64)...) => (let Bond (bond Muls...))
(let Adds (add:64)...) => (let AddBond (bond Adds...))
(unify Bond (mul:64 advice:64 advice:64))
(unify AddBond (add:64 advice:64 advice:64))
"""

_WIDTH_VAR = re.compile(r"\??[A-Za-z_][A-Za-z0-9_]*")

Width = int | str | None
Value = int | str | tuple


@dataclass(frozen=True)
class PVar:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class PNode:
    op: str
    width: Width = None
    children: tuple[Pattern, ...] = ()
    value: Value | None = None

    def __str__(self) -> str:
        head = self.op if self.width is None else f"{self.op}:{self.width}"
        parts = [head, *map(str, self.children)]
        if self.value is not None:
            parts.append(_value_text(self.value))
        return "(" + " ".join(parts) + ")"


Pattern = PVar | PNode


def _value_text(value: Value) -> str:
    if isinstance(value, tuple):
        return "(" + " ".join(map(str, value)) + ")"
    return str(value)


# --- stages ---


@dataclass(frozen=True)
class Generic:
    pass


@dataclass(frozen=True)
class Bonding:
    groupkey: tuple[str, int]
    gather: str
    bond_name: str


@dataclass(frozen=True)
class Unification:
    bond_name: str
    template: TemplateSpec


Stage = Generic | Bonding | Unification


@dataclass(frozen=True)
class Rewrite:
    name: str
    stage: Stage
    lhs: Pattern | None = None
    rhs: Pattern | None = None

    @property
    def is_generic(self) -> bool:
        return isinstance(self.stage, Generic)


# --- parsing ---


def _width(spec: str, text: str) -> Width:
    if spec in ("", "_"):
        return None
    if spec.isdigit():
        width = int(spec)
        if not 1 <= width <= 64:
            raise RuleParseError(f"width {width} out of range", text)
        return width
    if not _WIDTH_VAR.fullmatch(spec):
        raise RuleParseError(f"malformed width {spec!r}", text)
    return spec


def _head(symbol, text: str) -> tuple[str, Width]:
    if not isinstance(symbol, str):
        raise RuleParseError(f"expected an operator, got {symbol!r}", text)
    op, _, spec = symbol.partition(":")
    if op not in OP_ARITY:
        raise RuleParseError(f"unknown operator {op!r}", text)
    return op, _width(spec, text)


def _value(form, text: str) -> Value:
    if isinstance(form, int):
        return form
    if isinstance(form, str) and form.startswith("$") and len(form) > 1:
        return form
    if (
        isinstance(form, list)
        and len(form) == 3
        and form[0] in BINARY_OPS
        and all(isinstance(v, int) or str(v).startswith("$") for v in form[1:])
    ):
        return tuple(form)
    raise RuleParseError(f"malformed constant value {sexpr.write(form)}", text)


def _pattern(form, text: str) -> Pattern:
    if isinstance(form, str) and form.startswith("?"):
        return PVar(form)
    if isinstance(form, str) and ":" in form:
        op, width = _head(form, text)
        if OP_ARITY[op] != 0 or op == "const":
            raise RuleParseError(f"{op} needs parentheses", text)
        return PNode(op, width)
    if not isinstance(form, list) or not form:
        raise RuleParseError(f"unexpected {form!r} in pattern", text)
    op, width = _head(form[0], text)
    args = form[1:]
    if op == "const":
        if len(args) != 1:
            raise RuleParseError("const takes exactly one value", text)
        return PNode(op, width, (), _value(args[0], text))
    if len(args) != OP_ARITY[op]:
        raise RuleParseError(
            f"{op} takes {OP_ARITY[op]} operands, got {len(args)}", text
        )
    return PNode(op, width, tuple(_pattern(arg, text) for arg in args))


def _bindings(p: Pattern) -> tuple[set[str], set[str], set[str]]:
    """Class, width and value variables occurring in ``p``."""
    classes, widths, values = set(), set(), set()

    def walk(p: Pattern) -> None:
        if isinstance(p, PVar):
            classes.add(p.name)
            return
        if isinstance(p.width, str):
            widths.add(p.width)
        if isinstance(p.value, str):
            values.add(p.value)
        elif isinstance(p.value, tuple):
            values.update(v for v in p.value[1:] if isinstance(v, str))
        for child in p.children:
            walk(child)

    walk(p)
    return classes, widths, values


def _check_rhs(lhs: Pattern, rhs: Pattern, text: str) -> None:
    bound = _bindings(lhs)
    used = _bindings(rhs)
    for kind, have, need in zip(("variable", "width", "value"), bound, used):
        unbound = sorted(need - have)
        if unbound:
            raise RuleParseError(f"unbound {kind} {unbound[0]} on the right", text)

    def walk(p: Pattern) -> None:
        if isinstance(p, PNode):
            if p.width is None:
                raise RuleParseError(f"right-hand {p.op} needs a width", text)
            if p.op in ("advice", "input"):
                raise RuleParseError(f"{p.op} cannot appear on the right", text)
            for child in p.children:
                walk(child)

    walk(rhs)


def _strip_ellipsis(token) -> str | None:
    if isinstance(token, str) and token.endswith("..."):
        token = token[: -len("...")]
    return token or None


def _bonding(lhs: list, rhs: list, text: str) -> Stage:
    # (let Muls (mul:64)...) => (let Bond (bond Muls...))
    if len(lhs) not in (3, 4) or not isinstance(lhs[2], list) or len(lhs[2]) != 1:
        raise RuleParseError("malformed gather, expected (let NAME (op:W)...)", text)
    if len(lhs) == 4 and lhs[3] != "...":
        raise RuleParseError("unexpected trailing form in gather", text)
    gather = lhs[1]
    op, width = _head(lhs[2][0], text)
    if not isinstance(width, int):
        raise RuleParseError("a bonding group needs a literal width", text)
    if OP_ARITY[op] < 1:
        raise RuleParseError(f"cannot bond leaf operator {op!r}", text)
    if len(rhs) != 3 or not isinstance(rhs[2], list) or rhs[2][:1] != ["bond"]:
        raise RuleParseError("expected (let NAME (bond GROUP...))", text)
    names = [_strip_ellipsis(t) for t in rhs[2][1:]]
    names = [n for n in names if n]
    if names != [gather]:
        raise RuleParseError(f"bond must name the gathered group {gather!r}", text)
    return Bonding((op, width), gather, rhs[1])


def _unification(form: list, text: str) -> Stage:
    if len(form) != 3 or not isinstance(form[2], list) or not form[2]:
        raise RuleParseError("expected (unify NAME (op:W advice...))", text)
    op, width = _head(form[2][0], text)
    if not isinstance(width, int):
        raise RuleParseError("a template needs a literal width", text)
    widths = []
    for leaf in form[2][1:]:
        leaf_op, leaf_width = _head(leaf, text)
        if leaf_op != "advice" or not isinstance(leaf_width, int):
            raise RuleParseError("template operands must be advice:W leaves", text)
        widths.append(leaf_width)
    if len(widths) != OP_ARITY[op]:
        raise RuleParseError(f"{op} takes {OP_ARITY[op]} advice leaves", text)
    return Unification(form[1], TemplateSpec(op, width, tuple(widths)))


def parse_rule(text: str, name: str | None = None) -> Rewrite:
    """Parses one rule into a stage-tagged ``Rewrite``."""
    text = text.strip()
    try:
        forms = sexpr.read_all(text)
    except NetlistSyntaxError as exc:
        raise RuleParseError(str(exc), text) from exc
    name = name or text
    if len(forms) == 1 and isinstance(forms[0], list) and forms[0][:1] == ["unify"]:
        return Rewrite(name, _unification(forms[0], text))
    if len(forms) != 3 or forms[1] != "=>":
        raise RuleParseError("expected LHS => RHS", text)
    lhs, _, rhs = forms
    if isinstance(lhs, list) and lhs[:1] == ["let"]:
        if not isinstance(rhs, list) or rhs[:1] != ["let"]:
            raise RuleParseError("a gather must be rewritten to a bond", text)
        return Rewrite(name, _bonding(lhs, rhs, text))
    lhs_pattern, rhs_pattern = _pattern(lhs, text), _pattern(rhs, text)
    _check_rhs(lhs_pattern, rhs_pattern, text)
    return Rewrite(name, Generic(), lhs_pattern, rhs_pattern)


def parse_rules(text: str) -> list[Rewrite]:
    """Parses a rule file: one rule per line, ``;`` comments."""
    rules = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split(";", 1)[0].strip()
        if not line:
            continue
        try:
            rules.append(parse_rule(line))
        except RuleParseError as exc:
            raise RuleParseError(f"line {number}: {exc.message}", line) from exc
    return rules


def default_rules() -> list[Rewrite]:
    return parse_rules(DEFAULT_RULES)


def split_stages(
    rules: list[Rewrite],
) -> tuple[list[Rewrite], list[Rewrite], list[Rewrite]]:
    """Splits rules into (generic, bonding, unification), keeping file order."""
    return (
        [r for r in rules if isinstance(r.stage, Generic)],
        [r for r in rules if isinstance(r.stage, Bonding)],
        [r for r in rules if isinstance(r.stage, Unification)],
    )


# --- matching ---


@dataclass(frozen=True)
class Match:
    root: int
    subst: dict[str, int]
    widths: dict[str, int]
    values: dict[str, int]

    def key(self) -> tuple:
        return (
            self.root,
            tuple(sorted(self.subst.items())),
            tuple(sorted(self.widths.items())),
            tuple(sorted(self.values.items())),
        )


_Env = tuple[dict[str, int], dict[str, int], dict[str, int]]


def _bind(table: dict[str, int], name: str, value: int) -> dict[str, int] | None:
    bound = table.get(name)
    if bound is None:
        return {**table, name: value}
    return table if bound == value else None


def _match(g: EGraph, p: Pattern, cid: int, env: _Env) -> Iterator[_Env]:
    cid = g.find(cid)
    if g.is_sealed(cid):
        return
    classes, widths, values = env
    if isinstance(p, PVar):
        bound = _bind(classes, p.name, cid)
        if bound is not None:
            yield bound, widths, values
        return
    for node in g.enodes_of(cid):
        if not isinstance(node, ENode) or node.op != p.op:
            continue
        node_widths = widths
        if isinstance(p.width, int) and p.width != node.width:
            continue
        if isinstance(p.width, str):
            node_widths = _bind(widths, p.width, node.width)
            if node_widths is None:
                continue
        node_values = values
        if isinstance(p.value, int) and p.value != node.payload:
            continue
        if isinstance(p.value, str):
            node_values = _bind(values, p.value, node.payload)
            if node_values is None:
                continue
        yield from _match_children(
            g, p.children, node.children, (classes, node_widths, node_values)
        )


def _match_children(
    g: EGraph, patterns: tuple[Pattern, ...], children: tuple[int, ...], env: _Env
) -> Iterator[_Env]:
    if not patterns:
        yield env
        return
    for inner in _match(g, patterns[0], children[0], env):
        yield from _match_children(g, patterns[1:], children[1:], inner)


def ematch(g: EGraph, p: Pattern) -> list[Match]:
    """Every (class, substitution) whose class holds a term matching ``p``.

    Sealed classes never match, neither at the root nor below it.
    """
    seen = set()
    matches = []
    for cid in g.class_ids():
        for subst, widths, values in _match(g, p, cid, ({}, {}, {})):
            match = Match(cid, subst, widths, values)
            if match.key() not in seen:
                seen.add(match.key())
                matches.append(match)
    return matches


# --- application ---


def resolve_value(value: Value, width: int, values: dict[str, int]) -> int:
    """Evaluates a right-hand constant at ``width``."""
    if isinstance(value, tuple):
        op, *args = value
        operands = [resolve_value(a, width, values) for a in args]
        return apply_op(op, width, operands)
    if isinstance(value, str):
        return values[value] & mask(width)
    return value & mask(width)


def instantiate(g: EGraph, p: Pattern, m: Match) -> int | None:
    """Adds the right-hand side for ``m``; ``None`` when it is ill-typed."""
    if isinstance(p, PVar):
        return m.subst[p.name]
    width = p.width if isinstance(p.width, int) else m.widths[p.width]
    children = []
    for child in p.children:
        cid = instantiate(g, child, m)
        if cid is None:
            return None
        children.append(cid)
    if p.op in LEAF_OPS:
        return g.add(ENode(p.op, width, (), resolve_value(p.value, width, m.values)))
    if p.op in ("zext", "trunc") and g.width_of(children[0]) == width:
        return children[0]
    if not all(operand_width_ok(p.op, width, g.width_of(c)) for c in children):
        return None
    return g.add(ENode(p.op, width, tuple(children)))


def apply_rewrite(g: EGraph, rule: Rewrite, matches: list[Match] | None = None) -> int:
    """Instantiates and merges every match, then rebuilds.

    Returns:
        How many pairs of pre-existing classes were merged, including the
        congruence merges of the rebuild. Merging a freshly created class
        only adds nodes and is not counted.
    """
    if not rule.is_generic:
        raise StageError(f"rule {rule.name!r} is not a generic rewrite")
    if matches is None:
        matches = ematch(g, rule.lhs)
    merges = 0
    for m in matches:
        mark = g.id_count
        rhs = instantiate(g, rule.rhs, m)
        if rhs is None:
            logger.debug("rule %r: ill-typed instance at class %d", rule.name, m.root)
            continue
        if g.find(rhs) == g.find(m.root):
            continue
        try:
            g.merge(m.root, rhs)
        except StructuralError as exc:
            logger.debug("rule %r: %s", rule.name, exc)
            continue
        if rhs < mark:
            merges += 1
    return merges + g.rebuild()
