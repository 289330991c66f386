"""Cost-driven extraction of a circuit from a saturated, bonded e-graph.

Every public class picks one node by bottom-up tree cost. A bond class picks
either its b-node (each bonded site is materialized on its own) or a template
e-node (one shared unit plus a use site per parent); consumers of a bonded
parent pay that parent's share of the group cost.
"""

from __future__ import annotations

import itertools
import logging
import math
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import networkx as nx

from .bond import (
    BNode,
    BNodeChosen,
    BondChoice,
    BondRecord,
    ConsumerSlot,
    OutputRef,
    TemplateChosen,
    disperse,
)
from .circuit import (
    Advice,
    Circuit,
    CircuitNode,
    Const,
    Input,
    Op,
    Shared,
    UseSite,
)
from .egraph import EGraph, ENode
from .errors import ConfigError, TooLarge, Unextractable

logger = logging.getLogger(__name__)

INFINITY = math.inf

Cost = Fraction | float


def default_node_cost(op: str, width: int) -> Fraction:
    """Default area estimate for one operator.

    Multipliers cost their width, adders and subtractors one unit per started
    byte, logic gates one unit; casts, leaves and advice are free.
    """
    match op:
        case "mul":
            return Fraction(width)
        case "add" | "sub":
            return Fraction(math.ceil(width / 8))
        case "and" | "or" | "xor":
            return Fraction(1)
    return Fraction(0)


@dataclass(frozen=True)
class CostModel:
    """Per-operator costs with defaults for missing entries.

    Attributes:
        node_costs: overrides keyed by ``(op, width)``.
        use_route_cost: cost of routing one operand into a shared unit.
    """

    node_costs: dict[tuple[str, int], Fraction] = field(default_factory=dict)
    use_route_cost: Fraction = Fraction(1)

    def node_cost(self, op: str, width: int) -> Fraction:
        cost = self.node_costs.get((op, width))
        return default_node_cost(op, width) if cost is None else cost


_COST_LINE = re.compile(r"(?P<key>[A-Za-z_]+(?::\d+)?)\s*=\s*(?P<cost>\S+)")


def parse_cost_model(text: str) -> CostModel:
    """Reads ``op:width = cost`` and ``use_route = cost`` lines.

    Costs are nonnegative rationals such as ``3``, ``1.5`` or ``1/3``; missing
    entries fall back to the defaults.
    """
    node_costs: dict[tuple[str, int], Fraction] = {}
    route = Fraction(1)
    for number, line in enumerate(text.splitlines(), start=1):
        line = re.split(r"[#;]", line, maxsplit=1)[0].strip()
        if not line:
            continue
        parsed = _COST_LINE.fullmatch(line)
        if parsed is None:
            raise ConfigError(f"cost model line {number}: cannot parse {line!r}")
        try:
            cost = Fraction(parsed["cost"])
        except (ValueError, ZeroDivisionError):
            raise ConfigError(
                f"cost model line {number}: bad cost {parsed['cost']!r}"
            ) from None
        if cost < 0:
            raise ConfigError(f"cost model line {number}: negative cost")
        key = parsed["key"]
        if key == "use_route":
            route = cost
        elif ":" in key:
            op, width = key.split(":")
            node_costs[(op, int(width))] = cost
        else:
            raise ConfigError(f"cost model line {number}: expected op:width")
    return CostModel(node_costs, route)


def load_cost_model(path: str | Path) -> CostModel:
    """Reads a cost model file; see ``parse_cost_model`` for the format."""
    return parse_cost_model(Path(path).read_text(encoding="utf-8"))


# --- bond groups ---


@dataclass(frozen=True)
class _Group:
    bnode: BNode
    sites: dict[int, int]
    templates: tuple[TemplateChosen, ...]

    def site_children(self) -> list[tuple[int, ...]]:
        return [children for _, children in self.bnode.bond_map.entries]


def _template(g: EGraph, node: ENode) -> TemplateChosen | None:
    advice = []
    for child in node.children:
        leaf = next(
            (
                n
                for n in g.enodes_of(child)
                if isinstance(n, ENode) and n.op == "advice"
            ),
            None,
        )
        if leaf is None:
            return None
        advice.append((str(leaf.payload), leaf.width))
    if len({label for label, _ in advice}) != len(advice):
        return None
    return TemplateChosen(node, tuple(advice))


def _groups(g: EGraph) -> dict[int, _Group]:
    groups = {}
    for cid, bnode in g.bnodes():
        sites = {
            g.congruence_root(p): i for i, p in enumerate(bnode.bond_map.parents)
        }
        templates = []
        for node in g.congruence_class(cid).nodes:
            if (
                isinstance(node, ENode)
                and node.children
                and (template := _template(g, node)) is not None
            ):
                templates.append(template)
        groups[g.find(cid)] = _Group(bnode, sites, tuple(templates))
    return groups


# --- costs ---


@dataclass(frozen=True)
class ClassCost:
    """Tree cost of a class and the node that achieves it."""

    cost: Cost
    node: ENode | BNode | None


@dataclass
class ExtractionChoice:
    """Chosen node per public class and chosen dispersion per bond class."""

    nodes: dict[int, ENode] = field(default_factory=dict)
    bonds: dict[int, BondChoice] = field(default_factory=dict)


class _CostTable:
    """Bottom-up tree costs with per-site prices for bond classes.

    A template body is amortised only over the sites in ``active``. When
    ``roots`` are given, sites that no chosen consumer reaches are dropped
    and the table is solved again until the adopting sites are stable.
    """

    def __init__(self, g: EGraph, m: CostModel, roots: Iterable[int] = ()):
        self.g = g
        self.m = m
        self.groups = _groups(g)
        self.active: dict[int, frozenset[int]] = {
            pub: frozenset(range(len(group.bnode.bond_map)))
            for pub, group in self.groups.items()
        }
        self.best: dict[int, tuple[Cost, ENode]] = {}
        self.group_best: dict[int, tuple[Cost, BondChoice, list[Cost], Cost]] = {}
        self._solve()
        roots = list(roots)
        while roots and self._narrow(roots):
            self._solve()

    def ref_cost(self, child: int) -> Cost:
        pub = self.g.find(child)
        group = self.groups.get(pub)
        if group is None:
            return self.best.get(pub, (INFINITY, None))[0]
        site = group.sites.get(self.g.congruence_root(child))
        if site is None or pub not in self.group_best:
            return INFINITY
        return self.group_best[pub][2][site]

    def _options(self, pub: int, group: _Group):
        """(key, rank, choice, per-site costs, total) for every way to disperse.

        Sites outside the active set cannot route through a template. The
        key compares options over the active sites only.
        """
        m = self.m
        operands = [
            sum((self.ref_cost(c) for c in children), Fraction(0))
            for children in group.site_children()
        ]
        active = self.active[pub]
        k = len(active)
        arity = group.bnode.bond_map.arity
        if k:
            route = arity * m.use_route_cost
            for template in group.templates:
                t = template.template
                body = m.node_cost(t.op, t.width)
                sites = [
                    body / k + route + s if i in active else INFINITY
                    for i, s in enumerate(operands)
                ]
                total = (
                    body
                    + k * route
                    + sum((operands[i] for i in active), Fraction(0))
                )
                yield total, (0, t.op, t.sort_key()), template, sites, total
        body = m.node_cost(group.bnode.op, group.bnode.width)
        sites = [body + s for s in operands]
        key = sum((sites[i] for i in active), Fraction(0))
        yield key, (1, "", ()), BNodeChosen(), sites, sum(sites, Fraction(0))

    def _solve(self) -> None:
        g, m = self.g, self.m
        self.best.clear()
        self.group_best.clear()
        changed = True
        while changed:
            changed = False
            for pub in g.class_ids():
                group = self.groups.get(pub)
                if group is not None:
                    key, _, choice, sites, total = min(
                        self._options(pub, group), key=lambda o: (o[0], o[1])
                    )
                    old = self.group_best.get(pub)
                    if key < INFINITY and (
                        old is None or any(n < o for n, o in zip(sites, old[2]))
                    ):
                        self.group_best[pub] = (key, choice, sites, total)
                        changed = True
                    continue
                candidates = [
                    (
                        m.node_cost(node.op, node.width)
                        + sum((self.ref_cost(c) for c in node.children), Fraction(0)),
                        _rank(node),
                        node,
                    )
                    for node in g.enodes_of(pub)
                ]
                cost, _, node = min(candidates, key=lambda c: (c[0], c[1]))
                old = self.best.get(pub)
                if cost < INFINITY and (old is None or cost < old[0]):
                    self.best[pub] = (cost, node)
                    changed = True

    def _used_sites(self, roots: Iterable[int]) -> dict[int, set[int]]:
        """Bond sites reached from ``roots`` through the chosen nodes."""
        g = self.g
        used: dict[int, set[int]] = {}
        seen: set[int] = set()
        stack = list(roots)
        while stack:
            child = stack.pop()
            pub = g.find(child)
            group = self.groups.get(pub)
            if group is None:
                if pub not in seen and pub in self.best:
                    seen.add(pub)
                    stack.extend(self.best[pub][1].children)
                continue
            site = group.sites.get(g.congruence_root(child))
            taken = used.setdefault(pub, set())
            if site is not None and site not in taken:
                taken.add(site)
                stack.extend(group.site_children()[site])
        return used

    def _narrow(self, roots: Iterable[int]) -> bool:
        used = self._used_sites(roots)
        changed = False
        for pub, (_, choice, _, _) in self.group_best.items():
            if not isinstance(choice, TemplateChosen):
                continue
            kept = self.active[pub] & frozenset(used.get(pub, ()))
            if kept != self.active[pub]:
                logger.debug(
                    "bond class %d: %d of %d sites adopt the template",
                    pub,
                    len(kept),
                    len(self.active[pub]),
                )
                self.active[pub] = kept
                changed = True
        return changed

    def class_costs(self) -> dict[int, ClassCost]:
        costs = {}
        for pub in self.g.class_ids():
            if pub in self.groups:
                entry = self.group_best.get(pub)
                if entry is None:
                    costs[pub] = ClassCost(INFINITY, None)
                else:
                    _, choice, _, total = entry
                    node = (
                        choice.template
                        if isinstance(choice, TemplateChosen)
                        else self.groups[pub].bnode
                    )
                    costs[pub] = ClassCost(total, node)
            else:
                cost, node = self.best.get(pub, (INFINITY, None))
                costs[pub] = ClassCost(cost, node)
        return costs

    def choice(self) -> ExtractionChoice:
        return ExtractionChoice(
            nodes={pub: node for pub, (_, node) in self.best.items()},
            bonds={pub: entry[1] for pub, entry in self.group_best.items()},
        )


def _rank(node: ENode) -> tuple:
    return (node.op, node.sort_key())


def class_costs(g: EGraph, m: CostModel) -> dict[int, ClassCost]:
    """Best cost and node for every public class; unreachable classes cost inf.

    Bond classes report the cost of their whole group with the template body
    amortised over every site.
    """
    return _CostTable(g, m).class_costs()


# --- emission ---


class _Emitter:
    def __init__(
        self,
        g: EGraph,
        choice: ExtractionChoice,
        records: Sequence[BondRecord],
        inputs: Sequence[Input] | None,
    ):
        self.g = g
        self.choice = choice
        self.groups = _groups(g)
        self.records = {g.find(r.bond_class): r for r in records}
        self.nodes: list[CircuitNode] = []
        self.names: set[str] = set()
        self.by_class: dict[int, str] = {}
        self.by_site: dict[tuple[int, int], str] = {}
        self.structural: dict[tuple, str] = {}
        self.active: set = set()
        self.slot_sites: dict[tuple[ENode, int], tuple[int, int]] = {}
        self.output_sites: dict[str, tuple[int, int]] = {}
        for record in records:
            pub = g.find(record.bond_class)
            if pub not in self.groups:
                continue
            for ref in record.provenance:
                site = (pub, record.site_of(ref))
                match ref:
                    case ConsumerSlot(enode=enode, slot=slot):
                        self.slot_sites[(enode, slot)] = site
                    case OutputRef(name=name):
                        self.output_sites[name] = site
        if inputs is None:
            inputs = sorted(
                {
                    Input(str(n.payload), n.width)
                    for eclass in g.congruence_classes()
                    for n in eclass.nodes
                    if isinstance(n, ENode) and n.op == "input"
                },
                key=lambda i: i.name,
            )
        for node in inputs:
            self.add(node)

    def add(self, node: CircuitNode) -> str:
        self.nodes.append(node)
        self.names.add(node.name)
        return node.name

    def fresh(self, stem: str) -> str:
        for k in itertools.count():
            name = f"{stem}{k}"
            if name not in self.names:
                return name

    def ref(self, child: int) -> str:
        pub = self.g.find(child)
        group = self.groups.get(pub)
        if group is None:
            return self.class_value(pub)
        site = group.sites.get(self.g.congruence_root(child))
        if site is None:
            raise Unextractable(
                f"class {child} sits in bond {group.bnode.symbol} but is not a site"
            )
        return self.site(pub, site)

    def site(self, pub: int, index: int) -> str:
        if (pub, index) not in self.by_site:
            self.disperse(pub, self.groups[pub])
        return self.by_site[(pub, index)]

    def recorded(self, site: tuple[int, int] | None, child: int) -> str:
        """Node for ``child``, routed by the bond record when one covers it."""
        if site is None or site[0] != self.g.find(child):
            return self.ref(child)
        return self.site(*site)

    def output(self, name: str, root: int) -> str:
        return self.recorded(self.output_sites.get(name), root)

    def class_value(self, pub: int) -> str:
        if pub in self.by_class:
            return self.by_class[pub]
        node = self.choice.nodes.get(pub)
        if node is None:
            raise Unextractable(f"class {pub} has no finite-cost node")
        if pub in self.active:
            raise Unextractable(f"chosen nodes form a cycle through class {pub}")
        self.active.add(pub)
        name = self.emit(node)
        self.active.discard(pub)
        self.by_class[pub] = name
        return name

    def emit(self, node: ENode) -> str:
        if node.op == "input":
            name = str(node.payload)
            if name not in self.names:
                self.add(Input(name, node.width))
            return name
        operands = tuple(
            self.recorded(self.slot_sites.get((node, i)), c)
            for i, c in enumerate(node.children)
        )
        key = (node.op, node.width, operands, node.payload)
        if key in self.structural:
            return self.structural[key]
        match node.op:
            case "const":
                emitted = Const(self.fresh("k"), node.width, node.payload)
            case "advice":
                emitted = Advice(self.fresh("adv"), node.width, str(node.payload))
            case _:
                emitted = Op(self.fresh("n"), node.width, node.op, operands)
        self.structural[key] = self.add(emitted)
        return emitted.name

    def disperse(self, pub: int, group: _Group) -> None:
        key = ("bond", pub)
        if key in self.active:
            raise Unextractable(f"bond {group.bnode.symbol} feeds itself")
        self.active.add(key)
        extracted = {c: self.ref(c) for c in dict.fromkeys(group.bnode.children)}
        self.active.discard(key)
        record = self.records.get(pub) or BondRecord(group.bnode, pub)
        choice = self.choice.bonds.get(pub, BNodeChosen())
        prefix = group.bnode.symbol
        while any(name.startswith(prefix + "_") for name in self.names):
            prefix = self.fresh(group.bnode.symbol + "_")
        dispersal = disperse(record, choice, extracted, prefix=prefix)
        for fragment in dispersal.fragments:
            self.add(fragment)
        for site, parent in enumerate(group.bnode.bond_map.parents):
            self.by_site[(pub, site)] = dispersal.routes[parent]
        logger.info(
            "dispersed %s as %s",
            group.bnode.symbol,
            "shared unit" if isinstance(choice, TemplateChosen) else "separate sites",
        )


def _emit_circuit(
    g: EGraph,
    roots: Mapping[str, int],
    choice: ExtractionChoice,
    records: Sequence[BondRecord],
    inputs: Sequence[Input] | None,
) -> Circuit:
    emitter = _Emitter(g, choice, records, inputs)
    outputs = [(name, emitter.output(name, root)) for name, root in roots.items()]
    return Circuit.build(emitter.nodes, outputs).pruned()


def extract_circuit(
    g: EGraph,
    roots: Mapping[str, int],
    m: CostModel,
    records: Sequence[BondRecord] = (),
    inputs: Sequence[Input] | None = None,
) -> Circuit:
    """Extracts the cheapest circuit for ``roots`` and disperses every b-node.

    A shared unit is priced over the sites whose consumers route through it;
    sites left on their own alternatives are dropped and costs solved again.

    Raises:
        Unextractable: a root has infinite cost.
    """
    table = _CostTable(g, m, roots.values())
    for name, root in roots.items():
        if table.ref_cost(root) == INFINITY:
            raise Unextractable(f"output {name!r} has no finite-cost extraction")
    return _emit_circuit(g, roots, table.choice(), records, inputs)


def circuit_cost(circuit: Circuit, m: CostModel) -> Cost:
    """True DAG cost: every node once, ``arity * use_route_cost`` per use site."""
    total = Fraction(0)
    for node in circuit.nodes:
        match node:
            case Input(width=width):
                total += m.node_cost("input", width)
            case Const(width=width):
                total += m.node_cost("const", width)
            case Advice(width=width):
                total += m.node_cost("advice", width)
            case Op(op=op, width=width) | Shared(op=op, width=width):
                total += m.node_cost(op, width)
            case UseSite(bindings=bindings):
                total += len(bindings) * m.use_route_cost
    return total


def brute_force_extract(
    g: EGraph,
    roots: Mapping[str, int],
    m: CostModel,
    records: Sequence[BondRecord] = (),
    max_classes: int = 8,
    max_depth: int = 4,
    inputs: Sequence[Input] | None = None,
) -> tuple[Circuit, Cost]:
    """Minimum true DAG cost over every choice function; a test oracle.

    Raises:
        TooLarge: more than ``max_classes`` classes or a class graph deeper than
            ``max_depth``.
    """
    classes = g.class_ids()
    if len(classes) > max_classes:
        raise TooLarge(f"{len(classes)} classes exceed the oracle bound {max_classes}")
    depth = nx.dag_longest_path_length(nx.condensation(g.class_graph()))
    if depth > max_depth:
        raise TooLarge(
            f"class graph depth {depth} exceeds the oracle bound {max_depth}"
        )
    groups = _groups(g)
    options = []
    for pub in classes:
        group = groups.get(pub)
        if group is not None:
            options.append([BNodeChosen(), *group.templates])
        else:
            options.append([n for n in g.enodes_of(pub) if isinstance(n, ENode)])
    best: tuple[Circuit, Cost] | None = None
    for combo in itertools.product(*options):
        choice = ExtractionChoice()
        for pub, option in zip(classes, combo):
            if pub in groups:
                choice.bonds[pub] = option
            else:
                choice.nodes[pub] = option
        try:
            circuit = _emit_circuit(g, roots, choice, records, inputs)
        except Unextractable:
            continue
        cost = circuit_cost(circuit, m)
        if best is None or cost < best[1]:
            best = (circuit, cost)
    if best is None:
        raise Unextractable("no choice function yields a circuit")
    logger.info("oracle optimum %s", best[1])
    return best
