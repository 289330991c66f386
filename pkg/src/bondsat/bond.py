"""Bond nodes: tying concurrent, semantically distinct computations together.

A b-node carries a bond-map from each bonded parent class to that parent's
children. Bonding joins the parents and the b-node into one class; dispersion
undoes it when a circuit is extracted, either re-materializing every parent
(``BNodeChosen``) or routing all of them through one shared unit
(``TemplateChosen``).
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import networkx as nx

from .circuit import OP_ARITY, CircuitNode, Op, Shared, UseSite
from .egraph import EGraph, ENode
from .errors import (
    BondTooSmall,
    CyclicBond,
    IncompleteExtraction,
    NotRebuilt,
    StructuralError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BondMap:
    """Parent class -> ordered child classes, keyed by pre-bond ids."""

    entries: tuple[tuple[int, tuple[int, ...]], ...]

    def __post_init__(self):
        if len(self.entries) < 2:
            raise BondTooSmall(
                f"a bond needs at least 2 parents, got {len(self.entries)}"
            )
        if len({len(children) for _, children in self.entries}) != 1:
            raise StructuralError("bonded parents must have the same arity")
        if len({parent for parent, _ in self.entries}) != len(self.entries):
            raise StructuralError("bonded parents must be distinct")

    @classmethod
    def of(cls, pairs) -> BondMap:
        """Builds a map from (parent, children) pairs in any order."""
        return cls(tuple(sorted((p, tuple(cs)) for p, cs in pairs)))

    @property
    def parents(self) -> tuple[int, ...]:
        return tuple(parent for parent, _ in self.entries)

    @property
    def arity(self) -> int:
        return len(self.entries[0][1])

    @property
    def children(self) -> tuple[int, ...]:
        return tuple(c for _, children in self.entries for c in children)

    def __len__(self) -> int:
        return len(self.entries)

    def __str__(self) -> str:
        return ", ".join(
            f"{p}->({' '.join(map(str, cs))})" for p, cs in self.entries
        )


@dataclass(frozen=True)
class BNode:
    """Bond node. Equality and hashing use the bond-map only."""

    symbol: str = field(compare=False)
    bond_map: BondMap
    op: str = field(default="", compare=False)
    width: int = field(default=64, compare=False)

    @property
    def children(self) -> tuple[int, ...]:
        return self.bond_map.children

    def __str__(self) -> str:
        return f"{self.symbol}[{self.bond_map}]"


@dataclass(frozen=True)
class ConsumerSlot:
    """Child slot ``slot`` of e-node ``enode`` in class ``eclass``."""

    eclass: int
    enode: ENode
    slot: int


@dataclass(frozen=True)
class OutputRef:
    name: str


Reference = ConsumerSlot | OutputRef


@dataclass(frozen=True, eq=False)
class BondRecord:
    bnode: BNode
    bond_class: int
    provenance: dict[Reference, int] = field(default_factory=dict)

    @property
    def parents(self) -> tuple[int, ...]:
        return self.bnode.bond_map.parents

    def references_to(self, parent: int) -> list[Reference]:
        return [ref for ref, p in self.provenance.items() if p == parent]

    def site_of(self, ref: Reference) -> int | None:
        """Bond-map index of the parent ``ref`` pointed at before bonding."""
        parent = self.provenance.get(ref)
        return None if parent is None else self.parents.index(parent)

    def summary(self) -> dict:
        return {
            "symbol": self.bnode.symbol,
            "op": f"{self.bnode.op}:{self.bnode.width}",
            "parents": len(self.bnode.bond_map),
            "arity": self.bnode.bond_map.arity,
            "references": len(self.provenance),
        }


@dataclass(frozen=True)
class AncestryConstraint:
    """Classes that may not become bonded parents."""

    blocked: frozenset[int] = frozenset()


@dataclass(frozen=True)
class TemplateSpec:
    """Replacement unit for a bonded group: ``op:width`` over fresh advice."""

    op: str
    width: int
    advice_widths: tuple[int, ...]

    @property
    def arity(self) -> int:
        return len(self.advice_widths)

    def __str__(self) -> str:
        leaves = " ".join(f"advice:{w}" for w in self.advice_widths)
        return f"({self.op}:{self.width} {leaves})"


@dataclass(frozen=True)
class BNodeChosen:
    pass


@dataclass(frozen=True)
class TemplateChosen:
    template: ENode
    advice: tuple[tuple[str, int], ...]


BondChoice = BNodeChosen | TemplateChosen


# --- bonding ---


def _leaves_first(graph: nx.DiGraph) -> tuple[list[int], dict[int, int]]:
    """Class ids in data-flow order plus the strongly connected component of each."""
    condensed = nx.condensation(graph)
    components = condensed.nodes
    order = nx.lexicographical_topological_sort(
        condensed.reverse(copy=False), key=lambda s: min(components[s]["members"])
    )
    classes = [cid for s in order for cid in sorted(components[s]["members"])]
    return classes, condensed.graph["mapping"]


def select_bond_set(
    g: EGraph,
    groupkey: tuple[str, int],
    constraint: AncestryConstraint = AncestryConstraint(),
) -> list[tuple[int, tuple[int, ...]]]:
    """Eagerly picks classes holding ``op:width`` e-nodes that can be bonded.

    Candidates are scanned leaves first; one is kept only when it is neither an
    ancestor nor a descendant of a class kept earlier.
    """
    op, width = groupkey
    if OP_ARITY.get(op, 0) < 1:
        raise StructuralError(f"cannot bond {op!r}: it has no children")
    if not g.is_clean:
        raise NotRebuilt("select_bond_set needs a rebuilt e-graph")
    graph = g.class_graph()
    order, component = _leaves_first(graph)
    blocked = {g.find(c) for c in constraint.blocked}
    related: set[int] = set()
    kept = []
    for cid in order:
        if cid in blocked or cid in related or g.is_sealed(cid):
            continue
        node = next(
            (
                n
                for n in g.enodes_of(cid)
                if isinstance(n, ENode)
                and (n.op, n.width) == (op, width)
                and all(
                    not g.is_sealed(c) and component[g.find(c)] != component[cid]
                    for c in n.children
                )
            ),
            None,
        )
        if node is None:
            continue
        kept.append((cid, node.children))
        related |= nx.descendants(graph, cid) | nx.ancestors(graph, cid)
    if len(kept) < 2:
        logger.debug("group %s:%d has %d bondable classes", op, width, len(kept))
        return []
    return kept


def _parent_node(g: EGraph, parent: int, children: tuple[int, ...]) -> ENode:
    wanted = tuple(g.congruence_root(c) for c in children)
    for node in g.enodes_of(parent):
        if isinstance(node, ENode) and g.canonicalize(node).children == wanted:
            return node
    raise StructuralError(f"class {parent} has no e-node over children {children}")


def _snapshot(g: EGraph, parents: dict[int, int]) -> dict[Reference, int]:
    provenance: dict[Reference, int] = {}
    for eclass in g.congruence_classes():
        for node in eclass.nodes:
            if not isinstance(node, ENode):
                continue
            for slot, child in enumerate(node.children):
                parent = parents.get(g.find(child))
                if parent is not None:
                    provenance[ConsumerSlot(eclass.id, node, slot)] = parent
    for name, root in sorted(g.roots.items()):
        parent = parents.get(g.find(root))
        if parent is not None:
            provenance[OutputRef(name)] = parent
    return provenance


def bond(g: EGraph, bond_set: Sequence[tuple[int, Sequence[int]]]) -> BondRecord:
    """Merges the parents of ``bond_set`` with a fresh b-node into one class."""
    if not g.is_clean:
        raise NotRebuilt("bond needs a rebuilt e-graph")
    if len(bond_set) < 2:
        raise BondTooSmall(f"a bond needs at least 2 parents, got {len(bond_set)}")
    bond_map = BondMap.of(bond_set)
    canonical = {g.find(p): p for p in bond_map.parents}
    if len(canonical) != len(bond_map):
        raise StructuralError("bonded parents already share a class")

    nodes = [_parent_node(g, p, cs) for p, cs in bond_map.entries]
    if len({(n.op, n.width) for n in nodes}) != 1:
        raise StructuralError("bonded parents must share one operator and width")

    graph = g.class_graph()
    for p in canonical:
        related = nx.descendants(graph, p) & canonical.keys()
        if related:
            raise CyclicBond(
                f"class {canonical[p]} is an ancestor of bonded class "
                f"{canonical[min(related)]}"
            )

    provenance = _snapshot(g, canonical)
    bnode = BNode(g.fresh_symbol("bond"), bond_map, nodes[0].op, nodes[0].width)
    cid = g.add_bnode(bnode)
    for p in bond_map.parents:
        g.bond_merge(cid, p)
    record = BondRecord(bnode, g.find(cid), provenance)
    logger.info(
        "bonded %d %s:%d parents into class %d as %s",
        len(bond_map),
        bnode.op,
        bnode.width,
        record.bond_class,
        bnode.symbol,
    )
    return record


def unify_with_template(g: EGraph, rec: BondRecord, template: TemplateSpec) -> int:
    """Adds ``template`` over fresh advice leaves to the bond class."""
    bnode = rec.bnode
    if template.arity != bnode.bond_map.arity:
        raise StructuralError(
            f"template {template} has arity {template.arity}, "
            f"bond {bnode.symbol} has {bnode.bond_map.arity}"
        )
    if (template.op, template.width) != (bnode.op, bnode.width):
        raise StructuralError(
            f"template {template} does not match bonded {bnode.op}:{bnode.width}"
        )
    for _, children in bnode.bond_map.entries:
        for child, width in zip(children, template.advice_widths):
            if g.width_of(child) != width:
                raise StructuralError(
                    f"advice:{width} cannot stand for class {child} "
                    f"of width {g.width_of(child)}"
                )
    advice = tuple(
        g.add(ENode("advice", w, (), g.fresh_symbol("adv")))
        for w in template.advice_widths
    )
    tid = g.add(ENode(template.op, template.width, advice))
    g.merge(tid, rec.bond_class)
    g.rebuild()
    return g.find(rec.bond_class)


# --- dispersion ---


@dataclass(frozen=True)
class Dispersal:
    """Circuit nodes replacing a b-node and the node each parent routes to."""

    fragments: tuple[CircuitNode, ...]
    routes: dict[int, str]

    def route(self, rec: BondRecord, ref: Reference) -> str:
        """Circuit node that a recorded pre-bond reference now reads.

        Raises:
            IncompleteExtraction: ``ref`` is not in the provenance of ``rec``.
        """
        parent = rec.provenance.get(ref)
        if parent is None:
            raise IncompleteExtraction(f"{rec.bnode.symbol}: no provenance for {ref}")
        return self.routes[parent]


def disperse(
    rec: BondRecord,
    choice: BondChoice,
    extracted_children: Mapping[int, str],
    prefix: str | None = None,
) -> Dispersal:
    """Replaces the b-node of ``rec`` with data-flow edges.

    Args:
        extracted_children: circuit node name for every bond-map child.
        prefix: name prefix for the emitted nodes; defaults to the b-node symbol.

    Raises:
        IncompleteExtraction: a bond-map child has no extracted node.
    """
    bnode = rec.bnode
    prefix = prefix or bnode.symbol
    missing = sorted({c for c in bnode.children if c not in extracted_children})
    if missing:
        raise IncompleteExtraction(
            f"{bnode.symbol}: no extracted node for classes {missing}"
        )
    entries = bnode.bond_map.entries
    match choice:
        case BNodeChosen():
            fragments = [
                Op(
                    f"{prefix}_site{i}",
                    bnode.width,
                    bnode.op,
                    tuple(extracted_children[c] for c in children),
                )
                for i, (_, children) in enumerate(entries)
            ]
        case TemplateChosen(template=template, advice=advice):
            shared = Shared(f"{prefix}_alu", template.width, template.op, advice)
            labels = [label for label, _ in advice]
            fragments = [shared] + [
                UseSite(
                    f"{prefix}_use{i}",
                    template.width,
                    shared.name,
                    tuple(zip(labels, (extracted_children[c] for c in children))),
                )
                for i, (_, children) in enumerate(entries)
            ]
        case _:
            raise StructuralError(f"unknown bond choice {choice!r}")
    sites = [node for node in fragments if not isinstance(node, Shared)]
    routes = {parent: site.name for (parent, _), site in zip(entries, sites)}
    return Dispersal(tuple(fragments), routes)
