"""E-graph with congruence closure, extended to hold b-nodes.

Class ids are dense integers that are never reused. Two union-find layers are
kept over them:

* the congruence layer records rewrite merges and congruence merges; the
  hashcons and ``rebuild`` work on it, and
* the public layer (``find``) additionally records bond merges.

A bond therefore joins its parents into one public class while their consumers
keep pointing at distinct congruence classes, so no upward merge ever flows
through a b-node. Public classes that hold a b-node are *sealed*.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Hashable, Mapping
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, TypeAlias

import networkx as nx

from .circuit import (
    MAX_WIDTH,
    OP_ARITY,
    Advice,
    Circuit,
    Const,
    Input,
    Op,
    Shared,
    UseSite,
)
from .errors import StructuralError

if TYPE_CHECKING:
    from .bond import BNode

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ENode:
    """An operator symbol with a width and ordered child classes.

    Leaves carry a payload: the input name, constant value or advice label.
    """

    op: str
    width: int
    children: tuple[int, ...] = ()
    payload: int | str | None = None

    def sort_key(self) -> tuple:
        return (self.op, self.width, self.children, str(self.payload))

    def __str__(self) -> str:
        if self.payload is not None:
            return f"{self.op}:{self.width} {self.payload}"
        return f"{self.op}:{self.width}"


Node: TypeAlias = "ENode | BNode"


@dataclass
class EClass:
    id: int
    width: int
    nodes: dict[Hashable, None] = field(default_factory=dict)
    parents: list[tuple[ENode, int]] = field(default_factory=list)


class EGraph:
    """E-graph over word-level operators with support for bond nodes.

    Two union-find layers share one id space. The congruence layer records
    rewrite merges and drives congruence closure; the public layer also
    records bond merges, so bonding never triggers upward congruence merges.
    A class holding a b-node is sealed.

    Attributes:
        roots: output name to the class lowered for it by ``lower_circuit``.

    Args:
        arities: operator arities used to check every added e-node.
    """

    def __init__(self, arities: Mapping[str, int] = OP_ARITY):
        self._arities = dict(arities)
        self._congruence: list[int] = []
        self._public: list[int] = []
        self._classes: dict[int, EClass] = {}
        self._members: dict[int, set[int]] = {}
        self._sealed: set[int] = set()
        self._hashcons: dict[ENode, int] = {}
        self._pending: list[int] = []
        self._symbols = itertools.count()
        self.roots: dict[str, int] = {}

    # --- ids ---

    def _check(self, a: int) -> None:
        if not isinstance(a, int) or not 0 <= a < len(self._congruence):
            raise StructuralError(f"unknown e-class id {a!r}")

    @staticmethod
    def _root(parent: list[int], a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def find(self, a: int) -> int:
        """Canonical public id of ``a``."""
        self._check(a)
        return self._root(self._public, a)

    def congruence_root(self, a: int) -> int:
        """Canonical id of ``a`` in the congruence layer (ignores bonds)."""
        self._check(a)
        return self._root(self._congruence, a)

    def fresh_symbol(self, prefix: str) -> str:
        return f"{prefix}{next(self._symbols)}"

    # --- queries ---

    @property
    def is_clean(self) -> bool:
        return not self._pending

    @property
    def id_count(self) -> int:
        """Ids issued so far; every later class gets an id at least this large."""
        return len(self._congruence)

    @property
    def class_count(self) -> int:
        return len(self._members)

    @property
    def node_count(self) -> int:
        return sum(len(eclass.nodes) for eclass in self._classes.values())

    def class_ids(self) -> list[int]:
        return sorted(self._members)

    def members(self, a: int) -> list[int]:
        """Congruence classes making up the public class of ``a``."""
        return sorted(self._members[self.find(a)])

    def congruence_classes(self) -> list[EClass]:
        return [self._classes[cid] for cid in sorted(self._classes)]

    def congruence_class(self, a: int) -> EClass:
        return self._classes[self.congruence_root(a)]

    def enodes_of(self, a: int) -> list[Node]:
        """All e-nodes and b-nodes of the public class of ``a``."""
        return [
            node for cid in self.members(a) for node in self._classes[cid].nodes
        ]

    def width_of(self, a: int) -> int:
        return self.congruence_class(a).width

    def is_sealed(self, a: int) -> bool:
        return self.find(a) in self._sealed

    def lookup(self, node: ENode) -> int | None:
        hit = self._hashcons.get(self.canonicalize(node))
        return None if hit is None else self.find(hit)

    def bnodes(self) -> list[tuple[int, BNode]]:
        return [
            (eclass.id, node)
            for eclass in self.congruence_classes()
            for node in eclass.nodes
            if not isinstance(node, ENode)
        ]

    def canonicalize(self, node: ENode) -> ENode:
        children = tuple(self._root(self._congruence, c) for c in node.children)
        if children == node.children:
            return node
        return ENode(node.op, node.width, children, node.payload)

    def class_graph(self) -> nx.DiGraph:
        """Public classes with an edge from each class to every child class."""
        graph = nx.DiGraph()
        graph.add_nodes_from(self.class_ids())
        for eclass in self._classes.values():
            owner = self.find(eclass.id)
            for node in eclass.nodes:
                graph.add_edges_from((owner, self.find(c)) for c in node.children)
        return graph

    # --- mutation ---

    def _new_class(self, width: int, node: Hashable) -> int:
        cid = len(self._congruence)
        self._congruence.append(cid)
        self._public.append(cid)
        self._classes[cid] = EClass(cid, width, {node: None})
        self._members[cid] = {cid}
        return cid

    def add(self, node: ENode) -> int:
        """Adds an e-node, returning the existing class on a hashcons hit.

        The returned id is a congruence root; use ``find`` for the public class.
        """
        arity = self._arities.get(node.op)
        if arity is None:
            raise StructuralError(f"unknown operator {node.op!r}")
        if len(node.children) != arity:
            raise StructuralError(
                f"{node.op} takes {arity} children, got {len(node.children)}"
            )
        if not isinstance(node.width, int) or not 1 <= node.width <= MAX_WIDTH:
            raise StructuralError(f"width {node.width!r} out of range")
        for child in node.children:
            self._check(child)
        canon = self.canonicalize(node)
        hit = self._hashcons.get(canon)
        if hit is not None:
            return self.congruence_root(hit)
        cid = self._new_class(node.width, canon)
        self._hashcons[canon] = cid
        for child in set(canon.children):
            self._classes[child].parents.append((canon, cid))
        return cid

    def add_bnode(self, bnode: BNode) -> int:
        """Puts ``bnode`` in a fresh sealed class; b-nodes bypass the hashcons."""
        cid = self._new_class(bnode.width, bnode)
        self._sealed.add(cid)
        return cid

    def merge(self, a: int, b: int) -> int:
        """Unions two classes; congruence is restored by the next ``rebuild``."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        ca, cb = self.congruence_root(a), self.congruence_root(b)
        if self._classes[ca].width != self._classes[cb].width:
            raise StructuralError(
                f"cannot merge classes of width {self._classes[ca].width} "
                f"and {self._classes[cb].width}"
            )
        self._union_congruence(ca, cb)
        return self.find(a)

    def bond_merge(self, a: int, b: int) -> int:
        """Unions two classes in the public layer only."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        return self._union_public(ra, rb)

    def _union_public(self, a: int, b: int) -> int:
        # Sealed roots win so the b-node's class stays the bond class id.
        if (b in self._sealed, -b) > (a in self._sealed, -a):
            a, b = b, a
        self._public[b] = a
        self._members[a] |= self._members.pop(b)
        if b in self._sealed:
            self._sealed.discard(b)
            self._sealed.add(a)
        return a

    def _union_congruence(self, a: int, b: int) -> int:
        winner, loser = (a, b) if a < b else (b, a)
        public_winner = self._root(self._public, winner)
        public_loser = self._root(self._public, loser)
        self._congruence[loser] = winner
        kept, gone = self._classes[winner], self._classes.pop(loser)
        kept.nodes.update(gone.nodes)
        kept.parents.extend(gone.parents)
        self._members[public_loser].discard(loser)
        if public_winner != public_loser:
            self._union_public(public_winner, public_loser)
        self._pending.append(winner)
        return winner

    # --- congruence closure ---

    def rebuild(self) -> int:
        """Restores the hashcons and congruence invariants.

        Returns:
            The number of congruence merges performed.
        """
        merges = 0
        while True:
            while self._pending:
                todo = sorted({self.congruence_root(c) for c in self._pending})
                self._pending.clear()
                for cid in todo:
                    merges += self._repair(self.congruence_root(cid))
            merges += self._refresh()
            if not self._pending:
                break
        if merges:
            logger.debug("rebuild performed %d congruence merges", merges)
        return merges

    def _repair(self, cid: int) -> int:
        merges = 0
        eclass = self._classes[cid]
        repaired: dict[ENode, int] = {}
        for node, parent in list(eclass.parents):
            canon = self.canonicalize(node)
            parent = self.congruence_root(parent)
            for other in (repaired.get(canon), self._hashcons.get(canon)):
                if other is None:
                    continue
                other = self.congruence_root(other)
                if other != parent:
                    parent = self._union_congruence(other, parent)
                    merges += 1
            self._hashcons[canon] = parent
            repaired[canon] = parent
        if self.congruence_root(cid) == cid:
            eclass.parents = [
                (node, self.congruence_root(parent))
                for node, parent in repaired.items()
            ]
        return merges

    def _refresh(self) -> int:
        """Canonicalizes every node set and rebuilds the hashcons from scratch."""
        table: dict[ENode, int] = {}
        conflicts = []
        for cid, eclass in self._classes.items():
            eclass.nodes = {
                (self.canonicalize(n) if isinstance(n, ENode) else n): None
                for n in eclass.nodes
            }
            for node in eclass.nodes:
                if isinstance(node, ENode):
                    owner = table.setdefault(node, cid)
                    if owner != cid:
                        conflicts.append((owner, cid))
        self._hashcons = table
        merges = 0
        for a, b in conflicts:
            ra, rb = self.congruence_root(a), self.congruence_root(b)
            if ra != rb:
                self._union_congruence(ra, rb)
                merges += 1
        return merges


def lower_circuit(g: EGraph, circuit: Circuit) -> dict[str, int]:
    """Adds every node of ``circuit`` to ``g`` and records its outputs as roots.

    A use site is loaded as its shared operation applied to the bound operands.
    """
    ids: dict[str, int] = {}
    for node in circuit.nodes:
        match node:
            case Input(name=name, width=width):
                ids[name] = g.add(ENode("input", width, (), name))
            case Const(width=width, value=value):
                ids[node.name] = g.add(ENode("const", width, (), value))
            case Advice(width=width, label=label):
                ids[node.name] = g.add(ENode("advice", width, (), label))
            case Op(op=op, width=width, operands=operands):
                children = tuple(ids[ref] for ref in operands)
                ids[node.name] = g.add(ENode(op, width, children))
            case Shared():
                continue
            case UseSite(shared=shared_name, bindings=bindings):
                shared = circuit.by_name[shared_name]
                bound = dict(bindings)
                children = tuple(ids[bound[label]] for label, _ in shared.advice)
                ids[node.name] = g.add(ENode(shared.op, shared.width, children))
    roots = {out: ids[ref] for out, ref in circuit.outputs}
    g.roots.update(roots)
    return roots
