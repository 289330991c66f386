import random

import pytest

from bondsat.bond import (
    AncestryConstraint,
    BNode,
    BNodeChosen,
    BondMap,
    ConsumerSlot,
    OutputRef,
    TemplateChosen,
    TemplateSpec,
    bond,
    disperse,
    select_bond_set,
    unify_with_template,
)
from bondsat.circuit import Op, Shared, UseSite
from bondsat.egraph import EGraph, ENode, lower_circuit
from bondsat.equivalence import check_equivalence
from bondsat.errors import (
    BondTooSmall,
    CyclicBond,
    IncompleteExtraction,
    NotRebuilt,
    StructuralError,
)
from bondsat.extract import CostModel, extract_circuit
from bondsat.netlist import parse_circuit
from bondsat.rules import apply_rewrite, parse_rule

PAIR = (
    "(circuit (input a1 :3) (input a2 :3) (input b1 :3) (input b2 :3)"
    " (output oa (mul:3 a1 a2)) (output ob (mul:3 b1 b2)))"
)
CONSUMED_PAIR = (
    "(circuit (input a1 :3) (input a2 :3) (input b1 :3) (input b2 :3)"
    " (let pa (mul:3 a1 a2)) (let pb (mul:3 b1 b2))"
    " (output s (xor:3 pa pb)) (output oa pa))"
)


@pytest.fixture
def pair():
    """Two independent mul:3 parents a(a1, a2) and b(b1, b2)."""
    circuit = parse_circuit(PAIR)
    g = EGraph()
    roots = lower_circuit(g, circuit)
    g.rebuild()
    return circuit, g, roots


def _ids(g, *names):
    return tuple(g.lookup(ENode("input", 3, (), name)) for name in names)


def test_select_bond_set_finds_both_parents(pair):
    """Both unrelated mul:3 classes are bondable."""
    _, g, roots = pair
    a1, a2, b1, b2 = _ids(g, "a1", "a2", "b1", "b2")
    selected = select_bond_set(g, ("mul", 3))
    assert sorted(selected) == sorted(
        [(roots["oa"], (a1, a2)), (roots["ob"], (b1, b2))]
    )
    assert select_bond_set(g, ("add", 3)) == []


def test_bond_forms_one_class(pair):
    """Bonding merges both parents and the b-node into one sealed class."""
    _, g, roots = pair
    a, b = roots["oa"], roots["ob"]
    a1, a2, b1, b2 = _ids(g, "a1", "a2", "b1", "b2")
    record = bond(g, select_bond_set(g, ("mul", 3)))

    assert g.find(a) == g.find(b) == record.bond_class
    assert g.is_sealed(a)
    nodes = g.enodes_of(record.bond_class)
    assert record.bnode in nodes
    assert sum(isinstance(n, ENode) and n.op == "mul" for n in nodes) == 2
    assert record.bnode.bond_map.entries == ((a, (a1, a2)), (b, (b1, b2)))
    assert record.references_to(a) == [OutputRef("oa")]
    assert record.summary()["parents"] == 2


def test_bonded_classes_are_not_selected_again(pair):
    """A sealed class never becomes a bond parent."""
    _, g, _ = pair
    bond(g, select_bond_set(g, ("mul", 3)))
    assert select_bond_set(g, ("mul", 3)) == []


def test_blocked_classes_are_skipped(pair):
    """Blocked classes are left out of the bond set."""
    _, g, roots = pair
    constraint = AncestryConstraint(frozenset({roots["oa"]}))
    assert select_bond_set(g, ("mul", 3), constraint) == []


def test_disperse_bnode_chosen_materializes_each_site(pair):
    """BNodeChosen turns every parent back into its own operation."""
    _, g, roots = pair
    record = bond(g, select_bond_set(g, ("mul", 3)))
    a1, a2, b1, b2 = _ids(g, "a1", "a2", "b1", "b2")
    names = {a1: "a1", a2: "a2", b1: "b1", b2: "b2"}
    dispersal = disperse(record, BNodeChosen(), names)
    assert dispersal.fragments == (
        Op("bond0_site0", 3, "mul", ("a1", "a2")),
        Op("bond0_site1", 3, "mul", ("b1", "b2")),
    )
    assert dispersal.routes == {
        roots["oa"]: "bond0_site0",
        roots["ob"]: "bond0_site1",
    }


def test_bond_then_disperse_restores_the_circuit(pair):
    """Extraction after bonding is simulation-equal to the original circuit."""
    circuit, g, roots = pair
    record = bond(g, select_bond_set(g, ("mul", 3)))
    extracted = extract_circuit(g, roots, CostModel(), [record], circuit.inputs)
    assert check_equivalence(circuit, extracted).equal
    assert sum(isinstance(n, Op) and n.op == "mul" for n in extracted.nodes) == 2


def test_disperse_template_chosen_three_sites():
    """TemplateChosen yields one shared unit and a use site per parent."""
    g = EGraph()
    x = [g.add(ENode("input", 8, (), f"x{i}")) for i in range(6)]
    parents = [g.add(ENode("mul", 8, (x[2 * i], x[2 * i + 1]))) for i in range(3)]
    record = bond(g, [(p, (x[2 * i], x[2 * i + 1])) for i, p in enumerate(parents)])
    bond_class = unify_with_template(g, record, TemplateSpec("mul", 8, (8, 8)))
    assert bond_class == record.bond_class
    template = next(
        n
        for n in g.enodes_of(bond_class)
        if isinstance(n, ENode) and n.children[0] not in x
    )
    choice = TemplateChosen(template, (("p", 8), ("q", 8)))
    dispersal = disperse(record, choice, {c: f"x{c}" for c in x})
    shared = [f for f in dispersal.fragments if isinstance(f, Shared)]
    uses = [f for f in dispersal.fragments if isinstance(f, UseSite)]
    assert len(shared) == 1
    assert len(uses) == 3
    assert uses[0].bindings == (("p", f"x{x[0]}"), ("q", f"x{x[1]}"))


def test_disperse_needs_every_child(pair):
    """A missing bond-map child is an incomplete extraction."""
    _, g, _ = pair
    record = bond(g, select_bond_set(g, ("mul", 3)))
    with pytest.raises(IncompleteExtraction):
        disperse(record, BNodeChosen(), {})


def test_bond_errors(pair):
    """Bonding checks size, rebuild state and ancestry."""
    _, g, roots = pair
    a1, a2, b1, b2 = _ids(g, "a1", "a2", "b1", "b2")
    with pytest.raises(BondTooSmall):
        bond(g, [(roots["oa"], (a1, a2))])

    inner = roots["oa"]
    outer = g.add(ENode("mul", 3, (inner, b1)))
    with pytest.raises(CyclicBond):
        bond(g, [(inner, (a1, a2)), (outer, (inner, b1))])
    assert select_bond_set(g, ("mul", 3)) != []
    assert outer not in {p for p, _ in select_bond_set(g, ("mul", 3))}

    g.merge(a1, a2)
    with pytest.raises(NotRebuilt):
        bond(g, [(roots["oa"], (a1, a2)), (roots["ob"], (b1, b2))])


def test_bond_rejects_mixed_operators(pair):
    """All parents must share one operator and width."""
    _, g, roots = pair
    a1, a2, b1, b2 = _ids(g, "a1", "a2", "b1", "b2")
    other = g.add(ENode("add", 3, (b1, b2)))
    with pytest.raises(StructuralError, match="one operator"):
        bond(g, [(roots["oa"], (a1, a2)), (other, (b1, b2))])


def test_select_bond_set_rejects_leaf_groups(pair):
    """Leaf operators have no children to bond."""
    _, g, _ = pair
    with pytest.raises(StructuralError):
        select_bond_set(g, ("input", 3))


def test_unify_checks_template_shape(pair):
    """A template must match the bond's operator and arity."""
    _, g, _ = pair
    record = bond(g, select_bond_set(g, ("mul", 3)))
    with pytest.raises(StructuralError, match="arity"):
        unify_with_template(g, record, TemplateSpec("zext", 3, (3,)))
    with pytest.raises(StructuralError, match="does not match"):
        unify_with_template(g, record, TemplateSpec("add", 3, (3, 3)))


def test_twin_needs_no_bond(load_circuit):
    """After upcasting, both twin multipliers are already congruent."""
    g = EGraph()
    lower_circuit(g, load_circuit("twin_w32"))
    g.rebuild()
    rule = parse_rule(
        "(mul:bw ?a ?b) => (trunc:bw (mul:64 (zext:64 ?a) (zext:64 ?b)))"
    )
    apply_rewrite(g, rule)
    assert select_bond_set(g, ("mul", 64)) == []


def test_bnode_equality_follows_bond_map():
    """Equal bond-maps give equal b-nodes; any perturbation breaks equality."""
    rng = random.Random(0xB04D)
    for _ in range(1000):
        k = rng.randint(2, 5)
        arity = rng.randint(1, 3)
        parents = rng.sample(range(100), k)
        pairs = [(p, tuple(rng.randrange(100) for _ in range(arity))) for p in parents]
        shuffled = pairs[:]
        rng.shuffle(shuffled)
        left = BNode("bond0", BondMap.of(pairs), "mul", 8)
        right = BNode("bond7", BondMap.of(shuffled), "mul", 8)
        assert left == right
        assert hash(left) == hash(right)

        i = rng.randrange(k)
        parent, children = pairs[i]
        perturbed = pairs[:]
        if rng.random() < 0.5:
            j = rng.randrange(arity)
            moved = children[:j] + (children[j] + 100,) + children[j + 1 :]
            perturbed[i] = (parent, moved)
        else:
            perturbed[i] = (100 + parent, children)
        assert BNode("bond0", BondMap.of(perturbed), "mul", 8) != left


def test_bond_map_validation():
    """Bond-maps need two distinct parents of one arity."""
    with pytest.raises(BondTooSmall):
        BondMap.of([(1, (2, 3))])
    with pytest.raises(StructuralError, match="arity"):
        BondMap.of([(1, (2, 3)), (4, (5,))])
    with pytest.raises(StructuralError, match="distinct"):
        BondMap.of([(1, (2, 3)), (1, (5, 6))])


def test_every_recorded_reference_resolves_after_dispersal():
    """Consumer slots and outputs that read a parent read its dispersed site."""
    g = EGraph()
    roots = lower_circuit(g, parse_circuit(CONSUMED_PAIR))
    g.rebuild()
    record = bond(g, select_bond_set(g, ("mul", 3)))
    slots = [ref for ref in record.provenance if isinstance(ref, ConsumerSlot)]
    assert sorted(ref.slot for ref in slots) == [0, 1]
    assert record.site_of(OutputRef("oa")) == 0
    assert record.site_of(OutputRef("s")) is None

    unify_with_template(g, record, TemplateSpec("mul", 3, (3, 3)))
    template = next(
        n
        for n in g.enodes_of(record.bond_class)
        if isinstance(n, ENode) and n.children[0] not in record.bnode.children
    )
    names = {c: f"v{c}" for c in record.bnode.children}
    for choice in (BNodeChosen(), TemplateChosen(template, (("p", 3), ("q", 3)))):
        dispersal = disperse(record, choice, names)
        emitted = {f.name for f in dispersal.fragments}
        for ref, parent in record.provenance.items():
            assert dispersal.route(record, ref) in emitted
            assert dispersal.route(record, ref) == dispersal.routes[parent]
        with pytest.raises(IncompleteExtraction):
            dispersal.route(record, OutputRef("s"))

    extracted = extract_circuit(g, roots, CostModel(), [record])
    xor = next(n for n in extracted.nodes if isinstance(n, Op) and n.op == "xor")
    assert xor.operands == ("bond0_site0", "bond0_site1")
    assert dict(extracted.outputs)["oa"] == "bond0_site0"
