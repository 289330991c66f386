import itertools
import random

import networkx as nx
import pytest

from bondsat.bond import TemplateSpec, bond, select_bond_set
from bondsat.egraph import EGraph, ENode, lower_circuit
from bondsat.errors import ConfigError, RuleParseError, StageError
from bondsat.rules import (
    Bonding,
    PNode,
    PVar,
    Unification,
    apply_rewrite,
    default_rules,
    ematch,
    parse_rule,
    parse_rules,
    resolve_value,
    split_stages,
)
from bondsat.saturation import (
    Limits,
    StopReason,
    run_staged_pipeline,
    saturate,
)
from tests.conftest import random_circuit

UPCAST_MUL = "(mul:bw ?a ?b) => (trunc:bw (mul:64 (zext:64 ?a) (zext:64 ?b)))"
ADD_COMM = "(add:?w ?a ?b) => (add:?w ?b ?a)"


@pytest.fixture
def g():
    return EGraph()


def leaf(g: EGraph, name: str, width: int = 8) -> int:
    return g.add(ENode("input", width, (), name))


def const(g: EGraph, value: int, width: int = 8) -> int:
    return g.add(ENode("const", width, (), value))


def test_parse_generic_rule():
    """The upcast rule parses into width-variable patterns."""
    rule = parse_rule(UPCAST_MUL)
    assert rule.is_generic
    assert rule.lhs == PNode("mul", "bw", (PVar("?a"), PVar("?b")))
    assert rule.rhs.op == "trunc"
    assert rule.rhs.width == "bw"
    assert rule.rhs.children[0].width == 64


def test_parse_bonding_and_unification_rules():
    """Gather/bond and unify rules become stage-tagged rewrites."""
    gather = parse_rule("(let Muls (mul:64)...) => (let Bond (bond Muls...))")
    assert gather.stage == Bonding(("mul", 64), "Muls", "Bond")
    unify = parse_rule("(unify Bond (mul:64 advice:64 advice:64))")
    assert unify.stage == Unification("Bond", TemplateSpec("mul", 64, (64, 64)))


def test_default_rules_split_into_stages():
    """The shipped rule set has generic, bonding and unification rules."""
    generic, bonding, unification = split_stages(default_rules())
    assert len(generic) == 10
    assert [r.stage.groupkey for r in bonding] == [("mul", 64), ("add", 64)]
    assert [r.stage.bond_name for r in unification] == ["Bond", "AddBond"]


@pytest.mark.parametrize(
    "text, message",
    [
        ("(div:8 ?a ?b) => ?a", "unknown operator"),
        ("(add:8 ?a ?b) => ?c", "unbound variable"),
        ("(add:8 ?a ?b) => (add ?a ?b)", "needs a width"),
        ("(add:8 ?a) => ?a", "takes 2 operands"),
        ("(add:8 ?a ?b) => (input:8)", "cannot appear on the right"),
        ("(let M (mul:bw)...) => (let B (bond M...))", "literal width"),
        ("(unify B (mul:64 advice:64))", "advice leaves"),
        ("(add:8 ?a ?b)", "expected LHS => RHS"),
    ],
)
def test_parse_errors(text, message):
    """Malformed rules raise RuleParseError carrying the rule text."""
    with pytest.raises(RuleParseError, match=message) as info:
        parse_rule(text)
    assert info.value.text == text


def test_parse_rules_reports_line_numbers():
    """Errors in a rule file name the offending line."""
    with pytest.raises(RuleParseError, match="line 3"):
        parse_rules(f"; comment\n{ADD_COMM}\n(add:8 ?a ?b) => ?z\n")


def test_resolve_value_folds_and_masks():
    """Right-hand constants fold with wrap-around and are masked."""
    assert resolve_value(("add", "$x", "$y"), 4, {"$x": 9, "$y": 9}) == 2
    assert resolve_value("$x", 4, {"$x": 0xAB}) == 0xB
    assert resolve_value(300, 8, {}) == 44


def test_ematch_on_upcast_twin(load_circuit):
    """Both twin sites are congruent, so mul:64 matches once."""
    g = EGraph()
    lower_circuit(g, load_circuit("twin_w32"))
    g.rebuild()
    apply_rewrite(g, parse_rule(UPCAST_MUL))
    matches = ematch(g, PNode("mul", 64, (PVar("?a"), PVar("?b"))))
    assert len(matches) == 1


def test_ematch_binds_width_and_value_variables(g):
    """Width and value variables bind consistently across a pattern."""
    x = leaf(g, "x")
    s = g.add(ENode("add", 8, (x, const(g, 3))))
    rule = parse_rule("(add:?w ?a (const:?w $c)) => ?a")
    [match] = ematch(g, rule.lhs)
    assert match.root == s
    assert match.subst == {"?a": x}
    assert match.widths == {"?w": 8}
    assert match.values == {"$c": 3}


def test_commutativity_adds_a_node_without_merging(g):
    """Commuting add(x, y) adds one node and merges no old classes."""
    x, y = leaf(g, "x"), leaf(g, "y")
    s = g.add(ENode("add", 8, (x, y)))
    before = g.node_count
    rule = parse_rule(ADD_COMM)
    assert apply_rewrite(g, rule) == 0
    assert g.node_count == before + 1
    assert g.find(g.lookup(ENode("add", 8, (y, x)))) == g.find(s)
    assert apply_rewrite(g, rule) == 0
    assert g.node_count == before + 1


def test_identity_rule_merges_existing_classes(g):
    """x + 0 = x merges two classes that already existed."""
    x = leaf(g, "x")
    s = g.add(ENode("add", 8, (x, const(g, 0))))
    assert apply_rewrite(g, parse_rule("(add:?w ?a (const:?w 0)) => ?a")) == 1
    assert g.find(s) == g.find(x)


def test_constant_folding(g):
    """Constant sums fold into a masked constant."""
    s = g.add(ENode("add", 8, (const(g, 200), const(g, 100))))
    rule = parse_rule(
        "(add:?w (const:?w $x) (const:?w $y)) => (const:?w (add $x $y))"
    )
    apply_rewrite(g, rule)
    assert g.find(s) == g.lookup(ENode("const", 8, (), 44))


def test_ill_typed_instances_are_skipped(g):
    """A right-hand side that fails width checks is not added."""
    x = leaf(g, "x")
    g.add(ENode("zext", 16, (x,)))
    before = g.node_count
    assert apply_rewrite(g, parse_rule("(zext:?w ?a) => (trunc:?w ?a)")) == 0
    assert g.node_count == before


def test_sealed_classes_never_match(g):
    """Bonded classes are invisible to e-matching."""
    xs = [leaf(g, f"x{i}") for i in range(4)]
    g.add(ENode("mul", 8, (xs[0], xs[1])))
    g.add(ENode("mul", 8, (xs[2], xs[3])))
    pattern = PNode("mul", 8, (PVar("?a"), PVar("?b")))
    assert len(ematch(g, pattern)) == 2
    bond(g, select_bond_set(g, ("mul", 8)))
    assert ematch(g, pattern) == []


def test_stage_errors(g):
    """Bonding and unification rules cannot be applied as rewrites."""
    _, bonding, unification = split_stages(default_rules())
    with pytest.raises(StageError):
        apply_rewrite(g, bonding[0])
    with pytest.raises(StageError):
        saturate(g, unification)
    with pytest.raises(StageError):
        run_staged_pipeline(g, [], unification, bonding)


def test_limits_must_be_positive():
    """Zero or negative limits are configuration errors."""
    with pytest.raises(ConfigError, match="iters"):
        Limits(iters=0)
    with pytest.raises(ConfigError, match="nodes"):
        Limits(nodes=-5)


def test_twin_saturates(load_circuit):
    """Generic rules reach a fixpoint on the twin circuit within default limits."""
    g = EGraph()
    lower_circuit(g, load_circuit("twin_w32"))
    g.rebuild()
    generic, _, _ = split_stages(default_rules())
    report = saturate(g, generic)
    assert report.stop_reason is StopReason.SATURATED
    assert report.iterations <= Limits().iters
    assert report.merges_per_iteration[-1] == 0
    assert report.to_dict()["stop_reason"] == "saturated"


def test_explosive_rules_hit_the_node_limit(g):
    """Associativity plus commutativity on a 6-term sum exceeds 500 nodes."""
    rules = parse_rules(
        "\n".join(
            [
                ADD_COMM,
                "(add:?w (add:?w ?a ?b) ?c) => (add:?w ?a (add:?w ?b ?c))",
                "(add:?w ?a (add:?w ?b ?c)) => (add:?w (add:?w ?a ?b) ?c)",
            ]
        )
    )
    total = leaf(g, "x0")
    for i in range(1, 6):
        total = g.add(ENode("add", 8, (total, leaf(g, f"x{i}"))))
    report = saturate(g, rules, Limits(iters=100, nodes=500, millis=600_000))
    assert report.stop_reason is StopReason.NODE_LIMIT
    assert report.node_count > 500


def test_iteration_limit(load_circuit):
    """A single iteration stops with iter_limit."""
    g = EGraph()
    lower_circuit(g, load_circuit("twin_w32"))
    g.rebuild()
    generic, _, _ = split_stages(default_rules())
    report = saturate(g, generic, Limits(iters=1))
    assert report.stop_reason is StopReason.ITER_LIMIT
    assert report.iterations == 1


def test_pipeline_bonds_three_sites_once(load_circuit):
    """The 3-site circuit bonds its multipliers; a rerun adds no b-node."""
    g = EGraph()
    lower_circuit(g, load_circuit("three_site_w32"))
    g.rebuild()
    stages = split_stages(default_rules())
    _, records = run_staged_pipeline(g, *stages)
    [mul] = [r for r in records if r.bnode.op == "mul"]
    assert len(mul.bnode.bond_map) == 3
    assert mul.bnode.width == 64
    assert g.is_clean

    count = len(g.bnodes())
    _, again = run_staged_pipeline(g, *stages)
    assert again == []
    assert len(g.bnodes()) == count
    for _, bnode in g.bnodes():
        assert not any(g.is_sealed(c) for c in bnode.children)


def test_repeated_variables_need_the_same_class(g):
    """(add:32 ?a ?a) matches add(x, x) but not add(x, y) until x = y."""
    x, y = leaf(g, "x", 32), leaf(g, "y", 32)
    twice = g.add(ENode("add", 32, (x, x)))
    g.add(ENode("add", 32, (x, y)))
    g.rebuild()
    pattern = PNode("add", 32, (PVar("?a"), PVar("?a")))
    [match] = ematch(g, pattern)
    assert match.root == twice
    assert match.subst == {"?a": x}

    g.merge(x, y)
    g.rebuild()
    assert [m.root for m in ematch(g, pattern)] == [g.find(twice)]


MATCH_PATTERNS = [
    PNode("add", "?w", (PVar("?a"), PVar("?b"))),
    PNode("mul", 8, (PVar("?a"), PNode("add", 8, (PVar("?b"), PVar("?c"))))),
    PNode("xor", "?w", (PVar("?a"), PVar("?a"))),
    PNode("add", "?w", (PNode("const", "?w", value="$x"), PVar("?a"))),
    PNode("sub", 8, (PVar("?a"), PNode("sub", 8, (PVar("?a"), PVar("?b"))))),
    PNode("and", None, (PNode("or", None, (PVar("?a"), PVar("?b"))), PVar("?c"))),
]


def _pattern_depth(p) -> int:
    if isinstance(p, PVar):
        return 0
    return 1 + max((_pattern_depth(c) for c in p.children), default=0)


def _terms(g, cid, depth):
    """Terms of ``cid`` unfolded ``depth`` levels; ``(class, None)`` is a hole."""
    cid = g.find(cid)
    yield cid, None
    if depth == 0:
        return
    for node in g.enodes_of(cid):
        kids = [list(_terms(g, c, depth - 1)) for c in node.children]
        for chosen in itertools.product(*kids):
            yield cid, (node, chosen)


def _bind_once(table, name, value):
    if table.get(name, value) != value:
        return None
    return {**table, name: value}


def _match_term(p, term, env):
    """Syntactic match of ``p`` against one unfolded term."""
    cid, body = term
    classes, widths, values = env
    if isinstance(p, PVar):
        classes = _bind_once(classes, p.name, cid)
        return None if classes is None else (classes, widths, values)
    if body is None:
        return None
    node, kids = body
    if node.op != p.op or (isinstance(p.width, int) and p.width != node.width):
        return None
    if isinstance(p.value, int) and p.value != node.payload:
        return None
    if isinstance(p.width, str):
        widths = _bind_once(widths, p.width, node.width)
    if isinstance(p.value, str) and widths is not None:
        values = _bind_once(values, p.value, node.payload)
    if widths is None or values is None:
        return None
    env = (classes, widths, values)
    for child, kid in zip(p.children, kids):
        env = _match_term(child, kid, env)
        if env is None:
            return None
    return env


def _enumerated_matches(g, p):
    found = set()
    for cid in g.class_ids():
        for term in _terms(g, cid, _pattern_depth(p)):
            env = _match_term(p, term, ({}, {}, {}))
            if env is not None:
                found.add((cid, *(tuple(sorted(table.items())) for table in env)))
    return found


def test_ematch_finds_every_term_match():
    """ematch agrees with matching every unfolded term on small graphs."""
    rng = random.Random(0xB04D)
    checked = 0
    for _ in range(60):
        g = EGraph()
        lower_circuit(g, random_circuit(rng, width=8, max_ops=4))
        g.rebuild()
        ids = g.class_ids()
        for _ in range(rng.randint(0, 2)):
            left, right = rng.sample(ids, 2)
            g.merge(left, right)
        g.rebuild()
        graph = nx.condensation(g.class_graph())
        if len(g.class_ids()) > 8 or nx.dag_longest_path_length(graph) > 3:
            continue
        checked += 1
        for p in MATCH_PATTERNS:
            found = {m.key() for m in ematch(g, p)}
            assert found == _enumerated_matches(g, p), str(p)
    assert checked > 20
