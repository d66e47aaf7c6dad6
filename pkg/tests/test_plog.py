import itertools

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from icorpp.plog import (InconsistentEvidenceError, PlogSyntaxError, ProbabilityError,
                         StratificationError, do, enumerate_worlds, ground, marginals, obs,
                         parse_evidence, parse_literal, parse_program, query)

COFFEE = """
time = {morning, noon, evening}.
item = {coffee, sandwich, soda}.
curr_time : time.
req_item : item.
random(curr_time).
random(req_item).
pr(req_item=coffee | curr_time=morning) = 0.8.
"""


def gp_of(text):
    return ground(parse_program(text))


def test_conditional_pr_atom_and_uniform_remainder():
    gp = gp_of(COFFEE)
    assert query(gp, parse_literal("req_item=coffee"), [obs("curr_time=morning")]) == pytest.approx(0.8)
    # the unassigned 0.2 is split evenly over the other two items
    assert query(gp, parse_literal("req_item=soda"), [obs("curr_time=morning")]) == pytest.approx(0.1)
    assert query(gp, parse_literal("req_item=coffee"), [obs("curr_time=noon")]) == pytest.approx(1 / 3)
    # marginal over the uniform time
    assert query(gp, parse_literal("req_item=coffee")) == pytest.approx((0.8 + 2 / 3) / 3)


def test_observation_vs_intervention():
    gp = gp_of(COFFEE)
    # seeing coffee is evidence about the time; forcing coffee is not
    p_obs = query(gp, parse_literal("curr_time=morning"), [obs("req_item=coffee")])
    p_do = query(gp, parse_literal("curr_time=morning"), [do("req_item=coffee")])
    assert p_obs == pytest.approx(0.8 / (0.8 + 2 / 3))
    assert p_do == pytest.approx(1 / 3)


def test_default_is_defeated_by_a_fact():
    base = """
    weather = {sunny, cloudy}.
    cell = {c0, c1}.
    w : weather.
    near_window : cell -> boolean.
    sunny : cell -> boolean.
    near_window(c0).
    sunny(C) :- near_window(C), w=sunny, not -sunny(C).
    random(w).
    """
    assert query(gp_of(base), parse_literal("sunny(c0)"), [obs("w=sunny")]) == pytest.approx(1.0)
    assert query(gp_of(base + "-sunny(c0).\n"), parse_literal("sunny(c0)"), [obs("w=sunny")]) == 0.0
    assert query(gp_of(base), parse_literal("sunny(c1)")) == 0.0


def test_dynamic_range():
    text = """
    person = {alice, bob, carol}.
    paid : person -> boolean.
    who : person.
    paid(alice). paid(bob).
    random(who : {P : paid(P)}).
    """
    m = marginals(gp_of(text), ["who"])
    assert m == pytest.approx({("alice",): 0.5, ("bob",): 0.5})


def test_impossible_observation_raises():
    with pytest.raises(InconsistentEvidenceError):
        query(gp_of(COFFEE), parse_literal("req_item=coffee"),
              [obs("curr_time=noon"), obs("curr_time=morning")])


def test_pr_atoms_over_one_rejected():
    text = COFFEE + "pr(req_item=soda | curr_time=morning) = 0.5.\n"
    with pytest.raises(ProbabilityError):
        query(gp_of(text), parse_literal("req_item=coffee"))


def test_syntax_error_has_location():
    with pytest.raises(PlogSyntaxError) as exc:
        parse_program("item = {coffee, tea.\n")
    assert "1" in str(exc.value)


def test_negative_cycle_is_not_stratified():
    with pytest.raises(StratificationError):
        gp_of("p : boolean.\nq : boolean.\np :- not q.\nq :- not p.\n")


def test_parse_evidence_forms():
    assert str(parse_evidence("obs(curr_time=morning)")) == "obs(curr_time=morning)"
    assert parse_evidence(" do(req_item=coffee) ").kind == "do"


def test_worlds_sum_to_one():
    total = sum(p for _, p in enumerate_worlds(gp_of(COFFEE)))
    assert total == pytest.approx(1.0, abs=1e-12)


# -- brute-force joint-table oracle ----------------------------------------------------------

@st.composite
def random_programs(draw):
    """Random attributes a0..a(n-1), each with at most one earlier parent and
    pr-atoms conditioned on it, plus one derived boolean ``d``."""
    n = draw(st.integers(2, 7))
    sizes = [draw(st.integers(2, 3)) for _ in range(n)]
    parents, prs = [], []
    for i in range(n):
        par = draw(st.one_of(st.none(), st.integers(0, i - 1))) if i else None
        parents.append(par)
        table = {}
        conds = [None] if par is None else range(sizes[par])
        for cond in conds:
            if not draw(st.booleans()):
                continue
            # assign probabilities to a subset of values, total < 1
            k = draw(st.integers(1, sizes[i] - 1))
            vals = draw(st.permutations(range(sizes[i])))[:k]
            ws = [draw(st.integers(1, 9)) for _ in vals]
            scale = draw(st.integers(sum(ws) + 1, sum(ws) + 10))
            table[cond] = {v: w / scale for v, w in zip(vals, ws)}
        prs.append(table)
    body = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, 2)), min_size=1, max_size=3,
                         unique_by=lambda t: t[0]))
    body = [(i, v % sizes[i]) for i, v in body]
    return sizes, parents, prs, body


def program_text(sizes, parents, prs, body):
    lines = []
    for i, k in enumerate(sizes):
        lines.append(f"s{i} = {{{', '.join(f'v{j}' for j in range(k))}}}.")
        lines.append(f"a{i} : s{i}.")
        lines.append(f"random(a{i}).")
        for cond, table in prs[i].items():
            for v, p in table.items():
                given_ = "" if cond is None else f" | a{parents[i]}=v{cond}"
                lines.append(f"pr(a{i}=v{v}{given_}) = {p!r}.")
    lines.append("d : boolean.")
    lines.append("d :- " + ", ".join(f"a{i}=v{v}" for i, v in body) + ".")
    return "\n".join(lines) + "\n"


def joint_table(sizes, parents, prs, intervened=None):
    intervened = intervened or {}
    table = {}
    for assign in itertools.product(*[range(k) for k in sizes]):
        p = 1.0
        for i, v in enumerate(assign):
            if i in intervened:
                p *= 1.0 if v == intervened[i] else 0.0
                continue
            cond = None if parents[i] is None else assign[parents[i]]
            fixed = prs[i].get(cond, {})
            if v in fixed:
                p *= fixed[v]
            else:
                p *= (1.0 - sum(fixed.values())) / (sizes[i] - len(fixed))
        table[assign] = p
    return table


@settings(max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(random_programs(), st.data())
def test_engine_matches_brute_force_joint_table(prog, data):
    sizes, parents, prs, body = prog
    gp = gp_of(program_text(*prog))
    table = joint_table(*prog)
    # enumerate_worlds reproduces every joint entry with nonzero mass
    dist = {tuple(int(w.value(f"a{i}")[1:]) for i in range(len(sizes))): p for w, p in enumerate_worlds(gp)}
    for assign, p in table.items():
        assert dist.get(assign, 0.0) == pytest.approx(p, abs=1e-9)
    d_true = sum(p for a, p in table.items() if all(a[i] == v for i, v in body))
    assert query(gp, parse_literal("d")) == pytest.approx(d_true, abs=1e-9)

    # conditioning on an observation
    oi = data.draw(st.integers(0, len(sizes) - 1))
    ov = data.draw(st.integers(0, sizes[oi] - 1))
    z = sum(p for a, p in table.items() if a[oi] == ov)
    if z > 0:
        num = sum(p for a, p in table.items() if a[oi] == ov and all(a[i] == v for i, v in body))
        got = query(gp, parse_literal("d"), [obs(f"a{oi}=v{ov}")])
        assert got == pytest.approx(num / z, abs=1e-9)

    # intervention cuts the attribute loose from its parent
    cut = joint_table(sizes, parents, prs, intervened={oi: ov})
    want = sum(p for a, p in cut.items() if all(a[i] == v for i, v in body))
    assert query(gp, parse_literal("d"), [do(f"a{oi}=v{ov}")]) == pytest.approx(want, abs=1e-9)
