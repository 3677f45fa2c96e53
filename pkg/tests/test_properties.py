import math
from fractions import Fraction

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from genslate.audit import max_violation_ratio, max_weight_balanced_assignment
from genslate.core import Instance, Slate, Statement, is_balanced, quota, support
from genslate.experiments.report import emit_report, read_report
from genslate.llm.generation import word_count
from genslate.llm.scoring import combine
from genslate.process import ProcessConfig, make_config, run_process
from genslate.synthetic import ErrorModel, SyntheticEnv, exact_queries, noisy_queries, true_utility

small = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@given(st.integers(0, 50), st.integers(1, 50), st.integers(1, 50))
def test_quota_monotone(c, n, B):
    q = quota(c, n, B)
    assert quota(c + 1, n, B) >= q and quota(c, n + 1, B) >= q and quota(c, n, B + 1) <= q
    assert quota(B, n, B) == n
    assert q == math.ceil(Fraction(c * n, B))


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=12), st.integers(-6, 6), st.data())
def test_support_monotone(vals, level, data):
    agents = list(range(len(vals)))
    sub = data.draw(st.lists(st.sampled_from(agents), unique=True))
    u = lambda i, s: vals[i]
    s0 = Statement(0, None, 1)
    assert support(s0, agents, level + 1, u) <= support(s0, agents, level, u)
    assert support(s0, sub, level, u) <= support(s0, agents, level, u)


def _env(data, n_max=6, issues=2, b=3):
    n = data.draw(st.integers(1, n_max))
    ideals = data.draw(st.lists(st.lists(st.integers(1, b), min_size=issues, max_size=issues),
                                min_size=n, max_size=n))
    B = data.draw(st.integers(1, 2 * issues))
    return SyntheticEnv(issues, b, ideals, B)


@small
@given(st.data(), st.sampled_from(["fast", "complex"]), st.integers(0, 2 ** 16))
def test_process_structure(data, variant, seed):
    env = _env(data)
    inst = env.instance()
    res = run_process(inst, exact_queries(env), make_config(variant, inst), seed)
    assert res.slate.cost <= env.budget
    assert is_balanced(res.assignment, res.slate, env.n, env.budget, require_total=False)
    # budget left always covers the agents still waiting
    spent, left = 0, env.n
    for r in res.trace:
        assert (env.budget - spent) * env.n >= left * env.budget
        if r.added:
            spent += res.slate.by_id(r.chosen).cost
            left -= len(r.removed)
    if env.budget >= env.n:
        assert res.is_total
    again = run_process(inst, exact_queries(env), make_config(variant, inst), seed)
    assert again.trace == res.trace


@small
@given(st.data(), st.integers(0, 2 ** 16))
def test_flow_beats_process_assignment(data, seed):
    env = _env(data)
    inst = env.instance()
    res = run_process(inst, exact_queries(env), make_config("complex", inst), seed)
    assume(res.is_total and len(res.slate))
    stmts = list(res.slate)
    U = [[true_utility(env, i, s) for s in stmts] for i in range(env.n)]
    _, best = max_weight_balanced_assignment(U, [s.cost for s in stmts], env.n, env.budget)
    own = sum(true_utility(env, i, res.slate.by_id(res.assignment[i])) for i in range(env.n))
    assert best >= own


@small
@given(st.lists(st.integers(0, 6), min_size=2, max_size=6), st.lists(st.integers(0, 6), min_size=6, max_size=6),
       st.integers(1, 6))
def test_violation_ratio_monotone_in_b(held, cand, cost):
    n = len(held)
    slate = Slate(tuple(Statement(k, k, 1) for k in range(n)))
    alpha = Statement(99, "c", min(cost, n))
    u = lambda i, s: cand[i] if s.id == 99 else held[i]
    rs = [max_violation_ratio(slate, {i: i for i in range(n)}, [alpha], u, b, n, n)[0] for b in (0, 1, 2, 3)]
    assert rs == sorted(rs, reverse=True)


@small
@given(st.data(), st.integers(0, 3), st.sampled_from(["0", "1/2", "1"]), st.sampled_from(["1", "3/4", "1/2"]),
       st.sampled_from(["1", "2/3"]), st.sampled_from(["uniform", "worst_case"]), st.integers(0, 2 ** 16))
def test_noisy_gen_meets_accuracy_bound(data, beta, delta, gamma, mu, mode, seed):
    env = _env(data, issues=2, b=3)
    em = ErrorModel(beta, Fraction(gamma), Fraction(delta), Fraction(mu), mode, seed)
    q = noisy_queries(env, em)
    rng = np.random.default_rng(seed)
    agents = np.flatnonzero(rng.random(env.n) < 0.7)
    level = Fraction(int(rng.integers(-2, 7)), 2)
    x = int(rng.integers(1, 3))
    stt = q.gen(agents, level, x, rng)
    assert stt is not None and 1 <= stt.cost <= x
    cap = math.ceil(em.mu * x)
    best = max(sum(true_utility(env, i, s) >= level for i in agents)
               for s in env.statements() if 1 <= s.cost <= cap)
    got = sum(true_utility(env, i, stt) >= level - em.delta for i in agents)
    assert got >= em.gamma * best


@small
@given(st.data(), st.integers(0, 3), st.integers(0, 2 ** 16))
def test_noisy_disc_within_beta(data, beta, seed):
    env = _env(data)
    q = noisy_queries(env, ErrorModel(beta=beta, seed=seed))
    sts = env.statements()[:20]
    vals = q.disc_many(np.arange(env.n), sts)
    for i in range(env.n):
        for j, s in enumerate(sts):
            assert abs(vals[i, j] - float(true_utility(env, i, s))) <= beta


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.sampled_from([0, 1, 2]))
def test_disc_combination_range_and_monotone(a, a2, s, s2, coeff):
    v = combine(a, s, coeff)
    assert 1 - coeff <= v <= 6
    if a <= a2:
        assert combine(a2, s, coeff) >= v
    if s <= s2:
        assert combine(a, s2, coeff) >= v


@given(st.text())
def test_word_count_is_whitespace_split(text):
    assert word_count(text) == len(text.split())


@settings(max_examples=30, deadline=None)
@given(st.lists(st.fixed_dictionaries({
    "name": st.text(alphabet="abc ,\"\n", max_size=6),
    "x": st.floats(allow_nan=False, allow_infinity=False),
    "k": st.integers(-10 ** 6, 10 ** 6)}), max_size=5))
def test_report_round_trip(tmp_path_factory, rows):
    out = tmp_path_factory.mktemp("rep")
    rows = [r for r in rows if not _numeric_text(r["name"])]
    p = emit_report(rows, out, "t", ["name", "x", "k"])
    back = read_report(p)
    assert back == rows
    assert p.read_bytes() == emit_report(rows, out, "t", ["name", "x", "k"]).read_bytes()


def _numeric_text(s):
    # text that reads back as a number or bool cannot round-trip untyped
    if s in ("True", "False"):
        return True
    try:
        float(s)
        return True
    except ValueError:
        return False
