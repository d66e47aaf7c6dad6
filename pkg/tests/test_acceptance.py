"""Acceptance criteria, one test each.

Every test reports a PASS/FAIL line; the block is printed at the end of the
module so it shows up in ``pytest -v`` output without ``-s``. Criteria 6-8
run seeded campaigns and take minutes.
"""
import contextlib
import io
import itertools
import time

import numpy as np
import pytest
from test_plog import joint_table, program_text

from icorpp.bench import DialogScenario, interactive_dialog, run_benchmark, trial_seed
from icorpp.controller import ControllerConfig, PolicyCache, run_episode
from icorpp.domains import build_dialog_domain, build_preset, preset, true_facts
from icorpp.domains.navigation import NavigationEnv, naive_state_count
from icorpp.domains.presets import NEAR_WINDOW, dialog_paper_full, nav_walker
from icorpp.model_builder import complete_facts, reasoner_for
from icorpp.planning import (PointBasedValueIteration, ValueIteration, belief_update,
                             expectimax_oracle, value_iteration)
from icorpp.planning.pbvi import blind_vectors
from icorpp.plog import enumerate_worlds, ground, obs, parse_literal, parse_program, query

LINES = {}


@pytest.fixture(scope="module", autouse=True)
def report(request):
    yield
    out = [LINES[k] for k in sorted(LINES, key=lambda k: str(k).zfill(3))]
    rep = request.config.pluginmanager.get_plugin("terminalreporter")
    if rep is not None:
        rep.write_sep("=", "acceptance criteria")
        for line in out:
            rep.write_line(line)
    else:
        print("\n".join(out))


@contextlib.contextmanager
def criterion(n, title, notes):
    """Record PASS/FAIL for criterion ``n``; ``notes`` is filled in by the test body."""
    try:
        yield
    except AssertionError as e:
        msg = str(e).splitlines()[0] if str(e) else "assertion failed"
        LINES[n] = f"FAIL criterion {n:>2}: {title}: {msg} {'; '.join(notes)}".rstrip()
        raise
    LINES[n] = f"PASS criterion {n:>2}: {title} {'; '.join(notes)}".rstrip()


def extra(key, title, ok, detail):
    LINES[key] = f"{'PASS' if ok else 'FAIL'} {title}: {detail}"


# -- 1 -------------------------------------------------------------------------------------

def test_c1_model_size():
    notes = []
    with criterion(1, "navigation state space and naive count", notes):
        t0 = time.perf_counter()
        b = build_preset("nav-paper")
        n = len(b.state_space({"curr_time": "morning", "weather": "sunny"}))
        notes.append(f"|S|={n}")
        assert n == 60, f"state space has {n} states"
        # every combination of 30 locations, sunny/occupied per location, weather, time, term
        count = naive_state_count(30, n_weather=5, n_time=3, n_term=2)
        oracle = 30 * 2 ** 30 * 2 ** 30 * 5 * 3 * 2
        notes.append(f"N={count // 2 ** 60}*2^60")
        assert count == oracle
        assert count > 10 ** 20
        assert time.perf_counter() - t0 < 1.0
        assert count == 450 * 2 ** 60, f"N = {count // 2 ** 60}*2^60, expected 450*2^60"


# -- 2 -------------------------------------------------------------------------------------

def test_c2_dialog_dimensions():
    notes = []
    with criterion(2, "dialog model dimensions", notes):
        t0 = time.perf_counter()
        _, cfg = preset("dialog-paper-small")
        small = build_preset("dialog-paper-small").build(true_facts(cfg, "morning"))
        assert small.shape == (5, 12, 7)
        full_cfg = dialog_paper_full()
        full = build_dialog_domain(full_cfg).build(true_facts(full_cfg, "morning"))
        gone_cfg = dialog_paper_full(unavailable=("juice", "soda", "cookie"))
        gone = build_dialog_domain(gone_cfg).build(true_facts(gone_cfg, "morning"))
        assert len(full.actions) == 50 and len(gone.actions) == 29
        live = lambda m: int((~m.terminal).sum())
        notes.append(f"full |S|={len(full.states)} ({live(full)} + term)")
        notes.append(f"3 unavailable |S|={len(gone.states)} ({live(gone)} + term); "
                     f"the reported 18 only matches without term, the 37 only with it")
        assert len(full.states) == 37 and live(gone) == 18 and len(gone.states) == 19
        assert time.perf_counter() - t0 < 1.0


# -- 3 -------------------------------------------------------------------------------------

def test_c3_reward_table_scale():
    notes = []
    with criterion(3, "closeness reward table size", notes):
        t0 = time.perf_counter()
        _, cfg = preset("dialog-tuning", scheme="closeness")
        m = build_preset("dialog-tuning", scheme="closeness").build(true_facts(cfg, "morning"))
        dels = [i for i, a in enumerate(m.actions) if a.startswith("del_")]
        table = m.R[:, dels]
        notes.append(f"{len(dels)}x{len(m.states)}={table.size}")
        # one delivery per (item, room, person)
        assert len(dels) == len(cfg.items) * len(cfg.rooms) * len(cfg.persons) == 24
        assert table.size == 600
        assert time.perf_counter() - t0 < 1.0


# -- 4 -------------------------------------------------------------------------------------

def random_program(rng):
    n = int(rng.integers(2, 13))
    sizes = [int(rng.integers(2, 4)) for _ in range(n)]
    while np.prod(sizes) > 6000:
        sizes[int(np.argmax(sizes))] -= 1
    parents, prs = [], []
    for i in range(n):
        par = int(rng.integers(0, i)) if i and rng.random() < 0.6 else None
        parents.append(par)
        table = {}
        for cond in ([None] if par is None else range(sizes[par])):
            if rng.random() < 0.5:
                continue
            k = int(rng.integers(1, sizes[i]))
            vals = rng.permutation(sizes[i])[:k]
            ws = rng.integers(1, 10, size=k)
            scale = int(ws.sum() + rng.integers(1, 11))
            table[cond] = {int(v): int(w) / scale for v, w in zip(vals, ws)}
        prs.append(table)
    picks = rng.choice(n, size=min(n, int(rng.integers(1, 4))), replace=False)
    body = [(int(i), int(rng.integers(sizes[i]))) for i in picks]
    return sizes, parents, prs, body


def test_c4_reasoner_oracle():
    notes = []
    with criterion(4, "reasoner vs brute-force joint table", notes):
        t0 = time.perf_counter()
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(50):
            prog = random_program(rng)
            sizes, _, _, body = prog
            gp = ground(parse_program(program_text(*prog)))
            table = joint_table(*prog)
            dist = {tuple(int(w.value(f"a{i}")[1:]) for i in range(len(sizes))): p
                    for w, p in enumerate_worlds(gp)}
            for a, p in table.items():
                worst = max(worst, abs(dist.get(a, 0.0) - p))
            oi = int(rng.integers(len(sizes)))
            ov = int(rng.integers(sizes[oi]))
            z = sum(p for a, p in table.items() if a[oi] == ov)
            num = sum(p for a, p in table.items() if a[oi] == ov and all(a[i] == v for i, v in body))
            got = query(gp, parse_literal("d"), [obs(f"a{oi}=v{ov}")])
            worst = max(worst, abs(got - num / z))
        dt = time.perf_counter() - t0
        notes.append(f"max error {worst:.1e}, {dt:.1f}s")
        assert worst < 1e-9
        assert dt < 30


# -- 5 -------------------------------------------------------------------------------------

def test_c5_numerics():
    notes = []
    with criterion(5, "belief normalisation, VI residual, PBVI below oracle", notes):
        from conftest import make_pomdp
        rng = np.random.default_rng(5)
        S, A, Z = 6, 3, 4
        T = rng.dirichlet(np.ones(S), size=(S, A))
        O = rng.dirichlet(np.ones(Z), size=(S, A))
        m = make_pomdp(T, np.zeros((S, A)), O, np.full(S, 1 / S))
        b, worst = m.prior, 0.0
        for _ in range(100_000):
            a = int(rng.integers(A))
            p = (b @ T[:, a, :]) @ O[:, a, :]
            b = belief_update(m, b, a, int(rng.choice(Z, p=p / p.sum())))
            worst = max(worst, abs(b.sum() - 1.0))
        notes.append(f"drift {worst:.1e}")
        assert worst < 1e-9

        nav = build_preset("nav-paper").build({"curr_time": "morning", "weather": "sunny"})
        t0 = time.perf_counter()
        vi = ValueIteration(gamma=0.95, tol=1e-6).fit(nav)
        dt = time.perf_counter() - t0
        notes.append(f"VI {dt:.2f}s residual {vi.residuals_[-1]:.1e}")
        assert vi.residuals_[-1] < 1e-6 and dt < 5.0

        _, cfg = preset("dialog-paper-small")
        model = build_preset("dialog-paper-small").build(true_facts(cfg, "morning"))
        blind = blind_vectors(model.T, model.R, 0.95)
        leaf = lambda x: float((blind @ x).max())
        beliefs = [model.prior] + [np.append(rng.dirichlet(np.ones(4)), 0.0) for _ in range(6)]
        gap = -np.inf
        for h in (2, 4, 6):
            est = PointBasedValueIteration(gamma=0.95, belief_budget=50, horizon_budget=h,
                                           backup="full", extra_beliefs=beliefs).fit(model)
            for x in beliefs:
                gap = max(gap, est.policy_.value(x) - expectimax_oracle(model, x, h, 0.95, leaf=leaf))
        notes.append(f"PBVI - oracle <= {gap:.1e}")
        assert gap <= 1e-6


# -- 6 -------------------------------------------------------------------------------------

FIG8 = ("iCORPP", "LR+PP", "PP-only", "reasoning-only", "Defined-1", "Defined-2", "Defined-3")
FIG8_ROUNDS = ("Defined-1x2", "Defined-1x3", "Defined-2x2", "Defined-3x2")


@pytest.fixture(scope="module")
def fig8():
    t0 = time.perf_counter()
    res = run_benchmark("dialog-paper-full", FIG8, ["All"], trials=2000, seed=1)
    elapsed = time.perf_counter() - t0
    more = run_benchmark("dialog-paper-full", FIG8_ROUNDS, ["All"], trials=2000, seed=1)
    agg = {s: res.aggregate(s) for s in FIG8}
    agg.update({s: more.aggregate(s) for s in FIG8_ROUNDS})
    return agg, elapsed


def test_c6_fig8_orderings(fig8):
    agg, elapsed = fig8
    cost = {s: a["mean_cost"] for s, a in agg.items()}
    acc = {s: a["accuracy"] for s, a in agg.items()}
    notes = [", ".join(f"{s} {cost[s]:.2f}/{acc[s]:.3f}" for s in FIG8), f"{elapsed:.0f}s"]
    with criterion(6, "cost/accuracy orderings at penalty 100", notes):
        for s in ("iCORPP", "LR+PP", "PP-only"):
            assert acc[s] >= 0.90, f"{s} accuracy {acc[s]:.3f}"
        assert cost["iCORPP"] < cost["LR+PP"] < cost["PP-only"]
        assert acc["reasoning-only"] <= 0.5 * acc["PP-only"]
        assert elapsed < 600, f"campaign took {elapsed:.0f}s"
        for k in ("Defined-1", "Defined-2", "Defined-3"):
            assert cost[k] > cost["iCORPP"] and acc[k] <= acc["iCORPP"], (
                f"{k} ({cost[k]:.2f}, {acc[k]:.3f}) is not dominated by iCORPP "
                f"({cost['iCORPP']:.2f}, {acc['iCORPP']:.3f})")


def test_defined_policies_never_match_the_planner_cheaply(fig8):
    # weaker reading: no fixed schedule reaches the planner's accuracy at or below its cost
    agg, _ = fig8
    ref = agg["iCORPP"]
    bad = [s for s, a in agg.items() if s.startswith("Defined")
           and a["mean_cost"] <= ref["mean_cost"] and a["accuracy"] >= ref["accuracy"]]
    extra("6b", "defined schedules vs planner frontier",
          not bad, ", ".join(f"{s} {a['mean_cost']:.1f}/{a['accuracy']:.3f}"
                             for s, a in agg.items() if s.startswith("Defined")))
    assert not bad


def test_dominance_accuracy_ordering(fig8):
    agg, _ = fig8
    a = {s: agg[s]["accuracy"] for s in ("iCORPP", "LR+PP", "PP-only")}
    ok = a["iCORPP"] >= a["LR+PP"] >= a["PP-only"] - 0.02
    extra("6c", "accuracy iCORPP >= LR+PP >= PP-only - 0.02", ok,
          ", ".join(f"{s} {v:.3f}" for s, v in a.items()))
    assert ok


# -- 7 -------------------------------------------------------------------------------------

TUNING = {"close20": dict(scheme="closeness", R_plus=20.0, R_minus=-20.0),
          "close30": dict(scheme="closeness", R_plus=30.0, R_minus=-30.0),
          "flat": dict(scheme="flat", r_d_plus=20.0, r_d_minus=20.0)}


def isolated_item(onto, items):
    # lowest mean closeness to the other items
    from icorpp.domains import item_closeness
    return min(items, key=lambda i: sum(item_closeness(onto, i, j) for j in items if j != i))


def test_c7_fine_tuning():
    notes = []
    with criterion(7, "fewest misdeliveries for the isolated item and the far room", notes):
        _, cfg = preset("dialog-tuning")
        far = max(cfg.rooms, key=cfg.distances.get)
        lone = isolated_item(cfg.tree(), cfg.items)
        failures = []
        for name, over in TUNING.items():
            res = run_benchmark("dialog-tuning", ["iCORPP"], ["All"], trials=20000, seed=3, **over)
            items = res.misdeliveries("item", values=cfg.items)
            rooms = res.misdeliveries("room", values=cfg.rooms)
            notes.append(f"{name} items {items} rooms {rooms}")
            for slot, counts, want in (("item", items, lone), ("room", rooms, far)):
                lo = min(counts.values())
                hi = max(counts.values())
                if name == "flat":
                    # no ordering: spread within 3 stderr of a difference of two counts
                    if hi - lo > 3 * np.sqrt(hi + lo):
                        failures.append(f"flat {slot} spread {lo}..{hi}")
                elif not (counts[want] == lo and sorted(counts.values()).count(lo) == 1):
                    failures.append(f"{name} {slot}: {want}={counts[want]}, min {lo}")
        assert not failures, "; ".join(failures)


# -- 8 -------------------------------------------------------------------------------------

class RecordingEnv(NavigationEnv):
    def __init__(self, cfg):
        super().__init__(cfg)
        self.sensed = []

    def sense(self):
        facts = super().sense()
        self.sensed.append(dict(facts))
        return facts


def projected_worlds(bundle, facts, memo):
    key = tuple(sorted(facts.items()))
    if key not in memo:
        gp, ev = reasoner_for(bundle.rules).prepare(complete_facts(bundle.partition, facts))
        rel = bundle.task.relevant_vars
        memo[key] = frozenset(tuple(w.value(v) for v in rel) for w, _ in enumerate_worlds(gp, ev))
    return memo[key]


def test_c8_adaptiveness():
    notes = []
    with criterion(8, "walker replanning and unavailable-item sweep", notes):
        t0 = time.perf_counter()
        cfg = nav_walker()
        steps = {}
        missed = 0
        memo = {}
        cache = PolicyCache()
        for strategy in ("iCORPP", "stationary"):
            runs = []
            for t in range(500):
                env = RecordingEnv(cfg)
                cc = ControllerConfig(strategy=strategy, seed=trial_seed(0, t), policy_cache=cache,
                                      baseline_facts={"curr_time": "noon", "weather": "cloudy"})
                tr = run_episode(env.bundle, env, cc)
                assert tr.terminal
                runs.append(tr.n_steps)
                if strategy == "iCORPP":
                    start = projected_worlds(env.bundle, env.sensed[0], memo)
                    broke = any(projected_worlds(env.bundle, f, memo) != start for f in env.sensed[1:])
                    if broke and not tr.replans:
                        missed += 1
            steps[strategy] = float(np.mean(runs))
        notes.append(f"steps iCORPP {steps['iCORPP']:.2f} vs stationary {steps['stationary']:.2f}")
        assert steps["iCORPP"] < steps["stationary"]
        assert missed == 0, f"{missed} inconsistent episodes without a replan"

        sweep = {"iCORPP": [], "stationary": []}
        dcache = PolicyCache()
        for drop in ((), ("juice",), ("juice", "soda"), ("juice", "soda", "cookie")):
            sc = DialogScenario("dialog-paper-full", unavailable=drop)
            res = run_benchmark(sc, ["iCORPP", "stationary"], ["All"], trials=1000, seed=2, cache=dcache)
            for s in sweep:
                a = res.aggregate(s)
                sweep[s].append((a["mean_reward"], a["reward_stderr"]))
        for s, pts in sweep.items():
            notes.append(f"{s} reward " + " ".join(f"{r:.2f}" for r, _ in pts))
        dt = time.perf_counter() - t0
        notes.append(f"{dt:.0f}s")
        for (r0, e0), (r1, e1) in zip(sweep["iCORPP"], sweep["iCORPP"][1:]):
            assert r1 >= r0 - 2 * np.hypot(e0, e1), "iCORPP reward drops with fewer items"
        flat = sweep["stationary"]
        for (r0, e0), (r1, e1) in itertools.combinations(flat, 2):
            assert abs(r1 - r0) <= 3 * np.hypot(e0, e1), "stationary reward is not flat"
        assert dt < 600, f"took {dt:.0f}s"


# -- 9 -------------------------------------------------------------------------------------

def route(model, policy, start="rw4.cl0", limit=30):
    """Cells visited when every move lands on its most likely successor."""
    s = model.state_index(start)
    seen = [model.states[s]]
    for _ in range(limit):
        s = int(np.argmax(model.T[s, policy.action(s)]))
        seen.append(model.states[s])
        if model.terminal[s]:
            break
    return seen


def test_c9_default_reasoning():
    notes = []
    with criterion(9, "sunlit detour, cloudy shortcut, explicit not-sunny", notes):
        t0 = time.perf_counter()
        b = build_preset("nav-paper")
        window = {f"rw{r}.cl{c}" for r, c in NEAR_WINDOW}
        sunny = b.build({"curr_time": "morning", "weather": "sunny"})
        cloudy = b.build({"curr_time": "morning", "weather": "cloudy"})
        shade = {f"sunny(rw{r},cl{c})": "false" for r, c in NEAR_WINDOW}
        denied = b.build({"curr_time": "morning", "weather": "sunny", **shade})
        ps, pc, pd = (value_iteration(m) for m in (sunny, cloudy, denied))
        path = route(sunny, ps)
        notes.append("sunny " + ">".join(path))
        assert not window & set(path)
        detour = max(ps.values[sunny.state_index(c)] for c in path if c.startswith("rw2"))
        assert all(ps.values[sunny.state_index(c)] <= detour for c in window)
        cpath = route(cloudy, pc)
        notes.append("cloudy " + ">".join(cpath))
        assert window & set(cpath)
        assert np.array_equal(pc.actions, pd.actions)
        assert np.allclose(pc.values, pd.values, atol=1e-9)
        assert time.perf_counter() - t0 < 10


# -- 10 ------------------------------------------------------------------------------------

def test_c10_illustrative_trials():
    notes = []
    with criterion(10, "scripted dialog turns", notes):
        turns = {}
        for prior in ("reasoned", "uniform"):
            t0 = time.perf_counter()
            tr = interactive_dialog(script=f"prior: {prior}\ntime: morning\nrequest: coffee r1 p1\n",
                                    stdout=io.StringIO())
            dt = time.perf_counter() - t0
            turns[prior] = tr["turns"]
            notes.append(f"{prior} {tr['turns']} turns ({dt:.1f}s): "
                         + " ".join(a for a, _ in tr["questions"]))
            assert tr["delivery"] == ("coffee", "r1", "p1")
            assert dt < 5.0, f"{prior} replay took {dt:.1f}s"
        assert turns["reasoned"] == 3
        assert turns["uniform"] >= 5
