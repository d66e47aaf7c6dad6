"""Seeded benchmark campaigns, fixed-schedule dialog baselines, policy maps and the
interactive dialog session."""
from __future__ import annotations

import csv
import io
import math
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .controller import (ControllerConfig, EpisodeTrace, PolicyCache, parse_strategy,
                         run_episode, solve, uniform_prior)
from .domains.dialog import (TIMES, DialogEnv, build_dialog_domain, parse_action, true_facts)
from .domains.navigation import NavigationEnv
from .domains.presets import preset
from .model_builder import prob_reason
from .planning.belief import belief_update

CSV_VERSION = 1
CSV_COLUMNS = ("csv_version", "scenario", "strategy", "condition", "trial", "seed",
               "qa_cost", "success", "reward", "steps", "replans", "requested", "delivered")
AGG_COLUMNS = ("scenario", "strategy", "condition", "trials", "mean_cost", "cost_stderr",
               "accuracy", "accuracy_stderr", "mean_reward", "reward_stderr",
               "mean_steps", "steps_stderr")
CONDITIONS = ("All", "Limited", "Inaccurate")
SLOTS = ("item", "room", "person")


# -- knowledge conditions --------------------------------------------------------------

@dataclass(frozen=True)
class KnowledgeCondition:
    kind: str = "All"

    def __post_init__(self):
        if self.kind not in CONDITIONS:
            raise ValueError(f"unknown condition {self.kind!r}; expected one of {', '.join(CONDITIONS)}")

    def __call__(self, facts: dict) -> dict:
        facts = dict(facts)
        if self.kind == "Limited":
            facts.pop("curr_time", None)
        elif self.kind == "Inaccurate" and "curr_time" in facts:
            facts["curr_time"] = wrong_time(facts["curr_time"])
        return facts


def wrong_time(t: str) -> str:
    """A fixed wrong reading: the next time of day."""
    return TIMES[(TIMES.index(t) + 1) % len(TIMES)]


# -- results -----------------------------------------------------------------------------

def _stderr(x) -> float:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return 0.0
    return float(x.std(ddof=1) / math.sqrt(len(x)))


@dataclass
class BenchResult:
    scenario: str
    rows: list = field(default_factory=list)

    def cells(self):
        seen = []
        for r in self.rows:
            key = (r["strategy"], r["condition"])
            if key not in seen:
                seen.append(key)
        return seen

    def select(self, strategy, condition="All"):
        return [r for r in self.rows if r["strategy"] == strategy and r["condition"] == condition]

    def aggregate(self, strategy, condition="All") -> dict:
        rows = self.select(strategy, condition)
        if not rows:
            raise KeyError(f"no trials for {strategy}/{condition}")
        cost = [r["qa_cost"] for r in rows]
        succ = [1.0 if r["success"] else 0.0 for r in rows]
        rew = [r["reward"] for r in rows]
        steps = [r["steps"] for r in rows]
        return {"scenario": self.scenario, "strategy": strategy, "condition": condition,
                "trials": len(rows),
                "mean_cost": float(np.mean(cost)), "cost_stderr": _stderr(cost),
                "accuracy": float(np.mean(succ)), "accuracy_stderr": _stderr(succ),
                "mean_reward": float(np.mean(rew)), "reward_stderr": _stderr(rew),
                "mean_steps": float(np.mean(steps)), "steps_stderr": _stderr(steps)}

    def aggregates(self):
        return [self.aggregate(s, c) for s, c in self.cells()]

    def misdeliveries(self, slot: str, strategy="iCORPP", condition="All", values=None) -> dict:
        """Wrong deliveries per value of ``slot`` (item, room or person).

        A trial counts against value v when v was delivered in that slot but
        the request named something else there.
        """
        k = SLOTS.index(slot)
        counts = {v: 0 for v in (values or ())}
        for r in self.select(strategy, condition):
            if not r["delivered"]:
                continue
            got, want = r["delivered"].split("/"), r["requested"].split("/")
            if got[k] != want[k]:
                counts[got[k]] = counts.get(got[k], 0) + 1
        return counts

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([CSV_VERSION] + [_fmt(r[c]) for c in CSV_COLUMNS[1:]])
        w.writerow([])
        w.writerow(["# aggregate"])
        w.writerow(AGG_COLUMNS)
        for agg in self.aggregates():
            w.writerow([_fmt(agg[c]) for c in AGG_COLUMNS])
        return out.getvalue()

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def _fmt(x):
    if isinstance(x, bool):
        return int(x)
    if isinstance(x, float):
        return format(x, ".10g")
    return x


def read_csv_rows(text: str):
    """Data rows of a benchmark CSV (the aggregate block is skipped)."""
    lines = text.split("\n\n", 1)[0]
    return list(csv.DictReader(io.StringIO(lines)))


# -- dialog campaigns ---------------------------------------------------------------------

def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


class DialogScenario:
    """A dialog preset plus the per-time truth and the baseline fact sets."""

    def __init__(self, name: str, cfg=None, **overrides):
        kind, default = preset(name, **overrides)
        if kind != "dialog":
            raise ValueError(f"{name} is not a dialog scenario")
        self.name = name
        self.cfg = cfg or default
        self.bundle = build_dialog_domain(self.cfg)
        self._truth = {}

    def truth(self, time):
        """True request distribution at ``time``: (requests, probs)."""
        hit = self._truth.get(time)
        if hit is None:
            b = self.bundle
            facts = true_facts(self.cfg, time)
            space = b.state_space(facts)
            prior = prob_reason(b.partition, b.rules, b.task, facts, b.priors)
            hit = (list(space.worlds), prior.probs)
            self._truth[time] = hit
        return hit

    def sample(self, rng):
        time = TIMES[int(rng.integers(len(TIMES)))]
        reqs, p = self.truth(time)
        return time, reqs[int(rng.choice(len(reqs), p=p))]

    def baseline_facts(self) -> dict:
        """The fixed database a context-blind robot plans with: no clock, all items in stock."""
        facts = true_facts(self.cfg, None)
        return {k: v for k, v in facts.items() if not k.startswith("available(")}

    def unreasoned_facts(self) -> dict:
        """Facts under which nobody is ruled out: every person authorized, every item in stock."""
        facts = {}
        for p in self.cfg.persons:
            facts[f"{'paid' if p.kind == 'prof' else 'registered'}({p.name})"] = "true"
        return facts

    def env(self, request, time):
        return DialogEnv(self.cfg, request, time)


# the dialog models have ~40 states and ~50 actions; 200 points leave the
# sharper time-of-day priors under-covered
DIALOG_SOLVER = {"belief_budget": 400}


def run_benchmark(scenario, strategies, conditions=("All",), trials=2000, seed=0,
                  solver=None, cache: PolicyCache = None, out=None, **overrides) -> BenchResult:
    """Run ``trials`` seeded episodes for every strategy x condition cell."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    for s in strategies:
        parse_strategy(s)
    conds = [KnowledgeCondition(c) for c in conditions]
    kind, _ = preset(scenario.name if isinstance(scenario, DialogScenario) else scenario)
    cache = cache if cache is not None else PolicyCache()
    if kind == "navigation":
        result = _nav_campaign(scenario, strategies, conds, trials, seed, cache, overrides)
    else:
        sc = scenario if isinstance(scenario, DialogScenario) else DialogScenario(scenario, **overrides)
        result = _dialog_campaign(sc, strategies, conds, trials, seed, solver, cache)
    if out is not None:
        result.write_csv(out)
    return result


def _dialog_campaign(sc: DialogScenario, strategies, conds, trials, seed, solver, cache):
    result = BenchResult(sc.name)
    base, unreasoned = sc.baseline_facts(), sc.unreasoned_facts()
    for strategy in strategies:
        for cond in conds:
            for t in range(trials):
                ts = trial_seed(seed, t)
                rng = np.random.default_rng(ts)
                time, request = sc.sample(rng)
                env = sc.env(request, time)
                cfg = ControllerConfig(strategy=strategy, seed=ts, baseline_facts=base,
                                       unreasoned_facts=unreasoned, sense_transform=cond,
                                       solver={**DIALOG_SOLVER, **(solver or {})},
                                       policy_cache=cache)
                tr = run_episode(sc.bundle, env, cfg, rng=rng)
                result.rows.append(_row(sc.name, strategy, cond.kind, t, ts, tr))
    return result


def _row(scenario, strategy, condition, t, ts, tr: EpisodeTrace):
    out = tr.outcome
    return {"scenario": scenario, "strategy": strategy, "condition": condition, "trial": t,
            "seed": ts, "qa_cost": float(out.get("qa_cost", 0.0)),
            "success": bool(out.get("success", False)), "reward": float(tr.total_reward),
            "steps": tr.n_steps, "replans": len(tr.replans),
            "requested": _request_str(out.get("request")),
            "delivered": _request_str(out.get("delivered"))}


def _request_str(req):
    # "item/room/person"; blank for navigation rows and undelivered episodes
    return "/".join(req) if req else ""


def _nav_campaign(scenario, strategies, conds, trials, seed, cache, overrides):
    _, cfg = preset(scenario, **overrides)
    result = BenchResult(scenario)
    base = {"curr_time": "noon", "weather": "cloudy"}
    for strategy in strategies:
        for cond in conds:
            for t in range(trials):
                ts = trial_seed(seed, t)
                env = NavigationEnv(cfg)
                ccfg = ControllerConfig(strategy=strategy, seed=ts, baseline_facts=base,
                                        sense_transform=cond, policy_cache=cache)
                tr = run_episode(env.bundle, env, ccfg)
                result.rows.append(_row(scenario, strategy, cond.kind, t, ts, tr))
    return result


# -- fixed-schedule baseline -----------------------------------------------------------------

def defined_policy_run(kind: int, rounds: int, scenario: DialogScenario, request, time, seed,
                       cache: PolicyCache = None) -> EpisodeTrace:
    """Defined-k for ``rounds`` rounds, then delivery of the most likely request."""
    env = scenario.env(request, time)
    cfg = ControllerConfig(strategy=f"Defined-{kind}x{rounds}", seed=seed,
                           policy_cache=cache or PolicyCache())
    return run_episode(scenario.bundle, env, cfg)


# -- policy map -----------------------------------------------------------------------------

def room_model(scenario="dialog-paper-full", item=None, person=None, **overrides):
    """The dialog POMDP with item and person fixed, leaving only the room uncertain."""
    _, cfg = preset(scenario, **overrides)
    item = item or cfg.items[0]
    person = person or next(p for p in cfg.persons if p.paid or p.registered)
    from dataclasses import replace
    one = replace(cfg, items=(item,), persons=(person,), ontology=None,
                  morning_items=(), noon_items=(), place_pref=0.0)
    if cfg.ontology is None:
        one = replace(one, ontology=_subtree(cfg.tree(), item))
    bundle = build_dialog_domain(one)
    return uniform_prior(bundle.build(true_facts(one, None)))


def _subtree(onto, item):
    # keep the path root -> item so closeness depths are unchanged
    path = onto.path(item)
    tree = {}
    node = tree
    for name in path:
        node[name] = {}
        node = node[name]
    return tree


def simplex_grid(resolution: int):
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    n = resolution
    for i in range(n + 1):
        for j in range(n + 1 - i):
            yield (i / n, j / n, (n - i - j) / n)


def policy_map(resolution=10, scenario="dialog-paper-full", solver=None, **overrides):
    """(b_r0, b_r1, b_r2, action) over a grid on the room-belief simplex."""
    model = room_model(scenario, **overrides)
    rooms = [v["req_room"] for v in model.state_values if v is not None]
    if len(rooms) != 3:
        raise ValueError("policy maps need exactly three rooms")
    # seed the solver with the grid itself so every mapped belief is a backup point
    grid = list(simplex_grid(resolution))
    beliefs = [np.array(list(g) + [0.0]) for g in grid]
    kw = dict(belief_budget=len(beliefs) + 50, horizon_budget=80)
    kw.update(solver or {})
    kw.setdefault("extra_beliefs", beliefs)
    policy = solve(model, kw)
    rows = []
    for g, b in zip(grid, beliefs):
        rows.append((*g, model.actions[policy.action(b)]))
    return rooms, rows


def write_policy_map(rows, rooms, path_or_fh):
    fh = open(path_or_fh, "w", encoding="utf-8", newline="") if isinstance(path_or_fh, str) else path_or_fh
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"b_{r}" for r in rooms] + ["action"])
        for r in rows:
            w.writerow([format(r[0], ".6g"), format(r[1], ".6g"), format(r[2], ".6g"), r[3]])
    finally:
        if isinstance(path_or_fh, str):
            fh.close()


# -- interactive dialog -----------------------------------------------------------------------

QUESTION_TEXT = {"i": "Which item would you like?", "r": "Which room should it go to?",
                 "p": "Who is it for?"}
SORT_WORD = {"i": "item", "r": "room", "p": "person"}


def parse_script(text: str) -> dict:
    """Script files: ``prior: reasoned|uniform``, ``time: <t>``, ``request: i r p``
    (answer every question truthfully for that request), or one answer per line."""
    spec = {"prior": "reasoned", "time": "morning", "request": None, "answers": []}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition(":")
        if sep and key.strip() in ("prior", "time", "request"):
            val = val.strip()
            spec[key.strip()] = tuple(val.split()) if key.strip() == "request" else val
        else:
            spec["answers"].append(line)
    return spec


def _truthful(request, action):
    kind = parse_action(action)
    idx = "irp".index(kind[1])
    if kind[0] == "ask":
        return request[idx]
    return "yes" if request[idx] == kind[2] else "no"


def _answer_to_obs(model, action, text):
    kind = parse_action(action)
    text = text.strip().lower()
    if kind[0] == "conf":
        if text in ("yes", "y"):
            return "yes"
        if text in ("no", "n"):
            return "no"
        return None
    obs = f"{kind[1]}:{text}"
    return obs if obs in model.observations else None


def interactive_dialog(scenario="dialog-trial", reward_scheme=None, prior="reasoned",
                       time="morning", stdin=None, stdout=None, script: Optional[str] = None,
                       top_k=3, solver=None, max_turns=50):
    """Talk to the dialog policy; returns a transcript dict.

    With ``script`` the answers come from the script text instead of ``stdin``.
    """
    stdout = stdout or sys.stdout
    spec = parse_script(script) if script is not None else None
    if spec is not None:
        prior, time = spec["prior"], spec["time"]
    over = {} if reward_scheme is None else {"scheme": reward_scheme}
    _, cfg = preset(scenario, **over)
    bundle = build_dialog_domain(cfg)
    model = bundle.build(true_facts(cfg, time))
    if prior == "uniform":
        model = uniform_prior(model)
    elif prior != "reasoned":
        raise ValueError("prior must be 'reasoned' or 'uniform'")
    kw = dict(belief_budget=200, horizon_budget=60)
    kw.update(solver or {})
    policy = solve(model, kw)
    b = model.prior.copy()
    answers = list(spec["answers"]) if spec else []
    lines = iter(stdin) if stdin is not None else None
    transcript = {"turns": 0, "questions": [], "delivery": None, "beliefs": [b.tolist()]}

    def show_belief():
        order = np.argsort(-b, kind="stable")[:top_k]
        parts = [f"{model.states[i]}={b[i]:.3f}" for i in order if b[i] > 0]
        print("belief: " + ", ".join(parts), file=stdout)

    show_belief()
    while transcript["turns"] < max_turns:
        a = policy.action(b)
        action = model.actions[a]
        kind = parse_action(action)
        if kind[0] == "del":
            print(f"robot: I will deliver {kind[1]} to {kind[2]} for {kind[3]}.", file=stdout)
            transcript["delivery"] = tuple(kind[1:])
            break
        question = (QUESTION_TEXT[kind[1]] if kind[0] == "ask"
                    else f"Is the {SORT_WORD[kind[1]]} {kind[2]}? (yes/no)")
        obs = None
        while obs is None:
            print(f"robot: {question}", file=stdout)
            if spec is not None and spec["request"] is not None:
                text = _truthful(spec["request"], action)
            elif spec is not None:
                if not answers:
                    raise EOFError("script ran out of answers")
                text = answers.pop(0)
            else:
                try:
                    text = next(lines) if lines is not None else input("you: ")
                except StopIteration:
                    raise EOFError("input ended before a delivery") from None
            print(f"you: {text.strip()}", file=stdout)
            obs = _answer_to_obs(model, action, text)
            if obs is None:
                print("robot: sorry, I did not understand that.", file=stdout)
        b = belief_update(model, b, a, model.observations.index(obs))
        transcript["turns"] += 1
        transcript["questions"].append((action, obs))
        transcript["beliefs"].append(b.tolist())
        show_belief()
    return transcript
