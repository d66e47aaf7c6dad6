"""Command-line entry point (``icorpp <verb> ...``)."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import bench
from .controller import ControllerConfig, ControllerError, PolicyCache, run_episode, solve, uniform_prior
from .domains import build_preset, preset, true_facts
from .domains.navigation import NavigationEnv
from .model_builder import ModelError
from .planning import save_policy
from .plog import PlogError, ground, parse_evidence, parse_literal, parse_program, query

log = logging.getLogger("icorpp")


def load_config(path):
    """JSON config: {"overrides": {...preset fields...}, "solver": {...}}."""
    if not path:
        return {}, {}
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    unknown = set(data) - {"overrides", "solver"}
    if unknown:
        raise SystemExit(f"config: unknown keys {sorted(unknown)}")
    over = {k: tuple(v) if isinstance(v, list) else v for k, v in data.get("overrides", {}).items()}
    return over, dict(data.get("solver", {}))


def cmd_reason(args):
    with open(args.file, encoding="utf-8") as fh:
        program = parse_program(fh.read())
    evidence = [parse_evidence(f"obs({e})") for e in args.obs] + [parse_evidence(f"do({e})") for e in args.do]
    gp = ground(program)
    for q in args.query:
        p = query(gp, parse_literal(q), evidence)
        print(f"P({q}) = {p:.6g}")
    return 0


def _default_model(name, overrides):
    kind, cfg = preset(name, **overrides)
    bundle = build_preset(name, **overrides)
    if kind == "navigation":
        facts = {"curr_time": cfg.time, "weather": cfg.weather}
    else:
        facts = true_facts(cfg, cfg.time)
    return kind, bundle, bundle.build(facts)


def cmd_plan(args):
    over, solver = load_config(args.config)
    kind, _, model = _default_model(args.domain, over)
    if args.solver == "vi" and model.O is not None:
        raise SystemExit("value iteration needs a fully observable model; use --solver pbvi")
    if args.solver == "pbvi" and model.O is None:
        raise SystemExit("pbvi expects a partially observable model; use --solver vi")
    if args.prior == "uniform":
        model = uniform_prior(model)
    policy = solve(model, solver)
    S, A = model.shape[:2]
    print(f"model {args.domain}: |S|={S} |A|={A}" + (f" |Z|={model.shape[2]}" if model.O is not None else ""))
    print(f"hash {model.model_hash}")
    if model.O is not None:
        print(f"alpha vectors {len(policy.alphas)}; value at prior {policy.value(model.prior):.4f}")
        print(f"first action {model.actions[policy.action(model.prior)]}")
    if args.out:
        save_policy(args.out, policy)
        print(f"policy written to {args.out}")
    return 0


def cmd_simulate(args):
    over, solver = load_config(args.config)
    kind, cfg = preset(args.domain, **over)
    rng = np.random.default_rng(args.seed)
    cache = PolicyCache()
    if kind == "navigation":
        env = NavigationEnv(cfg)
        ccfg = ControllerConfig(strategy=args.strategy, seed=args.seed, policy_cache=cache,
                                baseline_facts={"curr_time": "noon", "weather": "cloudy"}, solver=solver)
        tr = run_episode(env.bundle, env, ccfg, rng=rng)
    else:
        sc = bench.DialogScenario(args.domain, **over)
        time, request = sc.sample(rng)
        ccfg = ControllerConfig(strategy=args.strategy, seed=args.seed, policy_cache=cache,
                                baseline_facts=sc.baseline_facts(), unreasoned_facts=sc.unreasoned_facts(),
                                solver={**bench.DIALOG_SOLVER, **solver})
        tr = run_episode(sc.bundle, sc.env(request, time), ccfg, rng=rng)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(tr.to_jsonl())
    print(json.dumps(tr.summary(), sort_keys=True, default=str))
    return 0


def cmd_bench(args):
    over, solver = load_config(args.config)
    res = bench.run_benchmark(args.scenario, args.strategies, args.conditions, trials=args.trials,
                              seed=args.seed, solver=solver, out=args.out, **over)
    for agg in res.aggregates():
        print(f"{agg['strategy']:>14} {agg['condition']:<10} cost {agg['mean_cost']:.2f}+-{agg['cost_stderr']:.2f}"
              f"  acc {agg['accuracy']:.3f}  reward {agg['mean_reward']:.2f}")
    if args.out:
        print(f"csv written to {args.out}")
    return 0


def cmd_policy_map(args):
    over, solver = load_config(args.config)
    rooms, rows = bench.policy_map(args.resolution, args.scenario, solver=solver, **over)
    bench.write_policy_map(rows, rooms, args.out or sys.stdout)
    return 0


def cmd_dialog(args):
    script = None
    if args.script:
        with open(args.script, encoding="utf-8") as fh:
            script = fh.read()
    elif not args.interactive:
        raise SystemExit("dialog needs --interactive or --script FILE")
    tr = bench.interactive_dialog(args.scenario, reward_scheme=args.reward_scheme, prior=args.prior,
                                  time=args.time, script=script)
    print(f"turns: {tr['turns']}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="icorpp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("reason", help="query a P-log program")
    r.add_argument("file")
    r.add_argument("--query", action="append", required=True, help="literal, e.g. req_item=coffee")
    r.add_argument("--obs", action="append", default=[])
    r.add_argument("--do", action="append", default=[])
    r.set_defaults(func=cmd_reason)

    pl = sub.add_parser("plan", help="build and solve a preset model")
    pl.add_argument("domain")
    pl.add_argument("--solver", choices=("vi", "pbvi"), default=None)
    pl.add_argument("--prior", choices=("reasoned", "uniform"), default="reasoned")
    pl.add_argument("--out")
    pl.add_argument("--config")
    pl.set_defaults(func=cmd_plan)

    s = sub.add_parser("simulate", help="run one episode")
    s.add_argument("domain")
    s.add_argument("--strategy", default="iCORPP")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trace", help="write the JSONL trace here")
    s.add_argument("--config")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", help="seeded campaign over strategies x conditions")
    b.add_argument("scenario")
    b.add_argument("--strategies", nargs="+", default=["iCORPP", "LR+PP", "PP-only"])
    b.add_argument("--conditions", nargs="+", default=["All"])
    b.add_argument("--trials", type=int, default=2000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.add_argument("--config")
    b.set_defaults(func=cmd_bench)

    m = sub.add_parser("policy-map", help="actions over the room-belief simplex")
    m.add_argument("--resolution", type=int, default=10)
    m.add_argument("--scenario", default="dialog-paper-full")
    m.add_argument("--out")
    m.add_argument("--config")
    m.set_defaults(func=cmd_policy_map)

    d = sub.add_parser("dialog", help="talk to the dialog policy")
    mode = d.add_mutually_exclusive_group()
    mode.add_argument("--interactive", action="store_true")
    mode.add_argument("--script")
    d.add_argument("--scenario", default="dialog-trial")
    d.add_argument("--reward-scheme", choices=("flat", "closeness"))
    d.add_argument("--prior", choices=("reasoned", "uniform"), default="reasoned")
    d.add_argument("--time", default="morning")
    d.set_defaults(func=cmd_dialog)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PlogError, ModelError, ControllerError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
