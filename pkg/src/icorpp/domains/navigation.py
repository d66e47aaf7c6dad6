"""Grid navigation with sunlight and a slow walker.

The robot moves on a rows x cols grid.  In the morning, cells near a window
are assumed to be sunlit unless that is defeated (by a non-sunny weather
report or by an explicit ``-sunny`` fact); a robot ending a step in a sunlit
cell gets lost with probability ``sun_loss``.  A walker occupies one cell at a
time and blocks moves into it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model_builder import DomainBundle, Task, VariablePartition
from ..plog import FALSE, TRUE, parse_program

ACTIONS = ("up", "down", "left", "right")
TIMES = ("morning", "noon", "evening")
WEATHERS = ("sunny", "cloudy", "rainy", "snowy", "foggy")
DELTAS = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}


def naive_state_count(n_loc: int, n_weather: int = len(WEATHERS), n_time: int = len(TIMES),
                      n_term: int = 2) -> int:
    """States from enumerating every attribute combination.

    Each location carries two boolean attributes (sunny, occupied), hence the
    2^(2|Loc|) factor: |Loc| * 2^(2|Loc|) * |Weather| * |Time| * |Term|.
    """
    return n_loc * 2 ** (2 * n_loc) * n_weather * n_time * n_term


def row_name(r):
    return f"rw{r}"


def col_name(c):
    return f"cl{c}"


def cell_key(pred, cell):
    return f"{pred}({row_name(cell[0])},{col_name(cell[1])})"


@dataclass
class NavConfig:
    rows: int = 5
    cols: int = 6
    near_window: tuple = ()
    goal: tuple = (0, 3)
    start: tuple = (4, 0)
    time: str = "morning"
    weather: str = "sunny"
    not_sunny: tuple = ()  # cells with an explicit -sunny fact
    walker_path: tuple = ()  # cells visited cyclically
    walker_period: int = 5  # robot steps per walker move (1/5 of robot speed)
    walker_start_step: int = 0  # walker appears at this step
    move_success: float = 0.9
    sun_loss: float = 0.9
    goal_reward: float = 50.0
    fail_penalty: float = 100.0
    step_cost: float = 1.0
    gamma: float = 0.95

    def validate(self):
        if not (0 <= self.goal[0] < self.rows and 0 <= self.goal[1] < self.cols):
            raise ValueError(f"goal {self.goal} outside the grid")
        for name in ("move_success", "sun_loss"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} is not a probability")
        if self.time not in TIMES or self.weather not in WEATHERS:
            raise ValueError("unknown time or weather")
        cells = [tuple(c) for c in self.near_window] + [tuple(c) for c in self.walker_path]
        for c in cells + [tuple(self.start)]:
            if not (0 <= c[0] < self.rows and 0 <= c[1] < self.cols):
                raise ValueError(f"cell {c} outside the grid")


def domain_text(cfg: NavConfig) -> str:
    rows = ", ".join(row_name(r) for r in range(cfg.rows))
    cols = ", ".join(col_name(c) for c in range(cfg.cols))
    lines = [
        "% grid",
        f"row = {{{rows}}}.",
        f"col = {{{cols}}}.",
        "time = {%s}." % ", ".join(TIMES),
        "weather = {%s}." % ", ".join(WEATHERS),
        "curr_row : row.", "curr_col : col.", "curr_term : boolean.",
        "curr_time : time.", "weather : weather.",
        "lit : boolean.",
        "belowof : row, row -> boolean.", "leftof : col, col -> boolean.",
        "near_row : row, row -> boolean.", "near_col : col, col -> boolean.",
        "near_window : row, col -> boolean.", "sunny : row, col -> boolean.",
        "occupied : row, col -> boolean.", "blocked : row, col -> boolean.",
        "goal : row, col -> boolean.",
    ]
    lines += [f"belowof({row_name(r + 1)},{row_name(r)})." for r in range(cfg.rows - 1)]
    lines += [f"leftof({col_name(c)},{col_name(c + 1)})." for c in range(cfg.cols - 1)]
    lines += [
        "near_row(R1,R2) :- belowof(R1,R2).",
        "near_row(R1,R2) :- near_row(R2,R1).",
        "near_col(C1,C2) :- leftof(C1,C2).",
        "near_col(C1,C2) :- near_col(C2,C1).",
        "% sunlight: a default that non-sunny weather (or an explicit fact) defeats",
    ]
    lines += [f"near_window({row_name(r)},{col_name(c)})." for r, c in cfg.near_window]
    lines += [
        "sunny(R,C) :- near_window(R,C), not -sunny(R,C), curr_time=morning.",
        "-sunny(R,C) :- near_window(R,C), weather=W, W != sunny.",
        f"goal({row_name(cfg.goal[0])},{col_name(cfg.goal[1])}).",
        "blocked(R,C) :- occupied(R,C).",
        "% the robot's location",
        "random(curr_row).", "random(curr_col).", "random(curr_term).",
        ":- curr_row=R, curr_col=C, occupied(R,C).",
        "lit :- curr_row=R, curr_col=C, sunny(R,C).",
        "-lit :- not lit.",
    ]
    return "\n".join(lines) + "\n"


def dynamics_text(cfg: NavConfig) -> str:
    ps, pf = cfg.move_success, round(1.0 - cfg.move_success, 12)
    loss = cfg.sun_loss
    lines = [
        "action = {%s}." % ", ".join(ACTIONS),
        "curr_a : action.", "next_row : row.", "next_col : col.", "next_term : boolean.",
        "open : action -> boolean.",
        "reach_row : row, row -> boolean.", "reach_col : col, col -> boolean.",
        "reach_row(R,R).", "reach_row(R1,R2) :- near_row(R1,R2).",
        "reach_col(C,C).", "reach_col(C1,C2) :- near_col(C1,C2).",
        "random(curr_a).",
        "random(next_row : {R_ : reach_row(R_,RW)}) :- curr_row=RW.",
        "random(next_col : {C_ : reach_col(C_,CL)}) :- curr_col=CL.",
        "random(next_term).",
        "% a move is possible when the target cell exists and is not blocked",
        "open(up) :- curr_row=R1, curr_col=C, belowof(R1,R2), not blocked(R2,C).",
        "open(down) :- curr_row=R1, curr_col=C, belowof(R2,R1), not blocked(R2,C).",
        "open(left) :- curr_col=C1, curr_row=R, leftof(C2,C1), not blocked(R,C2).",
        "open(right) :- curr_col=C1, curr_row=R, leftof(C1,C2), not blocked(R,C2).",
        "-open(A) :- not open(A).",
        "% rows",
        "pr(next_row=R | curr_row=R, curr_term=true) = 1.0.",
        "pr(next_row=R | curr_row=R, curr_a=A, -open(A)) = 1.0.",
        "pr(next_row=R | curr_row=R, curr_a=left) = 1.0.",
        "pr(next_row=R | curr_row=R, curr_a=right) = 1.0.",
        f"pr(next_row=R2 | curr_row=R1, belowof(R1,R2), curr_a=up, open(up), curr_term=false) = {ps!r}.",
        f"pr(next_row=R1 | curr_row=R1, curr_a=up, open(up), curr_term=false) = {pf!r}.",
        f"pr(next_row=R2 | curr_row=R1, belowof(R2,R1), curr_a=down, open(down), curr_term=false) = {ps!r}.",
        f"pr(next_row=R1 | curr_row=R1, curr_a=down, open(down), curr_term=false) = {pf!r}.",
        "% columns",
        "pr(next_col=C | curr_col=C, curr_term=true) = 1.0.",
        "pr(next_col=C | curr_col=C, curr_a=A, -open(A)) = 1.0.",
        "pr(next_col=C | curr_col=C, curr_a=up) = 1.0.",
        "pr(next_col=C | curr_col=C, curr_a=down) = 1.0.",
        f"pr(next_col=C2 | curr_col=C1, leftof(C2,C1), curr_a=left, open(left), curr_term=false) = {ps!r}.",
        f"pr(next_col=C1 | curr_col=C1, curr_a=left, open(left), curr_term=false) = {pf!r}.",
        f"pr(next_col=C2 | curr_col=C1, leftof(C1,C2), curr_a=right, open(right), curr_term=false) = {ps!r}.",
        f"pr(next_col=C1 | curr_col=C1, curr_a=right, open(right), curr_term=false) = {pf!r}.",
        "% termination: goal reached, or lost in a sunlit cell",
        "pr(next_term=true | curr_term=true) = 1.0.",
        "pr(next_term=true | curr_term=false, next_row=R, next_col=C, goal(R,C)) = 1.0.",
        f"pr(next_term=true | curr_term=false, next_row=R, next_col=C, sunny(R,C), not goal(R,C)) = {loss!r}.",
        "pr(next_term=false | curr_term=false, next_row=R, next_col=C, not sunny(R,C), not goal(R,C)) = 1.0.",
    ]
    return "\n".join(lines) + "\n"


RELEVANT = ("curr_row", "curr_col", "curr_term", "lit")
NEXT_VARS = {"curr_row": "next_row", "curr_col": "next_col", "curr_term": "next_term"}


def _cell_of(values):
    return int(values["curr_row"][2:]), int(values["curr_col"][2:])


def make_reward_builder(cfg: NavConfig):
    goal = tuple(cfg.goal)

    def build(values, actions, T):
        n = len(values)
        # reward of landing in each successor, given a non-terminal origin
        land = np.empty(n)
        for j, v in enumerate(values):
            if v["curr_term"] == TRUE:
                land[j] = cfg.goal_reward if _cell_of(v) == goal else -cfg.fail_penalty
            else:
                land[j] = -cfg.step_cost
        R = T @ land
        for s, v in enumerate(values):
            if v["curr_term"] == TRUE:
                R[s, :] = 0.0
        return R
    return build


def nav_label(variables, values):
    d = dict(zip(variables, values))
    tail = "T" if d["curr_term"] == TRUE else ""
    return f"{d['curr_row']}.{d['curr_col']}{'.' + tail if tail else ''}"


def build_navigation_domain(cfg: NavConfig = None) -> DomainBundle:
    """Knowledge bundle and MDP task for the grid world."""
    cfg = cfg or NavConfig()
    cfg.validate()
    if cfg.sun_loss >= 1.0 and tuple(cfg.goal) in {tuple(c) for c in cfg.near_window}:
        raise ValueError("goal lies in a cell where the robot is always lost")
    rules = parse_program(domain_text(cfg))
    dynamics = parse_program(dynamics_text(cfg), base=rules)
    partition = VariablePartition(
        endogenous=RELEVANT,
        exogenous=("curr_time", "weather", "occupied", "sunny"),
        defaults={"curr_time": "morning", "weather": "sunny"},
    )
    task = Task(
        name="navigate",
        relevant_vars=RELEVANT,
        next_vars=NEXT_VARS,
        actions=ACTIONS,
        reward_builder=make_reward_builder(cfg),
        term_var="curr_term",
        state_label=nav_label,
    )
    return DomainBundle("navigation", rules, dynamics, parse_program(""), partition, task,
                        config=cfg.__dict__.copy(), gamma=cfg.gamma)


# -- simulator -------------------------------------------------------------

def true_sunny_cells(cfg: NavConfig, time=None, weather=None, not_sunny=None) -> set:
    time = cfg.time if time is None else time
    weather = cfg.weather if weather is None else weather
    not_sunny = cfg.not_sunny if not_sunny is None else not_sunny
    if time != "morning" or weather != "sunny":
        return set()
    return {tuple(c) for c in cfg.near_window} - {tuple(c) for c in not_sunny}


def navigation_step(cfg: NavConfig, state, action, rng, sunny=None, walker=None):
    """Sample ``(state', reward)`` from the true dynamics.

    ``state`` is ``(row, col, term)``; ``walker`` is the occupied cell or None.
    """
    r, c, term = state
    if term:
        raise ValueError("navigation_step called on a terminal state")
    if sunny is None:
        sunny = true_sunny_cells(cfg)
    dr, dc = DELTAS[action]
    tr, tc = r + dr, c + dc
    inside = 0 <= tr < cfg.rows and 0 <= tc < cfg.cols
    if inside and (tr, tc) != walker and rng.random() < cfg.move_success:
        r, c = tr, tc
    if (r, c) == tuple(cfg.goal):
        return (r, c, True), cfg.goal_reward
    if (r, c) in sunny and rng.random() < cfg.sun_loss:
        return (r, c, True), -cfg.fail_penalty
    return (r, c, False), -cfg.step_cost


class NavigationEnv:
    """Simulated world for the controller: true state, walker schedule, sensing."""

    def __init__(self, cfg: NavConfig, schedule=None):
        self.cfg = cfg
        self.bundle = build_navigation_domain(cfg)
        # schedule: step -> dict of overrides for time/weather/not_sunny
        self.schedule = dict(schedule or {})
        self.reset()

    def reset(self, rng=None):
        self.state = (self.cfg.start[0], self.cfg.start[1], False)
        self.t = 0
        self.time = self.cfg.time
        self.weather = self.cfg.weather
        self.not_sunny = tuple(self.cfg.not_sunny)
        self._apply_schedule()
        return self

    def _apply_schedule(self):
        change = self.schedule.get(self.t)
        if change:
            self.time = change.get("time", self.time)
            self.weather = change.get("weather", self.weather)
            self.not_sunny = tuple(change.get("not_sunny", self.not_sunny))

    def walker(self):
        path = self.cfg.walker_path
        if not path or self.t < self.cfg.walker_start_step:
            return None
        k = (self.t - self.cfg.walker_start_step) // max(1, self.cfg.walker_period)
        cell = tuple(path[k % len(path)])
        if cell == (self.state[0], self.state[1]):
            # the walker waits rather than walking into the robot
            prev = tuple(path[(k - 1) % len(path)]) if k > 0 else None
            return prev
        return cell

    def sunny_cells(self):
        return true_sunny_cells(self.cfg, self.time, self.weather, self.not_sunny)

    def sense(self) -> dict:
        facts = {"curr_time": self.time, "weather": self.weather}
        for cell in self.not_sunny:
            facts[cell_key("sunny", cell)] = FALSE
        w = self.walker()
        if w is not None:
            facts[cell_key("occupied", w)] = TRUE
        return facts

    def observe_state(self) -> dict:
        r, c, term = self.state
        return {"curr_row": row_name(r), "curr_col": col_name(c), "curr_term": TRUE if term else FALSE}

    @property
    def done(self) -> bool:
        return self.state[2]

    def step(self, action, rng):
        walker = self.walker()
        self.state, reward = navigation_step(self.cfg, self.state, action, rng,
                                             sunny=self.sunny_cells(), walker=walker)
        self.t += 1
        self._apply_schedule()
        return reward, None

    def outcome(self) -> dict:
        r, c, term = self.state
        return {"success": term and (r, c) == tuple(self.cfg.goal)}
