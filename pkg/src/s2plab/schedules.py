"""Interleaving engines for supervised and self-play updates.

Six schedule kinds plus a plain supervised baseline:
  sup            supervised updates until validation convergence (baseline)
  sp             self-play updates until task convergence (baseline)
  sp2sup         self-play to convergence, then supervised fine-tuning
  sup2sp         supervised to convergence, then self-play
  rand           per-step Bernoulli(q) choice between the two
  sched          supervised pretraining, then blocks of l self-play / m supervised
  sched_frz      sched with the speaker frozen after pretraining
  sched_rand_frz sched with a Bernoulli(r) freeze draw per block

`run_s2p` executes a schedule against a game environment, logs metrics, and
returns both the best-on-validation and the final agent pair.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field


from .agents import AgentPair
from .rng import RngStream

SUP, SP = "SUP", "SP"

KINDS = ("sup", "sp", "sp2sup", "sup2sp", "rand", "sched", "sched_frz",
         "sched_rand_frz")


@dataclass
class UpdateStep:
    kind: str
    speaker_frozen: bool = False


@dataclass
class ScheduleSpec:
    kind: str
    q: float = 0.75             # rand: probability of a supervised step
    l: int = 30                 # sched: self-play block length
    m: int = 1                  # sched: supervised block length
    r: float = 0.5              # sched_rand_frz: freeze probability
    patience: int = 10
    eval_interval: int = 50
    min_delta: float = 1e-4
    max_steps: int = 20000
    freeze_draw_per_block: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not (0.0 <= self.q <= 1.0 and 0.0 <= self.r <= 1.0):
            raise ValueError("q and r must be probabilities")
        if self.l < 0 or self.m < 0:
            raise ValueError("block lengths must be nonnegative")


@dataclass
class ConvergenceTracker:
    """Patience-based early stopping on a scalar metric."""

    patience: int = 10
    min_delta: float = 1e-4
    mode: str = "max"
    best: float = field(default=-math.inf)
    stale: int = 0
    converged: bool = False

    def __post_init__(self):
        if self.mode == "min":
            self.best = math.inf

    def update(self, value: float) -> bool:
        improved = (value > self.best + self.min_delta if self.mode == "max"
                    else value < self.best - self.min_delta)
        if improved:
            self.best = value
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.converged = True
        return self.converged


def check_convergence(tracker: ConvergenceTracker, new_value: float) -> bool:
    return tracker.update(new_value)


class ScheduleState:
    """Mutable cursor over a schedule's step sequence.

    `run_s2p` feeds metric values in via `observe_eval` / `observe_boundary`;
    `next_step` consults the trackers to decide phase changes and termination.
    """

    def __init__(self, spec: ScheduleSpec):
        self.spec = spec
        self.step_count = 0
        self.phase = {"sup": "sup", "sp": "sp", "sup2sp": "sup",
                      "sp2sup": "sp", "rand": "rand"}.get(spec.kind, "pretrain")
        self.val_tracker = ConvergenceTracker(spec.patience, spec.min_delta, "max")
        self.sp_tracker = ConvergenceTracker(spec.patience, spec.min_delta, "max")
        self.main_tracker = ConvergenceTracker(spec.patience, spec.min_delta, "max")
        # block bookkeeping for sched-family kinds
        self.block_kind: str | None = None
        self.block_left = 0
        self.block_frozen = False

    def observe_eval(self, val_acc: float, sp_acc: float) -> None:
        if self.phase in ("sup", "pretrain", "rand"):
            self.val_tracker.update(val_acc)
        elif self.phase == "sp":
            self.sp_tracker.update(sp_acc)

    def observe_boundary(self, val_acc: float) -> None:
        if self.phase == "main":
            self.main_tracker.update(val_acc)


def _block_freeze(spec: ScheduleSpec, rng: RngStream) -> bool:
    if spec.kind == "sched_frz":
        return True
    if spec.kind == "sched_rand_frz":
        return rng.bernoulli(spec.r)
    return False


def next_step(spec: ScheduleSpec, state: ScheduleState,
              rng: RngStream) -> UpdateStep | None:
    """Emit the schedule's next update step, or None when done."""
    if state.step_count >= spec.max_steps:
        return None

    kind = spec.kind
    if kind == "sup":
        return None if state.val_tracker.converged else UpdateStep(SUP)

    if kind == "sp":
        return None if state.sp_tracker.converged else UpdateStep(SP)

    if kind == "rand":
        if state.val_tracker.converged:
            return None
        step_kind = SUP if rng.bernoulli(spec.q) else SP
        return UpdateStep(step_kind)

    if kind in ("sup2sp", "sp2sup"):
        first, second = (("sup", "sp") if kind == "sup2sp" else ("sp", "sup"))
        if state.phase == first:
            first_tracker = state.val_tracker if first == "sup" else state.sp_tracker
            if not first_tracker.converged:
                return UpdateStep(SUP if first == "sup" else SP)
            state.phase = second
        second_tracker = state.val_tracker if second == "sup" else state.sp_tracker
        if second_tracker.converged:
            return None
        return UpdateStep(SUP if second == "sup" else SP)

    # sched family
    if state.phase == "pretrain":
        if not state.val_tracker.converged:
            return UpdateStep(SUP)
        state.phase = "main"
    if spec.l == 0:
        # no self-play to interleave: the converged pretraining IS the run
        return None
    if state.main_tracker.converged:
        return None
    if state.block_left == 0:
        if state.block_kind in (None, SUP):
            state.block_kind, state.block_left = SP, spec.l
        else:
            state.block_kind, state.block_left = SUP, spec.m
        if spec.freeze_draw_per_block:
            state.block_frozen = _block_freeze(spec, rng)
        if state.block_left == 0:    # m == 0: skip empty supervised blocks
            state.block_kind, state.block_left = SP, spec.l
            if spec.freeze_draw_per_block:
                state.block_frozen = _block_freeze(spec, rng)
    state.block_left -= 1
    frozen = state.block_frozen if spec.freeze_draw_per_block else _block_freeze(spec, rng)
    return UpdateStep(state.block_kind, speaker_frozen=frozen)


@dataclass
class MetricRow:
    step: int
    kind: str
    speaker_frozen: bool
    sup_loss: float
    sp_loss: float
    val_acc: float
    test_acc: float
    boundary: str = ""   # "sp_end" / "sup_end" / "pretrain_end" at block edges

    HEADER = "step,kind,speaker_frozen,sup_loss,sp_loss,val_acc,test_acc,boundary"

    def csv(self) -> str:
        return (f"{self.step},{self.kind},{int(self.speaker_frozen)},"
                f"{self.sup_loss!r},{self.sp_loss!r},{self.val_acc!r},"
                f"{self.test_acc!r},{self.boundary}")


@dataclass
class RunResult:
    best_pair: AgentPair
    final_pair: AgentPair
    log: list[MetricRow]
    best_val: float


def run_s2p(pair: AgentPair, env, spec: ScheduleSpec, rng: RngStream) -> RunResult:
    """Train `pair` in `env` following `spec`; returns best-on-val and final pairs.

    The environment supplies the update and evaluation primitives:
    supervised_update, selfplay_update, val_accuracy, selfplay_metric,
    test_accuracy. Independent child rng streams keep the supervised update
    path bitwise identical across schedules that degenerate to it.
    """
    sched_rng = rng.child("schedule")
    data_rng = rng.child("data")
    play_rng = rng.child("play")

    state = ScheduleState(spec)
    log: list[MetricRow] = []
    best_val = -math.inf
    best_pair = pair.copy()
    last_sup = float("nan")
    last_sp = float("nan")
    prev_kind: str | None = None
    track_boundaries = spec.kind in ("sched", "sched_frz", "sched_rand_frz")
    prev_phase = state.phase

    while True:
        step = next_step(spec, state, sched_rng)
        if step is None:
            break

        if track_boundaries and state.phase == "main":
            boundary = ""
            if prev_phase == "pretrain":
                boundary = "pretrain_end"
            elif prev_kind is not None and prev_kind != step.kind:
                boundary = "sp_end" if prev_kind == SP else "sup_end"
            if boundary:
                val = env.val_accuracy(pair)
                if boundary in ("sup_end", "pretrain_end"):
                    # judge main-phase convergence where supervised recovery
                    # has just finished
                    state.observe_boundary(val)
                log.append(MetricRow(state.step_count, "EVAL", step.speaker_frozen,
                                     last_sup, last_sp, val,
                                     env.test_accuracy(pair), boundary))
                if val > best_val:
                    best_val = val
                    best_pair = pair.copy()
        prev_phase = state.phase
        prev_kind = step.kind

        if step.kind == SUP:
            last_sup = env.supervised_update(pair, data_rng, step.speaker_frozen)
        else:
            last_sp = env.selfplay_update(pair, play_rng, step.speaker_frozen)
        state.step_count += 1

        if state.step_count % spec.eval_interval == 0:
            val = env.val_accuracy(pair)
            sp_acc = env.selfplay_metric(pair)
            state.observe_eval(val, sp_acc)
            log.append(MetricRow(state.step_count, step.kind, step.speaker_frozen,
                                 last_sup, last_sp, val, env.test_accuracy(pair)))
            if val > best_val:
                best_val = val
                best_pair = pair.copy()

    # closing evaluation so short runs still record something
    val = env.val_accuracy(pair)
    log.append(MetricRow(state.step_count, "END", False, last_sup, last_sp,
                         val, env.test_accuracy(pair)))
    if val > best_val:
        best_val = val
        best_pair = pair.copy()
    return RunResult(best_pair, pair, log, best_val)


def write_metric_log(path, log: list[MetricRow]) -> None:
    with open(path, "w") as fh:
        fh.write(MetricRow.HEADER + "\n")
        for row in log:
            fh.write(row.csv() + "\n")
