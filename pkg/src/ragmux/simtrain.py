"""Desk-scale group-relative training over a synthetic retrieval environment.

The environment hides a per-question evidence requirement (a subset of
{passage, graph}); search actions find required evidence kinds with
mode-dependent probabilities and mode-dependent unit costs, and an answer is
correct iff every required kind was gathered first. The policy is a tabular
softmax over (step, evidence-gathered) states, which keeps every gradient
finite-difference-checkable.

Scope note: real two-stage results on language models entangle exploration,
token masking, and batch composition; this simulator isolates only the
reward-shaping effect of the second stage.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NonFiniteGradient
from .retrieval import ModeCosts, RetrievalMode
from .rewards import (GRPOConfig, RewardConfig, RewardRecord,
                      batch_efficiency_rewards, composite_reward,
                      group_advantages)

SEARCH_PASSAGE, SEARCH_GRAPH, SEARCH_HYBRID, ANSWER = range(4)
N_ACTIONS = 4
ACTION_NAMES = ("search_passage", "search_graph", "search_hybrid", "answer")
ACTION_MODES = {SEARCH_PASSAGE: RetrievalMode.PASSAGE,
                SEARCH_GRAPH: RetrievalMode.GRAPH,
                SEARCH_HYBRID: RetrievalMode.HYBRID}

EVIDENCE_KINDS = ("passage", "graph")
_EVIDENCE_BIT = {"passage": 1, "graph": 2}


@dataclass(frozen=True)
class QuestionType:
    name: str
    requires: frozenset[str]
    weight: float = 1.0

    def __post_init__(self):
        if not self.requires <= set(EVIDENCE_KINDS):
            raise ValueError(f"unknown evidence kind in {self.requires!r}")
        if self.weight <= 0:
            raise ValueError("weight must be positive")

    @property
    def required_bits(self) -> int:
        return sum(_EVIDENCE_BIT[k] for k in self.requires)


@dataclass(frozen=True)
class SimEnv:
    """Synthetic QA environment with hidden evidence requirements."""

    question_types: tuple[QuestionType, ...]
    find_prob: dict[int, dict[str, float]]  # search action -> kind -> prob
    mode_costs: ModeCosts = field(default_factory=ModeCosts)
    budget: int = 4

    def __post_init__(self):
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if not any(not t.requires for t in self.question_types):
            raise ValueError("need at least one question type solvable without retrieval")
        if not any("graph" in t.requires for t in self.question_types):
            raise ValueError("need at least one question type requiring graph evidence")
        for action in (SEARCH_PASSAGE, SEARCH_GRAPH, SEARCH_HYBRID):
            for kind in EVIDENCE_KINDS:
                p = self.find_prob[action][kind]
                if not 0.0 <= p <= 1.0:
                    raise ValueError("find probabilities must lie in [0, 1]")

    @property
    def n_states(self) -> int:
        return self.budget * 4

    def state_index(self, step: int, evidence_bits: int) -> int:
        return step * 4 + evidence_bits

    def type_named(self, name: str) -> QuestionType:
        for t in self.question_types:
            if t.name == name:
                return t
        raise KeyError(name)

    def sample_type(self, rng: np.random.Generator) -> QuestionType:
        weights = np.array([t.weight for t in self.question_types])
        idx = rng.choice(len(self.question_types), p=weights / weights.sum())
        return self.question_types[idx]

    def action_cost(self, action: int) -> float:
        if action == ANSWER:
            return 0.0
        return self.mode_costs.of(ACTION_MODES[action])

    @classmethod
    def default(cls) -> "SimEnv":
        """Mixed workload: direct-answer, single-evidence, and two-evidence
        questions, with graph lookups costlier than passage lookups."""
        return cls(
            question_types=(
                QuestionType("direct", frozenset()),
                QuestionType("text", frozenset({"passage"})),
                QuestionType("relational", frozenset({"graph"})),
                QuestionType("compound", frozenset({"passage", "graph"})),
            ),
            find_prob={
                SEARCH_PASSAGE: {"passage": 0.9, "graph": 0.0},
                SEARCH_GRAPH: {"passage": 0.0, "graph": 0.9},
                SEARCH_HYBRID: {"passage": 0.85, "graph": 0.85},
            },
        )


class TabularPolicy:
    """Softmax policy over (step, evidence) states."""

    def __init__(self, logits: np.ndarray):
        self.logits = np.asarray(logits, dtype=np.float64)

    @classmethod
    def uniform(cls, n_states: int) -> "TabularPolicy":
        return cls(np.zeros((n_states, N_ACTIONS)))

    def copy(self) -> "TabularPolicy":
        return TabularPolicy(self.logits.copy())

    def probs(self, state: int) -> np.ndarray:
        row = self.logits[state]
        shifted = row - row.max()
        exp = np.exp(shifted)
        return exp / exp.sum()

    def log_prob(self, state: int, action: int) -> float:
        row = self.logits[state]
        shifted = row - row.max()
        return float(shifted[action] - math.log(np.exp(shifted).sum()))

    def sample(self, state: int, rng: np.random.Generator) -> int:
        return int(rng.choice(N_ACTIONS, p=self.probs(state)))


@dataclass(frozen=True)
class Decision:
    state: int
    action: int
    log_prob_old: float


@dataclass(frozen=True)
class SimTrajectory:
    question_type: str
    decisions: tuple[Decision, ...]
    outcome: int
    cost: float
    retrieval_turns: int
    answered: bool


def rollout_episode(env: SimEnv, policy: TabularPolicy, qtype: QuestionType,
                    rng: np.random.Generator) -> SimTrajectory:
    bits = 0
    required = qtype.required_bits
    decisions: list[Decision] = []
    cost = 0.0
    turns = 0
    answered = False
    outcome = 0
    for step in range(env.budget):
        state = env.state_index(step, bits)
        action = policy.sample(state, rng)
        decisions.append(Decision(state=state, action=action,
                                  log_prob_old=policy.log_prob(state, action)))
        if action == ANSWER:
            answered = True
            outcome = int(required & ~bits == 0)
            break
        cost += env.action_cost(action)
        turns += 1
        for kind in EVIDENCE_KINDS:  # fixed draw order keeps rollouts seed-stable
            bit = _EVIDENCE_BIT[kind]
            if required & bit and not bits & bit:
                if rng.random() < env.find_prob[action][kind]:
                    bits |= bit
    return SimTrajectory(question_type=qtype.name, decisions=tuple(decisions),
                         outcome=outcome, cost=cost, retrieval_turns=turns,
                         answered=answered)


def rollout_group(env: SimEnv, policy: TabularPolicy, question_type: str, G: int,
                  seed: int | Sequence[int]) -> list[SimTrajectory]:
    """Sample G trajectories for one question type, deterministic per seed."""
    if G < 2:
        raise ValueError("group size must be at least 2")
    entropy = [seed] if isinstance(seed, int) else list(seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy))
    qtype = env.type_named(question_type)
    return [rollout_episode(env, policy, qtype, rng) for _ in range(G)]


def surrogate_and_gradient(logits: np.ndarray, groups: Sequence[Sequence[SimTrajectory]],
                           advantages: Sequence[Sequence[float]],
                           ref_logits: np.ndarray,
                           config: GRPOConfig) -> tuple[float, np.ndarray]:
    """Clipped decision-level objective and its exact gradient.

    J = mean over groups of (1/G) sum_i (1/T_i) sum_t
        [min(r*A_i, clip(r, 1-eps, 1+eps)*A_i) - beta*(rho - ln(rho) - 1)]

    where r is the per-decision probability ratio against the stored rollout
    log-probs and rho the per-decision ratio of the KL reference policy to
    the current one.
    """
    policy = TabularPolicy(logits)
    reference = TabularPolicy(ref_logits)
    grad = np.zeros_like(policy.logits)
    eps = config.clip_epsilon
    beta = config.kl_coefficient
    total = 0.0
    n_groups = len(groups)
    for group, group_adv in zip(groups, advantages):
        for trajectory, advantage in zip(group, group_adv):
            weight = 1.0 / (n_groups * len(group) * len(trajectory.decisions))
            for decision in trajectory.decisions:
                state, action = decision.state, decision.action
                probs = policy.probs(state)
                log_new = policy.log_prob(state, action)
                ratio = math.exp(log_new - decision.log_prob_old)
                unclipped = ratio * advantage
                clipped = min(max(ratio, 1.0 - eps), 1.0 + eps) * advantage
                if unclipped <= clipped:
                    value = unclipped
                    dvalue_dlogp = advantage * ratio
                else:  # clipped branch; ratio is outside the band, flat in theta
                    value = clipped
                    dvalue_dlogp = 0.0
                rho = math.exp(reference.log_prob(state, action) - log_new)
                kl = rho - math.log(rho) - 1.0
                dkl_dlogp = 1.0 - rho
                total += weight * (value - beta * kl)
                coeff = weight * (dvalue_dlogp - beta * dkl_dlogp)
                onehot = np.zeros(N_ACTIONS)
                onehot[action] = 1.0
                grad[state] += coeff * (onehot - probs)
    return total, grad


@dataclass(frozen=True)
class TrainRow:
    update: int
    stage: int
    mean_reward: float
    accuracy: float
    mean_turns: float
    mean_cost: float
    objective: float

    def to_json(self) -> dict:
        return {"update": self.update, "stage": self.stage,
                "mean_reward": self.mean_reward, "accuracy": self.accuracy,
                "mean_turns": self.mean_turns, "mean_cost": self.mean_cost,
                "objective": self.objective}


@dataclass(frozen=True)
class EvalStats:
    accuracy: float
    mean_cost: float
    mean_turns: float

    def to_json(self) -> dict:
        return {"accuracy": self.accuracy, "mean_cost": self.mean_cost,
                "mean_turns": self.mean_turns}


@dataclass
class TrainReport:
    rows: list[TrainRow] = field(default_factory=list)
    stage_boundary: int | None = None
    stage1_eval: EvalStats | None = None
    stage2_eval: EvalStats | None = None

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.rows:
                fh.write(json.dumps(row.to_json()) + "\n")
            meta = {"stage_boundary": self.stage_boundary}
            if self.stage1_eval is not None:
                meta["stage1_eval"] = self.stage1_eval.to_json()
            if self.stage2_eval is not None:
                meta["stage2_eval"] = self.stage2_eval.to_json()
            fh.write(json.dumps({"meta": meta}) + "\n")


def grpo_update(policy: TabularPolicy, groups: Sequence[Sequence[SimTrajectory]],
                reward_config: RewardConfig, grpo_config: GRPOConfig,
                learning_rate: float, ref_logits: np.ndarray | None = None,
                update_index: int = 0) -> tuple[TabularPolicy, TrainRow]:
    """One ascent step on the clipped surrogate from freshly sampled groups.

    ``ref_logits`` anchors the KL penalty; left unset it anchors to the
    pre-update policy itself, which makes the penalty vanish at the single
    inner step (the rollout-policy reading of the objective). The two-stage
    trainer passes the stage-start snapshot instead.
    """
    if not groups:
        raise ValueError("groups must be non-empty")
    flat = [t for group in groups for t in group]
    costs = [t.cost for t in flat]
    outcomes = [t.outcome for t in flat]
    efficiencies = batch_efficiency_rewards(costs, outcomes, reward_config)
    rewards = [composite_reward(o, e, reward_config.stage)
               for o, e in zip(outcomes, efficiencies)]

    advantages: list[list[float]] = []
    offset = 0
    for group in groups:
        group_rewards = rewards[offset:offset + len(group)]
        advantages.append(group_advantages(group_rewards, grpo_config.std_floor))
        offset += len(group)

    reference = policy.logits if ref_logits is None else ref_logits
    objective, grad = surrogate_and_gradient(policy.logits, groups, advantages,
                                             reference, grpo_config)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("gradient contains non-finite entries")
    updated = TabularPolicy(policy.logits + learning_rate * grad)

    row = TrainRow(
        update=update_index,
        stage=reward_config.stage,
        mean_reward=float(np.mean(rewards)),
        accuracy=float(np.mean(outcomes)),
        mean_turns=float(np.mean([t.retrieval_turns for t in flat])),
        mean_cost=float(np.mean(costs)),
        objective=objective,
    )
    return updated, row


def evaluate_policy(env: SimEnv, policy: TabularPolicy, episodes: int,
                    seed: int) -> EvalStats:
    """Monte Carlo evaluation under the stochastic policy, seed-stable."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 10_007]))
    outcomes, costs, turns = [], [], []
    for _ in range(episodes):
        qtype = env.sample_type(rng)
        t = rollout_episode(env, policy, qtype, rng)
        outcomes.append(t.outcome)
        costs.append(t.cost)
        turns.append(t.retrieval_turns)
    return EvalStats(accuracy=float(np.mean(outcomes)),
                     mean_cost=float(np.mean(costs)),
                     mean_turns=float(np.mean(turns)))


@dataclass(frozen=True)
class TrainSettings:
    learning_rate: float = 5.0
    groups_per_update: int = 16
    eval_episodes: int = 500


def train_two_stage(env: SimEnv, grpo_config: GRPOConfig, stage1_steps: int,
                    stage2_steps: int, seed: int,
                    settings: TrainSettings | None = None,
                    mode_costs: ModeCosts | None = None,
                    ) -> tuple[TabularPolicy, TrainReport]:
    """Outcome-only training first, then the accuracy-and-efficiency reward.

    Per-group seeds derive from SeedSequence([seed, update, group]); the KL
    reference is the policy snapshot at the start of the current stage.
    """
    if stage1_steps < 0 or stage2_steps < 0 or stage1_steps + stage2_steps < 1:
        raise ValueError("need at least one training step across both stages")
    settings = settings or TrainSettings()
    costs = mode_costs or env.mode_costs
    rng = np.random.default_rng(np.random.SeedSequence([seed, 20_011]))
    policy = TabularPolicy.uniform(env.n_states)
    report = TrainReport(stage_boundary=stage1_steps if stage2_steps else None)

    update = 0
    for stage, steps in ((1, stage1_steps), (2, stage2_steps)):
        if steps == 0:
            continue
        reward_config = RewardConfig(stage=stage, mode_costs=costs)
        stage_ref = policy.logits.copy()
        for _ in range(steps):
            groups = []
            for g in range(settings.groups_per_update):
                qtype = env.sample_type(rng)
                groups.append(rollout_group(env, policy, qtype.name,
                                            grpo_config.group_size,
                                            seed=[seed, update, g]))
            policy, row = grpo_update(policy, groups, reward_config, grpo_config,
                                      settings.learning_rate, ref_logits=stage_ref,
                                      update_index=update)
            report.rows.append(row)
            update += 1
        stats = evaluate_policy(env, policy, settings.eval_episodes,
                                seed=seed * 1_000 + stage)
        if stage == 1:
            report.stage1_eval = stats
        else:
            report.stage2_eval = stats
    return policy, report


def batch_reward_records(env: SimEnv, policy: TabularPolicy,
                         reward_config: RewardConfig, grpo_config: GRPOConfig,
                         groups: int, seed: int) -> list[RewardRecord]:
    """Roll one batch under the given policy and export its full reward
    accounting. At toy scale the outcome doubles as the F1 column (answers
    are exactly right or exactly wrong)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 30_029]))
    sampled = []
    for g in range(groups):
        qtype = env.sample_type(rng)
        sampled.append((qtype.name, rollout_group(env, policy, qtype.name,
                                                  grpo_config.group_size,
                                                  seed=[seed, 30_029, g])))
    flat = [t for _, group in sampled for t in group]
    efficiencies = batch_efficiency_rewards([t.cost for t in flat],
                                            [t.outcome for t in flat],
                                            reward_config)
    rewards = [composite_reward(t.outcome, e, reward_config.stage)
               for t, e in zip(flat, efficiencies)]
    records: list[RewardRecord] = []
    offset = 0
    for g, (name, group) in enumerate(sampled):
        advantages = group_advantages(rewards[offset:offset + len(group)],
                                      grpo_config.std_floor)
        for i, trajectory in enumerate(group):
            records.append(RewardRecord(
                question_id=f"{name}/g{g}/{i}",
                outcome=trajectory.outcome,
                f1=float(trajectory.outcome),
                cost=trajectory.cost,
                efficiency=efficiencies[offset + i],
                reward=rewards[offset + i],
                advantage=advantages[i],
            ))
        offset += len(group)
    return records


@dataclass(frozen=True)
class SeedOutcome:
    seed: int
    stage1: EvalStats
    stage2: EvalStats

    @property
    def cost_reduction(self) -> float:
        if self.stage1.mean_cost == 0.0:
            return 0.0
        return (self.stage1.mean_cost - self.stage2.mean_cost) / self.stage1.mean_cost

    @property
    def accuracy_delta(self) -> float:
        return self.stage2.accuracy - self.stage1.accuracy


def two_stage_summary(outcomes: Sequence[SeedOutcome]) -> dict:
    reductions = sorted(o.cost_reduction for o in outcomes)
    deltas = sorted(o.accuracy_delta for o in outcomes)
    return {
        "seeds": [o.seed for o in outcomes],
        "median_cost_reduction": float(np.median(reductions)),
        "median_accuracy_delta": float(np.median(deltas)),
        "per_seed": [
            {"seed": o.seed, "stage1": o.stage1.to_json(), "stage2": o.stage2.to_json(),
             "cost_reduction": o.cost_reduction, "accuracy_delta": o.accuracy_delta}
            for o in outcomes
        ],
    }
