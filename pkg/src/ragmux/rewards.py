"""Rewards and advantages: answer metrics, the two-stage composite reward
with batch-centered efficiency shaping, and the group-relative clipped
surrogate objective.
"""

from __future__ import annotations

import json
import math
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .retrieval import ModeCosts

_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(raw: str) -> str:
    """Lowercase, drop punctuation and articles, collapse whitespace."""
    text = raw.lower().translate(_PUNCT_TABLE)
    text = _ARTICLES_RE.sub(" ", text)
    return " ".join(text.split())


def em_reward(answer: str, gold: Sequence[str]) -> int:
    if not gold:
        raise ValueError("gold answers must be non-empty")
    normalized = normalize_answer(answer)
    return int(any(normalized == normalize_answer(g) for g in gold))


def _token_f1(prediction: str, truth: str) -> float:
    pred_tokens = normalize_answer(prediction).split()
    truth_tokens = normalize_answer(truth).split()
    if not pred_tokens or not truth_tokens:
        return float(pred_tokens == truth_tokens)
    common = Counter(pred_tokens) & Counter(truth_tokens)
    same = sum(common.values())
    if same == 0:
        return 0.0
    precision = same / len(pred_tokens)
    recall = same / len(truth_tokens)
    return 2 * precision * recall / (precision + recall)


def f1_score(answer: str, gold: Sequence[str]) -> float:
    if not gold:
        raise ValueError("gold answers must be non-empty")
    return max(_token_f1(answer, g) for g in gold)


WALL_CLOCK = "wall_clock"
UNIT_COST = "unit_cost"
BATCH_MAX_2X = "batch_max_2x"


@dataclass(frozen=True)
class RewardConfig:
    """Stage selection and cost accounting for the composite reward.

    ``batch_max_2x`` sets the normalizer T to twice the largest trajectory
    cost in the batch, the tightest rule that keeps both t/T and t_avg/T in
    [0, 0.5] for every batch member.
    """

    stage: int = 1
    t_rule: str = BATCH_MAX_2X
    cost_source: str = UNIT_COST
    mode_costs: ModeCosts = field(default_factory=ModeCosts)

    def __post_init__(self):
        if self.stage not in (1, 2):
            raise ValueError("stage must be 1 or 2")
        if self.t_rule != BATCH_MAX_2X:
            raise ValueError(f"unknown t_rule {self.t_rule!r}")
        if self.cost_source not in (WALL_CLOCK, UNIT_COST):
            raise ValueError(f"unknown cost_source {self.cost_source!r}")


@dataclass(frozen=True)
class GRPOConfig:
    group_size: int = 5
    clip_epsilon: float = 0.2
    kl_coefficient: float = 0.001
    std_floor: float = 1e-8

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        if self.clip_epsilon <= 0.0:
            raise ValueError("clip_epsilon must be positive")
        if self.kl_coefficient < 0.0:
            raise ValueError("kl_coefficient must be non-negative")
        if self.std_floor <= 0.0:
            raise ValueError("std_floor must be positive")


def trajectory_cost(cost, config: RewardConfig) -> float:
    """Pick the cost channel the config selects from a RetrievalCost-like
    object (wall_seconds or the deterministic unit_cost)."""
    return cost.wall_seconds if config.cost_source == WALL_CLOCK else cost.unit_cost


def batch_efficiency_rewards(costs: Sequence[float], outcomes: Sequence[int],
                             config: RewardConfig) -> list[float]:
    """Centered, normalized cost bonus: (t_avg - t_i) / T.

    The centering average runs over the whole batch, correct and incorrect
    trajectories alike; the produced value matters only for correct ones
    (incorrect entries hold a 0 placeholder). Every value lies in
    [-0.5, 0.5].
    """
    if len(costs) != len(outcomes) or not costs:
        raise ValueError("costs and outcomes must be the same non-zero length")
    if any(c < 0 for c in costs):
        raise ValueError("costs must be non-negative")
    t_avg = sum(costs) / len(costs)
    t_max = max(costs)
    normalizer = 2.0 * t_max if t_max > 0.0 else 1.0
    # rounding in the mean can overshoot the bound by an ulp; clamp to the
    # contractual range
    return [min(0.5, max(-0.5, (t_avg - t) / normalizer)) if outcome == 1 else 0.0
            for t, outcome in zip(costs, outcomes)]


def composite_reward(outcome: int, efficiency: float, stage: int) -> float:
    """Stage 1 pays correctness alone; stage 2 adds the efficiency bonus,
    but only to correct trajectories."""
    if outcome not in (0, 1):
        raise ValueError("outcome must be 0 or 1")
    if not -0.5 <= efficiency <= 0.5:
        raise ValueError("efficiency must lie in [-0.5, 0.5]")
    if stage == 1:
        return float(outcome)
    if stage == 2:
        return 0.0 if outcome == 0 else 1.0 + efficiency
    raise ValueError("stage must be 1 or 2")


def group_advantages(rewards: Sequence[float], std_floor: float = 1e-8) -> list[float]:
    """Center on the group mean and scale by the population std.

    Degenerate groups (std below the floor) get all-zero advantages instead
    of a blown-up division.
    """
    if len(rewards) < 2:
        raise ValueError("group must contain at least 2 rewards")
    mean = sum(rewards) / len(rewards)
    variance = sum((r - mean) ** 2 for r in rewards) / len(rewards)
    std = math.sqrt(variance)
    if std < std_floor:
        return [0.0] * len(rewards)
    return [(r - mean) / std for r in rewards]


def grpo_surrogate(ratios: Sequence[float], advantages: Sequence[float],
                   kl_terms: Sequence[float], config: GRPOConfig) -> float:
    """Group-mean clipped objective:
    (1/G) * sum_i [min(r_i*A_i, clip(r_i, 1-eps, 1+eps)*A_i) - beta*kl_i].
    """
    if not len(ratios) == len(advantages) == len(kl_terms):
        raise ValueError("ratios, advantages, kl_terms must share a length")
    if not ratios:
        raise ValueError("group must be non-empty")
    if any(r <= 0 for r in ratios):
        raise ValueError("ratios must be positive")
    if any(k < 0 for k in kl_terms):
        raise ValueError("kl terms must be non-negative")
    eps = config.clip_epsilon
    total = 0.0
    for r, a, kl in zip(ratios, advantages, kl_terms):
        clipped = min(max(r, 1.0 - eps), 1.0 + eps)
        total += min(r * a, clipped * a) - config.kl_coefficient * kl
    return total / len(ratios)


@dataclass(frozen=True)
class RewardRecord:
    """One trajectory's reward accounting, as exported to reward reports."""

    question_id: str
    outcome: int
    f1: float
    cost: float
    efficiency: float
    reward: float
    advantage: float

    def to_json(self) -> dict:
        return {"question_id": self.question_id, "outcome": self.outcome,
                "f1": self.f1, "cost": self.cost, "efficiency": self.efficiency,
                "reward": self.reward, "advantage": self.advantage}


def write_reward_report(records: Sequence[RewardRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json()) + "\n")


def read_reward_report(path: str | Path) -> list[RewardRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(RewardRecord(**json.loads(line)))
    return records
