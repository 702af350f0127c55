"""Benchmark evaluation: run questions through the episode loop and score
EM/F1 plus retrieval-turn and cost statistics.

Dataset format: line-delimited ``{"id", "question", "golden_answers": [..]}``.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import MalformedRecord, MalformedReport
from .orchestrator import EpisodeRunner, PolicyClient, Trajectory
from .rewards import em_reward, f1_score

_MODES = ("passage", "graph", "hybrid")
_AGG_TOL = 1e-12


@dataclass(frozen=True)
class BenchmarkRecord:
    question_id: str
    question: str
    gold_answers: tuple[str, ...]


def load_dataset(path: str | Path) -> list[BenchmarkRecord]:
    records: list[BenchmarkRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{Path(path).name}:{lineno}"
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{where}: invalid JSON: {exc}") from exc
            for key in ("id", "question", "golden_answers"):
                if key not in raw:
                    raise MalformedRecord(f"{where}: missing field {key!r}")
            qid = raw["id"]
            golds = raw["golden_answers"]
            if qid in seen:
                raise MalformedRecord(f"{where}: duplicate question id {qid!r}")
            if not isinstance(golds, list) or not golds:
                raise MalformedRecord(f"{where}: golden_answers must be non-empty")
            seen.add(qid)
            records.append(BenchmarkRecord(question_id=qid, question=raw["question"],
                                           gold_answers=tuple(golds)))
    return records


@dataclass(frozen=True)
class QuestionResult:
    question_id: str
    question: str
    em: int
    f1: float
    retrieval_turns: int
    steps_used: int
    cost_unit: float
    cost_wall: float
    mode_histogram: dict[str, int]
    final_answer: str | None

    def to_json(self) -> dict:
        return {
            "kind": "question", "question_id": self.question_id,
            "question": self.question, "em": self.em, "f1": self.f1,
            "retrieval_turns": self.retrieval_turns, "steps_used": self.steps_used,
            "cost_unit": self.cost_unit, "cost_wall": self.cost_wall,
            "mode_histogram": self.mode_histogram, "final_answer": self.final_answer,
        }


@dataclass
class EvalReport:
    dataset: str
    rows: list[QuestionResult]
    budget: int
    top_k: int
    generated_at: str | None = None
    aggregates: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = compute_aggregates(self.rows)

    def write_jsonl(self, path: str | Path, deterministic: bool = False) -> None:
        meta = {"kind": "meta", "dataset": self.dataset, "budget": self.budget,
                "top_k": self.top_k,
                "generated_at": None if deterministic else self.generated_at}
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(meta, ensure_ascii=False) + "\n")
            for row in self.rows:
                payload = row.to_json()
                if deterministic:
                    payload["cost_wall"] = 0.0
                fh.write(json.dumps(payload, ensure_ascii=False) + "\n")
            fh.write(json.dumps({"kind": "aggregate", **self.aggregates}) + "\n")


def compute_aggregates(rows: Sequence[QuestionResult]) -> dict:
    n = len(rows)
    if n == 0:
        return {"n": 0, "mean_em": 0.0, "mean_f1": 0.0, "mean_turns": 0.0,
                "mean_cost_unit": 0.0,
                "mode_fractions": {m: 0.0 for m in _MODES}}
    searches = {m: 0 for m in _MODES}
    for row in rows:
        for mode, count in row.mode_histogram.items():
            searches[mode] += count
    total_searches = sum(searches.values())
    return {
        "n": n,
        "mean_em": sum(r.em for r in rows) / n,
        "mean_f1": sum(r.f1 for r in rows) / n,
        "mean_turns": sum(r.retrieval_turns for r in rows) / n,
        "mean_cost_unit": sum(r.cost_unit for r in rows) / n,
        "mode_fractions": {
            m: (searches[m] / total_searches if total_searches else 0.0)
            for m in _MODES
        },
    }


def score_trajectory(record: BenchmarkRecord, trajectory: Trajectory) -> QuestionResult:
    answer = trajectory.final_answer if trajectory.final_answer is not None else ""
    return QuestionResult(
        question_id=record.question_id,
        question=record.question,
        em=em_reward(answer, record.gold_answers),
        f1=f1_score(answer, record.gold_answers),
        retrieval_turns=trajectory.retrieval_turns,
        steps_used=trajectory.steps_used,
        cost_unit=trajectory.total_retrieval_cost.unit_cost,
        cost_wall=trajectory.total_retrieval_cost.wall_seconds,
        mode_histogram=trajectory.mode_histogram(),
        final_answer=trajectory.final_answer,
    )


def run_benchmark(records: Sequence[BenchmarkRecord], runner: EpisodeRunner,
                  policy: PolicyClient, parallelism: int = 1,
                  dataset_name: str = "dataset") -> EvalReport:
    """One trajectory per question; aggregates recomputed from the rows."""
    trajectories = runner.run_batch([r.question for r in records], policy,
                                    parallelism=parallelism)
    rows = [score_trajectory(rec, traj) for rec, traj in zip(records, trajectories)]
    return EvalReport(dataset=dataset_name, rows=rows, budget=runner.budget,
                      top_k=runner.top_k,
                      generated_at=_dt.datetime.now(_dt.timezone.utc).isoformat())


def read_report(path: str | Path) -> EvalReport:
    """Parse a report file, checking schema and aggregate consistency."""
    meta: dict | None = None
    rows: list[QuestionResult] = []
    stored_aggregates: dict | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{Path(path).name}:{lineno}"
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedReport(f"{where}: invalid JSON: {exc}") from exc
            kind = payload.get("kind")
            if kind == "meta":
                meta = payload
            elif kind == "question":
                try:
                    rows.append(QuestionResult(
                        question_id=payload["question_id"], question=payload["question"],
                        em=payload["em"], f1=payload["f1"],
                        retrieval_turns=payload["retrieval_turns"],
                        steps_used=payload["steps_used"],
                        cost_unit=payload["cost_unit"], cost_wall=payload["cost_wall"],
                        mode_histogram=payload["mode_histogram"],
                        final_answer=payload["final_answer"]))
                except KeyError as exc:
                    raise MalformedReport(f"{where}: missing field {exc}") from exc
            elif kind == "aggregate":
                stored_aggregates = {k: v for k, v in payload.items() if k != "kind"}
            else:
                raise MalformedReport(f"{where}: unknown record kind {kind!r}")
    if meta is None:
        raise MalformedReport(f"{path}: missing meta record")
    report = EvalReport(dataset=meta["dataset"], rows=rows, budget=meta["budget"],
                        top_k=meta["top_k"], generated_at=meta.get("generated_at"))
    if stored_aggregates is not None:
        _check_aggregates(stored_aggregates, report.aggregates, path)
    return report


def _check_aggregates(stored: dict, recomputed: dict, path: str | Path) -> None:
    for key, expected in recomputed.items():
        if key not in stored:
            raise MalformedReport(f"{path}: aggregate missing {key!r}")
        actual = stored[key]
        if isinstance(expected, dict):
            for sub, sub_expected in expected.items():
                if abs(actual.get(sub, float("nan")) - sub_expected) > _AGG_TOL:
                    raise MalformedReport(
                        f"{path}: aggregate {key}.{sub} inconsistent with rows")
        elif abs(actual - expected) > _AGG_TOL:
            raise MalformedReport(f"{path}: aggregate {key!r} inconsistent with rows")
