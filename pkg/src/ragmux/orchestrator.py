"""Episode execution: drive the policy turn by turn, run retrieval on search
actions, inject information blocks, and record the trajectory.

A single episode is strictly sequential (the context is a growing dependency
chain); distinct episodes may run concurrently.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol, Sequence

from . import protocol
from .errors import (BatchExecutionError, DimensionMismatch, EmbeddingProviderError,
                     EmptySeedSet, GraphUnavailable, PolicyUnreachable, UnknownSeedNode)
from .protocol import (Action, Answer, ProtocolError, Search, Terminated,
                       parse_rollout_segment, render_information)
from .retrieval import RetrievalCost, RetrievalEngine

POLICY_KEY_ENV = "RAGMUX_POLICY_API_KEY"

MALFORMED_NOTICE = ("<information>search query malformed: "
                    "specify <Passage> and/or <Graph></information>")

DEFAULT_BUDGET = 4
DEFAULT_TOP_K = 3
DEFAULT_TEMPERATURE = 1.0
DEFAULT_MAX_TOKENS = 500


def prompt_template() -> str:
    return resources.files("ragmux").joinpath("assets/prompt_template.txt") \
        .read_text(encoding="utf-8")


def build_initial_context(question: str) -> str:
    return prompt_template().replace("{question}", question)


class PolicyClient(Protocol):
    def generate(self, context: str, stop_sequences: Sequence[str],
                 temperature: float, max_tokens: int) -> str:
        """Return generated text up to and including a stop sequence."""
        ...


@dataclass(frozen=True)
class Segment:
    """One generation turn: what the policy said and what happened next.

    ``information`` is set only when the action was a search whose retrieval
    actually executed; error notices live in the transcript, not here.
    """

    generated_text: str
    action: Action
    information: str | None = None
    cost: RetrievalCost | None = None
    docs: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Trajectory:
    question: str
    segments: tuple[Segment, ...]
    final_answer: str | None
    retrieval_turns: int
    total_retrieval_cost: RetrievalCost
    steps_used: int
    transcript: str

    def __post_init__(self):
        executed = sum(1 for s in self.segments
                       if isinstance(s.action, Search) and s.information is not None)
        if executed != self.retrieval_turns:
            raise ValueError("retrieval_turns does not match executed searches")
        if not self.retrieval_turns <= self.steps_used:
            raise ValueError("retrieval_turns exceeds steps_used")
        answered = any(isinstance(s.action, Answer) for s in self.segments)
        if answered != (self.final_answer is not None):
            raise ValueError("final_answer must be present iff an Answer segment exists")

    def mode_histogram(self) -> dict[str, int]:
        hist: dict[str, int] = {}
        for s in self.segments:
            if isinstance(s.action, Search) and s.information is not None:
                hist[s.action.mode.value] = hist.get(s.action.mode.value, 0) + 1
        return hist


class EpisodeRunner:
    """Runs the generate/parse/retrieve loop against a retrieval engine."""

    def __init__(self, engine: RetrievalEngine, budget: int = DEFAULT_BUDGET,
                 top_k: int = DEFAULT_TOP_K, temperature: float = DEFAULT_TEMPERATURE,
                 max_tokens: int = DEFAULT_MAX_TOKENS):
        if budget <= 0:
            raise ValueError("budget must be positive")
        if top_k <= 0:
            raise ValueError("top_k must be positive")
        self.engine = engine
        self.budget = budget
        self.top_k = top_k
        self.temperature = temperature
        self.max_tokens = max_tokens

    def run_episode(self, question: str, policy: PolicyClient) -> Trajectory:
        context = build_initial_context(question)
        segments: list[Segment] = []
        final_answer: str | None = None
        total_cost = RetrievalCost.zero()
        steps = 0

        while steps < self.budget:
            text = policy.generate(context, protocol.STOP_SEQUENCES,
                                   self.temperature, self.max_tokens)
            context += text
            action = parse_rollout_segment(text)
            steps += 1

            if isinstance(action, Search):
                try:
                    ranked, cost = self.engine.retrieve(action.query, action.mode,
                                                        self.top_k)
                except (GraphUnavailable, EmbeddingProviderError, DimensionMismatch,
                        EmptySeedSet, UnknownSeedNode) as exc:
                    notice = (f"<information>retrieval failed: "
                              f"{type(exc).__name__}</information>")
                    context += "\n" + notice + "\n"
                    segments.append(Segment(generated_text=text, action=action))
                    continue
                info = render_information(ranked, self.engine.store)
                context += "\n" + info + "\n"
                total_cost = total_cost + cost
                segments.append(Segment(generated_text=text, action=action,
                                        information=info, cost=cost, docs=ranked.ids))
            elif isinstance(action, Answer):
                final_answer = action.text
                segments.append(Segment(generated_text=text, action=action))
                break
            elif isinstance(action, Terminated):
                segments.append(Segment(generated_text=text, action=action))
                break
            else:  # ProtocolError: notice consumes the step, episode continues
                context += "\n" + MALFORMED_NOTICE + "\n"
                segments.append(Segment(generated_text=text, action=action))

        retrieval_turns = sum(1 for s in segments
                              if isinstance(s.action, Search) and s.information is not None)
        return Trajectory(question=question, segments=tuple(segments),
                          final_answer=final_answer, retrieval_turns=retrieval_turns,
                          total_retrieval_cost=total_cost, steps_used=steps,
                          transcript=context)

    def run_batch(self, questions: Sequence[str], policy: PolicyClient,
                  parallelism: int = 1) -> list[Trajectory]:
        """Run independent episodes, preserving input order.

        Failures do not abort the batch: every episode runs, then a
        :class:`BatchExecutionError` carrying all failures (and the completed
        trajectories) is raised if any episode failed.
        """
        if parallelism <= 0:
            raise ValueError("parallelism must be positive")
        results: dict[int, Trajectory] = {}
        failures: list[tuple[int, Exception]] = []
        if parallelism == 1:
            for i, question in enumerate(questions):
                try:
                    results[i] = self.run_episode(question, policy)
                except Exception as exc:  # noqa: BLE001 - aggregate, never abort
                    failures.append((i, exc))
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                futures = {i: pool.submit(self.run_episode, q, policy)
                           for i, q in enumerate(questions)}
                for i, fut in futures.items():
                    try:
                        results[i] = fut.result()
                    except Exception as exc:  # noqa: BLE001
                        failures.append((i, exc))
        if failures:
            raise BatchExecutionError(failures=sorted(failures), completed=results)
        return [results[i] for i in range(len(questions))]


class ScriptedPolicy:
    """Deterministic policy for tests: a fixed response sequence per question.

    The question is recovered from the prompt's ``Question:`` line, so the
    same instance behaves identically under any episode interleaving. An
    exhausted script returns an empty string (end-of-stream).
    """

    _QUESTION_RE = re.compile(r"^Question: (.*)$", re.MULTILINE)

    def __init__(self, scripts: dict[str, list[str]] | None = None,
                 default: Sequence[str] = ()):
        self._scripts = dict(scripts or {})
        self._default = list(default)
        self._counters: dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ScriptedPolicy":
        scripts: dict[str, list[str]] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                scripts[record["question"]] = list(record["responses"])
        return cls(scripts=scripts)

    def generate(self, context: str, stop_sequences: Sequence[str],
                 temperature: float, max_tokens: int) -> str:
        match = self._QUESTION_RE.search(context)
        question = match.group(1) if match else ""
        with self._lock:
            turn = self._counters.get(question, 0)
            self._counters[question] = turn + 1
        script = self._scripts.get(question, self._default)
        return script[turn] if turn < len(script) else ""


class HttpPolicyClient:
    """Completions-style wire client for a live policy endpoint.

    Sends ``{"model", "prompt", "stop", "temperature", "max_tokens"}`` with a
    bearer token from ``RAGMUX_POLICY_API_KEY``. Retries transient failures
    with exponential backoff before raising :class:`PolicyUnreachable`. If the
    endpoint strips the matched stop sequence, the closing tag is re-attached
    so downstream parsing sees the full block.
    """

    def __init__(self, base_url: str, model: str = "default", retries: int = 3,
                 backoff_seconds: float = 0.5, timeout: float = 120.0,
                 post: Callable[..., object] | None = None):
        self.base_url = base_url
        self.model = model
        self.retries = retries
        self.backoff_seconds = backoff_seconds
        self.timeout = timeout
        if post is None:
            import requests

            post = requests.post
        self._post = post

    def generate(self, context: str, stop_sequences: Sequence[str],
                 temperature: float, max_tokens: int) -> str:
        headers = {}
        key = os.environ.get(POLICY_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.model,
            "prompt": context,
            "stop": list(stop_sequences),
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = self._post(self.base_url, json=payload, headers=headers,
                                  timeout=self.timeout)
                body = resp.json()
                text = body["choices"][0]["text"]
                return _reattach_stop(text)
            except Exception as exc:  # noqa: BLE001 - retry then surface
                last_error = exc
                if attempt < self.retries - 1:
                    time.sleep(self.backoff_seconds * 2 ** attempt)
        raise PolicyUnreachable(
            f"policy endpoint failed after {self.retries} attempts: {last_error}")


def _reattach_stop(text: str) -> str:
    """Append the closing tag the endpoint swallowed, if any."""
    if text.endswith(protocol.SEARCH_CLOSE) or text.endswith(protocol.ANSWER_CLOSE):
        return text
    candidates = []
    for open_tag, close_tag in ((protocol.SEARCH_OPEN, protocol.SEARCH_CLOSE),
                                (protocol.ANSWER_OPEN, protocol.ANSWER_CLOSE)):
        open_pos = text.rfind(open_tag)
        if open_pos >= 0 and text.find(close_tag, open_pos) < 0:
            candidates.append((open_pos, close_tag))
    if not candidates:
        return text
    return text + max(candidates)[1]


def trajectory_record(trajectory: Trajectory, deterministic: bool = False) -> dict:
    """Serializable transcript record for one trajectory."""
    cost = trajectory.total_retrieval_cost
    segments = []
    for seg in trajectory.segments:
        action: dict[str, object]
        if isinstance(seg.action, Search):
            action = {"type": "search", "mode": seg.action.mode.value,
                      "query": seg.action.query}
        elif isinstance(seg.action, Answer):
            action = {"type": "answer", "text": seg.action.text}
        elif isinstance(seg.action, Terminated):
            action = {"type": "terminated"}
        else:
            action = {"type": "protocol_error", "kind": seg.action.kind}
        segments.append({
            "generated_text": seg.generated_text,
            "action": action,
            "information": seg.information,
            "docs": list(seg.docs) if seg.docs is not None else None,
            "cost": None if seg.cost is None else {
                "wall_seconds": 0.0 if deterministic else seg.cost.wall_seconds,
                "unit_cost": seg.cost.unit_cost,
            },
        })
    return {
        "question": trajectory.question,
        "final_answer": trajectory.final_answer,
        "steps_used": trajectory.steps_used,
        "retrieval_turns": trajectory.retrieval_turns,
        "total_cost": {
            "wall_seconds": 0.0 if deterministic else cost.wall_seconds,
            "unit_cost": cost.unit_cost,
        },
        "segments": segments,
    }


def write_transcripts(trajectories: Sequence[Trajectory], path: str | Path,
                      deterministic: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for trajectory in trajectories:
            fh.write(json.dumps(trajectory_record(trajectory, deterministic),
                                ensure_ascii=False) + "\n")
