import json

import pytest

from ragmux.errors import BatchExecutionError, PolicyUnreachable
from ragmux.orchestrator import (MALFORMED_NOTICE, EpisodeRunner, HttpPolicyClient,
                                 ScriptedPolicy, build_initial_context,
                                 prompt_template, trajectory_record,
                                 write_transcripts)
from ragmux.protocol import Answer, ProtocolError, Terminated
from ragmux.retrieval import RetrievalMode


def scripted(responses, question="q"):
    return ScriptedPolicy({question: responses})


def test_prompt_template_contains_contract_markers():
    template = prompt_template()
    for token in ("<think>", "<search>", "</search>", "<answer>", "</answer>",
                  "<Passage>", "<Graph>", "<information>", "{question}"):
        assert token in template


def test_initial_context_substitutes_question():
    context = build_initial_context("who recorded Hello Tomorrow")
    assert context.rstrip().endswith("Question: who recorded Hello Tomorrow")
    assert "{question}" not in context


def test_immediate_answer_episode(runner):
    policy = scripted(["<answer> Paris </answer>"])
    trajectory = runner.run_episode("q", policy)
    assert trajectory.final_answer == "Paris"
    assert trajectory.retrieval_turns == 0
    assert trajectory.steps_used == 1
    assert trajectory.total_retrieval_cost.unit_cost == 0.0


def test_search_then_answer_matches_retrieval_oracle(runner, engine):
    query = "who created superstore"
    policy = scripted([
        f"<think> need evidence </think> <search> <Graph><Passage> {query} </search>",
        "<answer> Justin Spitzer </answer>",
    ])
    trajectory = runner.run_episode("q", policy)
    assert trajectory.retrieval_turns == 1
    assert trajectory.final_answer == "Justin Spitzer"
    expected, expected_cost = engine.retrieve(query, RetrievalMode.HYBRID, top_k=3)
    search_segment = trajectory.segments[0]
    assert search_segment.docs == expected.ids
    assert search_segment.cost.unit_cost == expected_cost.unit_cost
    assert search_segment.information.startswith("<information>Doc 1(")


def test_always_search_exhausts_budget(runner):
    policy = ScriptedPolicy(
        default=["<search> <Passage> anything </search>"] * 10)
    trajectory = runner.run_episode("q", policy)
    assert trajectory.steps_used == 4
    assert trajectory.retrieval_turns == 4
    assert trajectory.final_answer is None


def test_malformed_search_consumes_step_and_notifies(runner):
    policy = scripted([
        "<search> no mode marker here </search>",
        "<answer> done </answer>",
    ])
    trajectory = runner.run_episode("q", policy)
    assert trajectory.steps_used == 2
    assert trajectory.retrieval_turns == 0
    assert isinstance(trajectory.segments[0].action, ProtocolError)
    assert trajectory.segments[0].information is None
    assert MALFORMED_NOTICE in trajectory.transcript


def test_terminated_stream_ends_episode(runner):
    policy = scripted(["rambling with no tags at all"])
    trajectory = runner.run_episode("q", policy)
    assert trajectory.final_answer is None
    assert trajectory.steps_used == 1
    assert isinstance(trajectory.segments[0].action, Terminated)


def test_retrieval_failure_becomes_notice(store, embedder):
    import ragmux.retrieval as retrieval

    class FlakyEngine(retrieval.RetrievalEngine):
        def retrieve(self, query_text, mode, top_k):
            raise retrieval.GraphUnavailable("no graph")

    runner = EpisodeRunner(FlakyEngine(store, embedder))
    policy = scripted([
        "<search> <Graph> who </search>",
        "<answer> shrug </answer>",
    ])
    trajectory = runner.run_episode("q", policy)
    assert trajectory.retrieval_turns == 0
    assert "retrieval failed: GraphUnavailable" in trajectory.transcript
    assert trajectory.final_answer == "shrug"


def test_context_grows_monotonically(runner):
    contexts = []

    class Recording(ScriptedPolicy):
        def generate(self, context, stop_sequences, temperature, max_tokens):
            contexts.append(context)
            return super().generate(context, stop_sequences, temperature, max_tokens)

    policy = Recording({"q": ["<search> <Passage> a </search>",
                              "<search> <Graph> b </search>",
                              "<answer> c </answer>"]})
    runner.run_episode("q", policy)
    for earlier, later in zip(contexts, contexts[1:]):
        assert later.startswith(earlier)


def test_information_blocks_match_retrievals_plus_notices(runner):
    policy = scripted([
        "<search> <Passage> one </search>",
        "<search> broken </search>",
        "<search> <Graph> two </search>",
        "<answer> fin </answer>",
    ])
    trajectory = runner.run_episode("q", policy)
    executed = trajectory.retrieval_turns
    notices = trajectory.transcript.count(MALFORMED_NOTICE)
    baseline = build_initial_context("q").count("<information>") + \
        sum(seg.generated_text.count("<information>") for seg in trajectory.segments)
    injected = trajectory.transcript.count("<information>") - baseline
    assert injected == executed + notices
    assert executed == 2
    assert notices == 1


def test_no_generation_after_answer(runner):
    calls = []

    class Counting(ScriptedPolicy):
        def generate(self, context, stop_sequences, temperature, max_tokens):
            calls.append(1)
            return super().generate(context, stop_sequences, temperature, max_tokens)

    policy = Counting({"q": ["<answer> instant </answer>",
                             "<search> <Passage> never </search>"]})
    trajectory = runner.run_episode("q", policy)
    assert trajectory.final_answer == "instant"
    assert len(calls) == 1


def test_budget_bounds_adversarial_policies(engine):
    class CountingEngine:
        def __init__(self, inner):
            self.inner = inner
            self.calls = 0
            self.store = inner.store

        def retrieve(self, query_text, mode, top_k):
            self.calls += 1
            return self.inner.retrieve(query_text, mode, top_k)

    for budget in (1, 2, 4):
        counting = CountingEngine(engine)
        runner = EpisodeRunner(counting, budget=budget)
        policy = ScriptedPolicy(default=[
            "<search> <Graph><Passage> again </search>"] * 20)
        trajectory = runner.run_episode("q", policy)
        assert counting.calls <= budget
        assert trajectory.steps_used == budget


def test_run_batch_order_independent_of_parallelism(runner):
    questions = [f"q{i}" for i in range(3)]
    scripts = {q: [f"<search> <Passage> about {q} </search>",
                   f"<answer> answer {q} </answer>"] for q in questions}
    sequential = runner.run_batch(questions, ScriptedPolicy(scripts), parallelism=1)
    parallel = runner.run_batch(questions, ScriptedPolicy(scripts), parallelism=3)
    # wall-clock cost varies run to run; compare the deterministic projection
    assert [trajectory_record(t, deterministic=True) for t in sequential] == \
        [trajectory_record(t, deterministic=True) for t in parallel]


def test_run_batch_empty(runner):
    assert runner.run_batch([], ScriptedPolicy()) == []


def test_run_batch_ten_questions_all_invariants(runner):
    questions = [f"q{i}" for i in range(10)]
    scripts = {}
    for i, q in enumerate(questions):
        if i % 3 == 0:
            scripts[q] = ["<answer> direct </answer>"]
        elif i % 3 == 1:
            scripts[q] = ["<search> <Passage> hunt </search>",
                          "<answer> found </answer>"]
        else:
            scripts[q] = ["<search> <Graph><Passage> hunt </search>"] * 6
    trajectories = runner.run_batch(questions, ScriptedPolicy(scripts))
    assert len(trajectories) == 10
    for t in trajectories:
        assert t.retrieval_turns <= t.steps_used <= runner.budget
        answered = t.final_answer is not None
        assert answered == any(isinstance(s.action, Answer) for s in t.segments)


def test_run_batch_aggregates_failures(runner):
    class Exploding(ScriptedPolicy):
        def generate(self, context, stop_sequences, temperature, max_tokens):
            if "q1" in context:
                raise RuntimeError("flaked")
            return super().generate(context, stop_sequences, temperature, max_tokens)

    scripts = {q: ["<answer> ok </answer>"] for q in ("q0", "q1", "q2")}
    with pytest.raises(BatchExecutionError) as excinfo:
        runner.run_batch(["q0", "q1", "q2"], Exploding(scripts))
    error = excinfo.value
    assert [i for i, _ in error.failures] == [1]
    assert sorted(error.completed) == [0, 2]
    assert error.completed[0].final_answer == "ok"


def test_scripted_policy_loads_jsonl(tmp_path):
    path = tmp_path / "script.jsonl"
    path.write_text(json.dumps({"question": "q", "responses": ["<answer> a </answer>"]})
                    + "\n")
    policy = ScriptedPolicy.from_jsonl(path)
    text = policy.generate(build_initial_context("q"), (), 1.0, 10)
    assert text == "<answer> a </answer>"


def test_http_policy_retries_then_succeeds():
    attempts = []

    def post(url, json=None, headers=None, timeout=None):
        attempts.append(1)
        if len(attempts) < 3:
            raise ConnectionError("down")

        class R:
            @staticmethod
            def json():
                return {"choices": [{"text": "<answer> hi </answer>"}]}
        return R()

    client = HttpPolicyClient("http://x", backoff_seconds=0.0, post=post)
    assert client.generate("ctx", ("</answer>",), 1.0, 10) == "<answer> hi </answer>"
    assert len(attempts) == 3


def test_http_policy_unreachable_after_retries():
    def post(url, json=None, headers=None, timeout=None):
        raise ConnectionError("down")

    client = HttpPolicyClient("http://x", backoff_seconds=0.0, post=post)
    with pytest.raises(PolicyUnreachable):
        client.generate("ctx", (), 1.0, 10)


def test_http_policy_reattaches_stripped_stop():
    def post(url, json=None, headers=None, timeout=None):
        class R:
            @staticmethod
            def json():
                return {"choices": [{"text": "<search> <Passage> q "}]}
        return R()

    client = HttpPolicyClient("http://x", backoff_seconds=0.0, post=post)
    out = client.generate("ctx", ("</search>", "</answer>"), 1.0, 10)
    assert out.endswith("</search>")


def test_transcript_export_round_trips(tmp_path, runner):
    policy = scripted(["<search> <Passage> evidence </search>",
                       "<answer> done </answer>"])
    trajectory = runner.run_episode("q", policy)
    path = tmp_path / "transcripts.jsonl"
    write_transcripts([trajectory], path, deterministic=True)
    record = json.loads(path.read_text().splitlines()[0])
    assert record["question"] == "q"
    assert record["final_answer"] == "done"
    assert record["total_cost"]["wall_seconds"] == 0.0
    assert record["segments"][0]["action"]["type"] == "search"
    assert record["segments"][0]["docs"]


def test_trajectory_record_variants(runner):
    policy = scripted(["<search> nomode </search>", "no tags"])
    trajectory = runner.run_episode("q", policy)
    record = trajectory_record(trajectory)
    kinds = [seg["action"]["type"] for seg in record["segments"]]
    assert kinds == ["protocol_error", "terminated"]
