"""Acceptance suite: one test per criterion, each at its stated tolerance.

A summary block at the end of the pytest run prints one line per criterion
(see pytest_terminal_summary in conftest).
"""

import json
import math
import random
import shutil
import subprocess
import time
from pathlib import Path

import numpy as np
import pytest

from ragmux.corpus import GraphNode, load_corpus_dir, validate_graph
from ragmux.embeddings import HashEmbedder
from ragmux.orchestrator import EpisodeRunner, ScriptedPolicy
from ragmux.protocol import (Answer, ProtocolError, Search, Terminated,
                             parse_rollout_segment, render_answer, render_search)
from ragmux.retrieval import PPRParams, RankedList, RetrievalEngine, RetrievalMode, rrf_fuse
from ragmux.rewards import (GRPOConfig, RewardConfig, batch_efficiency_rewards,
                            composite_reward, em_reward, f1_score, group_advantages)
from ragmux.simtrain import (SeedOutcome, SimEnv, TrainSettings,
                             surrogate_and_gradient, train_two_stage,
                             two_stage_summary)

from conftest import FIXTURES
from oracles import fd_instance, finite_difference_gradient, ppr_linear_solve
from test_retrieval import graph_from_edges, ppr_engine, random_entity_graph


def test_ppr_oracle_equivalence_200_graphs():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    checked = 0
    while checked < 200:
        _, edges = random_entity_graph(rng, max_nodes=50)
        graph = graph_from_edges(edges)
        if not graph.entity_nodes:
            continue
        nodes = sorted(graph.entity_nodes)
        n_seeds = int(rng.integers(1, len(nodes) + 1))
        seed_names = list(rng.choice(nodes, size=n_seeds, replace=False))
        seeds = {name: float(rng.uniform(0.1, 3.0)) for name in seed_names}
        damping = float(rng.uniform(0.1, 0.9))
        engine = ppr_engine(graph)
        result = engine.personalized_pagerank(
            {GraphNode("entity", name): w for name, w in seeds.items()},
            PPRParams(damping=damping, tolerance=1e-12, max_iterations=2000))
        expected = ppr_linear_solve(nodes, list(graph.synonym_edges), seeds, damping)
        worst = max(abs(result.scores[GraphNode("entity", name)] - expected[name])
                    for name in nodes)
        assert worst <= 1e-8
        checked += 1
    assert time.perf_counter() - start < 10.0


def test_rrf_properties_1000_pairs_and_worked_examples():
    # worked examples, exact
    both_first = rrf_fuse(RankedList(entries=(("a", 1.0),)),
                          RankedList(entries=(("a", 1.0),)), rrf_k=60)
    assert both_first.entries[0][1] == 2 / 61
    single = rrf_fuse(RankedList(entries=(("b", 1.0),)), RankedList(entries=()),
                      rrf_k=60)
    assert single.entries[0][1] == 1 / 61
    crossed = rrf_fuse(RankedList(entries=(("a", 0.9), ("b", 0.8))),
                       RankedList(entries=(("b", 0.7), ("a", 0.1))), rrf_k=60)
    assert crossed.ids == ("a", "b")
    assert all(score == 1 / 61 + 1 / 62 for _, score in crossed.entries)

    rng = random.Random(123)
    universe = [f"d{i:02d}" for i in range(15)]

    def random_list():
        size = rng.randint(1, len(universe))
        ids = rng.sample(universe, size)
        return RankedList(entries=tuple(
            (pid, 1.0 - 0.01 * i) for i, pid in enumerate(ids)))

    for _ in range(1000):
        list_a, list_b = random_list(), random_list()
        # symmetry
        assert rrf_fuse(list_a, list_b, 60).entries == \
            rrf_fuse(list_b, list_a, 60).entries
        # monotonicity: promote one document by one rank in list_a
        ids = list(list_a.ids)
        if len(ids) >= 2:
            pos = rng.randint(1, len(ids) - 1)
            doc = ids[pos]
            before = dict(rrf_fuse(list_a, list_b, 60).entries)[doc]
            ids[pos - 1], ids[pos] = ids[pos], ids[pos - 1]
            promoted = RankedList(entries=tuple(
                (pid, 1.0 - 0.01 * i) for i, pid in enumerate(ids)))
            after = dict(rrf_fuse(promoted, list_b, 60).entries)[doc]
            assert after >= before


def test_parser_round_trip_10000_and_totality_10000():
    rng = random.Random(31337)
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789 ',?.-"
    modes = list(RetrievalMode)
    done = 0
    while done < 10_000:
        payload = "".join(rng.choice(alphabet)
                          for _ in range(rng.randint(1, 50))).strip()
        if not payload:
            continue
        think = ""
        if rng.random() < 0.5:
            filler = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 30)))
            think = f"<think> {filler} </think> "
        if rng.random() < 0.5:
            action = Search(mode=rng.choice(modes), query=payload)
            text = think + render_search(action.mode, action.query)
        else:
            action = Answer(text=payload)
            text = think + render_answer(action.text)
        assert parse_rollout_segment(text) == action
        done += 1

    for i in range(10_000):
        raw = rng.randbytes(rng.randint(0, 120)).decode("latin-1")
        result = parse_rollout_segment(raw)
        assert isinstance(result, (Search, Answer, Terminated, ProtocolError))


class _CountingEngine:
    def __init__(self, inner):
        self.inner = inner
        self.store = inner.store
        self.calls = 0

    def retrieve(self, query_text, mode, top_k):
        self.calls += 1
        return self.inner.retrieve(query_text, mode, top_k)


def test_episode_loop_conformance_under_scripted_policies():
    store = load_corpus_dir(FIXTURES / "corpus")
    assert validate_graph(store.graph, store).ok
    base = RetrievalEngine(store, HashEmbedder(dim=store.dim, seed=13))
    budget = 4

    policies = {
        "immediate-answer": ScriptedPolicy(default=["<answer> Paris </answer>"]),
        "always-search": ScriptedPolicy(
            default=["<search> <Graph><Passage> more evidence </search>"] * 12),
        "malformed-search": ScriptedPolicy(
            default=["<search> forgot the markers </search>"] * 12),
    }
    for name, policy in policies.items():
        counting = _CountingEngine(base)
        runner = EpisodeRunner(counting, budget=budget)
        trajectory = runner.run_episode(f"conformance {name}", policy)
        assert counting.calls <= budget
        assert trajectory.retrieval_turns <= trajectory.steps_used <= budget
        executed = sum(1 for s in trajectory.segments
                       if isinstance(s.action, Search) and s.information is not None)
        assert executed == trajectory.retrieval_turns
        answered = any(isinstance(s.action, Answer) for s in trajectory.segments)
        assert answered == (trajectory.final_answer is not None)
    # spot behavior per policy
    immediate = EpisodeRunner(base, budget=budget).run_episode(
        "q", policies["immediate-answer"])
    assert immediate.steps_used == 1 and immediate.retrieval_turns == 0
    searcher = EpisodeRunner(base, budget=budget).run_episode(
        "q", policies["always-search"])
    assert searcher.steps_used == budget and searcher.final_answer is None


def test_reward_identities_1000_groups_and_worked_example():
    rng = random.Random(2718)
    config = RewardConfig(stage=2)
    for _ in range(1000):
        size = rng.randint(2, 10)
        costs = [rng.uniform(0.0, 20.0) for _ in range(size)]
        outcomes = [rng.randint(0, 1) for _ in range(size)]
        eff = batch_efficiency_rewards(costs, outcomes, config)

        # all-correct zero-sum centering
        eff_all = batch_efficiency_rewards(costs, [1] * size, config)
        assert abs(sum(eff_all)) <= 1e-12 * size

        rewards = [composite_reward(o, e, stage=2) for o, e in zip(outcomes, eff)]
        advantages = group_advantages(rewards)
        mean = sum(rewards) / size
        std = math.sqrt(sum((r - mean) ** 2 for r in rewards) / size)
        if std >= 1e-8:
            a_mean = sum(advantages) / size
            a_std = math.sqrt(sum((a - a_mean) ** 2 for a in advantages) / size)
            assert abs(a_mean) <= 1e-9
            assert abs(a_std - 1.0) <= 1e-9
        else:
            assert advantages == [0.0] * size

        # shift invariance
        shift = rng.uniform(-3.0, 3.0)
        shifted = group_advantages([r + shift for r in rewards])
        assert all(abs(a - b) <= 1e-9 for a, b in zip(advantages, shifted))

        # decomposition of the numerator for correct trajectories
        mean_outcome = sum(outcomes) / size
        mean_eff_paid = sum(e * o for e, o in zip(eff, outcomes)) / size
        for i, outcome in enumerate(outcomes):
            if outcome == 1:
                numerator = rewards[i] - mean
                decomposed = (1 - mean_outcome) + (eff[i] - mean_eff_paid)
                assert abs(numerator - decomposed) <= 1e-12

    advantages = group_advantages([1, 0, 0, 1, 0])
    assert advantages == pytest.approx(
        [1.2247, -0.8165, -0.8165, 1.2247, -0.8165], abs=1e-4)


def test_gradient_matches_finite_differences_50_instances():
    env = SimEnv.default()
    config = GRPOConfig(clip_epsilon=0.2, kl_coefficient=0.05)
    rng = np.random.default_rng(424242)
    for _ in range(50):
        theta, groups, advantages, ref = fd_instance(rng, env)
        _, analytic = surrogate_and_gradient(theta, groups, advantages, ref, config)

        def objective(x):
            value, _ = surrogate_and_gradient(x, groups, advantages, ref, config)
            return value

        numeric = finite_difference_gradient(objective, theta.copy())
        scale = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-8)
        assert np.abs(analytic - numeric).max() / scale <= 1e-5


def test_two_stage_efficiency_claim_10_seeds():
    start = time.perf_counter()
    env = SimEnv.default()
    grpo = GRPOConfig(group_size=5, clip_epsilon=0.2, kl_coefficient=0.001)
    outcomes = []
    for seed in range(10):
        _, report = train_two_stage(env, grpo, stage1_steps=20, stage2_steps=20,
                                    seed=seed, settings=TrainSettings())
        outcomes.append(SeedOutcome(seed=seed, stage1=report.stage1_eval,
                                    stage2=report.stage2_eval))
    summary = two_stage_summary(outcomes)
    assert summary["median_cost_reduction"] >= 0.10
    assert summary["median_accuracy_delta"] >= -0.02
    assert time.perf_counter() - start < 300.0


def test_selective_retrieval_ordering_1000_groups():
    rng = random.Random(9)
    config = RewardConfig(stage=2)
    for _ in range(1000):
        size = rng.randint(2, 10)
        costs = [float(c) for c in rng.sample(range(200), size)]
        eff = batch_efficiency_rewards(costs, [1] * size, config)
        rewards = [composite_reward(1, e, stage=2) for e in eff]
        advantages = group_advantages(rewards)
        ranked = sorted(zip(costs, advantages))
        for (c1, a1), (c2, a2) in zip(ranked, ranked[1:]):
            assert c1 < c2
            assert a1 > a2


def test_em_f1_reference_fixture_matches():
    rows = [json.loads(line) for line in
            (FIXTURES / "em_f1_reference.jsonl").read_text().splitlines() if line]
    assert len(rows) == 50
    for row in rows:
        num, den = row["f1"]
        assert em_reward(row["answer"], row["gold"]) == row["em"], row
        # fractions evaluated in floats; 1e-12 absorbs the ulp of 2PR/(P+R)
        assert abs(f1_score(row["answer"], row["gold"]) - num / den) <= 1e-12, row


def test_secondary_ingestion_round_trip(tmp_path):
    ingest_cli = Path(__file__).resolve().parents[1] / "ingest" / "dist" / "cli.js"
    node = shutil.which("node")
    if node is None or not ingest_cli.exists():
        pytest.skip("secondary ingest package not built")
    raw = Path(__file__).resolve().parents[1] / "ingest" / "fixtures" / "raw_docs.jsonl"
    canned = Path(__file__).resolve().parents[1] / "ingest" / "fixtures" / "canned"
    outputs = []
    for run_dir in (tmp_path / "run1", tmp_path / "run2"):
        run_dir.mkdir()
        subprocess.run([node, str(ingest_cli), "build", "--raw", str(raw),
                        "--out", str(run_dir), "--canned", str(canned)],
                       check=True, capture_output=True)
        outputs.append({name: (run_dir / name).read_bytes()
                        for name in ("passages.jsonl", "embeddings.jsonl",
                                     "graph.jsonl")})
    assert outputs[0] == outputs[1]
    store = load_corpus_dir(tmp_path / "run1")
    assert store.counts().passages > 0
    assert validate_graph(store.graph, store).ok
