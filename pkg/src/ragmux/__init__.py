"""ragmux: multi-turn hybrid graph/text retrieval episodes, group-relative
reward machinery, and a desk-scale trainer."""

from .corpus import (CorpusStore, KnowledgeGraph, Passage, ValidationReport,
                     load_corpus, load_corpus_dir, validate_graph)
from .embeddings import HashEmbedder, HttpEmbedder
from .orchestrator import (EpisodeRunner, HttpPolicyClient, ScriptedPolicy,
                           Segment, Trajectory)
from .protocol import Action, Answer, ProtocolError, Search, Terminated, \
    parse_rollout_segment, render_information
from .retrieval import (ModeCosts, PPRParams, RankedList, RetrievalCost,
                        RetrievalEngine, RetrievalMode, rrf_fuse)
from .rewards import (GRPOConfig, RewardConfig, batch_efficiency_rewards,
                      composite_reward, em_reward, f1_score, group_advantages,
                      grpo_surrogate, normalize_answer)
from .simtrain import SimEnv, TabularPolicy, TrainReport, grpo_update, \
    rollout_group, train_two_stage

__version__ = "0.1.0"

__all__ = [
    "Action", "Answer", "CorpusStore", "EpisodeRunner", "GRPOConfig",
    "HashEmbedder", "HttpEmbedder", "HttpPolicyClient", "KnowledgeGraph",
    "ModeCosts", "PPRParams", "Passage", "ProtocolError", "RankedList",
    "RetrievalCost", "RetrievalEngine", "RetrievalMode", "RewardConfig",
    "ScriptedPolicy", "Search", "Segment", "SimEnv", "TabularPolicy",
    "Terminated", "TrainReport", "Trajectory", "ValidationReport",
    "batch_efficiency_rewards", "composite_reward", "em_reward", "f1_score",
    "group_advantages", "grpo_surrogate", "grpo_update", "load_corpus",
    "load_corpus_dir", "normalize_answer", "parse_rollout_segment",
    "render_information", "rollout_group", "rrf_fuse", "train_two_stage",
    "validate_graph",
]
