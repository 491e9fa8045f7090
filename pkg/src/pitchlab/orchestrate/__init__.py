"""Two-stage training workflow, actor/learner harness and snapshot curriculum."""

from .actor import ActorLoop, EpisodeStats, PolicySource, actor_loop, running_mean_return
from .agents import Agent, NetworkAgent, RandomAgent, ScriptedAgent, StillAgent, head_only
from .env import SoccerEnv, stage_scenario, stage_sim_config, truth_vector
from .games import GameResult, play_game, play_games, summarize_games
from .harness import CurriculumOpponents, Trainer, stage_length
from .snapshots import PolicySnapshot, SnapshotStore, load_snapshot, network_config_from_meta, resolve_snapshot, sample_opponent, snapshot_metadata
from .stages import (
    StageKind,
    generate_dataset,
    load_stage_teachers,
    run_datasource_ablation,
    run_stage1,
    run_stage2,
)

__all__ = [
    "ActorLoop",
    "Agent",
    "CurriculumOpponents",
    "EpisodeStats",
    "GameResult",
    "NetworkAgent",
    "PolicySnapshot",
    "PolicySource",
    "RandomAgent",
    "ScriptedAgent",
    "SnapshotStore",
    "SoccerEnv",
    "StageKind",
    "StillAgent",
    "Trainer",
    "actor_loop",
    "generate_dataset",
    "head_only",
    "load_snapshot",
    "load_stage_teachers",
    "network_config_from_meta",
    "play_game",
    "play_games",
    "resolve_snapshot",
    "run_datasource_ablation",
    "run_stage1",
    "run_stage2",
    "running_mean_return",
    "sample_opponent",
    "snapshot_metadata",
    "stage_length",
    "stage_scenario",
    "stage_sim_config",
    "summarize_games",
    "truth_vector",
]
