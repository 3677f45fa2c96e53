"""End-to-end text run: embeddings, then the process with text queries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core import Instance
from ..process import ProcessConfig, SlateResult, make_config, run_process
from .client import LlmClient
from .embeddings import EmbeddingState, build_embeddings
from .generation import ProseConfig, ProseQueries, ProseRunState

UNIT_COST_STATEMENTS = 5


@dataclass
class ProseRun:
    instance: Instance
    result: SlateResult
    state: ProseRunState
    process_config: ProcessConfig


def process_config_for(config: ProseConfig, instance: Instance, unit_cost: bool = False) -> ProcessConfig:
    if unit_cost:
        return make_config("unit_cost", instance, min_statement_cost=config.min_length, allow_repeats=False)
    costs = [c for c in config.cost_list if c <= instance.budget]
    return ProcessConfig(tuple(costs), "single", min_statement_cost=config.min_length,
                         use_statement_bank=False, variant_tag="custom", allow_repeats=False)


def run_prose(descriptions: Sequence[str], budget: int, config: ProseConfig, client: LlmClient,
              seed=0, unit_cost: bool = False, embeddings: Optional[EmbeddingState] = None) -> ProseRun:
    """Full text run. With ``unit_cost`` the budget counts statements
    (default 5) and consensus prompts carry no word limit."""
    ss = np.random.SeedSequence(seed)
    emb_seed, run_seed = ss.spawn(2)
    if embeddings is None:
        embeddings = build_embeddings(descriptions, client, config.chat_model, config.embed_model,
                                      np.random.default_rng(emb_seed), config.rating_statements,
                                      config.brief_cap)
    if unit_cost:
        budget = UNIT_COST_STATEMENTS if budget is None else budget
    inst = Instance.build(len(descriptions), budget, config.levels, list(descriptions))
    state = ProseRunState(list(descriptions), budget, config, client, embeddings, unit_cost=unit_cost)
    pcfg = process_config_for(config, inst, unit_cost)
    res = run_process(inst, ProseQueries(state), pcfg, np.random.default_rng(run_seed))
    return ProseRun(inst, res, state, pcfg)
