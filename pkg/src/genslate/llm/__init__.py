"""Text realisation of the query suite: LLM clients, scoring, generation,
baselines and dataset loading."""

from .client import LlmClient, LlmRequest, LlmResponse, OpenAICompatibleBackend, ReplayMissError, ResponseCache
from .generation import ProseConfig, ProseQueries, ProseRunState, consensus_statement, prose_gen_query, word_count
from .pipeline import ProseRun, run_prose
from .scoring import ScoringError, cot_utility, disc_utility

__all__ = [
    "LlmClient", "LlmRequest", "LlmResponse", "OpenAICompatibleBackend", "ReplayMissError", "ResponseCache",
    "ProseConfig", "ProseQueries", "ProseRunState", "consensus_statement", "prose_gen_query", "word_count",
    "ProseRun", "run_prose", "ScoringError", "cot_utility", "disc_utility",
]
