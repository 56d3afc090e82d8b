"""Knowledge-graph-backed repair of buggy data science code."""

__version__ = "0.1.0"

from .kg import Iri, KnowledgeGraph, Literal, Predicate, Triple, TriplePattern, Variable, load_dump
from .ingest import ApiRecord, ParamRecord, ReturnRecord, ingest_corpus, ingest_record
from .retrieval import (
    ApiInvocation,
    ApiKnowledge,
    RichnessLevel,
    extract_invocations,
    gather_knowledge,
    retrieve,
    retrieve_plain_text,
)
from .bugs import BugKind, BugReport, TestSpec, enrich, extract_tests
from .prompts import PromptMode, RepairPrompt, build, build_explanation_request, clean_stderr
from .llm import ChatClient, ChatExchange, CostModel, ProviderConfig, Usage, cost
from .harness import (
    EvaluationResult,
    OverlapReport,
    RepairOutcome,
    RunMetrics,
    TaskRecord,
    evaluate,
    overlap,
    repair_task,
)

__all__ = [
    "ApiInvocation",
    "ApiKnowledge",
    "ApiRecord",
    "BugKind",
    "BugReport",
    "ChatClient",
    "ChatExchange",
    "CostModel",
    "EvaluationResult",
    "Iri",
    "KnowledgeGraph",
    "Literal",
    "OverlapReport",
    "ParamRecord",
    "Predicate",
    "PromptMode",
    "ProviderConfig",
    "RepairOutcome",
    "RepairPrompt",
    "ReturnRecord",
    "RichnessLevel",
    "RunMetrics",
    "TaskRecord",
    "TestSpec",
    "Triple",
    "TriplePattern",
    "Usage",
    "Variable",
    "build",
    "build_explanation_request",
    "clean_stderr",
    "cost",
    "enrich",
    "evaluate",
    "extract_invocations",
    "extract_tests",
    "gather_knowledge",
    "ingest_corpus",
    "ingest_record",
    "load_dump",
    "overlap",
    "repair_task",
    "retrieve",
    "retrieve_plain_text",
]
