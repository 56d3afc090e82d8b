"""Repair-loop evaluation over a benchmark corpus.

Every aggregate is a pure function of the outcome ledger, which is persisted
as line-delimited JSON; recomputing from the ledger reproduces the metrics
bit for bit. Repetitions model provider non-determinism: the headline run is
the one whose fix count is the median (lower-middle on even counts).
"""

from __future__ import annotations

import json
import statistics
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
import re

from .bugs import BugReport, enrich, run_tests, tests_for_task
from .errors import ConfigError, CorpusError, ProviderError, ReplayExhaustedError, RunnerError
from .kg import KnowledgeGraph
from .llm import ChatClient, ChatExchange, CostModel, ProviderConfig, Usage, cost
from .prompts import (
    PromptMode,
    TWO_STAGE_MODES,
    build,
    build_explanation_request,
)
from .retrieval import ApiKnowledge, RichnessLevel, extract_invocations, gather_knowledge


@dataclass(frozen=True)
class TaskRecord:
    id: str
    library: str
    description: str
    buggy_code: str
    imports: str = ""
    test_code: str = ""


@dataclass
class CorpusLoadResult:
    tasks: list[TaskRecord] = field(default_factory=list)
    errors: list[tuple[int, str]] = field(default_factory=list)


def load_corpus(path: str | Path) -> CorpusLoadResult:
    """Line-delimited JSON TaskRecords; bad lines reported, never fatal."""
    result = CorpusLoadResult()
    seen_ids = set()
    for line_no, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            task = TaskRecord(
                id=obj["id"],
                library=obj["library"],
                description=obj["description"],
                buggy_code=obj["buggy_code"],
                imports=obj.get("imports", ""),
                test_code=obj.get("test_code", ""),
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            result.errors.append((line_no, f"bad task record: {exc}"))
            continue
        if task.id in seen_ids:
            result.errors.append((line_no, f"duplicate task id {task.id!r}"))
            continue
        seen_ids.add(task.id)
        result.tasks.append(task)
    return result


_FENCE_RE = re.compile(r"```(?:[A-Za-z0-9_+-]*)[ \t]*\n(.*?)(?:\n)?```", re.DOTALL)


def extract_fenced_code(response: str) -> str | None:
    """First fenced code block of the response, or None."""
    m = _FENCE_RE.search(response)
    if m is None:
        return None
    return m.group(1)


@dataclass
class RepairOutcome:
    task_id: str
    library: str
    mode: PromptMode
    richness: RichnessLevel
    patched_code: str = ""
    passed: bool = False
    flagged_for_review: bool = False
    skipped_not_buggy: bool = False
    error: str = ""
    bug_kind: str = ""
    exchanges: list[ChatExchange] = field(default_factory=list)
    bug_report: BugReport | None = None

    def usages(self) -> list[Usage]:
        return [e.usage for e in self.exchanges if e.usage is not None]

    def usage_unknown_count(self) -> int:
        return sum(1 for e in self.exchanges if e.usage is None)

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "library": self.library,
            "mode": self.mode.value,
            "richness": self.richness.value,
            "passed": self.passed,
            "flagged_for_review": self.flagged_for_review,
            "skipped_not_buggy": self.skipped_not_buggy,
            "error": self.error,
            "bug_kind": self.bug_kind,
            "patched_code": self.patched_code,
            "usages": [[u.input_tokens, u.output_tokens] for u in self.usages()],
            "usage_unknown_count": self.usage_unknown_count(),
        }


def repair_task(
    task: TaskRecord,
    mode: PromptMode,
    richness: RichnessLevel,
    kg: KnowledgeGraph | None,
    runner,
    client: ChatClient,
    cfg: ProviderConfig,
    timeout_s: float = 10.0,
    failing_first: bool = False,
) -> RepairOutcome:
    """Single-shot repair of one task; never raises for per-task failures."""
    outcome = RepairOutcome(task.id, task.library, mode, richness)
    tests = tests_for_task(task.description, task.test_code)

    report = enrich(task.buggy_code, tests, runner, imports=task.imports, timeout_s=timeout_s)
    if report is None:
        outcome.skipped_not_buggy = True
        outcome.error = "not-buggy: code already passes its tests"
        return outcome
    outcome.bug_report = report
    outcome.bug_kind = report.kind.value

    knowledge: ApiKnowledge | None = None
    if mode in (PromptMode.DSREPAIR, PromptMode.DSREPAIR_WO_BUG):
        _, invocations = extract_invocations(task.buggy_code)
        graph = kg if kg is not None else KnowledgeGraph().freeze()
        knowledge = gather_knowledge(
            graph,
            invocations,
            richness,
            failing_first=failing_first,
            failing_source=report.first_failed_source,
        )

    try:
        if mode in TWO_STAGE_MODES:
            stage_one = build_explanation_request(
                task.description, task.buggy_code, stderr=report.stderr_raw, mode=mode
            )
            first = client.complete(cfg, stage_one.rendered)
            outcome.exchanges.append(first)
            prompt = build(
                task.description,
                task.buggy_code,
                stderr=report.stderr_raw,
                mode=mode,
                richness=richness,
                explanation=first.response,
            )
        else:
            prompt = build(
                task.description,
                task.buggy_code,
                stderr=report.stderr_raw,
                api_knowledge=knowledge,
                bug_report=report,
                mode=mode,
                richness=richness,
                tests=tests,
            )
        exchange = client.complete(cfg, prompt.rendered)
        outcome.exchanges.append(exchange)
    except ProviderError as exc:
        outcome.error = f"provider failure: {exc}"
        return outcome

    patch = extract_fenced_code(exchange.response)
    if patch is None:
        outcome.error = "no fenced code block in response"
        return outcome
    outcome.patched_code = patch

    try:
        response = run_tests(runner, patch, tests, task.imports, timeout_s)
    except (RunnerError, ReplayExhaustedError) as exc:
        outcome.error = f"runner failure on patched code: {exc}"
        return outcome
    outcome.passed = response.get("status") == "ok" and response.get("passed") is True
    if not outcome.passed and not outcome.error:
        outcome.error = response.get("stderr", "")[:200]
    outcome.flagged_for_review = outcome.passed and not task.test_code.strip()
    return outcome


def format_fr(anf: int, n_tasks: int) -> str:
    """Fix rate as a percentage, two decimals, half-up."""
    if n_tasks == 0:
        return "0.00%"
    ratio = Decimal(anf * 100) / Decimal(n_tasks)
    return f"{ratio.quantize(Decimal('0.01'), rounding=ROUND_HALF_UP)}%"


@dataclass
class RunMetrics:
    anf: int
    fr: float
    tu: float
    ms: float
    n_tasks: int
    per_library: dict[str, tuple[int, float]]

    @property
    def fr_display(self) -> str:
        return format_fr(self.anf, self.n_tasks)

    def to_json(self) -> dict:
        return {
            "anf": self.anf,
            "fr": self.fr,
            "fr_display": self.fr_display,
            "tu": self.tu,
            "ms": self.ms,
            "n_tasks": self.n_tasks,
            "per_library": {
                lib: {"anf": a, "fr": f} for lib, (a, f) in sorted(self.per_library.items())
            },
        }


def compute_metrics(
    outcomes: list[RepairOutcome] | list[dict],
    cost_model: CostModel | None = None,
) -> RunMetrics:
    """Aggregate one repetition; accepts live outcomes or ledger rows."""
    rows = [o.to_json() if isinstance(o, RepairOutcome) else o for o in outcomes]
    n_tasks = len(rows)
    anf = sum(1 for r in rows if r["passed"])
    usages = [
        Usage(u[0], u[1]) for r in rows for u in r.get("usages", [])
    ]
    total_tokens = sum(u.total for u in usages)
    tu = total_tokens / n_tasks if n_tasks else 0.0
    ms = cost(usages, cost_model) if cost_model is not None else 0.0

    per_library: dict[str, tuple[int, float]] = {}
    libraries = sorted({r["library"] for r in rows})
    for library in libraries:
        lib_rows = [r for r in rows if r["library"] == library]
        lib_anf = sum(1 for r in lib_rows if r["passed"])
        per_library[library] = (lib_anf, lib_anf / len(lib_rows))
    return RunMetrics(
        anf=anf,
        fr=anf / n_tasks if n_tasks else 0.0,
        tu=tu,
        ms=ms,
        n_tasks=n_tasks,
        per_library=per_library,
    )


def select_median_repetition(anfs: list[int]) -> int:
    """Index of the repetition holding the median ANF (lower-middle on even
    counts); earliest repetition wins ties. Always an observed run."""
    if not anfs:
        raise ValueError("no repetitions")
    ordered = sorted(anfs)
    median_value = ordered[(len(ordered) - 1) // 2]
    return anfs.index(median_value)


@dataclass
class EvaluationResult:
    mode: PromptMode
    richness: RichnessLevel
    repetitions: list[list[RepairOutcome]]
    per_repetition: list[RunMetrics]
    median_index: int
    headline: RunMetrics
    anf_mean: float
    anf_std: float

    def to_json(self) -> dict:
        return {
            "mode": self.mode.value,
            "richness": self.richness.value,
            "median_repetition": self.median_index,
            "headline": self.headline.to_json(),
            "anf_mean": self.anf_mean,
            "anf_std": self.anf_std,
            "per_repetition": [m.to_json() for m in self.per_repetition],
        }


def evaluate(
    tasks: list[TaskRecord],
    mode: PromptMode,
    richness: RichnessLevel,
    repetitions: int,
    kg: KnowledgeGraph | None,
    runner,
    client: ChatClient,
    cfg: ProviderConfig,
    cost_model: CostModel | None = None,
    workers: int = 1,
    ledger_path: str | Path | None = None,
    timeout_s: float = 10.0,
    failing_first: bool = False,
) -> EvaluationResult:
    """Run the whole corpus ``repetitions`` times and aggregate."""
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    if cfg.temperature != 0:
        raise ConfigError("evaluation runs require temperature 0")

    ledger_file = None
    ledger_lock = threading.Lock()
    if ledger_path is not None:
        ledger_file = open(ledger_path, "w", encoding="utf-8")

    all_reps: list[list[RepairOutcome]] = []
    try:
        for repetition in range(repetitions):
            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    outcomes = list(
                        pool.map(
                            lambda task: repair_task(
                                task, mode, richness, kg, runner, client, cfg,
                                timeout_s, failing_first,
                            ),
                            tasks,
                        )
                    )
            else:
                outcomes = [
                    repair_task(
                        task, mode, richness, kg, runner, client, cfg,
                        timeout_s, failing_first,
                    )
                    for task in tasks
                ]
            if ledger_file is not None:
                with ledger_lock:
                    for outcome in outcomes:
                        row = outcome.to_json()
                        row["repetition"] = repetition
                        ledger_file.write(json.dumps(row, ensure_ascii=False) + "\n")
                    ledger_file.flush()
            all_reps.append(outcomes)
    finally:
        if ledger_file is not None:
            ledger_file.close()

    per_repetition = [compute_metrics(outcomes, cost_model) for outcomes in all_reps]
    anfs = [m.anf for m in per_repetition]
    median_index = select_median_repetition(anfs)
    return EvaluationResult(
        mode=mode,
        richness=richness,
        repetitions=all_reps,
        per_repetition=per_repetition,
        median_index=median_index,
        headline=per_repetition[median_index],
        anf_mean=statistics.fmean(anfs),
        anf_std=statistics.pstdev(anfs),
    )


def metrics_from_ledger(
    path: str | Path,
    repetition: int = 0,
    cost_model: CostModel | None = None,
) -> RunMetrics:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        if row.get("repetition", 0) == repetition:
            rows.append(row)
    return compute_metrics(rows, cost_model)


@dataclass
class OverlapReport:
    """Exclusive intersection counts of fixed-task sets, upset-plot style."""

    counts: dict[tuple[str, ...], int]

    def to_json(self) -> list[dict]:
        ordered = sorted(self.counts.items(), key=lambda kv: (len(kv[0]), kv[0]))
        return [{"modes": list(modes), "count": count} for modes, count in ordered]


def overlap(outcomes_by_mode: dict[str, list[RepairOutcome]]) -> OverlapReport:
    """Exclusive fixed-set intersections for every nonempty mode subset."""
    task_sets = {
        mode: {o.task_id for o in outcomes} for mode, outcomes in outcomes_by_mode.items()
    }
    reference = None
    for mode, ids in task_sets.items():
        if reference is None:
            reference = ids
        elif ids != reference:
            raise CorpusError(f"mode {mode!r} was evaluated on a different corpus")

    fixed = {
        mode: {o.task_id for o in outcomes if o.passed}
        for mode, outcomes in outcomes_by_mode.items()
    }
    counts: dict[tuple[str, ...], int] = {}
    for task_id in reference or set():
        owners = tuple(sorted(m for m, ids in fixed.items() if task_id in ids))
        if owners:
            counts[owners] = counts.get(owners, 0) + 1
    return OverlapReport(counts=counts)


def summary_table(results: dict[str, RunMetrics]) -> str:
    """Human-readable per-mode table."""
    header = f"{'mode':24} {'ANF':>5} {'FR':>8} {'TU':>10} {'MS':>12}"
    lines = [header, "-" * len(header)]
    for mode_name in sorted(results):
        m = results[mode_name]
        lines.append(
            f"{mode_name:24} {m.anf:>5} {m.fr_display:>8} {m.tu:>10.2f} {m.ms:>12.5f}"
        )
    return "\n".join(lines)
