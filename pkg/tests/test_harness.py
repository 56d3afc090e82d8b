import json
import statistics
from itertools import combinations

import pytest

from dsrepair.bugs import ReplayRunner
from dsrepair.errors import ConfigError, CorpusError, ProviderError
from dsrepair.harness import (
    RepairOutcome,
    TaskRecord,
    compute_metrics,
    evaluate,
    extract_fenced_code,
    format_fr,
    load_corpus,
    metrics_from_ledger,
    overlap,
    repair_task,
    select_median_repetition,
    summary_table,
)
from dsrepair.llm import ChatClient, CostModel, MockProvider, ProviderConfig, Usage
from dsrepair.prompts import PromptMode
from dsrepair.retrieval import RichnessLevel


def test_extract_fenced_code_variants():
    assert extract_fenced_code("```python\nx = 1\n```") == "x = 1"
    assert extract_fenced_code("prose\n```\ny = 2\n```\nmore") == "y = 2"
    assert extract_fenced_code("book-report with no code") is None
    two = "```python\nfirst = 1\n```\n```python\nsecond = 2\n```"
    assert extract_fenced_code(two) == "first = 1"


def test_format_fr_half_up_two_decimals():
    assert format_fr(104, 562) == "18.51%"
    assert format_fr(1, 8) == "12.50%"
    assert format_fr(1, 3) == "33.33%"
    assert format_fr(0, 0) == "0.00%"
    # 0.125 rounds half-up at the second decimal
    assert format_fr(1, 800) == "0.13%"


def test_anf_sequence_mean_and_std():
    anfs = [6, 8, 7]
    assert statistics.fmean(anfs) == pytest.approx(7.00)
    assert statistics.pstdev(anfs) == pytest.approx(0.8164965809)
    assert round(statistics.pstdev(anfs), 2) == 0.82


def test_median_selection_lower_middle():
    assert select_median_repetition([6, 8, 7]) == 2  # value 7 observed at index 2
    assert select_median_repetition([5]) == 0
    # even count: lower-middle of sorted [4, 6, 7, 9] is 6, observed at index 0
    assert select_median_repetition([6, 9, 4, 7]) == 0
    with pytest.raises(ValueError):
        select_median_repetition([])


def make_outcome(task_id, library, passed, usages=((100, 50),)):
    from dsrepair.llm import ChatExchange

    outcome = RepairOutcome(
        task_id=task_id,
        library=library,
        mode=PromptMode.DSREPAIR,
        richness=RichnessLevel.EXPRESSION_ONLY,
        passed=passed,
    )
    for tokens_in, tokens_out in usages:
        outcome.exchanges.append(
            ChatExchange("p", "r", Usage(tokens_in, tokens_out), 0.0, "mock")
        )
    return outcome


def test_compute_metrics_per_library_sums_to_total():
    outcomes = [
        make_outcome("a", "numpy", True),
        make_outcome("b", "numpy", False),
        make_outcome("c", "pandas", True),
        make_outcome("d", "scipy", False),
    ]
    metrics = compute_metrics(outcomes, CostModel.per_million(1.0, 1.0))
    assert metrics.anf == 2
    assert metrics.n_tasks == 4
    assert sum(anf for anf, _ in metrics.per_library.values()) == metrics.anf
    assert metrics.per_library["numpy"] == (1, 0.5)
    assert metrics.tu == pytest.approx(150.0)


def test_metrics_exclude_unknown_usage_from_tu():
    known = make_outcome("a", "numpy", True, usages=((100, 100),))
    unknown = make_outcome("b", "numpy", False, usages=())
    unknown.exchanges.append(
        __import__("dsrepair.llm", fromlist=["ChatExchange"]).ChatExchange(
            "p", "r", None, 0.0, "mock"
        )
    )
    metrics = compute_metrics([known, unknown])
    # numerator over usage-known exchanges, denominator all tasks
    assert metrics.tu == pytest.approx(100.0)
    assert metrics.n_tasks == 2


def test_ledger_recompute_reproduces_metrics(tmp_path):
    outcomes = [
        make_outcome("a", "numpy", True, usages=((120, 30), (10, 5))),
        make_outcome("b", "pandas", False),
    ]
    cost_model = CostModel.per_million(0.5, 1.5)
    live = compute_metrics(outcomes, cost_model)
    ledger = tmp_path / "ledger.jsonl"
    with open(ledger, "w") as handle:
        for outcome in outcomes:
            row = outcome.to_json()
            row["repetition"] = 0
            handle.write(json.dumps(row) + "\n")
    replayed = metrics_from_ledger(ledger, repetition=0, cost_model=cost_model)
    assert replayed == live


def test_overlap_basic_set_arithmetic():
    def outcomes_for(fixed, ids=("a", "b", "c", "d")):
        return [
            RepairOutcome(i, "numpy", PromptMode.DSREPAIR, RichnessLevel.EXPRESSION_ONLY, passed=i in fixed)
            for i in ids
        ]

    report = overlap(
        {"m1": outcomes_for({"a", "b", "c"}), "m2": outcomes_for({"b", "c", "d"})}
    )
    assert report.counts[("m1",)] == 1
    assert report.counts[("m2",)] == 1
    assert report.counts[("m1", "m2")] == 2


def test_overlap_identical_sets_single_row():
    def outcomes_for(fixed):
        return [
            RepairOutcome(i, "numpy", PromptMode.DSREPAIR, RichnessLevel.EXPRESSION_ONLY, passed=i in fixed)
            for i in ("a", "b", "c")
        ]

    report = overlap({"m1": outcomes_for({"a", "b"}), "m2": outcomes_for({"a", "b"})})
    assert report.counts == {("m1", "m2"): 2}


def test_overlap_rejects_mismatched_corpora():
    one = [RepairOutcome("a", "numpy", PromptMode.DSREPAIR, RichnessLevel.EXPRESSION_ONLY)]
    other = [RepairOutcome("b", "numpy", PromptMode.DSREPAIR, RichnessLevel.EXPRESSION_ONLY)]
    with pytest.raises(CorpusError):
        overlap({"m1": one, "m2": other})


def powerset_exclusive_oracle(fixed_sets):
    """Inclusion-exclusion over the power set; independent of overlap()."""
    modes = sorted(fixed_sets)
    counts = {}
    for size in range(1, len(modes) + 1):
        for subset in combinations(modes, size):
            inter = set.intersection(*(fixed_sets[m] for m in subset))
            exclusive = set(inter)
            for other in modes:
                if other not in subset:
                    exclusive -= fixed_sets[other]
            if exclusive:
                counts[tuple(subset)] = len(exclusive)
    return counts


def test_overlap_five_modes_matches_powerset_oracle():
    import random

    rng = random.Random(99)
    ids = [f"t{i}" for i in range(40)]
    fixed_sets = {
        f"mode{k}": {i for i in ids if rng.random() < 0.4} for k in range(5)
    }
    outcomes = {
        mode: [
            RepairOutcome(i, "numpy", PromptMode.DSREPAIR, RichnessLevel.EXPRESSION_ONLY, passed=i in fixed)
            for i in ids
        ]
        for mode, fixed in fixed_sets.items()
    }
    report = overlap(outcomes)
    assert report.counts == powerset_exclusive_oracle(fixed_sets)


def test_load_corpus_reports_bad_lines(tmp_path):
    path = tmp_path / "corpus.jsonl"
    good = json.dumps(
        {"id": "a", "library": "numpy", "description": "d", "buggy_code": "x = 1"}
    )
    path.write_text(good + "\n{broken\n" + good + "\n", encoding="utf-8")
    loaded = load_corpus(path)
    assert len(loaded.tasks) == 1  # duplicate id rejected too
    assert [line for line, _ in loaded.errors] == [2, 3]


FIXTURE_TASK = TaskRecord(
    id="fx1",
    library="numpy",
    description="Compute the doubled values. `assert result == [2, 4]` must hold.",
    buggy_code="result = [x for x in data]",
    imports="data = [1, 2]",
    test_code="assert result == [2, 4]",
)


class ScriptedRunner:
    """Canned localize/run_tests responses keyed by (mode, code)."""

    def __init__(self, responses):
        self.responses = responses

    def request(self, payload):
        return self.responses[(payload["mode"], payload["code"])]


def scripted_runner_for(patch, patch_passes=True):
    return ScriptedRunner(
        {
            ("localize", FIXTURE_TASK.buggy_code): {
                "status": "ok",
                "passed": False,
                "kind": "assertion",
                "last_executed_index": 0,
                "failed_source": FIXTURE_TASK.test_code,
                "captured_value_repr": "[1, 2]",
                "stderr": "AssertionError\n",
            },
            ("run_tests", patch): {
                "status": "ok",
                "passed": patch_passes,
                "kind": "none" if patch_passes else "assertion",
                "stderr": "" if patch_passes else "AssertionError\n",
            },
        }
    )


PATCH = "result = [2 * x for x in data]"


def mock_client(response_text):
    return ChatClient(MockProvider(default=(response_text, Usage(50, 20))))


def test_repair_task_passes_with_correct_patch(sample_kg):
    runner = scripted_runner_for(PATCH, patch_passes=True)
    outcome = repair_task(
        FIXTURE_TASK,
        PromptMode.DSREPAIR,
        RichnessLevel.EXPRESSION_ONLY,
        sample_kg,
        runner,
        mock_client(f"```python\n{PATCH}\n```"),
        ProviderConfig(),
    )
    assert outcome.passed
    assert outcome.patched_code == PATCH
    assert outcome.bug_kind == "assertion"
    assert not outcome.flagged_for_review  # test_code present


def test_repair_task_no_fence_is_extraction_failure(sample_kg):
    runner = scripted_runner_for(PATCH)
    outcome = repair_task(
        FIXTURE_TASK,
        PromptMode.DSREPAIR,
        RichnessLevel.EXPRESSION_ONLY,
        sample_kg,
        runner,
        mock_client("I would simply fix the code."),
        ProviderConfig(),
    )
    assert not outcome.passed
    assert "no fenced code block" in outcome.error


def test_repair_task_not_buggy_is_skipped(sample_kg):
    runner = ScriptedRunner(
        {("localize", FIXTURE_TASK.buggy_code): {"status": "ok", "passed": True, "kind": "none"}}
    )
    outcome = repair_task(
        FIXTURE_TASK,
        PromptMode.DSREPAIR,
        RichnessLevel.EXPRESSION_ONLY,
        sample_kg,
        runner,
        mock_client("unused"),
        ProviderConfig(),
    )
    assert outcome.skipped_not_buggy
    assert not outcome.passed


def test_repair_task_provider_failure_is_noted(sample_kg):
    class FailingBackend:
        def complete(self, cfg, prompt):
            raise ProviderError("boom")

    runner = scripted_runner_for(PATCH)
    outcome = repair_task(
        FIXTURE_TASK,
        PromptMode.DSREPAIR,
        RichnessLevel.EXPRESSION_ONLY,
        sample_kg,
        runner,
        ChatClient(FailingBackend()),
        ProviderConfig(),
    )
    assert not outcome.passed
    assert "provider failure" in outcome.error


def test_repair_task_flags_passing_patch_without_tests(sample_kg):
    task = TaskRecord(
        id="fx2",
        library="numpy",
        description="No examples given here.",
        buggy_code="result = 1",
        test_code="",
    )
    runner = ScriptedRunner(
        {
            ("localize", task.buggy_code): {
                "status": "ok",
                "passed": True,
                "kind": "none",
                "stderr": "",
            },
            ("run_tests", PATCH): {"status": "ok", "passed": True, "kind": "none"},
        }
    )
    outcome = repair_task(
        task,
        PromptMode.DSREPAIR,
        RichnessLevel.EXPRESSION_ONLY,
        sample_kg,
        runner,
        mock_client(f"```python\n{PATCH}\n```"),
        ProviderConfig(),
    )
    # executable code with no tests: unknown bug evidence, repair proceeds,
    # and a trivially passing patch is flagged for manual review
    assert outcome.passed
    assert outcome.flagged_for_review


def test_two_stage_mode_makes_two_exchanges(sample_kg):
    runner = scripted_runner_for(PATCH)
    client = mock_client(f"short explanation\n```python\n{PATCH}\n```")
    outcome = repair_task(
        FIXTURE_TASK,
        PromptMode.SELF_REPAIR,
        RichnessLevel.EXPRESSION_ONLY,
        sample_kg,
        runner,
        client,
        ProviderConfig(),
    )
    assert len(outcome.exchanges) == 2


def test_evaluate_requires_temperature_zero(sample_kg):
    with pytest.raises(ConfigError):
        evaluate(
            [FIXTURE_TASK],
            PromptMode.DSREPAIR,
            RichnessLevel.EXPRESSION_ONLY,
            1,
            sample_kg,
            scripted_runner_for(PATCH),
            mock_client("x"),
            ProviderConfig(temperature=0.7),
        )
    with pytest.raises(ConfigError):
        evaluate(
            [FIXTURE_TASK],
            PromptMode.DSREPAIR,
            RichnessLevel.EXPRESSION_ONLY,
            0,
            sample_kg,
            scripted_runner_for(PATCH),
            mock_client("x"),
            ProviderConfig(),
        )


def test_evaluate_single_repetition_is_median(sample_kg, tmp_path):
    ledger = tmp_path / "ledger.jsonl"
    result = evaluate(
        [FIXTURE_TASK],
        PromptMode.DSREPAIR,
        RichnessLevel.EXPRESSION_ONLY,
        1,
        sample_kg,
        scripted_runner_for(PATCH),
        mock_client(f"```python\n{PATCH}\n```"),
        ProviderConfig(),
        cost_model=CostModel.per_million(0.5, 1.5),
        ledger_path=ledger,
    )
    assert result.median_index == 0
    assert result.headline.anf == 1
    assert result.anf_mean == 1.0
    assert result.anf_std == 0.0
    rows = [json.loads(line) for line in ledger.read_text().splitlines()]
    assert len(rows) == 1 and rows[0]["repetition"] == 0


def test_evaluate_parallel_workers_match_serial(sample_kg):
    tasks = [
        TaskRecord(
            id=f"p{i}",
            library="numpy",
            description=FIXTURE_TASK.description,
            buggy_code=FIXTURE_TASK.buggy_code,
            imports=FIXTURE_TASK.imports,
            test_code=FIXTURE_TASK.test_code,
        )
        for i in range(6)
    ]
    args = (
        PromptMode.DSREPAIR,
        RichnessLevel.EXPRESSION_ONLY,
        1,
        sample_kg,
        scripted_runner_for(PATCH),
        mock_client(f"```python\n{PATCH}\n```"),
        ProviderConfig(),
    )
    serial = evaluate(tasks, *args, workers=1)
    parallel = evaluate(tasks, *args, workers=4)
    assert [o.task_id for o in parallel.repetitions[0]] == [t.id for t in tasks]
    assert serial.headline == parallel.headline


def test_summary_table_lists_modes():
    metrics = compute_metrics([make_outcome("a", "numpy", True)])
    table = summary_table({"dsrepair": metrics})
    assert "dsrepair" in table
    assert "ANF" in table


def test_evaluate_median_over_varying_repetitions(sample_kg):
    class AlternatingBackend:
        """Good patch on even calls, garbage on odd ones."""

        def __init__(self):
            self.calls = -1

        def complete(self, cfg, prompt):
            from dsrepair.llm import ChatExchange, Usage

            self.calls += 1
            text = f"```python\n{PATCH}\n```" if self.calls % 2 == 0 else "no patch"
            return ChatExchange(prompt, text, Usage(10, 10), 0.0, "mock")

    result = evaluate(
        [FIXTURE_TASK],
        PromptMode.DSREPAIR,
        RichnessLevel.EXPRESSION_ONLY,
        3,
        sample_kg,
        scripted_runner_for(PATCH),
        ChatClient(AlternatingBackend()),
        ProviderConfig(),
    )
    anfs = [m.anf for m in result.per_repetition]
    assert anfs == [1, 0, 1]
    # sorted [0, 1, 1]: lower-middle is 1, first observed at repetition 0
    assert result.median_index == 0
    assert result.headline.anf == 1
    assert result.anf_mean == pytest.approx(2 / 3)
