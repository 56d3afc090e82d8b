"""Command-line entry point.

Subcommands: ``kg build``, ``kg query``, ``repair``, ``eval``. Configuration
precedence is flags > environment variables (``DSREPAIR_*``) > config file
(plain ``key = value`` lines). Exit codes: 0 success, 1 tests failed,
2 config error, 3 provider error, 4 runner error.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from pathlib import Path

from . import __version__
from .bugs import ReplayRunner, SubprocessRunner
from .errors import (
    ConfigError,
    DsRepairError,
    ProviderError,
    QuerySyntaxError,
    RunnerError,
)
from .harness import (
    evaluate,
    load_corpus,
    overlap,
    repair_task,
    summary_table,
    TaskRecord,
)
from .ingest import ingest_corpus
from .kg import load_dump
from .llm import ChatClient, CostModel, HttpProvider, MockProvider, ProviderConfig, ReplayProvider
from .prompts import PromptMode
from .retrieval import RichnessLevel
from .sparql import execute_select, parse_select

MODE_NAMES = [m.value for m in PromptMode]
RICHNESS_NAMES = [r.value for r in RichnessLevel]

EXIT_OK = 0
EXIT_TESTS_FAILED = 1
EXIT_CONFIG = 2
EXIT_PROVIDER = 3
EXIT_RUNNER = 4


def read_config_file(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"bad config line (expected key = value): {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


class Settings:
    """flag > DSREPAIR_<KEY> env var > config file > default."""

    def __init__(self, config_path: str | None):
        self.file_values = read_config_file(config_path) if config_path else {}

    def get(self, key: str, flag_value, default=None):
        if flag_value is not None:
            return flag_value
        env_value = os.environ.get(f"DSREPAIR_{key.upper()}")
        if env_value is not None:
            return env_value
        if key in self.file_values:
            return self.file_values[key]
        return default


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsrepair",
        description="Repair buggy data science code with knowledge-graph retrieval "
        "and statement-level bug localization.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    kg = sub.add_parser("kg", help="build or query the API knowledge graph")
    kg_sub = kg.add_subparsers(dest="kg_command", required=True)

    kg_build = kg_sub.add_parser("build", help="ingest documentation records into a dump")
    kg_build.add_argument("--docs", required=True, help="line-delimited JSON record file")
    kg_build.add_argument("--out", required=True, help="dump file to write")
    kg_build.add_argument(
        "--library-version",
        action="append",
        default=[],
        metavar="NAME=VERSION",
        help="pin a library version in the dump metadata (repeatable)",
    )

    kg_query = kg_sub.add_parser("query", help="run a SELECT query against a dump")
    kg_query.add_argument("--kg", required=True, help="dump file to load")
    kg_query.add_argument("--select", required=True, help="SELECT query text")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (key = value lines)")
    common.add_argument("--kg", help="knowledge graph dump")
    common.add_argument("--mode", choices=MODE_NAMES + ["all"], help="prompt mode")
    common.add_argument("--richness", choices=RICHNESS_NAMES, help="API knowledge richness")
    common.add_argument(
        "--provider", choices=["mock", "replay", "http"], help="chat-completion backend"
    )
    common.add_argument("--mock-script", help="rule file for the mock provider")
    common.add_argument("--llm-transcript", help="exchange transcript for the replay provider")
    common.add_argument("--endpoint", help="HTTP provider endpoint URL")
    common.add_argument("--model", help="model name sent to the provider")
    common.add_argument(
        "--api-key-env",
        help="name of the environment variable holding the API key",
    )
    common.add_argument("--runner-cmd", help="command line that starts the sandbox runner")
    common.add_argument(
        "--runner-transcript", help="recorded runner transcript for replay mode"
    )
    common.add_argument("--timeout-s", type=float, default=10.0, help="per-statement timeout")
    common.add_argument(
        "--failing-first",
        action="store_true",
        help="order API knowledge for the failing statement's calls first",
    )
    common.add_argument("--out", help="output directory")

    repair = sub.add_parser("repair", parents=[common], help="repair a single task")
    repair.add_argument("--task", required=True, help="JSON file with one task record")

    eval_cmd = sub.add_parser("eval", parents=[common], help="evaluate over a corpus")
    eval_cmd.add_argument("--corpus", required=True, help="line-delimited JSON task corpus")
    eval_cmd.add_argument("--repetitions", type=int, help="number of repeated runs")
    eval_cmd.add_argument("--workers", type=int, help="parallel repair workers")
    eval_cmd.add_argument(
        "--input-price", type=float, default=0.0, help="USD per 1M input tokens"
    )
    eval_cmd.add_argument(
        "--output-price", type=float, default=0.0, help="USD per 1M output tokens"
    )
    return parser


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return p


def cmd_kg_build(args) -> int:
    docs = _require_file(args.docs, "--docs file")
    versions = {}
    for pin in args.library_version:
        if "=" not in pin:
            raise ConfigError(f"--library-version expects NAME=VERSION, got {pin!r}")
        name, _, version = pin.partition("=")
        versions[name.strip()] = version.strip()
    result = ingest_corpus(docs, versions=versions)
    for line_no, message in result.errors:
        print(f"{docs}:{line_no}: {message}", file=sys.stderr)
    Path(args.out).write_text(result.graph.save_dump(), encoding="utf-8")
    print(
        f"ingested {result.n_records} records -> {len(result.graph)} triples "
        f"({len(result.errors)} bad lines)"
    )
    return EXIT_OK


def cmd_kg_query(args) -> int:
    dump = _require_file(args.kg, "--kg dump")
    graph = load_dump(dump.read_text(encoding="utf-8"))
    query = parse_select(args.select)
    for row in execute_select(graph, query):
        names = query.variables if query.variables is not None else sorted(row)
        values = []
        for name in names:
            term = row.get(name)
            if term is None:
                values.append("")
            else:
                values.append(term.value)
        print("\t".join(values))
    return EXIT_OK


def _make_provider(args, settings: Settings):
    provider_kind = settings.get("provider", args.provider, default="mock")
    if provider_kind == "mock":
        script = settings.get("mock_script", args.mock_script)
        if script:
            backend = MockProvider.from_script(_require_file(script, "--mock-script"))
        else:
            raise ConfigError("mock provider needs --mock-script")
        return ChatClient(backend)
    if provider_kind == "replay":
        transcript = settings.get("llm_transcript", args.llm_transcript)
        if not transcript:
            raise ConfigError("replay provider needs --llm-transcript")
        return ChatClient(ReplayProvider(_require_file(transcript, "--llm-transcript")))
    if provider_kind == "http":
        return ChatClient(HttpProvider())
    raise ConfigError(f"unknown provider {provider_kind!r}")


def _make_runner(args, settings: Settings):
    transcript = settings.get("runner_transcript", args.runner_transcript)
    if transcript:
        return ReplayRunner(_require_file(transcript, "--runner-transcript"))
    command = settings.get("runner_cmd", args.runner_cmd)
    if not command:
        raise ConfigError("need --runner-cmd or --runner-transcript")
    return SubprocessRunner(shlex.split(command), default_timeout_s=args.timeout_s)


def _make_cfg(args, settings: Settings) -> ProviderConfig:
    return ProviderConfig(
        endpoint=settings.get("endpoint", args.endpoint, default="") or "",
        model_name=settings.get("model", args.model, default="") or "",
        api_key_env=settings.get("api_key_env", args.api_key_env, default="DSREPAIR_API_KEY"),
        temperature=0.0,
    )


def _load_kg(args, settings: Settings, mode_names: list[str]):
    needs_kg = any(
        name in (PromptMode.DSREPAIR.value, PromptMode.DSREPAIR_WO_BUG.value)
        for name in mode_names
    )
    kg_path = settings.get("kg", args.kg)
    if kg_path is None:
        if needs_kg:
            raise ConfigError("--kg is required for modes that retrieve API knowledge")
        return None
    dump = _require_file(kg_path, "--kg dump")
    return load_dump(dump.read_text(encoding="utf-8"))


def cmd_repair(args) -> int:
    settings = Settings(args.config)
    mode_name = settings.get("mode", args.mode, default=PromptMode.DSREPAIR.value)
    if mode_name == "all":
        raise ConfigError("repair takes a single --mode, not 'all'")
    mode = PromptMode(mode_name)
    richness = RichnessLevel(
        settings.get("richness", args.richness, default=RichnessLevel.EXPRESSION_ONLY.value)
    )
    task_file = _require_file(args.task, "--task file")
    kg = _load_kg(args, settings, [mode.value])
    runner = _make_runner(args, settings)
    client = _make_provider(args, settings)
    cfg = _make_cfg(args, settings)

    obj = json.loads(task_file.read_text(encoding="utf-8"))
    task = TaskRecord(
        id=obj["id"],
        library=obj.get("library", ""),
        description=obj["description"],
        buggy_code=obj["buggy_code"],
        imports=obj.get("imports", ""),
        test_code=obj.get("test_code", ""),
    )
    outcome = repair_task(
        task,
        mode,
        richness,
        kg,
        runner,
        client,
        cfg,
        timeout_s=args.timeout_s,
        failing_first=args.failing_first,
    )
    print(outcome.patched_code)
    print(json.dumps(outcome.to_json(), ensure_ascii=False))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "ledger.jsonl", "a", encoding="utf-8") as handle:
            handle.write(json.dumps(outcome.to_json(), ensure_ascii=False) + "\n")
    if outcome.passed:
        return EXIT_OK
    if outcome.error.startswith("provider failure"):
        return EXIT_PROVIDER
    if outcome.error.startswith("runner failure"):
        return EXIT_RUNNER
    return EXIT_TESTS_FAILED


def cmd_eval(args) -> int:
    settings = Settings(args.config)
    mode_name = settings.get("mode", args.mode, default=PromptMode.DSREPAIR.value)
    mode_names = MODE_NAMES if mode_name == "all" else [mode_name]
    richness = RichnessLevel(
        settings.get("richness", args.richness, default=RichnessLevel.EXPRESSION_ONLY.value)
    )
    repetitions = int(settings.get("repetitions", args.repetitions, default=1))
    workers = int(settings.get("workers", args.workers, default=1))
    corpus_file = _require_file(args.corpus, "--corpus file")
    out_dir = Path(args.out or "eval-out")
    out_dir.mkdir(parents=True, exist_ok=True)

    kg = _load_kg(args, settings, mode_names)
    runner = _make_runner(args, settings)
    client = _make_provider(args, settings)
    cfg = _make_cfg(args, settings)
    cost_model = CostModel.per_million(args.input_price, args.output_price)

    loaded = load_corpus(corpus_file)
    for line_no, message in loaded.errors:
        print(f"{corpus_file}:{line_no}: {message}", file=sys.stderr)
    if not loaded.tasks:
        raise ConfigError("corpus holds no usable tasks")

    headline_metrics = {}
    headline_outcomes = {}
    for name in mode_names:
        mode = PromptMode(name)
        result = evaluate(
            loaded.tasks,
            mode,
            richness,
            repetitions,
            kg,
            runner,
            client,
            cfg,
            cost_model=cost_model,
            workers=workers,
            ledger_path=out_dir / f"ledger-{name}.jsonl",
            timeout_s=args.timeout_s,
            failing_first=args.failing_first,
        )
        (out_dir / f"metrics-{name}.json").write_text(
            json.dumps(result.to_json(), indent=2) + "\n", encoding="utf-8"
        )
        headline_metrics[name] = result.headline
        headline_outcomes[name] = result.repetitions[result.median_index]

    if len(headline_outcomes) > 1:
        report = overlap(headline_outcomes)
        (out_dir / "overlap.json").write_text(
            json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8"
        )
    print(summary_table(headline_metrics))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "kg":
            if args.kg_command == "build":
                return cmd_kg_build(args)
            return cmd_kg_query(args)
        if args.command == "repair":
            return cmd_repair(args)
        return cmd_eval(args)
    except QuerySyntaxError as exc:
        print(f"query error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except RunnerError as exc:
        print(f"runner error: {exc}", file=sys.stderr)
        return EXIT_RUNNER
    except DsRepairError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
