"""Command-line entry point.

Conventions: stdout carries data (tables, prompts, Q&A text), stderr
carries logs. Exit codes: 0 success, 1 runtime error, 2 validation
failure, 3 configuration/usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .evaluation import (
    CRITERIA,
    EvaluationRecord,
    ScoreOutOfRange,
    ScoreParseError,
    StepsCache,
    aggregate,
    evaluate_record,
    render_table,
)
from .generation import (
    GenerationConfig,
    MatrixResult,
    ReportRecord,
    ValidationFailed,
    atomic_write_json,
    load_records,
    make_record,
    record_from_dict,
    run_matrix,
    write_record,
)
from .human_eval import (
    AUTHORS,
    ResponseStore,
    create_session,
    machine_human_agreement,
)
from .llm import (
    BackendConfig,
    ChatClient,
    HttpBackend,
    JournalWriter,
    LlmError,
    MockBackend,
    RateLimiter,
    ReplayBackend,
)
from .match_data import MatchDataError, load_match, parse_set_csv, validate_match, validate_set
from .prompts import (
    DataType,
    IclMethod,
    MissingExemplars,
    build_match_prompt,
    build_prompt,
    load_exemplars,
)
from .stats import answer_questions, render_qa

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2
EXIT_CONFIG = 3

ICL_LABELS = {
    IclMethod.ZERO_SHOT: "zero-shot",
    IclMethod.ONE_SHOT: "one-shot",
    IclMethod.FEW_SHOT: "few-shot",
    IclMethod.COT: "CoT",
}
DATA_TYPE_LABELS = {DataType.CSV: "CSV", DataType.QA: "Q&A"}


class ConfigError(Exception):
    pass


def log(msg: str) -> None:
    print(msg, file=sys.stderr)


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    dataset_hash: str
    config: dict
    backend_summary: dict
    tool_version: str
    created_at: str


class _Parser(argparse.ArgumentParser):
    # the spec reserves exit code 2 for validation failures, so usage
    # errors leave through the config-error code instead
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit2(EXIT_CONFIG, message)


class SystemExit2(Exception):
    def __init__(self, code: int, message: str = ""):
        super().__init__(message)
        self.code = code


# -- config ------------------------------------------------------------------

_ENV_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _interpolate(value: str) -> str:
    return _ENV_REF.sub(lambda m: os.environ.get(m.group(1), ""), value)


def _parse_enum(cls, raw: str, field: str):
    try:
        return cls(raw)
    except ValueError:
        valid = [v.value for v in cls]
        raise ConfigError(f"{field}: {raw!r} is not one of {valid}") from None


def load_config(path: str | Path):
    """Read the generate config; paths are relative to the config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
    if "matches" not in doc or not doc["matches"]:
        raise ConfigError("config must list at least one match sidecar under 'matches'")

    base = path.parent
    matches = [load_match(base / m) for m in doc["matches"]]
    data_types = tuple(_parse_enum(DataType, v, "data_types") for v in doc.get("data_types", ["csv", "qa"]))
    icl_methods = tuple(
        _parse_enum(IclMethod, v, "icl_methods")
        for v in doc.get("icl_methods", ["zero_shot", "one_shot", "few_shot", "cot"])
    )
    models = tuple(doc.get("models", ["gpt-3.5-turbo-0125"]))
    exemplar_dir = doc.get("exemplar_dir")
    if exemplar_dir is not None:
        exemplar_dir = str(base / exemplar_dir)
    cfg = GenerationConfig(
        data_types=data_types,
        icl_methods=icl_methods,
        model_ids=models,
        exemplar_dir=exemplar_dir,
        per_set=bool(doc.get("per_set", False)),
        temperature=float(doc.get("temperature", 0.7)),
        max_tokens=int(doc.get("max_tokens", 1024)),
    )
    backend_doc = {k: (_interpolate(v) if isinstance(v, str) else v) for k, v in doc.get("backend", {}).items()}
    try:
        backend_cfg = BackendConfig(**backend_doc)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad backend config: {e}") from None
    rpm = doc.get("requests_per_minute")
    return matches, cfg, backend_cfg, rpm


def dataset_hash(paths: list[Path]) -> str:
    h = hashlib.sha256()
    for p in sorted(paths):
        h.update(p.name.encode("utf-8"))
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def load_mock_script(path: str | Path) -> dict:
    """Mock script file: JSON object mapping fingerprints,
    "contains:<substring>" patterns, or "default" to response strings,
    {"error": "<LlmError class>"} objects, or lists of either."""
    from . import llm

    doc = json.loads(Path(path).read_text(encoding="utf-8"))

    def convert(value):
        if isinstance(value, list):
            return [convert(v) for v in value]
        if isinstance(value, dict) and "error" in value:
            cls = getattr(llm, value["error"], None)
            if not (isinstance(cls, type) and issubclass(cls, LlmError)):
                raise ConfigError(f"unknown error class {value['error']!r} in mock script")
            return cls(value.get("message", "scripted failure"))
        return value

    return {k: convert(v) for k, v in doc.items()}


DEFAULT_EVAL_SCRIPT = {
    "contains:Please write the evaluation steps": (
        "1. Read the whole report once to get the overall picture.\n"
        "2. Check the relevant quality dimension sentence by sentence.\n"
        "3. Decide on a single score from 1 to 10."
    ),
    # a varied cycle so offline runs produce non-constant aggregates
    "contains:Evaluation Form:": [f"Score: {n}" for n in (8, 9, 8, 7, 9, 10, 6)],
}


def make_client(args, backend_cfg: BackendConfig, journal_path: Path | None, rpm=None) -> ChatClient:
    if getattr(args, "replay", None):
        backend = ReplayBackend(args.replay)
    elif getattr(args, "mock_script", None):
        backend = MockBackend(load_mock_script(args.mock_script))
    elif getattr(args, "mock", False):
        backend = MockBackend(dict(DEFAULT_EVAL_SCRIPT) if getattr(args, "_eval_default", False) else {})
    else:
        backend = HttpBackend(backend_cfg)
    journal = JournalWriter(journal_path) if journal_path else None
    limiter = RateLimiter(rpm) if rpm else None
    return ChatClient(backend=backend, cfg=backend_cfg, journal=journal, rate_limiter=limiter)


# -- subcommands ---------------------------------------------------------------


def _find_sidecar(target: Path) -> Path:
    if target.is_dir():
        candidates = sorted(target.glob("*.json"))
        if not candidates:
            raise ConfigError(f"no match sidecar (*.json) in {target}")
        return candidates[0]
    return target


def _parse_set_lenient(text: str):
    """Parse for validation: when the side mapping cannot be inferred
    (the progression itself is broken), fall back to first-seen scorer
    names so validate_set can still report every violation as data."""
    from .match_data import AmbiguousMapping, InconsistentMapping

    try:
        return parse_set_csv(text)
    except (AmbiguousMapping, InconsistentMapping):
        names = []
        for line in text.splitlines()[1:]:
            name = line.split(",")[0].strip()
            if name and name not in names:
                names.append(name)
        names += ["(side A)", "(side B)"]
        return parse_set_csv(text, player_a=names[0], player_b=names[1])


def cmd_validate(args) -> int:
    target = Path(args.target)
    if not target.exists():
        raise ConfigError(f"{target} does not exist")
    if target.suffix == ".csv":
        game_set = _parse_set_lenient(target.read_text(encoding="utf-8"))
        reports = [(game_set.set_number, validate_set(game_set))]
        match_report = None
    else:
        match = load_match(_find_sidecar(target))
        match_report, reports = validate_match(match)

    failed = False
    if match_report is not None:
        for _, rule, msg in match_report.errors:
            failed = True
            log(f"ERROR [{rule}] {msg}")
        for rule, msg in match_report.warnings:
            log(f"WARN  [{rule}] {msg}")
    for set_number, report in reports:
        for index, rule, msg in report.errors:
            failed = True
            log(f"ERROR set {set_number} rally index {index} [{rule}] {msg}")
        for rule, msg in report.warnings:
            log(f"WARN  set {set_number} [{rule}] {msg}")
    if failed:
        return EXIT_VALIDATION
    log("validation passed")
    return EXIT_OK


def cmd_qa(args) -> int:
    game_set = parse_set_csv(Path(args.set_csv).read_text(encoding="utf-8"))
    report = validate_set(game_set)
    if not report.ok():
        for index, rule, msg in report.errors:
            log(f"ERROR rally index {index} [{rule}] {msg}")
        return EXIT_VALIDATION
    print(render_qa(answer_questions(game_set)))
    return EXIT_OK


def cmd_prompt(args) -> int:
    data_type = _parse_enum(DataType, args.data_type, "--data-type")
    icl = _parse_enum(IclMethod, args.icl, "--icl")
    exemplars = load_exemplars(args.exemplar_dir) if args.exemplar_dir else []
    target = Path(args.target)
    if target.suffix == ".csv":
        game_set = parse_set_csv(target.read_text(encoding="utf-8"))
        bundle = build_prompt(data_type, icl, game_set, exemplars)
    else:
        match = load_match(_find_sidecar(target))
        bundle = build_match_prompt(data_type, icl, match, exemplars)
    print(bundle.render())
    return EXIT_OK


def cmd_generate(args) -> int:
    matches, cfg, backend_cfg, rpm = load_config(args.config)
    exemplars = load_exemplars(cfg.exemplar_dir) if cfg.exemplar_dir else []

    run_id = args.run_id or datetime.now(timezone.utc).strftime("run-%Y%m%d-%H%M%S")
    run_dir = Path(args.runs_root) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    client = make_client(args, backend_cfg, run_dir / "journal.jsonl", rpm)

    result: MatrixResult = run_matrix(
        matches, cfg, client, exemplars=exemplars, jobs=args.jobs, run_dir=run_dir
    )

    config_doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    source_files = [Path(args.config)]
    base = Path(args.config).parent
    for m in config_doc["matches"]:
        sidecar = base / m
        source_files.append(sidecar)
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        source_files += [sidecar.parent / f for f in meta["set_files"]]
    manifest = RunManifest(
        run_id=run_id,
        dataset_hash=dataset_hash(source_files),
        config=config_doc,
        backend_summary={
            "endpoint_url": backend_cfg.endpoint_url,
            "api_key_env": backend_cfg.api_key_env,
            "timeout_s": backend_cfg.timeout_s,
            "max_retries": backend_cfg.max_retries,
            "mock": bool(args.mock or args.mock_script or args.replay),
        },
        tool_version=__version__,
        created_at=datetime.now(timezone.utc).isoformat(),
    )
    atomic_write_json(run_dir / "manifest.json", manifest.__dict__)

    log(f"wrote {len(result.records)} report(s), {len(result.failures)} failure(s) to {run_dir}")
    print(str(run_dir))
    if result.failures and not result.records:
        return EXIT_RUNTIME
    return EXIT_OK


def _run_dir(args) -> Path:
    run_dir = Path(args.runs_root) / args.run
    if not run_dir.exists():
        raise ConfigError(f"run directory {run_dir} does not exist")
    return run_dir


def cmd_evaluate(args) -> int:
    run_dir = _run_dir(args)
    records = load_records(run_dir / "reports")
    if not records:
        raise ConfigError(f"run {args.run} has no reports to evaluate")
    backend_cfg = BackendConfig()
    args._eval_default = True
    client = make_client(args, backend_cfg, run_dir / "eval_journal.jsonl")
    cache = StepsCache()
    evals_dir = run_dir / "evals"
    evals_dir.mkdir(exist_ok=True)

    def judge(record: ReportRecord):
        return evaluate_record(
            record.record_id,
            record.report,
            client,
            args.judge_model,
            n_samples=args.n_samples,
            cache=cache,
        )

    failures = []
    results: list[EvaluationRecord] = []
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = pool.map(lambda r: _try_judge(judge, r, failures), records)
            results = [r for r in outcomes if r is not None]
    else:
        results = [r for r in (_try_judge(judge, rec, failures) for rec in records) if r is not None]

    for ev in results:
        atomic_write_json(evals_dir / f"{ev.record_id}.json", eval_to_dict(ev))
    log(f"evaluated {len(results)} report(s), {len(failures)} failure(s)")
    for failure in failures:
        log(f"FAIL {failure}")
    return EXIT_RUNTIME if failures else EXIT_OK


def _try_judge(judge, record, failures):
    try:
        return judge(record)
    except (LlmError, ScoreParseError, ScoreOutOfRange, ValueError) as e:
        failures.append(f"{record.record_id}: {type(e).__name__}: {e}")
        return None


def eval_to_dict(ev: EvaluationRecord) -> dict:
    return {
        "record_id": ev.record_id,
        "rater": ev.rater,
        "scores": dict(ev.scores),
        "n_samples": ev.n_samples,
        "raw_responses": list(ev.raw_responses),
    }


def eval_from_dict(doc: dict) -> EvaluationRecord:
    return EvaluationRecord(
        record_id=doc["record_id"],
        rater=doc["rater"],
        scores=dict(doc["scores"]),
        n_samples=doc.get("n_samples", 1),
        raw_responses=tuple(doc.get("raw_responses", ())),
    )


def load_evals(run_dir: Path) -> list[EvaluationRecord]:
    evals_dir = run_dir / "evals"
    if not evals_dir.exists():
        return []
    return [eval_from_dict(json.loads(p.read_text(encoding="utf-8"))) for p in sorted(evals_dir.glob("*.json"))]


def cmd_aggregate(args) -> int:
    run_dir = _run_dir(args)
    evals = load_evals(run_dir)
    if not evals:
        raise ConfigError(f"run {args.run} has no evaluation records; run `badge evaluate` first")
    reports = {r.record_id: r for r in load_records(run_dir / "reports")}

    if args.group_by == "icl+datatype":
        dt_order = list(DataType)
        icl_order = list(IclMethod)

        def grouping(ev: EvaluationRecord):
            report = reports[ev.record_id]
            if report.data_type is None or report.icl is None:
                return None
            label = f"{DATA_TYPE_LABELS[report.data_type]} + {ICL_LABELS[report.icl]}"
            return (dt_order.index(report.data_type) * 10 + icl_order.index(report.icl), label)

        evals = [e for e in evals if grouping(e) is not None]
        header = "Data Type + ICL"
    else:
        author_order = list(AUTHORS)

        def grouping(ev: EvaluationRecord):
            writer = reports[ev.record_id].writer()
            index = author_order.index(writer) if writer in author_order else len(author_order)
            return (index, writer)

        header = "Writer"

    rows = aggregate(evals, grouping)
    print(render_table(rows, fmt=args.format, group_header=header))
    return EXIT_OK


def cmd_sessions_create(args) -> int:
    run_dir = _run_dir(args)
    reports = load_records(run_dir / "reports")
    by_writer: dict[str, list[ReportRecord]] = {}
    for record in reports:
        if record.match_id == args.match:
            by_writer.setdefault(record.writer(), []).append(record)

    def pick(writer: str, wanted: str | None) -> ReportRecord:
        pool = sorted(by_writer.get(writer, []), key=lambda r: r.record_id)
        if wanted:
            for record in pool:
                if record.record_id == wanted:
                    return record
            raise ConfigError(f"record {wanted} not found for writer {writer}")
        if not pool:
            raise ConfigError(f"no {writer} report for match {args.match} in run {args.run}")
        return pool[0]

    human_text = Path(args.human_file).read_text(encoding="utf-8").strip()
    if not human_text:
        raise ConfigError(f"human report file {args.human_file} is empty")
    gpt35 = pick("gpt35", args.gpt35_record)
    gpt4 = pick("gpt4", args.gpt4_record)

    # register the human-written report so the machine judge can score it too
    human_record = make_record(args.match, "all", None, None, "human", "", human_text)
    write_record(human_record, run_dir / "reports")

    session = create_session(
        [("human", human_text), ("gpt35", gpt35.report), ("gpt4", gpt4.report)],
        args.seed,
        match_id=args.match,
    )
    store = ResponseStore(run_dir / "human")
    store.save_session(session)
    log(f"session {session.session_id} created (reports: human, {gpt35.record_id}, {gpt4.record_id})")
    print(session.session_id)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    if args.store:
        store_dir = Path(args.store)
    else:
        if not args.run:
            raise ConfigError("serve needs --store DIR or --run ID")
        store_dir = _run_dir(args) / "human"
    ui_dir = None
    if args.ui_dir:
        ui_dir = Path(args.ui_dir).resolve()
        if not ui_dir.is_dir():
            raise ConfigError(f"--ui-dir {args.ui_dir} is not a directory")
    store = ResponseStore(store_dir)
    app = create_app(store, ui_dir=ui_dir, allow_cors=args.open_cors)
    log(f"serving sessions from {store_dir} on {args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_agreement(args) -> int:
    run_dir = _run_dir(args)
    evals = load_evals(run_dir)
    reports = {r.record_id: r for r in load_records(run_dir / "reports")}
    store = ResponseStore(run_dir / "human")
    sessions = {s.session_id: s for s in store.list_sessions()}
    responses = store.all_responses()
    if not responses:
        raise ConfigError(f"run {args.run} has no human responses yet")

    authors_by_record = {
        record_id: report.writer()
        for record_id, report in reports.items()
        if report.writer() in AUTHORS
    }
    stats = machine_human_agreement(
        evals, responses, sessions, authors_by_record, pairing=args.pairing
    )
    print(f"pearson_r: {stats.pearson_r:.3f}")
    print("pairs (cell, machine, human):")
    for label, machine_value, human_value in stats.pairs:
        print(f"  {label}: {machine_value:.3f} vs {human_value:.3f}")
    print("guess accuracy:")
    for author in AUTHORS:
        if author in stats.guess_accuracy:
            print(f"  {author}: {stats.guess_accuracy[author]:.0%}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="badge", description="badminton report generation and evaluation")
    parser.add_argument("--version", action="version", version=f"badge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="validate a match directory, sidecar, or set CSV")
    p.add_argument("target")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("qa", help="print the eight Q&A pairs for a set CSV")
    p.add_argument("set_csv")
    p.set_defaults(func=cmd_qa)

    p = sub.add_parser("prompt", help="print a built prompt")
    p.add_argument("target", help="match sidecar/directory or set CSV")
    p.add_argument("--data-type", required=True, choices=[d.value for d in DataType])
    p.add_argument("--icl", required=True, choices=[i.value for i in IclMethod])
    p.add_argument("--exemplar-dir")
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("generate", help="run the generation matrix")
    p.add_argument("--config", required=True)
    p.add_argument("--runs-root", default="runs")
    p.add_argument("--run-id")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mock", action="store_true", help="offline deterministic backend")
    p.add_argument("--mock-script", help="JSON mock script file")
    p.add_argument("--replay", help="journal file to replay instead of a live backend")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="machine-judge a run's reports")
    p.add_argument("--run", required=True)
    p.add_argument("--runs-root", default="runs")
    p.add_argument("--judge-model", default="gpt-4-turbo-2024-04-09")
    p.add_argument("--n-samples", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--mock", action="store_true")
    p.add_argument("--mock-script")
    p.add_argument("--replay")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("aggregate", help="print Table-shaped score aggregates")
    p.add_argument("--run", required=True)
    p.add_argument("--runs-root", default="runs")
    p.add_argument("--group-by", choices=["icl+datatype", "writer"], default="icl+datatype")
    p.add_argument("--format", choices=["text", "csv"], default="text")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("sessions", help="human-evaluation sessions")
    sessions_sub = p.add_subparsers(dest="sessions_command", required=True, parser_class=_Parser)
    pc = sessions_sub.add_parser("create", help="create a blind session from a run")
    pc.add_argument("--run", required=True)
    pc.add_argument("--runs-root", default="runs")
    pc.add_argument("--match", required=True)
    pc.add_argument("--human-file", required=True)
    pc.add_argument("--seed", type=int, required=True)
    pc.add_argument("--gpt35-record")
    pc.add_argument("--gpt4-record")
    pc.set_defaults(func=cmd_sessions_create)

    p = sub.add_parser("serve", help="start the annotation service")
    p.add_argument("--port", type=int, default=8400)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--run")
    p.add_argument("--runs-root", default="runs")
    p.add_argument("--store", help="serve an explicit store directory instead of a run")
    p.add_argument("--ui-dir", help="static directory with the built annotation form")
    p.add_argument("--open-cors", action="store_true")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("agreement", help="machine vs human agreement statistics")
    p.add_argument("--run", required=True)
    p.add_argument("--runs-root", default="runs")
    p.add_argument("--pairing", choices=["cells", "responses"], default="cells")
    p.set_defaults(func=cmd_agreement)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit2 as e:
        if str(e):
            log(f"error: {e}")
        return e.code
    except ConfigError as e:
        log(f"config error: {e}")
        return EXIT_CONFIG
    except MissingExemplars as e:
        log(f"config error: {e}")
        return EXIT_CONFIG
    except (MatchDataError, ValidationFailed) as e:
        log(f"validation error: {e}")
        return EXIT_VALIDATION
    except LlmError as e:
        log(f"backend error: {e}")
        return EXIT_RUNTIME
    except OSError as e:
        log(f"io error: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
