"""Stage 1: run the (data type x ICL x model) matrix over matches and
persist one ReportRecord per cell."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .llm import ChatClient, ChatRequest, GENERATION_TEMPERATURE, LlmError, prompt_fingerprint
from .match_data import Match, validate_match
from .prompts import DataType, Exemplar, IclMethod, build_match_prompt, build_prompt


class ValidationFailed(Exception):
    def __init__(self, match_id: str, problems: list[str]):
        super().__init__(f"match {match_id} failed validation: " + "; ".join(problems[:5]))
        self.match_id = match_id
        self.problems = problems


@dataclass(frozen=True)
class GenerationConfig:
    data_types: tuple[DataType, ...] = (DataType.CSV, DataType.QA)
    icl_methods: tuple[IclMethod, ...] = tuple(IclMethod)
    model_ids: tuple[str, ...] = ("gpt-3.5-turbo-0125",)
    exemplar_dir: str | None = None
    per_set: bool = False
    temperature: float = GENERATION_TEMPERATURE
    max_tokens: int = 1024

    def __post_init__(self):
        if not (self.data_types and self.icl_methods and self.model_ids):
            raise ValueError("data_types, icl_methods and model_ids must all be non-empty")

    def cells(self) -> list[tuple[DataType, IclMethod, str]]:
        return [
            (dt, icl, model)
            for dt in self.data_types
            for icl in self.icl_methods
            for model in self.model_ids
        ]


@dataclass(frozen=True)
class ReportRecord:
    record_id: str
    match_id: str
    set_scope: str  # "all" or the set number as a string
    data_type: DataType | None  # None for imported human-written reports
    icl: IclMethod | None
    model_id: str
    prompt: str
    report: str
    created_at: str
    backend_journal_ref: str = ""

    def writer(self) -> str:
        """Coarse author label used for grouping: human / gpt35 / gpt4."""
        return writer_label(self.model_id)


def writer_label(model_id: str) -> str:
    if model_id == "human":
        return "human"
    if model_id.startswith("gpt-3.5"):
        return "gpt35"
    if model_id.startswith("gpt-4"):
        return "gpt4"
    return model_id


def record_id_for(
    match_id: str,
    set_scope: str,
    data_type: DataType | None,
    icl: IclMethod | None,
    model_id: str,
    prompt: str,
    report: str,
) -> str:
    # created_at deliberately excluded so replayed runs hash identically
    h = hashlib.sha256()
    dt = data_type.value if data_type else "-"
    method = icl.value if icl else "-"
    for part in (match_id, set_scope, dt, method, model_id, prompt, report):
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()[:16]


def make_record(
    match_id: str,
    set_scope: str,
    data_type: DataType | None,
    icl: IclMethod | None,
    model_id: str,
    prompt: str,
    report: str,
    journal_ref: str = "",
) -> ReportRecord:
    if not report:
        raise ValueError("report must be non-empty")
    return ReportRecord(
        record_id=record_id_for(match_id, set_scope, data_type, icl, model_id, prompt, report),
        match_id=match_id,
        set_scope=set_scope,
        data_type=data_type,
        icl=icl,
        model_id=model_id,
        prompt=prompt,
        report=report,
        created_at=datetime.now(timezone.utc).isoformat(),
        backend_journal_ref=journal_ref,
    )


def generate_report(
    match: Match,
    cell: tuple[DataType, IclMethod, str],
    client: ChatClient,
    exemplars: list[Exemplar] = (),
    *,
    set_number: int | None = None,
    temperature: float = GENERATION_TEMPERATURE,
    max_tokens: int = 1024,
) -> ReportRecord:
    """Build one prompt for the match (or a single set), call the backend,
    and wrap the response with full provenance."""
    data_type, icl, model_id = cell
    match_report, per_set = validate_match(match)
    problems = [msg for _, _, msg in match_report.errors]
    for n, rep in per_set:
        problems += [f"set {n}: {msg}" for _, _, msg in rep.errors]
    if problems:
        raise ValidationFailed(match.match_id, problems)

    if set_number is None:
        bundle = build_match_prompt(data_type, icl, match, exemplars)
        scope = "all"
    else:
        target = next(s for s in match.sets if s.set_number == set_number)
        bundle = build_prompt(data_type, icl, target, exemplars, match_meta=match)
        scope = str(set_number)

    req = ChatRequest(
        model_id=model_id,
        messages=bundle.to_messages(),
        temperature=temperature,
        max_tokens=max_tokens,
        request_tag=f"{match.match_id}/{scope}/{data_type.value}/{icl.value}/{model_id}",
    )
    response = client.complete(req)
    journal_ref = ""
    if client.journal is not None:
        journal_ref = f"{os.path.basename(client.journal.path)}#{prompt_fingerprint(req)}"
    return make_record(
        match.match_id, scope, data_type, icl, model_id, bundle.render(), response.content, journal_ref
    )


@dataclass
class MatrixResult:
    records: list[ReportRecord] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)


def run_matrix(
    matches: list[Match],
    cfg: GenerationConfig,
    client: ChatClient,
    *,
    exemplars: list[Exemplar] = (),
    jobs: int = 1,
    run_dir: str | Path | None = None,
) -> MatrixResult:
    """One record per (unit x cell); a failing cell is logged and skipped,
    never aborting the rest. Output order is deterministic: match order,
    then data type, ICL method, model order."""
    units: list[tuple[Match, int | None]] = []
    for match in matches:
        if cfg.per_set:
            units += [(match, s.set_number) for s in match.sets]
        else:
            units.append((match, None))
    tasks = [(match, set_number, cell) for match, set_number in units for cell in cfg.cells()]

    def run_one(task):
        match, set_number, cell = task
        try:
            record = generate_report(
                match, cell, client, exemplars,
                set_number=set_number,
                temperature=cfg.temperature,
                max_tokens=cfg.max_tokens,
            )
            return ("ok", record)
        except (LlmError, ValidationFailed, ValueError) as err:
            data_type, icl, model_id = cell
            return (
                "err",
                {
                    "match_id": match.match_id,
                    "set_scope": "all" if set_number is None else str(set_number),
                    "data_type": data_type.value,
                    "icl": icl.value,
                    "model_id": model_id,
                    "error": type(err).__name__,
                    "message": str(err),
                },
            )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_one, tasks))
    else:
        outcomes = [run_one(t) for t in tasks]

    result = MatrixResult()
    for status, item in outcomes:
        if status == "ok":
            result.records.append(item)
        else:
            result.failures.append(item)

    if run_dir is not None:
        reports_dir = Path(run_dir) / "reports"
        reports_dir.mkdir(parents=True, exist_ok=True)
        for record in result.records:
            write_record(record, reports_dir)
        if result.failures:
            atomic_write_json(Path(run_dir) / "failures.json", result.failures)
    return result


def record_to_dict(record: ReportRecord) -> dict:
    d = record.__dict__.copy()
    d["data_type"] = record.data_type.value if record.data_type else None
    d["icl"] = record.icl.value if record.icl else None
    return d


def record_from_dict(d: dict) -> ReportRecord:
    d = dict(d)
    d["data_type"] = DataType(d["data_type"]) if d["data_type"] else None
    d["icl"] = IclMethod(d["icl"]) if d["icl"] else None
    return ReportRecord(**d)


def atomic_write_json(path: Path, payload) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def write_record(record: ReportRecord, directory: Path) -> Path:
    path = directory / f"{record.record_id}.json"
    atomic_write_json(path, record_to_dict(record))
    return path


def load_records(directory: str | Path) -> list[ReportRecord]:
    directory = Path(directory)
    records = []
    for path in sorted(directory.glob("*.json")):
        records.append(record_from_dict(json.loads(path.read_text(encoding="utf-8"))))
    return records
