"""Blind human-evaluation sessions and agreement analytics.

A session packs three reports (one each by a human, gpt35 and gpt4)
behind neutral "Report 1/2/3" labels. Raters score every report on the
four criteria and guess each author. Analytics de-blind via the stored
session and compare the human means against the machine judge's.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from statistics import fmean

from .evaluation import CRITERIA, EvaluationRecord, ScoreOutOfRange

AUTHORS = ("human", "gpt35", "gpt4")
BLIND_LABELS = ("Report 1", "Report 2", "Report 3")


class DuplicateAuthor(ValueError):
    pass


class IncompleteResponse(ValueError):
    def __init__(self, problems: list[tuple[str, str, str]]):
        super().__init__("; ".join(f"{path}: {msg}" for path, _, msg in problems[:4]))
        self.problems = problems


class NoResponses(ValueError):
    pass


class NoOverlap(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class ConstantVector(ValueError):
    pass


class TooFewPoints(ValueError):
    pass


@dataclass(frozen=True)
class SessionItem:
    blind_label: str
    report_text: str
    author: str  # hidden from raters; never serialized to the wire


@dataclass(frozen=True)
class EvalSession:
    session_id: str
    match_id: str
    items: tuple[SessionItem, ...]
    shuffle_seed: int

    def author_of(self, blind_label: str) -> str:
        for item in self.items:
            if item.blind_label == blind_label:
                return item.author
        raise KeyError(blind_label)


@dataclass(frozen=True)
class ItemResponse:
    scores: dict[str, int]  # criterion name -> 1..10
    author_guess: str


@dataclass(frozen=True)
class HumanResponse:
    session_id: str
    rater_id: str
    items: dict[str, ItemResponse]  # blind label -> response
    submitted_at: str = ""


@dataclass(frozen=True)
class AgreementStats:
    pearson_r: float
    pairs: tuple[tuple[str, float, float], ...]  # (cell label, machine, human)
    guess_accuracy: dict[str, float]


def create_session(
    reports: list[tuple[str, str]],
    seed: int,
    *,
    match_id: str = "",
    session_id: str | None = None,
) -> EvalSession:
    """Blind three (author, report_text) pairs behind shuffled labels.

    The permutation is fully determined by the seed.
    """
    if len(reports) != 3:
        raise ValueError(f"a session holds exactly 3 reports, got {len(reports)}")
    authors = [author for author, _ in reports]
    if len(set(authors)) != 3:
        raise DuplicateAuthor(f"authors must be distinct, got {authors}")
    for author in authors:
        if author not in AUTHORS:
            raise ValueError(f"unknown author {author!r}, expected one of {AUTHORS}")

    order = list(range(3))
    random.Random(seed).shuffle(order)
    items = tuple(
        SessionItem(blind_label=BLIND_LABELS[pos], report_text=reports[order[pos]][1], author=reports[order[pos]][0])
        for pos in range(3)
    )
    if session_id is None:
        h = hashlib.sha256()
        h.update(f"{match_id}|{seed}".encode("utf-8"))
        for author, text in reports:
            h.update(f"|{author}|{text}".encode("utf-8"))
        session_id = h.hexdigest()[:12]
    return EvalSession(session_id=session_id, match_id=match_id, items=items, shuffle_seed=seed)


def validate_response(session: EvalSession, response: HumanResponse) -> list[tuple[str, str, str]]:
    """Field-level problems as (path, code, message); empty means valid."""
    problems = []
    if not response.rater_id.strip():
        problems.append(("rater_id", "incomplete_response", "rater_id must be non-empty"))
    if response.session_id != session.session_id:
        problems.append(("session_id", "invalid_field", "response addresses a different session"))
    expected = {item.blind_label for item in session.items}
    for label in sorted(expected - set(response.items)):
        problems.append((f"items.{label}", "incomplete_response", f"missing item {label!r}"))
    for label in sorted(set(response.items) - expected):
        problems.append((f"items.{label}", "invalid_field", f"unknown item {label!r}"))
    for label, item in sorted(response.items.items()):
        if label not in expected:
            continue
        for criterion in CRITERIA:
            path = f"items.{label}.scores.{criterion.name}"
            if criterion.name not in item.scores:
                problems.append((path, "incomplete_response", f"missing {criterion.name} score"))
                continue
            value = item.scores[criterion.name]
            if not isinstance(value, int) or isinstance(value, bool):
                problems.append((path, "invalid_field", "score must be an integer"))
            elif not criterion.scale_min <= value <= criterion.scale_max:
                problems.append((path, "score_out_of_range", f"score {value} outside [1, 10]"))
        for extra in sorted(set(item.scores) - {c.name for c in CRITERIA}):
            problems.append((f"items.{label}.scores.{extra}", "invalid_field", f"unknown criterion {extra!r}"))
        if item.author_guess not in AUTHORS:
            problems.append(
                (f"items.{label}.author_guess", "invalid_field", f"guess must be one of {AUTHORS}")
            )
    return problems


def _raise_for(problems: list[tuple[str, str, str]]) -> None:
    for _, code, msg in problems:
        if code == "score_out_of_range":
            raise ScoreOutOfRange(int(re.search(r"-?\d+", msg).group()))
    raise IncompleteResponse(problems)


def _safe_name(raw: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9._-]", "_", raw)
    return f"{cleaned}-{hashlib.sha1(raw.encode('utf-8')).hexdigest()[:6]}"


class ResponseStore:
    """Durable session/response storage: one JSON file per object,
    written atomically; duplicate (session, rater) submissions overwrite
    with the latest and leave a supersession log entry."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        (self.root / "responses").mkdir(parents=True, exist_ok=True)

    # -- sessions ---------------------------------------------------------

    def save_session(self, session: EvalSession) -> Path:
        payload = {
            "session_id": session.session_id,
            "match_id": session.match_id,
            "shuffle_seed": session.shuffle_seed,
            "items": [
                {"blind_label": i.blind_label, "report_text": i.report_text, "author": i.author}
                for i in session.items
            ],
        }
        path = self.root / "sessions" / f"{session.session_id}.json"
        _atomic_write(path, payload)
        return path

    def load_session(self, session_id: str) -> EvalSession:
        path = self.root / "sessions" / f"{session_id}.json"
        if not path.exists():
            raise KeyError(session_id)
        doc = json.loads(path.read_text(encoding="utf-8"))
        return EvalSession(
            session_id=doc["session_id"],
            match_id=doc["match_id"],
            shuffle_seed=doc["shuffle_seed"],
            items=tuple(SessionItem(i["blind_label"], i["report_text"], i["author"]) for i in doc["items"]),
        )

    def list_sessions(self) -> list[EvalSession]:
        out = []
        for path in sorted((self.root / "sessions").glob("*.json")):
            out.append(self.load_session(path.stem))
        return out

    # -- responses --------------------------------------------------------

    def record_response(self, session: EvalSession, response: HumanResponse) -> tuple[HumanResponse, bool]:
        """Validate and durably store; returns (stored, superseded)."""
        problems = validate_response(session, response)
        if problems:
            _raise_for(problems)
        if not response.submitted_at:
            response = HumanResponse(
                session_id=response.session_id,
                rater_id=response.rater_id,
                items=response.items,
                submitted_at=datetime.now(timezone.utc).isoformat(),
            )
        session_dir = self.root / "responses" / session.session_id
        session_dir.mkdir(parents=True, exist_ok=True)
        path = session_dir / f"{_safe_name(response.rater_id)}.json"
        superseded = path.exists()
        if superseded:
            previous = json.loads(path.read_text(encoding="utf-8"))
            with open(self.root / "supersessions.log", "a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {
                            "session_id": session.session_id,
                            "rater_id": response.rater_id,
                            "previous_submitted_at": previous.get("submitted_at", ""),
                            "superseded_at": response.submitted_at,
                        }
                    )
                    + "\n"
                )
        _atomic_write(path, response_to_dict(response))
        return response, superseded

    def load_responses(self, session_id: str) -> list[HumanResponse]:
        session_dir = self.root / "responses" / session_id
        if not session_dir.exists():
            return []
        out = []
        for path in sorted(session_dir.glob("*.json")):
            out.append(response_from_dict(json.loads(path.read_text(encoding="utf-8"))))
        return out

    def all_responses(self) -> list[HumanResponse]:
        out = []
        for session in self.list_sessions():
            out += self.load_responses(session.session_id)
        return out

    def export_csv(self) -> str:
        """Flat response matrix for external statistics tools."""
        header = ["session_id", "rater_id", "blind_label", "author"] + [c.name for c in CRITERIA] + ["author_guess"]
        lines = [",".join(header)]
        sessions = {s.session_id: s for s in self.list_sessions()}
        for response in self.all_responses():
            session = sessions[response.session_id]
            for label in BLIND_LABELS:
                item = response.items[label]
                row = [response.session_id, response.rater_id, label, session.author_of(label)]
                row += [str(item.scores[c.name]) for c in CRITERIA]
                row.append(item.author_guess)
                lines.append(",".join(row))
        return "\n".join(lines)


def _atomic_write(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def response_to_dict(response: HumanResponse) -> dict:
    return {
        "session_id": response.session_id,
        "rater_id": response.rater_id,
        "items": {
            label: {"scores": dict(item.scores), "author_guess": item.author_guess}
            for label, item in response.items.items()
        },
        "submitted_at": response.submitted_at,
    }


def response_from_dict(doc: dict) -> HumanResponse:
    return HumanResponse(
        session_id=doc["session_id"],
        rater_id=doc["rater_id"],
        items={
            label: ItemResponse(scores=dict(item["scores"]), author_guess=item["author_guess"])
            for label, item in doc["items"].items()
        },
        submitted_at=doc.get("submitted_at", ""),
    )


# -- analytics -------------------------------------------------------------


def human_means(responses: list[HumanResponse], sessions: dict[str, EvalSession]) -> dict[str, dict[str, float]]:
    """De-blinded per-author means: {author: {criterion: mean, "overall": m}}.

    "overall" is the mean of the four criterion means, matching the
    tables' Avg. column convention.
    """
    if not responses:
        raise NoResponses("no responses to average")
    buckets: dict[str, dict[str, list[int]]] = {}
    for response in responses:
        session = sessions[response.session_id]
        for label, item in response.items.items():
            author = session.author_of(label)
            per = buckets.setdefault(author, {c.name: [] for c in CRITERIA})
            for c in CRITERIA:
                per[c.name].append(item.scores[c.name])
    out = {}
    for author, per in buckets.items():
        means = {name: fmean(values) for name, values in per.items()}
        means["overall"] = fmean(means[c.name] for c in CRITERIA)
        out[author] = means
    return out


def machine_means(
    records: list[EvaluationRecord], authors_by_record: dict[str, str]
) -> dict[str, dict[str, float]]:
    """Machine-judge means grouped by the evaluated report's author."""
    buckets: dict[str, list[EvaluationRecord]] = {}
    for record in records:
        author = authors_by_record.get(record.record_id)
        if author is not None:
            buckets.setdefault(author, []).append(record)
    out = {}
    for author, members in buckets.items():
        means = {c.name: fmean(r.scores[c.name] for r in members) for c in CRITERIA}
        means["overall"] = fmean(means[c.name] for c in CRITERIA)
        out[author] = means
    return out


def pearson(x, y) -> float:
    """Pearson product-moment correlation of two equal-length vectors."""
    if len(x) != len(y):
        raise LengthMismatch(f"|x|={len(x)} but |y|={len(y)}")
    if len(x) < 2:
        raise TooFewPoints("need at least 2 points")
    mx, my = fmean(x), fmean(y)
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sxx = sum(d * d for d in dx)
    syy = sum(d * d for d in dy)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantVector("correlation undefined for a constant vector")
    sxy = sum(a * b for a, b in zip(dx, dy))
    return sxy / math.sqrt(sxx * syy)


def guess_accuracy(responses: list[HumanResponse], sessions: dict[str, EvalSession]) -> dict[str, float]:
    """Fraction of raters who guessed each true author correctly."""
    correct: dict[str, int] = {}
    total: dict[str, int] = {}
    for response in responses:
        session = sessions[response.session_id]
        for label, item in response.items.items():
            author = session.author_of(label)
            total[author] = total.get(author, 0) + 1
            if item.author_guess == author:
                correct[author] = correct.get(author, 0) + 1
    return {author: correct.get(author, 0) / n for author, n in total.items()}


def machine_human_agreement(
    machine_records: list[EvaluationRecord],
    responses: list[HumanResponse],
    sessions: dict[str, EvalSession],
    authors_by_record: dict[str, str],
    *,
    pairing: str = "cells",
) -> AgreementStats:
    """Correlate the machine judge with the human raters.

    pairing="cells" (default) pairs the (author x criterion) mean cells,
    the only pairing computable from the aggregate tables alone;
    pairing="responses" pairs every individual human item score against
    the machine mean for its cell.
    """
    m = machine_means(machine_records, authors_by_record)
    h = human_means(responses, sessions)
    overlap = [a for a in AUTHORS if a in m and a in h]
    if not overlap:
        raise NoOverlap("no author appears on both the machine and human side")

    pairs: list[tuple[str, float, float]] = []
    if pairing == "cells":
        for author in overlap:
            for criterion in CRITERIA:
                pairs.append((f"{author}/{criterion.name}", m[author][criterion.name], h[author][criterion.name]))
    elif pairing == "responses":
        for response in responses:
            session = sessions[response.session_id]
            for label, item in response.items.items():
                author = session.author_of(label)
                if author not in m:
                    continue
                for criterion in CRITERIA:
                    pairs.append(
                        (
                            f"{response.rater_id}/{author}/{criterion.name}",
                            m[author][criterion.name],
                            float(item.scores[criterion.name]),
                        )
                    )
    else:
        raise ValueError(f"unknown pairing {pairing!r}")

    r = pearson([p[1] for p in pairs], [p[2] for p in pairs])
    return AgreementStats(
        pearson_r=r,
        pairs=tuple(pairs),
        guess_accuracy=guess_accuracy(responses, sessions),
    )
