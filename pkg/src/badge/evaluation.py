"""Stage 2: machine judging of generated reports.

Follows the LLM-as-judge recipe: a fixed task introduction, one criterion
definition at a time, evaluation steps that the judge model writes for
itself, then a scoring form answered on a 1-10 scale. Each criterion is
scored in isolation; prompts for criterion X never mention criterion Y.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from statistics import fmean

from .llm import ChatClient, ChatRequest, EVALUATION_TEMPERATURE, prompt_fingerprint

TASK_INTRODUCTION = (
    "You are a reviewer of the badminton reports.\n"
    "I will give a badminton report, please follow the Evaluation Steps to score "
    "this badminton report based on the Evaluation Criteria."
)


@dataclass(frozen=True)
class Criterion:
    name: str
    definition: str
    scale_min: int = 1
    scale_max: int = 10

    def heading(self) -> str:
        return f"{self.name.capitalize()} ({self.scale_min}-{self.scale_max}): {self.definition}"


COHERENCE = Criterion(
    "coherence",
    "means being logical and clear in thought or communication, where ideas fit "
    "together smoothly to form a unified whole.",
)
CONSISTENCY = Criterion(
    "consistency",
    "refers to the quality of being steadfast, reliable, and uniform in behavior, "
    "performance, or appearance over time.",
)
EXCITEMENT = Criterion(
    "excitement",
    "is a feeling of enthusiasm or thrill, often before or during an event or activity.",
)
FLUENCY = Criterion(
    "fluency",
    "the quality of the summary in terms of grammar, spelling, punctuation, word "
    "choice, and sentence structure.",
)

CRITERIA = (COHERENCE, CONSISTENCY, EXCITEMENT, FLUENCY)
CRITERION_BY_NAME = {c.name: c for c in CRITERIA}


class UnparseableSteps(ValueError):
    pass


class ScoreParseError(ValueError):
    pass


class ScoreOutOfRange(ValueError):
    def __init__(self, value: int):
        super().__init__(f"score {value} outside [1, 10]")
        self.value = value


class EmptyGroup(ValueError):
    pass


@dataclass(frozen=True)
class EvaluationSteps:
    criterion: str
    steps: tuple[str, ...]
    provenance: str  # "manual" or "<model_id>:<prompt hash>"

    def __post_init__(self):
        if len(self.steps) < 2:
            raise ValueError("evaluation steps need at least 2 entries")

    def numbered(self) -> str:
        return "\n".join(f"{i}. {s}" for i, s in enumerate(self.steps, start=1))


@dataclass(frozen=True)
class EvaluationRecord:
    record_id: str
    rater: str  # "machine:<model_id>" or "human:<anonymous id>"
    scores: dict[str, float]  # criterion name -> score (int when n_samples == 1)
    n_samples: int = 1
    raw_responses: tuple[str, ...] = ()

    def __post_init__(self):
        missing = [c.name for c in CRITERIA if c.name not in self.scores]
        if missing:
            raise ValueError(f"scores missing criteria {missing}")
        for name, value in self.scores.items():
            crit = CRITERION_BY_NAME.get(name)
            if crit and not crit.scale_min <= value <= crit.scale_max:
                raise ScoreOutOfRange(value)


class StepsCache:
    """(criterion, model) -> steps, insert-if-absent under a lock."""

    def __init__(self):
        self._entries: dict[tuple[str, str], EvaluationSteps] = {}
        self._lock = threading.Lock()

    def get_or_create(self, key: tuple[str, str], factory) -> EvaluationSteps:
        with self._lock:
            if key in self._entries:
                return self._entries[key]
        made = factory()
        with self._lock:
            return self._entries.setdefault(key, made)


_NUMBERED_LINE = re.compile(r"^\s*(\d+)[.)]\s+(.+?)\s*$")


def parse_steps(text: str) -> tuple[str, ...]:
    steps = [m.group(2) for line in text.splitlines() if (m := _NUMBERED_LINE.match(line))]
    if len(steps) < 2:
        raise UnparseableSteps(f"no numbered list found in: {text[:120]!r}")
    return tuple(steps)


def steps_request(criterion: Criterion, model_id: str) -> ChatRequest:
    body = (
        f"{TASK_INTRODUCTION}\n\n"
        f"Evaluation Criteria:\n{criterion.heading()}\n\n"
        f"Please write the evaluation steps for scoring a badminton report on "
        f"{criterion.name}, as a short numbered list."
    )
    return ChatRequest(
        model_id=model_id,
        messages=(("user", body),),
        temperature=EVALUATION_TEMPERATURE,
        max_tokens=512,
        request_tag=f"steps/{criterion.name}",
    )


def auto_steps(criterion: Criterion, client: ChatClient, model_id: str, cache: StepsCache | None = None) -> EvaluationSteps:
    """Ask the judge model to write its own evaluation steps; cached per
    (criterion, model) so a run asks once."""

    def make() -> EvaluationSteps:
        req = steps_request(criterion, model_id)
        response = client.complete(req)
        return EvaluationSteps(
            criterion=criterion.name,
            steps=parse_steps(response.content),
            provenance=f"{model_id}:{prompt_fingerprint(req)}",
        )

    if cache is None:
        return make()
    return cache.get_or_create((criterion.name, model_id), make)


def scoring_prompt(report_text: str, criterion: Criterion, steps: EvaluationSteps) -> str:
    return (
        f"{TASK_INTRODUCTION}\n\n"
        f"Evaluation Criteria:\n{criterion.heading()}\n\n"
        f"Evaluation Steps:\n{steps.numbered()}\n\n"
        f"Badminton Report:\n{report_text}\n\n"
        f"Evaluation Form:\n"
        f"Based on the Evaluation Criteria and Evaluation Steps, score this badminton "
        f"report on {criterion.name} from {criterion.scale_min} to {criterion.scale_max}.\n"
        f'Answer with a single line in the form "Score: N".'
    )


_MARKER = re.compile(r"score\s*:\s*(\d+)(?!\.\d)", re.IGNORECASE)
_STANDALONE_INT = re.compile(r"(?<![\w.])(\d+)(?![\w.])")


def parse_score(text: str) -> int:
    """Extract the judged score.

    Prefers the integer after a "Score:" marker, otherwise the first
    standalone integer token; either way it must land in [1, 10].
    """
    m = _MARKER.search(text)
    if m is None:
        m = _STANDALONE_INT.search(text)
    if m is None:
        raise ScoreParseError(f"no score found in {text[:80]!r}")
    value = int(m.group(1))
    if not 1 <= value <= 10:
        raise ScoreOutOfRange(value)
    return value


def evaluate_report(
    report_text: str,
    criterion: Criterion,
    steps: EvaluationSteps,
    client: ChatClient,
    model_id: str,
    n_samples: int = 1,
) -> tuple[str, float, list[str]]:
    """Score one report on one criterion.

    Returns (criterion name, score, raw responses); the score is the
    integer for n_samples == 1, else the mean rounded to one decimal.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    prompt = scoring_prompt(report_text, criterion, steps)
    raws, values = [], []
    for i in range(n_samples):
        req = ChatRequest(
            model_id=model_id,
            messages=(("user", prompt),),
            temperature=EVALUATION_TEMPERATURE,
            max_tokens=64,
            request_tag=f"score/{criterion.name}/{i}",
        )
        response = client.complete(req)
        raws.append(response.content)
        values.append(parse_score(response.content))
    score = values[0] if n_samples == 1 else round(fmean(values), 1)
    return (criterion.name, score, raws)


def evaluate_record(
    record_id: str,
    report_text: str,
    client: ChatClient,
    model_id: str,
    *,
    n_samples: int = 1,
    cache: StepsCache | None = None,
) -> EvaluationRecord:
    """Score a report on all four criteria and bundle the result."""
    scores: dict[str, float] = {}
    raws: list[str] = []
    for criterion in CRITERIA:
        steps = auto_steps(criterion, client, model_id, cache)
        name, score, raw = evaluate_report(report_text, criterion, steps, client, model_id, n_samples)
        scores[name] = score
        raws += raw
    return EvaluationRecord(
        record_id=record_id,
        rater=f"machine:{model_id}",
        scores=scores,
        n_samples=n_samples,
        raw_responses=tuple(raws),
    )


@dataclass(frozen=True)
class AggregateRow:
    group_key: str
    means: dict[str, float]  # criterion name -> mean
    overall: float


def aggregate(records: list[EvaluationRecord], grouping) -> list[AggregateRow]:
    """Arithmetic means per group and criterion; overall is the mean of
    the four criterion means (the tables' Avg. column).

    `grouping` maps a record to a group key, or to (sort_index, key) for
    an explicit row order.
    """
    if not records:
        raise EmptyGroup("no evaluation records to aggregate")
    groups: dict[tuple, list[EvaluationRecord]] = {}
    for record in records:
        key = grouping(record)
        if not isinstance(key, tuple):
            key = (key, key)
        groups.setdefault(key, []).append(record)

    rows = []
    for (_, label), members in sorted(groups.items(), key=lambda kv: kv[0][0]):
        means = {c.name: fmean(r.scores[c.name] for r in members) for c in CRITERIA}
        rows.append(AggregateRow(group_key=str(label), means=means, overall=fmean(means.values())))
    return rows


def render_table(rows: list[AggregateRow], fmt: str = "text", group_header: str = "Group") -> str:
    """Tables-1-to-3 shaped output: criteria columns plus Avg."""
    headers = [group_header] + [c.name.capitalize() for c in CRITERIA] + ["Avg."]
    cells = [
        [row.group_key] + [f"{row.means[c.name]:.1f}" for c in CRITERIA] + [f"{row.overall:.3f}"]
        for row in rows
    ]
    if fmt == "csv":
        lines = [",".join(headers)]
        for row in rows:
            lines.append(
                ",".join(
                    [row.group_key]
                    + [repr(row.means[c.name]) for c in CRITERIA]
                    + [repr(row.overall)]
                )
            )
        return "\n".join(lines)
    widths = [max(len(h), *(len(r[i]) for r in cells)) for i, h in enumerate(headers)]
    out = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for r in cells:
        out.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
    return "\n".join(out)
