"""Input serialization and in-context-learning prompt assembly.

Prompt wording lives in template files under badge/templates so wording
experiments never require code changes. Templates use the placeholders
{persona}, {context}, {examples}, {payload} and {steps}; each is
substituted in a single pass, so payload text can never be re-expanded.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .match_data import CSV_HEADER, GameSet, Match
from .stats import answer_questions, render_qa


class DataType(Enum):
    CSV = "csv"
    QA = "qa"


class IclMethod(Enum):
    ZERO_SHOT = "zero_shot"
    ONE_SHOT = "one_shot"
    FEW_SHOT = "few_shot"
    COT = "cot"


#: Minimum exemplar counts per method; CoT and zero-shot ignore exemplars.
EXEMPLAR_MINIMUMS = {
    IclMethod.ZERO_SHOT: 0,
    IclMethod.ONE_SHOT: 1,
    IclMethod.FEW_SHOT: 2,
    IclMethod.COT: 0,
}


class MissingExemplars(ValueError):
    def __init__(self, icl: IclMethod, provided: int, required: int):
        super().__init__(f"{icl.value} needs at least {required} exemplar(s), got {provided}")
        self.icl = icl
        self.provided = provided
        self.required = required


class EmptyExemplarFile(ValueError):
    pass


@dataclass(frozen=True)
class Exemplar:
    title: str
    report_text: str

    def __post_init__(self):
        if not self.report_text.strip():
            raise ValueError("exemplar report text must be non-empty")


@dataclass(frozen=True)
class PromptBundle:
    system_preamble: str
    body: str
    data_payload: str
    icl: IclMethod
    data_type: DataType

    def render(self) -> str:
        return f"{self.system_preamble}\n{self.body}"

    def to_messages(self) -> tuple[tuple[str, str], ...]:
        return (("system", self.system_preamble), ("user", self.body))


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return (resources.files("badge") / "templates" / f"{name}.txt").read_text(encoding="utf-8")


_PLACEHOLDER = re.compile(r"\{(persona|context|examples|payload|steps|tournament|date|player_a|player_b)\}")


def _fill(template: str, values: dict[str, str]) -> str:
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template)


def serialize_csv(game_set: GameSet) -> str:
    """Canonical CSV text: exact header, then one comma+space joined line
    per rally. The writer permits an empty set (header only); the parser
    rejects it, an asymmetry kept so partial sets can still be dumped."""
    lines = [CSV_HEADER]
    for r in game_set.rallies:
        lines.append(
            f"{r.win_point_player}, {r.win_reason}, {r.ball_type}, "
            f"{r.lose_reason}, {r.roundscore_a}, {r.roundscore_b}"
        )
    return "\n".join(lines)


def set_payload(data_type: DataType, game_set: GameSet) -> str:
    if data_type is DataType.CSV:
        return serialize_csv(game_set)
    return render_qa(answer_questions(game_set))


def match_payload(data_type: DataType, match: Match) -> str:
    sections = [f"Set {s.set_number}:\n{set_payload(data_type, s)}" for s in match.sets]
    return "\n\n".join(sections)


_SET_LABEL = re.compile(r"^Set (\d+):$", re.MULTILINE)


def split_set_sections(payload: str) -> list[tuple[int, str]]:
    """Undo match_payload's "Set k:" sectioning, for round-trip checks."""
    labels = list(_SET_LABEL.finditer(payload))
    out = []
    for i, m in enumerate(labels):
        start = m.end() + 1
        end = labels[i + 1].start() if i + 1 < len(labels) else len(payload)
        out.append((int(m.group(1)), payload[start:end].strip("\n")))
    return out


def _examples_block(icl: IclMethod, exemplars: list[Exemplar] | tuple[Exemplar, ...]) -> str:
    if icl is IclMethod.ONE_SHOT:
        return f"Example:\n{exemplars[0].report_text.strip()}"
    blocks = [f"Example {k}:\n{ex.report_text.strip()}" for k, ex in enumerate(exemplars, start=1)]
    return "\n".join(blocks)


def _context_line(game_set: GameSet | None, match_meta: Match | None) -> str:
    if match_meta is not None:
        return _fill(
            _template("context_match"),
            {
                "tournament": match_meta.tournament,
                "date": match_meta.date,
                "player_a": match_meta.player_a,
                "player_b": match_meta.player_b,
            },
        ).strip()
    assert game_set is not None
    return _fill(
        _template("context_set"),
        {"player_a": game_set.player_a, "player_b": game_set.player_b},
    ).strip()


def _assemble(
    data_type: DataType,
    icl: IclMethod,
    payload: str,
    context: str,
    exemplars,
) -> PromptBundle:
    exemplars = list(exemplars or ())
    required = EXEMPLAR_MINIMUMS[icl]
    if len(exemplars) < required:
        raise MissingExemplars(icl, len(exemplars), required)

    persona = _template("persona").strip()
    values = {
        "persona": persona,
        "context": context,
        "payload": payload,
        "examples": _examples_block(icl, exemplars) if required else "",
        "steps": _template(f"steps_{data_type.value}").strip() if icl is IclMethod.COT else "",
    }
    rendered = _fill(_template(f"{icl.value}_{data_type.value}"), values).rstrip("\n")
    first, _, body = rendered.partition("\n")
    assert first == persona, "template must start with the persona line"
    return PromptBundle(
        system_preamble=persona,
        body=body,
        data_payload=payload,
        icl=icl,
        data_type=data_type,
    )


def build_prompt(
    data_type: DataType,
    icl: IclMethod,
    game_set: GameSet,
    exemplars=(),
    match_meta: Match | None = None,
) -> PromptBundle:
    """Assemble the prompt for a single set."""
    payload = set_payload(data_type, game_set)
    return _assemble(data_type, icl, payload, _context_line(game_set, match_meta), exemplars)


def build_match_prompt(
    data_type: DataType,
    icl: IclMethod,
    match: Match,
    exemplars=(),
) -> PromptBundle:
    """Assemble one prompt covering every set of the match, with the
    per-set payloads under "Set k:" labels."""
    payload = match_payload(data_type, match)
    return _assemble(data_type, icl, payload, _context_line(None, match), exemplars)


def load_exemplars(directory: str | Path) -> list[Exemplar]:
    """One exemplar per .txt file, sorted by filename; title is the stem."""
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"exemplar directory {root} does not exist")
    out = []
    for path in sorted(root.glob("*.txt")):
        text = path.read_text(encoding="utf-8")
        if not text.strip():
            raise EmptyExemplarFile(str(path.name))
        out.append(Exemplar(title=path.stem, report_text=text.strip()))
    return out
