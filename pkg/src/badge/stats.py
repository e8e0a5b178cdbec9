"""Rule-based set analysis: final score, tallies, lead changes, and the
eight question-answer pairs that summarize one set.

Everything here is a pure function of a GameSet; callers are expected to
run validate_set first (these functions assume a legal progression).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NamedTuple

from .match_data import GameSet


class TiedFinalScore(ValueError):
    pass


@dataclass(frozen=True)
class ScoreSummary:
    winner: str
    winner_points: int
    loser: str
    loser_points: int


@dataclass(frozen=True)
class LeadChangeEvent:
    rally_index: int  # 0-based
    scorer: str
    score_after: tuple[int, int]  # (scorer's points, opponent's points)
    ball_type: str


class ClosingRally(NamedTuple):
    scorer: str
    ball_type: str
    win_reason: str
    score: tuple[int, int]  # (scorer's points, opponent's points)


@dataclass(frozen=True)
class TallyTable:
    """Per-player category counts, insertion-ordered by first occurrence.

    win_reasons and ball_types count the rallies a player won;
    lose_reasons count the rallies they lost (the loser's own view).
    """

    win_reasons: dict[str, dict[str, int]]
    lose_reasons: dict[str, dict[str, int]]
    ball_types: dict[str, dict[str, int]]

    def most_frequent(self, player: str, kind: str) -> tuple[str, int] | None:
        """Highest count; ties broken by earliest first occurrence."""
        counts = getattr(self, kind)[player]
        best: tuple[str, int] | None = None
        for category, n in counts.items():
            if best is None or n > best[1]:
                best = (category, n)
        return best


@dataclass(frozen=True)
class QASet:
    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if len(self.pairs) != 8:
            raise ValueError(f"a QASet holds exactly 8 pairs, got {len(self.pairs)}")


QUESTIONS = (
    "Which player won the game? How many points did the winner get?",
    "Which player lost the game? How many points did the loser get?",
    "How did the winner win most of the points? How many points did the winner win this way?",
    "How did the loser lose most of the points? How many points did the loser lose this way?",
    "Which ball type won the winner the most points? How many points did it win?",
    "Which ball type won the loser the most points? How many points did it win?",
    "When did the lead change for the last time? Which player overtook the lead, and with which ball type?",
    "How did the game end? Which player scored the last point, and with which ball type?",
)


def final_score(game_set: GameSet) -> ScoreSummary:
    last = game_set.rallies[-1]
    a, b = last.scores()
    if a == b:
        raise TiedFinalScore(f"final score {a}-{b} has no winner")
    if a > b:
        return ScoreSummary(game_set.player_a, a, game_set.player_b, b)
    return ScoreSummary(game_set.player_b, b, game_set.player_a, a)


def tally(game_set: GameSet) -> TallyTable:
    win_reasons: dict[str, dict[str, int]] = {p: {} for p in game_set.players()}
    lose_reasons: dict[str, dict[str, int]] = {p: {} for p in game_set.players()}
    ball_types: dict[str, dict[str, int]] = {p: {} for p in game_set.players()}
    for rally in game_set.rallies:
        winner = rally.win_point_player
        loser = game_set.opponent_of(winner)
        win_reasons[winner][rally.win_reason] = win_reasons[winner].get(rally.win_reason, 0) + 1
        ball_types[winner][rally.ball_type] = ball_types[winner].get(rally.ball_type, 0) + 1
        lose_reasons[loser][rally.lose_reason] = lose_reasons[loser].get(rally.lose_reason, 0) + 1
    return TallyTable(win_reasons=win_reasons, lose_reasons=lose_reasons, ball_types=ball_types)


def lead_changes(game_set: GameSet) -> list[LeadChangeEvent]:
    """Rallies whose scorer was tied-or-behind before and leads after.

    The opening rally qualifies by this definition (0-0 is a tie) and is
    included.
    """
    events = []
    prev = (0, 0)
    for i, rally in enumerate(game_set.rallies):
        cur = rally.scores()
        if rally.win_point_player == game_set.player_a:
            before, after = prev, cur
        else:
            before, after = (prev[1], prev[0]), (cur[1], cur[0])
        if before[0] <= before[1] and after[0] > after[1]:
            events.append(
                LeadChangeEvent(
                    rally_index=i,
                    scorer=rally.win_point_player,
                    score_after=after,
                    ball_type=rally.ball_type,
                )
            )
        prev = cur
    return events


def closing_rally(game_set: GameSet) -> ClosingRally:
    last = game_set.rallies[-1]
    if last.win_point_player == game_set.player_a:
        pair = last.scores()
    else:
        pair = (last.roundscore_b, last.roundscore_a)
    return ClosingRally(last.win_point_player, last.ball_type, last.win_reason, pair)


def answer_questions(game_set: GameSet) -> QASet:
    """Fill the eight fixed templates from the computed statistics."""
    summary = final_score(game_set)
    table = tally(game_set)
    ending = closing_rally(game_set)
    last_change = lead_changes(game_set)[-1]

    win_how = table.most_frequent(summary.winner, "win_reasons")
    lose_how = table.most_frequent(summary.loser, "lose_reasons")
    win_ball = table.most_frequent(summary.winner, "ball_types")
    lose_ball = table.most_frequent(summary.loser, "ball_types")

    a1 = f"{summary.winner} won the game with {summary.winner_points} points."
    a2 = f"{summary.loser} lost the game with {summary.loser_points} points."
    a3 = f"{summary.winner} won {win_how[1]} points with {win_how[0]}."
    a4 = f"{summary.loser} lost {lose_how[1]} points with {lose_how[0]}."
    a5 = f"{summary.winner} won {win_ball[1]} points with the {win_ball[0]}."
    if lose_ball is None:
        a6 = f"{summary.loser} did not win any points."
    else:
        a6 = f"{summary.loser} won {lose_ball[1]} points with the {lose_ball[0]}."
    if last_change.rally_index == 0:
        a7 = "The leader never changed."
    else:
        s, o = last_change.score_after
        a7 = f"{last_change.scorer} overtook the lead at {s}-{o} with a {last_change.ball_type}."
    s, o = ending.score
    a8 = f"{ending.scorer} ended the game with a {ending.ball_type}, making the final score {s}-{o} ({ending.win_reason})."

    answers = (a1, a2, a3, a4, a5, a6, a7, a8)
    return QASet(pairs=tuple(zip(QUESTIONS, answers)))


def render_qa(qa: QASet) -> str:
    """Emit the Qn:/An: line pairs, one question and one answer per line."""
    lines = []
    for i, (question, answer) in enumerate(qa.pairs, start=1):
        lines.append(f"Q{i}: {question}")
        lines.append(f"A{i}: {answer}")
    return "\n".join(lines)


_QA_LINE = re.compile(r"^(Q|A)(\d+): (.*)$")


def parse_qa(text: str) -> QASet:
    """Inverse of render_qa, used for round-trip checks."""
    questions: dict[int, str] = {}
    answers: dict[int, str] = {}
    for line in text.splitlines():
        m = _QA_LINE.match(line)
        if not m:
            continue
        kind, num, body = m.group(1), int(m.group(2)), m.group(3)
        (questions if kind == "Q" else answers)[num] = body
    if sorted(questions) != list(range(1, 9)) or sorted(answers) != list(range(1, 9)):
        raise ValueError("text does not contain exactly Q1..Q8 and A1..A8")
    return QASet(pairs=tuple((questions[i], answers[i]) for i in range(1, 9)))
