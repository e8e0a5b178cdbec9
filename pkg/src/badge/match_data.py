"""Rally-level badminton data model: CSV parsing, side mapping, validation.

A set is stored as the ordered rallies of one game set. Each rally carries
the scorer, the win/lose reasons, the decisive ball type, and the running
score pair. Scores are the state *after* the rally (forced by the data:
the first rally's scores always sum to 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date as _date
from pathlib import Path

CSV_COLUMNS = (
    "win_point_player",
    "win_reason",
    "ball_types",
    "lose_reason",
    "roundscore_A",
    "roundscore_B",
)
#: Canonical header line; the writer emits comma+space, the reader accepts
#: any whitespace around the commas.
CSV_HEADER = ", ".join(CSV_COLUMNS)

# Vocabulary seen in real data. Open-ended: unknown values are accepted
# and tallied verbatim.
WIN_REASONS = ("wins by landing", "opponent goes out of bounds", "opponent hits the net")
LOSE_REASONS = ("opponent wins by landing", "goes out of bounds", "hits the net")
BALL_TYPES = ("lob", "push", "smash", "return net", "rush", "net shot")


class MatchDataError(ValueError):
    """Base class for rally-data parsing and mapping failures."""


class EmptyInput(MatchDataError):
    pass


class MalformedHeader(MatchDataError):
    pass


class FieldCountMismatch(MatchDataError):
    def __init__(self, row: int, found: int):
        super().__init__(f"row {row + 1}: expected 6 fields, found {found}")
        self.row = row
        self.found = found


class NonIntegerScore(MatchDataError):
    def __init__(self, row: int, value: str):
        super().__init__(f"row {row + 1}: score field {value!r} is not an integer")
        self.row = row
        self.value = value


class InconsistentMapping(MatchDataError):
    pass


class AmbiguousMapping(MatchDataError):
    pass


@dataclass(frozen=True)
class Rally:
    win_point_player: str
    win_reason: str
    ball_type: str
    lose_reason: str
    roundscore_a: int
    roundscore_b: int

    def scores(self) -> tuple[int, int]:
        return (self.roundscore_a, self.roundscore_b)


@dataclass(frozen=True)
class GameSet:
    set_number: int
    rallies: tuple[Rally, ...]
    player_a: str
    player_b: str

    def players(self) -> tuple[str, str]:
        return (self.player_a, self.player_b)

    def opponent_of(self, player: str) -> str:
        if player == self.player_a:
            return self.player_b
        if player == self.player_b:
            return self.player_a
        raise KeyError(f"{player!r} is not registered in this set")


@dataclass(frozen=True)
class Match:
    match_id: str
    tournament: str
    date: str
    player_a: str
    player_b: str
    sets: tuple[GameSet, ...]


@dataclass
class ValidationReport:
    """Validation outcome. Rally indices are 0-based; messages show 1-based."""

    errors: list[tuple[int, str, str]] = field(default_factory=list)
    warnings: list[tuple[str, str]] = field(default_factory=list)

    def ok(self) -> bool:
        return not self.errors

    def error(self, rally_index: int, rule: str, message: str) -> None:
        self.errors.append((rally_index, rule, message))

    def warn(self, rule: str, message: str) -> None:
        self.warnings.append((rule, message))


def parse_set_csv(
    text: str,
    *,
    set_number: int = 1,
    player_a: str | None = None,
    player_b: str | None = None,
) -> GameSet:
    """Parse one set from CSV text.

    The first non-blank line must be the canonical six-column header.
    Side names are inferred from the score progression unless both are
    supplied by the caller (e.g. from match metadata).
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise EmptyInput("document contains no rows")
    header = tuple(part.strip() for part in lines[0].split(","))
    if header != CSV_COLUMNS:
        raise MalformedHeader(f"expected header {CSV_HEADER!r}, got {lines[0].strip()!r}")
    if len(lines) == 1:
        raise EmptyInput("header present but no data rows")

    rallies = []
    for row, line in enumerate(lines[1:]):
        parts = [part.strip() for part in line.split(",")]
        if len(parts) != 6:
            raise FieldCountMismatch(row, len(parts))
        try:
            score_a, score_b = int(parts[4]), int(parts[5])
        except ValueError:
            bad = parts[4] if not _is_int(parts[4]) else parts[5]
            raise NonIntegerScore(row, bad) from None
        rallies.append(
            Rally(
                win_point_player=parts[0],
                win_reason=parts[1],
                ball_type=parts[2],
                lose_reason=parts[3],
                roundscore_a=score_a,
                roundscore_b=score_b,
            )
        )

    rallies = tuple(rallies)
    if player_a is None or player_b is None:
        hint = player_a or player_b
        player_a, player_b = infer_side_mapping(rallies, opponent=hint)
    return GameSet(set_number=set_number, rallies=rallies, player_a=player_a, player_b=player_b)


def _is_int(raw: str) -> bool:
    try:
        int(raw)
        return True
    except ValueError:
        return False


def infer_side_mapping(rallies: tuple[Rally, ...] | list[Rally], opponent: str | None = None) -> tuple[str, str]:
    """Work out which player's points land in column A and which in column B.

    The paper's own example shows the convention cannot be assumed from
    name order, so the mapping is read off the data: whoever's winning
    rally increments column A is player A. When only one player ever
    scores, the column they increment fixes their side and `opponent`
    (if known) fills the other; otherwise the mapping is ambiguous.
    """
    if not rallies:
        raise AmbiguousMapping("no rallies to infer a mapping from")
    side_of: dict[str, str] = {}
    prev = (0, 0)
    for i, rally in enumerate(rallies):
        delta_a = rally.roundscore_a - prev[0]
        delta_b = rally.roundscore_b - prev[1]
        if sorted((delta_a, delta_b)) != [0, 1]:
            raise InconsistentMapping(
                f"rally {i + 1}: score step {prev} -> {rally.scores()} is not a single +1 increment"
            )
        side = "A" if delta_a == 1 else "B"
        known = side_of.setdefault(rally.win_point_player, side)
        if known != side:
            raise InconsistentMapping(
                f"rally {i + 1}: {rally.win_point_player!r} scores into column {side} "
                f"but was mapped to column {known}"
            )
        prev = rally.scores()

    by_side = {side: name for name, side in side_of.items()}
    if len(by_side) < len(side_of):
        raise InconsistentMapping("two different players score into the same column")
    if len(by_side) == 2:
        return (by_side["A"], by_side["B"])

    # Single scorer: one side is fixed, the other must come from metadata.
    if opponent is None:
        raise AmbiguousMapping("only one player ever scores and no opponent name was supplied")
    (name, side), = side_of.items()
    return (name, opponent) if side == "A" else (opponent, name)


def validate_set(game_set: GameSet) -> ValidationReport:
    """Check every set invariant; failures are data, not exceptions.

    Errors: empty set, negative scores, non-unit score steps, scorers
    that are not registered players, increments on the wrong side.
    Warnings: final scores that no real set would end on (leader short
    of 21, or a sub-2 margin before the 30-point cap).
    """
    report = ValidationReport()
    if not game_set.rallies:
        report.error(-1, "empty-set", "set has no rallies")
        return report

    players = {game_set.player_a, game_set.player_b}
    prev = (0, 0)
    for i, rally in enumerate(game_set.rallies):
        nth = f"rally {i + 1}"
        if rally.roundscore_a < 0 or rally.roundscore_b < 0:
            report.error(i, "negative-score", f"{nth}: negative score {rally.scores()}")
            prev = rally.scores()
            continue
        delta_a = rally.roundscore_a - prev[0]
        delta_b = rally.roundscore_b - prev[1]
        step_ok = sorted((delta_a, delta_b)) == [0, 1]
        if not step_ok:
            report.error(i, "score-step", f"{nth}: score step {prev} -> {rally.scores()} is not a single +1")
        scorer_known = rally.win_point_player in players
        if not scorer_known:
            report.error(
                i,
                "unknown-player",
                f"{nth}: scorer {rally.win_point_player!r} is not one of {sorted(players)}",
            )
        if step_ok and scorer_known:
            side_player = game_set.player_a if delta_a == 1 else game_set.player_b
            if side_player != rally.win_point_player:
                report.error(
                    i,
                    "wrong-side",
                    f"{nth}: column of {side_player!r} increments but {rally.win_point_player!r} scored",
                )
        prev = rally.scores()

    final_a, final_b = game_set.rallies[-1].scores()
    leader, margin = max(final_a, final_b), abs(final_a - final_b)
    if leader < 21:
        report.warn("short-set", f"final score {final_a}-{final_b}: leader has fewer than 21 points")
    elif margin < 2 and leader < 30:
        report.warn("slim-margin", f"final score {final_a}-{final_b}: margin under 2 before the 30 cap")
    return report


def validate_match(match: Match) -> tuple[ValidationReport, list[tuple[int, ValidationReport]]]:
    """Validate every set plus match-level checks.

    Returns the match-level report and one report per set (keyed by
    set_number). Set counts outside the usual 2..3 are warnings only.
    """
    match_report = ValidationReport()
    if not 2 <= len(match.sets) <= 3:
        match_report.warn("set-count", f"match has {len(match.sets)} sets, expected 2 or 3")
    try:
        _date.fromisoformat(match.date)
    except ValueError:
        match_report.warn("bad-date", f"date {match.date!r} is not ISO-8601")
    per_set = []
    for game_set in match.sets:
        set_players = set(game_set.players())
        if set_players != {match.player_a, match.player_b}:
            match_report.error(
                -1,
                "player-mismatch",
                f"set {game_set.set_number} players {sorted(set_players)} do not match the match metadata",
            )
        per_set.append((game_set.set_number, validate_set(game_set)))
    return match_report, per_set


def load_match(sidecar_path: str | Path) -> Match:
    """Load a match from its JSON sidecar plus the per-set CSV files.

    Sidecar schema: {match_id, tournament, date, player_A, player_B,
    set_files[]} with set file paths relative to the sidecar.
    """
    path = Path(sidecar_path)
    meta = json.loads(path.read_text(encoding="utf-8"))
    missing = [k for k in ("match_id", "tournament", "date", "player_A", "player_B", "set_files") if k not in meta]
    if missing:
        raise MatchDataError(f"{path}: sidecar is missing keys {missing}")
    sets = []
    for n, rel in enumerate(meta["set_files"], start=1):
        csv_path = path.parent / rel
        sets.append(
            parse_set_csv(
                csv_path.read_text(encoding="utf-8"),
                set_number=n,
                player_a=meta["player_A"],
                player_b=meta["player_B"],
            )
        )
    return Match(
        match_id=meta["match_id"],
        tournament=meta["tournament"],
        date=meta["date"],
        player_a=meta["player_A"],
        player_b=meta["player_B"],
        sets=tuple(sets),
    )
