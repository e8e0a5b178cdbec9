import random

import pytest

from badge.match_data import CSV_HEADER, BALL_TYPES, GameSet, LOSE_REASONS, Match, Rally, WIN_REASONS


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion."""
    rows = []
    for status, mark in (("passed", "PASS"), ("failed", "FAIL"), ("skipped", "SKIP")):
        for report in terminalreporter.stats.get(status, []):
            if "test_acceptance" in report.nodeid and report.when in ("call", None) or (
                "test_acceptance" in report.nodeid and status == "skipped"
            ):
                rows.append((report.nodeid.split("::")[-1], mark))
    if rows:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, mark in sorted(set(rows)):
            terminalreporter.write_line(f"{mark}  {name}")

SAMPLE_ROWS = [
    "Ratchanok Intanon, opponent goes out of bounds, lob, goes out of bounds, 0, 1",
    "An Se Young, opponent hits the net, push, hits the net, 1, 1",
    "Ratchanok Intanon, wins by landing, smash, opponent wins by landing, 1, 2",
]
SAMPLE_CSV = CSV_HEADER + "\n" + "\n".join(SAMPLE_ROWS)

# win reason -> the matching lose reason on the other side of the net
REASON_PAIRS = dict(zip(WIN_REASONS, ("opponent wins by landing", "goes out of bounds", "hits the net")))

PLAYER_POOL = [
    "An Se Young",
    "Ratchanok Intanon",
    "Kento Momota",
    "Chou Tien Chen",
    "Tai Tzu Ying",
    "Viktor Axelsen",
    "Carolina Marin",
    "Chen Long",
]


def make_rally(scorer: str, score_a: int, score_b: int, rng: random.Random, ball: str | None = None) -> Rally:
    win_reason = rng.choice(WIN_REASONS)
    return Rally(
        win_point_player=scorer,
        win_reason=win_reason,
        ball_type=ball or rng.choice(BALL_TYPES),
        lose_reason=REASON_PAIRS[win_reason],
        roundscore_a=score_a,
        roundscore_b=score_b,
    )


def make_valid_set(
    rng: random.Random,
    n_rallies: int | None = None,
    players: tuple[str, str] | None = None,
    set_number: int = 1,
) -> GameSet:
    """Random legal score progression of 5..60 rallies."""
    if players is None:
        players = tuple(rng.sample(PLAYER_POOL, 2))
    if n_rallies is None:
        n_rallies = rng.randint(5, 60)
    sides = [rng.randint(0, 1) for _ in range(n_rallies)]
    if len(set(sides)) == 1:  # both players score, so the mapping stays inferable
        sides[-1] = 1 - sides[0]
    a = b = 0
    rallies = []
    for side in sides:
        if side == 0:
            a += 1
        else:
            b += 1
        rallies.append(make_rally(players[side], a, b, rng))
    return GameSet(set_number=set_number, rallies=tuple(rallies), player_a=players[0], player_b=players[1])


def make_finished_set(
    rng: random.Random,
    players: tuple[str, str],
    winner_index: int = 0,
    set_number: int = 1,
) -> GameSet:
    """A set that actually terminates under badminton rules (21+, margin 2,
    capped at 30)."""
    a = b = 0
    rallies = []
    while True:
        lead, trail = (a, b) if winner_index == 0 else (b, a)
        done = (lead >= 21 and lead - trail >= 2) or lead == 30
        if done:
            break
        # the eventual winner scores a bit more often
        if rng.random() < 0.58:
            a, b, scorer = (a + 1, b, players[0]) if winner_index == 0 else (a, b + 1, players[1])
        else:
            a, b, scorer = (a + 1, b, players[0]) if winner_index == 1 else (a, b + 1, players[1])
        rallies.append(make_rally(scorer, a, b, rng))
    return GameSet(set_number=set_number, rallies=tuple(rallies), player_a=players[0], player_b=players[1])


def make_match(rng: random.Random, match_id: str) -> Match:
    players = tuple(rng.sample(PLAYER_POOL, 2))
    n_sets = rng.choice([2, 3])
    sets = tuple(
        make_finished_set(rng, players, winner_index=rng.randint(0, 1), set_number=k + 1)
        for k in range(n_sets)
    )
    year = rng.randint(2018, 2021)
    return Match(
        match_id=match_id,
        tournament=f"Open {year}",
        date=f"{year}-0{rng.randint(1, 9)}-1{rng.randint(0, 9)}",
        player_a=players[0],
        player_b=players[1],
        sets=sets,
    )


def fixture_matches(n: int = 10, seed: int = 20240501) -> list[Match]:
    rng = random.Random(seed)
    return [make_match(rng, f"match-{i:02d}") for i in range(n)]


def an_se_young_set() -> GameSet:
    """Deterministic 42-rally set An Se Young beats Ratchanok Intanon 22-20."""
    a = b = 0
    rallies = []
    for _ in range(20):
        a += 1
        rallies.append(Rally("An Se Young", "wins by landing", "smash", "opponent wins by landing", a, b))
        b += 1
        rallies.append(Rally("Ratchanok Intanon", "opponent goes out of bounds", "lob", "goes out of bounds", a, b))
    a += 1
    rallies.append(Rally("An Se Young", "opponent hits the net", "net shot", "hits the net", a, b))
    a += 1
    rallies.append(Rally("An Se Young", "wins by landing", "net shot", "opponent wins by landing", a, b))
    return GameSet(set_number=1, rallies=tuple(rallies), player_a="An Se Young", player_b="Ratchanok Intanon")


@pytest.fixture
def sample_set():
    from badge.match_data import parse_set_csv

    return parse_set_csv(SAMPLE_CSV)


@pytest.fixture
def full_set():
    return an_se_young_set()


@pytest.fixture
def exemplar_dir(tmp_path):
    d = tmp_path / "exemplars"
    d.mkdir()
    (d / "final_thriller.txt").write_text(
        "The final went the distance. After dropping the opener 19-21, the top seed "
        "steadied, taking the second set 21-15 on the back of relentless smash pressure "
        "and closing the decider 21-18 with a delicate net shot.\n",
        encoding="utf-8",
    )
    (d / "straight_sets.txt").write_text(
        "A one-sided semifinal ended in straight sets, 21-12 and 21-16. The winner "
        "forced error after error with deep lobs, never trailing after the opening "
        "exchange, and sealed the match when a push sailed long.\n",
        encoding="utf-8",
    )
    return d


def eval_mock_script(score: str = "Score: 8") -> dict:
    return {
        "contains:Please write the evaluation steps": (
            "1. Read the whole report once to get the overall picture.\n"
            "2. Check the relevant quality dimension sentence by sentence.\n"
            "3. Decide on a single score from 1 to 10."
        ),
        "contains:Evaluation Form:": score,
    }
