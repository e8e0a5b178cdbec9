import random

import pytest

from badge.match_data import GameSet, Rally
from badge.stats import (
    QASet,
    TiedFinalScore,
    answer_questions,
    closing_rally,
    final_score,
    lead_changes,
    parse_qa,
    render_qa,
    tally,
)

from .conftest import make_rally, make_valid_set
from .oracles import (
    oracle_closing_rally,
    oracle_final_score,
    oracle_lead_changes,
    oracle_tally,
)


def simple_set(rows, players=("X", "Y")):
    return GameSet(set_number=1, rallies=tuple(rows), player_a=players[0], player_b=players[1])


class TestFinalScore:
    def test_full_fixture(self, full_set):
        summary = final_score(full_set)
        assert (summary.winner, summary.winner_points) == ("An Se Young", 22)
        assert (summary.loser, summary.loser_points) == ("Ratchanok Intanon", 20)

    def test_single_rally(self):
        gs = simple_set([Rally("X", "wins by landing", "smash", "opponent wins by landing", 1, 0)])
        summary = final_score(gs)
        assert (summary.winner, summary.winner_points, summary.loser, summary.loser_points) == ("X", 1, "Y", 0)

    def test_tie_guard(self):
        gs = simple_set([Rally("X", "wins by landing", "smash", "opponent wins by landing", 1, 1)])
        with pytest.raises(TiedFinalScore):
            final_score(gs)

    def test_random_sets_match_oracle(self):
        rng = random.Random(23)
        checked = 0
        while checked < 120:
            gs = make_valid_set(rng, n_rallies=35)
            last = gs.rallies[-1]
            if last.roundscore_a == last.roundscore_b:
                continue
            checked += 1
            summary = final_score(gs)
            assert (summary.winner, summary.winner_points, summary.loser, summary.loser_points) == oracle_final_score(gs)


class TestTally:
    def test_sample_rows(self, sample_set):
        table = tally(sample_set)
        assert table.win_reasons["Ratchanok Intanon"] == {
            "opponent goes out of bounds": 1,
            "wins by landing": 1,
        }
        assert table.ball_types["Ratchanok Intanon"] == {"lob": 1, "smash": 1}
        assert table.win_reasons["An Se Young"] == {"opponent hits the net": 1}
        assert table.ball_types["An Se Young"] == {"push": 1}
        assert table.lose_reasons["An Se Young"] == {"goes out of bounds": 1, "opponent wins by landing": 1}

    def test_zero_point_player_has_empty_maps(self):
        gs = simple_set([Rally("X", "wins by landing", "smash", "opponent wins by landing", 1, 0)])
        table = tally(gs)
        assert table.win_reasons["Y"] == {}
        assert table.ball_types["Y"] == {}

    def test_random_sets_match_counting_oracle(self):
        rng = random.Random(29)
        for _ in range(120):
            gs = make_valid_set(rng, n_rallies=50)
            table = tally(gs)
            expected = oracle_tally(gs)
            for player in gs.players():
                assert table.win_reasons[player] == expected[player]["win_reasons"]
                assert table.lose_reasons[player] == expected[player]["lose_reasons"]
                assert table.ball_types[player] == expected[player]["ball_types"]

    def test_conservation(self):
        rng = random.Random(31)
        for _ in range(60):
            gs = make_valid_set(rng)
            table = tally(gs)
            final = gs.rallies[-1]
            points = {gs.player_a: final.roundscore_a, gs.player_b: final.roundscore_b}
            for player in gs.players():
                opponent = gs.opponent_of(player)
                assert sum(table.win_reasons[player].values()) == points[player]
                assert sum(table.ball_types[player].values()) == points[player]
                assert sum(table.lose_reasons[opponent].values()) == points[player]

    def test_most_frequent_tie_breaks_by_first_occurrence(self):
        rows = [
            Rally("X", "wins by landing", "push", "opponent wins by landing", 1, 0),
            Rally("X", "opponent hits the net", "smash", "hits the net", 2, 0),
            Rally("X", "opponent hits the net", "push", "hits the net", 3, 0),
            Rally("X", "wins by landing", "smash", "opponent wins by landing", 4, 0),
        ]
        table = tally(simple_set(rows))
        assert table.most_frequent("X", "win_reasons") == ("wins by landing", 2)
        assert table.most_frequent("X", "ball_types") == ("push", 2)


class TestLeadChanges:
    def test_overtake_event(self):
        rng = random.Random(1)
        rows = []
        a = b = 0
        for _ in range(15):
            a += 1
            rows.append(make_rally("X", a, b, rng))
            b += 1
            rows.append(make_rally("Y", a, b, rng))
        a += 1
        rows.append(make_rally("X", a, b, rng, ball="return net"))
        gs = simple_set(rows)
        event = lead_changes(gs)[-1]
        assert event.score_after == (16, 15)
        assert event.scorer == "X"
        assert event.ball_type == "return net"

    def test_monotone_blowout_has_single_opening_event(self):
        rng = random.Random(2)
        rows = [make_rally("X", i + 1, 0, rng) for i in range(21)]
        events = lead_changes(simple_set(rows))
        assert len(events) == 1
        assert events[0].rally_index == 0
        assert events[0].score_after == (1, 0)

    def test_random_sets_match_oracle(self):
        rng = random.Random(37)
        for _ in range(120):
            gs = make_valid_set(rng)
            got = [(e.rally_index, e.scorer, e.score_after, e.ball_type) for e in lead_changes(gs)]
            assert got == oracle_lead_changes(gs)

    def test_lead_predicate_sound(self):
        rng = random.Random(41)
        for _ in range(40):
            gs = make_valid_set(rng)
            indices = {e.rally_index for e in lead_changes(gs)}
            prev = (0, 0)
            for i, rally in enumerate(gs.rallies):
                cur = rally.scores()
                scorer_is_a = rally.win_point_player == gs.player_a
                before = prev if scorer_is_a else (prev[1], prev[0])
                after = cur if scorer_is_a else (cur[1], cur[0])
                qualifies = before[0] <= before[1] and after[0] > after[1]
                assert (i in indices) == qualifies
                prev = cur


class TestClosingRally:
    def test_constructed_last_row(self, full_set):
        ending = closing_rally(full_set)
        assert ending == ("An Se Young", "net shot", "wins by landing", (22, 20))

    def test_single_rally(self):
        gs = simple_set([Rally("Y", "opponent hits the net", "push", "hits the net", 0, 1)])
        ending = closing_rally(gs)
        assert ending.scorer == "Y"
        assert ending.score == (1, 0)

    def test_verbatim_fields(self):
        rows = [
            Rally("X", "wins by landing", "smash", "opponent wins by landing", 1, 0),
            Rally("X", "opponent goes out of bounds", "push", "goes out of bounds", 2, 0),
        ]
        ending = closing_rally(simple_set(rows))
        assert ending.ball_type == "push"
        assert ending.win_reason == "opponent goes out of bounds"

    def test_random_sets_match_oracle(self):
        rng = random.Random(43)
        for _ in range(80):
            gs = make_valid_set(rng)
            assert tuple(closing_rally(gs)) == oracle_closing_rally(gs)


class TestAnswerQuestions:
    def test_golden_q1_q2(self, full_set):
        qa = answer_questions(full_set)
        assert qa.pairs[0] == (
            "Which player won the game? How many points did the winner get?",
            "An Se Young won the game with 22 points.",
        )
        assert qa.pairs[1][1] == "Ratchanok Intanon lost the game with 20 points."

    def test_every_slot_filled(self):
        rng = random.Random(47)
        for _ in range(40):
            gs = make_valid_set(rng)
            last = gs.rallies[-1]
            if last.roundscore_a == last.roundscore_b:
                continue
            qa = answer_questions(gs)
            assert len(qa.pairs) == 8
            for question, answer in qa.pairs:
                assert question and answer
                assert "{" not in answer and "}" not in answer

    def test_top_ball_type_count(self):
        rows = []
        a = b = 0
        for _ in range(5):
            a += 1
            rows.append(Rally("X", "wins by landing", "smash", "opponent wins by landing", a, b))
        for _ in range(3):
            b += 1
            rows.append(Rally("Y", "opponent hits the net", "lob", "hits the net", a, b))
        for _ in range(16):
            a += 1
            rows.append(Rally("X", "opponent goes out of bounds", "push", "goes out of bounds", a, b))
        # pad to a clean 21-3: already 21-3
        qa = answer_questions(simple_set(rows))
        assert qa.pairs[4][1] == "X won 16 points with the push."
        assert "smash" not in qa.pairs[4][1]

    def test_never_changed_lead(self):
        rng = random.Random(53)
        rows = [make_rally("X", i + 1, 0, rng) for i in range(21)]
        qa = answer_questions(simple_set(rows))
        assert qa.pairs[6][1] == "The leader never changed."

    def test_loser_with_no_points(self):
        rng = random.Random(59)
        rows = [make_rally("X", i + 1, 0, rng) for i in range(21)]
        qa = answer_questions(simple_set(rows))
        assert qa.pairs[5][1] == "Y did not win any points."


class TestRenderQa:
    def test_golden_first_lines(self, full_set):
        text = render_qa(answer_questions(full_set))
        lines = text.splitlines()
        assert lines[0] == "Q1: Which player won the game? How many points did the winner get?"
        assert lines[1] == "A1: An Se Young won the game with 22 points."
        assert lines[2] == "Q2: Which player lost the game? How many points did the loser get?"
        assert lines[3] == "A2: Ratchanok Intanon lost the game with 20 points."

    def test_structure_sixteen_lines(self):
        qa = QASet(pairs=tuple((f"q{i}", "") for i in range(8)))
        text = render_qa(qa)
        lines = text.splitlines()
        assert len(lines) == 16
        assert [ln.split(":")[0] for ln in lines] == [
            f"{kind}{i}" for i in range(1, 9) for kind in ("Q", "A")
        ]

    def test_round_trip_through_label_parser(self, full_set):
        qa = answer_questions(full_set)
        assert parse_qa(render_qa(qa)) == qa


def test_determinism(full_set):
    assert render_qa(answer_questions(full_set)) == render_qa(answer_questions(full_set))
    assert lead_changes(full_set) == lead_changes(full_set)
