#!/usr/bin/env python3
"""Reader-study vote fixtures with independently computed aggregates.

Each scenario lists per-reader ranks and criterion scores by team; expected
average ranks and criterion means are exact fractions rounded half up to three
decimals, with competition ranking ("1 (tie)") for exactly equal means.
Writes crates/eval/tests/fixtures/reader_votes.json.
"""
import json
import pathlib
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

CRITERIA = ["artifacts", "sharpness", "cnr", "diagnostic_confidence"]


def fmt(fr):
    d = Decimal(fr.numerator) / Decimal(fr.denominator)
    return str(d.quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))


def scenario(name, teams, ranks, scores):
    n = len(ranks)
    for r in ranks:
        assert sorted(r) == list(range(1, len(teams) + 1)), r
    avg = {t: Fraction(sum(r[i] for r in ranks), n) for i, t in enumerate(teams)}
    labels = {}
    for t in teams:
        pos = 1 + sum(1 for u in teams if avg[u] < avg[t])
        tie = sum(1 for u in teams if avg[u] == avg[t]) > 1
        labels[t] = f"{pos} (tie)" if tie else str(pos)
    means = {
        t: {c: fmt(Fraction(sum(s[i] for s in scores[c]), n)) for c in CRITERIA}
        for i, t in enumerate(teams)
    }
    return {
        "name": name,
        "teams": teams,
        "ranks": ranks,
        "scores": scores,
        "expected": {
            t: {"avg_rank": fmt(avg[t]), "rank_label": labels[t], "criteria": means[t]}
            for t in teams
        },
    }


def scores_from_ranks(ranks, overrides=None):
    out = {c: [[min(4, r + (c == "diagnostic_confidence")) for r in row] for row in ranks] for c in CRITERIA}
    for (c, team_idx), column in (overrides or {}).items():
        for row, v in zip(out[c], column):
            row[team_idx] = v
    return out


tie_ranks = [
    [1, 2, 3, 4],
    [2, 1, 3, 4],
    [1, 3, 2, 4],
    [3, 1, 4, 2],
    [2, 3, 1, 4],
    [4, 2, 3, 1],
    [3, 4, 2, 1],
]
winner_ranks = [
    [1, 2, 3, 4],
    [1, 2, 3, 4],
    [1, 2, 3, 4],
    [1, 2, 3, 4],
    [1, 4, 3, 2],
    [2, 1, 3, 4],
    [2, 1, 4, 3],
]
unanimous_ranks = [
    [1, 2, 3, 4],
    [1, 3, 2, 4],
    [1, 2, 4, 3],
    [1, 4, 2, 3],
    [1, 2, 3, 4],
    [1, 3, 4, 2],
    [1, 2, 3, 4],
]

scenarios = [
    scenario(
        "shared_first_place",
        ["philips_lumc", "msdc_rnn", "neurospin", "resonet"],
        tie_ranks,
        scores_from_ranks(tie_ranks),
    ),
    scenario(
        "clear_winner",
        ["philips_lumc", "holykspace", "aimsterdam", "resonet"],
        winner_ranks,
        scores_from_ranks(winner_ranks, {("artifacts", 0): [2, 3, 3, 3, 3, 3, 2]}),
    ),
    scenario(
        "unanimous_winner",
        ["alpha", "bravo", "charlie", "delta"],
        unanimous_ranks,
        scores_from_ranks(unanimous_ranks),
    ),
]

out = pathlib.Path(__file__).resolve().parent.parent / "crates/eval/tests/fixtures/reader_votes.json"
out.parent.mkdir(parents=True, exist_ok=True)
out.write_text(json.dumps({"scenarios": scenarios}, indent=1) + "\n")
for s in scenarios:
    print(s["name"], {t: (e["avg_rank"], e["rank_label"]) for t, e in s["expected"].items()})
