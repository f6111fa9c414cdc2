"""Rubric prompt construction and the strict nine-key rating parser."""

import json

import pytest

from plotsearch.rubric import (
    RUBRIC_DIMENSIONS,
    RubricParseError,
    build_rating_prompt,
    parse_rating,
)


def rating(value=7, **overrides):
    doc = {dim: value for dim in RUBRIC_DIMENSIONS}
    doc.update(overrides)
    return doc


def test_dimension_names_and_count():
    assert len(RUBRIC_DIMENSIONS) == 9
    assert RUBRIC_DIMENSIONS[0] == "Plot Structure"
    assert RUBRIC_DIMENSIONS[-1] == "Style and Voice"


def test_prompt_contains_story_and_all_dimensions():
    prompt = build_rating_prompt("Once there was a lighthouse.")
    assert "Once there was a lighthouse." in prompt
    for dim in RUBRIC_DIMENSIONS:
        assert dim in prompt


def test_parse_plain_rating():
    scores = parse_rating(json.dumps(rating(7)))
    assert scores == rating(7)


def test_parse_takes_trailing_object():
    text = (
        "Reasoning: strong middle, weak ending. "
        + json.dumps({"draft": 1})
        + " Final answer:\n"
        + json.dumps(rating(6, Pacing=3))
        + "\nThat concludes the review."
    )
    assert parse_rating(text)["Pacing"] == 3


def test_parse_missing_key_rejected():
    doc = rating(5)
    del doc["Pacing"]
    with pytest.raises(RubricParseError, match="Pacing"):
        parse_rating(json.dumps(doc))


def test_parse_extra_key_rejected():
    with pytest.raises(RubricParseError, match="extra"):
        parse_rating(json.dumps(rating(5, Mood=5)))


def test_parse_value_out_of_range():
    with pytest.raises(RubricParseError, match="outside"):
        parse_rating(json.dumps(rating(5, Tension=11)))
    with pytest.raises(RubricParseError, match="outside"):
        parse_rating(json.dumps(rating(5, Theme=0)))


def test_parse_non_integer_rejected():
    with pytest.raises(RubricParseError, match="integer"):
        parse_rating(json.dumps(rating(5, Conflict=7.5)))
    with pytest.raises(RubricParseError, match="integer"):
        parse_rating(json.dumps(rating(5, Conflict=True)))
    with pytest.raises(RubricParseError, match="integer"):
        parse_rating(json.dumps(rating(5, Conflict="8")))


def test_parse_no_json_rejected():
    with pytest.raises(RubricParseError, match="no JSON"):
        parse_rating("I would rather not score this story.")


def test_parse_handles_braces_inside_strings():
    text = 'Notes: "{not json}" ... ' + json.dumps(rating(4))
    assert parse_rating(text) == rating(4)
