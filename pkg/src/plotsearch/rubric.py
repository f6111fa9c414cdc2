"""Nine-dimension story rating rubric: prompt template and strict parser.

The judge model receives the full rubric and must finish with a JSON
object holding exactly the nine dimension keys, each an integer 1-10.
The parser accepts that shape and nothing else; graders that ramble
after the JSON are tolerated, graders that bend the schema are not.
"""

from __future__ import annotations

import json

RUBRIC_DIMENSIONS = (
    "Plot Structure",
    "Tension",
    "Originality",
    "Character Development",
    "Overall Impact",
    "Theme",
    "Conflict",
    "Pacing",
    "Style and Voice",
)

MIN_SCORE = 1
MAX_SCORE = 10

RATING_PROMPT_TEMPLATE = """Please evaluate the following story:

{story}

Evaluation criteria:

1. Plot Structure (1-10):
- Is there a discernible beginning, middle, and end?
- Do events follow one another in a way that makes causal sense?

2. Tension (1-10):
- Does the story hold attention and build suspense?
- Do obstacles or conflicts press on the characters?

3. Originality (1-10):
- Does the story bring a fresh angle to its material?
- Does it stay clear of formula and predictable turns?

4. Character Development (1-10):
- Are the characters specific and believable?
- Do any of them change in a meaningful way?

5. Overall Impact (1-10):
- Does the story stay with the reader afterward?
- How strongly does it land its emotional or thematic payload?

6. Theme (1-10):
- Is a central idea discernible?
- Is that idea woven through the events rather than bolted on?

7. Conflict (1-10):
- Is the central conflict engaging and well executed?
- Does it push the story forward?

8. Pacing (1-10):
- Does the story move at a fitting speed?
- Are any stretches rushed or slack?

9. Style and Voice (1-10):
- Does the prose style suit the material?
- Is there a distinct authorial voice?

Give a brief justification for each criterion, then a score from 1 to 10 for each.

Finally, after all nine justifications, output JSON:

**JSON Output**: Provide a structured output in JSON format with the following keys, where each value must be an integer between 1 and 10:

{
"Plot Structure": <1-10>,
"Tension": <1-10>,
"Originality": <1-10>,
"Character Development": <1-10>,
"Overall Impact": <1-10>,
"Theme": <1-10>,
"Conflict": <1-10>,
"Pacing": <1-10>,
"Style and Voice": <1-10>
}"""


class RubricParseError(ValueError):
    """A judge response did not contain a valid nine-key rating object."""


def build_rating_prompt(story_text: str) -> str:
    # Plain replacement: the template itself contains literal braces.
    return RATING_PROMPT_TEMPLATE.replace("{story}", story_text)


def _balanced_objects(text: str):
    """Top-level ``{...}`` spans in order, string-literal aware."""
    depth = 0
    start = 0
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"' and depth > 0:
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                yield text[start : i + 1]


def parse_rating(response_text: str) -> dict:
    """Extract the trailing JSON rating object from a judge response.

    Returns a dict with exactly the nine rubric keys mapped to integers
    in [1, 10]; anything else raises RubricParseError.
    """
    candidate = None
    for span in _balanced_objects(response_text):
        try:
            doc = json.loads(span)
        except ValueError:
            continue
        if isinstance(doc, dict):
            candidate = doc
    if candidate is None:
        raise RubricParseError("no JSON object in judge response")
    expected = set(RUBRIC_DIMENSIONS)
    got = set(candidate)
    if got != expected:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise RubricParseError(f"rating keys wrong: missing {missing}, extra {extra}")
    out = {}
    for key in RUBRIC_DIMENSIONS:
        value = candidate[key]
        if isinstance(value, bool) or not isinstance(value, int):
            raise RubricParseError(f"{key!r} score must be an integer, got {value!r}")
        if not MIN_SCORE <= value <= MAX_SCORE:
            raise RubricParseError(f"{key!r} score {value} outside [1, 10]")
        out[key] = value
    return out
