"""Seeded grammar backend for prompted detail generation.

Consumes a prompt batch (caption text with one of the five detail
templates appended) and emits one short declarative detail per row.
Each detail is phrased so the downstream template merger can fold it
back into the caption: template rows 3 and 4 echo the noun the prompt
asked about, rows 1, 2 and 5 produce clauses that merge by appending.

Everything is a pure function of (seed, caption_id, template_row,
prompted_input), so reordering the batch or rerunning the job cannot
change any output.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

PLACES = (
    "at night", "on a sunny day", "in the rain", "near a fence",
    "by the water", "in a park", "on the beach", "under a clear sky",
)
THINGS = ("dog", "bench", "tree", "bicycle", "umbrella", "ball")
QUALITIES = ("young", "old", "small", "large", "wooden", "bright", "striped", "busy")
COLORS = ("red", "blue", "green", "yellow", "white", "black", "brown", "gray")
GARMENTS = ("a red jacket", "a blue shirt", "a white dress", "a dark coat")

# template tails to recover what the prompt asked about; the noun group
# must not cross a sentence boundary, or a caption containing "The ... is"
# would swallow everything up to the appended template
_NOUN_COPULA = re.compile(r"\bThe ([^.!?]+?) (is|are)$")
_COLOR_OF = re.compile(r"\bThe color of ([^.!?]+?)$")
_PERSON_WEARS = re.compile(r"\bThe (man|woman) wears$")


def _last_match(pattern: re.Pattern, text: str):
    found = None
    for found in pattern.finditer(text):
        pass
    return found


def _rng(seed: int, caption_id: str, row: int, prompted_input: str) -> np.random.Generator:
    key = f"{seed}:{caption_id}:{row}:{prompted_input}"
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest[:16], "little")))


def _pick(rng: np.random.Generator, options: tuple[str, ...]) -> str:
    return options[int(rng.integers(len(options)))]


def generate_detail(caption_id: str, template_row: int, prompted_input: str,
                    seed: int = 0) -> str:
    """One declarative detail sentence for a single prompted input."""
    if not 1 <= template_row <= 5:
        raise ValueError(f"template row {template_row} outside 1..5")
    rng = _rng(seed, caption_id, template_row, prompted_input)

    if template_row == 2:
        return f"there is a {_pick(rng, QUALITIES)} {_pick(rng, THINGS)}."
    if template_row == 3:
        m = _last_match(_NOUN_COPULA, prompted_input)
        if m:
            return f"the {m.group(1)} {m.group(2)} {_pick(rng, QUALITIES)}."
    if template_row == 4:
        m = _last_match(_COLOR_OF, prompted_input)
        if m:
            return f"the color of {m.group(1)} is {_pick(rng, COLORS)}."
    if template_row == 5:
        m = _last_match(_PERSON_WEARS, prompted_input)
        if m:
            return f"the {m.group(1)} wears {_pick(rng, GARMENTS)}."
    # row 1, and any prompt whose tail does not parse
    return f"it is {_pick(rng, PLACES)}."
