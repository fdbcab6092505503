"""Rule-based linguistic annotation: tokens, universal POS tags, heads.

Stands in for a full parser. Coverage is tuned to caption English: short
declaratives built from determiners, nouns, participles and
prepositional phrases. Closed classes come from lexicons, open classes
from suffix heuristics, and heads from a handful of attachment rules
(determiners and adjectives look right to the next noun, nouns inside a
prepositional phrase attach to their preposition, everything else hangs
off the root).

Guarantees that matter downstream: token surfaces reconstruct the text
up to whitespace, every POS tag is universal, head indices are in range
with exactly one root, and a caption like "a woman standing on a
sidewalk." parses with the preposition headed by the verb, which is the
shape the toolkit's phrase splitter looks for.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[A-Za-z0-9']+|[^A-Za-z0-9'\s]")

_DETERMINERS = frozenset(
    "a an the this that these those every each some any no another".split())
_ADPOSITIONS = frozenset(
    "on in at of with under over near by behind above below beside between "
    "through from to into onto across along around inside outside against "
    "during beneath atop".split())
_PRONOUNS = frozenset(
    "i you he she it we they me him her us them his hers its mine yours "
    "theirs who whom something someone".split())
_AUXILIARIES = frozenset(
    "is are was were be been being am do does did has have had will would "
    "can could should may might must".split())
_CONJUNCTIONS = frozenset("and or but nor".split())
_SUBORDINATORS = frozenset("because while if when although since".split())
_ADVERBS = frozenset(
    "very not there here now then too also quickly slowly together away "
    "back up down out off".split())
_ADJECTIVES = frozenset(
    "red blue green yellow orange purple pink brown black white gray grey "
    "cyan magenta young old big small little large tall short long new good "
    "bad happy sad bright dark sunny cloudy wooden metal striped furry cute "
    "busy empty crowded clear dirty clean wet dry high low".split())
_VERBS = frozenset(
    "standing sitting riding running walking playing eating holding wearing "
    "looking jumping flying driving carrying throwing catching reading "
    "sleeping smiling waiting watching hanging grazing surfing parked plays "
    "runs sits stands walks looks wears holds rides eats jumps watches "
    "stand sit ride run walk play eat hold wear look jump fly drive watch".split())

_NOUN_LIKE = ("NOUN", "PROPN")


def tokenize(text: str) -> list[str]:
    """Words (with internal apostrophes) and single punctuation marks."""
    return _TOKEN_RE.findall(text)


def _tag(surface: str, position: int) -> str:
    del position  # capitalization decides proper nouns, not position
    low = surface.lower()
    if not any(c.isalnum() for c in surface):
        return "PUNCT"
    if low[0].isdigit():
        return "NUM"
    if low in _DETERMINERS:
        return "DET"
    if low in _ADPOSITIONS:
        return "ADP"
    if low in _PRONOUNS:
        return "PRON"
    if low in _AUXILIARIES:
        return "AUX"
    if low in _CONJUNCTIONS:
        return "CCONJ"
    if low in _SUBORDINATORS:
        return "SCONJ"
    if low in _ADVERBS:
        return "ADV"
    if low in _ADJECTIVES or low.endswith(("ful", "ous", "ish", "able")):
        return "ADJ"
    if low in _VERBS or (len(low) > 4 and low.endswith("ing")) \
            or (len(low) > 3 and low.endswith("ed")):
        return "VERB"
    if surface[0].isupper():
        return "PROPN"
    return "NOUN"


def _root_index(tags: list[str]) -> int:
    for wanted in ("VERB", "AUX", "NOUN", "PROPN"):
        for i, tag in enumerate(tags):
            if tag == wanted:
                return i
    return 0


def _next_noun(tags: list[str], start: int) -> int | None:
    for j in range(start + 1, len(tags)):
        if tags[j] in _NOUN_LIKE:
            return j
    return None


def _governing_adposition(tags: list[str], position: int) -> int | None:
    # scan left past the noun's own modifiers; a verb in between breaks the phrase
    for j in range(position - 1, -1, -1):
        if tags[j] in ("DET", "ADJ", "ADV", "NUM"):
            continue
        if tags[j] == "ADP":
            return j
        return None
    return None


def annotate_text(text: str) -> list[dict]:
    """Token dicts {surface, pos, head, deprel} for one caption."""
    surfaces = tokenize(text)
    if not surfaces:
        raise ValueError("cannot annotate empty text")
    tags = [_tag(s, i) for i, s in enumerate(surfaces)]
    root = _root_index(tags)

    tokens: list[dict] = []
    for i, (surface, tag) in enumerate(zip(surfaces, tags)):
        if i == root:
            head, rel = -1, "root"
        elif tag == "DET":
            noun = _next_noun(tags, i)
            head, rel = (noun, "det") if noun is not None else (root, "dep")
        elif tag == "ADJ":
            noun = _next_noun(tags, i)
            head, rel = (noun, "amod") if noun is not None else (root, "acomp")
        elif tag == "ADP":
            head, rel = root, "prep"
        elif tag in _NOUN_LIKE or tag == "PRON" or tag == "NUM":
            governor = _governing_adposition(tags, i)
            if governor is not None:
                head, rel = governor, "pobj"
            elif i < root:
                head, rel = root, "nsubj"
            else:
                head, rel = root, "dobj"
        elif tag == "AUX":
            head, rel = root, "aux"
        elif tag == "PUNCT":
            head, rel = root, "punct"
        elif tag == "ADV":
            head, rel = root, "advmod"
        elif tag == "CCONJ":
            head, rel = root, "cc"
        elif tag == "SCONJ":
            head, rel = root, "mark"
        else:
            head, rel = root, "dep"
        tokens.append({"surface": surface, "pos": tag, "head": head, "deprel": rel})
    return tokens
