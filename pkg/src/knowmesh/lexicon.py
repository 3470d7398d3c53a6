"""Static human-language table: synonyms, categories, parts of speech.

File grammar, one entry per line, ``#`` starts a comment::

    syn user: customer, client, patron
    cat red: color
    pos apple: noun
    word cow calf
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import NonCanonicalTerm, ParseError
from .knowledge import is_canonical

PARTS_OF_SPEECH = frozenset({"noun", "verb", "adjective"})


@dataclass(frozen=True)
class Lexicon:
    synonyms: dict[str, frozenset[str]] = field(default_factory=dict)
    categories: dict[str, str] = field(default_factory=dict)
    pos: dict[str, str] = field(default_factory=dict)
    dictionary: frozenset[str] = frozenset()

    def lookup_synonyms(self, term: str) -> frozenset[str]:
        return self.synonyms.get(term, frozenset())

    def lookup_category(self, term: str) -> Optional[str]:
        return self.categories.get(term)

    def lookup_pos(self, term: str) -> Optional[str]:
        return self.pos.get(term)

    def words_with_pos(self, tag: str) -> list[str]:
        return sorted(w for w, p in self.pos.items() if p == tag)

    def knows(self, word: str) -> bool:
        return word in self.dictionary


def lookup_synonyms(lex: Lexicon, term: str) -> frozenset[str]:
    return lex.lookup_synonyms(term)


def lookup_category(lex: Lexicon, term: str) -> Optional[str]:
    return lex.lookup_category(term)


def lookup_pos(lex: Lexicon, term: str) -> Optional[str]:
    return lex.lookup_pos(term)


def _terms(raw: Iterable[str], number: int) -> list[str]:
    words = []
    for w in raw:
        w = w.strip()
        if not w:
            continue
        if not is_canonical(w):
            raise NonCanonicalTerm(f"line {number}: {w!r} is not a canonical term")
        words.append(w)
    return words


def _split_entry(body: str, number: int) -> tuple[str, str]:
    head, sep, rest = body.partition(":")
    if not sep:
        raise ParseError("expected 'word: value'", number)
    found = _terms([head], number)
    if len(found) != 1:
        raise ParseError("missing head word", number)
    return found[0], rest


def load_lexicon(document: str) -> Lexicon:
    synonyms: dict[str, set[str]] = defaultdict(set)
    categories: dict[str, str] = {}
    pos: dict[str, str] = {}
    words: set[str] = set()

    for number, raw in enumerate(document.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        directive, _, body = line.partition(" ")
        if directive == "syn":
            head, rest = _split_entry(body, number)
            others = _terms(rest.split(","), number)
            if not others:
                raise ParseError(f"synonym list for {head!r} is empty", number)
            for w in others:
                if w != head:
                    synonyms[head].add(w)
                    synonyms[w].add(head)
            words.add(head)
            words.update(others)
        elif directive in ("cat", "pos"):
            word, rest = _split_entry(body, number)
            value = _terms([rest], number)
            if len(value) != 1:
                raise ParseError(f"{directive} entry needs exactly one value", number)
            table = categories if directive == "cat" else pos
            if directive == "pos" and value[0] not in PARTS_OF_SPEECH:
                raise ParseError(f"unknown part of speech {value[0]!r}", number)
            if table.get(word, value[0]) != value[0]:
                raise ParseError(f"conflicting {directive} for {word!r}", number)
            table[word] = value[0]
            words.update((word, value[0]))
        elif directive == "word":
            found = _terms(body.replace(",", " ").split(), number)
            if not found:
                raise ParseError("word entry is empty", number)
            words.update(found)
        else:
            raise ParseError(f"unknown directive {directive!r}", number)

    return Lexicon(
        synonyms={k: frozenset(v) for k, v in synonyms.items()},
        categories=categories,
        pos=pos,
        dictionary=frozenset(words),
    )


def save_lexicon(lex: Lexicon) -> str:
    lines = []
    for head in sorted(lex.synonyms):
        lines.append(f"syn {head}: {', '.join(sorted(lex.synonyms[head]))}")
    lines += [f"cat {w}: {c}" for w, c in sorted(lex.categories.items())]
    lines += [f"pos {w}: {p}" for w, p in sorted(lex.pos.items())]
    lines += [f"word {w}" for w in sorted(lex.dictionary)]
    return "\n".join(lines) + ("\n" if lines else "")


def unknown_words(terms: Iterable[str], lex: Lexicon, vocabulary: Iterable[str] = ()) -> set[str]:
    """Terms with an underscore-separated fragment that is not a known word."""
    known = lex.dictionary | frozenset(vocabulary)
    return {t for t in terms if t not in known and any(p not in known for p in t.split("_"))}
