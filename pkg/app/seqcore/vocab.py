"""
Word-level vocabulary and the text <-> id codec.

Numerals are single-digit tokens. A multi-digit literal is encoded as its
digits and decoding merges adjacent digit tokens back into one literal, so
task grammars always separate two numbers with a word or symbol.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, List, Sequence, Tuple, Union

from app.errors import UnknownToken


PAD = "<pad>"
MASK = "<mask>"
BOS = "<bos>"
ANSWER_MARK = "####"
PLAN_HEADER = "plan:"
SOLUTION_MARKER = "solution:"

SPECIAL_TOKENS = (PAD, MASK, BOS, ANSWER_MARK, PLAN_HEADER, SOLUTION_MARKER)
NUMERALS = tuple(str(d) for d in range(10))
SYMBOLS = (";", ":", ",", ".", "?", "=", "+", "-", "*", "(", ")", "/", "_")

# Task grammars, system prompt and plan vocabulary.
WORDS = (
    # system prompt
    "solve", "the", "problem", "step", "by",
    # chain arithmetic
    "start", "add", "sub", "mul", "mod",
    # countdown
    "numbers", "target", "make",
    # latin square
    "grid", "cell", "cells", "row", "rows", "column", "columns", "fill", "blank", "blanks",
    # plans
    "apply", "then", "in", "order", "reduce", "each", "after", "every", "key", "operands",
    "operand", "pitfall", "answer", "first", "next", "last", "pair", "result", "with", "use",
    "once", "values", "value", "missing", "its", "and", "holds", "number", "combine", "to",
    "reach", "of", "a", "an", "is", "are", "not", "do", "multiply", "subtract", "plus",
    "minus", "times", "sum", "product", "difference", "compute", "calculate", "find", "keep",
    "track", "check", "write", "final", "from", "for", "at", "on", "it", "this", "that", "all",
    "remaining", "total", "count", "modulo", "left", "right", "current", "running", "wrap",
    "around", "be", "careful", "avoid", "ensure", "same", "twice", "exactly", "given", "digit",
    "digits", "unique", "only", "one", "two", "three", "four", "operation", "operations",
    "sequence", "approach", "strategy", "outline", "constraint", "constraints", "sentence",
    "steps", "plan", "without", "numbered", "note", "short", "words", "vocabulary", "listed",
    "if", "or", "no", "so", "into", "up", "down", "over", "under", "than", "less", "more",
    "equal", "equals", "divide", "divided", "any", "other", "instead", "never", "always",
    "work", "stay", "rule", "rules", "list", "hint", "goal", "end", "go",
)

MAX_VOCAB = 512


@dataclass(frozen=True)
class Vocab:
    """Ordered token list with a reverse index."""
    tokens: Tuple[str, ...]
    index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        if len(self.tokens) > MAX_VOCAB:
            raise ValueError(f"vocabulary size {len(self.tokens)} exceeds {MAX_VOCAB}")
        object.__setattr__(self, "index", {tok: i for i, tok in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        try:
            return self.index[token]
        except KeyError:
            raise UnknownToken(token) from None

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def mask_id(self) -> int:
        return self.index[MASK]

    @property
    def bos_id(self) -> int:
        return self.index[BOS]

    @property
    def answer_mark_id(self) -> int:
        return self.index[ANSWER_MARK]

    @property
    def plan_header_id(self) -> int:
        return self.index[PLAN_HEADER]

    @property
    def solution_marker_id(self) -> int:
        return self.index[SOLUTION_MARKER]

    @property
    def numeral_ids(self) -> List[int]:
        return [self.index[n] for n in NUMERALS]

    def is_numeral(self, token_id: int) -> bool:
        return self.tokens[token_id] in NUMERALS

    def encode(self, text: str) -> List[int]:
        """Encode whitespace-delimited units; integer literals split into digits."""
        ids: List[int] = []
        for unit in text.split():
            if unit in self.index:
                ids.append(self.index[unit])
            elif unit.isdigit() and unit.isascii():
                ids.extend(self.index[d] for d in unit)
            else:
                raise UnknownToken(unit)
        return ids

    def decode(self, ids: Iterable[int], skip_special: bool = False) -> str:
        """Decode ids, merging adjacent digit tokens into one literal."""
        units: List[str] = []
        previous_numeral = False
        for token_id in ids:
            token = self.tokens[int(token_id)]
            if skip_special and token in (PAD, MASK, BOS):
                previous_numeral = False
                continue
            numeral = token in NUMERALS
            if numeral and previous_numeral:
                units[-1] += token
            else:
                units.append(token)
            previous_numeral = numeral
        return " ".join(units)

    def encodable(self, unit: str) -> bool:
        return unit in self.index or (unit.isdigit() and unit.isascii())

    def to_dict(self) -> Dict[str, list]:
        return {"tokens": list(self.tokens)}


@lru_cache(maxsize=1)
def default_vocab() -> Vocab:
    """The vocabulary shared by every task grammar and planner."""
    return Vocab(tokens=SPECIAL_TOKENS + NUMERALS + SYMBOLS + WORDS)


def codec(value: Union[str, Sequence[int]], vocab: Vocab = None) -> Union[List[int], str]:
    """Encode text to ids or decode ids to text, depending on the input."""
    vocab = vocab or default_vocab()
    if isinstance(value, str):
        return vocab.encode(value)
    return vocab.decode(value)


def number_literals(ids: Sequence[int], vocab: Vocab) -> List[int]:
    """Integers formed by maximal runs of digit tokens."""
    numbers: List[int] = []
    digits = ""
    for token_id in ids:
        token = vocab.tokens[int(token_id)]
        if token in NUMERALS:
            digits += token
        elif digits:
            numbers.append(int(digits))
            digits = ""
    if digits:
        numbers.append(int(digits))
    return numbers


def text_numbers(text: str) -> List[int]:
    """Integer literals in a decoded text."""
    return [int(unit) for unit in text.split() if unit.isdigit() and unit.isascii()]
