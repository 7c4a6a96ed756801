"""Recommendation query language: AST, concrete-syntax parser, renderer, validator.

The language is SQL-like: ``select x where <clause> & <clause> ...``.  Each
clause pairs a semantic label (``x.type``, ``x.attribute``, ...) with an
optional operator chain (``NOT``, ``PREF``, ``NEAR``, ``SIMILAR``, set/range
membership) and one or more quoted phrases.  Clauses combine through a binary
AND/OR connective tree; the default connective is conjunction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

# Semantic labels a clause may carry.
LABELS = (
    "x",
    "x.type",
    "x.attribute",
    "x.location",
    "x.sibling",
    "user.attribute",
    "user.location",
)

# Operator kinds.  EQ is the implicit plain-equality operator and never
# appears in a clause's operator chain; the rest may.
OP_EQ = "EQ"
OP_NOT = "NOT"
OP_PREF = "PREF"
OP_NEAR = "NEAR"
OP_IN_SET = "IN_SET"
OP_IN_RANGE = "IN_RANGE"
OP_SIMILAR = "SIMILAR"

OPERATORS = (OP_EQ, OP_NOT, OP_PREF, OP_NEAR, OP_IN_SET, OP_IN_RANGE, OP_SIMILAR)

# Operators that consume the clause terminal; at most one, always last.
_TERMINAL_OPS = {OP_IN_SET, OP_IN_RANGE, OP_SIMILAR, OP_NEAR}

_LABEL_ALIASES = {
    "x.attr": "x.attribute",
    "x.loc": "x.location",
    "user.attr": "user.attribute",
    "user.loc": "user.location",
}


class RqlSyntaxError(Exception):
    """Malformed concrete syntax. Carries the byte offset and a hint."""

    def __init__(self, message: str, offset: int, expected: str | None = None):
        self.offset = offset
        self.expected = expected
        hint = f" (expected {expected})" if expected else ""
        super().__init__(f"{message} at byte offset {offset}{hint}")


class RqlValidationError(Exception):
    pass


@dataclass(frozen=True)
class Clause:
    label: str
    ops: tuple[str, ...] = ()
    phrases: tuple[str, ...] = ()


# Connective tree nodes: an int is a clause index; an ("and"|"or", left,
# right) tuple is a binary connective.
Tree = int | tuple


@dataclass(frozen=True)
class RqlQuery:
    clauses: tuple[Clause, ...]
    tree: Tree = field(default=0)

    @staticmethod
    def all_and(clauses) -> "RqlQuery":
        """Build a query joining the clauses with a left-leaning AND tree."""
        clauses = tuple(clauses)
        tree: Tree = 0
        for i in range(1, len(clauses)):
            tree = ("and", tree, i)
        return RqlQuery(clauses=clauses, tree=tree)


# ---------------------------------------------------------------------------
# Tokenizer


_SYMBOLS = {"&", "|", "=", ",", "(", ")", "{", "}", "[", "]"}
_KEYWORDS = {"select", "where", "and", "or", "not", "pref", "near", "in", "similar"}


@dataclass(frozen=True)
class _Tok:
    kind: str  # "word", "symbol", "phrase", "eof"
    value: str
    pos: int  # character offset into the source


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in _SYMBOLS:
            toks.append(_Tok("symbol", c, i))
            i += 1
            continue
        if c == '"':
            j = i + 1
            buf = []
            while j < n:
                if text[j] == "\\" and j + 1 < n:
                    buf.append(text[j + 1])
                    j += 2
                elif text[j] == '"':
                    break
                else:
                    buf.append(text[j])
                    j += 1
            if j >= n:
                raise RqlSyntaxError(
                    "unterminated phrase", _byte_offset(text, n), expected='closing "'
                )
            toks.append(_Tok("phrase", "".join(buf), i))
            i = j + 1
            continue
        if c.isalnum() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "._"):
                j += 1
            toks.append(_Tok("word", text[i:j], i))
            i = j
            continue
        raise RqlSyntaxError(
            f"unexpected character {c!r}", _byte_offset(text, i), expected="token"
        )
    toks.append(_Tok("eof", "", n))
    return toks


# ---------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.clauses: list[Clause] = []

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, message: str, expected: str | None = None):
        raise RqlSyntaxError(
            message, _byte_offset(self.text, self.peek().pos), expected
        )

    def expect_word(self, word: str):
        t = self.peek()
        if t.kind != "word" or t.value.lower() != word:
            self.error(f"got {t.value!r}" if t.kind != "eof" else "end of input", word)
        self.next()

    def parse(self) -> RqlQuery:
        self.expect_word("select")
        self.expect_word("x")
        self.expect_word("where")
        tree = self.parse_or()
        t = self.peek()
        if t.kind != "eof":
            self.error(f"trailing input {t.value!r}", "end of input")
        return RqlQuery(clauses=tuple(self.clauses), tree=tree)

    def at_word(self, *words: str) -> bool:
        t = self.peek()
        return t.kind == "word" and t.value.lower() in words

    def parse_or(self) -> Tree:
        node = self.parse_and()
        while self.at_word("or") or (
            self.peek().kind == "symbol" and self.peek().value == "|"
        ):
            self.next()
            node = ("or", node, self.parse_and())
        return node

    def parse_and(self) -> Tree:
        node = self.parse_factor()
        while self.at_word("and") or (
            self.peek().kind == "symbol" and self.peek().value in ("&", ",")
        ):
            self.next()
            node = ("and", node, self.parse_factor())
        return node

    def parse_factor(self) -> Tree:
        t = self.peek()
        if t.kind == "symbol" and t.value == "(":
            self.next()
            node = self.parse_or()
            t = self.peek()
            if not (t.kind == "symbol" and t.value == ")"):
                self.error("unbalanced parenthesis", ")")
            self.next()
            return node
        return self.parse_clause()

    def parse_clause(self) -> Tree:
        t = self.peek()
        if t.kind != "word":
            self.error(
                f"got {t.value!r}" if t.kind != "eof" else "end of input",
                "semantic label",
            )
        raw = t.value.lower()
        label = _LABEL_ALIASES.get(raw, raw)
        if label not in LABELS:
            self.error(f"unknown label {t.value!r}", "semantic label")
        self.next()

        ops: list[str] = []
        while self.at_word("not", "pref", "similar", "near"):
            ops.append(self.next().value.upper())

        phrases = self.parse_terminal(ops)
        self.clauses.append(Clause(label=label, ops=tuple(ops), phrases=phrases))
        return len(self.clauses) - 1

    def parse_terminal(self, ops: list[str]) -> tuple[str, ...]:
        t = self.peek()
        if t.kind == "symbol" and t.value == "=":
            self.next()
            return (self.expect_phrase(),)
        if self.at_word("in"):
            self.next()
            t = self.peek()
            if t.kind == "symbol" and t.value == "{":
                self.next()
                phrases = self.parse_phrase_list("}")
                ops.append(OP_IN_SET)
                return phrases
            if t.kind == "symbol" and t.value == "[":
                self.next()
                phrases = self.parse_phrase_list("]")
                ops.append(OP_IN_RANGE)
                return phrases
            self.error("expected a set or range after 'in'", "{ or [")
        if t.kind == "phrase" and ops and ops[-1] in (OP_SIMILAR, OP_NEAR):
            # SIMILAR and NEAR take a bare quoted phrase, no '='.
            return (self.next().value,)
        self.error(
            f"got {t.value!r}" if t.kind != "eof" else "end of input",
            "=, in, or quoted phrase",
        )

    def expect_phrase(self) -> str:
        t = self.peek()
        if t.kind != "phrase":
            self.error(
                f"got {t.value!r}" if t.kind != "eof" else "end of input",
                "quoted phrase",
            )
        return self.next().value

    def parse_phrase_list(self, closer: str) -> tuple[str, ...]:
        phrases = [self.expect_phrase()]
        while self.peek().kind == "symbol" and self.peek().value == ",":
            self.next()
            phrases.append(self.expect_phrase())
        t = self.peek()
        if not (t.kind == "symbol" and t.value == closer):
            self.error("unterminated phrase list", closer)
        self.next()
        return tuple(phrases)


def parse_rql(text: str) -> RqlQuery:
    """Parse concrete RQL text into an AST.

    Raises RqlSyntaxError (with byte offset and an expected-token hint) on
    malformed input.
    """
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Renderer


def _quote(phrase: str) -> str:
    return '"' + phrase.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_clause(clause: Clause) -> str:
    parts = [clause.label]
    terminal_done = False
    for op in clause.ops:
        if op == OP_IN_SET:
            parts.append("in {" + ",".join(_quote(p) for p in clause.phrases) + "}")
            terminal_done = True
        elif op == OP_IN_RANGE:
            parts.append("in [" + ",".join(_quote(p) for p in clause.phrases) + "]")
            terminal_done = True
        else:
            parts.append(op)
    if not terminal_done:
        if clause.ops and clause.ops[-1] in (OP_SIMILAR, OP_NEAR):
            parts.append(_quote(clause.phrases[0]))
        elif clause.ops:
            parts.append("= " + _quote(clause.phrases[0]))
        else:
            return clause.label + "=" + _quote(clause.phrases[0])
    return " ".join(parts)


def _render_tree(query: RqlQuery, node: Tree, parent: str | None) -> str:
    if isinstance(node, int):
        return render_clause(query.clauses[node])
    kind, left, right = node
    sep = " & " if kind == "and" else " | "
    text = _render_tree(query, left, kind) + sep + _render_tree(query, right, kind)
    if parent is not None and parent != kind:
        return "(" + text + ")"
    return text


def render_rql(query: RqlQuery) -> str:
    """Render a validated AST to canonical text; inverse of parse_rql."""
    report = validate_query(query)
    if report:
        raise RqlValidationError("; ".join(report))
    return "select x where " + _render_tree(query, query.tree, None)


# ---------------------------------------------------------------------------
# Validation


def _tree_leaves(node: Tree, out: list[int]):
    if isinstance(node, int):
        out.append(node)
    else:
        _tree_leaves(node[1], out)
        _tree_leaves(node[2], out)


def validate_query(query: RqlQuery) -> list[str]:
    """Check all structural invariants; returns a list of violations (empty
    when the query is well formed)."""
    violations = []
    if not query.clauses:
        violations.append("query has no clauses")
        return violations

    leaves: list[int] = []
    _tree_leaves(query.tree, leaves)
    if sorted(leaves) != list(range(len(query.clauses))):
        violations.append(
            "connective tree leaves must be exactly the clause indices, once each"
        )

    for i, clause in enumerate(query.clauses):
        where = f"clause {i}"
        if clause.label not in LABELS:
            violations.append(f"{where}: unknown label {clause.label!r}")
        if len(clause.ops) > 3:
            violations.append(f"{where}: operator chain longer than 3")
        if not clause.phrases:
            violations.append(f"{where}: no phrases")
        for op in clause.ops:
            if op not in OPERATORS or op == OP_EQ:
                violations.append(f"{where}: invalid operator {op!r}")
        terminal_ops = [op for op in clause.ops if op in _TERMINAL_OPS]
        if len(terminal_ops) > 1:
            violations.append(f"{where}: multiple terminal operators {terminal_ops}")
        elif terminal_ops and clause.ops[-1] not in _TERMINAL_OPS:
            violations.append(f"{where}: terminal operator must come last")
        terminal = terminal_ops[0] if terminal_ops else OP_EQ
        if terminal == OP_IN_RANGE and len(clause.phrases) != 2:
            violations.append(f"{where}: range needs exactly two endpoints")
        if terminal not in (OP_IN_SET, OP_IN_RANGE) and len(clause.phrases) != 1:
            violations.append(f"{where}: exactly one phrase required")
        if OP_NEAR in clause.ops and clause.label != "x.location":
            violations.append(f"{where}: NEAR requires x.location")
        if clause.label == "x" and terminal not in (OP_IN_SET, OP_SIMILAR, OP_EQ):
            violations.append(
                f"{where}: bare x allowed only with set membership, SIMILAR, or equality"
            )
    return violations


# ---------------------------------------------------------------------------
# JSON interchange


def _tree_to_json(node: Tree):
    if isinstance(node, int):
        return node
    return [node[0], _tree_to_json(node[1]), _tree_to_json(node[2])]


def _tree_from_json(node) -> Tree:
    if isinstance(node, int):
        return node
    kind, left, right = node
    return (kind, _tree_from_json(left), _tree_from_json(right))


def query_to_json(query: RqlQuery) -> str:
    return json.dumps(
        {
            "clauses": [
                {"label": c.label, "ops": list(c.ops), "phrases": list(c.phrases)}
                for c in query.clauses
            ],
            "tree": _tree_to_json(query.tree),
        }
    )


def query_from_json(text: str) -> RqlQuery:
    obj = json.loads(text)
    clauses = tuple(
        Clause(label=c["label"], ops=tuple(c["ops"]), phrases=tuple(c["phrases"]))
        for c in obj["clauses"]
    )
    return RqlQuery(clauses=clauses, tree=_tree_from_json(obj["tree"]))
