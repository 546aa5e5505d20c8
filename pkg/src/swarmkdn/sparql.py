"""
A small SPARQL SELECT engine: conjunctive basic graph patterns, FILTER
comparisons, DISTINCT and LIMIT.

Rows come back sorted by the serialized form of their terms so results,
and therefore LIMIT, are reproducible.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

from .errors import SparqlSyntaxError, UnboundVariable, UnknownPrefix
from .rdf import RDF, XSD, Datatype, Iri, Literal, Term

SN = "urn:swarm-net:"

DEFAULT_PREFIXES = {
    "sn": SN,
    "rdf": RDF,
    "xsd": XSD,
    "switch": SN + "switch:",
    "host": SN + "host:",
    "group": SN + "group:",
    "link": SN + "link:",
    "flow": SN + "flow:",
    "report": SN + "report:",
    "hop": SN + "hop:",
}

COMPARISONS = ("=", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Variable:
    name: str

    def __str__(self):
        return "?" + self.name


Node = Union[Term, Variable]


class TriplePattern(NamedTuple):
    subject: Node
    predicate: Node
    object: Node

    def variables(self) -> list[str]:
        return [x.name for x in self if isinstance(x, Variable)]


@dataclass(frozen=True)
class Filter:
    lhs: Variable
    op: str
    rhs: Node


@dataclass
class SelectQuery:
    variables: Optional[list[str]]  # None for SELECT *
    patterns: list[TriplePattern] = field(default_factory=list)
    filters: list[Filter] = field(default_factory=list)
    distinct: bool = False
    limit: Optional[int] = None
    prefixes: dict = field(default_factory=dict)

    def pattern_variables(self) -> list[str]:
        seen = []
        for p in self.patterns:
            for name in p.variables():
                if name not in seen:
                    seen.append(name)
        return seen

    def header(self) -> list[str]:
        return list(self.variables) if self.variables is not None else self.pattern_variables()


@dataclass
class ResultTable:
    header: list[str]
    rows: list[tuple]

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list:
        i = self.header.index(name)
        return [row[i] for row in self.rows]

    def to_text(self) -> str:
        cols = ["?" + h for h in self.header]
        body = [[t.n3() for t in row] for row in self.rows]
        widths = [max([len(c)] + [len(r[i]) for r in body]) for i, c in enumerate(cols)]
        lines = [" | ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip()]
        lines.append("-+-".join("-" * w for w in widths))
        for r in body:
            lines.append(" | ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
        lines.append(f"({len(self.rows)} row{'s' if len(self.rows) != 1 else ''})")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(self.header)
        for row in self.rows:
            writer.writerow([str(t) for t in row])
        return buf.getvalue()


# tokenizer

_TOKEN = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\s]*>)
  | (?P<var>[?$][A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<integer>[+-]?\d+)
  | (?P<pname>[A-Za-z_][A-Za-z0-9_\-]*:(?:[A-Za-z0-9_\-%]|\.(?=[A-Za-z0-9_\-%]))*)
  | (?P<op>!=|<=|>=|=|<|>)
  | (?P<punct>[{}().*])
  | (?P<word>[A-Za-z]+)
""", re.VERBOSE)

_STRING_ESCAPES = {"\\": "\\", '"': '"', "n": "\n", "r": "\r", "t": "\t"}


class _Tok(NamedTuple):
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SparqlSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        for i, ch in enumerate(m.group()):
            if ch == "\n":
                line, line_start = line + 1, pos + i + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.prefixes = dict(DEFAULT_PREFIXES)

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, message, tok=None):
        tok = tok or self.tok
        return SparqlSyntaxError(message, tok.line, tok.col)

    def advance(self) -> _Tok:
        tok = self.tok
        self.i += 1
        return tok

    def is_word(self, word) -> bool:
        return self.tok.kind == "word" and self.tok.text.upper() == word

    def expect_word(self, word):
        if not self.is_word(word):
            raise self.error(f"expected {word}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def expect(self, kind, text=None):
        tok = self.tok
        if tok.kind != kind or (text is not None and tok.text != text):
            raise self.error(f"expected {text or kind}, found {tok.text or 'end of input'!r}")
        return self.advance()

    # grammar

    def query(self) -> SelectQuery:
        while self.is_word("PREFIX"):
            self.advance()
            tok = self.expect("pname")
            if not tok.text.endswith(":"):
                raise self.error("prefix declaration must end with ':'", tok)
            iri = self.expect("iri")
            self.prefixes[tok.text[:-1]] = iri.text[1:-1]
        self.expect_word("SELECT")
        distinct = False
        if self.is_word("DISTINCT"):
            self.advance()
            distinct = True
        variables: Optional[list[str]]
        if self.tok.kind == "punct" and self.tok.text == "*":
            self.advance()
            variables = None
        else:
            variables = []
            while self.tok.kind == "var":
                variables.append(self.advance().text[1:])
            if not variables:
                raise self.error("expected projection variables or '*'")
        if self.is_word("WHERE"):
            self.advance()
        self.expect("punct", "{")
        patterns, filters = self.group()
        self.expect("punct", "}")
        limit = None
        if self.is_word("LIMIT"):
            self.advance()
            tok = self.expect("integer")
            limit = int(tok.text)
            if limit < 0 or limit > 0xFFFFFFFF:
                raise self.error("LIMIT must be a u32", tok)
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r} after query")
        q = SelectQuery(variables, patterns, filters, distinct, limit,
                        {k: v for k, v in self.prefixes.items()})
        bound = set(q.pattern_variables())
        for name in variables or ():
            if name not in bound:
                raise UnboundVariable(f"projected variable ?{name} does not occur in the patterns")
        for f in filters:
            for node in (f.lhs, f.rhs):
                if isinstance(node, Variable) and node.name not in bound:
                    raise UnboundVariable(f"filter variable ?{node.name} does not occur in the patterns")
        return q

    def group(self):
        patterns, filters = [], []
        need_sep = False
        while not (self.tok.kind == "punct" and self.tok.text == "}"):
            if self.is_word("FILTER"):
                self.advance()
                filters.append(self.filter())
                need_sep = False
            elif self.tok.kind == "punct" and self.tok.text == ".":
                if not need_sep:
                    raise self.error("unexpected '.'")
                self.advance()
                need_sep = False
            else:
                if need_sep:
                    raise self.error("expected '.' between triple patterns")
                patterns.append(TriplePattern(self.node(), self.node(predicate=True), self.node()))
                need_sep = True
        return patterns, filters

    def filter(self) -> Filter:
        self.expect("punct", "(")
        tok = self.tok
        lhs = self.node()
        if not isinstance(lhs, Variable):
            raise self.error("FILTER left-hand side must be a variable", tok)
        op = self.expect("op").text
        rhs = self.node()
        self.expect("punct", ")")
        return Filter(lhs, op, rhs)

    def node(self, predicate=False) -> Node:
        tok = self.tok
        if tok.kind == "var":
            self.advance()
            return Variable(tok.text[1:])
        if tok.kind == "iri":
            self.advance()
            try:
                return Iri(tok.text[1:-1])
            except ValueError as exc:
                raise self.error(str(exc), tok) from None
        if tok.kind == "pname":
            self.advance()
            prefix, _, local = tok.text.partition(":")
            if prefix not in self.prefixes:
                raise UnknownPrefix(f"unknown prefix {prefix!r} at line {tok.line}, column {tok.col}")
            return Iri(self.prefixes[prefix] + local)
        if predicate and tok.kind == "word" and tok.text == "a":
            self.advance()
            return Iri(RDF + "type")
        if tok.kind == "string":
            self.advance()
            body = re.sub(r"\\(.)", lambda m: _STRING_ESCAPES.get(m.group(1), m.group(1)), tok.text[1:-1])
            return Literal(body)
        if tok.kind == "integer":
            self.advance()
            try:
                return Literal(tok.text, Datatype.INTEGER)
            except ValueError as exc:
                raise self.error(str(exc), tok) from None
        if tok.kind == "word" and tok.text in ("true", "false"):
            self.advance()
            return Literal(tok.text, Datatype.BOOLEAN)
        raise self.error(f"expected a term, found {tok.text or 'end of input'!r}")


def parse_query(text: str) -> SelectQuery:
    return _Parser(text).query()


# evaluation

def compare(a: Term, op: str, b: Term) -> bool:
    """
    Integers compare numerically; otherwise terms of the same kind compare
    by their serialization. Mixed kinds never satisfy any operator.
    """
    if isinstance(a, Literal) and isinstance(b, Literal):
        if a.datatype != b.datatype:
            return False
        if a.datatype == Datatype.INTEGER:
            x, y = int(a.lexical), int(b.lexical)
        else:
            x, y = a.n3(), b.n3()
    elif isinstance(a, Iri) and isinstance(b, Iri):
        x, y = a.n3(), b.n3()
    else:
        return False
    if op == "=":
        return x == y
    if op == "!=":
        return x != y
    if op == "<":
        return x < y
    if op == "<=":
        return x <= y
    if op == ">":
        return x > y
    if op == ">=":
        return x >= y
    raise ValueError(f"unknown comparison {op!r}")


def _resolve(node: Node, binding: dict):
    return binding[node.name] if isinstance(node, Variable) else node


def row_key(row) -> tuple:
    return tuple(t.n3() for t in row)


def evaluate(q: SelectQuery, store) -> ResultTable:
    with store.lock.read():
        solutions = [{}]
        for pattern in q.patterns:
            step = []
            for binding in solutions:
                bound = TriplePattern(*(
                    binding.get(x.name, x) if isinstance(x, Variable) else x for x in pattern
                ))
                for t in store.match_pattern(bound):
                    extended = dict(binding)
                    for node, value in zip(bound, t):
                        if isinstance(node, Variable):
                            extended[node.name] = value
                    step.append(extended)
            solutions = step
            if not solutions:
                break
    for f in q.filters:
        solutions = [b for b in solutions if compare(_resolve(f.lhs, b), f.op, _resolve(f.rhs, b))]
    header = q.header()
    rows = [tuple(b[name] for name in header) for b in solutions]
    if q.distinct:
        rows = list(set(rows))
    rows.sort(key=row_key)
    if q.limit is not None:
        rows = rows[:q.limit]
    return ResultTable(header, rows)


def query(store, text: str) -> ResultTable:
    return evaluate(parse_query(text), store)
