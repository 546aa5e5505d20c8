"""RDF terms, triples and N-Triples text."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Union

XSD = "http://www.w3.org/2001/XMLSchema#"
RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"

_SCHEME = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:")
_IRI_FORBIDDEN = re.compile(r'[\x00-\x20<>"{}|^`\\]')
_INT64 = (-(2 ** 63), 2 ** 63 - 1)


class Datatype(enum.Enum):
    STRING = "string"
    INTEGER = "integer"
    BOOLEAN = "boolean"

    @property
    def iri(self) -> str:
        return XSD + self.value


@dataclass(frozen=True)
class Iri:
    value: str

    def __post_init__(self):
        if not _SCHEME.match(self.value) or _IRI_FORBIDDEN.search(self.value):
            raise ValueError(f"not an absolute IRI: {self.value!r}")

    def n3(self) -> str:
        return f"<{self.value}>"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Literal:
    lexical: str
    datatype: Datatype = Datatype.STRING

    def __post_init__(self):
        if self.datatype == Datatype.INTEGER:
            if not re.fullmatch(r"[+-]?\d+", self.lexical):
                raise ValueError(f"bad integer literal {self.lexical!r}")
            value = int(self.lexical)
            if not _INT64[0] <= value <= _INT64[1]:
                raise ValueError(f"integer literal {self.lexical} outside signed 64-bit range")
            # canonical lexical form keeps equality numeric
            object.__setattr__(self, "lexical", str(value))
        elif self.datatype == Datatype.BOOLEAN and self.lexical not in ("true", "false"):
            raise ValueError(f"bad boolean literal {self.lexical!r}")

    @classmethod
    def integer(cls, value: int) -> Literal:
        return cls(str(int(value)), Datatype.INTEGER)

    @classmethod
    def boolean(cls, value: bool) -> Literal:
        return cls("true" if value else "false", Datatype.BOOLEAN)

    def to_python(self):
        if self.datatype == Datatype.INTEGER:
            return int(self.lexical)
        if self.datatype == Datatype.BOOLEAN:
            return self.lexical == "true"
        return self.lexical

    def n3(self) -> str:
        quoted = '"' + _escape(self.lexical) + '"'
        if self.datatype == Datatype.STRING:
            return quoted
        return f"{quoted}^^<{self.datatype.iri}>"

    def __str__(self):
        return self.lexical


Term = Union[Iri, Literal]


@dataclass(frozen=True)
class Triple:
    subject: Iri
    predicate: Iri
    object: Term

    def __post_init__(self):
        if not isinstance(self.subject, Iri) or not isinstance(self.predicate, Iri):
            raise TypeError("subject and predicate must be IRIs")
        if not isinstance(self.object, (Iri, Literal)):
            raise TypeError(f"object must be an IRI or literal, got {self.object!r}")

    def n3(self) -> str:
        return f"{self.subject.n3()} {self.predicate.n3()} {self.object.n3()} ."

    def __iter__(self):
        return iter((self.subject, self.predicate, self.object))


def term_key(term: Term) -> str:
    return term.n3()


def triple_key(t: Triple) -> tuple[str, str, str]:
    return (t.subject.n3(), t.predicate.n3(), t.object.n3())


def sort_triples(triples: Iterable[Triple]) -> list[Triple]:
    return sorted(triples, key=triple_key)


_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}
_UNESCAPES = {"\\": "\\", '"': '"', "n": "\n", "r": "\r", "t": "\t"}


def _escape(text: str) -> str:
    return "".join(_ESCAPES.get(c, c) for c in text)


def _unescape(text: str) -> str:
    return re.sub(r"\\(.)", lambda m: _UNESCAPES[m.group(1)], text)


def to_ntriples(triples: Iterable[Triple]) -> str:
    lines = sorted({t.n3() for t in triples})
    return "".join(line + "\n" for line in lines)


_IRI_RE = r"<([^<>\"{}|^`\\\x00-\x20]*)>"
_LIT_RE = r'"((?:[^"\\\n\r]|\\[\\"nrt])*)"(?:\^\^<([^>]*)>)?'
_LINE = re.compile(rf"^\s*{_IRI_RE}\s+{_IRI_RE}\s+(?:{_IRI_RE}|{_LIT_RE})\s*\.\s*$")
_DATATYPES = {dt.iri: dt for dt in Datatype}


def parse_ntriples(text: str) -> list[Triple]:
    out = []
    # only LF (optionally CRLF) ends a statement; other Unicode breaks are literal content
    for lineno, line in enumerate(text.split("\n"), 1):
        line = line.removesuffix("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        m = _LINE.match(line)
        if m is None:
            raise ValueError(f"line {lineno}: not an N-Triples statement: {line!r}")
        s, p, o_iri, lex, dt = m.groups()
        if o_iri is not None:
            obj = Iri(o_iri)
        else:
            if dt is not None and dt not in _DATATYPES:
                raise ValueError(f"line {lineno}: unsupported datatype <{dt}>")
            obj = Literal(_unescape(lex), _DATATYPES[dt] if dt else Datatype.STRING)
        out.append(Triple(Iri(s), Iri(p), obj))
    return out
