"""In-memory triple store with SPO, POS and OSP indexes."""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Iterable, Iterator, Optional

from .errors import NotFunctional
from .rdf import Iri, Term, Triple, parse_ntriples, to_ntriples
from .rdfizer import FUNCTIONAL
from .sparql import Variable


class RWLock:
    """Many readers or one writer."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    @contextmanager
    def read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if not self._readers:
                    self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


def _add(index, a, b, c):
    index.setdefault(a, {}).setdefault(b, set()).add(c)


def _discard(index, a, b, c):
    inner = index[a]
    leaf = inner[b]
    leaf.discard(c)
    if not leaf:
        del inner[b]
        if not inner:
            del index[a]


class TripleStore:
    def __init__(self, triples: Iterable[Triple] = (), functional=FUNCTIONAL):
        self.spo: dict = {}
        self.pos: dict = {}
        self.osp: dict = {}
        self._size = 0
        self.functional = frozenset(functional)
        self.lock = RWLock()
        for t in triples:
            self.insert(t)

    def __len__(self):
        return self._size

    def __contains__(self, t: Triple) -> bool:
        return t.object in self.spo.get(t.subject, {}).get(t.predicate, ())

    def __iter__(self) -> Iterator[Triple]:
        return iter(self.triples())

    def __eq__(self, other):
        if not isinstance(other, TripleStore):
            return NotImplemented
        return set(self.triples()) == set(other.triples())

    def triples(self) -> list[Triple]:
        return [Triple(s, p, o) for s, po in self.spo.items() for p, objs in po.items() for o in objs]

    # mutation

    def insert(self, t: Triple) -> bool:
        with self.lock.write():
            return self._insert(t)

    def _insert(self, t: Triple) -> bool:
        if t in self:
            return False
        s, p, o = t
        _add(self.spo, s, p, o)
        _add(self.pos, p, o, s)
        _add(self.osp, o, s, p)
        self._size += 1
        return True

    def remove(self, t: Triple) -> bool:
        with self.lock.write():
            return self._remove(t)

    def _remove(self, t: Triple) -> bool:
        if t not in self:
            return False
        s, p, o = t
        _discard(self.spo, s, p, o)
        _discard(self.pos, p, o, s)
        _discard(self.osp, o, s, p)
        self._size -= 1
        return True

    def upsert_functional(self, s: Iri, p: Iri, o: Term) -> Optional[Term]:
        """Make ``o`` the only value of (s, p); returns the previous value, if any."""
        if p not in self.functional:
            raise NotFunctional(f"{p} is not a functional property")
        with self.lock.write():
            old = sorted(self.spo.get(s, {}).get(p, ()), key=lambda term: term.n3())
            for value in old:
                self._remove(Triple(s, p, value))
            self._insert(Triple(s, p, o))
        return old[0] if old else None

    # lookup

    def objects(self, s: Iri, p: Iri) -> set:
        return set(self.spo.get(s, {}).get(p, ()))

    def value(self, s: Iri, p: Iri) -> Optional[Term]:
        objs = self.objects(s, p)
        return min(objs, key=lambda term: term.n3()) if objs else None

    def index_for(self, s=None, p=None, o=None) -> str:
        if s is not None:
            return "spo"
        if p is not None:
            return "pos"
        if o is not None:
            return "osp"
        return "spo"

    def match(self, s=None, p=None, o=None) -> list[Triple]:
        """Triples matching the bound positions; ``None`` is a wildcard."""
        with self.lock.read():
            return list(self._match(s, p, o))

    def _match(self, s, p, o):
        index = self.index_for(s, p, o)
        if index == "spo":
            subjects = [s] if s is not None else list(self.spo)
            for sv in subjects:
                po = self.spo.get(sv, {})
                preds = [p] if p is not None else list(po)
                for pv in preds:
                    objs = po.get(pv, ())
                    if o is not None:
                        if o in objs:
                            yield Triple(sv, pv, o)
                    else:
                        for ov in objs:
                            yield Triple(sv, pv, ov)
        elif index == "pos":
            os_ = self.pos.get(p, {})
            objects = [o] if o is not None else list(os_)
            for ov in objects:
                for sv in os_.get(ov, ()):
                    yield Triple(sv, p, ov)
        else:
            for sv, preds in self.osp.get(o, {}).items():
                for pv in preds:
                    yield Triple(sv, pv, o)

    def match_pattern(self, pattern) -> list[Triple]:
        """Match a TriplePattern; repeated variables must bind equal terms."""
        consts = [None if isinstance(x, Variable) else x for x in pattern]
        found = self.match(*consts)
        names = [x.name if isinstance(x, Variable) else None for x in pattern]
        if len({n for n in names if n}) == sum(1 for n in names if n):
            return found
        out = []
        for t in found:
            seen = {}
            if all(seen.setdefault(n, v) == v for n, v in zip(names, t) if n):
                out.append(t)
        return out

    # N-Triples

    def export_ntriples(self) -> str:
        with self.lock.read():
            return to_ntriples(self.triples())

    @classmethod
    def from_ntriples(cls, text: str) -> TripleStore:
        return cls(parse_ntriples(text))

    def import_ntriples(self, text: str) -> int:
        return sum(self.insert(t) for t in parse_ntriples(text))


def export_ntriples(store: TripleStore) -> str:
    return store.export_ntriples()
