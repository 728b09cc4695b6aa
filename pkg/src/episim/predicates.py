"""Tiny attribute predicates: ``age < 18``, ``is_school == 1 and county == 3``.

Used by disease entry rules and intervention selectors. A predicate is a
conjunction of ``<attr> <op> <literal>`` clauses; ``*`` or an empty string is
the catch-all.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

_OPS = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
    "!=": operator.ne,
}
_CLAUSE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(<=|>=|==|!=|<|>)\s*(.+?)\s*$")


class PredicateError(ValueError):
    pass


def _literal(text: str) -> Any:
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


@dataclass(frozen=True)
class Clause:
    attribute: str
    op: str
    value: Any

    def __str__(self) -> str:
        return f"{self.attribute} {self.op} {self.value!r}"


@dataclass(frozen=True)
class Predicate:
    clauses: tuple[Clause, ...] = ()

    @classmethod
    def parse(cls, text: str | None) -> "Predicate":
        if text is None:
            return cls()
        text = str(text).strip()
        if text in ("", "*"):
            return cls()
        clauses = []
        for part in re.split(r"\s+and\s+", text):
            m = _CLAUSE.match(part)
            if not m:
                raise PredicateError(f"cannot parse predicate clause {part!r}")
            clauses.append(Clause(m.group(1), m.group(2), _literal(m.group(3))))
        return cls(tuple(clauses))

    @property
    def is_catch_all(self) -> bool:
        return not self.clauses

    @property
    def attributes(self) -> set[str]:
        return {c.attribute for c in self.clauses}

    def __call__(self, attrs: Mapping[str, Any]) -> bool:
        for c in self.clauses:
            if c.attribute not in attrs:
                return False
            try:
                if not _OPS[c.op](attrs[c.attribute], c.value):
                    return False
            except TypeError:
                return False
        return True

    def mask(self, columns: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        """Vectorised evaluation over columnar attributes of ``n`` entities."""
        out = np.ones(n, dtype=bool)
        for c in self.clauses:
            col = columns.get(c.attribute)
            if col is None:
                return np.zeros(n, dtype=bool)
            col = np.asarray(col)
            if col.dtype.kind in "biuf" and isinstance(c.value, str):
                return np.zeros(n, dtype=bool)
            with np.errstate(invalid="ignore"):
                out &= np.asarray(_OPS[c.op](col, c.value), dtype=bool)
        return out

    def __str__(self) -> str:
        return " and ".join(map(str, self.clauses)) or "*"
