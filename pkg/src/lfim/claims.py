"""Textual claims about named parameters, e.g. ``3 < g < 4``, ``k < 0``, ``g/k > 10``.

Grammar::

    claim  := conj ("or" conj)*
    conj   := atom ("and" atom)*
    atom   := "not" atom | "(" claim ")" | term (cmp term)+
    term   := NAME ["/" NAME] | NUMBER
    cmp    := "<" | "<=" | ">" | ">="

A ratio with a zero denominator is undefined. Such grid points satisfy
neither a claim nor its negation under ``not``; they are reported through
:meth:`ClaimExpression.undefined_mask`.
"""

from __future__ import annotations

import operator
import re

import numpy as np

_TOKEN = re.compile(r"\s*(?:(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op><=|>=|<|>|/|\(|\)))")
_CMP = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}


class ClaimSyntaxError(ValueError):
    pass


def _tokenize(text: str) -> list[tuple[str, str]]:
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ClaimSyntaxError(f"unexpected character {text[pos:].strip()[:1]!r} in claim {text!r}")
        kind = m.lastgroup
        val = m.group(kind)
        if kind == "name" and val in ("and", "or", "not"):
            kind = val
        out.append((kind, val))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text: str, names: tuple[str, ...]):
        self.text = text
        self.names = names
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self, kind=None, val=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (val and tok[1] != val):
            want = val or kind or "token"
            got = tok[1] if tok[0] else "end of input"
            raise ClaimSyntaxError(f"expected {want!r}, got {got!r} in claim {self.text!r}")
        self.i += 1
        return tok

    def parse(self):
        node = self.claim()
        if self.peek()[0] is not None:
            raise ClaimSyntaxError(f"trailing input {self.peek()[1]!r} in claim {self.text!r}")
        return node

    def claim(self):
        node = self.conj()
        while self.peek()[0] == "or":
            self.take()
            node = ("or", node, self.conj())
        return node

    def conj(self):
        node = self.atom()
        while self.peek()[0] == "and":
            self.take()
            node = ("and", node, self.atom())
        return node

    def atom(self):
        kind, val = self.peek()
        if kind == "not":
            self.take()
            return ("not", self.atom())
        if val == "(":
            self.take()
            node = self.claim()
            self.take("op", ")")
            return node
        terms = [self.term()]
        ops = []
        while self.peek()[1] in _CMP:
            ops.append(self.take()[1])
            terms.append(self.term())
        if not ops:
            raise ClaimSyntaxError(f"claim {self.text!r} needs a comparison")
        return ("chain", terms, ops)

    def name(self):
        _, val = self.take("name")
        if val not in self.names:
            raise ClaimSyntaxError(f"unknown parameter {val!r} in claim {self.text!r}; known: {', '.join(self.names)}")
        return self.names.index(val)

    def term(self):
        if self.peek()[0] == "num":
            return ("num", float(self.take()[1]))
        j = self.name()
        if self.peek()[1] == "/":
            self.take()
            return ("ratio", j, self.name())
        return ("param", j)


def _term_values(term, pts):
    if term[0] == "num":
        return np.full(pts.shape[0], term[1])
    if term[0] == "param":
        return pts[:, term[1]]
    num, den = pts[:, term[1]], pts[:, term[2]]
    out = np.full(pts.shape[0], np.nan)
    nz = den != 0
    out[nz] = num[nz] / den[nz]
    return out


def _eval(node, pts):
    kind = node[0]
    if kind == "or":
        return _eval(node[1], pts) | _eval(node[2], pts)
    if kind == "and":
        return _eval(node[1], pts) & _eval(node[2], pts)
    if kind == "not":
        return ~_eval(node[1], pts) & ~_undefined(node[1], pts)
    _, terms, ops = node
    vals = [_term_values(t, pts) for t in terms]
    out = np.ones(pts.shape[0], dtype=bool)
    for a, op, b in zip(vals, ops, vals[1:]):
        with np.errstate(invalid="ignore"):
            out &= _CMP[op](a, b)
    return out & ~_undefined(node, pts)


def _undefined(node, pts):
    if node[0] in ("or", "and"):
        return _undefined(node[1], pts) | _undefined(node[2], pts)
    if node[0] == "not":
        return _undefined(node[1], pts)
    bad = np.zeros(pts.shape[0], dtype=bool)
    for t in node[1]:
        if t[0] == "ratio":
            bad |= pts[:, t[2]] == 0
    return bad


class ClaimExpression:
    """Parsed claim; callable on ``(G, p)`` points like :class:`lfim.engine.Claim`."""

    def __init__(self, text: str, param_names, label: str | None = None):
        self.text = text
        self.param_names = tuple(param_names)
        self.label = label or text
        self._tree = _Parser(text, self.param_names).parse()

    def __repr__(self):
        return f"ClaimExpression({self.text!r})"

    def mask(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != len(self.param_names):
            raise ValueError(f"claim over {self.param_names} got points with {pts.shape[1]} coordinates")
        return _eval(self._tree, pts)

    __call__ = mask

    def undefined_mask(self, points) -> np.ndarray:
        return _undefined(self._tree, np.atleast_2d(np.asarray(points, dtype=float)))

    def holds_at(self, theta) -> bool:
        return bool(self.mask(np.atleast_2d(np.asarray(theta, dtype=float)))[0])


def threshold_sweep(param: str, gammas, param_names) -> list[ClaimExpression]:
    """Claims ``param > gamma`` for each gamma."""
    return [ClaimExpression(f"{param} > {float(g)!r}", param_names) for g in gammas]
