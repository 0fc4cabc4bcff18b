"""Emit and parse the BDDL subset used for subtask init/goal conditions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

from .errors import BddlParseError, InvalidParam
from .predicates import ARITY, Predicate, format_predicate, make


def emit_bddl(task, domain: str = "taskworld") -> str:
    """Render ``task.init`` / ``task.goal`` as a BDDL problem document."""
    init = "\n".join(f"    {format_predicate(p)}" for p in task.init)
    goal = "\n".join(f"      {format_predicate(p)}" for p in task.goal)
    return (
        f"(define (problem {task.name})\n"
        f"  (:domain {domain})\n"
        f"  (:init\n{init}\n  )\n"
        f"  (:goal\n    (and\n{goal}\n    )\n  )\n"
        f")\n"
    )


@dataclass
class _Tok:
    text: str
    line: int
    col: int


def _tokenize(text: str) -> List[_Tok]:
    toks: List[_Tok] = []
    line, col, i = 1, 1, 0
    while i < len(text):
        ch = text[i]
        if ch == "\n":
            line, col, i = line + 1, 1, i + 1
            continue
        if ch.isspace():
            col, i = col + 1, i + 1
            continue
        if ch == ";":  # comment to end of line
            while i < len(text) and text[i] != "\n":
                i += 1
            continue
        if ch in "()":
            toks.append(_Tok(ch, line, col))
            col, i = col + 1, i + 1
            continue
        start, scol = i, col
        while i < len(text) and not text[i].isspace() and text[i] not in "();":
            i, col = i + 1, col + 1
        toks.append(_Tok(text[start:i], line, scol))
    return toks


Sexp = Union[_Tok, list]


def _read(toks: List[_Tok]) -> List[Sexp]:
    stack: List[Tuple[list, _Tok]] = []
    top: List[Sexp] = []
    cur = top
    for t in toks:
        if t.text == "(":
            new: list = []
            cur.append(new)
            stack.append((cur, t))
            cur = new
        elif t.text == ")":
            if not stack:
                raise BddlParseError("unexpected ')'", t.line, t.col)
            cur, _ = stack.pop()
        else:
            cur.append(t)
    if stack:
        _, opener = stack[-1]
        raise BddlParseError("unbalanced parentheses: '(' is never closed", opener.line, opener.col)
    return top


def _pos(x: Sexp) -> Tuple[int, int]:
    while isinstance(x, list):
        if not x:
            return (0, 0)
        x = x[0]
    return (x.line, x.col)


def _predicate(x: Sexp) -> Predicate:
    if not isinstance(x, list) or not x or not isinstance(x[0], _Tok):
        raise BddlParseError("expected a predicate", *_pos(x))
    head = x[0].text.lower()
    if head == "not":
        if len(x) != 2:
            raise BddlParseError("'not' takes exactly one predicate", x[0].line, x[0].col)
        return _predicate(x[1]).negate()
    args = []
    for a in x[1:]:
        if not isinstance(a, _Tok):
            raise BddlParseError("predicate arguments must be atoms", *_pos(a))
        args.append(a.text)
    if head not in ARITY:
        raise BddlParseError(f"unknown predicate {head!r}", x[0].line, x[0].col)
    try:
        return make(head, *args)
    except InvalidParam as exc:
        raise BddlParseError(str(exc), x[0].line, x[0].col) from None


def _conjunction(items: Sequence[Sexp]) -> Tuple[Predicate, ...]:
    out: List[Predicate] = []
    for it in items:
        if isinstance(it, list) and it and isinstance(it[0], _Tok) and it[0].text.lower() == "and":
            out.extend(_conjunction(it[1:]))
        else:
            out.append(_predicate(it))
    return tuple(out)


def parse_bddl(text: str) -> Tuple[Tuple[Predicate, ...], Tuple[Predicate, ...]]:
    """Return ``(init, goal)`` conjunctions from a BDDL document or bare sections."""
    forms = _read(_tokenize(text))
    sections = {}

    def visit(node: Sexp) -> None:
        if isinstance(node, list) and node and isinstance(node[0], _Tok):
            key = node[0].text.lower()
            if key in (":init", ":goal"):
                if key in sections:
                    raise BddlParseError(f"duplicate {key} section", node[0].line, node[0].col)
                sections[key] = _conjunction(node[1:])
                return
        if isinstance(node, list):
            for child in node:
                visit(child)

    for f in forms:
        visit(f)
    for key in (":init", ":goal"):
        if key not in sections:
            raise BddlParseError(f"missing {key} section", 1, 1)
        if not sections[key]:
            raise BddlParseError(f"empty {key} section", 1, 1)
    return sections[":init"], sections[":goal"]
