"""Endorsement policies: parsing the textual grammar, compiling expressions to
pure evaluators over a per-organization register file, and recording
endorsement verification results.

Grammar (documented in docs/policy.md):

    expr    := term ('|' term)*
    term    := factor ('&' factor)*
    factor  := principal | nofm | '(' expr ')'
    principal := ORG ['.' ROLE]            e.g. Org1, Org2.Admin
    nofm    := INT '-outof-' INT 'orgs'    expands over the first M configured orgs

A bare organization defaults to the peer role. Policies are monotone by
construction: AND, OR, and N-out-of only; negation is a syntax error. That
monotonicity is what makes stop-on-satisfied scheduling sound.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Callable, Sequence, Union

from .errors import ConfigError
from .identity import EncodedId, Role, decode_id


@dataclass(frozen=True)
class Principal:
    org: str
    role: Role


@dataclass(frozen=True)
class And:
    children: tuple["PolicyExpr", ...]


@dataclass(frozen=True)
class Or:
    children: tuple["PolicyExpr", ...]


@dataclass(frozen=True)
class NOutOf:
    n: int
    children: tuple["PolicyExpr", ...]


PolicyExpr = Union[Principal, And, Or, NOutOf]


class PolicySyntaxError(ValueError):
    def __init__(self, position: int, message: str):
        super().__init__(f"policy syntax error at {position}: {message}")
        self.position = position


_TOKEN = re.compile(
    r"\s*(?:(?P<nofm>(\d+)-outof-(\d+)\s+orgs)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)?)"
    r"|(?P<op>[&|()]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise PolicySyntaxError(pos, f"unexpected character {text[pos:].lstrip()[0]!r}")
        if m.group("nofm"):
            tokens.append(("nofm", (int(m.group(2)), int(m.group(3))), m.start()))
        elif m.group("ident"):
            tokens.append(("ident", m.group("ident"), m.start()))
        else:
            tokens.append(("op", m.group("op"), m.start()))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, tokens, org_names: Sequence[str], default_role: Role):
        self.tokens = tokens
        self.idx = 0
        self.org_names = list(org_names)
        self.org_set = set(org_names)
        self.default_role = default_role

    def peek(self):
        return self.tokens[self.idx]

    def next(self):
        tok = self.tokens[self.idx]
        self.idx += 1
        return tok

    def parse(self) -> PolicyExpr:
        expr = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise PolicySyntaxError(pos, f"unexpected {value!r}")
        return expr

    def expr(self) -> PolicyExpr:
        arms = [self.term()]
        while self.peek()[:2] == ("op", "|"):
            self.next()
            arms.append(self.term())
        return arms[0] if len(arms) == 1 else Or(tuple(arms))

    def term(self) -> PolicyExpr:
        factors = [self.factor()]
        while self.peek()[:2] == ("op", "&"):
            self.next()
            factors.append(self.factor())
        return factors[0] if len(factors) == 1 else And(tuple(factors))

    def factor(self) -> PolicyExpr:
        kind, value, pos = self.next()
        if kind == "op" and value == "(":
            inner = self.expr()
            kind, value, pos = self.next()
            if (kind, value) != ("op", ")"):
                raise PolicySyntaxError(pos, "expected ')'")
            return inner
        if kind == "nofm":
            n, m = value
            if m > len(self.org_names):
                raise ConfigError(f"{n}-outof-{m} orgs needs {m} organizations, config has {len(self.org_names)}")
            if not 1 <= n <= m:
                raise ConfigError(f"{n}-outof-{m} is not a valid threshold")
            leaves = tuple(Principal(name, self.default_role) for name in self.org_names[:m])
            return NOutOf(n, leaves)
        if kind == "ident":
            org, dot, role_name = value.partition(".")
            if org not in self.org_set:
                raise ConfigError(f"unknown organization {org!r} in policy")
            if dot:
                try:
                    role = Role[role_name.upper()]
                except KeyError:
                    raise ConfigError(f"unknown role {role_name!r} in policy") from None
            else:
                role = self.default_role
            return Principal(org, role)
        raise PolicySyntaxError(pos, "expected a principal, N-outof-M, or '('")


def parse_policy(text: str, org_names: Sequence[str], default_role: Role = Role.PEER) -> PolicyExpr:
    """Parse a policy expression, validating every referenced org and role
    against the network config. N-out-of is preserved as a node."""
    return _Parser(_tokenize(text), org_names, default_role).parse()


def principals_of(expr: PolicyExpr) -> frozenset[Principal]:
    if isinstance(expr, Principal):
        return frozenset((expr,))
    return frozenset(itertools.chain.from_iterable(principals_of(c) for c in expr.children))


def eval_expr(expr: PolicyExpr, valid: set[tuple[str, Role]]) -> bool:
    """Direct AST evaluation over a set of endorsing principals. Kept separate
    from the compiled path so the two can check each other."""
    if isinstance(expr, Principal):
        return (expr.org, expr.role) in valid
    if isinstance(expr, And):
        results = [eval_expr(c, valid) for c in expr.children]
        return all(results)
    if isinstance(expr, Or):
        results = [eval_expr(c, valid) for c in expr.children]
        return any(results)
    results = [eval_expr(c, valid) for c in expr.children]
    return sum(results) >= expr.n


class RegisterFile:
    """One register per organization, one bit per role. A set bit means a
    valid endorsement from that principal has been recorded for the current
    transaction; the file is cleared between transactions."""

    def __init__(self, num_orgs: int):
        self._bits = [0] * num_orgs
        self.unknown_principals = 0

    def clear(self) -> None:
        for i in range(len(self._bits)):
            self._bits[i] = 0

    def record_result(self, endorser_id: EncodedId, valid: bool) -> None:
        """Set the (org, role) bit only for a valid endorsement; unknown
        principals are counted and ignored."""
        try:
            org_index, role, _ = decode_id(endorser_id)
        except ValueError:
            self.unknown_principals += 1
            return
        if org_index >= len(self._bits):
            self.unknown_principals += 1
            return
        if valid:
            self._bits[org_index] |= 1 << int(role)

    def is_set(self, org_index: int, role: Role) -> bool:
        return bool(self._bits[org_index] >> int(role) & 1)


@dataclass(frozen=True)
class CompiledPolicy:
    """A chaincode's policy as a pure function of the register file; all
    sub-expressions evaluate together, with no sequential evaluation cost."""

    cc_id: int
    evaluate: Callable[[RegisterFile], bool]
    principals: frozenset[tuple[int, Role]]  # (org index, role) bits read


def compile_policy(cc_id: int, expr: PolicyExpr, org_indices: dict[str, int]) -> CompiledPolicy:
    def build(node: PolicyExpr) -> Callable[[RegisterFile], bool]:
        if isinstance(node, Principal):
            try:
                org_index = org_indices[node.org]
            except KeyError:
                raise ConfigError(f"organization {node.org!r} not in network config") from None
            role = node.role
            return lambda regs: regs.is_set(org_index, role)
        fns = tuple(build(c) for c in node.children)
        if isinstance(node, And):
            return lambda regs: all(fn(regs) for fn in fns)
        if isinstance(node, Or):
            return lambda regs: any(fn(regs) for fn in fns)
        n = node.n
        return lambda regs: sum(fn(regs) for fn in fns) >= n

    bits = frozenset((org_indices[p.org], p.role) for p in principals_of(expr))
    return CompiledPolicy(cc_id, build(expr), bits)


def evaluate(compiled: CompiledPolicy, regs: RegisterFile) -> bool:
    return compiled.evaluate(regs)
