"""Model formula parsing and term resolution.

A formula is a string ``"response ~ expression"``.  The expression side
supports the operators ``** : * / + - |`` with precedence in that order
(highest first), left-to-right association, parentheses for grouping,
``{...}`` blocks for element-wise arithmetic, and backticks to escape
non-syntactic variable names.  ``parse`` produces an AST; ``resolve``
applies the operator algebra and returns a canonical :class:`TermSet`.
"""

import itertools
from dataclasses import dataclass, field

from .errors import FormulaError

TRANSFORM_CALLS = ("scale", "center")
RESPONSE_CALLS = ("prop",)


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_SYMBOLS = ("**", "~", "+", "-", "*", "/", ":", "|", "(", ")", "{", "}", "[", "]", ",")


@dataclass
class Token:
    kind: str  # NAME | NUMBER | STRING | symbol literal | END
    value: object
    pos: int


def _is_name_start(ch):
    return ch.isalpha() or ch in "_."


def _is_name_char(ch):
    return ch.isalnum() or ch in "_."


def tokenize(text):
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if text.startswith("**", i):
            tokens.append(Token("**", "**", i))
            i += 2
            continue
        if ch in "~+-*/:|(){}[],":
            tokens.append(Token(ch, ch, i))
            i += 1
            continue
        if ch == "`":
            end = text.find("`", i + 1)
            if end < 0:
                raise FormulaError(f"unterminated backtick starting at position {i}")
            name = text[i + 1 : end]
            if not name:
                raise FormulaError(f"empty backticked name at position {i}")
            tokens.append(Token("NAME", name, i))
            i = end + 1
            continue
        if ch == "'":
            end = text.find("'", i + 1)
            if end < 0:
                raise FormulaError(f"unterminated quote starting at position {i}")
            tokens.append(Token("STRING", text[i + 1 : end], i))
            i = end + 1
            continue
        if ch.isdigit():
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            literal = text[i:j]
            try:
                value = float(literal)
            except ValueError:
                raise FormulaError(f"bad number {literal!r} at position {i}") from None
            tokens.append(Token("NUMBER", value, i))
            i = j
            continue
        if _is_name_start(ch):
            j = i
            while j < n and _is_name_char(text[j]):
                j += 1
            tokens.append(Token("NAME", text[i:j], i))
            i = j
            continue
        raise FormulaError(f"unexpected character {ch!r} at position {i}")
    tokens.append(Token("END", None, n))
    return tokens


# ---------------------------------------------------------------------------
# AST nodes
# ---------------------------------------------------------------------------


@dataclass
class Variable:
    name: str


@dataclass
class Literal:
    value: float


@dataclass
class Call:
    func: str
    args: list


@dataclass
class Brace:
    expr: object  # arithmetic subtree of Variable/Literal/Arith nodes


@dataclass
class Arith:
    op: str
    left: object
    right: object


@dataclass
class Binary:
    op: str
    left: object
    right: object


@dataclass
class ResponseNode:
    name: str
    level: str | None = None
    prop: tuple | None = None  # (successes, trials) variable names


@dataclass
class FormulaAst:
    response: ResponseNode
    rhs: object


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind):
        tok = self.advance()
        if tok.kind != kind:
            raise FormulaError(
                f"expected {kind!r} at position {tok.pos}, found {tok.value!r}"
            )
        return tok

    # response := NAME ['[' level ']'] | 'prop' '(' NAME ',' NAME ')'
    def parse_response(self):
        tok = self.peek()
        if tok.kind != "NAME":
            raise FormulaError("formula must start with a response variable")
        name = self.advance().value
        if self.peek().kind == "(":
            if name not in RESPONSE_CALLS:
                raise FormulaError(
                    f"only {RESPONSE_CALLS} calls are allowed on the response side"
                )
            self.advance()
            first = self.expect("NAME").value
            self.expect(",")
            second = self.expect("NAME").value
            self.expect(")")
            return ResponseNode(name=f"prop({first}, {second})", prop=(first, second))
        if self.peek().kind == "[":
            self.advance()
            tok = self.advance()
            if tok.kind not in ("NAME", "STRING", "NUMBER"):
                raise FormulaError(f"bad response level at position {tok.pos}")
            level = tok.value if tok.kind != "NUMBER" else _format_number(tok.value)
            self.expect("]")
            return ResponseNode(name=name, level=str(level))
        return ResponseNode(name=name)

    # pipe := sum ('|' sum)?
    def parse_pipe(self):
        node = self.parse_sum()
        if self.peek().kind == "|":
            self.advance()
            rhs = self.parse_sum()
            node = Binary("|", node, rhs)
            if self.peek().kind == "|":
                raise FormulaError("'|' cannot be nested inside another '|'")
        return node

    def parse_sum(self):
        node = self.parse_prod()
        while self.peek().kind in ("+", "-"):
            op = self.advance().kind
            node = Binary(op, node, self.parse_prod())
        return node

    def parse_prod(self):
        node = self.parse_interaction()
        while self.peek().kind in ("*", "/"):
            op = self.advance().kind
            node = Binary(op, node, self.parse_interaction())
        return node

    def parse_interaction(self):
        node = self.parse_power()
        while self.peek().kind == ":":
            self.advance()
            node = Binary(":", node, self.parse_power())
        return node

    def parse_power(self):
        node = self.parse_primary()
        while self.peek().kind == "**":
            self.advance()
            node = Binary("**", node, self.parse_primary())
        return node

    def parse_primary(self):
        tok = self.peek()
        if tok.kind == "NUMBER":
            self.advance()
            return Literal(tok.value)
        if tok.kind == "NAME":
            self.advance()
            if self.peek().kind == "(":
                return self.parse_call(tok.value)
            return Variable(tok.value)
        if tok.kind == "(":
            self.advance()
            node = self.parse_pipe()
            self.expect(")")
            return node
        if tok.kind == "{":
            self.advance()
            node = self.parse_arith()
            self.expect("}")
            return Brace(node)
        raise FormulaError(f"unexpected {tok.value!r} at position {tok.pos}")

    def parse_call(self, func):
        self.expect("(")
        args = [self.parse_arith()]
        while self.peek().kind == ",":
            self.advance()
            args.append(self.parse_arith())
        self.expect(")")
        return Call(func, args)

    # Arithmetic inside braces and call arguments: + - * / ** over names,
    # numbers and parentheses.  No formula operators.
    def parse_arith(self):
        node = self.parse_arith_term()
        while self.peek().kind in ("+", "-"):
            op = self.advance().kind
            node = Arith(op, node, self.parse_arith_term())
        return node

    def parse_arith_term(self):
        node = self.parse_arith_power()
        while self.peek().kind in ("*", "/"):
            op = self.advance().kind
            node = Arith(op, node, self.parse_arith_power())
        return node

    def parse_arith_power(self):
        node = self.parse_arith_primary()
        while self.peek().kind == "**":
            self.advance()
            node = Arith("**", node, self.parse_arith_primary())
        return node

    def parse_arith_primary(self):
        tok = self.advance()
        if tok.kind == "NUMBER":
            return Literal(tok.value)
        if tok.kind == "NAME":
            return Variable(tok.value)
        if tok.kind == "(":
            node = self.parse_arith()
            self.expect(")")
            return node
        raise FormulaError(
            f"unexpected {tok.value!r} in arithmetic block at position {tok.pos}"
        )


def parse(text):
    """Parse a formula string into a :class:`FormulaAst`."""
    if not isinstance(text, str) or not text.strip():
        raise FormulaError("empty formula")
    if text.count("~") != 1:
        raise FormulaError("formula must contain exactly one '~'")
    tokens = tokenize(text)
    parser = _Parser(tokens)
    response = parser.parse_response()
    parser.expect("~")
    rhs = parser.parse_pipe()
    tail = parser.peek()
    if tail.kind != "END":
        raise FormulaError(f"unexpected trailing {tail.value!r} at position {tail.pos}")
    return FormulaAst(response=response, rhs=rhs)


def _format_number(value):
    return str(int(value)) if float(value).is_integer() else repr(value)


def arith_text(node):
    """Canonical single-space rendering of an arithmetic subtree."""
    if isinstance(node, Variable):
        return node.name
    if isinstance(node, Literal):
        return _format_number(node.value)
    if isinstance(node, Arith):
        return f"{arith_text(node.left)} {node.op} {arith_text(node.right)}"
    raise FormulaError("bad arithmetic node")


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Component:
    """One factor of a term: a variable, a whitelisted call, or a brace block."""

    kind: str  # var | call | brace
    name: str  # display name, e.g. "x", "scale(x)", "{x + y}"
    var: str | None = None  # argument variable for calls
    expr: object = field(default=None, compare=False, hash=False)

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Term:
    components: tuple  # canonically ordered Component tuple; empty = intercept

    @property
    def kind(self):
        if not self.components:
            return "intercept"
        if len(self.components) > 1:
            return "interaction"
        return self.components[0].kind

    @property
    def order(self):
        return len(self.components)

    @property
    def name(self):
        if not self.components:
            return "Intercept"
        return ":".join(c.name for c in self.components)

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class GroupTerm:
    expr_terms: tuple  # Term tuple for the left of '|'
    expr_intercept: bool
    factor: str  # grouping variable name

    @property
    def name(self):
        parts = (["1"] if self.expr_intercept else []) + [t.name for t in self.expr_terms]
        return "+".join(parts) + "|" + self.factor

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class TermSet:
    response: ResponseNode
    common: tuple
    group: tuple
    has_intercept: bool

    def __str__(self):
        parts = ["1"] if self.has_intercept else ["0"]
        parts += [t.name for t in self.common]
        parts += ["(" + g.name + ")" for g in self.group]
        return f"{self.response.name} ~ " + " + ".join(parts)


def _component_from_node(node):
    if isinstance(node, Variable):
        return Component("var", node.name, var=node.name)
    if isinstance(node, Brace):
        return Component("brace", "{" + arith_text(node.expr) + "}", expr=node.expr)
    if isinstance(node, Call):
        if node.func not in TRANSFORM_CALLS:
            raise FormulaError(
                f"unknown function {node.func!r}; available: {', '.join(TRANSFORM_CALLS)}"
            )
        if len(node.args) != 1 or not isinstance(node.args[0], Variable):
            raise FormulaError(f"{node.func}() takes a single variable argument")
        arg = node.args[0].name
        return Component("call", f"{node.func}({arg})", var=arg, expr=node)
    raise FormulaError("expression cannot be used as a model term")


def _merge_components(*component_tuples):
    seen = []
    for comps in component_tuples:
        for c in comps:
            if c not in seen:
                seen.append(c)
    return tuple(sorted(seen, key=lambda c: c.name))


class _EvalSet:
    """Ordered term collection threaded through operator evaluation."""

    def __init__(self, terms=(), groups=(), intercept=None):
        self.terms = list(terms)
        self.groups = list(groups)
        self.intercept = intercept  # None untouched, True forced on, False off

    def add_term(self, term):
        if term not in self.terms:
            self.terms.append(term)

    def require_plain(self, op):
        if self.groups:
            raise FormulaError(f"group terms cannot appear inside {op!r}")
        if self.intercept is not None:
            raise FormulaError(f"numeric literals cannot appear inside {op!r}")


def _eval(node):
    if isinstance(node, (Variable, Call, Brace)):
        return _EvalSet(terms=[Term((_component_from_node(node),))])
    if isinstance(node, Literal):
        if node.value == 1:
            return _EvalSet(intercept=True)
        if node.value == 0:
            return _EvalSet(intercept=False)
        raise FormulaError(
            f"numeric literal {_format_number(node.value)} has no meaning as a term"
        )
    if isinstance(node, Binary):
        return _OP_TABLE[node.op](node)
    if isinstance(node, Arith):
        raise FormulaError("arithmetic must be wrapped in {...} to act as a term")
    raise FormulaError("malformed formula expression")


def _eval_plus(node):
    left = _eval(node.left)
    right = _eval(node.right)
    out = _EvalSet(terms=left.terms, groups=left.groups, intercept=left.intercept)
    for t in right.terms:
        out.add_term(t)
    for g in right.groups:
        if g not in out.groups:
            out.groups.append(g)
    if right.intercept is not None:
        out.intercept = right.intercept
    return out


def _eval_minus(node):
    left = _eval(node.left)
    right = _eval(node.right)
    terms = [t for t in left.terms if t not in right.terms]
    groups = [g for g in left.groups if g not in right.groups]
    intercept = left.intercept
    if right.intercept is not None:
        intercept = not right.intercept  # "- 1" removes, "- 0" restores
    return _EvalSet(terms=terms, groups=groups, intercept=intercept)


def _eval_interaction(node):
    left = _eval(node.left)
    right = _eval(node.right)
    left.require_plain(":")
    right.require_plain(":")
    out = _EvalSet()
    for lt in left.terms:
        for rt in right.terms:
            out.add_term(Term(_merge_components(lt.components, rt.components)))
    return out


def _eval_star(node):
    left = _eval(node.left)
    right = _eval(node.right)
    left.require_plain("*")
    right.require_plain("*")
    out = _EvalSet(terms=left.terms)
    for t in right.terms:
        out.add_term(t)
    for lt in left.terms:
        for rt in right.terms:
            out.add_term(Term(_merge_components(lt.components, rt.components)))
    return out


def _eval_slash(node):
    left = _eval(node.left)
    right = _eval(node.right)
    left.require_plain("/")
    right.require_plain("/")
    out = _EvalSet(terms=left.terms)
    all_left = _merge_components(*(t.components for t in left.terms))
    for rt in right.terms:
        out.add_term(Term(_merge_components(all_left, rt.components)))
    return out


def _eval_power(node):
    left = _eval(node.left)
    left.require_plain("**")
    if not isinstance(node.right, Literal) or not float(node.right.value).is_integer() \
            or node.right.value < 1:
        raise FormulaError("the right operand of '**' must be a positive integer")
    n = int(node.right.value)
    out = _EvalSet()
    for k in range(1, n + 1):
        for combo in itertools.combinations(left.terms, k):
            out.add_term(Term(_merge_components(*(t.components for t in combo))))
    return out


def _flatten_group_factors(node):
    if isinstance(node, Variable):
        return [node.name]
    if isinstance(node, Binary) and node.op == "+":
        return _flatten_group_factors(node.left) + _flatten_group_factors(node.right)
    raise FormulaError(
        "the right-hand side of '|' must be a grouping variable or a '+' of them"
    )


def _eval_pipe(node):
    if isinstance(node.left, Binary) and node.left.op == "-":
        raise FormulaError(
            "'-' directly on the left of '|' is not supported; simplify the "
            "expression before the '|'"
        )
    left = _eval(node.left)
    if left.groups:
        raise FormulaError("'|' cannot be nested inside another '|'")
    factors = _flatten_group_factors(node.right)
    intercept = left.intercept is not False  # implicit intercept on the left
    appearance = {t: i for i, t in enumerate(left.terms)}
    terms = tuple(sorted(left.terms, key=lambda t: (t.order, appearance[t])))
    out = _EvalSet()
    for factor in factors:
        gt = GroupTerm(expr_terms=terms, expr_intercept=intercept, factor=factor)
        if gt not in out.groups:
            out.groups.append(gt)
    return out


_OP_TABLE = {
    "+": _eval_plus,
    "-": _eval_minus,
    ":": _eval_interaction,
    "*": _eval_star,
    "/": _eval_slash,
    "**": _eval_power,
    "|": _eval_pipe,
}


def _merge_group_terms(groups):
    # Group terms sharing a grouping factor are pooled into one block: the
    # coefficient priors are independent either way, and pooling keeps every
    # group-level column (and its SD parameter) uniquely named.
    merged = {}
    for g in groups:
        if g.factor not in merged:
            merged[g.factor] = [list(g.expr_terms), g.expr_intercept]
        else:
            entry = merged[g.factor]
            for t in g.expr_terms:
                if t not in entry[0]:
                    entry[0].append(t)
            entry[1] = entry[1] or g.expr_intercept
    return tuple(
        GroupTerm(expr_terms=tuple(terms), expr_intercept=icpt, factor=factor)
        for factor, (terms, icpt) in merged.items()
    )


def resolve(ast):
    """Resolve a parsed formula into a canonical :class:`TermSet`."""
    result = _eval(ast.rhs)
    has_intercept = result.intercept is not False
    order_index = {t: i for i, t in enumerate(result.terms)}
    common = tuple(sorted(result.terms, key=lambda t: (t.order, order_index[t])))
    group = _merge_group_terms(result.groups)
    return TermSet(
        response=ast.response,
        common=common,
        group=group,
        has_intercept=has_intercept,
    )


def parse_terms(text):
    """Convenience wrapper: parse then resolve."""
    return resolve(parse(text))


def collect_variables(terms):
    """All data variables a TermSet touches, in first-use order."""
    seen = []

    def _add(name):
        if name not in seen:
            seen.append(name)

    resp = terms.response
    if resp.prop is not None:
        _add(resp.prop[0])
        _add(resp.prop[1])
    else:
        _add(resp.name)

    def _component_vars(component):
        if component.kind == "var":
            return [component.var]
        if component.kind == "call":
            return [component.var]
        return _arith_vars(component.expr)

    def _arith_vars(node):
        if isinstance(node, Variable):
            return [node.name]
        if isinstance(node, Literal):
            return []
        return _arith_vars(node.left) + _arith_vars(node.right)

    for term in terms.common:
        for comp in term.components:
            for v in _component_vars(comp):
                _add(v)
    for gterm in terms.group:
        for term in gterm.expr_terms:
            for comp in term.components:
                for v in _component_vars(comp):
                    _add(v)
        _add(gterm.factor)
    return seen
