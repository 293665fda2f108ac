"""
Conductivity coefficient fields.

A field is either a constant or a closed-form expression over the cell
coordinates x, y. Expressions are parsed by a small recursive-descent parser
with the precedence ^ > unary minus > * / > + -; ^ is right-associative and
everything else left-associative.
"""

import logging
import math
import re
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from core.errors import ExpressionEvaluationError, ExpressionSyntaxError


logger = logging.getLogger(__name__)

BOUNDS_GRID = 256

FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
}
VARIABLES = ("x", "y")
CONSTANTS = {"pi": math.pi}


# Expression tree -----------------------------------------------------------

@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Constant:
    name: str


@dataclass(frozen=True)
class Negate:
    operand: "Node"


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Number, Variable, Constant, Negate, BinaryOp, Call]


# Tokenizer -----------------------------------------------------------------

TOKEN_PATTERN = re.compile(
    r"\s*(?:(?P<number>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def tokenize(text: str) -> List[Token]:
    """
    Split expression text into tokens, each tagged with its byte offset.

    Raises:
        ExpressionSyntaxError: On a character that starts no token
    """
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        match = TOKEN_PATTERN.match(text, pos)
        if match is None or match.end() == pos:
            stripped = len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionSyntaxError(f"unexpected character {text[pos + stripped]!r}", pos + stripped)
        kind = match.lastgroup
        tokens.append(Token(kind, match.group(kind), match.start(kind)))
        pos = match.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


class _Parser:
    """Recursive-descent parser over a token list."""

    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.index = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def _advance(self) -> Token:
        token = self.current
        self.index += 1
        return token

    def _expect(self, text: str) -> Token:
        if self.current.text != text:
            found = self.current.text or "end of input"
            raise ExpressionSyntaxError(f"expected {text!r}, found {found!r}", self.current.offset)
        return self._advance()

    def parse(self) -> Node:
        node = self._expression()
        if self.current.kind != "end":
            raise ExpressionSyntaxError(f"unexpected {self.current.text!r}", self.current.offset)
        return node

    def _expression(self) -> Node:
        node = self._term()
        while self.current.text in ("+", "-"):
            op = self._advance().text
            node = BinaryOp(op, node, self._term())
        return node

    def _term(self) -> Node:
        node = self._unary()
        while self.current.text in ("*", "/"):
            op = self._advance().text
            node = BinaryOp(op, node, self._unary())
        return node

    def _unary(self) -> Node:
        if self.current.text == "-":
            self._advance()
            return Negate(self._unary())
        return self._power()

    def _power(self) -> Node:
        base = self._primary()
        if self.current.text == "^":
            self._advance()
            return BinaryOp("^", base, self._unary())
        return base

    def _primary(self) -> Node:
        token = self.current
        if token.kind == "number":
            self._advance()
            return Number(float(token.text))
        if token.kind == "name":
            self._advance()
            if self.current.text == "(":
                return self._call(token)
            if token.text in VARIABLES:
                return Variable(token.text)
            if token.text in CONSTANTS:
                return Constant(token.text)
            if token.text in FUNCTIONS:
                raise ExpressionSyntaxError(f"function {token.text!r} needs an argument", token.offset)
            raise ExpressionSyntaxError(f"unknown identifier {token.text!r}", token.offset)
        if token.text == "(":
            self._advance()
            node = self._expression()
            self._expect(")")
            return node
        found = token.text or "end of input"
        raise ExpressionSyntaxError(f"expected a value, found {found!r}", token.offset)

    def _call(self, name: Token) -> Node:
        if name.text not in FUNCTIONS:
            raise ExpressionSyntaxError(f"unknown function {name.text!r}", name.offset)
        self._expect("(")
        args = [self._expression()]
        while self.current.text == ",":
            self._advance()
            args.append(self._expression())
        self._expect(")")
        if len(args) != 1:
            raise ExpressionSyntaxError(
                f"function {name.text!r} takes 1 argument, got {len(args)}", name.offset
            )
        return Call(name.text, args[0])


def to_text(node: Node) -> str:
    """Print a tree fully parenthesized so that parsing it back is lossless."""
    if isinstance(node, Number):
        return repr(node.value)
    if isinstance(node, (Variable, Constant)):
        return node.name
    if isinstance(node, Negate):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, BinaryOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    return f"{node.func}({to_text(node.arg)})"


def _evaluate(node: Node, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if isinstance(node, Number):
        return np.full(np.broadcast(x, y).shape, node.value)
    if isinstance(node, Variable):
        return np.broadcast_to(x if node.name == "x" else y, np.broadcast(x, y).shape).astype(float)
    if isinstance(node, Constant):
        return np.full(np.broadcast(x, y).shape, CONSTANTS[node.name])
    if isinstance(node, Negate):
        return -_evaluate(node.operand, x, y)
    if isinstance(node, Call):
        return FUNCTIONS[node.func](_evaluate(node.arg, x, y))
    left = _evaluate(node.left, x, y)
    right = _evaluate(node.right, x, y)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if node.op == "/":
        if np.any(right == 0.0):
            raise ExpressionEvaluationError("division by zero")
        return left / right
    return np.power(left, right)


# Fields --------------------------------------------------------------------

@dataclass(frozen=True)
class CoefficientField:
    """
    Scalar conductivity field on the unit cell.

    Attributes:
        tree: Parsed expression tree (a Number for constants)
        source: Text the field was built from
    """
    tree: Node
    source: str

    @property
    def is_constant(self) -> bool:
        return isinstance(self.tree, Number)

    @property
    def constant_value(self) -> Optional[float]:
        return self.tree.value if isinstance(self.tree, Number) else None

    def __call__(self, x, y) -> np.ndarray:
        return eval_field(self, x, y)


@dataclass(frozen=True)
class SigmaPair:
    """
    Matrix and inclusion conductivities.

    Attributes:
        sigma1: Matrix (exterior) material
        sigma2: Inclusion material; None in the perforated case
    """
    sigma1: CoefficientField
    sigma2: Optional[CoefficientField] = None


@dataclass
class BoundsReport:
    """Outcome of verify_bounds on the probe grid."""
    ok: bool
    min_value: float
    max_value: float
    worst_point: Tuple[float, float]

    def describe(self) -> str:
        status = "within bounds" if self.ok else "bound violation"
        return (
            f"{status}: range [{self.min_value:.6g}, {self.max_value:.6g}], "
            f"worst at ({self.worst_point[0]:.4f}, {self.worst_point[1]:.4f})"
        )


def parse_expression(text: str) -> CoefficientField:
    """
    Parse an expression over x, y, pi with sin, cos, exp.

    Raises:
        ExpressionSyntaxError: With the byte offset of the failure
    """
    return CoefficientField(_Parser(text).parse(), text)


def constant_field(value: float) -> CoefficientField:
    return CoefficientField(Number(float(value)), repr(float(value)))


def make_field(value: Union[float, int, str, CoefficientField]) -> CoefficientField:
    """Build a field from a number, an expression string or an existing field."""
    if isinstance(value, CoefficientField):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return constant_field(value)
    return parse_expression(str(value))


def eval_field(field: CoefficientField, x, y) -> np.ndarray:
    """
    Evaluate a field at points; x and y may be scalars or arrays.

    Raises:
        ExpressionEvaluationError: On division by zero or non-finite results
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(all="ignore"):
        values = _evaluate(field.tree, x, y)
    if not np.all(np.isfinite(values)):
        raise ExpressionEvaluationError(f"non-finite value of {field.source!r}")
    return values


def verify_bounds(field: CoefficientField, lower: float, upper: float) -> BoundsReport:
    """
    Probe lower <= field <= upper on a 256 x 256 grid over the cell.

    The worst point is the one furthest outside the interval, or the
    minimum when the field stays inside.
    """
    grid = np.linspace(0.0, 1.0, BOUNDS_GRID)
    xx, yy = np.meshgrid(grid, grid, indexing="ij")
    values = eval_field(field, xx, yy)
    excess = np.maximum(lower - values, values - upper)
    worst = np.unravel_index(int(np.argmax(excess)), values.shape)
    if excess[worst] <= 0.0:
        worst = np.unravel_index(int(np.argmin(values)), values.shape)
    return BoundsReport(
        ok=bool(np.all(excess <= 0.0)),
        min_value=float(values.min()),
        max_value=float(values.max()),
        worst_point=(float(xx[worst]), float(yy[worst])),
    )


def check_sigma_pair(sigma: SigmaPair, lower: float, upper: float) -> List[BoundsReport]:
    """
    Verify both fields; warn on violations, abort on nonpositive values.

    Raises:
        ExpressionEvaluationError: If a field is not strictly positive on the grid
    """
    reports = []
    for name, field in (("sigma1", sigma.sigma1), ("sigma2", sigma.sigma2)):
        if field is None:
            continue
        report = verify_bounds(field, lower, upper)
        if report.min_value <= 0.0:
            raise ExpressionEvaluationError(f"{name} is not positive: {report.describe()}")
        if not report.ok:
            logger.warning("%s %s", name, report.describe())
        reports.append(report)
    return reports
