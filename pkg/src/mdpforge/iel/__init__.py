"""The interface expression language (IEL).

Observation programs map a state ``s`` to a feature vector; reward programs
map a transition ``(s, a, sp)`` to a scalar. Both are a sequence of
``let`` bindings followed by a single ``return``.
"""

from .ast import Apply, FieldRef, Index, Let, Literal, Node, Var, VectorLiteral, node_count
from .bundle import BundleError, InterfaceProgram, join_bundle, split_bundle
from .checker import (
    MAX_OBS_DIM,
    OBSERVATION,
    REWARD,
    SCALAR,
    ActionSpec,
    CheckedProgram,
    CheckError,
    FieldSpec,
    Shape,
    StateSchema,
    check,
    vector,
)
from .evaluator import EvalFault, eval_obs, eval_reward, evaluate_batch
from .parser import IELSyntaxError, SyntaxIssue, parse, parse_expr
from .printer import pretty, pretty_expr

GRAMMAR_SUMMARY = """\
IEL grammar (whitespace-insensitive, '#' starts a comment):
  program := ("let" NAME "=" expr ";")* "return" expr
  expr    := number | [expr, ...] | s.FIELD | sp.FIELD | a | NAME
           | -expr | expr (+ - * /) expr | expr (< <= > >= ==) expr
           | expr[index] | BUILTIN(expr, ...) | (expr)
  precedence (loosest first): comparisons, + -, * /, unary minus
  builtins: abs min max clip(x,lo,hi) exp tanh sqrt one_hot(i,N) concat(v...)
            norm(v) dot(u,v) sum(v) mean(v) select(c,a,b) and or not neg
  scalars broadcast against vectors; vectors combine elementwise only with
  vectors of the same length; [x, v, ...] flattens its items into one vector.
  comparisons return 0 or 1; and=min, or=max, not(x)=1-x.
  one_hot needs a literal length N; its index is rounded and clamped to [0, N-1].
  vector indexes are rounded to the nearest integer and must be in range.
  dividing by a value with magnitude below 1e-12 is a fault, as is any
  non-finite output or sqrt of a negative number.
Observation programs read only s and return a vector of at most 512 features.
Reward programs read s, a and sp and return a scalar.
Bundle format:
  --- observation ---
  <observation program>
  --- reward ---
  <reward program>
"""

__all__ = [
    "ActionSpec",
    "Apply",
    "BundleError",
    "CheckError",
    "CheckedProgram",
    "EvalFault",
    "FieldRef",
    "FieldSpec",
    "GRAMMAR_SUMMARY",
    "IELSyntaxError",
    "Index",
    "InterfaceProgram",
    "Let",
    "Literal",
    "MAX_OBS_DIM",
    "Node",
    "OBSERVATION",
    "REWARD",
    "SCALAR",
    "Shape",
    "StateSchema",
    "SyntaxIssue",
    "Var",
    "VectorLiteral",
    "check",
    "eval_obs",
    "eval_reward",
    "evaluate_batch",
    "join_bundle",
    "node_count",
    "parse",
    "parse_expr",
    "pretty",
    "pretty_expr",
    "split_bundle",
    "vector",
]
