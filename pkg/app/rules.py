from __future__ import annotations

import math
import re

import numpy as np
from sympy import Symbol, exp, lambdify, pi, sqrt
from sympy.parsing.sympy_parser import (
    convert_xor,
    implicit_multiplication_application,
    parse_expr,
    standard_transformations,
)

from app.errors import RuleError
from app.spectrum import SineSpectrum

_N = Symbol("n", positive=True, integer=True)
_LOCALS = {"n": _N, "exp": exp, "pi": pi, "sqrt": sqrt}
_TRANSFORMS = standard_transformations + (convert_xor, implicit_multiplication_application)

_RULE_RE = re.compile(r"^\s*d_?n\s*=\s*(.+?)\s*$")
# "sin(pi x)", "0.5 sin(3 pi x)", "-2*sin(2*pi*x)"
_SINE_TERM_RE = re.compile(
    r"([+-]?)\s*(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)?\s*\*?\s*sin\s*\(\s*(\d*)\s*\*?\s*pi\s*\*?\s*x\s*\)"
)
_ALLOWED_CHARS = re.compile(r"^[\s0-9.eE+\-*/^()npixsqrta]*$")


def is_mismatch_rule(text: str) -> bool:
    return bool(_RULE_RE.match(text or ""))


def evaluate_rule(text: str, truncation: int) -> np.ndarray:
    """
    "d_n = 1/n" -> array (d_1..d_N). Grammar: + - * / ^ ** exp sqrt pi, variable n.
    """
    m = _RULE_RE.match(text or "")
    body = (m.group(1) if m else (text or "")).strip()
    if not body:
        raise RuleError("empty coefficient rule")
    if not _ALLOWED_CHARS.match(body):
        raise RuleError(f"unsupported characters in rule: {body!r}")
    try:
        expr = parse_expr(body, local_dict=_LOCALS, transformations=_TRANSFORMS, evaluate=True)
    except Exception as exc:
        raise RuleError(f"cannot parse rule {body!r}: {exc}") from exc
    extra = expr.free_symbols - {_N}
    if extra:
        raise RuleError(f"rule {body!r} uses unknown symbols: {sorted(str(s) for s in extra)}")
    fn = lambdify(_N, expr, modules="numpy")
    n = np.arange(1, truncation + 1, dtype=float)
    with np.errstate(all="ignore"):
        values = np.broadcast_to(np.asarray(fn(n), dtype=float), n.shape).copy()
    if not np.all(np.isfinite(values)):
        bad = int(np.argmax(~np.isfinite(values))) + 1
        raise RuleError(f"rule {body!r} is not finite at n={bad}")
    return values


def parse_sine_combination(text: str, truncation: int) -> SineSpectrum:
    """
    "sin(pi x) + 0.5 sin(3 pi x)" -> spectrum in the e_n basis (sin(k pi x) = e_k / sqrt(2)).
    """
    src = (text or "").strip()
    if not src:
        raise RuleError("empty target expression")
    coefficients = np.zeros(truncation)
    pos = 0
    for m in _SINE_TERM_RE.finditer(src):
        if src[pos : m.start()].strip():
            raise RuleError(f"cannot parse {src[pos:m.start()]!r} in {src!r}")
        sign = -1.0 if m.group(1) == "-" else 1.0
        amplitude = float(m.group(2)) if m.group(2) else 1.0
        k = int(m.group(3)) if m.group(3) else 1
        if k < 1:
            raise RuleError(f"sine frequency must be >= 1 in {src!r}")
        if k > truncation:
            raise RuleError(f"sin({k} pi x) exceeds the truncation N={truncation}")
        coefficients[k - 1] += sign * amplitude / math.sqrt(2.0)
        pos = m.end()
    if pos == 0 or src[pos:].strip():
        raise RuleError(f"cannot parse target {src!r}")
    return SineSpectrum(coefficients)
