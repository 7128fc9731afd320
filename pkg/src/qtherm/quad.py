"""Adaptive Simpson quadrature for smooth (scalar or array valued) integrands."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import QuadratureFailure


def adaptive_simpson(f: Callable[[float], np.ndarray], a: float, b: float, tol: float = 1e-10,
                     max_depth: int = 40, max_evals: int = 200_000):
    """Integrate f over [a, b] with Richardson-corrected adaptive Simpson.

    Raises QuadratureFailure when the evaluation budget is exhausted.
    """
    if a == b:
        return np.zeros_like(np.asarray(f(a)))
    evals = 0

    def fe(x):
        nonlocal evals
        evals += 1
        if evals > max_evals:
            raise QuadratureFailure(f"adaptive Simpson exceeded {max_evals} evaluations")
        return np.asarray(f(x))

    def simpson(fa, fm, fb, a_, b_):
        return (b_ - a_) / 6.0 * (fa + 4.0 * fm + fb)

    fa, fb = fe(a), fe(b)
    m = 0.5 * (a + b)
    fm = fe(m)
    whole = simpson(fa, fm, fb, a, b)
    total = np.zeros_like(whole)
    # explicit stack keeps summation order deterministic (left to right)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    pieces = []
    while stack:
        a_, b_, fa_, fm_, fb_, whole_, tol_, depth = stack.pop()
        m_ = 0.5 * (a_ + b_)
        lm, rm = 0.5 * (a_ + m_), 0.5 * (m_ + b_)
        flm, frm = fe(lm), fe(rm)
        left = simpson(fa_, flm, fm_, a_, m_)
        right = simpson(fm_, frm, fb_, m_, b_)
        delta = left + right - whole_
        err = float(np.max(np.abs(delta)))
        if err <= 15.0 * tol_ or depth >= max_depth:
            if depth >= max_depth and err > 15.0 * tol_:
                raise QuadratureFailure("adaptive Simpson reached maximum depth")
            pieces.append((a_, left + right + delta / 15.0))
        else:
            stack.append((m_, b_, fm_, frm, fb_, right, 0.5 * tol_, depth + 1))
            stack.append((a_, m_, fa_, flm, fm_, left, 0.5 * tol_, depth + 1))
    for _, val in sorted(pieces, key=lambda p: p[0]):
        total = total + val
    return total


def composite_simpson(f: Callable[[float], np.ndarray], a: float, b: float, n: int):
    """Fixed-step composite Simpson rule with n (even) panels."""
    if n % 2:
        n += 1
    xs = np.linspace(a, b, n + 1)
    vals = [np.asarray(f(x)) for x in xs]
    h = (b - a) / n
    acc = vals[0] + vals[-1]
    for i in range(1, n):
        acc = acc + (4.0 if i % 2 else 2.0) * vals[i]
    return acc * h / 3.0
