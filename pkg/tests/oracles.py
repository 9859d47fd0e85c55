"""Independent oracles used by the test suite.

The suspiciousness oracle evaluates each published formula directly with
exact rational arithmetic (floats only where a square root appears) and
realizes the zero-denominator convention by catching the division error,
rather than by predicating on counter values like the implementation does.
"""

from __future__ import annotations

import math
from fractions import Fraction


def oracle_suspiciousness(name: str, counters: tuple[int, int, int, int]) -> float:
    e_p, e_f, n_p, n_f = counters
    try:
        value = _formula(name, e_p, e_f, n_p, n_f)
    except ZeroDivisionError:
        return 0.0
    return float(value)


def _formula(name: str, ep: int, ef: int, np_: int, nf: int):
    R = Fraction
    if name == "Tarantula":
        failing_rate = R(ef, ef + nf)
        return failing_rate / (failing_rate + R(ep, ep + np_))
    if name == "Ochiai":
        return ef / math.sqrt((ef + ep) * (ef + nf))
    if name == "Jaccard":
        return R(ef, ef + ep + nf)
    if name == "SimpleMatching":
        return R(ef + np_, ef + ep + nf + np_)
    if name == "SorensenDice":
        return R(2 * ef, 2 * ef + ep + nf)
    if name == "Kulczynski1":
        return R(ef, ep + nf)
    if name == "RusselRao":
        return R(ef, ef + ep + nf + np_)
    if name == "RogersTanimoto":
        return R(ef + np_, ef + ep + 2 * nf + ep)
    if name == "M1":
        return R(ef + np_, ep + nf)
    if name == "M2":
        return R(ef, ef + np_ + 2 * ep + 2 * ef)
    if name == "Overlap":
        return R(ef, min(ef, ep, nf))
    if name == "Ochiai2":
        return (ef * np_) / math.sqrt((ef + ep) * (nf + np_) * (ef + np_) * (ep + nf))
    if name == "Dice":
        return R(2 * ef, ef + ep + nf)
    if name == "Ample":
        return abs(R(ef, ef + nf) - R(ep, ep + np_))
    if name == "Hamann":
        return R(ef + np_ - ep - nf, ef + ep + nf + np_)
    if name == "Zoltar":
        return R(ef, ef + ep + nf + R(10000 * nf * ep, ef))
    if name == "Goodman":
        return R(2 * ef - nf - ep, 2 * ef + nf + ep)
    if name == "Sokal":
        return R(2 * ef + 2 * ep, 2 * ef + 2 * ep + nf + np_)
    if name == "Hamming":
        return ef + np_
    if name == "Kulczynski2":
        return R(1, 2) * (R(ef, ef + nf) + R(ef, ef + np_))
    if name == "Euclid":
        return math.sqrt(ef + np_)
    if name == "Anderberg":
        return R(ef, ef + 2 * ep + 2 * nf)
    if name == "Wong1":
        return ef
    if name == "Wong2":
        return ef - ep
    if name == "Wong3":
        if ep <= 2:
            h = R(ep)
        elif ep <= 10:
            h = 2 + R(1, 10) * (ep - 2)
        else:
            h = R(28, 10) + R(1, 100) * (ep - 10)
        return ef - h
    raise KeyError(name)


def oracle_rogers_tanimoto_textbook(counters: tuple[int, int, int, int]) -> float:
    e_p, e_f, n_p, n_f = counters
    try:
        return float(Fraction(e_f + n_p, e_f + n_p + 2 * (n_f + e_p)))
    except ZeroDivisionError:
        return 0.0


def all_counter_tuples(max_passing: int, max_failing: int):
    """Every (e_p, e_f, n_p, n_f) with P <= max_passing, 1 <= F <= max_failing."""
    for total_p in range(0, max_passing + 1):
        for total_f in range(1, max_failing + 1):
            for e_p in range(0, total_p + 1):
                for e_f in range(0, total_f + 1):
                    yield (e_p, e_f, total_p - e_p, total_f - e_f)


def optimal_aucec_closed_form(n_lines: int, n_buggy: int) -> Fraction:
    """Exact area of the optimal step curve via direct trapezoid summation."""
    area = Fraction(0)
    prev_y = Fraction(0)
    for k in range(1, n_lines + 1):
        y = min(Fraction(k, n_buggy), Fraction(1))
        area += Fraction(1, n_lines) * (prev_y + y) / 2
        prev_y = y
    return area
