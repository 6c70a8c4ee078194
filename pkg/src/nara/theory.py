"""Discrete verification of the draft-distribution factorization.

On a fully enumerable categorical model, the prior-conditioned chunk
distribution factors exactly into the base chain's probability times a
telescoping correction ratio, and that ratio is 1 when the priors equal the
chunk and the two conditional tables coincide. Everything here is exact
arithmetic on strictly positive tables, so the identities can be checked to
floating-point precision.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

ENUMERATION_CAP = 30000


@dataclass
class ConditionalTable:
    """AR conditional p(next symbol | last `order` symbols) as an explicit table.

    Prefix windows shorter than `order` are left-padded with symbol 0.
    """

    alphabet: int
    order: int
    table: np.ndarray  # [alphabet**order, alphabet]

    def __post_init__(self):
        want = (self.alphabet**self.order, self.alphabet)
        if self.table.shape != want:
            raise ValueError(f"table shape {self.table.shape} does not match {want}")
        if np.any(self.table <= 0.0):
            raise ValueError("table entries must be strictly positive")
        rows = self.table.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-12):
            raise ValueError("conditional rows must sum to 1")

    @classmethod
    def random(cls, alphabet: int, order: int, rng: np.random.Generator) -> "ConditionalTable":
        raw = rng.gamma(2.0, 1.0, size=(alphabet**order, alphabet)) + 0.05
        return cls(alphabet=alphabet, order=order, table=raw / raw.sum(axis=1, keepdims=True))

    @classmethod
    def uniform(cls, alphabet: int, order: int) -> "ConditionalTable":
        return cls(
            alphabet=alphabet,
            order=order,
            table=np.full((alphabet**order, alphabet), 1.0 / alphabet),
        )

    def _row(self, prefix) -> int:
        window = list(prefix)[-self.order :]
        window = [0] * (self.order - len(window)) + window
        idx = 0
        for s in window:
            idx = idx * self.alphabet + int(s)
        return idx

    def cond(self, symbol: int, prefix) -> float:
        """p(symbol | prefix), windowed to the table order."""
        return float(self.table[self._row(prefix), int(symbol)])

    def joint(self, seq) -> float:
        """Probability of a whole sequence under the chain, start padded with 0s."""
        p = 1.0
        for t, s in enumerate(seq):
            p *= self.cond(s, seq[:t])
        return p


# The two roles a table plays in the identities below.
DiscreteAr = ConditionalTable
DiscreteQ = ConditionalTable


@dataclass
class RegularizerValue:
    log_r: float
    factors: list


def _check_chunk(qtab: ConditionalTable, ptab: ConditionalTable, priors, chunk):
    if len(chunk) < 1:
        raise ValueError("chunk must contain at least one symbol")
    if len(priors) < len(chunk) - 1:
        raise ValueError("need at least len(chunk)-1 priors")
    if qtab.alphabet != ptab.alphabet or qtab.order != ptab.order:
        raise ValueError("tables must share alphabet and order")


def q_product(qtab: ConditionalTable, ptab: ConditionalTable, context, priors, chunk) -> float:
    """Chunk probability under the prior-conditioned factorization.

    First factor is the base conditional at the chunk start; every later
    factor conditions on the context with priors standing in for the chunk
    values before it. The last prior is never consumed.
    """
    _check_chunk(qtab, ptab, priors, chunk)
    context = list(context)
    priors = list(priors)
    prob = ptab.cond(chunk[0], context)
    for l in range(1, len(chunk)):
        prob *= qtab.cond(chunk[l], context + priors[:l])
    if prob <= 0.0:
        raise ValueError("zero-probability factor")
    return prob


def regularizer(qtab: ConditionalTable, ptab: ConditionalTable, context, priors, chunk) -> RegularizerValue:
    """Telescoping correction ratio between the prior-conditioned and base chains.

    Factors pair base-chain prefix probabilities against prior-substituted
    joints; their log-sum is 0 exactly when priors equal the chunk and the
    tables coincide.
    """
    _check_chunk(qtab, ptab, priors, chunk)
    context = list(context)
    priors = list(priors)
    chunk = list(chunk)
    factors = []
    log_r = 0.0
    for l in range(1, len(chunk)):
        p_prev = ptab.joint(context + chunk[:l])
        q_prev = qtab.joint(context + priors[:l])
        q_with = qtab.joint(context + priors[:l] + [chunk[l]])
        p_with = ptab.joint(context + chunk[: l + 1])
        if min(p_prev, q_prev, q_with, p_with) <= 0.0:
            raise ValueError("zero-probability factor")
        f1 = p_prev / q_prev
        f2 = q_with / p_with
        factors.extend([f1, f2])
        log_r += math.log(f1) + math.log(f2)
    return RegularizerValue(log_r=log_r, factors=factors)


def chunk_log_prob(ptab: ConditionalTable, context, chunk) -> float:
    """log p(chunk | context) under the base chain."""
    context = list(context)
    logp = 0.0
    for l, s in enumerate(chunk):
        logp += math.log(ptab.cond(s, context + list(chunk[:l])))
    return logp


def objective_decomposition(
    qtab: ConditionalTable,
    ptab: ConditionalTable,
    context,
    priors,
    length: int,
):
    """Exact expectations under the base chain over all chunks of the given length.

    Returns (E[-log p], E[-log R], E[-log q]). With priors=None the priors
    track each enumerated chunk (the extremum configuration). The identity
    E[-log q] = E[-log p] + E[-log R] holds pointwise; the middle term has no
    fixed sign, so no inequality is asserted.
    """
    paths = qtab.alphabet**length
    if paths > ENUMERATION_CAP:
        raise ValueError(f"enumeration of {paths} chunks exceeds cap {ENUMERATION_CAP}")
    e_nlp = 0.0
    e_nlr = 0.0
    e_nlq = 0.0
    total_weight = 0.0
    for chunk in itertools.product(range(qtab.alphabet), repeat=length):
        chunk = list(chunk)
        m = chunk if priors is None else list(priors)
        w = math.exp(chunk_log_prob(ptab, context, chunk))
        lq = math.log(q_product(qtab, ptab, context, m, chunk))
        lp = chunk_log_prob(ptab, context, chunk)
        lr = regularizer(qtab, ptab, context, m, chunk).log_r
        e_nlp -= w * lp
        e_nlr -= w * lr
        e_nlq -= w * lq
        total_weight += w
    if abs(total_weight - 1.0) > 1e-9:
        raise AssertionError(f"enumeration weights sum to {total_weight}, not 1")
    if abs(e_nlq - (e_nlp + e_nlr)) > 1e-10:
        raise AssertionError("expectation identity violated")
    return e_nlp, e_nlr, e_nlq
