"""Self-contained PASS/FAIL suites: analytic gradients vs finite differences,
and the discrete factorization identities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ar, theory
from .numeric import (
    DenseLayer,
    GaussianHead,
    finite_difference_gradient,
    gaussian_log_density,
    gaussian_log_density_grad,
    max_relative_error,
)
from .priors import PriorParams, take_window
from .confidence import ConfParams, _conf_bce_grads, label_chunk
from .training import TrainingSample, joint_loss, joint_terms

GRAD_TOL = 1e-4
FD_DELTA = 1e-5


@dataclass
class CheckResult:
    name: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual < self.tol


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def _check_gaussian_head(seed: int) -> float:
    rng = _rng(seed)
    worst = 0.0
    for _ in range(10):
        x, mu, lam = rng.normal(size=3)
        head = GaussianHead.from_raw(mu, lam)
        dx, dmu, dlam = gaussian_log_density_grad(x, head)
        analytic = {"x": np.array(dx), "mu": np.array(dmu), "lam": np.array(dlam)}
        params = {"x": np.array(x), "mu": np.array(mu), "lam": np.array(lam)}

        def f(p):
            return gaussian_log_density(float(p["x"]), GaussianHead.from_raw(float(p["mu"]), float(p["lam"])))

        fd = finite_difference_gradient(f, params, FD_DELTA)
        worst = max(worst, max_relative_error(analytic, fd))
    return worst


def _check_dense(seed: int) -> float:
    rng = _rng(seed)
    worst = 0.0
    for _ in range(10):
        layer = DenseLayer.init(4, 3, rng)
        x = rng.normal(size=4)
        target = rng.normal(size=3)
        y = layer.forward(x)
        dy = 2.0 * (y - target)
        dw, db, _ = layer.backward(x, dy)
        params = {"weight": layer.weight, "bias": layer.bias}

        def f(p):
            out = p["weight"] @ x + p["bias"]
            return float(np.sum((out - target) ** 2))

        fd = finite_difference_gradient(f, params, FD_DELTA)
        worst = max(worst, max_relative_error({"weight": dw, "bias": db}, fd))
    return worst


def _check_lstm_sequence(seed: int) -> float:
    from .lstm import LstmCell, lstm_sequence, lstm_sequence_backward

    rng = _rng(seed)
    worst = 0.0
    for _ in range(10):
        cell = LstmCell.init(3, 4, rng)
        xs = rng.normal(size=(5, 3))
        w = rng.normal(size=(5, 4))
        h0 = rng.normal(size=4)
        c0 = rng.normal(size=4)

        hs, tape = lstm_sequence(cell, xs, h0, c0)
        dwx, dwh, db, dx, dh0, dc0 = lstm_sequence_backward(cell, tape, w.copy())
        analytic = {"wx": dwx, "wh": dwh, "b": db, "xs": dx, "h0": dh0, "c0": dc0}
        params = {"wx": cell.wx, "wh": cell.wh, "b": cell.b, "xs": xs, "h0": h0, "c0": c0}

        def f(p):
            trial = LstmCell(wx=p["wx"], wh=p["wh"], b=p["b"])
            out, _ = lstm_sequence(trial, p["xs"], p["h0"], p["c0"])
            return float(np.sum(out * w))

        fd = finite_difference_gradient(f, params, FD_DELTA)
        worst = max(worst, max_relative_error(analytic, fd))
    return worst


def _small_ar(rng, hidden=4, layers=2) -> ar.ArParams:
    params = ar.ArParams.init(hidden, layers, rng)
    for arr in params.parameters().values():
        arr *= 0.6
    return params


def _check_sequence_nll(seed: int) -> float:
    worst = 0.0
    for s in range(5):
        rng = _rng((seed, s))
        params = _small_ar(rng)
        seq = rng.normal(size=7)
        _, grads = ar.sequence_nll_grad(params, seq)
        fd = finite_difference_gradient(lambda _p: ar.sequence_nll(params, seq), params.parameters(), FD_DELTA)
        worst = max(worst, max_relative_error(grads, fd))
    return worst


def _check_draft_inputs(seed: int) -> float:
    """Gradient of a draft-segment functional wrt the prior inputs."""
    rng = _rng(seed)
    worst = 0.0
    for _ in range(5):
        params = _small_ar(rng)
        context = rng.normal(size=6)
        priors = rng.normal(size=4)
        targets = rng.normal(size=4)
        state = ar.warmup(params, context)

        def value(m):
            heads = ar.draft_pass(params, state, m)
            return sum(gaussian_log_density(t, h) for t, h in zip(targets, heads))

        tape = ar.draft_pass_tape(params, state, priors)
        grads = params.zero_grads()
        dmean = np.empty(3)
        dlog = np.empty(3)
        for k in range(3):
            _, dmu, dlv = gaussian_log_density_grad(targets[k + 1], tape.segment.heads[k])
            dmean[k] = dmu
            dlog[k] = dlv
        dinputs, _ = ar.backward_segment(params, tape.segment, dmean, dlog, grads)
        # The first head and the final prior never touch the fed inputs.
        analytic = {"priors": np.concatenate([dinputs, [0.0]])}

        pbox = {"priors": priors}
        fd = finite_difference_gradient(lambda p: value(p["priors"]), pbox, FD_DELTA)
        worst = max(worst, max_relative_error(analytic, fd))
    return worst


def _check_joint_loss(seed: int) -> float:
    worst = 0.0
    for s in range(5):
        rng = _rng((seed, 77, s))
        ar_params = _small_ar(rng)
        prior_params = PriorParams.init(6, 4, rng)
        seq = np.sin(0.7 * np.arange(10)) + 0.1 * rng.normal(size=10)
        samples = [TrainingSample(0, 5, 4), TrainingSample(0, 7, 3)]
        loss, g_ar, g_prior, drafts = joint_loss(ar_params, prior_params, [seq], samples, rng)

        def f(_p):
            total = 0.0
            for smp, d in zip(samples, drafts):
                t1, t2 = joint_terms(ar_params, prior_params, seq, smp, d)
                total += (t1 + t2) / len(samples)
            return total

        merged_params = {f"ar.{k}": v for k, v in ar_params.parameters().items()}
        merged_params.update({f"prior.{k}": v for k, v in prior_params.parameters().items()})
        merged_grads = {f"ar.{k}": v for k, v in g_ar.items()}
        merged_grads.update({f"prior.{k}": v for k, v in g_prior.items()})
        fd = finite_difference_gradient(f, merged_params, FD_DELTA)
        worst = max(worst, max_relative_error(merged_grads, fd))
        if not math.isfinite(loss):
            return math.inf
    return worst


def _check_confidence_bce(seed: int) -> float:
    rng = _rng(seed)
    worst = 0.0
    for _ in range(5):
        conf = ConfParams.init(6, 3, rng, hidden=5)
        feats = rng.normal(size=(4, 9))
        labels = label_chunk(rng.normal(size=(4, 3)), 0.0)
        _, grads = _conf_bce_grads(conf, feats, labels)

        def f(_p):
            from .confidence import binary_cross_entropy, confidence_batch_scores

            return binary_cross_entropy(confidence_batch_scores(conf, feats), labels)

        fd = finite_difference_gradient(f, conf.parameters(), FD_DELTA)
        worst = max(worst, max_relative_error(grads, fd))
    return worst


GRAD_CHECKS = {
    "gaussian_head": _check_gaussian_head,
    "dense_layer": _check_dense,
    "lstm_sequence": _check_lstm_sequence,
    "sequence_nll": _check_sequence_nll,
    "draft_pass_inputs": _check_draft_inputs,
    "joint_loss": _check_joint_loss,
    "confidence_bce": _check_confidence_bce,
}


def run_grad_checks(seed: int = 0, registry: dict | None = None) -> list[CheckResult]:
    registry = GRAD_CHECKS if registry is None else registry
    return [CheckResult(name, float(fn(seed)), GRAD_TOL) for name, fn in registry.items()]


def _theory_identity(seed: int) -> float:
    rng = _rng((seed, 8))
    worst = 0.0
    for _ in range(100):
        s = 3
        order = 2
        ptab = theory.ConditionalTable.random(s, order, rng)
        qtab = theory.ConditionalTable.random(s, order, rng)
        length = int(rng.integers(1, 5))
        context = [int(v) for v in rng.integers(0, s, size=3)]
        chunk = [int(v) for v in rng.integers(0, s, size=length)]
        priors = [int(v) for v in rng.integers(0, s, size=length)]
        lq = math.log(theory.q_product(qtab, ptab, context, priors, chunk))
        lp = theory.chunk_log_prob(ptab, context, chunk)
        lr = theory.regularizer(qtab, ptab, context, priors, chunk).log_r
        worst = max(worst, abs(lq - lp - lr))
    return worst


def _theory_extremum(seed: int) -> float:
    rng = _rng((seed, 9))
    worst = 0.0
    for _ in range(50):
        s = 3
        tab = theory.ConditionalTable.random(s, 2, rng)
        length = int(rng.integers(1, 5))
        context = [int(v) for v in rng.integers(0, s, size=2)]
        chunk = [int(v) for v in rng.integers(0, s, size=length)]
        reg = theory.regularizer(tab, tab, context, chunk, chunk)
        worst = max(worst, abs(reg.log_r))
    return worst


def _theory_enumeration(seed: int) -> float:
    """q_product vs a path-by-path joint enumeration, plus normalization."""
    import itertools

    rng = _rng((seed, 10))
    worst = 0.0
    for _ in range(5):
        s = 3
        ptab = theory.ConditionalTable.random(s, 2, rng)
        qtab = theory.ConditionalTable.random(s, 2, rng)
        context = [int(v) for v in rng.integers(0, s, size=2)]
        for length in (1, 2, 3, 4):
            priors = [int(v) for v in rng.integers(0, s, size=length)]
            total = 0.0
            for chunk in itertools.product(range(s), repeat=length):
                direct = theory.q_product(qtab, ptab, context, priors, list(chunk))
                stepwise = ptab.cond(chunk[0], context)
                for l in range(1, length):
                    stepwise *= qtab.cond(chunk[l], context + priors[:l])
                worst = max(worst, abs(direct - stepwise))
                total += direct
            worst = max(worst, abs(total - 1.0))
    return worst


THEORY_CHECKS = {
    "factorization_identity": (_theory_identity, 1e-10),
    "extremum_log_r_zero": (_theory_extremum, 1e-12),
    "joint_enumeration": (_theory_enumeration, 1e-12),
}


def run_theory_checks(seed: int = 0) -> list[CheckResult]:
    return [CheckResult(name, float(fn(seed)), tol) for name, (fn, tol) in THEORY_CHECKS.items()]
