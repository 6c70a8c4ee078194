"""Joint optimization of the base model and prior predictor, plus dataset plumbing.

The loss per training position couples two terms: the teacher-forced NLL of
the true prefix, and the NLL of a sequentially drawn chunk evaluated under
the prior-conditioned draft distribution. Minimizing the second term pulls
the predicted priors toward the values the base model actually generates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ar
from .bundle import ModelBundle
from .confidence import train_confidence
from .numeric import AdamState, adam_step, gaussian_log_density, gaussian_log_density_grad
from .priors import predict_priors, prior_backward, prior_l1, take_window

# Positions drawn per training sequence per epoch; more positions means more
# optimizer steps per epoch at the same learning rate.
POSITIONS_PER_EPOCH = 8
CONF_EPOCHS = 60
CONF_POSITIONS_PER_SEQ = 24
# Per-group rate multipliers on the base Adam rate. The two log-variance
# scalars average gradients over hundreds of residuals per step, so they can
# safely adapt an order of magnitude faster; keeping them current is what
# lets the prior pull strengthen as the drafts improve.
PRIOR_LR_SCALE = 5.0
LOGVAR_LR_SCALE = 10.0


@dataclass
class TrainingConfig:
    lr: float = 0.001
    batch: int = 2
    max_chunk: int = 20  # B
    epochs: int = 30
    drafts_per_position: int = 1  # M in the chunk-NLL expectation
    seed: int = 0

    def __post_init__(self):
        if self.max_chunk < 1 or self.batch < 1 or self.lr <= 0:
            raise ValueError("invalid training configuration")


@dataclass
class TrainingSample:
    sequence_index: int
    position: int  # v, 1-based count of observed samples
    chunk_len: int  # min(B, N - v)


@dataclass
class SinusoidParams:
    amp_range: tuple = (0.5, 1.5)
    freq_range: tuple = (0.01, 0.05)  # cycles per step
    noise_std: float = 0.02
    length: int = 400
    count: int = 32
    train_fraction: float = 0.75

    def validate(self):
        if self.count < 2:
            raise ValueError("dataset needs at least two sequences")
        if self.length < 2:
            raise ValueError("sequence length must be at least 2")
        if not (0 < self.train_fraction < 1):
            raise ValueError("train fraction must lie strictly between 0 and 1")
        for lo, hi in (self.amp_range, self.freq_range):
            if hi < lo:
                raise ValueError("range bounds out of order")
        if self.noise_std < 0:
            raise ValueError("noise std must be non-negative")


@dataclass
class SinusoidDataset:
    params: SinusoidParams
    seed: int
    raw: np.ndarray  # [count, length]
    mean: float
    std: float

    @property
    def sequences(self) -> np.ndarray:
        return (self.raw - self.mean) / self.std

    @property
    def n_train(self) -> int:
        return int(math.ceil(self.params.count * self.params.train_fraction))

    @property
    def train(self) -> np.ndarray:
        return self.sequences[: self.n_train]

    @property
    def validation(self) -> np.ndarray:
        return self.sequences[self.n_train :]


def sinusoid_signal(amplitude: float, frequency: float, phase: float, length: int) -> np.ndarray:
    t = np.arange(length, dtype=np.float64)
    return amplitude * np.sin(2.0 * math.pi * frequency * t + phase)


def make_sinusoids(params: SinusoidParams, seed: int) -> SinusoidDataset:
    """Deterministic noisy sinusoids, standardized by training-split statistics."""
    params.validate()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x51D])))
    raw = np.empty((params.count, params.length))
    for i in range(params.count):
        amp = rng.uniform(*params.amp_range)
        freq = rng.uniform(*params.freq_range)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        noise = params.noise_std * rng.standard_normal(params.length)
        raw[i] = sinusoid_signal(amp, freq, phase, params.length) + noise
    n_train = int(math.ceil(params.count * params.train_fraction))
    train_flat = raw[:n_train].reshape(-1)
    mean = float(np.mean(train_flat))
    std = float(np.std(train_flat))
    if std == 0.0:
        std = 1.0
    return SinusoidDataset(params=params, seed=seed, raw=raw, mean=mean, std=std)


def draw_training_sample(rng: np.random.Generator, seq_index: int, length: int, max_chunk: int):
    """Random position and chunk length; None when the chunk would be empty."""
    v = int(rng.integers(1, length + 1))
    l = min(max_chunk, length - v)
    if l == 0:
        return None
    return TrainingSample(sequence_index=seq_index, position=v, chunk_len=l)


def rollout_from(params: ar.ArParams, state: ar.ArState, length: int, rng: np.random.Generator):
    values = np.empty(length)
    for k in range(length):
        values[k], state = ar.sample_next(params, state, rng)
    return values


def joint_terms(
    ar_params: ar.ArParams,
    prior_params,
    sequence: np.ndarray,
    sample: TrainingSample,
    drafts: np.ndarray,
) -> tuple[float, float]:
    """(prefix NLL, chunk NLL under the draft distribution); pure in the drafts."""
    v, l = sample.position, sample.chunk_len
    term1 = ar.sequence_nll(ar_params, sequence[: v + l])
    context = sequence[:v]
    state = ar.warmup(ar_params, context)
    win = take_window(sequence, v, prior_params.window)
    priors = predict_priors(prior_params, win).values
    term2 = 0.0
    n_drafts = drafts.shape[0]
    for j in range(n_drafts):
        heads = ar.draft_pass(ar_params, state, priors[:l])
        for k in range(l):
            term2 -= gaussian_log_density(drafts[j, k], heads[k])
    return term1, term2 / n_drafts


def joint_sample_loss_and_grads(
    ar_params: ar.ArParams,
    prior_params,
    sequence: np.ndarray,
    sample: TrainingSample,
    drafts: np.ndarray,
    g_ar: dict,
    g_prior: dict,
    scale: float,
    main_tape: ar.SegmentTape,
) -> float:
    """Accumulate scaled gradients of both loss terms for one training sample.

    `main_tape` is the shared teacher-forced chain over sequence[:v+l-1]; the
    chunk term's context state is read off it, and its backward carries both
    terms' head gradients plus the draft segment's boundary-state gradients.
    """
    v, l = sample.position, sample.chunk_len
    x = sequence[: v + l]

    # Prefix NLL term: start-input branch plus the main teacher-forced chain.
    start_tape = ar.forward_segment(ar_params, ar.initial_state(ar_params), [0.0])
    loss = -gaussian_log_density(x[0], start_tape.heads[0])
    _, dmu, dlv = gaussian_log_density_grad(x[0], start_tape.heads[0])
    ar.backward_segment(ar_params, start_tape, np.array([-dmu * scale]), np.array([-dlv * scale]), g_ar)

    T = x.shape[0] - 1
    dmean = np.empty(T)
    dlog = np.empty(T)
    for t in range(T):
        loss -= gaussian_log_density(x[t + 1], main_tape.heads[t])
        _, dmu, dlv = gaussian_log_density_grad(x[t + 1], main_tape.heads[t])
        dmean[t] = -dmu * scale
        dlog[t] = -dlv * scale

    # Chunk term: heads come from the context state plus a prior-fed segment.
    win = take_window(sequence, v, prior_params.window)
    priors = predict_priors(prior_params, win).values
    state = ar.state_at(main_tape, v - 1)
    n_drafts = drafts.shape[0]
    dscale = scale / n_drafts
    dstate_h = [np.zeros(ar_params.hidden) for _ in ar_params.cells]
    dstate_c = [np.zeros(ar_params.hidden) for _ in ar_params.cells]
    dpriors = np.zeros(prior_params.horizon)
    term2 = 0.0
    for j in range(n_drafts):
        dtape = ar.draft_pass_tape(ar_params, state, priors[:l])
        # First chunk factor reuses the chain's head at the context boundary.
        term2 -= gaussian_log_density(drafts[j, 0], dtape.heads[0])
        _, dmu, dlv = gaussian_log_density_grad(drafts[j, 0], dtape.heads[0])
        dmean[v - 1] += -dmu * dscale
        dlog[v - 1] += -dlv * dscale
        if dtape.segment is not None:
            dmean2 = np.empty(l - 1)
            dlog2 = np.empty(l - 1)
            for k in range(l - 1):
                term2 -= gaussian_log_density(drafts[j, k + 1], dtape.segment.heads[k])
                _, dmu, dlv = gaussian_log_density_grad(drafts[j, k + 1], dtape.segment.heads[k])
                dmean2[k] = -dmu * dscale
                dlog2[k] = -dlv * dscale
            dinputs, (dh0s, dc0s) = ar.backward_segment(ar_params, dtape.segment, dmean2, dlog2, g_ar)
            dpriors[: l - 1] += dinputs
            for li in range(len(ar_params.cells)):
                dstate_h[li] += dh0s[li]
                dstate_c[li] += dc0s[li]
    loss += term2 / n_drafts
    ar.backward_segment(
        ar_params, main_tape, dmean, dlog, g_ar, dstate1=(dstate_h, dstate_c), dstate_index=v - 1
    )
    dw, db = prior_backward(prior_params, win, priors, dpriors)
    g_prior["net.weight"] += dw
    g_prior["net.bias"] += db
    return loss


def joint_loss(
    ar_params: ar.ArParams,
    prior_params,
    sequences,
    samples: list[TrainingSample],
    rng: np.random.Generator,
    drafts_per_position: int = 1,
    with_grads: bool = True,
):
    """Mean joint loss over a batch; optionally with analytic gradients.

    Chunk values are drawn sequentially from the base model once per sample
    and treated as data in both the loss and its gradients. Returns
    (loss, ar grads, prior grads, drafts used per sample).
    """
    if not samples:
        raise ValueError("empty batch")
    g_ar = ar_params.zero_grads()
    g_prior = prior_params.zero_grads()
    all_drafts = []
    loss = 0.0
    scale = 1.0 / len(samples)
    for sample in samples:
        seq = np.asarray(sequences[sample.sequence_index], dtype=np.float64)
        v, l = sample.position, sample.chunk_len
        main_tape = ar.forward_segment(ar_params, ar.initial_state(ar_params), seq[: v + l - 1])
        state = ar.state_at(main_tape, v - 1)
        drafts = np.stack(
            [rollout_from(ar_params, state, l, rng) for _ in range(drafts_per_position)]
        )
        all_drafts.append(drafts)
        if with_grads:
            loss += scale * joint_sample_loss_and_grads(
                ar_params, prior_params, seq, sample, drafts, g_ar, g_prior, scale, main_tape
            )
        else:
            t1, t2 = joint_terms(ar_params, prior_params, seq, sample, drafts)
            loss += scale * (t1 + t2)
    return loss, g_ar, g_prior, all_drafts


@dataclass
class EpochLog:
    epoch: int
    train_nll: float | None = None
    val_nll: float | None = None
    prior_l1: float | None = None
    conf_bce: float | None = None


def mean_sequence_nll(ar_params: ar.ArParams, sequences) -> float:
    total = 0.0
    count = 0
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.float64)
        total += ar.sequence_nll(ar_params, seq)
        count += seq.shape[0]
    return total / count


def train(bundle: ModelBundle, dataset: SinusoidDataset, tcfg: TrainingConfig):
    """Joint phase over (base model, prior predictor), then the confidence phase.

    Returns (bundle, per-epoch logs). With zero epochs the bundle is returned
    unchanged and untrained.
    """
    logs: list[EpochLog] = []
    if tcfg.epochs == 0:
        return bundle, logs
    seeds = np.random.SeedSequence([tcfg.seed, 0x7EA1]).spawn(3)
    shuffle_rng = np.random.Generator(np.random.PCG64(seeds[0]))
    rollout_rng = np.random.Generator(np.random.PCG64(seeds[1]))
    conf_rng = np.random.Generator(np.random.PCG64(seeds[2]))

    train_seqs = dataset.train
    merged = {f"ar.{k}": v for k, v in bundle.ar.parameters().items()}
    merged.update({f"prior.{k}": v for k, v in bundle.prior.parameters().items()})
    adam = AdamState(lr=tcfg.lr)
    adam.lr_scale = {f"prior.{k}": PRIOR_LR_SCALE for k in bundle.prior.parameters()}
    adam.lr_scale["ar.head.log_var"] = LOGVAR_LR_SCALE

    n = train_seqs.shape[0]
    length = train_seqs.shape[1]
    for epoch in range(1, tcfg.epochs + 1):
        order = np.repeat(np.arange(n), POSITIONS_PER_EPOCH)
        shuffle_rng.shuffle(order)
        samples = []
        for idx in order:
            s = draw_training_sample(shuffle_rng, int(idx), length, tcfg.max_chunk)
            if s is not None:
                samples.append(s)
        epoch_loss = 0.0
        epoch_positions = 0
        for lo in range(0, len(samples), tcfg.batch):
            batch = samples[lo : lo + tcfg.batch]
            loss, g_ar, g_prior, _ = joint_loss(
                bundle.ar, bundle.prior, train_seqs, batch, rollout_rng, tcfg.drafts_per_position
            )
            if not math.isfinite(loss):
                raise FloatingPointError(f"diverged: non-finite loss at epoch {epoch}")
            grads = {f"ar.{k}": v for k, v in g_ar.items()}
            grads.update({f"prior.{k}": v for k, v in g_prior.items()})
            adam_step(adam, merged, grads)
            epoch_loss += loss * len(batch)
            epoch_positions += sum(s.position + s.chunk_len for s in batch)
        train_nll = epoch_loss / max(1, epoch_positions)
        val_nll = mean_sequence_nll(bundle.ar, dataset.validation)
        p_l1 = prior_l1(bundle.prior, dataset.validation)
        logs.append(EpochLog(epoch=epoch, train_nll=train_nll, val_nll=val_nll, prior_l1=p_l1))

    bundle.theta_trained = True
    bundle.prior_trained = True

    conf_log = train_confidence(
        bundle.conf,
        bundle.ar,
        bundle.prior,
        dataset.train,
        dataset.validation,
        bundle.calibration,
        conf_rng,
        epochs=CONF_EPOCHS,
        positions_per_seq=CONF_POSITIONS_PER_SEQ,
        lr=tcfg.lr,
    )
    for i, (_, _train_bce, val_bce) in enumerate(conf_log, start=1):
        logs.append(EpochLog(epoch=tcfg.epochs + i, conf_bce=val_bce))
    bundle.conf_trained = True
    bundle.data_mean = dataset.mean
    bundle.data_std = dataset.std
    return bundle, logs
