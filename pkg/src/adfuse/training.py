"""Losses, the Adamax optimizer, the training loop and the gradient checker.

The joint objective is

    L = L_share + alpha * L_topic + beta * L_sentiment

where L_share is the unsupervised object-reconstruction loss (squared
error summed over feature dims, averaged over a record's objects, then
averaged over the records in the batch that have objects), and each task
loss is the per-record summed binary cross-entropy averaged over the
batch. alpha/beta default to 200/50. Averaging (rather than summing) over
the batch keeps alpha and beta meaningful independently of batch size.

Optimization is Adamax (the infinity-norm Adam variant) with coupled
weight decay: the decay term is added to the raw gradient before the
moment updates. The learning-rate schedule multiplies lr by a fixed
factor every `decay_every` epochs.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import FeatureRecord, batches
from .errors import ConfigError, NumericError, ShapeError, UsageError
from .model import Model, ModelConfig, RecordForward, build
from .numerics import Array, Rng

PROB_CLAMP = 1e-7


# ------------------------------------------------------------------- losses


def loss_ml(probs: Array, labels: Array) -> float:
    """Summed binary cross-entropy of one record, probabilities clamped to [1e-7, 1-1e-7]."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise ShapeError(f"probs shape {probs.shape} != labels shape {labels.shape}")
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    terms = labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)
    # fsum keeps the all-0.5 fixture exactly at n_labels * ln 2
    return -math.fsum(terms)


def record_loss_share(reconstructions: Sequence[tuple[Array, Array]]) -> float:
    """Mean over a record's objects of the summed squared reconstruction error."""
    if not reconstructions:
        return 0.0
    total = 0.0
    for x_hat, x in reconstructions:
        diff = x_hat - x
        total += float(diff @ diff)
    return total / len(reconstructions)


def loss_share(batch_reconstructions: Sequence[Sequence[tuple[Array, Array]]]) -> float:
    """Batch reconstruction loss: mean of per-record losses over records that have objects."""
    if len(batch_reconstructions) == 0:
        raise UsageError("loss_share needs a batch of at least one record")
    per_record = [record_loss_share(pairs) for pairs in batch_reconstructions if len(pairs) > 0]
    if not per_record:
        return 0.0
    return math.fsum(per_record) / len(per_record)


@dataclass
class LossWeights:
    alpha: float = 200.0
    beta: float = 50.0

    def effective(self, single_task: str) -> tuple[float, float]:
        """Zero the disabled task's coefficient under a single-task ablation."""
        if single_task == "topic":
            return self.alpha, 0.0
        if single_task == "sentiment":
            return 0.0, self.beta
        return self.alpha, self.beta


def loss_multitask(share: float, topic: float, sentiment: float, weights: LossWeights) -> float:
    return share + weights.alpha * topic + weights.beta * sentiment


# ------------------------------------------------------------------ adamax


class Adamax:
    """Adamax with coupled weight decay.

    Per parameter: g <- g + weight_decay * theta, then
        m <- beta1 * m + (1 - beta1) * g
        u <- max(beta2 * u, |g|)
        theta <- theta - (lr / (1 - beta1^t)) * m / (u + eps)
    """

    def __init__(
        self,
        params: dict[str, Array],
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0001,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {path: np.zeros_like(arr) for path, arr in params.items()}
        self.u = {path: np.zeros_like(arr) for path, arr in params.items()}

    def step(self, params: dict[str, Array], grads: dict[str, Array]) -> None:
        """Update parameters in place. Raises NumericError before touching anything on bad grads."""
        for path, g in grads.items():
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient for parameter {path!r}; aborting step")
        self.t += 1
        correction = 1.0 - self.beta1**self.t
        for path, theta in params.items():
            g = grads[path]
            if self.weight_decay != 0.0:
                g = g + self.weight_decay * theta
            m = self.m[path]
            u = self.u[path]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            np.maximum(self.beta2 * u, np.abs(g), out=u)
            theta -= (self.lr / correction) * m / (u + self.eps)

    def state_dict(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
            "t": self.t,
            "m": {k: v.copy() for k, v in self.m.items()},
            "u": {k: v.copy() for k, v in self.u.items()},
        }

    def load_state(self, state: dict) -> None:
        self.lr = state["lr"]
        self.beta1 = state["beta1"]
        self.beta2 = state["beta2"]
        self.eps = state["eps"]
        self.weight_decay = state["weight_decay"]
        self.t = state["t"]
        for k in self.m:
            self.m[k][...] = state["m"][k]
            self.u[k][...] = state["u"][k]


@dataclass
class Schedule:
    """Step decay: multiply lr by decay_factor every decay_every epochs."""

    decay_factor: float = 0.1
    decay_every: int = 15
    total_epochs: int = 45

    def validate(self) -> None:
        if self.decay_every < 1:
            raise ConfigError(f"decay_every must be >= 1, got {self.decay_every}")
        if self.total_epochs < 1:
            raise ConfigError(f"total_epochs must be >= 1, got {self.total_epochs}")

    def lr_at(self, epoch: int, base_lr: float) -> float:
        """lr for a 0-indexed epoch, computed multiplicatively so each boundary is an exact *factor step."""
        lr = base_lr
        for _ in range(epoch // self.decay_every):
            lr *= self.decay_factor
        return lr


# ------------------------------------------------------------- batch losses


@dataclass
class BatchLosses:
    share: float
    topic: float
    sentiment: float
    n_records: int
    n_object_records: int

    def total(self, alpha_eff: float, beta_eff: float) -> float:
        return self.share + alpha_eff * self.topic + beta_eff * self.sentiment


def batch_losses(records: Sequence[FeatureRecord], fwds: Sequence[RecordForward]) -> BatchLosses:
    share_terms = []
    topic_terms = []
    sent_terms = []
    for rec, fwd in zip(records, fwds):
        if fwd.bundle.reconstructions:
            share_terms.append(record_loss_share(fwd.bundle.reconstructions))
        topic_terms.append(loss_ml(fwd.probs("topic"), rec.topic_labels))
        sent_terms.append(loss_ml(fwd.probs("sentiment"), rec.sentiment_labels))
    n = len(records)
    share = math.fsum(share_terms) / len(share_terms) if share_terms else 0.0
    return BatchLosses(
        share=share,
        topic=math.fsum(topic_terms) / n,
        sentiment=math.fsum(sent_terms) / n,
        n_records=n,
        n_object_records=len(share_terms),
    )


def batch_backward(
    model: Model,
    records: Sequence[FeatureRecord],
    fwds: Sequence[RecordForward],
    alpha_eff: float,
    beta_eff: float,
) -> dict[str, Array]:
    """Gradient of the batch objective, accumulated over records in order."""
    grads = model.zero_grads()
    n = len(records)
    n_obj = sum(1 for fwd in fwds if fwd.bundle.reconstructions)
    coeff_share = 1.0 / n_obj if n_obj else 0.0
    for rec, fwd in zip(records, fwds):
        model.backward_record(
            rec,
            fwd,
            grads,
            coeff_share=coeff_share,
            coeff_topic=alpha_eff / n,
            coeff_sentiment=beta_eff / n,
        )
    return grads


# -------------------------------------------------------------- train loop


@dataclass
class EpochStats:
    epoch: int
    lr: float
    loss_total: float
    loss_share: float
    loss_topic: float
    loss_sentiment: float


def train_epoch(
    model: Model,
    records: Sequence[FeatureRecord],
    batch_size: int,
    optimizer: Adamax,
    weights: LossWeights,
    rng: Rng,
    epoch: int = 0,
) -> EpochStats:
    """One pass over a shuffled split: forward both tasks, joint loss, backward, Adamax step."""
    if len(records) == 0:
        raise UsageError("train_epoch needs a non-empty training split")
    alpha_eff, beta_eff = weights.effective(model.config.single_task)
    share_sum = topic_sum = sent_sum = 0.0
    n_obj_total = n_total = 0
    for batch_idx, batch in enumerate(batches(records, batch_size, rng)):
        fwds = [model.forward_record(rec, train_mode=True, rng=rng) for rec in batch]
        losses = batch_losses(batch, fwds)
        total = losses.total(alpha_eff, beta_eff)
        if not math.isfinite(total):
            raise NumericError(
                f"non-finite loss in batch {batch_idx} (share={losses.share}, "
                f"topic={losses.topic}, sentiment={losses.sentiment})"
            )
        grads = batch_backward(model, batch, fwds, alpha_eff, beta_eff)
        optimizer.step(model.params, grads)
        share_sum += losses.share * losses.n_object_records
        topic_sum += losses.topic * losses.n_records
        sent_sum += losses.sentiment * losses.n_records
        n_obj_total += losses.n_object_records
        n_total += losses.n_records

    share = share_sum / n_obj_total if n_obj_total else 0.0
    topic = topic_sum / n_total
    sent = sent_sum / n_total
    total = share + alpha_eff * topic + beta_eff * sent
    single = model.config.single_task
    return EpochStats(
        epoch=epoch,
        lr=optimizer.lr,
        loss_total=total,
        loss_share=share,
        loss_topic=topic if single != "sentiment" else math.nan,
        loss_sentiment=sent if single != "topic" else math.nan,
    )


def predict_scores(model: Model, records: Sequence[FeatureRecord]) -> tuple[Array, Array]:
    """Eval-mode probabilities for every record: (n, n_topics) and (n, n_sentiments)."""
    topic_scores = np.zeros((len(records), model.config.n_topics))
    sent_scores = np.zeros((len(records), model.config.n_sentiments))
    for i, rec in enumerate(records):
        fwd = model.forward_record(rec, train_mode=False)
        topic_scores[i] = fwd.probs("topic")
        sent_scores[i] = fwd.probs("sentiment")
    return topic_scores, sent_scores


@dataclass
class TrainResult:
    history: list[dict]
    best_state: dict[str, Array]
    best_epoch: int
    best_score: float
    best_opt_state: dict | None = None


def fit(
    model: Model,
    train_records: Sequence[FeatureRecord],
    val_records: Sequence[FeatureRecord],
    weights: LossWeights,
    schedule: Schedule,
    batch_size: int,
    seed: int,
    base_lr: float = 0.001,
    weight_decay: float = 0.0001,
    target_val_map: tuple[float | None, float | None] | None = None,
    log: Callable[[str], None] | None = None,
) -> TrainResult:
    """Full training run with per-epoch validation mAP and best-checkpoint tracking.

    Model selection keeps the epoch maximizing the mean of the available
    validation mAPs (both tasks normally, the active one under a
    single-task ablation). `target_val_map` optionally stops early once
    the given (topic, sentiment) validation mAPs are reached; None entries
    are ignored.
    """
    from .metrics import mean_average_precision  # local import to keep module deps acyclic

    schedule.validate()
    optimizer = Adamax(model.params, lr=base_lr, weight_decay=weight_decay)
    rng = Rng(seed).spawn(100)  # training stream: shuffling + dropout
    single = model.config.single_task
    val_topic_labels = np.stack([r.topic_labels for r in val_records]) if len(val_records) else None
    val_sent_labels = np.stack([r.sentiment_labels for r in val_records]) if len(val_records) else None

    history: list[dict] = []
    best_state = model.state_dict()
    best_opt_state = None
    best_epoch = -1
    best_score = -math.inf
    for epoch in range(schedule.total_epochs):
        optimizer.lr = schedule.lr_at(epoch, base_lr)
        stats = train_epoch(model, train_records, batch_size, optimizer, weights, rng, epoch)

        val_topic = val_sent = math.nan
        if len(val_records):
            topic_scores, sent_scores = predict_scores(model, val_records)
            if single != "sentiment":
                val_topic = mean_average_precision(topic_scores, val_topic_labels).map
            if single != "topic":
                val_sent = mean_average_precision(sent_scores, val_sent_labels).map
        row = {
            "epoch": epoch,
            "lr": stats.lr,
            "loss_total": stats.loss_total,
            "loss_share": stats.loss_share,
            "loss_topic": stats.loss_topic,
            "loss_sentiment": stats.loss_sentiment,
            "val_topic_map": val_topic,
            "val_sentiment_map": val_sent,
        }
        history.append(row)
        if log is not None:
            log(
                f"epoch {epoch:3d}  lr {stats.lr:.6g}  loss {stats.loss_total:.4f}  "
                f"val topic mAP {val_topic:.4f}  val sentiment mAP {val_sent:.4f}"
            )

        available = [v for v in (val_topic, val_sent) if not math.isnan(v)]
        score = sum(available) / len(available) if available else -stats.loss_total
        if score > best_score:
            best_score = score
            best_epoch = epoch
            best_state = model.state_dict()
            best_opt_state = optimizer.state_dict()

        if target_val_map is not None:
            t_target, s_target = target_val_map
            topic_ok = t_target is None or (not math.isnan(val_topic) and val_topic >= t_target)
            sent_ok = s_target is None or (not math.isnan(val_sent) and val_sent >= s_target)
            if topic_ok and sent_ok:
                break
    return TrainResult(
        history=history,
        best_state=best_state,
        best_epoch=best_epoch,
        best_score=best_score,
        best_opt_state=best_opt_state,
    )


# ---------------------------------------------------------- gradient check


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_path: str
    worst_index: int
    tolerance: float
    n_checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}: max relative error {self.max_rel_error:.3e} at {self.worst_path}[{self.worst_index}] "
            f"(tolerance {self.tolerance:g}, {self.n_checked} entries)"
        )


def gradient_check(
    loss_fn: Callable[[], float],
    params: dict[str, Array],
    analytic: dict[str, Array],
    tolerance: float,
    h: float = 1e-5,
) -> GradCheckReport:
    """Central finite differences over every entry of every parameter.

    Relative error per entry is |fd - analytic| / max(|fd|, |analytic|, 1e-4);
    the denominator floor keeps finite-difference roundoff on genuinely tiny
    gradients from registering as failure. Parameters are perturbed in place
    and restored, so `loss_fn` must read the same arrays.
    """
    worst = 0.0
    worst_path = ""
    worst_index = -1
    n = 0
    for path, arr in params.items():
        ga = analytic[path]
        flat = arr.reshape(-1)
        ga_flat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn()
            flat[i] = orig - h
            lm = loss_fn()
            flat[i] = orig
            if not (math.isfinite(lp) and math.isfinite(lm)):
                raise NumericError(f"non-finite loss while perturbing {path}[{i}]")
            fd = (lp - lm) / (2.0 * h)
            rel = abs(fd - ga_flat[i]) / max(abs(fd), abs(ga_flat[i]), 1e-4)
            n += 1
            if rel > worst:
                worst = rel
                worst_path = path
                worst_index = i
    return GradCheckReport(
        max_rel_error=worst, worst_path=worst_path, worst_index=worst_index, tolerance=tolerance, n_checked=n
    )


def tiny_config(**overrides) -> ModelConfig:
    """Desk-scale model used by gradient checks (dims 4-8, 3 topics, 2 sentiments)."""
    base = dict(
        d_img=6,
        d_obj=5,
        d_word=4,
        d_shared=4,
        lstm_hidden=2,
        head_hidden=4,
        n_topics=3,
        n_sentiments=2,
        dropout_rate=0.0,
        mlp_hidden=5,
    )
    base.update(overrides)
    return ModelConfig(**base)


def _tiny_record(cfg: ModelConfig, rng: Rng, rec_id: str, n_objects: int, n_words: int) -> FeatureRecord:
    topic_labels = (rng.random((cfg.n_topics,)) < 0.5).astype(np.float64)
    sent_labels = (rng.random((cfg.n_sentiments,)) < 0.5).astype(np.float64)
    return FeatureRecord(
        id=rec_id,
        global_feature=rng.normal((cfg.d_img,)),
        object_features=[rng.normal((cfg.d_obj,)) for _ in range(n_objects)],
        word_embeddings=[rng.normal((cfg.d_word,)) for _ in range(n_words)],
        words=None,
        topic_labels=topic_labels,
        sentiment_labels=sent_labels,
    )


def gradcheck_full(
    seed: int = 0,
    tolerance: float = 1e-5,
    weights: LossWeights | None = None,
    config: ModelConfig | None = None,
) -> GradCheckReport:
    """End-to-end check: batch loss of a tiny model vs finite differences.

    The two-record batch covers the edge paths (one record with objects and
    words, one with neither) so empty-modality handling is differentiated too.
    """
    cfg = config if config is not None else tiny_config()
    w = weights if weights is not None else LossWeights(alpha=2.0, beta=3.0)
    model = build(cfg, seed)
    data_rng = Rng(seed).spawn(999)
    recs = [
        _tiny_record(cfg, data_rng, "gc-0", n_objects=2, n_words=3),
        _tiny_record(cfg, data_rng, "gc-1", n_objects=0, n_words=0),
    ]
    alpha_eff, beta_eff = w.effective(cfg.single_task)

    def loss_fn() -> float:
        fwds = [model.forward_record(r) for r in recs]
        return batch_losses(recs, fwds).total(alpha_eff, beta_eff)

    fwds = [model.forward_record(r) for r in recs]
    analytic = batch_backward(model, recs, fwds, alpha_eff, beta_eff)
    return gradient_check(loss_fn, model.params, analytic, tolerance)


def gradcheck_layers(seed: int = 0, tolerance: float = 1e-6) -> list[tuple[str, GradCheckReport]]:
    """Per-layer checks: linear, 3-layer MLP, autoencoder, LSTM cell, BLSTM (lengths 1-4).

    Each check reduces the layer output to a scalar through a fixed random
    projection so every output entry carries gradient.
    """
    from .layers import Autoencoder, Blstm, Linear, Mlp, MlpConfig, LstmParams, lstm_cell_backward, lstm_cell_step

    rng = Rng(seed)
    reports: list[tuple[str, GradCheckReport]] = []

    lin = Linear(3, 4, rng.spawn(0))
    x = rng.spawn(1).normal((4,))
    proj = rng.spawn(2).normal((3,))
    params = {f"linear.{k}": v for k, v in lin.params().items()}

    def lin_loss() -> float:
        return float(proj @ lin.forward(x))

    _, lin_grads = lin.backward(x, proj)
    reports.append(("linear", gradient_check(lin_loss, params, {f"linear.{k}": v for k, v in lin_grads.items()}, tolerance)))

    mlp = Mlp(MlpConfig([5, 4, 3, 2]), rng.spawn(3))
    xm = rng.spawn(4).normal((5,))
    pm = rng.spawn(5).normal((2,))
    params = {f"mlp.{k}": v for k, v in mlp.params().items()}

    def mlp_loss() -> float:
        y, _ = mlp.forward(xm)
        return float(pm @ y)

    _, cache = mlp.forward(xm)
    _, mlp_grads = mlp.backward(cache, pm)
    reports.append(("mlp", gradient_check(mlp_loss, params, {f"mlp.{k}": v for k, v in mlp_grads.items()}, tolerance)))

    ae = Autoencoder(5, 3, rng.spawn(6))
    xa = rng.spawn(7).normal((5,))
    pz = rng.spawn(8).normal((3,))
    params = {f"ae.{k}": v for k, v in ae.params().items()}

    def ae_loss() -> float:
        z, _ = ae.encode(xa)
        x_hat, _ = ae.decode(z)
        diff = x_hat - xa
        return float(diff @ diff) + float(pz @ z)

    z, enc_cache = ae.encode(xa)
    x_hat, dec_cache = ae.decode(z)
    g_z, dec_grads = ae.decoder.backward(dec_cache, 2.0 * (x_hat - xa))
    _, enc_grads = ae.encoder.backward(enc_cache, g_z + pz)
    analytic = {f"ae.enc.{k}": v for k, v in enc_grads.items()}
    analytic.update({f"ae.dec.{k}": v for k, v in dec_grads.items()})
    reports.append(("autoencoder", gradient_check(ae_loss, params, analytic, tolerance)))

    cell = LstmParams(3, 2, rng.spawn(9))
    xc = rng.spawn(10).normal((3,))
    h0 = rng.spawn(11).normal((2,))
    c0 = rng.spawn(12).normal((2,))
    ph = rng.spawn(13).normal((2,))
    pc = rng.spawn(14).normal((2,))
    params = {f"cell.{k}": v for k, v in cell.params().items()}

    def cell_loss() -> float:
        h, c, _ = lstm_cell_step(cell, xc, h0, c0)
        return float(ph @ h) + float(pc @ c)

    _, _, step_cache = lstm_cell_step(cell, xc, h0, c0)
    cell_grads = cell.zero_grads()
    lstm_cell_backward(cell, step_cache, ph, pc, cell_grads)
    reports.append(("lstm_cell", gradient_check(cell_loss, params, {f"cell.{k}": v for k, v in cell_grads.items()}, tolerance)))

    for length in (1, 2, 4):
        blstm = Blstm(3, 2, rng.spawn(20 + length))
        xs = [rng.spawn(30 + length).normal((3,)) for _ in range(length)]
        ps = [rng.spawn(40 + length).normal((4,)) for _ in range(length)]
        params = {f"blstm.{k}": v for k, v in blstm.params().items()}

        def blstm_loss() -> float:
            zs, _ = blstm.forward(xs)
            return math.fsum(float(p @ z) for p, z in zip(ps, zs))

        _, bcache = blstm.forward(xs)
        _, bgrads = blstm.backward(bcache, ps)
        reports.append(
            (f"blstm_len{length}", gradient_check(blstm_loss, params, {f"blstm.{k}": v for k, v in bgrads.items()}, tolerance))
        )
    return reports


def gradcheck_attention(seed: int = 0, tolerance: float = 1e-6) -> list[tuple[str, GradCheckReport]]:
    """Intra-modality kernel attention and inter-modality mixing vs finite differences."""
    from . import attention as att

    rng = Rng(seed)
    reports: list[tuple[str, GradCheckReport]] = []

    d, n = 4, 3
    q = att.init_intra_kernel(d, rng.spawn(0))
    zs = [rng.spawn(1).normal((d,)) for _ in range(n)]
    pm = rng.spawn(2).normal((d,))
    params = {"q": q}
    params.update({f"z{j}": zs[j] for j in range(n)})

    def intra_loss() -> float:
        m, _, _ = att.intra_attend(q, zs)
        return float(pm @ m)

    _, _, cache = att.intra_attend(q, zs)
    gq, gzs = att.intra_attend_backward(cache, pm)
    analytic = {"q": gq}
    analytic.update({f"z{j}": gzs[j] for j in range(n)})
    reports.append(("intra_attend", gradient_check(intra_loss, params, analytic, tolerance)))

    a = rng.spawn(3).normal((3,))
    zv = rng.spawn(4).normal((d,))
    mo = rng.spawn(5).normal((d,))
    mw = rng.spawn(6).normal((d,))
    pr = rng.spawn(7).normal((3 * d,))
    params = {"a": a, "zv": zv, "mo": mo, "mw": mw}

    def inter_loss() -> float:
        r, _ = att.inter_combine(a, zv, mo, mw)
        return float(pr @ r)

    _, icache = att.inter_combine(a, zv, mo, mw)
    ga, gzv, gmo, gmw = att.inter_combine_backward(icache, pr)
    reports.append(
        ("inter_combine", gradient_check(inter_loss, params, {"a": ga, "zv": gzv, "mo": gmo, "mw": gmw}, tolerance))
    )
    return reports


# ------------------------------------------------------------- checkpoints

CHECKPOINT_VERSION = 1


def _encode_array(arr: Array) -> dict:
    a = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(obj: dict) -> Array:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(obj["shape"])


def save_checkpoint(path, model: Model, optimizer: Adamax | None = None, epoch: int = 0) -> None:
    """Write a versioned JSON checkpoint: model config + parameters (+ optimizer state).

    Arrays are stored as base64 little-endian float64 bytes, so round-trips
    are bit-exact on any platform.
    """
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": model.config.to_dict(),
        "seed": model.seed,
        "epoch": epoch,
        "params": {p: _encode_array(a) for p, a in model.params.items()},
    }
    if optimizer is not None:
        state = optimizer.state_dict()
        payload["adamax"] = {
            "lr": state["lr"],
            "beta1": state["beta1"],
            "beta2": state["beta2"],
            "eps": state["eps"],
            "weight_decay": state["weight_decay"],
            "t": state["t"],
            "m": {p: _encode_array(a) for p, a in state["m"].items()},
            "u": {p: _encode_array(a) for p, a in state["u"].items()},
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> tuple[Model, Adamax | None, int]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint format version {version!r}")
    cfg = ModelConfig(**payload["model_config"])
    model = build(cfg, payload["seed"])
    model.load_state({p: _decode_array(o) for p, o in payload["params"].items()})
    optimizer = None
    if "adamax" in payload:
        a = payload["adamax"]
        optimizer = Adamax(
            model.params,
            lr=a["lr"],
            beta1=a["beta1"],
            beta2=a["beta2"],
            eps=a["eps"],
            weight_decay=a["weight_decay"],
        )
        optimizer.load_state(
            {
                **{k: a[k] for k in ("lr", "beta1", "beta2", "eps", "weight_decay", "t")},
                "m": {p: _decode_array(o) for p, o in a["m"].items()},
                "u": {p: _decode_array(o) for p, o in a["u"].items()},
            }
        )
    return model, optimizer, payload["epoch"]
