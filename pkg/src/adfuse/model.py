"""Full network assembly: shared bottom -> two attention modules -> two heads.

The shared bottom (global-feature MLP, object autoencoder, word BLSTM) is
owned once and serves both tasks. Each task owns an independent attention
module (object kernel, word kernel, three inter-modality scalars) and a
prediction head (hidden ReLU transform + sigmoid output layer).

Records are processed one at a time: object and word counts vary per
record, and attention pools any number of vectors, so no padding is ever
needed. A missing modality (no objects, or no words) contributes a zero
vector to the inter-modality concatenation and nothing to the
reconstruction loss.

Every trainable array is registered exactly once in `Model.params`, an
ordered path -> array map. The optimizer and the gradient checker address
parameters through those paths; gradients come back as an identically
shaped map.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Literal

import numpy as np

from . import attention as att
from .errors import ConfigError, DataError, UsageError
from .layers import (
    Autoencoder,
    Blstm,
    BlstmCache,
    Linear,
    Mlp,
    MlpCache,
    MlpConfig,
    dropout,
    dropout_backward,
)
from .numerics import Array, Rng, sigmoid

TASKS = ("topic", "sentiment")

Task = Literal["topic", "sentiment"]


@dataclass
class ModelConfig:
    """Dimensions and ablation switches.

    Defaults reproduce the full-scale configuration (2048-D global and
    object features, 300-D word embeddings, 1024-D shared space from a
    512-unit BLSTM, 38 topics, 30 sentiments). Tests and the planted-data
    experiments shrink every dimension.
    """

    d_img: int = 2048
    d_obj: int = 2048
    d_word: int = 300
    d_shared: int = 1024
    lstm_hidden: int = 512
    head_hidden: int = 512
    n_topics: int = 38
    n_sentiments: int = 30
    dropout_rate: float = 0.1
    mlp_hidden: int | None = None  # hidden width of the 2-layer global MLP; defaults to d_shared
    no_autoencoder: bool = False
    no_hier_attention: bool = False
    single_task: str = "off"  # off | topic | sentiment

    def validate(self) -> None:
        dims = {
            "d_img": self.d_img,
            "d_obj": self.d_obj,
            "d_word": self.d_word,
            "d_shared": self.d_shared,
            "lstm_hidden": self.lstm_hidden,
            "head_hidden": self.head_hidden,
            "n_topics": self.n_topics,
            "n_sentiments": self.n_sentiments,
        }
        for name, value in dims.items():
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if 2 * self.lstm_hidden != self.d_shared:
            raise ConfigError(
                f"2 * lstm_hidden must equal d_shared (word vectors join the shared space), "
                f"got 2*{self.lstm_hidden} != {self.d_shared}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.single_task not in ("off", "topic", "sentiment"):
            raise ConfigError(f"single_task must be off|topic|sentiment, got {self.single_task!r}")

    def n_labels(self, task: str) -> int:
        return self.n_topics if task == "topic" else self.n_sentiments

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModalBundle:
    """Shared representations for one record: zV, {zO_j}, {zW_j} plus reconstructions."""

    z_visual: Array
    z_objects: list[Array]
    z_words: list[Array]
    reconstructions: list[tuple[Array, Array]]  # (reconstruction, original) per object


@dataclass
class SharedCache:
    record_id: str
    mlp: MlpCache
    obj_enc: list  # per-object encoder caches (MlpCache) or raw inputs under the ablation
    obj_dec: list  # per-object decoder caches; empty under the ablation
    blstm: BlstmCache | None


@dataclass
class TaskCache:
    bundle: ModalBundle
    intra_obj: att.IntraCache | None
    intra_word: att.IntraCache | None
    inter: att.InterCache
    r: Array
    head_pre: Array
    head_mask: Array | None
    r0d: Array
    probs: Array


@dataclass
class RecordForward:
    bundle: ModalBundle
    shared: SharedCache
    tasks: dict[str, TaskCache]

    def probs(self, task: str) -> Array:
        return self.tasks[task].probs


class TaskHead:
    """One task's attention parameters plus its prediction head."""

    def __init__(self, config: ModelConfig, task: str, rng: Rng):
        d = config.d_shared
        self.task = task
        self.config = config
        if not config.no_hier_attention:
            self.q_obj = att.init_intra_kernel(d, rng.spawn(0))
            self.q_word = att.init_intra_kernel(d, rng.spawn(1))
            self.inter_a = att.init_inter_scores()
        else:
            self.q_obj = None
            self.q_word = None
            self.inter_a = None
        self.hidden = Linear(config.head_hidden, 3 * d, rng.spawn(2))
        self.out = Linear(config.n_labels(task), config.head_hidden, rng.spawn(3))

    def params(self) -> dict[str, Array]:
        out: dict[str, Array] = {}
        if self.q_obj is not None:
            out["q_obj"] = self.q_obj
            out["q_word"] = self.q_word
            out["inter_a"] = self.inter_a
        out["head.hidden.W"] = self.hidden.W
        out["head.hidden.b"] = self.hidden.b
        out["head.out.W"] = self.out.W
        out["head.out.b"] = self.out.b
        return out


class Model:
    """The trainable network. Construct via `build(config, seed)`."""

    def __init__(self, config: ModelConfig, seed: int):
        config.validate()
        self.config = config
        self.seed = int(seed)
        root = Rng(seed)

        mlp_hidden = config.mlp_hidden if config.mlp_hidden is not None else config.d_shared
        self.mlp = Mlp(
            MlpConfig([config.d_img, mlp_hidden, config.d_shared], dropout_rate=config.dropout_rate),
            root.spawn(0),
        )
        if config.no_autoencoder:
            self.autoencoder = None
            self.obj_proj = Linear(config.d_shared, config.d_obj, root.spawn(1))
        else:
            self.autoencoder = Autoencoder(config.d_obj, config.d_shared, root.spawn(1))
            self.obj_proj = None
        self.blstm = Blstm(config.d_word, config.lstm_hidden, root.spawn(2))
        self.tasks = {
            "topic": TaskHead(config, "topic", root.spawn(3)),
            "sentiment": TaskHead(config, "sentiment", root.spawn(4)),
        }

        self.params: dict[str, Array] = {}
        self._register("shared.mlp", self.mlp.params())
        if self.autoencoder is not None:
            self._register("shared.ae", self.autoencoder.params())
        else:
            self._register("shared.obj_proj", self.obj_proj.params())
        self._register("shared.blstm", self.blstm.params())
        for task in TASKS:
            self._register(task, self.tasks[task].params())

    def _register(self, prefix: str, local: dict[str, Array]) -> None:
        for name, arr in local.items():
            path = f"{prefix}.{name}"
            if path in self.params:
                raise ConfigError(f"parameter path registered twice: {path}")
            self.params[path] = arr

    @property
    def num_params(self) -> int:
        return sum(arr.size for arr in self.params.values())

    def zero_grads(self) -> dict[str, Array]:
        return {path: np.zeros_like(arr) for path, arr in self.params.items()}

    # ---------------------------------------------------------------- forward

    def shared_forward(self, rec, train_mode: bool = False, rng: Rng | None = None) -> tuple[ModalBundle, SharedCache]:
        cfg = self.config
        x_v = rec.global_feature
        if x_v.shape != (cfg.d_img,):
            raise DataError(f"record {rec.id}: global feature shape {x_v.shape}, expected ({cfg.d_img},)")
        z_visual, mlp_cache = self.mlp.forward(x_v, train_mode, rng)

        z_objects: list[Array] = []
        recon: list[tuple[Array, Array]] = []
        obj_enc: list = []
        obj_dec: list = []
        for j, x_o in enumerate(rec.object_features):
            if x_o.shape != (cfg.d_obj,):
                raise DataError(f"record {rec.id}: object {j} shape {x_o.shape}, expected ({cfg.d_obj},)")
            if self.autoencoder is not None:
                z, enc_cache = self.autoencoder.encode(x_o)
                x_hat, dec_cache = self.autoencoder.decode(z)
                recon.append((x_hat, x_o))
                obj_enc.append(enc_cache)
                obj_dec.append(dec_cache)
            else:
                z = self.obj_proj.forward(x_o)
                obj_enc.append(x_o)
            z_objects.append(z)

        z_words: list[Array] = []
        blstm_cache = None
        if len(rec.word_embeddings) > 0:
            for j, x_w in enumerate(rec.word_embeddings):
                if x_w.shape != (cfg.d_word,):
                    raise DataError(f"record {rec.id}: word {j} shape {x_w.shape}, expected ({cfg.d_word},)")
            z_words, blstm_cache = self.blstm.forward(rec.word_embeddings)

        bundle = ModalBundle(z_visual=z_visual, z_objects=z_objects, z_words=z_words, reconstructions=recon)
        cache = SharedCache(record_id=rec.id, mlp=mlp_cache, obj_enc=obj_enc, obj_dec=obj_dec, blstm=blstm_cache)
        return bundle, cache

    def task_forward(self, task: str, bundle: ModalBundle, train_mode: bool = False, rng: Rng | None = None) -> tuple[Array, TaskCache]:
        if task not in TASKS:
            raise UsageError(f"unknown task {task!r}")
        head = self.tasks[task]
        d = self.config.d_shared

        intra_obj = intra_word = None
        if bundle.z_objects:
            if self.config.no_hier_attention:
                m_obj, _, intra_obj = att.uniform_attend(bundle.z_objects)
            else:
                m_obj, _, intra_obj = att.intra_attend(head.q_obj, bundle.z_objects)
        else:
            m_obj = np.zeros(d)
        if bundle.z_words:
            if self.config.no_hier_attention:
                m_word, _, intra_word = att.uniform_attend(bundle.z_words)
            else:
                m_word, _, intra_word = att.intra_attend(head.q_word, bundle.z_words)
        else:
            m_word = np.zeros(d)

        a = head.inter_a if head.inter_a is not None else np.ones(3)
        r, inter_cache = att.inter_combine(a, bundle.z_visual, m_obj, m_word)

        pre = head.hidden.forward(r)
        r0 = np.maximum(pre, 0.0)
        r0d, mask = dropout(r0, self.config.dropout_rate, rng, train_mode)
        logits = head.out.forward(r0d)
        probs = sigmoid(logits)
        cache = TaskCache(
            bundle=bundle,
            intra_obj=intra_obj,
            intra_word=intra_word,
            inter=inter_cache,
            r=r,
            head_pre=pre,
            head_mask=mask,
            r0d=r0d,
            probs=probs,
        )
        return probs, cache

    def forward_record(self, rec, train_mode: bool = False, rng: Rng | None = None) -> RecordForward:
        bundle, shared_cache = self.shared_forward(rec, train_mode, rng)
        tasks = {}
        for task in TASKS:
            _, tasks[task] = self.task_forward(task, bundle, train_mode, rng)
        return RecordForward(bundle=bundle, shared=shared_cache, tasks=tasks)

    # --------------------------------------------------------------- backward

    def backward_record(
        self,
        rec,
        fwd: RecordForward,
        grads: dict[str, Array],
        coeff_share: float,
        coeff_topic: float,
        coeff_sentiment: float,
    ) -> None:
        """Accumulate into `grads` the gradient of

            coeff_share * l_share(rec) + coeff_topic * l_topic(rec) + coeff_sentiment * l_sentiment(rec)

        where l_share is the record's mean-over-objects squared reconstruction
        error and l_task the record's summed binary cross-entropy. The trainer
        passes coefficients that realize the batch-mean reduction and the
        alpha/beta loss weights; the task gradient at the logits is then just
        coeff * (probs - labels).
        """
        if fwd.shared is None:
            raise UsageError("backward_record needs caches from forward_record")
        d = self.config.d_shared
        L = len(fwd.bundle.z_objects)
        M = len(fwd.bundle.z_words)
        grad_zv = np.zeros(d)
        grad_zo = [np.zeros(d) for _ in range(L)]
        grad_zw = [np.zeros(d) for _ in range(M)]

        coeffs = {"topic": coeff_topic, "sentiment": coeff_sentiment}
        labels = {"topic": rec.topic_labels, "sentiment": rec.sentiment_labels}
        for task in TASKS:
            c = coeffs[task]
            if c == 0.0:
                continue
            self._task_backward(task, fwd.tasks[task], labels[task], c, grads, grad_zv, grad_zo, grad_zw)

        if coeff_share != 0.0 and fwd.bundle.reconstructions:
            scale = coeff_share * 2.0 / L
            for j, (x_hat, x_o) in enumerate(fwd.bundle.reconstructions):
                g_hat = scale * (x_hat - x_o)
                g_z, dec_grads = self.autoencoder.decoder.backward(fwd.shared.obj_dec[j], g_hat)
                self._acc(grads, "shared.ae.dec", dec_grads)
                grad_zo[j] += g_z

        # shared bottom
        _, mlp_grads = self.mlp.backward(fwd.shared.mlp, grad_zv)
        self._acc(grads, "shared.mlp", mlp_grads)
        for j in range(L):
            if self.autoencoder is not None:
                _, enc_grads = self.autoencoder.encoder.backward(fwd.shared.obj_enc[j], grad_zo[j])
                self._acc(grads, "shared.ae.enc", enc_grads)
            else:
                _, proj_grads = self.obj_proj.backward(fwd.shared.obj_enc[j], grad_zo[j])
                self._acc(grads, "shared.obj_proj", proj_grads)
        if M > 0:
            _, blstm_grads = self.blstm.backward(fwd.shared.blstm, grad_zw)
            self._acc(grads, "shared.blstm", blstm_grads)

    def _task_backward(
        self,
        task: str,
        cache: TaskCache,
        labels: Array,
        coeff: float,
        grads: dict[str, Array],
        grad_zv: Array,
        grad_zo: list[Array],
        grad_zw: list[Array],
    ) -> None:
        head = self.tasks[task]
        # d/dlogits of the summed sigmoid cross-entropy is probs - labels
        g_logits = coeff * (cache.probs - labels)
        grads[f"{task}.head.out.W"] += np.outer(g_logits, cache.r0d)
        grads[f"{task}.head.out.b"] += g_logits
        g = head.out.W.T @ g_logits
        g = dropout_backward(g, cache.head_mask, self.config.dropout_rate)
        g = g * (cache.head_pre > 0)
        grads[f"{task}.head.hidden.W"] += np.outer(g, cache.r)
        grads[f"{task}.head.hidden.b"] += g
        grad_r = head.hidden.W.T @ g

        grad_a, g_zv, g_mo, g_mw = att.inter_combine_backward(cache.inter, grad_r)
        if head.inter_a is not None:
            grads[f"{task}.inter_a"] += grad_a
        grad_zv += g_zv
        if cache.intra_obj is not None:
            gq, gzs = att.intra_attend_backward(cache.intra_obj, g_mo)
            if head.q_obj is not None:
                grads[f"{task}.q_obj"] += gq
            for j, gz in enumerate(gzs):
                grad_zo[j] += gz
        if cache.intra_word is not None:
            gq, gzs = att.intra_attend_backward(cache.intra_word, g_mw)
            if head.q_word is not None:
                grads[f"{task}.q_word"] += gq
            for j, gz in enumerate(gzs):
                grad_zw[j] += gz

    @staticmethod
    def _acc(grads: dict[str, Array], prefix: str, local: dict[str, Array]) -> None:
        for name, g in local.items():
            grads[f"{prefix}.{name}"] += g

    # ------------------------------------------------------------- state i/o

    def state_dict(self) -> dict[str, Array]:
        return {path: arr.copy() for path, arr in self.params.items()}

    def load_state(self, state: dict[str, Array]) -> None:
        if set(state) != set(self.params):
            missing = set(self.params) - set(state)
            extra = set(state) - set(self.params)
            raise ConfigError(f"checkpoint/model mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for path, arr in state.items():
            if arr.shape != self.params[path].shape:
                raise ConfigError(
                    f"checkpoint shape mismatch at {path}: {arr.shape} vs {self.params[path].shape}"
                )
            self.params[path][...] = arr


def build(config: ModelConfig, seed: int) -> Model:
    """Deterministically initialize a model: same (config, seed) -> same weights."""
    return Model(config, seed)


def predict(probs: Array, threshold: float = 0.5) -> Array:
    """Multi-hot decision: label k active iff probs_k > threshold (strict)."""
    return (np.asarray(probs) > threshold).astype(np.int64)
