"""Hierarchical multimodal attention: intra-modality pooling, inter-modality mixing.

Intra-modality attention scores a variable-size set of same-dim vectors
against a learned kernel q (dot product), softmaxes the scores into convex
weights and returns the weighted sum. It is permutation-equivariant and
takes any number of vectors.

Inter-modality attention holds three unconstrained scalars, one per
modality in fixed order (visual, object, word). Each modality vector is
scaled by its scalar and the results are concatenated; no softmax is
applied, so a scalar can go negative to penalize a misleading modality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UsageError
from .numerics import Array, Rng, softmax, softmax_backward

MODALITIES = ("visual", "object", "word")


def init_intra_kernel(dim: int, rng: Rng) -> Array:
    # std 1/sqrt(dim) keeps initial scores O(1) so the softmax starts unsaturated
    return rng.normal((dim,), std=1.0 / np.sqrt(dim))


def init_inter_scores() -> Array:
    # ones == plain concatenation at init, a clean ablation baseline
    return np.ones(3)


@dataclass
class IntraCache:
    zs: Array       # (N, d) stacked inputs
    weights: Array  # (N,) softmax weights
    q: Array
    uniform: bool   # True when pooled with fixed uniform weights (no kernel)


def intra_attend(q: Array, zs: list[Array]) -> tuple[Array, Array, IntraCache]:
    """Kernel-scored softmax pooling: m = sum_j softmax(q . z_j) * z_j."""
    if len(zs) == 0:
        raise UsageError("intra_attend needs a non-empty set; the model maps empty modalities to zero")
    Z = np.stack(zs, axis=0)
    if Z.shape[1] != q.shape[0]:
        raise ShapeError(f"kernel dim {q.shape} does not match feature dim {Z.shape}")
    scores = Z @ q
    weights = softmax(scores)
    m = Z.T @ weights
    return m, weights, IntraCache(zs=Z, weights=weights, q=q, uniform=False)


def uniform_attend(zs: list[Array]) -> tuple[Array, Array, IntraCache]:
    """Mean pooling through the same computation path as intra_attend.

    Used by the attention ablation; with equal scores the two coincide
    bitwise because both reduce to Z.T @ (1/N, ..., 1/N).
    """
    if len(zs) == 0:
        raise UsageError("uniform_attend needs a non-empty set")
    Z = np.stack(zs, axis=0)
    weights = np.full(Z.shape[0], 1.0 / Z.shape[0])
    m = Z.T @ weights
    return m, weights, IntraCache(zs=Z, weights=weights, q=np.zeros(Z.shape[1]), uniform=True)


def intra_attend_backward(cache: IntraCache, grad_m: Array) -> tuple[Array, list[Array]]:
    """Analytic gradients through the weighted sum and the softmax."""
    Z = cache.zs
    w = cache.weights
    if cache.uniform:
        grad_q = np.zeros_like(cache.q)
        grad_Z = np.outer(w, grad_m)
    else:
        grad_w = Z @ grad_m
        grad_scores = softmax_backward(w, grad_w)
        grad_q = Z.T @ grad_scores
        grad_Z = np.outer(w, grad_m) + np.outer(grad_scores, cache.q)
    return grad_q, [grad_Z[j] for j in range(Z.shape[0])]


@dataclass
class InterCache:
    a: Array
    parts: tuple[Array, Array, Array]


def inter_combine(a: Array, z_visual: Array, m_object: Array, m_word: Array) -> tuple[Array, InterCache]:
    """r = concat(a1 * zV, a2 * mO, a3 * mW), output dim 3d."""
    if a.shape != (3,):
        raise ShapeError(f"inter-modality score vector must have shape (3,), got {a.shape}")
    d = z_visual.shape[0]
    if m_object.shape != (d,) or m_word.shape != (d,):
        raise ShapeError(
            f"modality dims differ: visual {z_visual.shape}, object {m_object.shape}, word {m_word.shape}"
        )
    r = np.concatenate([a[0] * z_visual, a[1] * m_object, a[2] * m_word])
    return r, InterCache(a=a, parts=(z_visual, m_object, m_word))


def inter_combine_backward(cache: InterCache, grad_r: Array) -> tuple[Array, Array, Array, Array]:
    """grad_a[k] = <grad segment k, modality k>; modality grads scale by a[k]."""
    d = cache.parts[0].shape[0]
    if grad_r.shape != (3 * d,):
        raise ShapeError(f"grad_r shape {grad_r.shape} does not match output dim {3 * d}")
    segs = (grad_r[:d], grad_r[d : 2 * d], grad_r[2 * d :])
    grad_a = np.array([float(segs[k] @ cache.parts[k]) for k in range(3)])
    grad_parts = tuple(cache.a[k] * segs[k] for k in range(3))
    return grad_a, grad_parts[0], grad_parts[1], grad_parts[2]
