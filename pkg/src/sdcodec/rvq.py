"""Residual vector quantization with straight-through gradients.

Each stage snaps the running residual to its nearest codebook entry
(Euclidean, ties to the lowest index) and passes the remainder on. Entry 0
of every codebook is pinned to the zero vector and never trained: a stage
can always choose "add nothing", which makes the per-stage residual energy
nonincreasing for every input, not just on trained books.

Losses follow the VQ-VAE split: the codebook loss moves entries toward the
(stopped) residuals, the commitment loss moves the encoder toward the
(stopped) entries. Both are mean-squared over all frames and dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import InvalidConfig, InvalidToken, ShapeMismatch
from .nn import Module
from .spectral import LossValue
from .tensor import Tensor


class Codebook(Module):
    """One quantizer stage: K = 2^bits entries of dimension dim."""

    def __init__(self, bits: int, dim: int, rng: np.random.Generator, dtype=np.float32):
        if bits < 1:
            raise InvalidConfig(f"codebook bits must be >= 1, got {bits}")
        self.bits = bits
        self.dim = dim
        k = 1 << bits
        entries = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(k, dim)).astype(dtype)
        entries[0] = 0.0  # pinned "add nothing" entry
        self.entries = T.tensor(entries, requires_grad=True)
        self.usage_counts = np.zeros(k, dtype=np.int64)
        self.idle_steps = np.zeros(k, dtype=np.int64)

    @property
    def size(self) -> int:
        return self.entries.data.shape[0]

    def nearest(self, rows: np.ndarray) -> np.ndarray:
        """Index of the closest entry per row; first index wins ties."""
        e = self.entries.data
        scores = rows @ e.T - 0.5 * np.sum(e * e, axis=1)[None, :]
        return np.argmax(scores, axis=1)


@dataclass
class RVQResult:
    tokens: np.ndarray                    # [n_q, frames] int64
    quantized_latent: Tensor              # [dim, frames], straight-through
    per_stage_residual_energy: list[float]
    cb_loss_t: Tensor
    cmt_loss_t: Tensor

    @property
    def cb_loss(self) -> LossValue:
        return LossValue(self.cb_loss_t.item(), "cb")

    @property
    def cmt_loss(self) -> LossValue:
        return LossValue(self.cmt_loss_t.item(), "cmt")


def _check_books(books: Sequence[Codebook], dim: int) -> None:
    if not books:
        raise InvalidConfig("need at least one codebook")
    for i, book in enumerate(books):
        if book.entries.data.shape[1] != dim:
            raise ShapeMismatch(
                f"codebook {i} has dimension {book.entries.data.shape[1]}, latent has {dim}")


def rvq_encode_rows(latent_rows: Tensor, books: Sequence[Codebook]) -> RVQResult:
    """Quantize [frames, dim] rows through the codebook cascade."""
    frames, dim = latent_rows.data.shape
    _check_books(books, dim)
    residual = latent_rows.data.copy()
    quantized = np.zeros_like(residual)
    tokens = np.empty((len(books), frames), dtype=np.int64)
    energies: list[float] = []
    cb_terms = []
    cmt_terms = []
    picked_sum = np.zeros_like(residual)

    for i, book in enumerate(books):
        idx = book.nearest(residual)
        tokens[i] = idx
        picked = T.gather_rows(book.entries, idx)            # graph -> codebook
        cb_diff = T.sub(T.tensor(residual.copy()), picked)
        cb_terms.append(T.mean_(T.mul(cb_diff, cb_diff)))
        # residual in-graph w.r.t. the encoder: latent minus entries chosen so far
        cmt_diff = T.sub(T.sub(latent_rows, T.tensor(picked_sum.copy())),
                         T.tensor(picked.data.copy()))
        cmt_terms.append(T.mean_(T.mul(cmt_diff, cmt_diff)))
        residual -= picked.data
        picked_sum += picked.data
        quantized += picked.data
        energies.append(float(np.sum(residual * residual)))

    cb_loss = cb_terms[0]
    cmt_loss = cmt_terms[0]
    for t in cb_terms[1:]:
        cb_loss = T.add(cb_loss, t)
    for t in cmt_terms[1:]:
        cmt_loss = T.add(cmt_loss, t)
    q_rows = T.straight_through(latent_rows, quantized)
    return RVQResult(tokens, T.swap_last2(q_rows), energies, cb_loss, cmt_loss)


def rvq_encode(latent: Tensor, books: Sequence[Codebook]) -> RVQResult:
    """Quantize a [dim, frames] latent; see rvq_encode_rows."""
    if latent.data.ndim != 2:
        raise ShapeMismatch(f"latent must be 2-D [dim, frames], got {latent.data.shape}")
    return rvq_encode_rows(T.swap_last2(latent), books)


def rvq_decode(tokens: np.ndarray, books: Sequence[Codebook]) -> Tensor:
    """Sum the indexed entries per frame -> constant [dim, frames] latent."""
    tokens = np.asarray(tokens)
    if tokens.ndim != 2 or tokens.shape[0] != len(books):
        raise ShapeMismatch(f"tokens {tokens.shape} do not match {len(books)} codebooks")
    _check_books(books, books[0].entries.data.shape[1])
    frames = tokens.shape[1]
    acc = np.zeros((frames, books[0].dim), dtype=books[0].entries.data.dtype)
    for i, book in enumerate(books):
        row = tokens[i]
        if row.min(initial=0) < 0 or row.max(initial=0) >= book.size:
            raise InvalidToken(f"stage {i} token out of range [0, {book.size})")
        acc += book.entries.data[row]
    return T.tensor(np.ascontiguousarray(acc.T))


# -- training-side codebook maintenance ----------------------------------------

def mask_pinned_gradients(books: Sequence[Codebook]) -> None:
    """Keep entry 0 of every book fixed at the zero vector."""
    for book in books:
        if book.entries.grad is not None:
            book.entries.grad[0] = 0.0


def record_usage(books: Sequence[Codebook], tokens: np.ndarray) -> None:
    """Advance idle counters by one step, resetting entries used this step."""
    for i, book in enumerate(books):
        used = np.unique(tokens[i])
        book.usage_counts[used] += np.bincount(tokens[i], minlength=book.size)[used]
        book.idle_steps += 1
        book.idle_steps[used] = 0


def revive_dead_entries(books: Sequence[Codebook], recent_rows: np.ndarray,
                        rng: np.random.Generator, killed_after: int = 100) -> int:
    """Reseed entries idle for killed_after steps from recent encoder outputs."""
    revived = 0
    for book in books:
        dead = np.flatnonzero(book.idle_steps >= killed_after)
        dead = dead[dead != 0]  # the pinned zero entry is never reseeded
        if dead.size == 0 or recent_rows.shape[0] == 0:
            continue
        picks = rng.integers(0, recent_rows.shape[0], size=dead.size)
        book.entries.data[dead] = recent_rows[picks].astype(book.entries.data.dtype)
        book.idle_steps[dead] = 0
        revived += dead.size
    return revived
