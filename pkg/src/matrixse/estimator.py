"""scikit-learn style wrapper around the Matrix-SE network.

Each sample is a square grid of integer symbols and each label is a grid of
the same shape, so ``fit``/``predict`` work on batches of grids rather than
on 2D feature matrices.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import autodiff as ad
from .harness import BatchStats, batch_loss, predict
from .model import init_params, matrix_se_forward, recurrent_apply
from .optim import RAdamState, radam_step
from .tasks import TaskInstance
from .validation import check_grids, check_matching


class MatrixSEClassifier(ClassifierMixin, BaseEstimator):
    """Grid-to-grid classifier trained with RAdam on masked cross-entropy.

    Parameters
    ----------
    maps : int
        Feature maps per position.
    blocks : int
        Number of Benes blocks.
    flatten : {"zorder", "raster"}
    steps : int
        Optimisation steps taken by ``fit``.
    batch_size : int
    learning_rate : float
    recurrent_steps : int
        Passes through the block stack; the loss is summed over passes.
    pad_symbol : int or None
        Fill value used to pad grids that are not power-of-two squares.
    vocab_in, vocab_out : int or None
        Inferred from the training data when None.
    random_state : int
    """

    def __init__(self, maps=48, blocks=2, flatten="zorder", steps=1000, batch_size=16, learning_rate=1e-3,
                 recurrent_steps=1, pad_symbol=None, vocab_in=None, vocab_out=None, random_state=0):
        self.maps = maps
        self.blocks = blocks
        self.flatten = flatten
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.recurrent_steps = recurrent_steps
        self.pad_symbol = pad_symbol
        self.vocab_in = vocab_in
        self.vocab_out = vocab_out
        self.random_state = random_state

    def fit(self, X, y, sample_mask=None):
        raw_shapes = [np.shape(g) for g in X]
        X = check_grids(X, pad_symbol=self.pad_symbol)
        y = check_grids(y, name="y", pad_symbol=0)
        check_matching(X, y)
        if sample_mask is None:
            masks = []
            for (rows, cols), grid in zip(raw_shapes, y):
                m = np.zeros_like(grid)
                m[:rows, :cols] = 1
                masks.append(m)
        else:
            masks = check_grids(sample_mask, name="sample_mask", pad_symbol=0)
            check_matching(X, masks, name="sample_mask")
        self.vocab_in_ = self.vocab_in or int(max(g.max() for g in X)) + 1
        self.vocab_out_ = self.vocab_out or int(max(g.max() for g in y)) + 1
        self.classes_ = np.arange(self.vocab_out_)

        self.params_ = init_params(self.maps, self.blocks, self.vocab_in_, self.vocab_out_,
                                   seed=self.random_state, flatten_kind=self.flatten)
        self.optimizer_ = RAdamState(learning_rate=self.learning_rate)
        named = self.params_.named_arrays()
        samples = [TaskInstance(a, b, m, "custom", len(a), i) for i, (a, b, m) in enumerate(zip(X, y, masks))]
        rng = np.random.default_rng(self.random_state)
        self.loss_curve_ = []
        for _ in range(self.steps):
            idx = rng.integers(len(samples), size=min(self.batch_size, len(samples)))
            self.params_.zero_grad()
            loss, _ = batch_loss(self.params_, [samples[i] for i in idx], self.recurrent_steps)
            ad.backward(loss)
            radam_step(named, self.params_.gradients(), self.optimizer_)
            self.loss_curve_.append(float(loss.data))
        self.n_iter_ = self.steps
        return self

    def _batches(self, X):
        check_is_fitted(self, "params_")
        X = check_grids(X, pad_symbol=self.pad_symbol)
        by_side: dict[int, list[int]] = {}
        for i, g in enumerate(X):
            by_side.setdefault(g.shape[0], []).append(i)
        return X, by_side

    def predict_proba(self, X):
        X, by_side = self._batches(X)
        out: list = [None] * len(X)
        for idx in by_side.values():
            batch = np.stack([X[i] for i in idx])
            if self.recurrent_steps == 1:
                logits = matrix_se_forward(batch, self.params_).data
            else:
                logits = recurrent_apply(batch, self.params_, self.recurrent_steps)[-1].data
            z = np.exp(logits - logits.max(axis=-1, keepdims=True))
            probs = z / z.sum(axis=-1, keepdims=True)
            for j, i in enumerate(idx):
                out[i] = probs[j]
        return _maybe_stack(out)

    def predict(self, X):
        X, by_side = self._batches(X)
        out: list = [None] * len(X)
        for idx in by_side.values():
            pred = predict(self.params_, np.stack([X[i] for i in idx]), self.recurrent_steps)
            for j, i in enumerate(idx):
                out[i] = pred[j]
        return _maybe_stack(out)

    def score(self, X, y, sample_mask=None):
        """Per-element accuracy over masked positions."""
        pred = self.predict(X)
        y = check_grids(y, name="y", pad_symbol=0)
        masks = [np.ones_like(g) for g in y] if sample_mask is None else check_grids(sample_mask, pad_symbol=0)
        stats = BatchStats()
        for p, t, m in zip(pred, y, masks):
            stats.add(p[None], t[None], m[None])
        return stats.per_element


def _maybe_stack(items: list):
    shapes = {a.shape for a in items}
    return np.stack(items) if len(shapes) == 1 else items
