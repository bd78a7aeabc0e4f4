"""Plain mini-batch SGD, only used to reach a realistic evaluation point."""

import logging

import numpy as np

from .autodiff import grad_batch
from .model import cost, init_params

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


def sgd(spec, data, learning_rate, epochs, batch_size, seed=0, params=None):
    """Run SGD on the averaged cost.

    Example order is reshuffled every epoch from a generator seeded with
    ``seed``, so a fixed seed gives bit-identical parameters. Returns the
    final parameters and the list of full-dataset costs (initial cost first,
    then one per epoch).
    """
    if learning_rate < 0:
        raise ValueError("learning_rate must be >= 0")
    batches_per_epoch = len(data.split(batch_size))
    rng = np.random.default_rng(seed)
    w = init_params(spec, seed) if params is None else np.array(params, dtype=np.float64)
    history = [cost(spec, w, data)]
    for epoch in range(epochs):
        perm = rng.permutation(len(data))
        shuffled = data[perm]
        for b in range(batches_per_epoch):
            mb = shuffled[b * batch_size:(b + 1) * batch_size]
            w = w - learning_rate * grad_batch(spec, w, mb).mean
        c = cost(spec, w, data)
        if not np.isfinite(c) or not np.all(np.isfinite(w)):
            raise TrainingError(
                f"cost became {c} in epoch {epoch + 1} (learning_rate={learning_rate}); "
                "try a smaller learning rate")
        history.append(c)
        log.info("epoch %d cost %.6f", epoch + 1, c)
    return w, history
