import numpy as np
import pytest

from gcpkit import diffcore as dc


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d f / d x by central differences; f maps an array to a float."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        grad[i] = (fp - fm) / (2 * h)
    return grad


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-12))


def param_gradient_error(store: dc.ParamStore, loss_fn, h: float = 1e-5, max_entries: int | None = None,
                         rng=None) -> dict[str, float]:
    """Relative error of autodiff vs central differences for every parameter.

    ``loss_fn()`` rebuilds the graph from the current parameter values.
    ``max_entries`` caps how many entries per tensor are probed.
    """
    store.zero_grad()
    dc.backward(loss_fn())
    grads = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for k, t in store}
    errors = {}
    for name, t in store:
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        fd = np.zeros(len(idx))
        for n, k in enumerate(idx):
            old = flat[k]
            flat[k] = old + h
            fp = loss_fn().item()
            flat[k] = old - h
            fm = loss_fn().item()
            flat[k] = old
            fd[n] = (fp - fm) / (2 * h)
        ad = grads[name].reshape(-1)[idx]
        scale = max(np.abs(fd).max(), np.abs(ad).max(), 1e-6)
        errors[name] = float(np.abs(fd - ad).max() / scale)
    store.zero_grad()
    return errors


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
