import numpy as np


def random_unit_rows(rng, b, d):
    x = rng.standard_normal((b, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_labels(rng, b, max_classes=None, group_size=None):
    """Labels with >= 2 classes and at least one repeated class."""
    if group_size is not None:
        labels = np.repeat(np.arange(b // group_size + 1), group_size)[:b]
        return rng.permutation(labels)
    max_classes = max_classes or max(2, b // 2)
    while True:
        labels = rng.integers(0, rng.integers(2, max_classes + 1), size=b)
        _, counts = np.unique(labels, return_counts=True)
        if len(counts) >= 2 and counts.max() >= 2:
            return labels


def grads_close(analytic, numeric, rel=1e-4, abs_floor=1e-7):
    """Entrywise: relative error < rel, or absolute error < abs_floor near zero."""
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    return bool(np.all((diff <= rel * scale) | (diff < abs_floor)))


def _same_selection(a, b):
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def embedding_fd_check(e, labels, cfg, h=1e-6):
    """Compare the analytic embedding gradient with central differences.

    Returns None when some perturbation changes the mined selection (the
    caller resamples), otherwise whether every entry agrees.
    """
    from epmine.losses import compute_loss

    base = compute_loss(e, labels, cfg)
    num = np.zeros_like(e)
    x = e.copy()
    for i in range(e.shape[0]):
        for j in range(e.shape[1]):
            vals = []
            for step in (h, -h):
                x[i, j] = e[i, j] + step
                out = compute_loss(x, labels, cfg)
                if not _same_selection(out.selection, base.selection):
                    return None
                vals.append(out.loss)
            x[i, j] = e[i, j]
            num[i, j] = (vals[0] - vals[1]) / (2 * h)
    return grads_close(base.grad, num)


def parameter_fd_check(params, x, labels, cfg, h=1e-6):
    """Full pipeline (MLP -> normalize -> loss) gradient vs central differences
    over every parameter entry.  None when a perturbation flips a mined index
    or a ReLU, as in :func:`embedding_fd_check`."""
    from epmine.encoder import backward, forward
    from epmine.losses import compute_loss

    def run():
        e, cache = forward(params, x)
        out = compute_loss(e, labels, cfg)
        pattern = tuple(p > 0 for p in cache["pre"][:-1])
        return out, cache, pattern

    base, cache, pattern = run()
    grads = backward(params, cache, base.grad)
    for p, g in zip(params.arrays(), grads.arrays()):
        num = np.zeros_like(p)
        flat, nflat = p.reshape(-1), num.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            vals = []
            for step in (h, -h):
                flat[k] = orig + step
                out, _, pat = run()
                if not _same_selection(out.selection, base.selection) or not all(
                    np.array_equal(a, b) for a, b in zip(pat, pattern)
                ):
                    flat[k] = orig
                    return None
                vals.append(out.loss)
            flat[k] = orig
            nflat[k] = (vals[0] - vals[1]) / (2 * h)
        if not grads_close(g, num):
            return False
    return True
