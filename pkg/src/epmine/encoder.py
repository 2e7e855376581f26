"""A small ReLU MLP with unit-sphere output, trained with step-decay SGD."""
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import batches_per_epoch, sample_group_batch
from .errors import ConfigError, NoPositivePair, NoValidTriplet, ParseError, ShapeMismatch, ZeroRow
from .linalg import ZERO_NORM, row_norms
from .losses import compute_loss

log = logging.getLogger(__name__)

MLP1_MAGIC = b"MLP1"
MAX_RESAMPLE = 100


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_dims: tuple = (64,)
    embed_dim: int = 64
    activation: str = "relu"
    init_scale: float = float(np.sqrt(2.0))
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.embed_dim < 2:
            raise ConfigError("embed_dim must be >= 2")
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ConfigError("all layer widths must be >= 1")
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation {self.activation!r}")

    @property
    def dims(self):
        return (self.input_dim, *self.hidden_dims, self.embed_dim)

    def describe(self):
        return "mlp[" + "-".join(str(d) for d in self.dims) + "]+l2norm"


@dataclass
class MlpParams:
    weights: list
    biases: list

    def __post_init__(self):
        for i in range(1, len(self.weights)):
            if self.weights[i - 1].shape[1] != self.weights[i].shape[0]:
                raise ShapeMismatch(f"layer {i} input does not match layer {i - 1} output")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise ShapeMismatch(f"bias shape {b.shape} does not match weight {w.shape}")

    def arrays(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self):
        return MlpParams([np.zeros_like(w) for w in self.weights],
                         [np.zeros_like(b) for b in self.biases])

    def equals(self, other):
        return len(self.weights) == len(other.weights) and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    base_lr: float = 0.0005
    lr_decay_epochs: tuple = (20, 30)
    lr_decay_factor: float = 0.1
    momentum: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lr_decay_epochs", tuple(int(x) for x in self.lr_decay_epochs))
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not self.base_lr > 0:
            raise ConfigError("base_lr must be > 0")
        d = self.lr_decay_epochs
        if any(b <= a for a, b in zip(d, d[1:])):
            raise ConfigError("lr_decay_epochs must be strictly increasing")
        if d and d[-1] >= self.epochs:
            raise ConfigError("lr_decay_epochs must all be < epochs")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")


def init_params(cfg):
    """Gaussian weights scaled by ``init_scale / sqrt(fan_in)``, zero biases."""
    rng = np.random.default_rng(cfg.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(cfg.dims[:-1], cfg.dims[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) * (cfg.init_scale / np.sqrt(fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def forward(params, x):
    """Embed rows of ``x``; returns ``(e, cache)`` with unit-norm rows in ``e``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.weights[0].shape[0]:
        raise ShapeMismatch(
            f"input of shape {x.shape} does not fit a first layer of {params.weights[0].shape}"
        )
    acts = [x]
    pre = []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        # einsum without BLAS: a row's embedding is bitwise independent of the batch it is in
        z = np.einsum("ij,jk->ik", h, w, optimize=False) + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        if i < last:
            acts.append(h)
    norms = row_norms(h)
    bad = np.flatnonzero(norms <= ZERO_NORM)
    if bad.size:
        raise ZeroRow(int(bad[0]))
    e = h / norms[:, None]
    return e, {"acts": acts, "pre": pre, "norms": norms, "e": e}


def normalize_backward(e, norms, grad_e):
    # Jacobian of v / |v| is (I - e e^T) / |v|
    radial = np.einsum("ij,ij->i", grad_e, e)
    return (grad_e - e * radial[:, None]) / norms[:, None]


def backward(params, cache, grad_e):
    grad_e = np.asarray(grad_e, dtype=np.float64)
    if grad_e.shape != cache["e"].shape:
        raise ShapeMismatch(f"grad shape {grad_e.shape} != embedding shape {cache['e'].shape}")
    g = normalize_backward(cache["e"], cache["norms"], grad_e)
    n = len(params.weights)
    gw, gb = [None] * n, [None] * n
    for i in range(n - 1, -1, -1):
        gw[i] = cache["acts"][i].T @ g
        gb[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ params.weights[i].T) * (cache["pre"][i - 1] > 0)
    return MlpParams(gw, gb)


def sgd_step(params, grads, lr, momentum=0.0, velocity=None):
    """One SGD update; returns ``(new_params, new_velocity)``.

    velocity <- momentum * velocity + grad;  param <- param - lr * velocity
    """
    if velocity is None:
        velocity = params.zeros_like()

    def update(ps, gs, vs):
        new_p, new_v = [], []
        for p, g, v in zip(ps, gs, vs):
            if p.shape != g.shape:
                raise ShapeMismatch(f"gradient shape {g.shape} != parameter shape {p.shape}")
            v = momentum * v + g
            new_v.append(v)
            new_p.append(p - lr * v)
        return new_p, new_v

    w, vw = update(params.weights, grads.weights, velocity.weights)
    b, vb = update(params.biases, grads.biases, velocity.biases)
    return MlpParams(w, b), MlpParams(vw, vb)


def lr_at_epoch(cfg, epoch):
    drops = sum(1 for d in cfg.lr_decay_epochs if d <= epoch)
    return cfg.base_lr * cfg.lr_decay_factor ** drops


def embed(params, x):
    return forward(params, x)[0]


@dataclass
class TrainingLog:
    backbone: str = ""
    strategy: str = ""
    rows: list = field(default_factory=list)  # (epoch, batch, loss, lr)
    epoch_means: list = field(default_factory=list)
    skipped_batches: int = 0

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("epoch,batch,loss,lr\n")
            for epoch, batch, loss, lr in self.rows:
                fh.write(f"{epoch},{batch},{loss:.17g},{lr:.17g}\n")


def _draw_batch(ds, sampler_cfg, rng):
    for _ in range(MAX_RESAMPLE):
        try:
            return sample_group_batch(ds, sampler_cfg, rng)
        except NoPositivePair:
            continue
    raise NoPositivePair(f"no usable batch after {MAX_RESAMPLE} draws")


def train(ds, mlp_cfg, sampler_cfg, loss_cfg, train_cfg, seed=None):
    """Train an embedding network from ``mlp_cfg``'s initialization.

    Batch sampling (and random positives, if the loss needs them) draw from a
    generator seeded with ``seed``, defaulting to ``sampler_cfg.seed``.
    An epoch is ``ceil(len(ds) / batch_size)`` batches.
    """
    if ds.dim != mlp_cfg.input_dim:
        raise ShapeMismatch(f"dataset dim {ds.dim} != network input_dim {mlp_cfg.input_dim}")
    rng = np.random.default_rng(sampler_cfg.seed if seed is None else seed)
    params = init_params(mlp_cfg)
    velocity = None
    tlog = TrainingLog(backbone=mlp_cfg.describe(), strategy=loss_cfg.strategy)
    n_batches = batches_per_epoch(ds, sampler_cfg)
    for epoch in range(train_cfg.epochs):
        lr = lr_at_epoch(train_cfg, epoch)
        losses = []
        for b in range(n_batches):
            batch = _draw_batch(ds, sampler_cfg, rng)
            try:
                e, cache = forward(params, ds.features[batch.indices])
                out = compute_loss(e, batch.labels, loss_cfg, rng=rng)
            except (ZeroRow, NoValidTriplet) as exc:
                log.warning("epoch %d batch %d skipped: %s", epoch, b, exc)
                tlog.skipped_batches += 1
                continue
            grads = backward(params, cache, out.grad)
            params, velocity = sgd_step(params, grads, lr, train_cfg.momentum, velocity)
            losses.append(out.loss)
            tlog.rows.append((epoch, b, out.loss, lr))
        tlog.epoch_means.append(float(np.mean(losses)) if losses else float("nan"))
    return params, tlog


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(params, path):
    """MLP1 container: magic, u32 layer count, (u32 in, u32 out) per layer, then
    per layer the row-major weight followed by the bias, all little-endian f64."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MLP1_MAGIC)
        fh.write(struct.pack("<I", len(params.weights)))
        for w in params.weights:
            fh.write(struct.pack("<II", *w.shape))
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return path


def load_checkpoint(path):
    blob = Path(path).read_bytes()
    if blob[:4] != MLP1_MAGIC:
        raise ParseError("bad magic, expected MLP1", offset=0)
    (n_layers,) = struct.unpack_from("<I", blob, 4)
    off = 8
    shapes = []
    for _ in range(n_layers):
        shapes.append(struct.unpack_from("<II", blob, off))
        off += 8
    weights, biases = [], []
    for fan_in, fan_out in shapes:
        nw = fan_in * fan_out
        if off + 8 * (nw + fan_out) > len(blob):
            raise ParseError("truncated parameter block", offset=off)
        weights.append(np.frombuffer(blob, "<f8", nw, off).reshape(fan_in, fan_out).astype(np.float64))
        off += 8 * nw
        biases.append(np.frombuffer(blob, "<f8", fan_out, off).astype(np.float64))
        off += 8 * fan_out
    if off != len(blob):
        raise ParseError("trailing bytes after parameters", offset=off)
    return MlpParams(weights, biases)
