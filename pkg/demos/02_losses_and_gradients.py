# %% [markdown]
# # NCA loss over mined terms, and checking its gradient
#
# Every NCA strategy turns a batch into (anchor, positive, negatives) terms.
# With temperature 0.1 a similarity gap of 0.1 is already a factor e in the
# softmax.

# %%
import numpy as np

from epmine import LossConfig, compute_loss, nca_term

loss, d_pos, d_neg = nca_term(0.9, [0.8], 0.1)
print(f"one term: loss {loss:.6f}  dL/ds_pos {d_pos:+.4f}  dL/ds_neg {d_neg[0]:+.4f}")

# %% [markdown]
# Random batch, every strategy.  Group size 2 is special: there is only one
# positive per anchor, so EP, HP, NPAIR and BATCH_ALL all reduce to the same
# terms.

# %%
rng = np.random.default_rng(0)
labels = rng.permutation(np.repeat(np.arange(8), 2))
x = rng.standard_normal((16, 8))
e = x / np.linalg.norm(x, axis=1, keepdims=True)
for s in ("EP", "HP", "NPAIR", "BATCH_ALL", "EPHN", "HPHN", "EPSHN", "TRIPLET_MARGIN"):
    out = compute_loss(e, labels, LossConfig(strategy=s))
    print(f"{s:>15}: loss {out.loss:.12f}  anchors {out.num_anchors}")

# %% [markdown]
# Central differences on the embedding.  Mined indices are constants inside
# the loss, so this only works while a nudge of 1e-6 does not change what was
# mined (with random data that is almost always the case).

# %%
cfg = LossConfig(strategy="EPSHN")
base = compute_loss(e, labels, cfg)
num = np.zeros_like(e)
h = 1e-6
for i in range(e.shape[0]):
    for j in range(e.shape[1]):
        xp, xm = e.copy(), e.copy()
        xp[i, j] += h
        xm[i, j] -= h
        num[i, j] = (compute_loss(xp, labels, cfg).loss - compute_loss(xm, labels, cfg).loss) / (2 * h)
rel = np.abs(base.grad - num).max() / np.abs(num).max()
print(f"max relative gradient error: {rel:.2e}")
