# %% [markdown]
# # Picking positives and negatives inside a batch
#
# Seven points on the unit circle, three classes.  Class 0 has points on two
# far-apart arcs (think two "modes" of one class), which is exactly where the
# easy and hard positive disagree.

# %%
import numpy as np

from epmine import cosine_similarity_matrix, mine_batch
from epmine.cli import format_mine_debug, mine_debug_table

angles = np.deg2rad([0, 150, 20, 40, 200, 230, -10])
e = np.stack([np.cos(angles), np.sin(angles)], axis=1)
labels = np.array([0, 0, 1, 1, 2, 2, 0])
S = cosine_similarity_matrix(e)
print(np.round(S, 3))

# %% [markdown]
# Anchor 0 has positives 6 (10 degrees away) and 1 (150 degrees away): EP
# picks 6, HP picks 1.  Under HP the hard negative (item 2, class 1) is far
# more similar than the positive, so HPHN asks to drag item 1 across the
# circle.  Under EPSHN the negative only has to be less similar than item 6,
# so item 2 qualifies and the triplet is an easy one to satisfy.

# %%
for strategy in ("EPHN", "EPSHN", "HPHN"):
    print(strategy)
    for sel in mine_batch(S, labels, strategy):
        print(f"  anchor {sel.anchor}: positive {sel.positive} ({sel.positive_sim:+.3f}), "
              f"negative {sel.negative} ({sel.negative_sim:+.3f})")

# %% [markdown]
# The same table the `mine-debug` command prints.  A `fallback` mark means no
# negative was strictly less similar than the easy positive, so the hardest
# negative stands in.

# %%
S, rows = mine_debug_table(e, labels)
print(format_mine_debug(S, rows, list(range(len(labels)))))
