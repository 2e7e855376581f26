# %% [markdown]
# # How many examples per class in a batch?
#
# The batch size stays at 128; the group size n sets how many items of each
# class it holds.  With n = 2 the "easy" positive is just the only positive.
# Larger groups give the easy-positive rule a real choice.  64 classes keep
# n = 2 batches full.

# %%
from epmine import (
    LossConfig, MlpConfig, RetrievalConfig, SamplerConfig, SyntheticSpec, TrainConfig,
    embed, generate_synthetic, recall_at_k, split_by_class, train,
)

for seed in range(3):
    spec = SyntheticSpec(num_classes=64, modes_per_class=2, samples_per_class=32, input_dim=16,
                         mode_separation=6.0, class_separation=2.0, noise_std=2.0, seed=seed)
    train_ds, test_ds = split_by_class(generate_synthetic(spec), 0.5, seed=seed)
    row = []
    for n in (2, 4, 8):
        params, _ = train(train_ds, MlpConfig(16, (64,), 16, seed=seed), SamplerConfig(128, n, seed),
                          LossConfig(strategy="EPSHN"), TrainConfig(40, 0.01, (20, 30), 0.1, 0.9),
                          seed=seed)
        r1 = recall_at_k(embed(params, test_ds.features), test_ds.labels,
                         cfg=RetrievalConfig(k_values=(1,))).recall_at_k[1]
        row.append(f"n={n}: {r1:.3f}")
    print(f"seed {seed}  " + "  ".join(row))

# %% [markdown]
# The same sweep from the command line, for any list of strategies:
#
#     epmine sweep --config sweep.cfg --out out/
#
# with `sweep_group_sizes = 2, 4, 8` and `sweep_strategies = EPSHN, HPHN` in
# the config.
