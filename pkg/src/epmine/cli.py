"""``epmine`` command line: gen-data, train, eval, sweep, mine-debug.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .data import generate_synthetic, load_features, sample_group_batch, split_by_class, write_features
from .encoder import embed, forward, init_params, load_checkpoint, save_checkpoint, train
from .errors import ConfigError, DimensionMismatch, EpmineError
from .evaluation import (
    RetrievalConfig,
    export_embeddings,
    intra_class_spread,
    neighbor_stats,
    pca_project_2d,
    recall_at_k,
    spread_to_csv,
)
from .linalg import cosine_similarity_matrix
from .mining import (
    mine_easy_negative,
    mine_easy_positive,
    mine_hard_negative,
    mine_hard_positive,
    mine_semi_hard_negative,
)

log = logging.getLogger("epmine")


def load_dataset(cfg):
    if cfg["dataset"]:
        return load_features(cfg["dataset"])
    return generate_synthetic(cfg.synthetic_spec())


def train_test(cfg):
    ds = load_dataset(cfg)
    if cfg["train_fraction"] >= 1.0:
        return ds, ds
    return split_by_class(ds, cfg["train_fraction"], seed=cfg["seed"])


def _out_dir(cfg):
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_params(cfg, input_dim):
    if cfg["checkpoint"]:
        params = load_checkpoint(cfg["checkpoint"])
    else:
        params = init_params(cfg.mlp(input_dim))
    if params.weights[0].shape[0] != input_dim:
        raise DimensionMismatch(
            f"checkpoint expects {params.weights[0].shape[0]}-dim input, dataset has {input_dim}"
        )
    return params


def cmd_gen_data(cfg):
    spec = cfg.synthetic_spec()
    ds = generate_synthetic(spec)
    path = _out_dir(cfg) / f"dataset.{cfg['data_format']}"
    write_features(path, ds.features, ds.labels, format=cfg["data_format"])
    print(
        f"wrote {path}: N={len(ds)} D={ds.dim} classes={len(ds.classes)} "
        f"modes_per_class={spec.modes_per_class}"
    )
    return path


def cmd_train(cfg):
    train_ds, _ = train_test(cfg)
    params, tlog = train(
        train_ds,
        cfg.mlp(train_ds.dim),
        cfg.sampler(),
        cfg.loss(),
        cfg.training(),
        seed=cfg["seed"],
    )
    out = _out_dir(cfg)
    save_checkpoint(params, out / "checkpoint.mlp1")
    tlog.to_csv(out / "train_log.csv")
    print(f"backbone={tlog.backbone} strategy={tlog.strategy} batches={len(tlog.rows)}")
    if tlog.epoch_means:
        print(f"first_epoch_loss={tlog.epoch_means[0]:.6f} last_epoch_loss={tlog.epoch_means[-1]:.6f}")
    return params, tlog


def _eval_sets(cfg):
    train_ds, test_ds = train_test(cfg)
    split = cfg["eval_split"]
    if split == "train":
        query = train_ds
    elif split == "test":
        query = test_ds
    else:
        query = load_dataset(cfg)
    return query, train_ds


def evaluate(params, query, gallery, rcfg):
    q = embed(params, query.features)
    if rcfg.mode == "self_query":
        report = recall_at_k(q, query.labels, cfg=rcfg)
    else:
        g = embed(params, gallery.features)
        report = recall_at_k(q, query.labels, g, gallery.labels, cfg=rcfg)
    return q, report


def cmd_eval(cfg):
    query, gallery = _eval_sets(cfg)
    params = _load_params(cfg, query.dim)
    q, report = evaluate(params, query, gallery, cfg.retrieval())
    stats = neighbor_stats(q, query.labels)
    out = _out_dir(cfg)
    text = report.to_text()
    text += f"nearest_neighbor_accuracy={stats.accuracy():.6f}\n"
    try:
        per_class, pooled = intra_class_spread(q, query.labels)
    except ConfigError as exc:
        # every class is a singleton: there is no spread to report
        log.warning("spread skipped: %s", exc)
    else:
        text += f"pooled_same_class_sim_mean={pooled.mean:.6f}\n"
        text += f"pooled_same_class_sim_std={pooled.std:.6f}\n"
        spread_to_csv(per_class, pooled, out / "spread.csv")
    (out / "report.txt").write_text(text)
    stats.to_csv(out / "neighbor_stats.csv")
    export_embeddings(q, query.labels, out / "embeddings.csv")
    coords = pca_project_2d(q)
    with open(out / "pca_2d.csv", "w", newline="\n") as fh:
        fh.write("index,label,x,y\n")
        for i, (lab, (x, y)) in enumerate(zip(query.labels.tolist(), coords.tolist())):
            fh.write(f"{i},{lab},{x:.9g},{y:.9g}\n")
    sys.stdout.write(report.to_text())
    return report


def run_sweep(cfg, group_sizes, strategies):
    """Recall@1 on the held-out classes for every (strategy, group size).

    All cells share the same initialization and sampling seed.
    """
    train_ds, test_ds = train_test(cfg)
    rcfg = RetrievalConfig(k_values=(1,), mode="self_query")
    rows = []
    for strategy in strategies:
        for n in group_sizes:
            params, _ = train(
                train_ds,
                cfg.mlp(train_ds.dim),
                cfg.sampler(group_size=n),
                cfg.loss(strategy=strategy),
                cfg.training(),
                seed=cfg["seed"],
            )
            _, report = evaluate(params, test_ds, train_ds, rcfg)
            rows.append((strategy, n, report.recall_at_k[1]))
    return rows


def cmd_sweep(cfg):
    rows = run_sweep(cfg, cfg["sweep_group_sizes"], cfg["sweep_strategies"])
    path = _out_dir(cfg) / "sweep.csv"
    with open(path, "w", newline="\n") as fh:
        fh.write("strategy,group_size,recall_at_1\n")
        for strategy, n, r1 in rows:
            fh.write(f"{strategy},{n},{r1:.6f}\n")
    for strategy, n, r1 in rows:
        print(f"{strategy:>10} n={n:<3d} R@1={r1:.4f}")
    return rows


def mine_debug_table(e, labels):
    """Per-anchor EP/HP/HN/SHN/EN selections for one batch.

    Each row is a dict; SHN is measured against the easy positive and is
    marked ``fallback`` (pointing at the hardest negative) when infeasible.
    """
    S = cosine_similarity_matrix(e)
    rows = []
    for a in range(len(labels)):
        ep = mine_easy_positive(S, labels, a)
        hp = mine_hard_positive(S, labels, a)
        hn = mine_hard_negative(S, labels, a)
        en = mine_easy_negative(S, labels, a)
        shn, fallback = None, False
        if ep is not None:
            shn = mine_semi_hard_negative(S, labels, a, S[a, ep])
            if shn is None and hn is not None:
                shn, fallback = hn, True
        rows.append({"anchor": a, "label": int(labels[a]), "EP": ep, "HP": hp,
                     "HN": hn, "SHN": shn, "EN": en, "shn_fallback": fallback})
    return S, rows


def format_mine_debug(S, rows, indices):
    def cell(j, a):
        if j is None:
            return f"{'-':>13}"
        return f"{j:>4d}({S[a, j]:+.4f})"

    lines = [f"batch of {len(rows)} items; dataset indices: {' '.join(map(str, indices))}", ""]
    lines.append("similarity matrix:")
    for row in S:
        lines.append(" ".join(f"{v:+.3f}" for v in row))
    lines.append("")
    lines.append(
        f"{'anchor':>6} {'label':>5} {'EP':>13} {'HP':>13} {'HN':>13} {'SHN':>13} {'':8} {'EN':>13}"
    )
    for r in rows:
        a = r["anchor"]
        mark = "fallback" if r["shn_fallback"] else ""
        lines.append(
            f"{a:>6d} {r['label']:>5d} {cell(r['EP'], a)} {cell(r['HP'], a)} "
            f"{cell(r['HN'], a)} {cell(r['SHN'], a)} {mark:8} {cell(r['EN'], a)}"
        )
    return "\n".join(lines) + "\n"


def cmd_mine_debug(cfg):
    train_ds, _ = train_test(cfg)
    params = _load_params(cfg, train_ds.dim)
    rng = np.random.default_rng(cfg["seed"])
    batch = sample_group_batch(train_ds, cfg.sampler(), rng)
    e, _ = forward(params, train_ds.features[batch.indices])
    S, rows = mine_debug_table(e, batch.labels)
    text = format_mine_debug(S, rows, batch.indices.tolist())
    (_out_dir(cfg) / "mine_debug.txt").write_text(text)
    sys.stdout.write(text)
    return rows


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "mine-debug": cmd_mine_debug,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="epmine", description="In-batch mining, embedding training and retrieval evaluation")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="flat key = value config file")
    parser.add_argument("--out", type=Path, help="output directory (overrides out_dir)")
    parser.add_argument("--seed", type=int, help="overrides the config seed")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
            return ConfigError.exit_code
        overrides["seed"] = args.seed
    try:
        cfg = ExperimentConfig.from_file(args.config, overrides)
        COMMANDS[args.command](cfg)
    except EpmineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
