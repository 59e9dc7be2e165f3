"""Command-line interface.

Subcommands: init-config, train, report, bench, ablate-doping.
Exit codes: 0 success, 2 config/input errors, 3 numerical aborts.
"""

from __future__ import annotations

import argparse
import json
import pathlib
import sys

import numpy as np

from . import config as cfgmod
from .bench import emit_report, time_matvec
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .doped import size_kp_factors_for_budget
from .lm import TrainingDiverged, evaluate_perplexity, model_mac_report, train

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

DEFAULT_CORPUS = pathlib.Path(__file__).parent / "data" / "corpus.txt"


def load_tokens(path) -> list:
    text = pathlib.Path(path).read_text()
    tokens = text.split()
    if not tokens:
        raise cfgmod.ConfigError(f"{path}: no tokens")
    return tokens


def cmd_init_config(args):
    cfg = cfgmod.make_preset(args.preset)
    cfgmod.save_config(cfg, args.out)
    print(f"wrote {args.preset} config to {args.out}")
    return 0


def cmd_train(args):
    cfg = cfgmod.load_config(args.config)
    tokens = load_tokens(args.data or DEFAULT_CORPUS)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"

    def log_fn(entry):
        line = json.dumps(entry, sort_keys=True)
        print(line)
        with open(log_path, "a") as f:
            f.write(line + "\n")

    rng = np.random.default_rng(cfg.seed)
    start_epoch, model, log = 0, None, None
    if args.resume:
        ck = load_checkpoint(args.resume)
        model, rng, log = ck["model"], ck["rng"], ck["log"]
        start_epoch = ck["epoch"] + 1
    try:
        model, log = train(cfg, tokens, log_fn=log_fn, start_epoch=start_epoch,
                           model=model, rng=rng, log=log)
    except TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    save_checkpoint(out / "checkpoint.dkpt", cfg, model, cfg.epochs - 1, rng, log)
    with open(out / "mac_report.json", "w") as f:
        json.dump(model_mac_report(model), f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"checkpoint and MAC report written to {out}")
    return 0


def cmd_report(args):
    ck = load_checkpoint(args.checkpoint)
    report = model_mac_report(ck["model"])
    hdr = f"{'layer':<10}{'shape':<14}{'variant':<16}{'CF':>8}{'sparsity':>10}{'MAC red.':>10}"
    print(hdr)
    for e in report["layers"]:
        shape = "x".join(map(str, e["shape"]))
        print(f"{e['name']:<10}{shape:<14}{e['variant']:<16}"
              f"{e['compression_factor']:>8.2f}{e['sparsity']:>10.4f}"
              f"{e['reduction']:>10.2f}")
    t = report["totals"]
    print(f"totals: dense MACs {t['dense_macs']}, compressed {t['compressed_macs']}, "
          f"reduction {t['reduction']:.2f}x")
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_bench(args):
    sparsities = [float(s) for s in args.sparsity.split(",")] if args.sparsity else [0.0]
    kp_shapes = tuple(int(v) for v in args.kp_shapes.split(",")) if args.kp_shapes else None
    results = []
    for sp in sparsities:
        results.append(time_matvec(args.kind, args.rows, args.cols, sparsity=sp,
                                   kp_shapes=kp_shapes, iters=args.iters))
    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    emit_report(results, out.with_suffix(".csv"), out.with_suffix(".json"))
    for r in results:
        print(f"{r.kind} {r.rows}x{r.cols} sparsity={r.sparsity:.3f} "
              f"median={r.median_s * 1e6:.1f}us speedup={r.speedup:.2f}x")
    return 0


def cmd_ablate(args):
    """Sweep the KP-compression vs doping split at a fixed overall CF."""
    cfg = cfgmod.load_config(args.config)
    tokens = load_tokens(args.data or DEFAULT_CORPUS)
    m = 4 * cfg.hidden_size
    n = cfg.embed_size + cfg.hidden_size
    total = m * n
    rows = []
    for cell in args.grid.split(","):
        kp_cf_s, _, dop_s = cell.partition("x")
        kp_cf, dop_pct = float(kp_cf_s), float(dop_s)
        shapes = size_kp_factors_for_budget(m, n, total / kp_cf)
        kp_params = shapes[0] * shapes[1] + shapes[2] * shapes[3]
        nnz = int(round(dop_pct / 100.0 * total))
        overall = total / (kp_params + nnz)
        row = {"kp_cf": kp_cf, "doping_pct": dop_pct, "overall_cf": overall}
        if abs(overall - args.overall_cf) / args.overall_cf > 0.02:
            row.update({"status": "infeasible",
                        "reason": f"cell CF {overall:.2f} != target {args.overall_cf}"})
            rows.append(row)
            continue
        cell_cfg = cfgmod.config_from_dict({
            **cfgmod.config_to_dict(cfg),
            "layers": [{"variant": "kp", "target_cf": overall, "doped": dop_pct > 0,
                        "shapes": list(shapes)}]})
        try:
            model, _ = train(cell_cfg, tokens)
        except TrainingDiverged as e:
            row.update({"status": "diverged", "reason": str(e)})
            rows.append(row)
            continue
        n_valid = int(len(tokens) * cell_cfg.valid_fraction)
        valid_ids = model.vocab.encode(tokens[-n_valid:])
        row.update({"status": "ok",
                    "final_ppl": evaluate_perplexity(model, cell_cfg, valid_ids)})
        rows.append(row)
        print(json.dumps(row, sort_keys=True))
    with open(args.out, "w") as f:
        json.dump(rows, f, indent=2, sort_keys=True)
        f.write("\n")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="dopedmat",
                                description="Doped structured matrix compression toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("init-config", help="write a preset run configuration")
    sp.add_argument("--preset", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_init_config)

    sp = sub.add_parser("train", help="train a toy LSTM LM with doped layers")
    sp.add_argument("--config", required=True)
    sp.add_argument("--data", default=None, help="token file (default: bundled corpus)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--resume", default=None, help="checkpoint to resume from")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("report", help="per-layer CF / sparsity / MAC report")
    sp.add_argument("--checkpoint", required=True)
    sp.set_defaults(fn=cmd_report)

    sp = sub.add_parser("bench", help="time matvec kernels")
    sp.add_argument("--kind", required=True, choices=["dense", "csr", "kp", "doped"])
    sp.add_argument("--rows", type=int, required=True)
    sp.add_argument("--cols", type=int, required=True)
    sp.add_argument("--sparsity", default=None, help="comma-separated values")
    sp.add_argument("--kp-shapes", default=None, help="M1,N1,M2,N2")
    sp.add_argument("--iters", type=int, default=200)
    sp.add_argument("--out", required=True, help="output path prefix (.csv/.json)")
    sp.set_defaults(fn=cmd_bench)

    sp = sub.add_parser("ablate-doping",
                        help="sweep KP-compression vs doping split at fixed overall CF")
    sp.add_argument("--config", required=True)
    sp.add_argument("--data", default=None)
    sp.add_argument("--grid", required=True,
                    help="comma-separated cells kp_cf x doping%%, e.g. '20x4.5,40x7'")
    sp.add_argument("--overall-cf", type=float, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_ablate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (cfgmod.ConfigError, CheckpointError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
