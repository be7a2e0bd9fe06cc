"""Command-line pipelines over the library, driven by one config document.

Every subcommand reads a single JSON (or YAML) config file, validates it
up front with field-level messages, runs the corresponding library
operations, and writes artifacts atomically. All randomized steps take
explicit seeds from the config; a missing seed is a validation error.
Reruns with identical config and inputs produce byte-identical artifacts
apart from the isolated "timestamp" key.

Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical error.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import artifacts
from .embeddings import (EmbeddingSet, SyntheticConfig, generate_synthetic,
                         read_embeddings, split, write_embeddings)
from .encoder import init_encoder
from .errors import ConfigError, CorelensError, DataError
from .inversion import InversionConfig, encode_text, inversion_grid, invert
from .metrics import (GroupReport, compare_reports, group_report,
                      report_csv_rows, sweep_report)
from .probes import (LinearProbe, TrainConfig, predict, train_dfr, train_erm,
                     zero_shot_matrix)
from .projection import build_basis, project_out
from .similarity import audit, similarities

COMMANDS = ("gen-synth", "split", "probe-train", "distill", "eval",
            "compare", "sweep", "audit", "invert", "invert-grid")


def max_workers():
    """Internal parallelism cap from CORELENS_THREADS (default 1)."""
    raw = os.environ.get("CORELENS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"CORELENS_THREADS must be an integer, got {raw!r}")


def load_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith((".yaml", ".yml")):
        import yaml

        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return doc


def _need(config, key, kind=None, ctx="config"):
    if key not in config:
        raise ConfigError(f"{ctx}: missing required field '{key}'")
    value = config[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(
            f"{ctx}: field '{key}' must be {getattr(kind, '__name__', kind)}, "
            f"got {type(value).__name__}"
        )
    return value


def _need_seed(config, key="seed", ctx="config"):
    value = _need(config, key, ctx=ctx)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{ctx}: '{key}' must be an explicit integer seed")
    return value


def _need_input_path(config, key, ctx="config"):
    path = str(_need(config, key, ctx=ctx))
    if not os.path.exists(path):
        raise ConfigError(f"{ctx}: input path '{key}' does not exist: {path}")
    return path


def _train_config(section, ctx):
    seed = _need_seed(section, ctx=ctx)
    kwargs = {"seed": seed}
    for key in ("learning_rate", "weight_decay", "epochs", "batch_size",
                "scheduler_factor", "scheduler_patience"):
        if key in section:
            kwargs[key] = section[key]
    return TrainConfig(**kwargs)


def _inversion_config(section, ctx):
    kwargs = {"seed": _need_seed(section, ctx=ctx)}
    mapping = {"lambda": "lam", "max_iter": "max_iter",
               "learning_rate": "learning_rate", "eot_index": "eot_index",
               "optimize_mask": "optimize_mask",
               "plateau_stop": "plateau_stop"}
    for key, attr in mapping.items():
        if key in section:
            kwargs[attr] = section[key]
    return InversionConfig(**kwargs)


def _write_emb_with_provenance(dataset, out, command, config, seed):
    write_embeddings(dataset, out)
    artifacts.write_artifact(out + ".provenance.json", "embedding-provenance",
                             {"rows": dataset.n, "dim": dataset.dim},
                             command, config, seed=seed)


def _load_probe(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return LinearProbe.from_dict(doc)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: not a valid probe file: {exc!r}") from exc
    except OSError as exc:
        raise DataError(f"cannot read probe {path}: {exc}") from exc


# ---------------------------------------------------------------- commands


def cmd_gen_synth(config):
    ctx = "gen-synth"
    seed = _need_seed(config, ctx=ctx)
    cfg = SyntheticConfig(
        group_counts=tuple(_need(config, "group_counts", list, ctx)),
        dim=_need(config, "dim", int, ctx),
        beta_core=float(_need(config, "beta_core", ctx=ctx)),
        beta_spur=float(_need(config, "beta_spur", ctx=ctx)),
        sigma=float(_need(config, "sigma", ctx=ctx)),
        seed=seed,
    )
    out = str(_need(config, "out", ctx=ctx))
    dataset, u_core, u_spur = generate_synthetic(cfg)
    _write_emb_with_provenance(dataset, out, ctx, config, seed)
    if "directions_out" in config:
        dirs = EmbeddingSet.build(np.stack([u_core, u_spur]), [0, 1], [0, 0],
                                  class_names=["core", "spur"])
        write_embeddings(dirs, str(config["directions_out"]))
    print(f"gen-synth: wrote {dataset.n} x {dataset.dim} embeddings to {out}")
    return 0


def cmd_split(config):
    ctx = "split"
    seed = _need_seed(config, ctx=ctx)
    src = read_embeddings(_need_input_path(config, "in", ctx))
    fractions = tuple(_need(config, "fractions", list, ctx))
    outs = [str(_need(config, k, ctx=ctx))
            for k in ("out_train", "out_val", "out_test")]
    parts = split(src, fractions, seed)
    for part, out in zip(parts, outs):
        _write_emb_with_provenance(part, out, ctx, config, seed)
    print(f"split: {[p.n for p in parts]} rows -> {outs}")
    return 0


def cmd_probe_train(config, method=None):
    ctx = "probe-train"
    method = method or config.get("method")
    if method not in ("erm", "dfr", "zeroshot"):
        raise ConfigError(f"{ctx}: method must be erm, dfr or zeroshot")
    out = str(_need(config, "out", ctx=ctx))
    if method == "zeroshot":
        rows = read_embeddings(_need_input_path(config, "class_embeddings", ctx))
        probe = zero_shot_matrix(rows.rows)
        seed = None
        history = None
    else:
        train = read_embeddings(_need_input_path(config, "train", ctx))
        val = read_embeddings(_need_input_path(config, "val", ctx))
        tc = _train_config(_need(config, "train_config", dict, ctx), ctx)
        seed = tc.seed
        result = train_erm(train, val, tc) if method == "erm" else \
            train_dfr(train, val, tc)
        probe = result.probe
        history = {"epochs": result.history, "initial_loss": result.initial_loss,
                   "best_epoch": result.best_epoch,
                   "best_val_wga": result.best_val_wga}
    doc = probe.to_dict()
    doc["seed"] = seed
    doc["cli_provenance"] = {
        "command": ctx, "method": method,
        "config_digest": artifacts.digest_config(ctx, config),
    }
    from datetime import datetime, timezone

    doc["timestamp"] = datetime.now(timezone.utc).isoformat()
    artifacts.atomic_write_text(out, artifacts.canonical_json(doc))
    if history is not None and "out_history" in config:
        artifacts.write_artifact(str(config["out_history"]), "train-history",
                                 history, ctx, config, seed=seed)
    print(f"probe-train[{method}]: {probe.classes} classes x dim {probe.dim} -> {out}")
    return 0


def cmd_distill(config, background=None, num_vectors=None):
    ctx = "distill"
    background = background or config.get("background")
    if background is None:
        raise ConfigError(f"{ctx}: missing background embedding file")
    if not os.path.exists(str(background)):
        raise ConfigError(f"{ctx}: background path does not exist: {background}")
    num_vectors = num_vectors if num_vectors is not None else config.get("num_vectors")
    src = read_embeddings(_need_input_path(config, "in", ctx))
    bg = read_embeddings(str(background))
    if "background_rows" in config:
        if num_vectors is not None:
            raise ConfigError(f"{ctx}: give background_rows or num_vectors, not both")
        rows = [int(r) for r in _need(config, "background_rows", list, ctx)]
        bad = [r for r in rows if not 0 <= r < bg.n]
        if bad or not rows:
            raise ConfigError(
                f"{ctx}: background_rows must be nonempty indices in [0, {bg.n})"
            )
    else:
        k = bg.n if num_vectors is None else int(num_vectors)
        if not 1 <= k <= bg.n:
            raise ConfigError(f"{ctx}: num_vectors must lie in [1, {bg.n}], got {k}")
        rows = list(range(k))
    vectors = [bg.rows[i] for i in rows]
    basis = build_basis(vectors,
                        drop_tolerance=float(config.get("drop_tolerance", 1e-10)))
    projected = project_out(src, basis, method=str(config.get("method", "gram")))
    out = str(_need(config, "out", ctx=ctx))
    resolved = dict(config)
    resolved["background"] = str(background)
    resolved["background_rows"] = rows
    _write_emb_with_provenance(projected, out, ctx, resolved, seed=None)
    print(f"distill: removed {len(rows)}-vector background subspace -> {out}")
    return 0


def cmd_eval(config):
    ctx = "eval"
    probe = _load_probe(_need_input_path(config, "probe", ctx))
    dataset = read_embeddings(_need_input_path(config, "in", ctx))
    if probe.dim != dataset.dim:
        raise DataError(
            f"probe dim {probe.dim} does not match embedding dim {dataset.dim}"
        )
    preds, _ = predict(probe, dataset)
    report = group_report(preds, dataset)
    out = str(_need(config, "out", ctx=ctx))
    artifacts.write_artifact(out, "group-report", report.to_dict(), ctx, config)
    if "out_csv" in config:
        artifacts.write_csv(str(config["out_csv"]),
                            ("group", "correct", "total", "accuracy"),
                            report_csv_rows(report))
    print(f"eval: wga={report.wga:.4f} avg_sample={report.avg_sample:.4f} "
          f"avg_group={report.avg_group:.4f} ({report.n_groups} groups) -> {out}")
    return 0


def _load_report(path):
    try:
        doc = artifacts.load_artifact(path, expected_kind="group-report")
        return GroupReport.from_dict(doc["payload"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: not a valid group report: {exc!r}") from exc
    except OSError as exc:
        raise DataError(f"cannot read report {path}: {exc}") from exc


def cmd_compare(config):
    ctx = "compare"
    before = _load_report(_need_input_path(config, "before", ctx))
    after = _load_report(_need_input_path(config, "after", ctx))
    delta = compare_reports(before, after)
    out = str(_need(config, "out", ctx=ctx))
    artifacts.write_artifact(out, "report-delta", delta, ctx, config)
    if "out_csv" in config:
        artifacts.write_csv(str(config["out_csv"]),
                            ("group", "before", "after", "delta"),
                            delta["groups"])
    print(f"compare: wga {delta['wga_before']:.4f} -> {delta['wga_after']:.4f} "
          f"({delta['wga_delta']:+.4f}) -> {out}")
    return 0


def cmd_sweep(config):
    ctx = "sweep"
    entries = _need(config, "reports", list, ctx)
    named = []
    for i, entry in enumerate(entries):
        if not (isinstance(entry, list) and len(entry) == 2):
            raise ConfigError(f"{ctx}: reports[{i}] must be [name, path]")
        name, path = entry
        if not os.path.exists(str(path)):
            raise ConfigError(f"{ctx}: report path does not exist: {path}")
        named.append((str(name), _load_report(str(path))))
    rows = sweep_report(named)
    out = str(_need(config, "out", ctx=ctx))
    artifacts.write_artifact(out, "sweep-summary", {"tasks": rows}, ctx, config)
    if "out_csv" in config:
        artifacts.write_csv(str(config["out_csv"]),
                            ("task", "best_group", "worst_group", "avg_group"),
                            rows)
    print(f"sweep: {len(rows)} tasks -> {out}")
    return 0


def cmd_audit(config):
    ctx = "audit"
    qsec = _need(config, "query_from", dict, ctx)
    qset = read_embeddings(_need_input_path(qsec, "path", ctx + ".query_from"))
    row = int(qsec.get("row", 0))
    if not 0 <= row < qset.n:
        raise ConfigError(f"{ctx}: query row {row} out of range [0, {qset.n})")
    query = qset.rows[row]
    images = read_embeddings(_need_input_path(config, "images", ctx))
    stats = audit(query, images)
    out = str(_need(config, "out", ctx=ctx))
    artifacts.write_artifact(out, "similarity-stats", stats.to_dict(), ctx, config)
    if "out_raw_csv" in config:
        sims = similarities(query, images)
        artifacts.write_csv(str(config["out_raw_csv"]), ("index", "cosine"),
                            [{"index": i, "cosine": float(s)}
                             for i, s in enumerate(sims)])
    print(f"audit: n={stats.n} mean={stats.mean:.4f} median={stats.median:.4f} -> {out}")
    return 0


def _target_vector(section, weights, ctx):
    if "text" in section:
        return encode_text(weights, str(section["text"])), f"text:{section['text']}"
    if "probe" in section:
        probe = _load_probe(_need_input_path(section, "probe", ctx))
        row = int(section.get("row", 0))
        if not 0 <= row < probe.classes:
            raise ConfigError(f"{ctx}: probe row {row} out of range")
        return probe.weights[row].copy(), f"probe:{section['probe']}[{row}]"
    if "path" in section:
        dataset = read_embeddings(_need_input_path(section, "path", ctx))
        row = int(section.get("row", 0))
        if not 0 <= row < dataset.n:
            raise ConfigError(f"{ctx}: embedding row {row} out of range")
        return dataset.rows[row].copy(), f"emb:{section['path']}[{row}]"
    raise ConfigError(f"{ctx}: target_from needs 'text', 'probe' or 'path'")


def cmd_invert(config):
    ctx = "invert"
    encoder_seed = _need_seed(config, "encoder_seed", ctx)
    weights = init_encoder(encoder_seed)
    cfg = _inversion_config(_need(config, "inversion", dict, ctx), ctx)
    target, target_desc = _target_vector(_need(config, "target_from", dict, ctx),
                                         weights, ctx)
    initial_text = str(_need(config, "initial_text", ctx=ctx))
    target_text = config.get("target_text")
    result = invert(target, initial_text, cfg, weights, target_text=target_text)
    payload = {
        "initial": initial_text,
        "target": target_desc,
        "target_text": target_text,
        "eot_index": result.eot_index,
        "iterations": result.iterations,
        "initial_loss": result.loss_trace[0],
        "final_loss": result.final_loss,
        "recovered_text": result.recovered_text,
        "success": "n/a" if result.success is None else bool(result.success),
    }
    out = str(_need(config, "out", ctx=ctx))
    artifacts.write_artifact(out, "inversion-result", payload, ctx, config,
                             seed=encoder_seed)
    print(f"invert: {initial_text!r} -> {result.recovered_text!r} "
          f"(loss {payload['initial_loss']:.4f} -> {payload['final_loss']:.4f}, "
          f"success {payload['success']}) -> {out}")
    return 0


def cmd_invert_grid(config):
    ctx = "invert-grid"
    encoder_seed = _need_seed(config, "encoder_seed", ctx)
    weights = init_encoder(encoder_seed)
    cfg = _inversion_config(_need(config, "inversion", dict, ctx), ctx)
    words = [str(w) for w in _need(config, "words", list, ctx)]
    if len(words) < 2:
        raise ConfigError(f"{ctx}: need at least two words")
    cells = inversion_grid(words, weights, cfg, max_workers=max_workers())
    by_pair = {(c.initial, c.target): c for c in cells}
    rows = []
    for a in words:
        row = {"initial": a}
        for b in words:
            row[b] = int(by_pair[(a, b)].success)
        rows.append(row)
    out_csv = str(_need(config, "out_csv", ctx=ctx))
    artifacts.write_csv(out_csv, ["initial"] + words, rows)
    off_diag = [c for c in cells if c.initial != c.target]
    payload = {
        "words": words,
        "success_rate_off_diagonal":
            sum(c.success for c in off_diag) / len(off_diag),
        "runs": [{"initial": c.initial, "target": c.target,
                  "eot_index": c.eot_index, "success": c.success,
                  "initial_loss": c.initial_loss, "final_loss": c.final_loss,
                  "recovered_text": c.recovered_text} for c in cells],
    }
    if "out_json" in config:
        artifacts.write_artifact(str(config["out_json"]), "inversion-grid",
                                 payload, ctx, config, seed=encoder_seed)
    print(f"invert-grid: off-diagonal success rate "
          f"{payload['success_rate_off_diagonal']:.3f} -> {out_csv}")
    return 0


def run(command, config, **overrides):
    """Execute one subcommand against an already-loaded config mapping."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    if not isinstance(config, dict):
        raise ConfigError("config must be a mapping")
    if command == "gen-synth":
        return cmd_gen_synth(config)
    if command == "split":
        return cmd_split(config)
    if command == "probe-train":
        return cmd_probe_train(config, method=overrides.get("method"))
    if command == "distill":
        return cmd_distill(config, background=overrides.get("background"),
                           num_vectors=overrides.get("num_vectors"))
    if command == "eval":
        return cmd_eval(config)
    if command == "compare":
        return cmd_compare(config)
    if command == "sweep":
        return cmd_sweep(config)
    if command == "audit":
        return cmd_audit(config)
    if command == "invert":
        return cmd_invert(config)
    return cmd_invert_grid(config)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="corelens",
        description="Probe, project, audit, and invert frozen embedding spaces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON or YAML config file")
        if name == "probe-train":
            p.add_argument("--method", choices=("erm", "dfr", "zeroshot"))
        if name == "distill":
            p.add_argument("--background", help="EMB1 file of background vectors")
            p.add_argument("--num-vectors", type=int, dest="num_vectors")
    args = parser.parse_args(argv)
    overrides = {}
    for key in ("method", "background", "num_vectors"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    try:
        config = load_config(args.config)
        return run(args.command, config, **overrides)
    except CorelensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
