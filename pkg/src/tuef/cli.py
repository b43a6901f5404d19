"""Command-line interface: staged subcommands over persisted artifacts."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path


from . import eval as ev
from . import pipeline as pl
from .features import FEATURE_NAMES
from .ingest import IngestError
from .mlg import GraphError
from .ranker import rank_by_score
from .ranker.training_set import TrainingSetError
from .topics import ClusteringError

logger = logging.getLogger("tuef")

# flag name -> config key, for flags whose names differ from the key
_FLAG_KEYS = {"lambda": "n_feature_tags", "walks": "walks", "trials": "tuning_trials"}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration (flags override --config)")
    g.add_argument("--config", help="flat key = value configuration file")
    g.add_argument("--k-range", help="cluster count range, e.g. 2,10")
    g.add_argument("--lambda", dest="lambda_", type=int, help="number of feature tags")
    g.add_argument("--seed", type=int, help="clustering and tuning seed")
    g.add_argument("--epsilon", type=float, help="layer-node percentile of accepted answers")
    g.add_argument("--delta", type=float, help="edge cosine-similarity threshold")
    g.add_argument("--expert-percentile", type=float, help="candidate-expert percentile")
    g.add_argument("--split", type=float, help="chronological train fraction")
    g.add_argument("--period-start", help="ISO timestamp; earlier questions are dropped")
    g.add_argument("--period-end", help="ISO timestamp; later questions are dropped")
    g.add_argument("--graph-mode", choices=pl.GRAPH_MODES)
    g.add_argument("--top-n", type=int, help="questions retrieved per index")
    g.add_argument("--alpha", type=float, help="collection stop probability")
    g.add_argument("--walks", type=int, help="random walks per seed expert")
    g.add_argument("--max-steps", type=int, help="maximum steps per walk")
    g.add_argument("--methods", help="comma list from: network,content")
    g.add_argument("--explore", choices=("on", "off"), help="random-walk exploration")
    g.add_argument("--rng-seed", type=int, help="random-walk seed")
    g.add_argument("--ranker", choices=pl.RANKERS)
    g.add_argument("--feature-set", choices=pl.FEATURE_SETS)
    g.add_argument("--ltr-cap", type=int, help="maximum learning-to-rank queries")
    g.add_argument("--trials", type=int, help="hyperparameter search trials (0 = fixed params)")
    g.add_argument("--n-pairs", type=int, help="interaction pairs of the interpretable ranker")
    g.add_argument("--linear-weights", help="Name:w,... weights of the linear ranker")
    g.add_argument("--subsample-size", type=int)
    g.add_argument("--subsample-seed", type=int)
    g.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="set any configuration key")


def config_from_args(args: argparse.Namespace) -> pl.PipelineConfig:
    keys = {f.name for f in fields(pl.PipelineConfig)}
    over: dict = {}
    for name, value in vars(args).items():
        if value is None or name in ("config", "set", "command", "func", "lambda_", "k_range", "explore"):
            continue
        key = _FLAG_KEYS.get(name, name)
        if key in keys:
            over[key] = value
    if args.lambda_ is not None:
        over["n_feature_tags"] = args.lambda_
    if args.k_range:
        parts = args.k_range.split(",")
        if len(parts) != 2:
            raise pl.ConfigError("--k-range takes two integers, e.g. 2,10")
        over["k_min"], over["k_max"] = parts[0], parts[1]
    if args.explore:
        over["explore"] = args.explore
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise pl.ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        over[key.strip().replace("-", "_")] = value
    over = {k: (str(v) if not isinstance(v, str) else v) for k, v in over.items()}
    return pl.make_config(over, args.config)


def _paths(args) -> dict[str, Path]:
    w = Path(args.workdir)
    return {
        "dataset": Path(args.dataset) if getattr(args, "dataset", None) else w / "dataset.json",
        "build": Path(args.build) if getattr(args, "build", None) else w / "build.json",
        "model": Path(args.model) if getattr(args, "model", None) else w / "model.json",
    }


def _load_chain(args, need_model: bool):
    paths = _paths(args)
    ds, ds_doc, ds_digest = pl.load_dataset_artifact(paths["dataset"])
    bdoc, b_digest = pl.read_artifact(paths["build"], "build", "run `tuef build` first")
    pl.check_lineage(bdoc, "dataset", ds_digest, paths["build"])
    build = pl.BuildResult.from_payload(bdoc["payload"])
    if not need_model:
        return ds, build, bdoc, None, None
    mdoc, m_digest = pl.read_artifact(paths["model"], "model", "run `tuef train` first")
    pl.check_lineage(mdoc, "build", b_digest, paths["model"])
    return ds, build, bdoc, mdoc, m_digest


def cmd_synth(args, cfg) -> int:
    from .synthetic import SyntheticConfig, generate
    corpus = generate(SyntheticConfig(n_questions=args.questions, seed=args.corpus_seed))
    posts, users = corpus.write_xml(args.out)
    print(f"wrote {posts} and {users}")
    return 0


def cmd_ingest(args, cfg) -> int:
    ds, stats = pl.run_ingest(args.posts, args.users, cfg)
    out = _paths(args)["dataset"]
    pl.save_dataset_artifact(ds, out, cfg, stats)
    print(f"dataset: {stats['train_questions']} train / {stats['test_questions']} test questions -> {out}")
    return 0


def cmd_build(args, cfg) -> int:
    paths = _paths(args)
    ds, _, ds_digest = pl.load_dataset_artifact(paths["dataset"])
    res = pl.run_build(ds, cfg)
    pl.write_artifact(paths["build"], "build", cfg.stage("build"), {"dataset": ds_digest}, res.to_payload())
    s = res.stats
    print(f"build: {s['clusters']} layers (silhouette {s['silhouette']:.3f}), {s['experts']} experts, "
          f"{s['indexed_questions']} indexed questions -> {paths['build']}")
    return 0


def cmd_train(args, cfg) -> int:
    paths = _paths(args)
    ds, build, bdoc, _, _ = _load_chain(args, need_model=False)
    cfg = pl.config_from_stage(bdoc["config"], cfg)
    _, b_digest = pl.read_artifact(paths["build"], "build")
    model, info = pl.run_train(ds, build, cfg)
    payload = {"model": model.to_dict(), "training": info}
    pl.write_artifact(paths["model"], "model", cfg.stage("train"), {"build": b_digest}, payload)
    ts = info["training_set"]
    print(f"model: {cfg.ranker} on {ts['queries']} queries (mean list {ts['avg_list']:.1f}), "
          f"validation MRR {info['valid_mrr']:.3f} -> {paths['model']}")
    return 0


def _model_system(args, cfg):
    ds, build, bdoc, mdoc, m_digest = _load_chain(args, need_model=True)
    cfg = pl.config_from_stage(mdoc["config"], cfg)
    model = pl.load_model(mdoc["payload"]["model"])
    engine = pl.Engine(ds, build, cfg)
    return ds, build, engine, pl.ModelSystem(engine, model, "TUEF"), cfg, m_digest


def cmd_evaluate(args, cfg) -> int:
    ds, build, engine, system, mcfg, m_digest = _model_system(args, cfg)
    mcfg = pl.config_from_stage({"subsample_size": cfg.subsample_size, "subsample_seed": cfg.subsample_seed,
                                 "threads": cfg.threads}, mcfg)
    pool = pl.evaluation_pool(ds, build.graph)
    if args.limit:
        pool = pool[: args.limit]
    if args.protocol == "expert-ranking":
        report = pl.evaluate_expert_ranking(system, pool, mcfg.threads)
        plans = None
    else:
        plans = pl.make_plans(engine, pool, mcfg, mcfg.threads)
        report = pl.evaluate_subsample(system, ds, plans, mcfg.threads)
    out = Path(args.out) if args.out else Path(args.workdir) / f"report-{args.protocol}.json"
    payload = {"protocol": args.protocol, "report": report.to_dict()}
    if plans is not None:
        payload["plans"] = [p.to_dict() for p in plans]
    pl.write_artifact(out, "report", mcfg.stage("evaluate"), {"model": m_digest}, payload)
    text = ev.format_table([report])
    out.with_suffix(".txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    if args.timing:
        lat = ev.timing_harness(system.rank, pool)
        summary = lat.summary()
        out.with_name(out.stem + "-timing.json").write_text(ev.dumps(summary) + "\n", encoding="utf-8")
        if summary["count"]:
            print(f"latency: mean {summary['mean']:.4f}s median {summary['median']:.4f}s "
                  f"p95 {summary['p95']:.4f}s over {summary['count']} queries")
    return 0


def cmd_rank(args, cfg) -> int:
    ds, build, engine, system, mcfg, _ = _model_system(args, cfg)
    raw = sys.stdin.read() if args.query in (None, "-") else Path(args.query).read_text(encoding="utf-8")
    try:
        query = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise pl.ConfigError(f"query is not valid JSON: {exc}") from exc
    if not isinstance(query, dict):
        raise pl.ConfigError("query JSON must be an object with title, body and tags")
    tags = [str(t).lower() for t in query.get("tags", [])]
    title, body = str(query.get("title", "")), str(query.get("body", ""))
    cands = engine.candidates(int(query.get("id", 0)), title, body, tags)
    users, x, scores = system.score(cands)
    order = rank_by_score(users.tolist(), scores)
    pos = {int(u): i for i, u in enumerate(users.tolist())}
    contrib = pl.explain(system.model, x) if len(users) else None
    rows = []
    for u in order[: args.k] if args.k else order:
        i = pos[u]
        row = {"user": u, "score": float(scores[i]),
               "features": {n: float(v) for n, v in zip(FEATURE_NAMES, x[i])}}
        if contrib is not None:
            row["contributions"] = contrib[i]
        rows.append(row)
    out = {"layers": list(cands.layers), "candidates": len(users), "ranking": rows}
    sys.stdout.write(json.dumps(out, indent=1, sort_keys=True) + "\n")
    return 0


def cmd_ablate(args, cfg) -> int:
    paths = _paths(args)
    ds, _, ds_digest = pl.load_dataset_artifact(paths["dataset"])
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for m in modes:
        pl.mode_config(m, cfg)  # validate mode names before any work
    res = pl.run_ablation(ds, cfg, modes, subsample=args.subsample)
    out = Path(args.out) if args.out else Path(args.workdir) / "ablation.json"
    pl.write_artifact(out, "ablation", cfg.stage("evaluate"), {"dataset": ds_digest},
                      dict(res.to_dict(), modes=modes))
    out.with_suffix(".txt").write_text(res.table + "\n", encoding="utf-8")
    print(res.table)
    if res.subsample:
        print("\nsubsample protocol")
        print(ev.format_table(list(res.subsample.values())))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tuef", description="Topic-oriented expert finding pipeline")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--workdir", default=".", help="directory holding the default artifact paths")
        sp.add_argument("--dataset", help="dataset artifact path")
        sp.add_argument("--build", help="build artifact path")
        sp.add_argument("--model", help="model artifact path")
        _add_config_flags(sp)
        sp.set_defaults(func=func)
        return sp

    sp = add("synth", cmd_synth, "write a planted synthetic dump (Posts.xml, Users.xml)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--questions", type=int, default=2000)
    sp.add_argument("--corpus-seed", type=int, default=0)

    sp = add("ingest", cmd_ingest, "parse a dump into a cleaned, split dataset")
    sp.add_argument("--posts", required=True)
    sp.add_argument("--users")

    add("build", cmd_build, "cluster tags, build the multi-layer graph and retrieval indexes")
    add("train", cmd_train, "build the learning-to-rank set and fit the ranker")

    sp = add("evaluate", cmd_evaluate, "evaluate the trained model on the test questions")
    sp.add_argument("--protocol", choices=("expert-ranking", "subsample"), default="expert-ranking")
    sp.add_argument("--out")
    sp.add_argument("--limit", type=int, help="evaluate only the first N pool queries")
    sp.add_argument("--timing", action="store_true", help="also record per-query latency")

    sp = add("rank", cmd_rank, "rank experts for one JSON query {title, body, tags}")
    sp.add_argument("--query", help="query JSON file (default: standard input)")
    sp.add_argument("-k", type=int, default=0, help="emit only the top k experts")

    sp = add("ablate", cmd_ablate, "train and compare a matrix of ablation modes")
    sp.add_argument("--modes", default=",".join(pl.ABLATION_MODES))
    sp.add_argument("--subsample", action="store_true", help="also run the subsample protocol")
    sp.add_argument("--out")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        return args.func(args, cfg)
    except pl.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except pl.ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (IngestError, ClusteringError, GraphError, TrainingSetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
