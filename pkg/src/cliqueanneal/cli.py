"""Command-line entry point: synth | prep | train | detect | eval | pipeline | bench."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .cliques import CliqueBudgetExceeded
from .graph import GraphFormatError, load_communities, write_communities
from .losses import SamplingError
from .neural import NumericError, load_checkpoint
from .pipeline import (
    CONFIG_DOCS,
    RunConfig,
    cached_cliques,
    clique_cache_path,
    make_prepared,
    make_synthetic,
    read_dataset,
    run_detect,
    run_eval,
    run_pipeline,
    run_train,
    write_dataset,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_BUDGET = 0, 1, 2, 3, 4
ORIGIN = {"method": "method default", "impl": "implementation choice"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _flag_type(default):
    if isinstance(default, bool):
        return None
    return type(default)


def _add_config_flags(p: argparse.ArgumentParser, keys) -> None:
    defaults = RunConfig(workers=1)
    grp = p.add_argument_group("configuration (JSON config keys; flags override the file)")
    grp.add_argument("--config", type=Path, help="JSON file of config keys")
    for key in keys:
        default = getattr(defaults, key)
        origin, text = CONFIG_DOCS[key]
        shown = "from CLIQUEANNEAL_WORKERS, else 1" if key == "workers" else default
        help_ = f"{text} [default: {shown}; {ORIGIN[origin]}]"
        flag = "--" + key.replace("_", "-")
        if isinstance(default, bool):
            grp.add_argument(flag, dest=key, action="store_true", default=None, help=help_)
        else:
            grp.add_argument(flag, dest=key, type=_flag_type(default), default=None, help=help_)


MODEL_KEYS = ["seed", "dim", "layers", "epochs", "lr", "alpha", "gamma", "lambda_clq", "m_pct",
              "curvature", "agg_init_gain", "gcn_activation", "core_filter_min_nodes", "core_epochs",
              "max_cliques", "m_multiplier", "hops"]
DETECT_KEYS = ["seed", "workers", "m_multiplier", "max_steps", "max_transitions", "hops",
               "core_filter_min_nodes", "max_cliques", "np_only"]
SYNTH_KEYS = ["seed", "n_comm", "size_min", "size_max", "p_intra", "p_inter", "clique_size"]
PREP_KEYS = ["seed", "percentile", "n_sample", "hybrid_links"]
ALL_KEYS = [f.name for f in dataclasses.fields(RunConfig)]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cliqueanneal", description="Semi-supervised overlapping community detection by clique annealing.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a seeded planted-community dataset")
    s.add_argument("--out", type=Path, required=True, help="dataset directory to create")
    _add_config_flags(s, SYNTH_KEYS)

    s = sub.add_parser("prep", help="filter/sample communities of a SNAP dataset, optionally as a hybrid graph")
    s.add_argument("--graph", type=Path, required=True, help="edge list")
    s.add_argument("--communities", type=Path, required=True, help="community file (one per line)")
    s.add_argument("--graph2", type=Path, help="second edge list for a hybrid graph")
    s.add_argument("--communities2", type=Path, help="communities of the second graph (not used as targets)")
    s.add_argument("--out", type=Path, required=True, help="dataset directory to create")
    _add_config_flags(s, PREP_KEYS)

    s = sub.add_parser("train", help="train the nucleus proposer and write a checkpoint")
    s.add_argument("--data", type=Path, required=True, help="dataset directory")
    s.add_argument("--checkpoint", type=Path, required=True, help="checkpoint path to write")
    s.add_argument("--resume", action="store_true", help="continue training from --checkpoint")
    _add_config_flags(s, MODEL_KEYS)

    s = sub.add_parser("detect", help="propose candidates and anneal them into communities")
    s.add_argument("--data", type=Path, required=True, help="dataset directory")
    s.add_argument("--checkpoint", type=Path, required=True, help="trained checkpoint")
    s.add_argument("--output", type=Path, required=True, help="predictions file")
    s.add_argument("--trace", type=Path, help="annealing trace (JSON lines)")
    s.add_argument("--candidates", type=Path, help="candidate dump file")
    _add_config_flags(s, DETECT_KEYS)

    s = sub.add_parser("eval", help="score predictions against ground truth")
    s.add_argument("--pred", type=Path, required=True, help="predicted communities")
    s.add_argument("--truth", type=Path, required=True, help="ground-truth communities")
    s.add_argument("--json", type=Path, help="also write the report as JSON")
    _add_config_flags(s, ["onmi_variant"])

    s = sub.add_parser("pipeline", help="train -> detect -> eval on a dataset directory")
    s.add_argument("--data", type=Path, required=True, help="dataset directory")
    s.add_argument("--out", type=Path, required=True, help="output directory")
    _add_config_flags(s, ALL_KEYS)

    s = sub.add_parser("bench", help="run a benchmark suite and write Markdown/CSV results")
    s.add_argument("--suite", default="default", help="suite name: default, amazon, or empty")
    s.add_argument("--results", type=Path, default=Path("results"), help="results directory")
    s.add_argument("--amazon-graph", type=Path, help="amazon edge list (amazon suite)")
    s.add_argument("--amazon-communities", type=Path, help="amazon community file (amazon suite)")
    s.add_argument("--dblp-graph", type=Path, help="dblp edge list for the hybrid variant (amazon suite)")
    _add_config_flags(s, ["workers"])
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
    for key in ALL_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    try:
        return RunConfig.from_dict(data)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from None


def _dispatch(args: argparse.Namespace, cfg: RunConfig) -> int:
    cmd = args.command
    if cmd == "synth":
        write_dataset(make_synthetic(cfg), args.out)
        print(f"wrote {cfg.n_comm}-community dataset to {args.out}")
    elif cmd == "prep":
        ds = make_prepared(cfg, args.graph, args.communities, args.graph2, args.communities2)
        write_dataset(ds, args.out)
        print(f"wrote {len(ds.communities)} communities on {ds.graph.n} nodes to {args.out}")
    elif cmd == "train":
        run_train(read_dataset(args.data), cfg, args.checkpoint, resume=args.resume)
        print(f"wrote checkpoint {args.checkpoint}")
    elif cmd == "detect":
        ds = read_dataset(args.data)
        params = load_checkpoint(args.checkpoint)
        cliques = cached_cliques(clique_cache_path(args.checkpoint), ds.graph, cfg, params,
                                 ds.part("train"), len(ds.split.test))
        out = run_detect(ds, cfg, params, cliques, args.trace, args.candidates)
        write_communities(out.predictions, args.output, ds.inverse_map)
        print(f"wrote {len(out.predictions)} communities to {args.output}")
    elif cmd == "eval":
        rep = run_eval(load_communities(args.pred), load_communities(args.truth), cfg)
        print(rep.to_text())
        if args.json:
            args.json.write_text(rep.to_json() + "\n")
    elif cmd == "pipeline":
        res = run_pipeline(read_dataset(args.data), cfg, args.out)
        print(res.report.to_text())
        print(f"train_seconds: {res.train_seconds:.2f}\ntotal_seconds: {res.total_seconds:.2f}")
    elif cmd == "bench":
        from .bench import format_table, run_bench, suite_by_name

        paths = {"graph": args.amazon_graph, "communities": args.amazon_communities, "graph2": args.dblp_graph}
        rows = run_bench(suite_by_name(args.suite, paths), args.results, workers=cfg.workers)
        print(format_table(rows))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
        return _dispatch(args, cfg)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except CliqueBudgetExceeded as e:
        print(f"budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (GraphFormatError, SamplingError, OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
