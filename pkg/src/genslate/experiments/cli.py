"""Command line entry point (``genslate``)."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..core import GenslateError, Slate, Statement
from .config import config_hash, load_config, prepare_run_dir
from .report import (CURVE_COLUMNS, EVAL_COLUMNS, SCAN_COLUMNS, SUMMARY_COLUMNS, emit_report, plot_curves,
                     plot_scan)
from .sweep import VARIANT_ORDER, SweepSpec, error_level_setting, run_error_sweep, run_param_scan

log = logging.getLogger("genslate")


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _fracs(text):
    return [Fraction(x.strip()) for x in text.split(",") if x.strip()]


def _spec(cfg, args) -> SweepSpec:
    env, sw = cfg["env"], cfg["sweep"]
    levels = _ints(args.levels) if getattr(args, "levels", None) else sw["error_levels"]
    modes = args.modes.split(",") if getattr(args, "modes", None) else sw["modes"]
    variants = args.variants.split(",") if getattr(args, "variants", None) else sw["variants"]
    settings = [error_level_setting(l, m) for m in modes for l in levels]
    return SweepSpec(settings=tuple(settings), variants=tuple(variants),
                     num_instances=args.instances or sw["num_instances"],
                     num_issues=env["num_issues"], opinion_count=env["opinion_count"], n=env["n"], B=env["B"],
                     base_seed=args.seed if args.seed is not None else sw["base_seed"])


def _arguments(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _progress(i, total):
    if i % 10 == 0 or i == total:
        log.info("instance %d/%d", i, total)


def cmd_sweep(args, cfg):
    spec = _spec(cfg, args)
    out = prepare_run_dir(args.out, "sweep", cfg, {"base_seed": spec.base_seed}, _arguments(args))
    res = run_error_sweep(spec, _progress)
    emit_report(res.summary(), out, "summary", SUMMARY_COLUMNS)
    emit_report(res.curves(), out, "curves", CURVE_COLUMNS)
    if args.plot:
        plot_curves(res.curves(), out / "curves.png")
    for row in res.summary():
        print(f"{row['mode']:>10} level b={row['beta']} {row['variant']:>8}: utility {row['mean_utility']:.3f} "
              f"bottom10 {row['bottom10_utility']:.3f} violations {row['violations']}")
    return 0


def cmd_scan(args, cfg):
    spec = _spec(cfg, args)
    out = prepare_run_dir(args.out, "scan", cfg, {"base_seed": spec.base_seed}, _arguments(args))
    res = run_param_scan(args.param, _fracs(args.values), spec, args.variant)
    rows = [{"param": args.param, **p} for p in res.points]
    emit_report(rows, out, "scan", SCAN_COLUMNS)
    if args.plot:
        plot_scan(res.points, args.param, out / "scan.png")
    for p in res.points:
        print(f"{args.param}={p['value']}: {p['metric']} {p['mean']:.4f}")
    return 0


def _client(cfg, args):
    from ..llm.client import LlmClient, OpenAICompatibleBackend, ResponseCache

    llm = cfg["llm"]
    mode = args.mode or llm["mode"]
    cache = ResponseCache(args.cache or llm["cache"])
    backend = None
    if mode != "replay":
        if args.backend == "mock":
            from ..llm.mock import PlantedOpinionBackend

            if not args.mock_blocks:
                raise GenslateError("--backend mock needs --mock-blocks")
            backend = PlantedOpinionBackend(json.loads(Path(args.mock_blocks).read_text()))
        else:
            backend = OpenAICompatibleBackend(args.base_url or llm["base_url"])
    return LlmClient(backend, cache, mode, llm["max_workers"], llm["rate_limit"])


def _prose_config(cfg, args):
    from ..llm.generation import ProseConfig

    llm = cfg["llm"]
    extra = {} if args.min_length is None else {"min_length": args.min_length}
    return ProseConfig.preset(args.preset or cfg["prose"]["preset"], chat_model=llm["chat_model"],
                              eval_model=llm["chat_model"], embed_model=llm["embed_model"], **extra)


def _dataset(args):
    from ..llm.datasets import load_agent_file

    ds = load_agent_file(args.agents, topic=args.topic or "")
    if args.budget:
        ds.budget = args.budget
    return ds


def _statement_json(s):
    return {"id": s.id, "text": s.payload, "cost": s.cost}


def cmd_prose_run(args, cfg):
    from ..llm.pipeline import run_prose

    ds = _dataset(args)
    seed = args.seed if args.seed is not None else cfg["prose"]["seed"]
    out = prepare_run_dir(args.out, "prose run", cfg, {"seed": seed}, _arguments(args))
    client = _client(cfg, args)
    run = run_prose(ds.descriptions, ds.budget, _prose_config(cfg, args), client, seed)
    r = run.result
    doc = {"budget": ds.budget, "n": ds.n, "seed": seed,
           "slate": [_statement_json(s) for s in r.slate],
           "assignment": {str(a): sid for a, sid in sorted(r.assignment.items())},
           "unassigned": list(r.unassigned),
           "bank": [_statement_json(s) for s in run.state.bank],
           "failures": run.state.failures}
    (out / "slate.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    with (out / "trace.jsonl").open("w", encoding="utf-8") as fh:
        for t in r.trace:
            fh.write(json.dumps({"level": str(t.level), "cost_cap": t.cost_cap, "candidates": t.candidates,
                                 "chosen": t.chosen, "added": t.added,
                                 "removed": [[a, str(v)] for a, v in t.removed]}) + "\n")
    for s in r.slate:
        print(f"[{s.cost:>3} words] {s.payload}")
    print(f"slate cost {r.slate.cost} / {ds.budget}; unassigned {len(r.unassigned)}")
    return 0


def _load_prose(path):
    doc = json.loads((Path(path) / "slate.json").read_text(encoding="utf-8"))
    mk = lambda d: Statement(d["id"], d["text"], d["cost"])
    slate = Slate(tuple(mk(d) for d in doc["slate"]))
    return doc, slate, {int(a): sid for a, sid in doc["assignment"].items()}, [mk(d) for d in doc["bank"]]


def cmd_eval(args, cfg):
    from ..llm.baselines import baseline_slate
    from ..llm.scoring import cot_matrix
    from .evaluation import UtilityTable, evaluate_llm_slates

    ds = _dataset(args)
    doc, slate, assignment, bank = _load_prose(args.prose_run)
    seed = args.seed if args.seed is not None else cfg["prose"]["seed"]
    out = prepare_run_dir(args.out, "eval", cfg, {"seed": seed}, _arguments(args))
    client = _client(cfg, args)
    pcfg = _prose_config(cfg, args)
    slates = {"prose": (slate, assignment)}
    for m in [b for b in (args.baselines or "").split(",") if b]:
        res = baseline_slate(m, ds.descriptions, ds.budget, ds.topic, client, pcfg, seed)
        slates[m] = (res.slate, res.assignment)
    descs = ds.descriptions
    table = UtilityTable(ds.n, None, lambda sts: cot_matrix(descs, [s.payload for s in sts], client,
                                                            pcfg.eval_model))
    rep = evaluate_llm_slates(slates, ds.n, ds.budget, table, bank, np.random.default_rng(seed))
    emit_report(rep.rows(), out, "eval", EVAL_COLUMNS)
    for row in rep.rows():
        print(f"{row['method']:>22}: mean {row['mean']:.2f} q1 {row['q1']:.2f} p {row['p_value']:.3g} "
              f"violations {row['violation_rate']:.2f}")
    return 0


def cmd_validate_votes(args, cfg):
    from ..llm.scoring import cot_utility, disc_utility
    from .evaluation import vote_validation

    descs = {}
    votes = []
    with open(args.votes, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                descs[rec["agent"]] = rec["description"]
                votes.append((rec["agent"], rec["up"], rec["down"]))
    client = _client(cfg, args)
    model = cfg["llm"]["chat_model"]
    impls = [lambda a, s: disc_utility(descs[a], s, client, model),
             lambda a, s: cot_utility(descs[a], s, client, model)]
    res = vote_validation(votes, impls)
    out = prepare_run_dir(args.out, "validate-votes", cfg, {}, _arguments(args))
    doc = {"agents": res.agents, "fractions": res.fractions, "intervals": res.intervals,
           "pearson_r": res.pearson_r, "kappa": res.kappa, "skipped": res.skipped}
    (out / "votes.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    for name, f, (lo, hi) in zip(("disc", "cot"), res.fractions, res.intervals):
        print(f"{name}: {f:.1%} of {res.agents} agents (95% CI {lo:.1%} to {hi:.1%})")
    print(f"pearson r {res.pearson_r:.3f}, kappa {res.kappa:.3f}")
    return 0


def cmd_ingest(args, cfg):
    from ..llm.datasets import ingest_dataset

    if args.kind == "drug_review":
        client = _client(cfg, args) if args.brand_filter else None
        ds = ingest_dataset("drug_review", args.path, drug=args.drug, scheme=args.scheme,
                            percentiles=(args.lo, args.hi), seed=args.seed or 0, client=client,
                            model=cfg["llm"]["chat_model"], match_field=args.match_field)
    else:
        ds = ingest_dataset("polis", args.path)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    ds.to_jsonl(args.out)
    print(f"{ds.n} agents written to {args.out} (budget {ds.budget})")
    return 0


def _llm_flags(p):
    p.add_argument("--backend", choices=("openai", "mock"), default="openai")
    p.add_argument("--mock-blocks", help="JSON list of [size, [keywords]] blocks for the mock backend")
    p.add_argument("--base-url")
    p.add_argument("--cache", help="response cache file (JSON lines)")
    p.add_argument("--mode", choices=("live", "record", "replay"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="genslate", description=__doc__)
    ap.add_argument("--config", help="YAML/JSON config file")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="error sweep on the synthetic environment")
    p.add_argument("--instances", type=int)
    p.add_argument("--levels", help="comma list of error levels 0..3")
    p.add_argument("--modes", help="comma list: uniform,worst_case")
    p.add_argument("--variants", help=f"comma list from {','.join(VARIANT_ORDER)}")
    p.add_argument("--seed", type=int)
    p.add_argument("--plot", action="store_true")
    p.add_argument("--out", default="runs/sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scan", help="vary one error parameter")
    p.add_argument("--param", required=True, choices=("beta", "delta", "mu_gamma"))
    p.add_argument("--values", required=True, help="comma list")
    p.add_argument("--variant", default="complex", choices=VARIANT_ORDER)
    p.add_argument("--instances", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--plot", action="store_true")
    p.add_argument("--out", default="runs/scan")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("prose", help="text pipeline")
    psub = p.add_subparsers(dest="prose_command", required=True)
    r = psub.add_parser("run", help="build a slate for an agent file")
    r.add_argument("--agents", required=True)
    r.add_argument("--budget", type=int)
    r.add_argument("--topic")
    r.add_argument("--preset", choices=("drug", "bowling_green"))
    r.add_argument("--min-length", type=int, help="override the preset's minimum statement length")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", default="runs/prose")
    _llm_flags(r)
    r.set_defaults(func=cmd_prose_run)

    p = sub.add_parser("eval", help="score a text slate against baselines")
    p.add_argument("--agents", required=True)
    p.add_argument("--prose-run", required=True, help="output directory of 'prose run'")
    p.add_argument("--baselines", default="contextless_zero_shot,zero_shot,clustering,unit_cost")
    p.add_argument("--budget", type=int)
    p.add_argument("--topic")
    p.add_argument("--preset", choices=("drug", "bowling_green"))
    p.add_argument("--min-length", type=int, help="override the preset's minimum statement length")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="runs/eval")
    _llm_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("validate-votes", help="compare oracles with recorded votes")
    p.add_argument("--votes", required=True, help="JSON lines {agent, description, up, down}")
    p.add_argument("--out", default="runs/votes")
    _llm_flags(p)
    p.set_defaults(func=cmd_validate_votes)

    p = sub.add_parser("ingest", help="turn a source table into an agent file")
    p.add_argument("kind", choices=("drug_review", "polis"))
    p.add_argument("path")
    p.add_argument("--drug")
    p.add_argument("--match-field", default="drugName")
    p.add_argument("--scheme", choices=("uniform", "imbalanced"), default="uniform")
    p.add_argument("--lo", type=float, default=50)
    p.add_argument("--hi", type=float, default=75)
    p.add_argument("--brand-filter", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    _llm_flags(p)
    p.set_defaults(func=cmd_ingest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (GenslateError, OSError, ValueError) as exc:
        print(f"genslate: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
