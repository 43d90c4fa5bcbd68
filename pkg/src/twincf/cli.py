"""``twincf`` command line driver.

Exit codes: 0 success, 1 domain error (JSON object on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import pandas as pd

from . import causation, datagen, learn, ordering, scm as scm_mod, twin
from .errors import TwinCFError

METHODS = ("exact", "twin-mc", "aap")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _names(text: str) -> list[str]:
    return [v for v in text.split(",") if v]


def _read_json(path) -> object:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise TwinCFError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from exc


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True) + "\n"


def _need(args, *flags):
    for f in flags:
        if getattr(args, f.lstrip("-").replace("-", "_")) is None:
            raise UsageError(f"{args.command}: {f} is required")


def _ordering(args, source) -> ordering.OrderingSpec:
    if args.ordering:
        return ordering.OrderingSpec.from_dict(_read_json(args.ordering))
    if isinstance(source, scm_mod.Scm):
        return ordering.OrderingSpec.natural(source, args.treatment, args.outcome)
    cfg = source.config
    return ordering.OrderingSpec(args.treatment, args.outcome, tuple(range(cfg.n_treatments)),
                                 tuple(range(cfg.n_outcomes)))


# -- subcommands ------------------------------------------------------------


def cmd_generate(args) -> int:
    _need(args, "--seed", "--out")
    params = {}
    if args.kind in ("unconfounded", "confounded") and args.q is not None:
        params["q"] = args.q
    if args.kind == "unconfounded" and args.px1 is not None:
        params["px1"] = args.px1
    if args.kind == "confounded":
        if args.pz1 is not None:
            params["pz1"] = args.pz1
        if args.pux1 is not None:
            params["pux1"] = args.pux1
    gen = datagen.GeneratorSpec(args.kind, params, args.n, args.seed).build()
    paths = gen.write(args.out)
    sys.stdout.write(_dumps({k: str(v) for k, v in paths.items()}))
    return 0


def cmd_validate(args) -> int:
    _need(args, "--scm")
    m = scm_mod.load_scm(args.scm)
    sys.stdout.write(_dumps({"valid": True, "order": list(m.order), "latent_support": m.latent_support_size()}))
    return 0


def cmd_query(args) -> int:
    _need(args, "--scm", "--query")
    m = scm_mod.load_scm(args.scm)
    q = twin.CounterfactualQuery.from_dict(_read_json(args.query))
    if args.method == "exact":
        value = twin.counterfactual_exact(m, q)
        out = {"method": "exact", "estimate": value, "stderr": 0.0, "n_accepted": None}
    else:
        _need(args, "--seed")
        fn = twin.counterfactual_mc if args.method == "twin-mc" else twin.counterfactual_aap
        out = {"method": args.method, **fn(m, q, args.n, args.seed).to_dict()}
    _emit(_dumps(out), args.out)
    return 0


def cmd_check(args) -> int:
    _need(args, "--scm")
    m = scm_mod.load_scm(args.scm)
    ord = _ordering(args, m)
    checks = {
        "premise": ordering.check_interventional_premise,
        "monotone": ordering.check_monotone,
        "cf-ordering": ordering.check_cf_ordering,
        "stability": ordering.check_stability,
    }
    names = list(checks) if args.which == "all" else [args.which]
    lines, summary = [], {}
    for name in names:
        report = checks[name](m, ord)
        summary[name] = {"violations": len(report), "skipped": len(report.skipped)}
        lines.append(report.to_jsonl())
    _emit("".join(lines), args.out)
    (sys.stderr if args.out is None else sys.stdout).write(_dumps(summary))
    if args.gate is not None and any(s["violations"] for s in summary.values()):
        return 1
    return 0


def cmd_order(args) -> int:
    if args.scm:
        source = scm_mod.load_scm(args.scm)
    else:
        _need(args, "--data")
        source = pd.read_csv(args.data)
    override = ordering.OrderingSpec.from_dict(_read_json(args.ordering)) if args.ordering else None
    spec, report = ordering.infer_ordering(source, args.treatment, args.outcome, adjust=args.adjust or (),
                                           override=override)
    if args.out:
        Path(args.out).write_text(report.ate_csv())
    sys.stdout.write(_dumps({"ordering": spec.to_dict(), "trend": report.to_dict()}))
    return 0


def _label_source(args, data):
    if args.manifest:
        man = _read_json(args.manifest)
        return datagen.make_generator(man["kind"], **man["params"])
    return "matching"


def cmd_train(args) -> int:
    _need(args, "--data", "--seed", "--out")
    data = pd.read_csv(args.data)
    covs = args.covariates or []
    ds = learn.make_labels(data, _label_source(args, data), treatment=args.treatment, outcome=args.outcome,
                           covariates=covs)
    order = _read_json(args.ordering) if args.ordering else {}
    cfg = learn.TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        lam=args.lam,
        penalty="none" if args.lam == 0 else "pairwise-hinge",
        seed=args.seed,
        draws=args.draws,
        loss=args.loss,
        treatment_order=tuple(order["treatment_order"]) if order else None,
        outcome_order=tuple(order["outcome_order"]) if order else None,
    )
    result = learn.train(ds, cfg, ds.model_config(u_dim=args.u_dim, width=args.width))
    out = Path(args.out)
    doc = result.model.to_dict()
    doc["config"] = {**doc["config"], "train": cfg.to_dict(), "covariates": covs}
    out.write_text(json.dumps(doc) + "\n")
    out.with_name(out.stem + ".loss.csv").write_text(result.loss_csv())
    sys.stdout.write(_dumps({"model": str(out), "final_loss": result.losses[-1],
                             "final_penalty": result.penalties[-1],
                             "loss_nonincreasing": result.nonincreasing}))
    return 0


def _load_model(path):
    doc = _read_json(path)
    config = dict(doc["config"])
    covs = config.pop("covariates", [])
    train_cfg = config.pop("train", {})
    doc = {**doc, "config": config}
    return learn.TwinModel.from_dict(doc), covs, train_cfg.get("noise", "normal")


def cmd_poc(args) -> int:
    if args.scm:
        res = causation.poc_exact(scm_mod.load_scm(args.scm), args.treatment, args.outcome)
    else:
        _need(args, "--model", "--seed")
        model, covs, noise = _load_model(args.model)
        data = pd.read_csv(args.data) if args.data else None
        res = causation.poc_from_model(model, data, args.n, args.seed, treatment=args.treatment,
                                       covariates=covs, noise=noise)
    _emit(res.to_json() + "\n", args.out)
    return 0


def cmd_table(args) -> int:
    if args.scm:
        source, covs, noise, data = scm_mod.load_scm(args.scm), [], "normal", None
    else:
        _need(args, "--model", "--seed")
        source, covs, noise = _load_model(args.model)
        data = pd.read_csv(args.data) if args.data else None
    ord = _ordering(args, source)
    seed = args.seed if args.seed is not None else 0
    if args.residuals:
        res = causation.theorem2_residuals(source, ord, args.n, seed, data=data, covariates=covs, noise=noise)
        doc = res.to_dict()
    else:
        tmpl = causation.CfTemplate(args.evidence, args.target, args.op)
        doc = causation.counterfactual_table(source, tmpl, ord, args.n, seed, data=data, covariates=covs,
                                             noise=noise).to_dict()
    _emit(_dumps(doc), args.out)
    return 0


def _read_queries(path) -> list[twin.CounterfactualQuery]:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
        docs = doc if isinstance(doc, list) else [doc]
    except json.JSONDecodeError:
        docs = [json.loads(line) for line in text.splitlines() if line.strip()]
    return [twin.CounterfactualQuery.from_dict(d) for d in docs]


def cmd_bench(args) -> int:
    _need(args, "--scm", "--query", "--seed")
    m = scm_mod.load_scm(args.scm)
    report = twin.bench_compare(m, _read_queries(args.query), args.n, args.seed)
    _emit(report.to_jsonl(), args.out)
    sys.stderr.write(_dumps({"queries": len(report.agreements), "all_agree": report.all_agree}))
    return 0


def _fmt_cell(v, se, mark=False) -> str:
    if v is None:
        return "-"
    s = f"{v:.4f}" if not se else f"{v:.4f}±{se:.4f}"
    return f"*{s}*" if mark else s


def _render_grid(labels, cells) -> str:
    width = max([len(c) for row in cells for c in row] + [len(str(l)) for l in labels] + [3])
    head = " " * width + " | " + " ".join(str(l).rjust(width) for l in labels)
    lines = [head, "-" * len(head)]
    for lab, row in zip(labels, cells):
        lines.append(str(lab).rjust(width) + " | " + " ".join(c.rjust(width) for c in row))
    return "\n".join(lines) + "\n"


def render_report(doc, gate: float | None = None) -> tuple[str, bool]:
    """Text rendering of a table or residual document; second value is True
    when a gated residual exceeds the threshold."""
    docs = doc if isinstance(doc, list) else [doc]
    if not docs:
        return "no rows\n", False
    out, failed = [], False
    for d in docs:
        kind = d.get("type")
        if kind == "cf_table":
            t = d["template"]
            out.append(f"P(Y_T' {t['op']} {t['target']} | T, Y={t['evidence']}); rows T, columns T'; "
                       f"dominance {d['dominance']:.4f}\n")
            labels = d["treatments"]
            cells = [[("0" if a == b else _fmt_cell(d["values"][a][b], d["stderr"][a][b]))
                      for b in range(len(labels))] for a in range(len(labels))]
            out.append(_render_grid(labels, cells))
        elif kind == "residuals":
            for p in d["pairs"]:
                i, j = p["i"], p["j"]
                out.append(f"P(Y_x{j} = y_l | Y_x{i} = y_h); rows h, columns l\n")
                vals, errs = p["values"], p["stderr"]
                m = len(vals)
                cells = []
                for h in range(m):
                    row = []
                    for l in range(m):
                        v = vals[h][l]
                        bad = gate is not None and l > h and v is not None and v > gate
                        failed |= bad
                        row.append(_fmt_cell(v, errs[h][l], bad))
                    cells.append(row)
                out.append(_render_grid(list(range(m)), cells))
        else:
            raise TwinCFError(f"unrecognised result document type {kind!r}")
    return "\n".join(out), failed


def cmd_report(args) -> int:
    _need(args, "--input")
    text = Path(args.input).read_text().strip()
    if not text:
        doc = []
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            try:
                doc = [json.loads(line) for line in text.splitlines() if line.strip()]
            except json.JSONDecodeError as exc:
                raise TwinCFError(f"{args.input}: malformed input ({exc.msg})") from exc
    rendered, failed = render_report(doc, args.gate)
    _emit(rendered, args.out)
    return 1 if failed else 0


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twincf", description="Twin-network counterfactual engine.")
    p.add_argument("--config", help="JSON file supplying default values for any flag")
    sub = p.add_subparsers(dest="command", required=True)
    p.subcommands = sub.choices

    def common(sp, *, seed=True, out=True):
        if seed:
            sp.add_argument("--seed", type=int)
        if out:
            sp.add_argument("--out")

    g = sub.add_parser("generate", help="sample a synthetic dataset with sidecar and manifest")
    g.add_argument("--kind", choices=datagen.KINDS, required=True)
    g.add_argument("--q", type=_floats)
    g.add_argument("--px1", type=float)
    g.add_argument("--pz1", type=float)
    g.add_argument("--pux1", type=float)
    g.add_argument("--n", type=int, default=1000)
    common(g)

    v = sub.add_parser("validate", help="validate an SCM file")
    v.add_argument("--scm")

    q = sub.add_parser("query", help="answer a counterfactual query")
    q.add_argument("--scm")
    q.add_argument("--query")
    q.add_argument("--method", choices=METHODS, default="exact")
    q.add_argument("--n", type=int, default=100_000)
    common(q)

    c = sub.add_parser("check", help="ordering, monotonicity and stability checks")
    c.add_argument("--scm")
    c.add_argument("--ordering")
    c.add_argument("--treatment", default="X")
    c.add_argument("--outcome", default="Y")
    c.add_argument("--which", choices=("all", "premise", "monotone", "cf-ordering", "stability"), default="all")
    c.add_argument("--gate", nargs="?", const=0.0, type=float)
    common(c, seed=False)

    o = sub.add_parser("order", help="infer a treatment ordering from the ATE trend")
    o.add_argument("--scm")
    o.add_argument("--data")
    o.add_argument("--treatment", default="X")
    o.add_argument("--outcome", default="Y")
    o.add_argument("--adjust", type=_names)
    o.add_argument("--ordering")
    common(o, seed=False)

    t = sub.add_parser("train", help="train a deep twin network")
    t.add_argument("--data")
    t.add_argument("--manifest", help="generator manifest for exact labels (default: matching)")
    t.add_argument("--treatment", default="X")
    t.add_argument("--outcome", default="Y")
    t.add_argument("--covariates", type=_names)
    t.add_argument("--ordering")
    t.add_argument("--lambda", dest="lam", type=float, default=learn.TrainConfig.lam)
    t.add_argument("--lr", type=float, default=learn.TrainConfig.lr)
    t.add_argument("--batch-size", type=int, default=learn.TrainConfig.batch_size)
    t.add_argument("--epochs", type=int, default=learn.TrainConfig.epochs)
    t.add_argument("--draws", type=int, default=learn.TrainConfig.draws)
    t.add_argument("--loss", choices=learn.LOSSES, default="mse")
    t.add_argument("--u-dim", type=int, default=1)
    t.add_argument("--width", type=int, default=32)
    common(t)

    pc = sub.add_parser("poc", help="probabilities of necessity and sufficiency")
    pc.add_argument("--scm")
    pc.add_argument("--model")
    pc.add_argument("--data")
    pc.add_argument("--treatment", default="X")
    pc.add_argument("--outcome", default="Y")
    pc.add_argument("--n", type=int, default=100_000)
    common(pc)

    tb = sub.add_parser("table", help="counterfactual table or forbidden-conditional residuals")
    tb.add_argument("--scm")
    tb.add_argument("--model")
    tb.add_argument("--data")
    tb.add_argument("--ordering")
    tb.add_argument("--treatment", default="X")
    tb.add_argument("--outcome", default="Y")
    tb.add_argument("--evidence", type=int, default=0)
    tb.add_argument("--target", type=int, default=1)
    tb.add_argument("--op", choices=("eq", "ge", "le"), default="eq")
    tb.add_argument("--residuals", action="store_true")
    tb.add_argument("--n", type=int, default=100_000)
    common(tb)

    b = sub.add_parser("bench", help="time twin-network sampling against abduction-action-prediction")
    b.add_argument("--scm")
    b.add_argument("--query", help="JSON list or JSON lines of queries")
    b.add_argument("--n", type=int, default=100_000)
    common(b)

    r = sub.add_parser("report", help="render table or residual documents as text")
    r.add_argument("--input")
    r.add_argument("--gate", nargs="?", const=causation.RESIDUAL_GATE, type=float)
    common(r, seed=False)
    return p


COMMANDS = {
    "generate": cmd_generate,
    "validate": cmd_validate,
    "query": cmd_query,
    "check": cmd_check,
    "order": cmd_order,
    "train": cmd_train,
    "poc": cmd_poc,
    "table": cmd_table,
    "bench": cmd_bench,
    "report": cmd_report,
}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.config:
        try:
            defaults = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            sys.stderr.write(f"twincf: error: --config: {exc}\n")
            return 2
        # flags given on the command line win over the config file
        keys = {("lam" if k == "lambda" else k.replace("-", "_")): v for k, v in defaults.items()}
        parser.subcommands[args.command].set_defaults(**keys)
        args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"twincf: error: {exc}\n")
        return 2
    except TwinCFError as exc:
        sys.stderr.write(_dumps(exc.to_dict()))
        return 1
    except (OSError, KeyError, ValueError) as exc:
        sys.stderr.write(_dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
