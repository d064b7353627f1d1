"""Command-line experiment harness.

Subcommands::

    cvarflp generate    --nodes 21 --scenarios 10 --seed 1 --out inst.json
    cvarflp run         --instance inst.json --method e --model mb-bar --alpha 0.7 --out runs/x
    cvarflp reevaluate  --instance inst.json --frontier runs/x/frontier.json --k 3 --out re.json
    cvarflp compare     a.json b.json --reference union --out table.csv
    cvarflp plot-data   a.json b.json --out plot.csv

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from .formulations import build_ma, build_mb
from .frontier import Frontier, balanced_box, epsilon_constraint, matheuristic, reevaluate_frontier
from .indicators import IndicatorError, report, reports_csv, union
from .instance import (GeneratorParams, InstanceError, RiskSpec, generate_instance, parse_instance,
                       regenerate_scenarios, serialize_instance)

log = logging.getLogger("cvarflp")

RECORD_FIELDS = ("instance", "method", "model", "alpha", "k", "runtime_s", "n_ndp", "status")
METHODS = ("e", "bb", "mat")
MODELS = ("ma", "mb", "mb-bar")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    instance: str | None
    nodes: int | None
    scenarios: int | None
    method: str
    model: str
    alpha: float | None
    k: int | None
    time_limit_total: float = 7200.0
    time_limit_per_point: float | None = None
    seed: int = 0
    out: str = "run"
    kappa: int = 2
    engine: str = "highs"

    def validate(self) -> None:
        if (self.alpha is None) == (self.k is None):
            raise UsageError("give exactly one of --alpha and --k")
        if self.method not in METHODS:
            raise UsageError(f"--method must be one of {', '.join(METHODS)}")
        if self.model not in MODELS:
            raise UsageError(f"--model must be one of {', '.join(MODELS)}")
        if self.method == "bb" and self.model == "mb-bar":
            raise UsageError("bb needs an exact model (ma or mb)")
        if (self.instance is None) == (self.nodes is None):
            raise UsageError("give either --instance or --nodes/--scenarios")
        if self.nodes is not None and not self.scenarios:
            raise UsageError("--nodes needs --scenarios")


def _resolve_risk(n_scenarios: int, alpha: float | None, k: int | None) -> RiskSpec:
    if k is not None:
        return RiskSpec(k, n_scenarios)
    return RiskSpec.from_alpha(alpha, n_scenarios)


def _load(cfg: RunConfig):
    if cfg.instance is not None:
        return (*parse_instance(Path(cfg.instance).read_text()), Path(cfg.instance).stem)
    inst, scen = generate_instance(cfg.seed, cfg.nodes, cfg.scenarios)
    return inst, scen, f"gen-{cfg.nodes}-{cfg.scenarios}-{cfg.seed}"


def run_experiment(cfg: RunConfig) -> dict:
    """Run one (method, model) combination and write its output directory."""
    cfg.validate()
    inst, scen, name = _load(cfg)
    risk = _resolve_risk(scen.n_scenarios, cfg.alpha, cfg.k)
    mode = "bar" if cfg.model == "mb-bar" else "exact"
    if cfg.model == "ma":
        flp = build_ma(inst, scen, risk.alpha)
    else:
        flp = build_mb(inst, scen, risk)
    per_point = cfg.time_limit_per_point
    total = cfg.time_limit_total
    if cfg.method == "e":
        fr = epsilon_constraint(flp, mode, per_point, cfg.engine, time_limit=total)
    elif cfg.method == "bb":
        fr = balanced_box(flp, per_point, cfg.engine, time_limit=total)
    else:
        budget = per_point if per_point is not None else 10.0
        fr = matheuristic(flp, mode, budget, cfg.kappa, cfg.engine, time_limit=total)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    fr.save(out / "frontier.json")
    record = {
        "instance": name, "method": cfg.method, "model": cfg.model,
        "alpha": repr(risk.alpha), "k": risk.k,
        "runtime_s": f"{fr.stats.get('runtime_s', 0.0):.3f}",
        "n_ndp": len(fr), "status": fr.stats.get("status", "optimal"),
    }
    with open(out / "record.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RECORD_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerow(record)
    lines = []
    if "cuts" in fr.stats:
        lines.append(f"cuts {fr.stats['cuts']}")
        lines.append(f"separator_calls {fr.stats['separator_calls']}")
        if "separator_calls_after_first" in fr.stats:
            lines.append(f"separator_calls_after_first {fr.stats['separator_calls_after_first']}")
        lines += ["subset " + " ".join(map(str, s)) for s in fr.stats.get("subsets", [])]
    (out / "cuts.log").write_text("".join(line + "\n" for line in lines))
    return record


# ------------------------------------------------------------------ commands
def _cmd_generate(args) -> int:
    params = GeneratorParams(n_sites=args.sites, site_fraction=args.site_fraction)
    inst, scen = generate_instance(args.seed, args.nodes, args.scenarios, params)
    if args.resample is not None:
        scen = regenerate_scenarios(args.seed, args.nodes, args.resample, params)
    text = serialize_instance(inst, scen)
    if args.out == "-":
        sys.stdout.write(text + "\n")
    else:
        Path(args.out).write_text(text + "\n")
    return 0


def _cmd_run(args) -> int:
    cfg = RunConfig(instance=args.instance, nodes=args.nodes, scenarios=args.scenarios,
                    method=args.method, model=args.model, alpha=args.alpha, k=args.k,
                    time_limit_total=args.tl, time_limit_per_point=args.tl_point, seed=args.seed,
                    out=args.out, kappa=args.kappa, engine=args.engine)
    record = run_experiment(cfg)
    print(",".join(str(record[f]) for f in RECORD_FIELDS))
    return 0


def _cmd_reevaluate(args) -> int:
    if (args.alpha is None) == (args.k is None):
        raise UsageError("give exactly one of --alpha and --k")
    inst, scen = parse_instance(Path(args.instance).read_text())
    risk = _resolve_risk(scen.n_scenarios, args.alpha, args.k)
    fr = reevaluate_frontier(Frontier.load(args.frontier), inst, scen, k=risk.k)
    fr.save(args.out)
    return 0


def _label(path: str) -> str:
    p = Path(path)
    return p.parent.name if p.name == "frontier.json" and p.parent.name else p.stem


def _cmd_compare(args) -> int:
    sets = [(_label(f), Frontier.load(f)) for f in args.frontiers]
    if args.reference == "union":
        ref_pts = union(*(fr for _, fr in sets))
    else:
        ref_pts = union(Frontier.load(args.reference))
    if not ref_pts:
        raise IndicatorError("the reference set is empty")
    rows = [(label, report(fr, ref_pts)) for label, fr in sets if len(fr)]
    text = reports_csv(rows)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0


def _cmd_plot_data(args) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("series", "cost", "risk"))
    for f in args.frontiers:
        fr = Frontier.load(f)
        if not len(fr):
            log.warning("frontier %s is empty", f)
        for p in fr:
            w.writerow((_label(f), p.cost, repr(p.risk)))
    if args.out == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(args.out).write_text(buf.getvalue())
    return 0


def _positive(kind):
    def parse(text: str):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"expected a positive value, got {text}")
        return value
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvarflp", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic instance")
    g.add_argument("--nodes", type=_positive(int), required=True)
    g.add_argument("--scenarios", type=_positive(int), required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--sites", type=_positive(int), default=None)
    g.add_argument("--site-fraction", type=float, default=GeneratorParams.site_fraction)
    g.add_argument("--resample", type=_positive(int), default=None,
                   help="replace the scenarios by a fresh sample of this size")
    g.add_argument("--out", default="-")
    g.set_defaults(func=_cmd_generate)

    r = sub.add_parser("run", help="compute a frontier")
    r.add_argument("--instance")
    r.add_argument("--nodes", type=_positive(int))
    r.add_argument("--scenarios", type=_positive(int))
    r.add_argument("--method", choices=METHODS, required=True)
    r.add_argument("--model", choices=MODELS, required=True)
    r.add_argument("--alpha", type=float)
    r.add_argument("--k", type=_positive(int))
    r.add_argument("--tl", type=_positive(float), default=7200.0, help="total time limit (s)")
    r.add_argument("--tl-point", type=_positive(float), default=None, help="per-point time limit (s)")
    r.add_argument("--kappa", type=_positive(int), default=2)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--engine", choices=("highs", "native"), default="highs")
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_run)

    e = sub.add_parser("reevaluate", help="exact risks for the sites of a frontier")
    e.add_argument("--instance", required=True)
    e.add_argument("--frontier", required=True)
    e.add_argument("--alpha", type=float)
    e.add_argument("--k", type=_positive(int))
    e.add_argument("--out", required=True)
    e.set_defaults(func=_cmd_reevaluate)

    c = sub.add_parser("compare", help="indicator table against a reference set")
    c.add_argument("frontiers", nargs="+")
    c.add_argument("--reference", default="union", help="'union' or a frontier file")
    c.add_argument("--out", default="-")
    c.set_defaults(func=_cmd_compare)

    p = sub.add_parser("plot-data", help="concatenate frontiers for plotting")
    p.add_argument("frontiers", nargs="+")
    p.add_argument("--out", default="-")
    p.set_defaults(func=_cmd_plot_data)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cvarflp: error: {exc}", file=sys.stderr)
        return 2
    except (InstanceError, IndicatorError, OSError, ValueError, RuntimeError) as exc:
        print(f"cvarflp: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
