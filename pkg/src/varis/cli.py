"""Command-line surface: generate, exact, sample, compare."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import engine, exact, model

EXIT_USAGE = 2
EXIT_CAP = 3
EXIT_DOMINATION = 4

ALGORITHMS = ("varis", "varis-static", "lw", "sis")


def _load(path: str, evidence_override: list[str] | None):
    net, evidence = model.parse_network(Path(path).read_text())
    if evidence_override:
        evidence = {}
        for item in evidence_override:
            if "=" not in item:
                raise model.NetworkFormatError(
                    f"evidence override {item!r} must look like VAR=STATE")
            name, label = item.split("=", 1)
            evidence[name] = label
        model.evidence_indices(net, evidence)  # raises KeyError on bad names
    return net, evidence


def _exact_ln(net, evidence) -> tuple[float, str]:
    try:
        value, _ = exact.bucket_eliminate(net, evidence)
        return value, "bucket_elimination"
    except exact.TableCapError:
        return exact.enumerate_likelihood(net, evidence), "enumeration"


def cmd_exact(args) -> int:
    net, evidence = _load(args.network, args.evidence)
    value, method = _exact_ln(net, evidence)
    print(f"ln_p_e={value!r} method={method}")
    return 0


def _config_from(args) -> engine.SamplerConfig:
    return engine.SamplerConfig(
        m=args.batch, M=args.samples, k_max=args.kmax, eta0=args.eta0,
        etaf=args.etaf, alpha=args.alpha, beta=args.beta, window=args.window,
        w0=args.w0, width_bound=args.width_bound, sweeps=args.sweeps,
        fit_tol=args.fit_tol, seed=args.seed, workers=args.workers)


def _run(algorithm: str, net, evidence, cfg: engine.SamplerConfig,
         adaptive: bool, directing: bool) -> engine.RunReport:
    if algorithm == "varis":
        return engine.run_varis(net, evidence, cfg, adaptive, directing)
    if algorithm == "varis-static":
        return engine.run_varis(net, evidence, cfg, False, False)
    if algorithm == "lw":
        return engine.likelihood_weighting(net, evidence, cfg.M, cfg.seed,
                                           cfg.m, cfg.workers)
    if algorithm == "sis":
        return engine.sis_star(net, evidence, cfg)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def cmd_sample(args) -> int:
    net, evidence = _load(args.network, args.evidence)
    cfg = _config_from(args)
    report = _run(args.algorithm, net, evidence, cfg,
                  adaptive=not args.no_adapt, directing=not args.no_direct)
    out = Path(args.out)
    out.with_suffix(".csv").write_text(report.trace_csv())
    out.with_suffix(".json").write_text(report.summary_json())
    print(f"ln_estimate={report.ln_estimate!r}")
    return 0


def cmd_generate(args) -> int:
    cfg = model.GeneratorConfig(
        nodes=args.nodes, max_parents=args.max_parents, states=args.states,
        det_fraction=args.det, evidence_leaves=args.evidence_leaves)
    net, evidence = model.generate_random_network(cfg, args.seed)
    Path(args.out).write_text(model.serialize_network(net, evidence))
    try:
        value, method = _exact_ln(net, evidence)
        print(f"ln_p_e={value!r} method={method}")
    except (exact.TableCapError, exact.EnumerationCapError):
        print("ln_p_e=unavailable method=none")
    return 0


def cmd_compare(args) -> int:
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    for a in algorithms:
        if a not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {a!r}")
    paths = sorted(Path(args.networks).glob("*.json"))
    if not paths:
        raise model.NetworkFormatError(f"no network files in {args.networks!r}")
    lines = ["network,algorithm,trial,ln_exact,ln_estimate,abs_error,pct_error"]
    for path in paths:
        net, evidence = model.parse_network(path.read_text())
        ln_exact, _ = _exact_ln(net, evidence)
        for algorithm in algorithms:
            for trial in range(args.trials):
                cfg = engine.SamplerConfig(
                    m=args.batch, M=args.samples, width_bound=args.width_bound,
                    seed=args.seed + trial, workers=args.workers)
                report = _run(algorithm, net, evidence, cfg, True, True)
                err = abs(report.ln_estimate - ln_exact)
                pct = 100.0 * err / abs(ln_exact) if ln_exact != 0.0 else 0.0
                lines.append(",".join([
                    path.name, algorithm, str(trial), repr(ln_exact),
                    repr(report.ln_estimate), repr(err), repr(pct)]))
    table = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(table)
    else:
        sys.stdout.write(table)
    return 0


def _add_sampler_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--samples", type=int, default=100_000, metavar="M")
    p.add_argument("--batch", type=int, default=1000, metavar="m")
    p.add_argument("--kmax", type=int, default=None)
    p.add_argument("--eta0", type=float, default=0.12)
    p.add_argument("--etaf", type=float, default=0.03)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=0.2)
    p.add_argument("--window", type=int, default=10, metavar="l")
    p.add_argument("--w0", type=float, default=0.001)
    p.add_argument("--width-bound", type=int, default=2, metavar="W")
    p.add_argument("--sweeps", type=int, default=20)
    p.add_argument("--fit-tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0, metavar="S")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varis",
        description="Importance sampling for discrete Bayesian networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="print the exact log likelihood")
    p.add_argument("network")
    p.add_argument("--evidence", action="append", metavar="VAR=STATE")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("sample", help="run a sampler and write trace/summary")
    p.add_argument("network")
    p.add_argument("--algorithm", choices=ALGORITHMS, default="varis")
    p.add_argument("--evidence", action="append", metavar="VAR=STATE")
    p.add_argument("--no-adapt", action="store_true")
    p.add_argument("--no-direct", action="store_true")
    p.add_argument("--out", default="run", metavar="PATH")
    _add_sampler_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("generate", help="write a random test network")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--max-parents", type=int, default=2)
    p.add_argument("--states", type=int, default=2)
    p.add_argument("--det", type=float, default=0.0, metavar="PHI")
    p.add_argument("--evidence-leaves", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="network.json")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("compare", help="error table over a directory of networks")
    p.add_argument("networks")
    p.add_argument("--algorithms", default="varis,lw")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--samples", type=int, default=10_000, metavar="M")
    p.add_argument("--batch", type=int, default=1000, metavar="m")
    p.add_argument("--width-bound", type=int, default=2, metavar="W")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (model.NetworkFormatError, model.NetworkValidationError,
            ValueError, KeyError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (exact.EnumerationCapError, exact.TableCapError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CAP
    except exact.DominationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMINATION


if __name__ == "__main__":
    sys.exit(main())
