"""Command-line entry point: preprocess, sample, diagnose, bench.

Exit codes: 0 success, 1 usage or I/O errors, 2 infeasible model,
3 numerical failure.  All randomness flows from --seed; CRHMC_THREADS caps
the worker count for multi-chain runs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import diagnostics
from .errors import (
    ModelInfeasibleError,
    NotPositiveDefiniteError,
    NumericalFailureError,
)
from .models import (
    ModelParseError,
    birkhoff,
    hypercube,
    load_model,
    load_samples,
    save_model,
    save_samples,
    save_stats,
    simplex,
)
from .preprocess import analytic_center, lift_samples, record_to_dict, simplify
from .sampler import SamplerConfig, run_chain, run_char_chain


def _worker_cap(requested):
    env = os.environ.get("CRHMC_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(requested, cap))


def cmd_preprocess(args):
    model = load_model(args.model)
    simplified, record = simplify(model)
    save_model(simplified, args.output)
    with open(str(args.output) + ".transform.json", "w") as fh:
        json.dump(record_to_dict(record), fh)
        fh.write("\n")
    if args.report:
        print(f"{'':<12}{'n':>8}{'m':>8}{'nnz':>10}{'full-dim':>10}")
        print(f"{'before':<12}{model.n:>8}{model.m:>8}{model.nnz:>10}"
              f"{model.n - model.m:>10}")
        print(f"{'after':<12}{simplified.n:>8}{simplified.m:>8}{simplified.nnz:>10}"
              f"{simplified.n - simplified.m:>10}")
        print(f"rounds: {record.meta.get('rounds', 0)}")
    return 0


def _run_chains(model, config, total, chains):
    counts = [total // chains + (1 if i < total % chains else 0) for i in range(chains)]
    workers = _worker_cap(chains)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(run_chain, model, config, counts[i], i) for i in range(chains)
        ]
        return [f.result() for f in futures]  # ordered by chain index


def cmd_sample(args):
    model = load_model(args.model)
    simplified, record = simplify(model)
    config = SamplerConfig(
        seed=args.seed,
        h_init=args.h if args.h is not None else 0.2,
        record_every=args.record_every,
        warmup_steps=args.warmup,
    )
    batches = _run_chains(simplified, config, args.count, args.chains)
    if args.count > 0:
        stacked = np.vstack([b.samples for b in batches])
        lifted = lift_samples(stacked, record)
    else:
        lifted = np.zeros((0, model.n))
    save_samples(lifted, args.output)
    agg = {
        "model": {"n": model.n, "m": model.m, "nnz": model.nnz,
                  "n_preprocessed": simplified.n, "m_preprocessed": simplified.m,
                  "nnz_preprocessed": simplified.nnz},
        "config": {**{k: v for k, v in vars(config).items()},
                   "chains": args.chains},
        "chains": [b.stats.as_dict() for b in batches],
        "sampling_steps": int(sum(b.stats.sampling_steps for b in batches)),
        "sampling_seconds": float(sum(b.stats.sampling_seconds for b in batches)),
    }
    save_stats(agg, str(args.output) + ".stats.json")
    for i, b in enumerate(batches):
        s = b.stats
        print(
            f"chain {i}: steps={s.steps_total} acceptance={s.acceptance_rate:.3f} "
            f"h={s.h_final:.4f} imm-iters={s.mean_fixed_point_iters:.1f} "
            f"nonconverged={s.nonconverged_imm} "
            f"wall/step={s.wall_time_per_step * 1e3:.3f} ms"
        )
    return 0


def cmd_diagnose(args):
    samples = load_samples(args.samples)
    if samples.shape[0] < 10:
        print("fewer than 10 samples: diagnostics unavailable", file=sys.stderr)
        return 1
    rep = diagnostics.ess(samples)
    print(f"samples: {samples.shape[0]} x {samples.shape[1]}")
    print(f"min ESS: {rep.min_ess:.1f}")
    if rep.any_flagged:
        flagged = np.nonzero(rep.constant_coordinates)[0]
        print(f"warning: constant coordinates flagged: {flagged.tolist()}")
    if rep.min_ess < 10:
        print("warning: ESS < 10, estimates unreliable")
    thinned = diagnostics.thin_twice(samples)
    print(f"after double thinning: {thinned.shape[0]} samples")

    stats_path = str(args.samples) + ".stats.json"
    if os.path.exists(stats_path):
        with open(stats_path) as fh:
            stats = json.load(fh)
        steps = stats.get("sampling_steps", 0)
        seconds = stats.get("sampling_seconds", 0.0)
        if steps and rep.min_ess > 0:
            min_ess_thinned = (
                diagnostics.ess(thinned).min_ess if thinned.shape[0] >= 10
                else float(thinned.shape[0])
            )
            print(f"steps per effective sample:   {steps / min_ess_thinned:.2f}")
            print(f"seconds per effective sample: {seconds / min_ess_thinned:.4f}")

    if args.uniformity:
        if args.model is None:
            print("--uniformity requires --model", file=sys.stderr)
            return 1
        model = load_model(args.model)
        simplified, record = simplify(model)
        collapsed = record.collapse(samples)
        center = analytic_center(simplified)
        u = diagnostics.uniformity_statistic(collapsed, simplified, center)
        ks = diagnostics.ks_statistic(u)
        print(f"uniformity KS statistic on r^dim (dim={simplified.n - simplified.m}): "
              f"{ks:.4f}")
        if args.plot_data:
            v = np.sort(u)
            ecdf = np.arange(1, v.size + 1) / v.size
            with open(args.plot_data, "w") as fh:
                fh.write("u,ecdf\n")
                for a, b in zip(v, ecdf):
                    fh.write(f"{float(a)!r},{float(b)!r}\n")
            print(f"wrote CDF pairs to {args.plot_data}")
    return 0


_FAMILIES = {"hypercube": hypercube, "simplex": simplex, "birkhoff": birkhoff}


def cmd_bench(args):
    dims = [int(d) for d in args.dims.split(",") if d]
    build = _FAMILIES[args.family]
    rows = []
    for d in dims:
        model = build(d)
        simplified, _ = simplify(model)
        config = SamplerConfig(seed=args.seed, record_every=args.record_every,
                               warmup_steps=args.warmup)
        batch = run_chain(simplified, config, args.samples)
        rows.append(diagnostics.mixing_entry(f"{args.family}-{d}", simplified, batch))
        print(f"done {args.family}-{d}: acceptance={batch.stats.acceptance_rate:.3f} "
              f"h={batch.stats.h_final:.4f}", file=sys.stderr)
    report = diagnostics.mixing_report(rows)
    print(report.format_table())

    char_report = None
    if args.baseline == "char":
        if args.family != "hypercube":
            print("CHAR baseline runs on hypercubes only", file=sys.stderr)
            return 1
        char_rows = []
        for d in dims:
            model = build(d)
            batch = run_char_chain(model, args.samples, seed=args.seed)
            char_rows.append(diagnostics.mixing_entry(f"char-{d}", model, batch))
        char_report = diagnostics.mixing_report(char_rows)
        print()
        print(char_report.format_table())

    if args.output:
        with open(args.output, "w") as fh:
            fh.write("label,n,nnz,steps,min_ess,seconds,steps_per_ess,seconds_per_ess\n")
            all_rows = rows + (char_report.rows if char_report else [])
            for r in all_rows:
                fh.write(f"{r.label},{r.n},{r.nnz},{r.steps},{r.min_ess!r},"
                         f"{r.seconds!r},{r.steps_per_ess!r},{r.seconds_per_ess!r}\n")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="crhmc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("preprocess", help="simplify a model and save the transform")
    pp.add_argument("model")
    pp.add_argument("-o", "--output", required=True)
    pp.add_argument("--report", action="store_true")
    pp.set_defaults(func=cmd_preprocess)

    ps = sub.add_parser("sample", help="draw samples from a model")
    ps.add_argument("model")
    ps.add_argument("-n", "--count", type=int, required=True)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--h", type=float, default=None, help="initial step size")
    ps.add_argument("--chains", type=int, default=1)
    ps.add_argument("--record-every", type=int, default=10)
    ps.add_argument("--warmup", type=int, default=None)
    ps.add_argument("-o", "--output", required=True)
    ps.set_defaults(func=cmd_sample)

    pd = sub.add_parser("diagnose", help="ESS and uniformity diagnostics")
    pd.add_argument("samples")
    pd.add_argument("--model", default=None)
    pd.add_argument("--uniformity", action="store_true")
    pd.add_argument("--plot-data", default=None,
                    help="write empirical CDF pairs of r^dim to this CSV")
    pd.set_defaults(func=cmd_diagnose)

    pb = sub.add_parser("bench", help="mixing-rate sweep over a polytope family")
    pb.add_argument("--family", choices=sorted(_FAMILIES), required=True)
    pb.add_argument("--dims", required=True,
                    help="comma-separated sizes (side length for birkhoff)")
    pb.add_argument("--samples", type=int, default=400)
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--record-every", type=int, default=10)
    pb.add_argument("--warmup", type=int, default=None)
    pb.add_argument("--baseline", choices=["char"], default=None)
    pb.add_argument("-o", "--output", default=None)
    pb.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ModelParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ModelInfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailureError, NotPositiveDefiniteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
