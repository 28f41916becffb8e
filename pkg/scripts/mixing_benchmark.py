#!/usr/bin/env python3
"""Mixing-rate sweep: steps/ESS and seconds/ESS vs dimension, CSV + table.

Example:
    python3 scripts/mixing_benchmark.py --families hypercube,simplex \
        --dims 64,256,1024 --samples 2000 --char-dims 16,32,64 -o mixing.csv
"""

import argparse
import sys

from crhmc.diagnostics import mixing_entry, mixing_report
from crhmc.models import birkhoff, hypercube, simplex
from crhmc.preprocess import simplify
from crhmc.sampler import SamplerConfig, run_chain, run_char_chain

FAMILIES = {"hypercube": hypercube, "simplex": simplex, "birkhoff": birkhoff}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--families", default="hypercube,simplex")
    ap.add_argument("--dims", default="64,256,1024,4096")
    ap.add_argument("--samples", type=int, default=6000)
    ap.add_argument("--char-dims", default="", help="CHAR baseline hypercube sizes")
    ap.add_argument("--char-samples", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--warmup", type=int, default=600)
    ap.add_argument("-o", "--output", default=None)
    args = ap.parse_args()

    dims = [int(d) for d in args.dims.split(",") if d]
    all_rows = []
    for fam in args.families.split(","):
        rows = []
        for d in dims:
            simp, _ = simplify(FAMILIES[fam](d))
            cfg = SamplerConfig(seed=args.seed, warmup_steps=args.warmup)
            batch = run_chain(simp, cfg, args.samples)
            rows.append(mixing_entry(f"{fam}-{d}", simp, batch))
            print(f"{fam}-{d}: h={batch.stats.h_final:.3f} "
                  f"acc={batch.stats.acceptance_rate:.3f}", file=sys.stderr)
        print(mixing_report(rows).format_table())
        print()
        all_rows += rows

    if args.char_dims:
        rows = []
        for d in (int(v) for v in args.char_dims.split(",") if v):
            batch = run_char_chain(hypercube(d), args.char_samples, seed=args.seed)
            rows.append(mixing_entry(f"char-{d}", hypercube(d), batch))
        print(mixing_report(rows).format_table())
        all_rows += rows

    if args.output:
        with open(args.output, "w") as fh:
            fh.write("label,n,nnz,steps,min_ess,seconds,steps_per_ess,seconds_per_ess\n")
            for r in all_rows:
                fh.write(f"{r.label},{r.n},{r.nnz},{r.steps},{r.min_ess!r},"
                         f"{r.seconds!r},{r.steps_per_ess!r},{r.seconds_per_ess!r}\n")


if __name__ == "__main__":
    main()
