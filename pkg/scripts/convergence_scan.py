"""How fast do phase-flip moment exponents approach their limits?

For the factorial schedule the share of the current regime at the k-th flip
is only about 1 - 1/k, so liminf/limsup readings converge like O(1/k).  This
script tabulates the error at each flip for both switching constructions.

    python scripts/convergence_scan.py --q -1 0.5 2
"""
import argparse
import csv
import sys

from mfhs.estimators import moment_scaling, regime_count_table
from mfhs.measures import NonRegularMoran, SwitchedBernoulli
from mfhs.spectra import beta_bounds_nonregular, tau_switched


def limits(spec, q):
    if isinstance(spec, SwitchedBernoulli):
        a, b = tau_switched(q, "lower", spec), tau_switched(q, "upper", spec)
        return min(a, b), max(a, b)
    lo, hi = beta_bounds_nonregular(q, spec)
    return float(lo), float(hi)


def scan(spec, q_values, max_depth, writer):
    flips = [d for d in spec.flip_depths(max_depth + 1) if d >= 4]
    cum = regime_count_table(spec, max_depth)
    for q in q_values:
        est = moment_scaling(spec, q, range(1, max_depth + 1))
        lo, hi = limits(spec, q)
        for d in flips:
            r = est.series.ratio_at(d)
            err = min(abs(r - lo), abs(r - hi))
            writer.writerow([spec.family, repr(q), d, repr(float(cum[d] / d)), repr(float(r)), repr(float(err))])


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description="phase-flip convergence table")
    ap.add_argument("--q", type=float, nargs="+", default=[-1.0, 0.5, 2.0])
    ap.add_argument("--factorial-depth", type=int, default=362879)
    ap.add_argument("--doubling-depth", type=int, default=24575)
    args = ap.parse_args()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["family", "q", "flip_depth", "regime0_share", "ratio", "distance_to_nearest_limit"])
    scan(SwitchedBernoulli(), args.q, args.factorial_depth, w)
    scan(NonRegularMoran(), args.q, args.doubling_depth, w)
