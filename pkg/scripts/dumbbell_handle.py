"""Where D^c sits on dumbbells of decreasing handle width.

Lobe containment of D^c is only guaranteed for thin enough handles; this
prints, per handle half-width, how far D^c reaches into the handle."""

import argparse

import numpy as np

from composite_membrane.analysis import lobe_containment
from composite_membrane.geometry import DomainSpec, measure, rasterize
from composite_membrane.optimizer import multistart


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--widths", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.03])
    p.add_argument("--h", type=float, default=1 / 64)
    p.add_argument("--alpha", type=float, default=5.0)
    p.add_argument("--fraction", type=float, default=0.55)
    p.add_argument("--restarts", type=int, default=8)
    args = p.parse_args()

    print("handle  Lambda        contained  stray  min|x| of D^c")
    for w in args.widths:
        d = rasterize(DomainSpec.dumbbell(w), args.h)
        res = multistart(d, args.alpha, args.fraction * measure(d), n_restarts=args.restarts)
        rep = lobe_containment(res, d)
        Dc = ~res.config.mask(d.n_cells)
        reach = np.abs(d.centers[Dc, 0]).min()
        print(f"{w:6.3f}  {res.Lambda:.8f}  {str(rep.contained):9s}  {rep.stray:5d}  {reach:.5f}")


if __name__ == "__main__":
    main()
