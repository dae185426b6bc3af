"""Are optimal sets nested in the area? Pairwise excess |D_A minus D_A'| for A < A'."""

import argparse

from composite_membrane.analysis import monotonicity_probe
from composite_membrane.geometry import DomainSpec, measure, rasterize

SHAPES = {"disk": DomainSpec.disk(1), "square": DomainSpec.rectangle(1, 1),
          "annulus": DomainSpec.annulus(2), "dumbbell": DomainSpec.dumbbell(0.2)}


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--shape", choices=sorted(SHAPES), default="square")
    p.add_argument("--h", type=float, default=1 / 32)
    p.add_argument("--alpha", type=float, default=10.0)
    p.add_argument("--fractions", type=float, nargs="+", default=[0.3, 0.5, 0.7])
    p.add_argument("--restarts", type=int, default=8)
    args = p.parse_args()

    d = rasterize(SHAPES[args.shape], args.h)
    area = measure(d)
    rep = monotonicity_probe(d, args.alpha, [f * area for f in args.fractions], n_restarts=args.restarts,
                             expect_nested=False)
    for f, r in zip(args.fractions, rep.results):
        print(f"fraction {f:.2f}: Lambda {r.Lambda:.8f}")
    for (i, j), ex in rep.excess.items():
        print(f"|D_{args.fractions[i]} minus D_{args.fractions[j]}| = {ex:.6f}")
    print("nested" if rep.nested else "not nested")


if __name__ == "__main__":
    main()
