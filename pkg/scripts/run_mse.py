"""Integrated MSE of the jackknifed curve on [0.1, 0.9] as n grows."""
import argparse

from nsquant.procsim import CoefFunction, LsLinearSpec, const, curve_mse


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="*", default=[250, 500, 1000, 2000])
    ap.add_argument("--alpha", type=float, default=0.9)
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--seed", type=int, default=808)
    args = ap.parse_args()

    spec = LsLinearSpec([const(1.0), CoefFunction("trig", (0.0, 0.5))])
    for k, n in enumerate(args.n):
        mse, se = curve_mse(spec, args.alpha, n, args.reps, seed=args.seed + k)
        print(f"n={n:5d}  mse {mse:.5f}  (se {se:.5f})")


if __name__ == "__main__":
    main()
