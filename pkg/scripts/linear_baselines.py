"""PCA, FMS and spherical FMS on a planted subspace with Gaussian outliers.

Prints the largest principal angle to the planted subspace for each method as
the outlier fraction grows. Runs in a few seconds.

    python scripts/linear_baselines.py --D 10 --d 2 --seeds 5
"""

import argparse

import numpy as np

from rsrae.linear import fms, pca_subspace, principal_angle, random_subspace, sfms


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--D", type=int, default=10)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--inliers", type=int, default=70)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--outlier-scale", type=float, default=1.0)
    args = p.parse_args()

    print(f"{'outliers':>8} {'pca':>10} {'fms':>10} {'sfms':>10}   (median angle, radians)")
    for n_out in (0, 10, 30, 70, 140):
        angles = {"pca": [], "fms": [], "sfms": []}
        for seed in range(args.seeds):
            rng = np.random.default_rng(seed)
            S = random_subspace(args.D, args.d, rng)
            Y = np.vstack([
                rng.standard_normal((args.inliers, args.d)) @ S.U.T,
                args.outlier_scale * rng.standard_normal((n_out, args.D)),
            ])
            angles["pca"].append(principal_angle(pca_subspace(Y, args.d), S))
            angles["fms"].append(principal_angle(fms(Y, args.d).subspace, S))
            angles["sfms"].append(principal_angle(sfms(Y, args.d, center=False).subspace, S))
        row = " ".join(f"{np.median(v):10.2e}" for v in angles.values())
        print(f"{n_out:>8} {row}")


if __name__ == "__main__":
    main()
