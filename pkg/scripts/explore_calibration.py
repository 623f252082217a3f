"""Scan the kernel parameter surface against the packaged calibration targets.

Prints the best (distance_scale, level_damping) under three conventions for
the biosecurity distribution active during calibration trials (mixed / low /
high), then refines the winner.  Used to choose the packaged default kernel.

Usage: python3 scripts/explore_calibration.py [--trials 4000]
"""

import argparse
import time

import numpy as np

from fieldlab.engine import N_FACILITIES, MONTHS_PER_ROUND, BioDistribution, TransmissionKernel
from fieldlab.metrics import DEFAULT_CALIBRATION_TARGETS, _SearchBank


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()

    rates = sorted({r for r, _ in DEFAULT_CALIBRATION_TARGETS})
    targets = {r: np.array([DEFAULT_CALIBRATION_TARGETS[(r, l)] for l in range(4)]) for r in rates}

    banks = {
        (rate, dist): _SearchBank(args.seed, rate, dist, args.trials // 2, N_FACILITIES, MONTHS_PER_ROUND)
        for rate in rates
        for dist in BioDistribution
    }

    conventions = {
        "mixed": list(BioDistribution),
        "low_only": [BioDistribution.LOW],
        "high_only": [BioDistribution.HIGH],
    }

    def objective(lam, beta, dists):
        kern = TransmissionKernel(lam, beta)
        worst, cells = 0.0, {}
        for rate in rates:
            frac = np.zeros(4)
            for dist in dists:
                frac += banks[(rate, dist)].infection_fractions(kern)
            frac /= len(dists)
            cells[rate] = frac
            worst = max(worst, float(np.abs(frac - targets[rate]).max()))
        return worst, cells

    lams = np.geomspace(0.03, 0.45, 14)
    betas = np.linspace(0.2, 0.85, 14)

    for name, dists in conventions.items():
        t0 = time.time()
        best = (np.inf, None, None)
        for lam in lams:
            for beta in betas:
                err, _ = objective(lam, beta, dists)
                if err < best[0]:
                    best = (err, lam, beta)
        err, lam, beta = best
        print(f"--- convention={name}: grid best err={err:.4f} at lam={lam:.4f} beta={beta:.3f} "
              f"({time.time()-t0:.1f}s)")
        # refine
        log_lam, b = np.log(lam), beta
        step_l, step_b = np.log(lams[1] / lams[0]), betas[1] - betas[0]
        best_err = err
        for _ in range(8):
            moved = False
            for dl, db in ((step_l, 0), (-step_l, 0), (0, step_b), (0, -step_b)):
                cand_b = b + db
                if not 0.02 < cand_b < 0.98:
                    continue
                e, _ = objective(np.exp(log_lam + dl), cand_b, dists)
                if e < best_err:
                    best_err, log_lam, b = e, log_lam + dl, cand_b
                    moved = True
            if not moved:
                step_l *= 0.5
                step_b *= 0.5
        err, cells = objective(np.exp(log_lam), b, dists)
        print(f"    refined err={err:.4f} at lam={np.exp(log_lam):.5f} beta={b:.4f}")
        for rate in rates:
            tgt = targets[rate]
            est = cells[rate]
            print(f"    rate={rate}: est={np.round(est, 4)} target={tgt} diff={np.round(est - tgt, 4)}")


if __name__ == "__main__":
    main()
