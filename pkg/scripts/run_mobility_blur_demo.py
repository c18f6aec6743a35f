#!/usr/bin/env python3
"""Show the mobility-to-blur chain: velocity draws, blur levels, weights.

Samples per-round velocities for a handful of vehicles, maps them through
the camera constant to blur levels, and prints the aggregation weights the
blur-weighted rule would assign next to the plain average.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from flsimco.federation import flsimco_weights
from flsimco.imaging import CameraParams, blur_level
from flsimco.mobility import MobilityParams, sample_velocity


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--vehicles", type=int, default=5)
    parser.add_argument("--rounds", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--mu", type=float, default=29.17)
    args = parser.parse_args()

    mobility = MobilityParams(mu=args.mu)
    camera = CameraParams()
    rng = np.random.default_rng(args.seed)
    print(f"mobility: mu={mobility.mu} sigma={mobility.sigma} "
          f"window=[{mobility.v_min}, {mobility.v_max}] m/s")
    print(f"camera constant: {camera.constant:.3f} px per (m/s)\n")
    for r in range(args.rounds):
        velocities = [sample_velocity(rng, mobility) for _ in range(args.vehicles)]
        blurs = [blur_level(v, camera) for v in velocities]
        weights = flsimco_weights(blurs)
        print(f"round {r}:")
        for i, (v, blur, w) in enumerate(zip(velocities, blurs, weights)):
            kmh = v * 3.6
            print(f"  vehicle {i}: {v:6.2f} m/s ({kmh:5.1f} km/h)  "
                  f"blur {blur:5.2f} px  weight {w:.4f}  (uniform {1/args.vehicles:.4f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
