#!/usr/bin/env python3
"""Write a small synthetic HDR panorama with a textured sky and two lights.

Useful as an upload sample for the editing UI and as a quick smoke input
for the CLI.
"""

import argparse
import math

import numpy as np

from envlight.geometry import EnvMap, pixel_center_directions
from envlight.hdrio import write_hdr
from envlight.sg import SgSet, make_light, render_sg_map


def build(height: int, seed: int) -> EnvMap:
    rng = np.random.default_rng(seed)
    dirs = pixel_center_directions(height, 2 * height)
    # soft sky gradient plus a little horizon tint for texture
    sky = 0.25 + 0.2 * np.clip(dirs[..., 1], 0.0, 1.0)
    ground = 0.12 + 0.05 * np.clip(-dirs[..., 1], 0.0, 1.0)
    base = np.stack([sky * 0.9 + ground, sky + ground * 0.8, sky * 1.1 + ground * 0.6], axis=2)
    base += rng.uniform(0.0, 0.02, size=base.shape)  # mild texture noise

    # peak radiance kept near 1 so fitting with default options converges,
    # and both lobes clear the bright-region percentile threshold
    lights = SgSet(
        (
            make_light(0, (1.2, 1.1, 0.9), (math.sin(0.4), 0.75, math.cos(0.4)), 0.30),
            make_light(1, (0.9, 1.0, 1.3), (-0.8, 0.3, -0.5), 0.45),
        )
    )
    light_map = render_sg_map(lights, height)
    return EnvMap(base + light_map.data)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="sample_pano.hdr")
    parser.add_argument("--height", type=int, default=128)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    env = build(args.height, args.seed)
    write_hdr(args.out, env)
    print(f"wrote {args.out} ({env.height}x{env.width})")


if __name__ == "__main__":
    main()
