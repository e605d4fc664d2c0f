"""Write a corpus of advecting-blob radar stacks for pipeline experiments.

Each stack is one synthetic rain event: Gaussian blobs translating at a
constant velocity, quantized and stored like any observed archive.  Start
times are staggered so the corpus spans many calendar weeks, which the
paired comparison machinery needs downstream.

Typical use:

    python3 scripts/make_synthetic_corpus.py --output corpus/ --sequences 48
"""

from __future__ import annotations

import argparse
from pathlib import Path

from nowcastverify.baselines import synthetic_corpus
from nowcastverify.io import write_radar_stack


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Generate synthetic radar stacks for pipeline demos")
    parser.add_argument("--output", required=True, help="directory for .rgf stacks")
    parser.add_argument("--sequences", type=int, default=48)
    parser.add_argument("--frames", type=int, default=12)
    parser.add_argument("--height", type=int, default=48)
    parser.add_argument("--width", type=int, default=48)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--velocity", default="1,2",
                        help="cells per frame as dy,dx")
    parser.add_argument("--intensity", type=float, default=20.0)
    parser.add_argument("--blobs", type=int, default=3,
                        help="rain cells per sequence")
    parser.add_argument("--interval", type=int, default=300,
                        help="frame spacing in seconds")
    parser.add_argument("--start-spacing", dest="start_spacing", type=int,
                        default=4 * 86400 + 3600,
                        help="seconds between sequence start times")
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    dy, dx = (int(v) for v in args.velocity.split(","))
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    sequences = synthetic_corpus(
        args.sequences, args.frames, args.height, args.width, seed=args.seed,
        start_spacing=args.start_spacing, velocity=(dy, dx),
        intensity=args.intensity, interval=args.interval,
        n_blobs=args.blobs)
    for index, seq in enumerate(sequences):
        write_radar_stack(out_dir / f"stack{index:03d}.rgf", seq)
    weeks = {t for seq in sequences
             for t in [int(seq.timestamps[0]) // (7 * 86400)]}
    print(f"wrote {len(sequences)} stacks to {out_dir}")
    print(f"grid {args.height}x{args.width}, {args.frames} frames at "
          f"{args.interval}s, roughly {len(weeks)} distinct weeks")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
