#!/usr/bin/env python3
"""Side-by-side efficiency comparison of the built-in fusion architectures.

Prints parameters, FLOPs at a fixed input size, serialized model bytes and
(optionally) measured latency for every built-in variant, mirroring the
kind of table used to pick the grouped-conv design.
"""

import argparse

from evofuse.bench import BenchProtocol, profile_arch, time_method
from evofuse.net.arch import BUILTIN_NAMES


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=400, help="input side length")
    parser.add_argument("--trials", type=int, default=5, help="timing trials (0 skips timing)")
    parser.add_argument("--specs", default=",".join(BUILTIN_NAMES))
    args = parser.parse_args()

    names = args.specs.split(",")
    rows = []
    for name in names:
        report = profile_arch(name, args.size, args.size)
        latency = ""
        if args.trials >= 2:
            protocol = BenchProtocol(image_size=args.size, trials=args.trials, warmup_skip=1)
            timed = time_method(name, protocol)
            latency = f"{timed.latency_ms_mean:9.1f} +- {timed.latency_ms_std:6.1f}"
        rows.append((name, report.params, report.flops, report.bytes, latency))

    header = f"{'spec':15s} {'params':>9s} {'flops':>14s} {'bytes':>9s}"
    if args.trials >= 2:
        header += f"  {'latency ms':>20s}"
    print(header)
    print("-" * len(header))
    for name, params, flops, size, latency in rows:
        line = f"{name:15s} {params:9d} {flops:14d} {size:9d}"
        if latency:
            line += f"  {latency:>20s}"
        print(line)
    print(f"\ninput {args.size}x{args.size}, FLOP convention: 1 MAC = 2 FLOPs")
    print("bytes = serialized weight file incl. BN running statistics")


if __name__ == "__main__":
    main()
