#!/usr/bin/env python3
"""Sort throughput table across sizes and key distributions.

Times the full recorded dispatch sequence (pad + 4 passes) on the software
device, median of --iters runs, and prints milliseconds and Mkeys/s. The
absolute numbers only say how fast the software device simulates the
kernels on this host; the point of the table is relative movement across
distributions and sizes.
"""

import argparse
import pathlib
import sys
import time

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from splat.bench import median  # noqa: E402
from splat.cli import SORT_DISTRIBUTIONS, _sort_keys  # noqa: E402
from splat.device import create_device  # noqa: E402
from splat.gpu_sort import RadixSorter  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+",
                    default=[10_000, 100_000, 1_000_000])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--iters", type=int, default=3)
    args = ap.parse_args()

    device = create_device()
    print(f"adapter: {device.adapter_name}")
    header = f"{'n':>10}  " + "".join(f"{d:>18}" for d in SORT_DISTRIBUTIONS)
    print(header)
    for n in args.sizes:
        sorter = RadixSorter(device, capacity=n)
        pad = -(-n // 256) * 256 * 4
        keys_buf = device.create_buffer("prof.keys", pad)
        pay_buf = device.create_buffer("prof.pay", pad)
        cells = []
        for dist in SORT_DISTRIBUTIONS:
            keys = _sort_keys(dist, n, args.seed)
            payload = np.arange(n, dtype=np.uint32)
            times = []
            for _ in range(args.iters):
                keys_buf.write(keys)
                pay_buf.write(payload)
                t0 = time.perf_counter()
                sorter.sort(keys_buf, pay_buf, n)
                times.append((time.perf_counter() - t0) * 1000.0)
            ms = median(times)
            rate = n / ms / 1000.0 if ms > 0 else float("inf")
            cells.append(f"{ms:9.2f}ms {rate:5.1f}M")
        print(f"{n:>10}  " + "".join(f"{c:>18}" for c in cells))
        keys_buf.destroy()
        pay_buf.destroy()
        sorter.destroy()
    return 0


if __name__ == "__main__":
    sys.exit(main())
