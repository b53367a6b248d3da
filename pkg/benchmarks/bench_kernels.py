"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--quick] [--json]
"""

import argparse
import json

from pspinamp import _kernels
from pspinamp.bench import format_rows, run_benchmark


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--quick", action="store_true")
    p.add_argument("--json", action="store_true")
    args = p.parse_args()
    rows = run_benchmark(repeat=args.repeat, quick=args.quick)
    if args.json:
        print(json.dumps(dict(active_backend=_kernels.BACKEND, rows=rows), indent=2))
    else:
        print(f"active backend: {_kernels.BACKEND}")
        print(format_rows(rows))


if __name__ == "__main__":
    main()
