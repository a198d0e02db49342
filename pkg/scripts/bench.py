"""Timing of cache build, search and fit; thin wrapper over ``abnmle bench``.

    python3 scripts/bench.py --replicates 50 --k 10 --n 10000
"""

import sys

from abnmle.cli import main

if __name__ == "__main__":
    sys.exit(main(["bench", *sys.argv[1:]]))
