"""Regenerate the committed MAT fixtures with an independent writer (scipy).

Run from the repo root:  python tests/fixtures/make_golden.py
The outputs are committed; tests read the frozen bytes, not this script.
"""

from pathlib import Path

import numpy as np
from scipy.io import savemat

HERE = Path(__file__).parent


def main() -> None:
    golden = {"A": np.array([[1.0, 2.0], [3.0, 4.0]])}
    savemat(HERE / "golden_2x2.mat", golden, do_compression=False)
    savemat(HERE / "golden_2x2_compressed.mat", golden, do_compression=True)

    channels = {
        "X097_DE_time": np.linspace(-1.0, 1.0, 600).reshape(-1, 1),
        "X097_FE_time": np.linspace(-2.0, 2.0, 600).reshape(-1, 1),
    }
    savemat(HERE / "golden_channels.mat", channels, do_compression=False)
    print("wrote", sorted(p.name for p in HERE.glob("*.mat")))


if __name__ == "__main__":
    main()
