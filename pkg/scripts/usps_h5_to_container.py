#!/usr/bin/env python3
"""Convert the common usps.h5 distribution into this repo's flat container.

usps.h5 layout: groups "train" and "test", each with datasets "data"
(N x 256 floats) and "target" (N labels). Train and test are concatenated
(9298 samples total) and written with float32 pixels plus a uint8 label
trailer; values are min-max rescaled into [0, 1] on load if needed.

Usage: usps_h5_to_container.py USPS_H5 OUT_FILE
"""

import sys

import h5py
import numpy as np

from dyncluster.data import Dataset, save_usps


def main(src, dst):
    with h5py.File(src, "r") as f:
        parts_x, parts_y = [], []
        for split in ("train", "test"):
            parts_x.append(np.asarray(f[split]["data"], dtype=np.float64))
            parts_y.append(np.asarray(f[split]["target"], dtype=np.int64))
    x = np.concatenate(parts_x)
    y = np.concatenate(parts_y)
    lo, hi = x.min(), x.max()
    if lo < 0.0 or hi > 1.0:
        x = (x - lo) / (hi - lo)
    side = int(round(np.sqrt(x.shape[1])))
    ds = Dataset(x, y, (side, side), "usps")
    save_usps(dst, ds)
    print(f"{dst}: {ds.n} samples, {ds.d} features")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        raise SystemExit(__doc__)
    main(sys.argv[1], sys.argv[2])
