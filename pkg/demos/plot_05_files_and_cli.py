"""
Exchanging data through files and the command line
==================================================

Snapshots produced elsewhere enter through binary matrix blobs plus a JSON
manifest. This script writes such a set, then drives the ``opinf-nse``
command line on it.
"""

import json
import tempfile
from pathlib import Path

from opinf_nse import TimeGrid, imex_euler_dae, random_demo, save_snapshots
from opinf_nse.cli import main
from opinf_nse.experiment import make_signal

with tempfile.TemporaryDirectory() as name:
    tmp = Path(name)
    model = random_demo(0, 4, 1, 1)
    snaps = imex_euler_dae(model, [0, 0, 0, 0], make_signal("sin-decay", 1), TimeGrid(0, 10, 500))
    save_snapshots(tmp / "data", snaps)
    print(json.loads((tmp / "data" / "snapshots.json").read_text())["blocks"])

    # Inspect, then learn a quadratic model of order 3.
    main(["ingest", "--snapshots", str(tmp / "data")])
    main(["infer", "--snapshots", str(tmp / "data"), "--order", "3", "--out", str(tmp / "rom")])
    print(sorted(p.name for p in (tmp / "rom").iterdir()))
