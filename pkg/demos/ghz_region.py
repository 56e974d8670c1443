"""i.i.d. rate region of the GHZ state on R, M, N, written as CSV to stdout."""

import sys

from oneshot_qsw.instances import ghz_rmn
from oneshot_qsw.regions import export_region, iid_region

region = iid_region(ghz_rmn())
for label, c in region.c_values().items():
    print(f"# {label} >= {c:.6f}", file=sys.stderr)
sys.stdout.write(export_region(region, "csv").decode())
