"""Typical projections and eigenvalue cuts on GHZ copies, with every check flag."""

from oneshot_qsw.instances import ghz_rmn
from oneshot_qsw.surgery import smoothed_state_pipeline, verify_surgery

for n in (1, 2, 3):
    _, rep = smoothed_state_pipeline(ghz_rmn(), n, 0.3)
    flags = verify_surgery(rep)
    print(f"n={n} passed={flags['passed']} total distance={rep.distances.get('total', float('nan')):.4f}")
    for key in ("RM", "RN", "RMN"):
        print(f"   D_max {key}: {rep.dmax[key]:.4f} <= {rep.bounds[key]:.4f}")
