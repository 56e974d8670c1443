"""Dense simulation of both protocol directions on a near-product qubit instance."""

import math

from oneshot_qsw.instances import protocol_state
from oneshot_qsw.protocol import ProtocolInstance, plan_rates, run_task1, run_task2, verify_end_to_end

RATES = {"R_A": 1, "R_B": 1, "r_A": 0, "r_B": 0}

for seed in range(3):
    inst = ProtocolInstance(protocol_state(seed, "near_product", t=0.05), eps1=0.05, eps2=0.1, delta=0.05)
    planned = plan_rates(inst)
    cert = plan_rates(inst, override=RATES)
    t2 = run_task2(inst, cert, keep_states=True)
    t1 = run_task1(inst, cert, theta_prime=(t2.states["theta_prime_1"], t2.states["theta_prime_2"]))
    ver = verify_end_to_end(inst, cert, t2)
    print(f"seed {seed}: planned R_A={planned.R_A} R_B={planned.R_B}; "
          f"at micro rates P={t2.P_final:.4f} (task 1 {t1.P_final:.4f}), "
          f"bound {ver['total_bound']:.3g}, sqrt(delta_eff)={math.sqrt(cert.delta_eff):.3g}")
