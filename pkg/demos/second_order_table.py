"""Exact i.i.d. hypothesis-testing divergence against its second-order estimate."""

import math

from oneshot_qsw.surgery import second_order_table

P, Q = [0.5, 0.5], [0.9, 0.1]
for eps in (0.25, 0.5):
    print(f"eps = {eps}")
    print(" n    exact   estimate   gap/sqrt(n)")
    for n, exact, est, gap in second_order_table(P, Q, eps, range(4, 21, 2)):
        print(f"{n:2d} {exact:8.4f} {est:10.4f} {gap / math.sqrt(n):10.4f}")
