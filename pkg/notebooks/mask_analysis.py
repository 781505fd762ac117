"""How hard is guessing a party's mask?

Tabulates the chance that a uniformly random mask agrees with the true one on
at least a fraction t of n coordinates, exact and normal approximation, and
the expected number of brute-force guesses before one such hit.

    python3 notebooks/mask_analysis.py
"""

from ars import metrics

ns = (16, 64, 128, 256, 1024)
ts = (0.6, 0.75, 0.9)

print(f"{'n':>6} {'t':>5} {'exact':>12} {'normal':>12} {'guesses':>12}")
for n in ns:
    for t in ts:
        p = metrics.overlap_probability(n, t, "exact")
        q = metrics.overlap_probability(n, t, "normal_approx")
        print(f"{n:6d} {t:5.2f} {p:12.4e} {q:12.4e} {1 / p if p else float('inf'):12.4e}")

# far in the tail the normal approximation is off by orders of magnitude
# (too optimistic for the attacker); it is only a rough guide near t = 0.5
