"""Standalone IDM reference used to freeze expected values in test_traffic_sim.cpp."""
import math

A, B, S0, T, DELTA = 1.5, 2.0, 2.0, 1.5, 4.0


def idm(gap, v, v_lead, v0):
    free = 1.0 - (v / v0) ** DELTA
    if math.isinf(gap):
        acc = A * free
    else:
        s_star = S0 + max(0.0, v * T + v * (v - v_lead) / (2.0 * math.sqrt(A * B)))
        acc = A * (free - (s_star / gap) ** 2)
    return min(1.5, max(-6.0, acc))


if __name__ == "__main__":
    for case in [(10, 25, 15, 25), (40, 20, 18, 25), (60, 22, 24, 26), (25, 10, 10, 20)]:
        print(case, repr(idm(*case)))
