"""High-precision power-series oracle for E_{a,b}(z).

Sums z^n / Gamma(a n + b) at 150 significant digits until the terms drop
below 1e-60 of the running sum (at least 200 terms), which resolves the
cancellation that defeats double precision on the negative axis. Prints
Rust array rows `(a, b, z, value)` for the frozen test table.
"""
import mpmath as mp

mp.mp.dps = 150


def ml_series(a, b, z):
    a, b, z = mp.mpf(a), mp.mpf(b), mp.mpf(z)
    total = mp.mpf(0)
    n = 0
    while True:
        term = z**n / mp.gamma(a * n + b)
        total += term
        if n >= 200 and abs(term) < mp.mpf(10) ** -60 * max(abs(total), mp.mpf(10) ** -30):
            return total
        n += 1


if __name__ == "__main__":
    zs = [-4.0, -3.5, -3.0, -2.5, -2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0]
    for a in (0.3, 0.5, 0.8):
        for b in (a, 1.0):
            for z in zs:
                v = ml_series(a, b, z)
                print(f"    ({a!r}, {b!r}, {z!r}, {mp.nstr(v, 20)}),")
