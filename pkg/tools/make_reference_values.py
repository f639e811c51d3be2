"""Generate independent reference values for the test suite.

Every closed-form quantity in the library is checked in the tests against a
value computed here by a *different* numerical method:

* scale function  -> high-accuracy ODE integration (solve_ivp) of
  (sigma^2/2) W'' + mu W' - q W = 0,  W(0)=0,  W'(0)=2/sigma^2
* optimal single-regime barrier -> root of W'' located on the ODE solution
  (dense output + brentq), never touching the closed-form barrier formula
* quartic characteristic exponents of the two-regime system -> companion
  matrix eigenvalues (numpy.roots)

Run from the repository root:

    python3 tools/make_reference_values.py

and paste the printed constants into the tests.  The script is deliberately
slow and simple; it is not part of the installed package.
"""

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


def integrate_scale(mu, sigma, q, x_end, dense=False):
    """Integrate the scale-function ODE to x_end with very tight tolerances."""
    half_s2 = 0.5 * sigma * sigma

    def rhs(x, y):
        w, wp = y
        return [wp, (q * w - mu * wp) / half_s2]

    sol = solve_ivp(
        rhs,
        (0.0, x_end),
        [0.0, 2.0 / (sigma * sigma)],
        method="DOP853",
        rtol=1e-12,
        atol=1e-14,
        dense_output=dense,
    )
    assert sol.success, sol.message
    return sol


def scale_at(mu, sigma, q, x):
    sol = integrate_scale(mu, sigma, q, x)
    w, wp = sol.y[0, -1], sol.y[1, -1]
    wpp = (q * w - mu * wp) / (0.5 * sigma * sigma)
    return w, wp, wpp


def barrier_from_ode(mu, sigma, r, x_hi=4.0):
    """Locate the zero of W'' on the ODE solution (no closed forms used)."""
    sol = integrate_scale(mu, sigma, r, x_hi, dense=True)
    half_s2 = 0.5 * sigma * sigma

    def wpp(x):
        w, wp = sol.sol(x)
        return (r * w - mu * wp) / half_s2

    # W''(0) = -2 mu / (half_s2 * sigma^2) < 0 for mu > 0 and W'' -> +inf.
    grid = np.linspace(1e-6, x_hi, 4001)
    vals = np.array([wpp(x) for x in grid])
    sign_change = np.nonzero(np.diff(np.sign(vals)) > 0)[0]
    assert len(sign_change) == 1, "expected exactly one upcrossing of W''"
    k = sign_change[0]
    return brentq(wpp, grid[k], grid[k + 1], xtol=1e-13, rtol=1e-15)


def quartic_coeffs(mu0, s0, q00, r0, mu1, s1, q11, r1):
    """Coefficients (descending) of F0(lam)*F1(lam) - q00*q11."""
    a0, b0, c0 = 0.5 * s0 * s0, mu0, q00 - r0
    a1, b1, c1 = 0.5 * s1 * s1, mu1, q11 - r1
    return [
        a0 * a1,
        a0 * b1 + a1 * b0,
        a0 * c1 + a1 * c0 + b0 * b1,
        b0 * c1 + b1 * c0,
        c0 * c1 - q00 * q11,
    ]


def main():
    print("# scale function, ODE oracle (DOP853, rtol=1e-12, atol=1e-14)")
    w, wp, wpp = scale_at(0.06, 0.24, 2.04, 0.5)
    print(f"W (0.06, 0.24, 2.04; x=0.5)  = {w!r}")
    print(f"W' (same)                    = {wp!r}")
    print(f"W''(same, via ODE relation)  = {wpp!r}")

    print()
    print("# single-regime barrier, root of W'' on the ODE solution")
    a0 = barrier_from_ode(0.06, 0.24, 0.04)
    a1 = barrier_from_ode(0.08, 0.30, 0.05)
    print(f"a*(0.06, 0.24, 0.04) = {a0!r}")
    print(f"a*(0.08, 0.30, 0.05) = {a1!r}")
    # effective-rate variants used by the operator tests
    a0t = barrier_from_ode(0.06, 0.24, 2.04, x_hi=1.0)
    a1t = barrier_from_ode(0.08, 0.30, 3.05, x_hi=1.0)
    print(f"a*(0.06, 0.24, 2.04) = {a0t!r}")
    print(f"a*(0.08, 0.30, 3.05) = {a1t!r}")

    print()
    print("# quartic exponents, companion-matrix oracle (numpy.roots)")
    for label, params in [
        ("all-positive base", (0.06, 0.24, -2.0, 0.04, 0.08, 0.30, -3.0, 0.05)),
        ("mixed-sign example", (-0.08, 0.40, -10.0, 0.06, 0.14, 0.50, -0.001, 0.08)),
    ]:
        coeffs = quartic_coeffs(*params)
        roots = np.sort_complex(np.roots(coeffs)).real
        imag = np.max(np.abs(np.imag(np.roots(coeffs))))
        print(f"{label}: coeffs={coeffs}")
        print(f"{label}: roots={[repr(r) for r in roots]} (max |imag| = {imag:.2e})")


if __name__ == "__main__":
    main()
