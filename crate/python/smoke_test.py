"""Smoke test for the pymeanfield extension module.

Build and stage the module first:

    cargo build --release -p meanfield-py
    cp target/release/libpymeanfield.so python/pymeanfield.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pymeanfield as mf  # noqa: E402


def check(cond, message):
    if not cond:
        raise AssertionError(message)
    print(f"ok  {message}")


def main():
    game = mf.Game.hypot()
    dist = mf.Distribution.gaussian(0.0, 4.0)

    br = game.best_response(1.0, 2.0)
    check(abs(br - (math.hypot(1.0, 2.0) - 1.0)) < 1e-15, "closed-form best response")
    check(game.best_response(0.0, 0.0) == 0.5, "best response clamps to the action interval")

    ne = mf.solve_ne(game, [1.0, 2.0, 3.0])
    oracle = mf.brute_force_ne(game, [1.0, 2.0, 3.0], 2001)
    step = (20.0 - 0.5) / 2000
    check(ne["converged"], "Nash iteration converges")
    check(max(abs(a - b) for a, b in zip(ne["actions"], oracle)) <= 2 * step, "Nash equilibrium matches grid oracle")

    z = mf.solve_aem(game, "quadrature", dist=dist)["z_star"]
    check(abs(z - 1.186724282064194) < 1e-8, f"quadrature AEM z* = {z:.10f}")

    lo, hi = dist.support()
    q = mf.Quantizer.uniform(lo, hi, 1024)
    zq = mf.solve_aem(game, "quantized-dist", dist=dist, quantizer=q)["z_star"]
    check(abs(zq - z) < 1e-4, "quantized-law AEM agrees")

    params = dist.sample(20_000, 7)
    check(params[:100] == dist.sample(100, 7), "samples are prefix-nested")
    ze = mf.solve_aem(game, "empirical", params=params)["z_star"]
    check(abs(ze - z) < 5e-2, "empirical AEM agrees")

    q8 = mf.Quantizer.uniform(lo, hi, 8)
    zt = mf.solve_aem(game, "quantized-alpha", params=params, quantizer=q8)["z_star"]
    l, l_z = mf.estimate_lipschitz(game, params=params)
    b4 = mf.prop4_bound(l, l_z, q8, params)
    check(abs(zt - ze) <= b4["value"], "quantized-parameter gap within its bound")

    check(mf.communication_cost(16, 1024) == (4.0, 224.0, 1024), "communication cost")
    b3 = mf.prop3_explicit_bound(0.5, 20.0, 0.9, 100)["value"]
    check(abs(b3 - 400 * (0.9 / 99 + 0.01)) < 1e-12, "uniform finite-n bound")

    q4 = mf.Quantizer.uniform(-4.0, 4.0, 4)
    check(q4.boundaries == [-4.0, -2.0, 0.0, 2.0, 4.0], "quantizer boundaries")
    check(q4.representatives == [-3.0, -1.0, 1.0, 3.0], "quantizer representatives")
    hist = q4.histogram([-3.5, 0.5, 0.7, 3.9])
    check(hist["counts"] == [1, 0, 2, 1], "histogram counts")

    rows = mf.run_sweep(game, dist, [10, 100], 0)
    check([r["n"] for r in rows] == [10, 100], "sweep rows")
    check(all(r["err_uniform"] <= r["prop3_bound"] for r in rows), "sweep rows respect the uniform bound")

    try:
        mf.solve_aem(game, "simpson", dist=dist)
    except ValueError:
        check(True, "unknown method raises ValueError")
    else:
        raise AssertionError("unknown method accepted")

    print("all smoke checks passed")


if __name__ == "__main__":
    main()
