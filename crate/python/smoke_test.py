"""Smoke test for the closeeval Python extension.

Builds the extension with cargo if needed, imports it from a temporary
directory and checks a few known values.

    python3 python/smoke_test.py [path/to/libcloseeval.so]
"""

import importlib
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def find_library(explicit):
    if explicit:
        return Path(explicit)
    for profile in ("release", "debug"):
        for name in ("libcloseeval.so", "libcloseeval.dylib"):
            path = ROOT / "target" / profile / name
            if path.exists():
                return path
    subprocess.run(
        ["cargo", "build", "--release", "-p", "closeeval-py"], cwd=ROOT, check=True
    )
    return ROOT / "target" / "release" / "libcloseeval.so"


def load(library):
    tmp = Path(tempfile.mkdtemp())
    shutil.copy(library, tmp / "closeeval.so")
    sys.path.insert(0, str(tmp))
    return importlib.import_module("closeeval")


def check(label, ok):
    print(f"{'ok' if ok else 'FAILED'}  {label}")
    return ok


def main():
    ce = load(find_library(sys.argv[1] if len(sys.argv) > 1 else None))
    results = []

    kite = ce.Curve2D.kite()
    x0, y0 = kite.position(0.0)
    results.append(check("kite at t=0", abs(x0 - 1.0) < 1e-15 and abs(y0) < 1e-15))
    density = ce.solve_log_source(kite, (1.85, 1.65), 128)
    k = 16
    eps = 1e-4
    x, y = density.point(k, eps)
    exact = density.exact(x, y)
    errors = {m: abs(density.evaluate(m, k, eps) - exact) for m in ("ptr", "sub", "asym2", "asym3")}
    results.append(check("ptr fails close to the boundary", errors["ptr"] > 1e-2))
    results.append(check("asym3 near machine precision", errors["asym3"] < 1e-12))

    epsilons = [10.0 ** (-p / 2) for p in range(4, 13)]
    sub = [abs(density.evaluate("sub", k, e) - density.exact(*density.point(k, e))) for e in epsilons]
    slope, _, _, n = ce.fit_order(epsilons, sub)
    results.append(check(f"subtraction slope {slope:.3f}", abs(slope - 1.0) < 0.25 and n >= 4))

    sphere = ce.solve_density3d("sphere", 4, harmonics=[(2, 0, 1.0, 0.0)], quadrature_n=16)
    num, asym, exact = sphere.close_eval(1.0, 0.4, 0.3, n=24)
    results.append(check("sphere far-field", abs(num - exact) < 1e-6))

    l = ce.apply_l_direct([(2, 0, 1.0, 0.0)], 0.0, 0.0, 0.5)
    y20_pole = math.sqrt(5.0 / (4.0 * math.pi))
    results.append(check("HG eigenvalue", abs(l - (0.25 - 1.0) * y20_pole) < 1e-8))
    results.append(check("HG normalisation at g=0", ce.p_hg(0.3, 0.0) == 1.0))

    rows, fits = ce.run_study('{"problem": "hg", "harmonics": [[3, 1, 1.0, 0.0]]}')
    results.append(check("hg study slope", len(fits) == 1 and abs(fits[0]["slope"] - 3.0) < 0.3))

    try:
        ce.run_study('{"problem": "2d-kite", "methods": []}')
        results.append(check("config error raises ValueError", False))
    except ValueError:
        results.append(check("config error raises ValueError", True))

    if not all(results):
        sys.exit(1)
    print("all checks passed")


if __name__ == "__main__":
    main()
