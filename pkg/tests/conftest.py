import json
import os

import numpy as np
import pytest

from tvgm.kernels import ClosedFormFn, GneitModel, LogPolyFn, SepModel, TvarModel

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture(scope="session")
def oracle():
    with open(os.path.join(DATA_DIR, "special_oracle.json")) as fh:
        return json.load(fh)


def grid(nx, ny, nt, t_max=1.0):
    gx, gy = np.linspace(0, 1, nx), np.linspace(0, 1, ny)
    X, Y = np.meshgrid(gx, gy)
    locs = np.column_stack([X.ravel(), Y.ravel()])
    return np.array([[*l, t] for t in np.linspace(0, t_max, nt) for l in locs])


def tvar_case(case, times):
    m = TvarModel(1.0, 10.0, 0.6, 0.8, 0.1, ClosedFormFn(f"case{case}_alpha"),
                  ClosedFormFn(f"case{case}_nu"), 1.0)
    return m.with_training_times(times)


def tvar_poly(times, alpha=(np.log(5.0), 0.4), nu=(np.log(1.2), -0.3), **kw):
    args = dict(sigma=1.3, a=2.0, gamma=0.6, beta=0.7, delta=0.2)
    args.update(kw)
    m = TvarModel(alpha_fn=LogPolyFn(alpha), nu_fn=LogPolyFn(nu), alpha_bar=1.0, **args)
    return m.with_training_times(times)


def gneit(**kw):
    args = dict(sigma=1.3, a=2.0, gamma=0.6, beta=0.7, delta=0.2, alpha=5.0, nu=1.2)
    args.update(kw)
    return GneitModel(**args)


def sep(**kw):
    args = dict(sigma=1.3, a=2.0, gamma=0.6, delta=0.2, alpha=5.0, nu=1.2)
    args.update(kw)
    return SepModel(**args)


ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def record_criterion():
    """Print and keep one PASS/FAIL line per acceptance criterion."""
    def record(key, ok, detail):
        line = f"criterion {key}: {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES[key] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.rstrip("abcd")), k)):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
