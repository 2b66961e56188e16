import math

import numpy as np
import pytest

from lobspde import lob_model as lm

# Published per-day parameter rows (depth level, rate, volatility, correlation).
INTC_ROW = dict(dbar_b=5179.0, dbar_a=5641.7, nu_b=0.151, nu_a=0.156,
                sigma_b=0.133, sigma_a=0.134, rho=-0.077)
QQQ_ROW = dict(dbar_b=4686.9, dbar_a=5489.2, nu_b=2.467, nu_a=1.972,
               sigma_b=0.724, sigma_a=0.639, rho=-0.177)


def row_params(row, *, theta=0.01, c_s=0.5, L=1.0, mean_reverting=False):
    """Model parameters from a published row; depth levels fix the source intensities."""
    k = math.pi / (2 * L) * theta ** 2
    extra = {}
    if mean_reverting:
        extra = dict(vbar_b=row["nu_b"] * row["dbar_b"] / k, vbar_a=row["nu_a"] * row["dbar_a"] / k)
    return lm.ModelParams.from_rates(row["nu_b"], row["nu_a"], row["sigma_b"], row["sigma_a"],
                                     row["rho"], L=L, theta=theta, c_s=c_s, **extra)


@pytest.fixture
def intc():
    return row_params(INTC_ROW)


@pytest.fixture
def qqq():
    return row_params(QQQ_ROW)


@pytest.fixture
def rng():
    return np.random.default_rng(20161115)


# --- acceptance report -----------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
