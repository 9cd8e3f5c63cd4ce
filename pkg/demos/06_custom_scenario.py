"""Register a scenario and check every backend against it.

The same file can be handed to the CLI:
    adkit check --scenario-module demos/06_custom_scenario.py --scenarios rosenbrock_gradient

Run: python demos/06_custom_scenario.py
"""

import numpy as np

import adkit.numpy as anp
from adkit.harness import check
from adkit.harness.scenarios import Scenario


def rosenbrock(x):
    return anp.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2)


def rosenbrock_grad(x, seed):
    g = np.zeros_like(x)
    g[:-1] = -400.0 * x[:-1] * (x[1:] - x[:-1] ** 2) - 2.0 * (1.0 - x[:-1])
    g[1:] += 200.0 * (x[1:] - x[:-1] ** 2)
    return g


SCENARIOS = [Scenario("rosenbrock_gradient", "gradient", rosenbrock, reference=rosenbrock_grad, default_size=6)]

if __name__ == "__main__":
    for backend in ["dual", "tape", "fd", "mixed"]:
        print(check(SCENARIOS[0], backend).line())
