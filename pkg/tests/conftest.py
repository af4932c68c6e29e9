import numpy as np
import pytest

from pwlcvx.bench import double_integrator_problem
from pwlcvx.discretization import DiscreteSystem
from pwlcvx.program import CostSpec, SolverSettings, TrajectoryProblem

# acceptance lines collected by test_acceptance.py, echoed in the summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def bench_problem():
    return double_integrator_problem()


@pytest.fixture(scope="session")
def settings():
    return SolverSettings()


@pytest.fixture(scope="session")
def bench_run(tmp_path_factory):
    from pwlcvx.bench import reproduce_benchmark

    out = tmp_path_factory.mktemp("bench")
    return out, reproduce_benchmark(out)


def scalar_chain(rho_eff=0.5, rho_max=10.0):
    """x' = u on [0, 1] with one edge, x(0)=0, x(1)=1, cost 0.5 s0^2 + 0.5 s1^2."""
    disc = DiscreteSystem(a=[[1.0]], b0=[[0.5]], b1=[[0.5]], dt=1.0, n_segments=1)
    cost = CostSpec(
        terminal_weight=0.0,
        terminal_target=[0.0],
        quadrature_weights=np.array([0.5, 0.5]),
        running_kind="quadratic",
    )
    return TrajectoryProblem(
        disc=disc,
        cost=cost,
        rho_min=rho_eff,
        rho_max=rho_max,
        x_init=[0.0],
        rho_eff=rho_eff,
        g_matrix=[[1.0]],
        g_offset=[-1.0],
    )
