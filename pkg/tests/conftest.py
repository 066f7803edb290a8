import numpy as np
import pytest

from growfrag.dislocation import (
    BinaryConservative,
    DislocationModel,
    FiniteAtomic,
    MassPartition,
    TruncationLadder,
)

LADDER = TruncationLadder((0.0, 1.0, 2.0, 3.0))


@pytest.fixture(scope="session")
def binary():
    """Equal binary splits at unit rate; truncation above ln 2 is a no-op."""
    return DislocationModel(
        a=0.0, sigma=0.0, nu=FiniteAtomic(((1.0, MassPartition((0.5, 0.5))),)), ladder=LADDER
    )


@pytest.fixture(scope="session")
def binary_sigma():
    return DislocationModel(
        a=0.0, sigma=1.0, nu=FiniteAtomic(((1.0, MassPartition((0.5, 0.5))),)), ladder=LADDER
    )


@pytest.fixture(scope="session")
def multi():
    """Several atoms across truncation levels, with drift and a Gaussian part."""
    return DislocationModel(
        a=0.1,
        sigma=0.5,
        nu=FiniteAtomic(
            (
                (0.7, MassPartition((0.5, 0.3, 0.15, 0.05))),
                (0.5, MassPartition((0.6, 0.2))),
                (0.3, MassPartition((0.8,))),
            )
        ),
        ladder=LADDER,
    )


@pytest.fixture(scope="session")
def powerlaw():
    return DislocationModel(
        a=0.1, sigma=0.4, nu=BinaryConservative(beta=1.5, c=1.0), ladder=LADDER
    )


@pytest.fixture(scope="session")
def pure_levy():
    """No dislocations: a single Levy particle."""
    return DislocationModel(a=0.0, sigma=1.0, nu=FiniteAtomic(()), ladder=LADDER)


def rng(seed=0):
    return np.random.default_rng(seed)
