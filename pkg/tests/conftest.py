"""Shared fixtures: small hand-built networks and random-net helpers."""

import numpy as np
import pytest

from varis.model import BayesianNetwork, Cpt, GeneratorConfig, Variable, \
    generate_random_network


def binary(name):
    return Variable(name, ("0", "1"))


def chain_net():
    """A -> B with P(A=1)=0.3, P(B=1|A=0)=0.2, P(B=1|A=1)=0.9."""
    return BayesianNetwork(
        [binary("A"), binary("B")],
        [Cpt("A", (), np.array([[0.7, 0.3]])),
         Cpt("B", ("A",), np.array([[0.8, 0.2], [0.1, 0.9]]))])


def or_gate_net():
    """A, B uniform roots; D = A OR B.  With D=0 the posterior is a point mass."""
    table = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
    return BayesianNetwork(
        [binary("A"), binary("B"), binary("D")],
        [Cpt("A", (), np.array([[0.5, 0.5]])),
         Cpt("B", (), np.array([[0.5, 0.5]])),
         Cpt("D", ("A", "B"), table)])


def and_gate_net():
    """A, B uniform roots; D = A AND B.  With D=0 the posterior is uniform on 3."""
    table = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return BayesianNetwork(
        [binary("A"), binary("B"), binary("D")],
        [Cpt("A", (), np.array([[0.5, 0.5]])),
         Cpt("B", (), np.array([[0.5, 0.5]])),
         Cpt("D", ("A", "B"), table)])


def soft_chain_net():
    """A -> B -> C with strictly positive tables (full support)."""
    return BayesianNetwork(
        [binary("A"), binary("B"), binary("C")],
        [Cpt("A", (), np.array([[0.6, 0.4]])),
         Cpt("B", ("A",), np.array([[0.7, 0.3], [0.2, 0.8]])),
         Cpt("C", ("B",), np.array([[0.9, 0.1], [0.4, 0.6]]))])


def random_net(seed, nodes=8, max_parents=2, states=2, det=0.0, evidence=1):
    cfg = GeneratorConfig(nodes=nodes, max_parents=max_parents, states=states,
                          det_fraction=det, evidence_leaves=evidence)
    return generate_random_network(cfg, seed)


@pytest.fixture
def chain():
    return chain_net()


@pytest.fixture
def or_gate():
    return or_gate_net()


@pytest.fixture
def and_gate():
    return and_gate_net()


@pytest.fixture
def soft_chain():
    return soft_chain_net()
