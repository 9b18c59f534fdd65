import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import bnmarket as bm


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def collider_net():
    """X1 -> X3 <- X2 with no X1-X2 edge: the three-variable market whose
    exact update is impossible. Only the (v1, v1) parent context of X3 is
    biased (1/4, 3/4); everything else is a fair coin."""
    doc = {
        "variables": [{"name": n, "domain": ["v1", "v2"]} for n in ("X1", "X2", "X3")],
        "edges": [["X1", "X3"], ["X2", "X3"]],
        "cpts": {
            "X3": [
                {"given": {"X1": "v1", "X2": "v1"}, "row": {"v1": 0.25, "v2": 0.75}},
                {"given": {"X1": "v1", "X2": "v2"}, "row": {"v1": 0.5, "v2": 0.5}},
                {"given": {"X1": "v2", "X2": "v1"}, "row": {"v1": 0.5, "v2": 0.5}},
                {"given": {"X1": "v2", "X2": "v2"}, "row": {"v1": 0.5, "v2": 0.5}},
            ]
        },
    }
    return bm.bayesnet_from_json(doc)


@pytest.fixture
def eight_team():
    """The eight-team bracket with its consistent-uniform start."""
    spec = bm.default_spec(3)
    dag, bn = bm.build_tournament(spec)
    return spec, dag, bn
