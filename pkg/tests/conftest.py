import numpy as np
import pytest

from freebench import bench
from freebench.continuum import MaterialParams
from freebench.core import DEG, KPA, MM, Dataset, FreeDesign, GeneralizedForce, KinematicState, LoadRecord
from freebench.lumped import StiffnessMatrix
from freebench import neural

K_TRUE = StiffnessMatrix(120.0, 40.0, 8.0)
C_TRUE = MaterialParams(5e5, 1e6)
SMALL_GRID = bench.ExperimentGrid((-4, -2, 0, 2, 4), (-100, -50, 0, 50, 100), (0, 20, 45, 70))


@pytest.fixture(scope="session")
def designs():
    return bench.table1_designs()


def teacher_dataset(teacher_seed=0, weight_scale=1.0, sample="6"):
    """Default grid for one design with forces from a fixed random 7-6-2 network."""
    rng = np.random.default_rng(1000 + teacher_seed)
    design = FreeDesign.from_table(*bench.TABLE1[sample])
    a = bench.ExperimentGrid.default().arrays(design)
    X = neural.features(a)
    lo, hi = X.min(axis=0), X.max(axis=0)
    hi = np.where(hi - lo < 1e-12 * np.abs(hi), lo, hi)
    w = rng.uniform(-weight_scale, weight_scale, (6, 7))
    w[:, hi == lo] = 0.0
    teacher = neural.NetworkParams(
        w, rng.uniform(-1, 1, 6), rng.uniform(-1, 1, (2, 6)), rng.uniform(-0.5, 0.5, 2),
        lo, hi, np.array([-10.0, -1.0]), np.array([10.0, 1.0]),
    )
    Y = neural.forward_arrays(teacher, X)
    recs = tuple(
        LoadRecord(sample, design, KinematicState(float(l), float(p)), float(P), GeneralizedForce(*y))
        for l, p, P, y in zip(a.l, a.phi, a.P, Y)
    )
    return Dataset(recs, "teacher"), teacher


def record(design, dl_mm, dphi_deg, P_kPa, F=1.0, M=1.0, sid="s", buckled=False):
    q = KinematicState(design.length_L + dl_mm * MM, dphi_deg * DEG)
    return LoadRecord(sid, design, q, P_kPa * KPA, GeneralizedForce(F, M), buckled)
