import numpy as np
import pytest

from erflow import kernels
from erflow.cli.bench import available_backends, kernel_cases

needs_compiled = pytest.mark.skipif(kernels.compiled is None, reason="compiled kernels not built")


@needs_compiled
@pytest.mark.parametrize("name", ["weighted_gram", "weighted_outer", "weighted_apply"])
def test_backends_agree(name):
    case = kernel_cases(64, seed=3)[name]
    ref = case(kernels.python)
    got = case(kernels.compiled)
    assert got.shape == ref.shape
    assert np.max(np.abs(got - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_python_gram_against_einsum():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((5, 4, 3, 6))
    D = rng.standard_normal((5, 4, 3, 3))
    w = rng.random((5, 4))
    ref = np.einsum("tq,tqai,tqab,tqbj->tij", w, B, D, B)
    assert np.allclose(kernels.python.weighted_gram(B, D, w), ref, atol=1e-12)


def test_use_backend_restores():
    before = kernels.BACKEND
    with kernels.use_backend("python") as mod:
        assert mod is kernels.python and kernels.BACKEND == "python"
    assert kernels.BACKEND == before


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.backend("gpu")


def test_available_backends_lists_python():
    assert "python" in available_backends()


@needs_compiled
def test_assembly_identical_under_both_backends():
    from erflow.stokes_solvers import FlowProblem
    from erflow.mesh import build_rectangle_mesh
    from erflow.viscosity import acceptance_model

    prob = FlowProblem(build_rectangle_mesh(1, 1, 4, 4), acceptance_model(), E=(1.0, 0.3))
    v = np.random.default_rng(2).standard_normal(prob.vspace.ndof)
    mats = []
    for b in ("python", "compiled"):
        with kernels.use_backend(b):
            mats.append(prob.ctx.tangent(v))
    assert abs(mats[0] - mats[1]).max() < 1e-12
